#pragma once

// Result persistence: CSV tables, SHA-256 digests and raw field export.
//
// CSV dialect: comma separator, '.' decimal point, LF line endings, one
// header row, floating values with 17 significant digits.

#include <openssl/evp.h>

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "ensemblelab/common.hpp"
#include "ensemblelab/randomfield.hpp"

namespace ensemblelab::io {

/// 17 significant digits, enough to round-trip any double.
inline std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

using Cell = std::variant<double, std::int64_t, std::uint64_t, std::string>;

class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

  void add_row(std::vector<Cell> row) {
    if (row.size() != header_.size()) throw Error("CSV row width does not match header");
    rows_.push_back(std::move(row));
  }

  std::string str() const {
    std::string out;
    append_line(out, header_);
    for (const auto& row : rows_) {
      std::vector<std::string> fields;
      fields.reserve(row.size());
      for (const auto& c : row) fields.push_back(render(c));
      append_line(out, fields);
    }
    return out;
  }

 private:
  static std::string render(const Cell& c) {
    if (const auto* d = std::get_if<double>(&c)) return format_double(*d);
    if (const auto* i = std::get_if<std::int64_t>(&c)) return std::to_string(*i);
    if (const auto* u = std::get_if<std::uint64_t>(&c)) return std::to_string(*u);
    return std::get<std::string>(c);
  }

  static void append_line(std::string& out, const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (i) out += ',';
      out += fields[i];
    }
    out += '\n';
  }

  std::vector<std::string> header_;
  std::vector<std::vector<Cell>> rows_;
};

inline std::string sha256_hex(const std::string& bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1) {
    throw Error("SHA-256 computation failed");
  }
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 0xf];
  }
  return out;
}

/// Writes bytes exactly (binary mode, no newline translation).
inline void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error("cannot open " + path.string() + " for writing");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw Error("failed writing " + path.string());
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

/// Field values as little-endian IEEE-754 float64, row-major with the last
/// axis fastest.
inline std::string field_bytes(const field::FieldSample& f) {
  std::string out(f.values.size() * 8, '\0');
  for (std::size_t i = 0; i < f.values.size(); ++i) {
    auto bits = std::bit_cast<std::uint64_t>(f.values[i]);
    for (int b = 0; b < 8; ++b) {
      out[i * 8 + static_cast<std::size_t>(b)] = static_cast<char>((bits >> (8 * b)) & 0xffu);
    }
  }
  return out;
}

inline std::vector<double> field_from_bytes(const std::string& bytes) {
  if (bytes.size() % 8 != 0) throw ValidationError("field file length is not a multiple of 8");
  std::vector<double> v(bytes.size() / 8);
  for (std::size_t i = 0; i < v.size(); ++i) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) {
      bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[i * 8 + std::size_t(b)]))
              << (8 * b);
    }
    v[i] = std::bit_cast<double>(bits);
  }
  return v;
}

}  // namespace ensemblelab::io
