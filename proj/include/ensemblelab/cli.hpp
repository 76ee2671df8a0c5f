#pragma once

// Experiment driver behind the command-line tool. One subcommand per module
// experiment; each run writes summary.json, one or more CSV tables and a
// manifest.json with SHA-256 digests of every other file.
//
// Configuration is a JSON document {"seed", "out_dir", "parameters"}.
// Parameters are checked against a per-subcommand table of keys and default
// values before anything is computed.

#include <boost/math/distributions/chi_squared.hpp>

#include <chrono>
#include <cmath>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "ensemblelab/common.hpp"
#include "ensemblelab/conefall.hpp"
#include "ensemblelab/io.hpp"
#include "ensemblelab/measurement.hpp"
#include "ensemblelab/probcore.hpp"
#include "ensemblelab/randomfield.hpp"
#include "ensemblelab/spinecho.hpp"

namespace ensemblelab::cli {

using json = nlohmann::ordered_json;

inline constexpr const char* kVersion = "1.0.0";

enum ExitCode : int {
  kSuccess = 0,
  kFailure = 1,  // I/O and other unexpected failures
  kSchemaError = 2,
  kNumericsError = 3,
};

/// Configuration problem attributable to one key.
class SchemaError : public ValidationError {
 public:
  SchemaError(std::string key, const std::string& what)
      : ValidationError(key + ": " + what), key_(std::move(key)) {}
  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

struct RunConfig {
  std::string subcommand;
  std::uint64_t seed = 0;
  std::filesystem::path out_dir = "out";
  json parameters = json::object();  // as given; defaults are filled on run
};

/// Files produced by one experiment, in emission order.
struct Outputs {
  json summary;
  std::vector<std::pair<std::string, std::string>> files;  // name, bytes
};

// ---------------------------------------------------------------------------
// Parameter tables
// ---------------------------------------------------------------------------

inline const std::vector<std::string>& subcommands() {
  static const std::vector<std::string> names = {"entropy", "field",   "canonical",
                                                 "measure", "cone",    "spinecho"};
  return names;
}

inline bool is_subcommand(const std::string& name) {
  for (const auto& s : subcommands()) {
    if (s == name) return true;
  }
  return false;
}

/// Default parameters per subcommand. A null default marks an optional key.
inline json default_parameters(const std::string& sub) {
  if (sub == "entropy") {
    return json{{"blocks", json::array({json::array({0.5, 0.3}), json::array({0.2})})},
                {"labels", nullptr},
                {"refine", 0u}};
  }
  if (sub == "canonical") {
    return json{{"energies", json::array({0.0, 1.0, 2.0})},
                {"temperature", 1.0},
                {"mean_energy", nullptr}};
  }
  if (sub == "field") {
    return json{{"dim", 2u},          {"side", 81u},         {"spacing", 1.0},
                {"spectrum", "white"}, {"index", -2.0},      {"center", 0.0},
                {"width", 0.5},        {"cutoff", nullptr},  {"mean", 0.0},
                {"variance", 1.0},     {"interval", json::array({-1.0, 1.0})},
                {"levels", 3u},        {"separation", 5.0},  {"export_field", false}};
  }
  if (sub == "measure") {
    return json{{"c", json::array({0.6, 0.8})},
                {"M", 10000u},
                {"n_members", 10000u},
                {"suppression_M", json::array({100u, 1000u, 10000u})},
                {"trials", 200u},
                {"ledger_n", 1000u}};
  }
  if (sub == "cone") {
    return json{{"n_members", 1000u},
                {"n_sectors", 8u},
                {"center", json::array({0.0, 0.0, 0.0, 0.0})},
                {"radii", json::array({0.05, std::numbers::pi, 0.05, 0.001})},
                {"dt", 1e-3},
                {"max_steps", 1000000u},
                {"fall_threshold", 1.0},
                {"liouville_probes", 16u},
                {"liouville_steps", 1000u}};
  }
  if (sub == "spinecho") {
    return json{{"n", 10000u},  {"spread", "normal"}, {"width", 1.0},
                {"center", 0.0}, {"tau", 50.0},       {"n_bins", 32u},
                {"samples_per_half", 100u}};
  }
  throw SchemaError("subcommand", "unknown subcommand '" + sub + "'");
}

namespace detail {

inline const char* type_name(const json& v) {
  if (v.is_number_unsigned()) return "non-negative integer";
  if (v.is_number()) return "number";
  if (v.is_boolean()) return "boolean";
  if (v.is_string()) return "string";
  if (v.is_array()) return "array";
  if (v.is_object()) return "object";
  return "null";
}

inline bool type_matches(const json& def, const json& v) {
  if (def.is_null()) return true;
  if (def.is_number_unsigned()) return v.is_number_unsigned();
  if (def.is_number()) return v.is_number();
  if (def.is_boolean()) return v.is_boolean();
  if (def.is_string()) return v.is_string();
  if (def.is_array()) return v.is_array();
  if (def.is_object()) return v.is_object();
  return false;
}

}  // namespace detail

/// Defaults overlaid with the given parameters. Unknown keys and type
/// mismatches raise SchemaError naming the key.
inline json resolve_parameters(const std::string& sub, const json& given) {
  json out = default_parameters(sub);
  if (given.is_null()) return out;
  if (!given.is_object()) throw SchemaError("parameters", "must be a JSON object");
  for (const auto& [key, value] : given.items()) {
    if (!out.contains(key)) throw SchemaError(key, "unknown parameter for '" + sub + "'");
    const auto& def = out[key];
    if (!value.is_null() && !detail::type_matches(def, value)) {
      throw SchemaError(key, std::string("expected ") + detail::type_name(def) + ", got " +
                                 detail::type_name(value));
    }
    out[key] = value;
  }
  return out;
}

/// Builds a configuration from an optional JSON document plus flag
/// overrides. `sets` holds key=value parameter overrides whose values are
/// parsed as JSON when possible and kept as strings otherwise.
inline RunConfig make_config(const std::string& sub, const std::optional<json>& document,
                             std::optional<std::uint64_t> seed,
                             std::optional<std::filesystem::path> out_dir,
                             const std::vector<std::string>& sets = {}) {
  if (!is_subcommand(sub)) throw SchemaError("subcommand", "unknown subcommand '" + sub + "'");
  RunConfig cfg;
  cfg.subcommand = sub;
  if (document) {
    if (!document->is_object()) throw SchemaError("config", "must be a JSON object");
    for (const auto& [key, value] : document->items()) {
      if (key == "seed") {
        if (!value.is_number_unsigned()) throw SchemaError("seed", "expected non-negative integer");
        cfg.seed = value.get<std::uint64_t>();
      } else if (key == "out_dir") {
        if (!value.is_string()) throw SchemaError("out_dir", "expected string");
        cfg.out_dir = value.get<std::string>();
      } else if (key == "parameters") {
        if (!value.is_object()) throw SchemaError("parameters", "must be a JSON object");
        cfg.parameters = value;
      } else if (key == "subcommand") {
        if (!value.is_string() || value.get<std::string>() != sub) {
          throw SchemaError("subcommand", "config names a different subcommand");
        }
      } else {
        throw SchemaError(key, "unknown configuration key");
      }
    }
  }
  if (seed) cfg.seed = *seed;
  if (out_dir) cfg.out_dir = *out_dir;
  for (const auto& s : sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) throw SchemaError(s, "expected key=value");
    const auto key = s.substr(0, eq), text = s.substr(eq + 1);
    json value = json::parse(text, nullptr, false);
    if (value.is_discarded()) value = text;
    cfg.parameters[key] = value;
  }
  resolve_parameters(sub, cfg.parameters);
  return cfg;
}

// ---------------------------------------------------------------------------
// Typed parameter access
// ---------------------------------------------------------------------------

namespace detail {

inline double number(const json& p, const std::string& key) {
  const auto& v = p.at(key);
  if (!v.is_number()) throw SchemaError(key, "expected number");
  const double x = v.get<double>();
  if (!std::isfinite(x)) throw SchemaError(key, "must be finite");
  return x;
}

inline std::uint64_t count(const json& p, const std::string& key, std::uint64_t min = 0) {
  const auto& v = p.at(key);
  if (!v.is_number_unsigned()) throw SchemaError(key, "expected non-negative integer");
  const auto n = v.get<std::uint64_t>();
  if (n < min) throw SchemaError(key, "must be at least " + std::to_string(min));
  return n;
}

inline std::vector<double> numbers(const json& v, const std::string& key) {
  if (!v.is_array()) throw SchemaError(key, "expected array of numbers");
  std::vector<double> out;
  for (const auto& x : v) {
    if (!x.is_number()) throw SchemaError(key, "expected array of numbers");
    out.push_back(x.get<double>());
  }
  return out;
}

inline std::vector<double> numbers(const json& p, const std::string& key, std::size_t len) {
  auto out = numbers(p.at(key), key);
  if (len && out.size() != len) throw SchemaError(key, "expected " + std::to_string(len) + " numbers");
  return out;
}

inline json series(const std::vector<double>& v) {
  json a = json::array();
  for (double x : v) a.push_back(x);
  return a;
}

/// JSON has no NaN or infinity; non-finite values become null.
inline json finite_or_null(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

inline std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline std::string dump(const json& j) { return j.dump(2) + "\n"; }

}  // namespace detail

// ---------------------------------------------------------------------------
// Experiments
// ---------------------------------------------------------------------------

inline Outputs run_entropy(const json& p, std::uint64_t seed) {
  const auto& raw = p.at("blocks");
  if (!raw.is_array() || raw.empty()) throw SchemaError("blocks", "expected non-empty array of arrays");
  std::vector<std::string> labels;
  if (!p.at("labels").is_null()) {
    const auto& l = p.at("labels");
    if (!l.is_array() || l.size() != raw.size()) throw SchemaError("labels", "need one label per block");
    for (const auto& x : l) {
      if (!x.is_string()) throw SchemaError("labels", "expected strings");
      labels.push_back(x.get<std::string>());
    }
  } else {
    for (std::size_t a = 0; a < raw.size(); ++a) labels.push_back(std::to_string(a));
  }
  std::vector<prob::Block> blocks;
  for (std::size_t a = 0; a < raw.size(); ++a) {
    blocks.push_back({labels[a], detail::numbers(raw[a], "blocks")});
    if (blocks.back().joint.empty()) throw SchemaError("blocks", "blocks must be non-empty");
  }
  const prob::PartitionedDistribution joint(blocks);
  const auto dec = prob::decompose(joint);
  std::vector<double> s_max_cond;
  for (const auto& b : blocks) s_max_cond.push_back(std::log(static_cast<double>(b.joint.size())));
  const auto info =
      prob::info_decompose(joint, std::log(static_cast<double>(blocks.size())), s_max_cond);
  const auto masses = joint.masses();

  Outputs out;
  auto& s = out.summary;
  s["seed"] = seed;
  s["log_base"] = "e";
  s["microstates"] = joint.microstate_count();
  s["entropy"] = {{"total", dec.total}, {"coarse", dec.coarse}, {"residual", dec.residual}};
  s["information"] = {{"total", info.total},
                      {"coarse", info.coarse},
                      {"residual", info.residual},
                      {"s_max_total", info.s_max_total}};
  io::CsvTable table({"block", "mass", "conditional_entropy", "s_max_conditional"});
  json jb = json::array();
  for (std::size_t a = 0; a < blocks.size(); ++a) {
    jb.push_back({{"label", labels[a]},
                  {"mass", masses[a]},
                  {"conditional_entropy", dec.per_block_conditional[a]}});
    table.add_row({labels[a], masses[a], dec.per_block_conditional[a], s_max_cond[a]});
  }
  s["blocks"] = jb;
  if (const auto k = detail::count(p, "refine"); k > 0) {
    const auto flat = prob::DiscreteDistribution::normalized(joint.flattened());
    const auto fine = prob::refine(flat, k);
    s["refined"] = {{"k", k}, {"entropy", prob::entropy(fine)}, {"ln_k", std::log(double(k))}};
  }
  out.files.emplace_back("blocks.csv", table.str());
  return out;
}

inline Outputs run_canonical(const json& given, const json& p, std::uint64_t seed) {
  const auto energies = detail::numbers(p, "energies", 0);
  if (energies.empty()) throw SchemaError("energies", "need at least one level");
  double temperature;
  const bool by_mean = !p.at("mean_energy").is_null();
  if (by_mean) {
    if (given.contains("temperature") && !given.at("temperature").is_null()) {
      throw SchemaError("temperature", "give either temperature or mean_energy, not both");
    }
    temperature = prob::temperature_for_mean_energy(energies, detail::number(p, "mean_energy"));
  } else {
    if (p.at("temperature").is_null()) throw SchemaError("temperature", "required without mean_energy");
    temperature = detail::number(p, "temperature");
  }
  const auto dist = prob::canonical({energies, temperature});

  Outputs out;
  auto& s = out.summary;
  s["seed"] = seed;
  s["log_base"] = "e";
  s["temperature"] = temperature;
  s["solved_for_temperature"] = by_mean;
  s["mean_energy"] = prob::mean_energy(dist, energies);
  s["entropy"] = prob::entropy(dist);
  s["probabilities"] = detail::series(std::vector<double>(dist.probs().begin(), dist.probs().end()));
  io::CsvTable table({"level", "energy", "probability"});
  for (std::size_t k = 0; k < energies.size(); ++k) {
    table.add_row({std::uint64_t(k), energies[k], dist[k]});
  }
  out.files.emplace_back("levels.csv", table.str());
  return out;
}

inline Outputs run_field(const json& p, std::uint64_t seed) {
  const auto dim = detail::count(p, "dim", 1);
  if (dim > 3) throw SchemaError("dim", "must be 1, 2 or 3");
  const auto side = detail::count(p, "side", 2);
  const double spacing = detail::number(p, "spacing");
  field::CovarianceSpec spec;
  spec.mean = detail::number(p, "mean");
  spec.variance = detail::number(p, "variance");
  if (!p.at("cutoff").is_null()) spec.cutoff = detail::number(p, "cutoff");
  const auto kind = p.at("spectrum").get<std::string>();
  if (kind == "white") {
    spec.spectrum = field::White{};
  } else if (kind == "power_law") {
    spec.spectrum = field::PowerLaw{detail::number(p, "index")};
  } else if (kind == "gaussian_bump") {
    spec.spectrum = field::GaussianBump{detail::number(p, "center"), detail::number(p, "width")};
  } else {
    throw SchemaError("spectrum", "expected white, power_law or gaussian_bump");
  }
  const auto iv = detail::numbers(p, "interval", 2);
  const field::Interval interval{iv[0], iv[1]};
  const auto levels = detail::count(p, "levels");
  const double r = detail::number(p, "separation");

  const auto f = field::generate(spec, int(dim), side, seed, spacing);
  const auto ind = field::indicator(f, interval);
  const auto hier = field::hierarchical_average(ind, int(levels));
  const auto two = field::two_point_prob(f, interval, interval, r);

  Outputs out;
  auto& s = out.summary;
  s["seed"] = seed;
  s["dim"] = dim;
  s["side"] = side;
  s["spacing"] = spacing;
  s["interval"] = {iv[0], iv[1]};
  s["one_point"] = field::one_point_prob(f, interval);
  const double sd = std::sqrt(spec.variance);
  if (sd > 0.0) {
    auto cdf = [&](double x) { return 0.5 * std::erfc(-(x - spec.mean) / (sd * std::sqrt(2.0))); };
    s["gaussian_reference"] = cdf(iv[1]) - cdf(iv[0]);
  } else {
    s["gaussian_reference"] = interval.contains(spec.mean) ? 1.0 : 0.0;
  }
  io::CsvTable table({"level", "cells_per_axis", "cells", "global_mean", "epsilon"});
  json jh = json::array();
  for (std::size_t l = 0; l < hier.levels(); ++l) {
    const double eps = hier.epsilon[l] ? *hier.epsilon[l] : std::nan("");
    jh.push_back({{"level", l},
                  {"cells_per_axis", hier.level_side[l]},
                  {"cells", hier.cell_means[l].size()},
                  {"global_mean", hier.global_mean(l)},
                  {"epsilon", detail::finite_or_null(eps)}});
    table.add_row({std::uint64_t(l), std::uint64_t(hier.level_side[l]),
                   std::uint64_t(hier.cell_means[l].size()), hier.global_mean(l), eps});
  }
  s["hierarchy"] = jh;
  s["two_point"] = {{"r", r}, {"estimate", two.estimate}, {"n_offsets", two.n_offsets}};
  try {
    s["isotropy_spread"] = field::isotropy_report(f, interval, interval, r).spread;
  } catch (const DomainError&) {
    s["isotropy_spread"] = nullptr;
  }
  out.files.emplace_back("hierarchy.csv", table.str());
  if (p.at("export_field").get<bool>()) {
    json side_car = {{"dim", dim},     {"side", side},           {"spacing", spacing},
                     {"seed", seed},   {"dtype", "float64"},     {"byte_order", "little"},
                     {"layout", "row-major, last axis fastest"}, {"spectrum", kind},
                     {"mean", spec.mean}, {"variance", spec.variance}};
    out.files.emplace_back("field.bin", io::field_bytes(f));
    out.files.emplace_back("field.json", detail::dump(side_car));
  }
  return out;
}

/// Parses c as an array whose entries are real numbers or [re, im] pairs.
inline measure::SystemState parse_system(const json& p) {
  const auto& raw = p.at("c");
  if (!raw.is_array()) throw SchemaError("c", "expected array");
  std::vector<measure::Complex> c;
  for (const auto& x : raw) {
    if (x.is_number()) {
      c.emplace_back(x.get<double>(), 0.0);
    } else if (x.is_array() && x.size() == 2 && x[0].is_number() && x[1].is_number()) {
      c.emplace_back(x[0].get<double>(), x[1].get<double>());
    } else {
      throw SchemaError("c", "entries must be numbers or [re, im] pairs");
    }
  }
  try {
    return measure::SystemState(std::move(c));
  } catch (const ValidationError& e) {
    throw SchemaError("c", e.what());
  }
}

/// Seeds: apparatus derive_seed(seed, 0), outcome sampling
/// derive_seed(seed, 1), suppression trials derive_seed(seed, 2).
inline Outputs run_measure(const json& p, std::uint64_t seed) {
  const auto sys = parse_system(p);
  const auto m = detail::count(p, "M", 1);
  const auto n_members = detail::count(p, "n_members", 1);
  const auto trials = detail::count(p, "trials", 1);
  const auto ledger_n = detail::count(p, "ledger_n", sys.outcomes());
  const auto& sm = p.at("suppression_M");
  if (!sm.is_array()) throw SchemaError("suppression_M", "expected array of counts");
  std::vector<std::uint64_t> curve_m;
  for (const auto& x : sm) {
    if (!x.is_number_unsigned() || x.get<std::uint64_t>() == 0) {
      throw SchemaError("suppression_M", "expected positive integers");
    }
    curve_m.push_back(x.get<std::uint64_t>());
  }

  const auto app = measure::build_apparatus(m, std::nullopt, sys.outcomes(), derive_seed(seed, 0));
  const auto fractions = measure::outcome_fractions(sys, app);
  const auto counts = measure::sample_outcomes(sys, app, n_members, derive_seed(seed, 1));
  const auto ledger = measure::entropy_ledger(sys, ledger_n);
  std::vector<measure::SuppressionSummary> curve;
  for (auto mm : curve_m) curve.push_back(measure::suppression_statistics(mm, trials, derive_seed(seed, 2)));

  Outputs out;
  auto& s = out.summary;
  s["seed"] = seed;
  s["M"] = m;
  s["K"] = sys.outcomes();
  json jc = json::array();
  for (const auto& x : sys.coefficients()) jc.push_back({x.real(), x.imag()});
  s["c"] = jc;
  s["fractions"] = detail::series(std::vector<double>(fractions.probs().begin(), fractions.probs().end()));
  s["counts"] = counts;
  s["n_members"] = n_members;
  s["offdiag_suppression_01"] = measure::offdiag_suppression(app, 0, 1);
  json jcurve = json::array();
  io::CsvTable sup({"M", "median", "p95", "p99"});
  for (const auto& c : curve) {
    jcurve.push_back({{"M", c.micro_count}, {"median", c.median}, {"p95", c.p95}});
    sup.add_row({std::uint64_t(c.micro_count), c.median, c.p95, c.p99});
  }
  s["suppression_curve"] = jcurve;
  s["suppression_trials"] = trials;
  s["fitted_exponent"] = curve.size() >= 2 ? json(measure::fitted_exponent(curve)) : json(nullptr);
  s["ledger"] = {{"n", ledger.n_micro},
                 {"initial_total", ledger.initial_total},
                 {"final_coarse", ledger.final_coarse},
                 {"final_residual", ledger.final_residual},
                 {"final_total", ledger.final_total},
                 {"rounding_defect", ledger.rounding_defect},
                 {"allocation", ledger.allocation}};
  io::CsvTable outcomes({"outcome", "fraction", "count"});
  for (std::size_t k = 0; k < sys.outcomes(); ++k) {
    outcomes.add_row({std::uint64_t(k), fractions[k], counts[k]});
  }
  out.files.emplace_back("outcomes.csv", outcomes.str());
  out.files.emplace_back("suppression.csv", sup.str());
  return out;
}

/// Members use derive_seed(seed, member); Liouville base points use
/// derive_seed(derive_seed(seed, 1ull << 63), b).
inline Outputs run_cone(const json& p, std::uint64_t seed) {
  const auto n_members = detail::count(p, "n_members", 1);
  const auto n_sectors = detail::count(p, "n_sectors", 2);
  const auto c = detail::numbers(p, "center", 4);
  const auto r = detail::numbers(p, "radii", 4);
  cone::InitialMacrostate macro;
  macro.center = {c[0], c[1], c[2], c[3]};
  macro.radii = {r[0], r[1], r[2], r[3]};
  try {
    macro.validate();
  } catch (const ValidationError& e) {
    throw SchemaError("radii", e.what());
  }
  cone::RunConfig rc;
  rc.dt = detail::number(p, "dt");
  rc.max_steps = detail::count(p, "max_steps", 1);
  rc.fall_threshold = detail::number(p, "fall_threshold");
  const auto probes = detail::count(p, "liouville_probes", 8);
  const auto lsteps = detail::count(p, "liouville_steps");

  const auto res = cone::run_ensemble(macro, n_members, n_sectors, seed, rc);
  const auto liou = cone::liouville_check(macro, rc.dt, lsteps, probes,
                                          derive_seed(seed, std::uint64_t{1} << 63));

  Outputs out;
  auto& s = out.summary;
  s["seed"] = seed;
  s["n_members"] = n_members;
  s["n_sectors"] = n_sectors;
  s["counts"] = res.counts;
  s["unresolved"] = res.unresolved;
  if (res.sector_distribution) {
    const auto& d = *res.sector_distribution;
    s["sector_distribution"] = detail::series(std::vector<double>(d.probs().begin(), d.probs().end()));
    s["sector_entropy"] = prob::entropy(d);
    s["chi2_uniform"] = res.chi2_uniform;
    const boost::math::chi_squared chi(double(n_sectors - 1));
    s["chi2_p_value"] = boost::math::cdf(boost::math::complement(chi, res.chi2_uniform));
    s["fall_time_mean"] = res.fall_time_mean;
    s["fall_time_stddev"] = res.fall_time_stddev;
  } else {
    s["sector_distribution"] = nullptr;
  }
  s["liouville"] = {{"probes", probes},
                    {"steps", lsteps},
                    {"mean_ratio", liou.mean_ratio},
                    {"max_deviation", liou.max_deviation}};
  io::CsvTable table({"member", "seed", "fall_time", "final_azimuth", "sector"});
  for (const auto& m : res.members) {
    table.add_row({m.member, m.seed, m.fall_time, m.final_azimuth, std::int64_t(m.sector)});
  }
  out.files.emplace_back("members.csv", table.str());
  return out;
}

inline Outputs run_spinecho(const json& p, std::uint64_t seed) {
  const auto n = detail::count(p, "n", 1);
  const auto n_bins = detail::count(p, "n_bins", 2);
  const auto h = detail::count(p, "samples_per_half", 1);
  const double tau = detail::number(p, "tau");
  const double width = detail::number(p, "width");
  const double center = detail::number(p, "center");
  const auto kind = p.at("spread").get<std::string>();
  echo::FrequencySpread spread;
  if (kind == "normal") {
    spread = echo::NormalSpread{center, width};
  } else if (kind == "uniform") {
    spread = echo::UniformSpread{center, width};
  } else {
    throw SchemaError("spread", "expected normal or uniform");
  }
  const auto rep = echo::run_protocol(n, spread, tau, n_bins, seed, h);

  Outputs out;
  auto& s = out.summary;
  s["seed"] = seed;
  s["n"] = n;
  s["tau"] = tau;
  s["n_bins"] = n_bins;
  s["ln_n_bins"] = std::log(double(n_bins));
  s["M_tau"] = rep.magnetization[rep.pulse_index];
  s["S_b_tau"] = rep.binned_entropy[rep.pulse_index];
  s["M_2tau"] = rep.magnetization.back();
  s["S_b_2tau"] = rep.binned_entropy.back();
  s["maxent_echo_prediction"] = rep.maxent_echo_prediction;
  io::CsvTable table({"t", "M", "S_b"});
  for (std::size_t i = 0; i < rep.times.size(); ++i) {
    table.add_row({rep.times[i], rep.magnetization[i], rep.binned_entropy[i]});
  }
  out.files.emplace_back("echo.csv", table.str());
  return out;
}

/// Runs the experiment without touching the filesystem.
inline Outputs execute(const RunConfig& cfg) {
  const auto p = resolve_parameters(cfg.subcommand, cfg.parameters);
  if (cfg.subcommand == "entropy") return run_entropy(p, cfg.seed);
  if (cfg.subcommand == "canonical") return run_canonical(cfg.parameters, p, cfg.seed);
  if (cfg.subcommand == "field") return run_field(p, cfg.seed);
  if (cfg.subcommand == "measure") return run_measure(p, cfg.seed);
  if (cfg.subcommand == "cone") return run_cone(p, cfg.seed);
  if (cfg.subcommand == "spinecho") return run_spinecho(p, cfg.seed);
  throw SchemaError("subcommand", "unknown subcommand '" + cfg.subcommand + "'");
}

/// Runs and persists an experiment. Returns the process exit code; messages
/// go to `err`. Nothing is written unless the experiment completes.
inline int run(const RunConfig& cfg, std::ostream& err) {
  if (!is_subcommand(cfg.subcommand)) {
    err << "error: unknown subcommand '" << cfg.subcommand << "'\n";
    return kSchemaError;
  }
  const auto started = detail::utc_now();
  Outputs out;
  json resolved;
  try {
    resolved = resolve_parameters(cfg.subcommand, cfg.parameters);
    out = execute(cfg);
  } catch (const SchemaError& e) {
    err << "error: invalid parameter " << e.what() << "\n";
    return kSchemaError;
  } catch (const NumericsError& e) {
    err << "error: numerics: " << e.what() << "\n";
    return kNumericsError;
  } catch (const ValidationError& e) {
    err << "error: invalid parameters: " << e.what() << "\n";
    return kSchemaError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kFailure;
  }

  try {
    std::filesystem::create_directories(cfg.out_dir);
    json digests = json::object();
    const auto summary_bytes = detail::dump(out.summary);
    io::write_file(cfg.out_dir / "summary.json", summary_bytes);
    digests["summary.json"] = io::sha256_hex(summary_bytes);
    for (const auto& [name, bytes] : out.files) {
      io::write_file(cfg.out_dir / name, bytes);
      digests[name] = io::sha256_hex(bytes);
    }
    json manifest;
    manifest["version"] = kVersion;
    manifest["subcommand"] = cfg.subcommand;
    manifest["seed"] = cfg.seed;
    manifest["config"] = {{"seed", cfg.seed},
                          {"out_dir", cfg.out_dir.string()},
                          {"parameters", resolved}};
    manifest["log_base"] = "e";
    manifest["started_at"] = started;
    manifest["finished_at"] = detail::utc_now();
    manifest["files"] = digests;
    io::write_file(cfg.out_dir / "manifest.json", detail::dump(manifest));
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kFailure;
  }
  return kSuccess;
}

}  // namespace ensemblelab::cli
