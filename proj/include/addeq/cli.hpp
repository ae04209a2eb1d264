#pragma once

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <locale>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "addeq/circle.hpp"
#include "addeq/core/errors.hpp"
#include "addeq/core/parallel.hpp"
#include "addeq/counting.hpp"
#include "addeq/expsums.hpp"
#include "addeq/increment.hpp"
#include "addeq/localfactors.hpp"
#include "addeq/restriction.hpp"
#include "addeq/systems.hpp"

namespace addeq::cli {

using nlohmann::json;

inline constexpr const char* kVersion = "0.1.0";

inline constexpr const char* kRunConfigSchema = R"json({
  "$schema": "http://json-schema.org/draft-07/schema#",
  "title": "addeq run configuration",
  "type": "object",
  "additionalProperties": false,
  "properties": {
    "command": {"type": "string", "enum": ["count", "jmean", "singular", "predict", "compare", "arcscan", "restrict", "gauss-audit", "find-dense"]},
    "system": {
      "type": "object",
      "additionalProperties": false,
      "required": ["kind"],
      "properties": {
        "kind": {"type": "string", "enum": ["monomial", "parabola", "custom"]},
        "d": {"type": "integer", "minimum": 1},
        "k": {"type": "integer", "minimum": 1},
        "polys": {"type": "array", "minItems": 1, "items": {"type": "array", "minItems": 1, "items": {
          "type": "object", "additionalProperties": false, "required": ["exps", "coef"],
          "properties": {"exps": {"type": "array", "items": {"type": "integer", "minimum": 0}}, "coef": {"type": "integer"}}}}}
      }
    },
    "lambda": {"type": "array", "minItems": 2, "items": {"type": "integer"}},
    "N": {"type": "integer", "minimum": 1},
    "Ns": {"type": "array", "minItems": 1, "items": {"type": "integer", "minimum": 1}},
    "s": {"type": "integer", "minimum": 1},
    "d": {"type": "integer", "minimum": 1},
    "T": {"type": "integer", "minimum": 1},
    "tol": {"type": "number", "exclusiveMinimum": 0},
    "Q": {"type": "number", "exclusiveMinimum": 0},
    "samples": {"type": "integer", "minimum": 1},
    "near_fraction": {"type": "number", "minimum": 0, "maximum": 1},
    "mode": {"type": "string", "enum": ["levelsets", "moments", "tomas-stein", "truncated", "majorant"]},
    "k": {"type": "integer", "minimum": 1},
    "p": {"type": "number", "exclusiveMinimum": 0},
    "grid": {"type": "array", "minItems": 1, "items": {"type": "integer", "minimum": 1}},
    "etas": {"type": "array", "minItems": 1, "items": {"type": "number", "minimum": 0}},
    "weight": {"type": "string", "enum": ["unweighted", "random-sign", "random-phase", "random-complex"]},
    "theta": {"type": "number", "minimum": 0},
    "eps": {"type": "number"},
    "a": {"type": "number", "minimum": 0, "maximum": 1},
    "b": {"type": "number", "minimum": 0, "maximum": 1},
    "delta": {"type": "number", "exclusiveMinimum": 0, "maximum": 0.5},
    "qmax": {"type": "integer", "minimum": 1},
    "density": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
    "set_file": {"type": "string"},
    "kappa": {"type": "number", "exclusiveMinimum": 0},
    "c0": {"type": "number", "exclusiveMinimum": 0},
    "target": {"type": "number", "exclusiveMinimum": 0},
    "iteration_slack": {"type": "integer", "minimum": 0},
    "seed": {"type": "integer", "minimum": 0},
    "workers": {"type": "integer", "minimum": 1},
    "out": {"type": "string"},
    "format": {"type": "string", "enum": ["csv", "json"]}
  }
})json";

inline const json& run_config_schema() {
  static const json schema = json::parse(kRunConfigSchema);
  return schema;
}

/// A configuration problem tied to a JSON pointer into the config.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string path, const std::string& msg) : std::runtime_error(msg), path_(std::move(path)) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

// ---------------------------------------------------------------------------
// Schema validation (the subset of draft-07 used by the run schema)

namespace detail {

inline std::string escape_pointer(const std::string& key) {
  std::string out;
  for (char c : key) {
    if (c == '~')
      out += "~0";
    else if (c == '/')
      out += "~1";
    else
      out += c;
  }
  return out;
}

inline bool type_matches(const std::string& type, const json& v) {
  if (type == "object") return v.is_object();
  if (type == "array") return v.is_array();
  if (type == "string") return v.is_string();
  if (type == "boolean") return v.is_boolean();
  if (type == "integer") return v.is_number_integer();
  if (type == "number") return v.is_number();
  if (type == "null") return v.is_null();
  return false;
}

inline void validate(const json& schema, const json& v, const std::string& path) {
  const std::string where = path.empty() ? "/" : path;
  if (auto it = schema.find("type"); it != schema.end()) {
    bool ok = false;
    if (it->is_array()) {
      for (const auto& t : *it) ok = ok || type_matches(t.get<std::string>(), v);
    } else {
      ok = type_matches(it->get<std::string>(), v);
    }
    if (!ok) throw ConfigError(where, "expected " + it->dump());
  }
  if (auto it = schema.find("enum"); it != schema.end()) {
    if (std::find(it->begin(), it->end(), v) == it->end()) throw ConfigError(where, "value " + v.dump() + " not in " + it->dump());
  }
  if (v.is_number()) {
    const double x = v.get<double>();
    if (auto it = schema.find("minimum"); it != schema.end() && x < it->get<double>())
      throw ConfigError(where, "must be >= " + it->dump());
    if (auto it = schema.find("maximum"); it != schema.end() && x > it->get<double>())
      throw ConfigError(where, "must be <= " + it->dump());
    if (auto it = schema.find("exclusiveMinimum"); it != schema.end() && x <= it->get<double>())
      throw ConfigError(where, "must be > " + it->dump());
  }
  if (v.is_array()) {
    if (auto it = schema.find("minItems"); it != schema.end() && v.size() < it->get<std::size_t>())
      throw ConfigError(where, "needs at least " + it->dump() + " items");
    if (auto it = schema.find("items"); it != schema.end())
      for (std::size_t i = 0; i < v.size(); ++i) validate(*it, v[i], path + "/" + std::to_string(i));
  }
  if (v.is_object()) {
    const auto props = schema.value("properties", json::object());
    if (auto it = schema.find("required"); it != schema.end())
      for (const auto& r : *it)
        if (!v.contains(r.get<std::string>())) throw ConfigError(path + "/" + escape_pointer(r.get<std::string>()), "required key missing");
    const bool closed = schema.contains("additionalProperties") && schema["additionalProperties"] == false;
    for (const auto& [key, val] : v.items()) {
      const std::string sub = path + "/" + escape_pointer(key);
      if (auto p = props.find(key); p != props.end())
        validate(*p, val, sub);
      else if (closed)
        throw ConfigError(sub, "unknown key");
    }
  }
}

}  // namespace detail

/// Throws ConfigError with the JSON pointer of the first offending value.
inline void validate_config(const json& cfg) { detail::validate(run_config_schema(), cfg, ""); }

// ---------------------------------------------------------------------------
// Config access

inline const json& require(const json& cfg, const std::string& key) {
  auto it = cfg.find(key);
  if (it == cfg.end()) throw ConfigError("/" + key, "required for command " + cfg.value("command", std::string("?")));
  return *it;
}

template <class T>
T get_or(const json& cfg, const std::string& key, T fallback) {
  auto it = cfg.find(key);
  return it == cfg.end() ? fallback : it->get<T>();
}

inline PolySystem system_from_config(const json& cfg, const std::string& fallback_kind = "monomial") {
  json sys = cfg.value("system", json{{"kind", fallback_kind}});
  const std::string kind = sys.value("kind", fallback_kind);
  if (kind == "monomial") return monomial_system(sys.value("d", cfg.value("d", 1)), sys.value("k", 1));
  if (kind == "parabola") return parabola_system(sys.value("d", cfg.value("d", 1)));
  if (!sys.contains("polys")) throw ConfigError("/system/polys", "required for custom systems");
  const int d = sys.value("d", cfg.value("d", 1));
  return poly_system_from_json({{"d", d}, {"polys", sys["polys"]}}, "custom");
}

inline std::vector<std::int64_t> n_list(const json& cfg) {
  if (cfg.contains("Ns")) return cfg["Ns"].get<std::vector<std::int64_t>>();
  return {require(cfg, "N").get<std::int64_t>()};
}

inline WeightKind weight_kind(const std::string& s) {
  if (s == "random-sign") return WeightKind::RandomSign;
  if (s == "random-phase") return WeightKind::RandomPhase;
  if (s == "random-complex") return WeightKind::RandomComplex;
  return WeightKind::Unweighted;
}

// ---------------------------------------------------------------------------
// Reports

/// Output of one command: a JSON result, a CSV table and optional side files.
struct Report {
  json result = json::object();
  json provenance = json::object();
  std::string csv;
  std::vector<std::pair<std::string, std::string>> extra_files;  // name, contents
  int exit_code = 0;
};

namespace detail {

inline std::ostringstream csv_stream() {
  std::ostringstream os;
  os.imbue(std::locale::classic());
  os.precision(17);
  return os;
}

inline Report cmd_count(const json& cfg, const TableLimits& limits) {
  const auto P = system_from_config(cfg);
  const auto lambda = require(cfg, "lambda").get<Lambda>();
  Report r;
  json rows = json::array();
  std::string csv = CountReport::csv_header() + "\n";
  for (auto N : n_list(cfg)) {
    const auto rep = count_report(P, lambda, N, limits);
    rows.push_back(rep.to_json());
    csv += rep.csv_row() + "\n";
  }
  r.result = {{"rows", rows}};
  r.csv = csv;
  r.provenance = {{"exact", "counting.count_solutions"},
                  {"projected", "counting.enumerate_solutions + systems.classify_solution"},
                  {"subset_sum_only", "counting.enumerate_solutions + systems.classify_solution"},
                  {"nontrivial", "counting.enumerate_solutions + systems.classify_solution"}};
  return r;
}

inline Report cmd_jmean(const json& cfg, const TableLimits& limits) {
  const auto P = system_from_config(cfg);
  const int s = require(cfg, "s").get<int>();
  Report r;
  json rows = json::array();
  auto os = csv_stream();
  os << "system,s,N,J\n";
  for (auto N : n_list(cfg)) {
    const auto J = vinogradov_J(P, s, N, limits);
    rows.push_back({{"system", P.name()}, {"s", s}, {"N", N}, {"J", to_string(J)}});
    os << '"' << P.name() << "\"," << s << ',' << N << ',' << to_string(J) << "\n";
  }
  r.result = {{"rows", rows}};
  r.csv = os.str();
  r.provenance = {{"J", "counting.vinogradov_J"}};
  return r;
}

inline void singular_csv(std::ostringstream& os, const SingularReport& rep) {
  for (const auto& p : rep.partials) os << rep.kind << ',' << p.level << ',' << p.value << ',' << p.term << "\n";
}

inline Report cmd_singular(const json& cfg) {
  const auto lambda = require(cfg, "lambda").get<Lambda>();
  const int d = cfg.value("d", 1);
  const auto T = get_or<std::int64_t>(cfg, "T", 100);
  const double tol = get_or<double>(cfg, "tol", 1e-6);
  const auto series = singular_series_parabola(lambda, d, T);
  const auto integral = singular_integral_parabola(lambda, d, static_cast<double>(T), tol);
  Report r;
  r.result = {{"series", series.to_json()}, {"integral", integral.to_json()}};
  auto os = csv_stream();
  os << "kind,level,value,term\n";
  singular_csv(os, series);
  singular_csv(os, integral);
  r.csv = os.str();
  r.provenance = {{"series", "localfactors.singular_series_parabola"}, {"integral", "localfactors.singular_integral_parabola"}};
  return r;
}

inline Report cmd_predict(const json& cfg) {
  const auto lambda = require(cfg, "lambda").get<Lambda>();
  const int d = cfg.value("d", 1);
  const auto T = get_or<std::int64_t>(cfg, "T", 100);
  const double tol = get_or<double>(cfg, "tol", 1e-6);
  const auto lf = parabola_local_factors(lambda, d, T, tol);
  Report r;
  json rows = json::array();
  auto os = csv_stream();
  os << "N,predicted,S_T,J_T,exponent\n";
  for (auto N : n_list(cfg)) {
    const auto p = predicted_from(lf, lambda, d, N);
    rows.push_back({{"N", N}, {"predicted", p.value}, {"exponent", p.exponent}, {"below_threshold", p.below_threshold}});
    os << N << ',' << p.value << ',' << lf.series.value << ',' << lf.integral.value << ',' << p.exponent << "\n";
  }
  r.result = {{"rows", rows}, {"series", lf.series.to_json()}, {"integral", lf.integral.to_json()}};
  r.csv = os.str();
  r.provenance = {{"predicted", "circle.predicted_count"},
                  {"series", "localfactors.singular_series_parabola"},
                  {"integral", "localfactors.singular_integral_parabola"}};
  return r;
}

inline Report cmd_compare(const json& cfg, const TableLimits& limits) {
  const auto lambda = require(cfg, "lambda").get<Lambda>();
  const int d = cfg.value("d", 1);
  const auto T = get_or<std::int64_t>(cfg, "T", 100);
  const double tol = get_or<double>(cfg, "tol", 1e-6);
  const auto Ns = n_list(cfg);
  const auto c = compare(lambda, d, Ns, T, tol, limits);
  Report r;
  json rows = json::array();
  std::string csv = CompareRow::csv_header() + "\n";
  for (const auto& row : c.rows) {
    rows.push_back(row.to_json());
    csv += row.csv_row() + "\n";
  }
  r.result = {{"rows", rows},
              {"improving", c.improving},
              {"below_threshold", c.below_threshold},
              {"series", c.series.to_json()},
              {"integral", c.integral.to_json()}};
  r.csv = csv;
  r.provenance = {{"exact", "counting.count_solutions"},
                  {"predicted", "circle.predicted_count"},
                  {"S_T", "localfactors.singular_series_parabola"},
                  {"J_T", "localfactors.singular_integral_parabola"},
                  {"ratio", "circle.compare"}};
  return r;
}

inline Report cmd_arcscan(const json& cfg) {
  const auto lambda = require(cfg, "lambda").get<Lambda>();
  const int d = cfg.value("d", 1);
  const auto N = require(cfg, "N").get<std::int64_t>();
  const double Q = get_or<double>(cfg, "Q", default_level(N));
  const auto samples = get_or<std::size_t>(cfg, "samples", 256);
  const auto seed = get_or<std::uint64_t>(cfg, "seed", 1);
  const double near = get_or<double>(cfg, "near_fraction", 0.5);
  const auto rep = arc_error_scan(lambda, d, N, Q, samples, seed, near);
  Report r;
  r.result = rep.to_json();
  r.csv = rep.csv();
  r.provenance = {{"major_max", "circle.arc_error_scan (circle.major_approximant vs circle.parabola_F)"},
                  {"minor_max", "circle.arc_error_scan (circle.parabola_F)"},
                  {"labels", "circle.classify_point"}};
  return r;
}

inline TorusGrid grid_from(const json& cfg, const TorusGrid& fallback) {
  if (!cfg.contains("grid")) return fallback;
  return TorusGrid{cfg["grid"].get<std::vector<std::int64_t>>()};
}

inline Report cmd_restrict(const json& cfg) {
  const int k = cfg.value("k", 3);
  const auto N = require(cfg, "N").get<std::int64_t>();
  const std::string mode = cfg.value("mode", std::string("levelsets"));
  const auto seed = get_or<std::uint64_t>(cfg, "seed", 1);
  const auto g = random_weight(1, N, weight_kind(cfg.value("weight", std::string("unweighted"))), seed);
  Report r;
  auto os = csv_stream();
  if (mode == "levelsets") {
    const auto grid = grid_from(cfg, natural_grid(k, N));
    const auto etas = cfg.contains("etas") ? cfg["etas"].get<std::vector<double>>() : eta_ledger(N);
    const auto rep = level_sets(k, g, etas, grid);
    r.result = rep.to_json();
    r.csv = rep.csv();
    r.provenance = {{"measure", "restriction.level_set_measure"}};
  } else if (mode == "moments") {
    const auto grid = grid_from(cfg, natural_grid(k, N));
    const double p = cfg.value("p", 2.0);
    const auto m = moments_via_levelsets(k, g, p, cfg.value("a", 0.0), cfg.value("b", 1.0), grid);
    r.result = {{"k", k}, {"N", N}, {"p", p}, {"grid", grid.res}, {"via_levelsets", m.via_levelsets}, {"direct", m.direct}, {"rel_diff", m.rel_diff}};
    os << "k,N,p,via_levelsets,direct,rel_diff\n" << k << ',' << N << ',' << p << ',' << m.via_levelsets << ',' << m.direct << ',' << m.rel_diff << "\n";
    r.csv = os.str();
    r.provenance = {{"via_levelsets", "restriction.moments_via_levelsets"}, {"direct", "restriction.moments_via_levelsets (grid average)"}};
  } else if (mode == "tomas-stein") {
    const auto grid = grid_from(cfg, convolution_grid(k, N));
    std::vector<double> etas;
    if (cfg.contains("etas")) {
      etas = cfg["etas"].get<std::vector<double>>();
    } else {
      for (int i = 1; i <= 16; ++i) etas.push_back(i / 16.0);
    }
    const auto res = tomas_stein_check(k, g, etas, grid);
    json rows = json::array();
    os << "eta,measure,lhs,rhs,holds\n";
    std::size_t violations = 0;
    for (const auto& t : res) {
      rows.push_back(t.to_json());
      os << t.eta << ',' << t.measure << ',' << t.lhs << ',' << t.rhs << ',' << (t.holds ? "true" : "false") << "\n";
      if (!t.holds) ++violations;
    }
    r.result = {{"k", k}, {"N", N}, {"grid", grid.res}, {"rows", rows}, {"violations", violations}};
    r.csv = os.str();
    r.provenance = {{"lhs", "restriction.tomas_stein_check"}, {"rhs", "restriction.tomas_stein_check"}};
    if (violations) r.exit_code = 3;
  } else if (mode == "truncated") {
    const auto grid = grid_from(cfg, natural_grid(k, N));
    const double p = cfg.value("p", 18.0);
    const double theta = cfg.value("theta", default_theta(k));
    const auto t = truncated_moment_check(k, g, p, theta, cfg.value("eps", 0.0), grid);
    r.result = t.to_json();
    r.result["grid"] = grid.res;
    os << "k,N,p,theta,eps,threshold,lhs,reference,ratio,measure\n"
       << t.k << ',' << t.N << ',' << t.p << ',' << t.theta << ',' << t.eps << ',' << t.threshold << ',' << t.lhs << ','
       << t.reference << ',' << t.ratio << ',' << t.measure << "\n";
    r.csv = os.str();
    r.provenance = {{"lhs", "restriction.truncated_moment_check"}, {"reference", "restriction.truncated_moment_check"}};
  } else {
    const double p = cfg.value("p", 8.0);
    std::optional<double> delta;
    if (cfg.contains("delta")) delta = cfg["delta"].get<double>();
    const auto params = majorant_params(k, N, p, 0.01, delta);
    const auto T = get_or<std::int64_t>(cfg, "T", 4);
    const auto bound = majorant_L1_bound(p, k, N, T, get_or<double>(cfg, "tol", 1e-6));
    const double integral = majorant_integral(params);
    const auto scan = majorant_scan(params, get_or<std::size_t>(cfg, "samples", 64), seed);
    r.result = {{"params", params.to_json()}, {"integral", integral}, {"bound", bound.to_json()}, {"scan", scan.to_json()}};
    os << "k,N,p,integral,bound\n" << k << ',' << N << ',' << p << ',' << integral << ',' << bound.bound << "\n";
    r.csv = os.str();
    r.provenance = {{"integral", "restriction.majorant_integral"}, {"bound", "restriction.majorant_L1_bound"}, {"scan", "restriction.majorant_scan"}};
  }
  return r;
}

inline Report cmd_gauss_audit(const json& cfg) {
  const auto qmax = get_or<std::int64_t>(cfg, "qmax", 256);
  const auto au = gauss_audit(qmax);
  Report r;
  r.result = au.to_json();
  auto os = csv_stream();
  os << "qmax,checked,violations,nonvanishing_exceptions,exceptions_explained,max_ratio,witness_abs\n"
     << qmax << ',' << au.checked << ',' << au.violations.size() << ',' << au.nonvanishing_exceptions << ','
     << (au.exceptions_explained ? "true" : "false") << ',' << au.max_ratio << ',' << au.witness_abs << "\n";
  r.csv = os.str();
  r.provenance = {{"audit", "localfactors.gauss_audit (localfactors.GaussTable)"}, {"witness", "localfactors.gauss_sum_quadratic"}};
  if (!au.ok()) r.exit_code = 3;
  return r;
}

inline Report cmd_find_dense(const json& cfg) {
  const auto P = system_from_config(cfg);
  const auto lambda = require(cfg, "lambda").get<Lambda>();
  const auto N = require(cfg, "N").get<std::int64_t>();
  const auto seed = get_or<std::uint64_t>(cfg, "seed", 1);
  PointSet A;
  if (cfg.contains("set_file")) {
    std::ifstream in(cfg["set_file"].get<std::string>());
    if (!in) throw ConfigError("/set_file", "cannot open " + cfg["set_file"].get<std::string>());
    A = read_point_set(in, P.dimension());
    for (const auto& p : A.points)
      if (!inside_box(p, N)) throw ConfigError("/set_file", "point outside [N]^d");
  } else {
    A = random_set(P.dimension(), N, get_or<double>(cfg, "density", 0.3), seed);
  }
  IncrementParams ip;
  ip.kappa = get_or<double>(cfg, "kappa", ip.kappa);
  ip.c0 = get_or<double>(cfg, "c0", ip.c0);
  if (cfg.contains("target")) ip.linearize.target = cfg["target"].get<double>();
  ip.iteration_slack = get_or<int>(cfg, "iteration_slack", ip.iteration_slack);
  const auto fr = find_solution(A, N, P, lambda, ip);
  Report r;
  r.result = {{"stop", fr.stop}, {"iterations", fr.iterations}, {"size", A.size()}, {"params", ip.to_json()}};
  if (fr.solution) r.result["solution"] = *fr.solution;
  r.result["trace"] = fr.trace;
  auto os = csv_stream();
  os << "step,stage,size,M,R,delta,delta_new\n";
  for (const auto& t : fr.trace)
    os << t.value("step", 0) << ',' << t.value("stage", std::string()) << ',' << t.value("size", std::size_t{0}) << ','
       << t.value("M", std::int64_t{0}) << ',' << t.value("R", std::size_t{0}) << ',' << t.value("delta", std::string()) << ','
       << t.value("delta_new", std::string()) << "\n";
  r.csv = os.str();
  r.extra_files.emplace_back("find-dense.trace.jsonl", fr.trace_jsonl());
  r.provenance = {{"solution", "increment.find_solution (systems.satisfies, systems.classify_solution)"},
                  {"trace", "increment.increment_step"}};
  if (!fr.solution) r.exit_code = 2;
  return r;
}

}  // namespace detail

/// Runs the command of a validated config. Throws on usage, guard and invariant errors.
inline Report dispatch(const json& cfg) {
  const auto limits = TableLimits{};
  const std::string cmd = require(cfg, "command").get<std::string>();
  if (cmd == "count") return detail::cmd_count(cfg, limits);
  if (cmd == "jmean") return detail::cmd_jmean(cfg, limits);
  if (cmd == "singular") return detail::cmd_singular(cfg);
  if (cmd == "predict") return detail::cmd_predict(cfg);
  if (cmd == "compare") return detail::cmd_compare(cfg, limits);
  if (cmd == "arcscan") return detail::cmd_arcscan(cfg);
  if (cmd == "restrict") return detail::cmd_restrict(cfg);
  if (cmd == "gauss-audit") return detail::cmd_gauss_audit(cfg);
  return detail::cmd_find_dense(cfg);
}

inline json diagnostic(const std::string& kind, const std::string& detail, const json& extra = json::object()) {
  json j{{"error", kind}, {"detail", detail}};
  for (const auto& [k, v] : extra.items()) j[k] = v;
  return j;
}

/// Validates, runs and writes the report. Returns the process exit code.
inline int run(const json& cfg, std::ostream& out, std::ostream& err) {
  try {
    validate_config(cfg);
    if (!cfg.contains("command")) throw ConfigError("/command", "required key missing");
    set_workers(cfg.value("workers", default_workers()));
    const auto t0 = std::chrono::steady_clock::now();
    Report rep = dispatch(cfg);
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    json doc{{"command", cfg["command"]},
             {"config", cfg},
             {"version", kVersion},
             {"provenance", rep.provenance},
             {"result", rep.result},
             {"exit_code", rep.exit_code},
             {"seconds", seconds}};
    const std::string format = cfg.value("format", std::string("json"));
    const std::string body = format == "csv" ? rep.csv : doc.dump(2) + "\n";
    if (cfg.contains("out")) {
      const std::filesystem::path dir = cfg["out"].get<std::string>();
      std::filesystem::create_directories(dir);
      const std::string name = cfg["command"].get<std::string>();
      std::ofstream(dir / (name + "." + format), std::ios::binary) << body;
      for (const auto& [fname, contents] : rep.extra_files) std::ofstream(dir / fname, std::ios::binary) << contents;
    } else {
      out << body;
    }
    if (rep.exit_code == 2) err << diagnostic("infeasible", "no solution found within the iteration budget").dump() << "\n";
    if (rep.exit_code == 3) err << diagnostic("invariant", "report contains violations").dump() << "\n";
    return rep.exit_code;
  } catch (const ConfigError& e) {
    err << diagnostic("config", e.what(), {{"path", e.path()}}).dump() << "\n";
    return 1;
  } catch (const GuardError& e) {
    err << diagnostic("guard", e.what(), {{"guard", e.guard()}}).dump() << "\n";
    return 2;
  } catch (const QuadratureError& e) {
    err << diagnostic("guard", e.what(), {{"guard", "quadrature"}, {"estimate", e.estimate()}, {"error_estimate", e.error()}}).dump() << "\n";
    return 2;
  } catch (const OverflowError& e) {
    err << diagnostic("guard", e.what(), {{"guard", "overflow"}}).dump() << "\n";
    return 2;
  } catch (const InvariantViolation& e) {
    err << diagnostic("invariant", e.what()).dump() << "\n";
    return 3;
  } catch (const std::invalid_argument& e) {
    err << diagnostic("usage", e.what()).dump() << "\n";
    return 1;
  } catch (const json::exception& e) {
    err << diagnostic("config", e.what()).dump() << "\n";
    return 1;
  }
}

// ---------------------------------------------------------------------------
// Command line

namespace detail {

enum class Kind { Int, Num, Str, IntList, NumList };

struct Flag {
  const char* key;
  Kind kind;
  const char* help;
};

inline const std::vector<Flag>& flags() {
  static const std::vector<Flag> f{
      {"N", Kind::Int, "box size"},
      {"Ns", Kind::IntList, "comma-separated box sizes"},
      {"lambda", Kind::IntList, "comma-separated coefficients"},
      {"s", Kind::Int, "half the number of variables (jmean)"},
      {"d", Kind::Int, "dimension"},
      {"k", Kind::Int, "degree"},
      {"T", Kind::Int, "truncation level"},
      {"tol", Kind::Num, "quadrature tolerance"},
      {"Q", Kind::Num, "major arc level"},
      {"samples", Kind::Int, "number of samples"},
      {"near_fraction", Kind::Num, "fraction of samples drawn inside major arcs"},
      {"mode", Kind::Str, "restrict mode: levelsets, moments, tomas-stein, truncated, majorant"},
      {"p", Kind::Num, "moment exponent"},
      {"grid", Kind::IntList, "comma-separated grid resolutions"},
      {"etas", Kind::NumList, "comma-separated level values"},
      {"weight", Kind::Str, "unweighted, random-sign, random-phase or random-complex"},
      {"theta", Kind::Num, "truncation exponent"},
      {"eps", Kind::Num, "threshold slack exponent"},
      {"a", Kind::Num, "lower level"},
      {"b", Kind::Num, "upper level"},
      {"delta", Kind::Num, "majorant arc exponent"},
      {"qmax", Kind::Int, "largest modulus"},
      {"density", Kind::Num, "density of the random set"},
      {"set_file", Kind::Str, "file with one point per line"},
      {"kappa", Kind::Num, "energy threshold"},
      {"c0", Kind::Num, "increment constant"},
      {"target", Kind::Num, "phase diameter target"},
      {"iteration_slack", Kind::Int, "extra increment iterations"},
      {"seed", Kind::Int, "random seed"},
      {"workers", Kind::Int, "worker threads"},
      {"out", Kind::Str, "output directory"},
      {"format", Kind::Str, "csv or json"},
  };
  return f;
}

inline std::string flag_name(const std::string& key) {
  std::string s = key;
  std::replace(s.begin(), s.end(), '_', '-');
  return "--" + s;
}

inline std::string env_name(const std::string& key) {
  std::string s = "ADDEQ_";
  for (char c : key) s += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return s;
}

// Parses a textual value by kind; values that do not parse are kept as strings so the schema reports them.
inline json parse_value(Kind kind, const std::string& text) {
  auto parse_scalar = [](const std::string& t, bool integer) -> json {
    std::istringstream is(t);
    is.imbue(std::locale::classic());
    if (integer) {
      long long v;
      if (is >> v && is.eof()) return v;
    } else {
      double v;
      if (is >> v && is.eof()) return v;
    }
    return t;
  };
  switch (kind) {
    case Kind::Int: return parse_scalar(text, true);
    case Kind::Num: return parse_scalar(text, false);
    case Kind::Str: return text;
    default: {
      json arr = json::array();
      std::stringstream ss(text);
      std::string item;
      while (std::getline(ss, item, ',')) arr.push_back(parse_scalar(item, kind == Kind::IntList));
      return arr;
    }
  }
}

}  // namespace detail

/// Parses argv into a config: file values, then ADDEQ_* environment variables, then flags.
/// Returns the exit code.
inline int main(int argc, char** argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Counting, local factors and density increments for additive polynomial equations", "addeq"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);
  const std::vector<std::string> commands{"count", "jmean", "singular", "predict", "compare", "arcscan", "restrict", "gauss-audit", "find-dense"};
  std::string config_path, system_kind;
  std::vector<std::string> values(detail::flags().size());
  std::vector<CLI::App*> subs;
  for (const auto& name : commands) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("--config", config_path, "JSON run configuration");
    sub->add_option("--system", system_kind, "monomial, parabola or custom");
    for (std::size_t i = 0; i < detail::flags().size(); ++i) {
      const auto& f = detail::flags()[i];
      sub->add_option(detail::flag_name(f.key), values[i], f.help)->allow_extra_args(false);
    }
    subs.push_back(sub);
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return 1;
  }
  std::string command;
  CLI::App* chosen = nullptr;
  for (auto* sub : subs)
    if (sub->parsed()) {
      command = sub->get_name();
      chosen = sub;
    }

  json cfg = json::object();
  if (!config_path.empty()) {
    std::ifstream in(config_path);
    if (!in) {
      err << diagnostic("usage", "cannot open config " + config_path).dump() << "\n";
      return 1;
    }
    try {
      cfg = json::parse(in);
    } catch (const json::exception& e) {
      err << diagnostic("config", std::string("malformed JSON: ") + e.what(), {{"path", "/"}}).dump() << "\n";
      return 1;
    }
    if (!cfg.is_object()) {
      err << diagnostic("config", "expected an object", {{"path", "/"}}).dump() << "\n";
      return 1;
    }
    if (cfg.contains("command") && cfg["command"] != command) {
      err << diagnostic("config", "config command differs from the subcommand", {{"path", "/command"}}).dump() << "\n";
      return 1;
    }
  }
  cfg["command"] = command;
  for (std::size_t i = 0; i < detail::flags().size(); ++i) {
    const auto& f = detail::flags()[i];
    if (const char* env = std::getenv(detail::env_name(f.key).c_str())) cfg[f.key] = detail::parse_value(f.kind, env);
  }
  if (const char* env = std::getenv("ADDEQ_SYSTEM")) cfg["system"] = {{"kind", std::string(env)}};
  for (std::size_t i = 0; i < detail::flags().size(); ++i) {
    const auto& f = detail::flags()[i];
    if (chosen->count(detail::flag_name(f.key)) > 0) cfg[f.key] = detail::parse_value(f.kind, values[i]);
  }
  if (!system_kind.empty()) {
    json sys = cfg.value("system", json::object());
    sys["kind"] = system_kind;
    cfg["system"] = sys;
  }
  // Top-level d and k describe the system for the built-in families.
  if (cfg.contains("system") && cfg["system"].is_object()) {
    auto& sys = cfg["system"];
    if (cfg.contains("d") && !sys.contains("d") && sys.value("kind", std::string()) != "custom") sys["d"] = cfg["d"];
    if (cfg.contains("k") && !sys.contains("k") && sys.value("kind", std::string()) == "monomial" && command != "restrict")
      sys["k"] = cfg["k"];
  }
  return run(cfg, out, err);
}

}  // namespace addeq::cli
