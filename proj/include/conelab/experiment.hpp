#ifndef CONELAB_EXPERIMENT_HPP
#define CONELAB_EXPERIMENT_HPP

// Config-driven scenarios: each wires the modules into one family of checks
// and fills a Report of verdicts plus extracted constants.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "conelab/asymptotics.hpp"
#include "conelab/core.hpp"
#include "conelab/frequency.hpp"
#include "conelab/geometry.hpp"
#include "conelab/operators.hpp"
#include "conelab/radial.hpp"
#include "conelab/selfsimilar.hpp"
#include "conelab/weights.hpp"

namespace conelab {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

struct io_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ------------------------------------------------------------ config

inline const std::vector<std::string>& scenario_names() {
  static const std::vector<std::string> v{"certify",           "identities",          "poincare",
                                          "frequency-decay",   "transform-check",     "trace",
                                          "shrinker-rigidity", "expander-uniqueness", "psi-decay"};
  return v;
}

inline bool is_scenario(const std::string& s) {
  auto& v = scenario_names();
  return std::find(v.begin(), v.end(), s) != v.end();
}

struct EndConfig {
  std::string kind = "exact_cone";  // exact_cone | perturbed_cone | expander | shrinker
  int n = 3;
  double R_inner = 1.0;
  double R_max = 0.0;  // 0: model default
  double link_radius = 1.0;
  double delta = 0.0;
  std::string warp = "additive";  // additive | power
  double s = 2.0;
  double slope = 1.0;  // self-similar ends
  std::vector<int> degrees{0, 1, 2};
  bool operator==(const EndConfig&) const = default;
};

struct ParameterConfig {
  double m = 0;
  std::vector<double> m_values{-2, 0, 2};
  double lambda = 0;
  int mode = 1;                    // harmonic degree of the link mode
  std::optional<double> mu_link;   // cross-check against the link table
  double rho_lo = 10, rho_hi = 80, rho_ratio = 1.05;
  std::vector<double> R_values{10, 15, 20};
  std::vector<double> tail_R{10, 20, 40};
  std::vector<double> psi_tail_R{40, 80, 160};
  std::vector<double> identity_rho{10, 20};
  std::vector<double> parts_m{-3, -2, -1, 0, 1, 2, 3, 4, 5};
  std::vector<double> parts_rho{1, 2, 5, 10, 20};
  std::vector<double> tau_values{1.0, 1.25, 1.5, 2.0, 2.5, 3.0, 4.0, 5.0, 6.5, 8.0, 10.0};
  std::vector<double> mu_values{-1, -0.5, 0.5, 1};
  int samples = 20;
  double amplitude = 1.0;
  double harnack_R = 20;
  std::vector<double> harnack_tau{1, 2};
  double quad_rel_tol = 1e-10;
  double ode_rel_tol = 1e-10;
  bool operator==(const ParameterConfig&) const = default;
};

struct ExperimentConfig {
  std::string scenario = "certify";
  EndConfig end;
  ParameterConfig parameters;
  std::string output_dir = "conelab-out";
  std::uint64_t seed = 42;
  bool operator==(const ExperimentConfig&) const = default;
};

namespace detail {

inline void only_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw config_error(where + ": expected an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || it.key() == a;
    if (!ok) throw config_error(where + ": unknown field '" + it.key() + "'");
  }
}

template <class T>
void take(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  const json& v = j.at(key);
  std::string path = where + "." + key;
  try {
    if constexpr (std::is_same_v<T, int> || std::is_same_v<T, std::uint64_t>) {
      if (!v.is_number_integer()) throw config_error(path + ": expected an integer");
      if constexpr (std::is_same_v<T, std::uint64_t>)
        if (!v.is_number_unsigned()) throw config_error(path + ": expected a non-negative integer");
    } else if constexpr (std::is_same_v<T, double>) {
      if (!v.is_number()) throw config_error(path + ": expected a number");
    } else if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw config_error(path + ": expected a boolean");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw config_error(path + ": expected a string");
    } else if constexpr (std::is_same_v<T, std::vector<int>>) {
      if (!v.is_array()) throw config_error(path + ": expected an array");
      for (auto& x : v)
        if (!x.is_number_integer()) throw config_error(path + ": expected integers");
    } else if constexpr (std::is_same_v<T, std::vector<double>>) {
      if (!v.is_array()) throw config_error(path + ": expected an array");
      for (auto& x : v)
        if (!x.is_number()) throw config_error(path + ": expected numbers");
    }
    out = v.get<T>();
  } catch (const json::exception& e) {
    throw config_error(path + ": " + e.what());
  }
}

inline void check(bool ok, const std::string& msg) {
  if (!ok) throw config_error(msg);
}

inline bool all_positive(const std::vector<double>& v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return x > 0 && std::isfinite(x); });
}

}  // namespace detail

inline void validate(const ExperimentConfig& c) {
  using detail::check;
  check(is_scenario(c.scenario), "scenario: unknown value '" + c.scenario + "'");
  const auto& e = c.end;
  check(e.kind == "exact_cone" || e.kind == "perturbed_cone" || e.kind == "expander" || e.kind == "shrinker",
        "end.kind: unknown value '" + e.kind + "'");
  check(e.n >= 2 && e.n <= 8, "end.n: must be in [2, 8]");
  check(e.R_inner > 0, "end.R_inner: must be positive");
  check(e.R_max == 0 || e.R_max > e.R_inner, "end.R_max: must be 0 or exceed R_inner");
  check(e.link_radius > 0, "end.link_radius: must be positive");
  check(e.warp == "additive" || e.warp == "power", "end.warp: unknown value '" + e.warp + "'");
  check(std::isfinite(e.delta) && std::isfinite(e.s) && std::isfinite(e.slope), "end: non-finite parameter");
  check(!e.degrees.empty(), "end.degrees: empty");
  for (int d : e.degrees) check(d >= 0, "end.degrees: must be non-negative");
  const auto& p = c.parameters;
  check(std::find(e.degrees.begin(), e.degrees.end(), p.mode) != e.degrees.end(),
        "parameters.mode: not among end.degrees");
  check(!p.m_values.empty(), "parameters.m_values: empty");
  check(p.rho_lo > 0 && p.rho_hi >= 8 * p.rho_lo * (1 - 1e-12), "parameters: rho_hi must be at least 8 rho_lo");
  check(p.rho_ratio > 1 && p.rho_ratio < 2, "parameters.rho_ratio: must be in (1, 2)");
  check(detail::all_positive(p.R_values) && !p.R_values.empty(), "parameters.R_values: must be positive");
  check(detail::all_positive(p.tail_R) && p.tail_R.size() >= 2, "parameters.tail_R: need two positive radii");
  check(detail::all_positive(p.psi_tail_R) && p.psi_tail_R.size() >= 2, "parameters.psi_tail_R: need two radii");
  check(detail::all_positive(p.identity_rho) && p.identity_rho.size() >= 2, "parameters.identity_rho: need two radii");
  check(!p.parts_m.empty() && !p.parts_rho.empty(), "parameters.parts_m/parts_rho: empty");
  for (double r : p.parts_rho) check(r >= 1, "parameters.parts_rho: must be >= 1");
  check(p.tau_values.size() >= 3, "parameters.tau_values: need at least three");
  for (double t : p.tau_values) check(t >= 1, "parameters.tau_values: must be >= 1");
  check(!p.mu_values.empty(), "parameters.mu_values: empty");
  check(p.samples >= 1 && p.samples <= 10000, "parameters.samples: must be in [1, 10000]");
  check(std::isfinite(p.amplitude), "parameters.amplitude: must be finite");
  check(p.harnack_R > 0 && detail::all_positive(p.harnack_tau), "parameters.harnack: radii must be positive");
  check(p.quad_rel_tol > 0 && p.quad_rel_tol < 1e-3, "parameters.quad_rel_tol: must be in (0, 1e-3)");
  check(p.ode_rel_tol > 0 && p.ode_rel_tol < 1e-3, "parameters.ode_rel_tol: must be in (0, 1e-3)");
  check(std::isfinite(p.lambda) && std::isfinite(p.m), "parameters: non-finite lambda or m");
}

inline ExperimentConfig parse_config(const json& j) {
  using detail::take;
  ExperimentConfig c;
  detail::only_keys(j, {"scenario", "end", "parameters", "output_dir", "seed"}, "config");
  take(j, "scenario", c.scenario, "config");
  take(j, "output_dir", c.output_dir, "config");
  take(j, "seed", c.seed, "config");
  if (j.contains("end")) {
    const json& e = j.at("end");
    detail::only_keys(e, {"kind", "n", "R_inner", "R_max", "link_radius", "delta", "warp", "s", "slope", "degrees"}, "end");
    take(e, "kind", c.end.kind, "end");
    take(e, "n", c.end.n, "end");
    take(e, "R_inner", c.end.R_inner, "end");
    take(e, "R_max", c.end.R_max, "end");
    take(e, "link_radius", c.end.link_radius, "end");
    take(e, "delta", c.end.delta, "end");
    take(e, "warp", c.end.warp, "end");
    take(e, "s", c.end.s, "end");
    take(e, "slope", c.end.slope, "end");
    take(e, "degrees", c.end.degrees, "end");
  }
  if (j.contains("parameters")) {
    const json& p = j.at("parameters");
    auto& P = c.parameters;
    detail::only_keys(p,
                      {"m", "m_values", "lambda", "mode", "mu_link", "rho_lo", "rho_hi", "rho_ratio", "R_values",
                       "tail_R", "psi_tail_R", "identity_rho", "parts_m", "parts_rho", "tau_values", "mu_values",
                       "samples", "amplitude", "harnack_R", "harnack_tau", "quad_rel_tol", "ode_rel_tol"},
                      "parameters");
    take(p, "m", P.m, "parameters");
    take(p, "m_values", P.m_values, "parameters");
    take(p, "lambda", P.lambda, "parameters");
    take(p, "mode", P.mode, "parameters");
    if (p.contains("mu_link")) {
      double mu = 0;
      take(p, "mu_link", mu, "parameters");
      P.mu_link = mu;
    }
    take(p, "rho_lo", P.rho_lo, "parameters");
    take(p, "rho_hi", P.rho_hi, "parameters");
    take(p, "rho_ratio", P.rho_ratio, "parameters");
    take(p, "R_values", P.R_values, "parameters");
    take(p, "tail_R", P.tail_R, "parameters");
    take(p, "psi_tail_R", P.psi_tail_R, "parameters");
    take(p, "identity_rho", P.identity_rho, "parameters");
    take(p, "parts_m", P.parts_m, "parameters");
    take(p, "parts_rho", P.parts_rho, "parameters");
    take(p, "tau_values", P.tau_values, "parameters");
    take(p, "mu_values", P.mu_values, "parameters");
    take(p, "samples", P.samples, "parameters");
    take(p, "amplitude", P.amplitude, "parameters");
    take(p, "harnack_R", P.harnack_R, "parameters");
    take(p, "harnack_tau", P.harnack_tau, "parameters");
    take(p, "quad_rel_tol", P.quad_rel_tol, "parameters");
    take(p, "ode_rel_tol", P.ode_rel_tol, "parameters");
  }
  validate(c);
  return c;
}

inline ExperimentConfig parse_config_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw config_error(std::string("config: ") + e.what());
  }
  return parse_config(j);
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw config_error("config: cannot open " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_config_text(ss.str());
}

inline ordered_json to_json(const ExperimentConfig& c) {
  ordered_json j;
  j["scenario"] = c.scenario;
  ordered_json e;
  e["kind"] = c.end.kind;
  e["n"] = c.end.n;
  e["R_inner"] = c.end.R_inner;
  e["R_max"] = c.end.R_max;
  e["link_radius"] = c.end.link_radius;
  e["delta"] = c.end.delta;
  e["warp"] = c.end.warp;
  e["s"] = c.end.s;
  e["slope"] = c.end.slope;
  e["degrees"] = c.end.degrees;
  j["end"] = e;
  const auto& P = c.parameters;
  ordered_json p;
  p["m"] = P.m;
  p["m_values"] = P.m_values;
  p["lambda"] = P.lambda;
  p["mode"] = P.mode;
  if (P.mu_link) p["mu_link"] = *P.mu_link;
  p["rho_lo"] = P.rho_lo;
  p["rho_hi"] = P.rho_hi;
  p["rho_ratio"] = P.rho_ratio;
  p["R_values"] = P.R_values;
  p["tail_R"] = P.tail_R;
  p["psi_tail_R"] = P.psi_tail_R;
  p["identity_rho"] = P.identity_rho;
  p["parts_m"] = P.parts_m;
  p["parts_rho"] = P.parts_rho;
  p["tau_values"] = P.tau_values;
  p["mu_values"] = P.mu_values;
  p["samples"] = P.samples;
  p["amplitude"] = P.amplitude;
  p["harnack_R"] = P.harnack_R;
  p["harnack_tau"] = P.harnack_tau;
  p["quad_rel_tol"] = P.quad_rel_tol;
  p["ode_rel_tol"] = P.ode_rel_tol;
  j["parameters"] = p;
  j["output_dir"] = c.output_dir;
  j["seed"] = c.seed;
  return j;
}

// ------------------------------------------------------------ report

struct Artifact {
  std::string name;  // file name inside the output directory
  std::string content;
};

struct Report {
  std::string scenario;
  std::vector<Verdict> verdicts;
  std::vector<std::pair<std::string, double>> constants;  // insertion ordered
  std::vector<Artifact> artifacts;
  std::vector<std::string> notes;
  std::string error;
  double runtime_seconds = 0;
  bool pass = false;
  int exit_code = 0;
  ExperimentConfig config;

  void set(const std::string& key, double v) {
    for (auto& kv : constants)
      if (kv.first == key) {
        kv.second = v;
        return;
      }
    constants.emplace_back(key, v);
  }
  std::optional<double> get(const std::string& key) const {
    for (auto& kv : constants)
      if (kv.first == key) return kv.second;
    return std::nullopt;
  }
  void add(std::string check, std::string anchor, bool pass_, std::string detail) {
    verdicts.push_back({std::move(check), std::move(anchor), pass_, std::move(detail)});
  }
  const Verdict* find(const std::string& anchor) const {
    for (auto& v : verdicts)
      if (v.anchor == anchor) return &v;
    return nullptr;
  }
  bool anchor_passes(const std::string& anchor) const {
    bool seen = false;
    for (auto& v : verdicts)
      if (v.anchor == anchor) {
        seen = true;
        if (!v.pass) return false;
      }
    return seen;
  }
};

// ------------------------------------------------------------ coverage

// anchors each scenario may emit
inline const std::map<std::string, std::vector<std::string>>& scenario_anchors() {
  static const std::map<std::string, std::vector<std::string>> m{
      {"certify",
       {"weakly-conical", "weakly-conical-closed-form", "sphere-data-bounds", "almost-eigen-certificate",
        "self-similar-end-weakly-conical"}},
      {"identities",
       {"weighted-parts-identity", "bulk-parts-identity", "boundary-derivative", "dirichlet-derivative",
        "frequency-derivative"}},
      {"poincare", {"weighted-poincare", "psi-poincare"}},
      {"frequency-decay",
       {"sharp-frequency-decay", "frequency-decay-bound", "frequency-vanishing", "triviality-lemma",
        "lhat-comparison", "weighted-poincare", "harnack-bracket", "homogeneity-tail-first",
        "homogeneity-tail-second", "trace-compatibility"}},
      {"transform-check",
       {"transformation-power", "transformation-gauss-twist", "transformation-inverse-gauss-twist",
        "twist-composition", "power-round-trip", "motivating-computation"}},
      {"trace",
       {"flow-of-X", "link-metric-distortion", "trace-at-infinity", "trace-compatibility", "homogeneity-degree",
        "homogeneity-bound", "homogeneity-bound-trivial", "trace-idempotence"}},
      {"shrinker-rigidity",
       {"shrinker-rigidity-basis", "shrinker-rigidity-exponents", "abel-wronskian", "gaussian-branch-non-integrable",
        "self-similar-end-weakly-conical"}},
      {"expander-uniqueness",
       {"expander-decay-rate", "graph-lemma", "expander-threshold-constant", "expander-zero-amplitude",
        "expander-almost-eigen", "self-similar-end-weakly-conical"}},
      {"psi-decay",
       {"psi-decay-hypothesis", "psi-integrability", "psi-flux-monotonicity", "psi-poincare", "psi-tail-estimate",
        "strong-decay-certificate"}},
  };
  return m;
}

struct CoverageItem {
  std::string result;
  std::vector<std::string> anchors;
};

// every in-scope result and the checks that exercise it
inline const std::vector<CoverageItem>& coverage_manifest() {
  static const std::vector<CoverageItem> v{
      {"weakly conical end: definition and certified constant", {"weakly-conical", "weakly-conical-closed-form"}},
      {"weakly conical end: sphere and vector-field estimates", {"sphere-data-bounds"}},
      {"almost eigenfunction definition", {"almost-eigen-certificate"}},
      {"Gaussian weight integration by parts", {"weighted-parts-identity"}},
      {"weighted Poincare inequality", {"weighted-poincare"}},
      {"boundary norm derivative lemma", {"boundary-derivative", "bulk-parts-identity"}},
      {"bound on the weighted L-term", {"lhat-comparison"}},
      {"Harnack-type bracket for B", {"harnack-bracket"}},
      {"triviality lemma", {"triviality-lemma"}},
      {"weighted Rellich-Necas identity", {"dirichlet-derivative"}},
      {"derivative of the Gaussian frequency", {"frequency-derivative"}},
      {"frequency vanishing at infinity", {"frequency-vanishing"}},
      {"sharp frequency decay", {"sharp-frequency-decay", "frequency-decay-bound"}},
      {"asymptotic estimates, degree 0", {"homogeneity-tail-first", "homogeneity-tail-second"}},
      {"asymptotic homogeneity of degree 2 lambda", {"homogeneity-tail-first", "trace-compatibility"}},
      {"motivating computations", {"motivating-computation"}},
      {"change of spectrum transformations",
       {"transformation-power", "transformation-gauss-twist", "transformation-inverse-gauss-twist",
        "twist-composition", "power-round-trip"}},
      {"self-similar ends are weakly conical", {"self-similar-end-weakly-conical"}},
      {"graph lemma for two self-similar ends", {"graph-lemma", "expander-almost-eigen"}},
      {"shrinker uniqueness", {"shrinker-rigidity-basis", "shrinker-rigidity-exponents", "abel-wronskian",
                               "gaussian-branch-non-integrable"}},
      {"expander uniqueness and sharp threshold",
       {"expander-decay-rate", "expander-threshold-constant", "expander-zero-amplitude"}},
      {"strong decay for L+ eigenfunctions", {"psi-decay-hypothesis", "strong-decay-certificate", "psi-integrability"}},
      {"inverse Gaussian Poincare inequality", {"psi-poincare"}},
      {"inverse Gaussian flux monotonicity", {"psi-flux-monotonicity"}},
      {"tail estimates for the inverse Gaussian twist", {"psi-tail-estimate"}},
      {"flow of X and the asymptotic cone", {"flow-of-X", "link-metric-distortion"}},
      {"trace at infinity", {"trace-at-infinity", "homogeneity-degree", "trace-idempotence"}},
      {"asymptotic homogeneity proposition", {"homogeneity-bound", "homogeneity-bound-trivial"}},
  };
  return v;
}

// ------------------------------------------------------------ scenarios

struct RunOptions {
  std::ostream* log = nullptr;  // progress lines when verbose
};

namespace detail {

inline std::string fmt_m(double m) {
  std::ostringstream os;
  os << "[m=" << m << "]";
  return os.str();
}

inline std::string num(double x) {
  std::ostringstream os;
  os << x;
  return os.str();
}

struct Ctx {
  const ExperimentConfig& cfg;
  Report& rep;
  RunOptions opt;

  void log(const std::string& s) const {
    if (opt.log) *opt.log << "[" << cfg.scenario << "] " << s << "\n" << std::flush;
  }
  QuadratureSpec quad() const {
    QuadratureSpec q;
    q.rel_tol = cfg.parameters.quad_rel_tol;
    return q;
  }
  OdeTolerances ode() const {
    OdeTolerances t;
    t.rel = cfg.parameters.ode_rel_tol;
    return t;
  }
  FrequencyOptions freq(double m) const {
    FrequencyOptions o;
    o.m = m;
    o.quad = quad();
    return o;
  }
};

inline bool self_similar(const EndConfig& e) { return e.kind == "expander" || e.kind == "shrinker"; }

inline EndDescription self_similar_description(int n, SelfSimilarKind kind, double slope, double R_inner,
                                               double R_max, std::vector<int> degrees) {
  EndDescription d;
  d.kind = EndKind::selfsimilar;
  d.n = n;
  d.ss_kind = kind;
  d.slope = slope;
  d.graph = kind == SelfSimilarKind::expander ? GraphPtr(solve_expander_with_slope(n, slope, 1.0, 60))
                                              : GraphPtr(solve_selfsimilar_from_slope(kind, n, slope, 40, 5));
  d.R_inner = R_inner;
  d.R_max = R_max;
  d.degrees = std::move(degrees);
  return d;
}

inline EndDescription describe(const EndConfig& e) {
  if (e.kind == "expander" || e.kind == "shrinker") {
    auto k = e.kind == "expander" ? SelfSimilarKind::expander : SelfSimilarKind::shrinker;
    return self_similar_description(e.n, k, e.slope, e.R_inner, e.R_max > 0 ? e.R_max : 50, e.degrees);
  }
  EndDescription d;
  d.kind = e.kind == "exact_cone" ? EndKind::exact_cone : EndKind::perturbed_cone;
  d.n = e.n;
  d.R_inner = e.R_inner;
  d.R_max = e.R_max;
  d.link_radius = e.link_radius;
  d.delta = e.delta;
  d.warp = e.warp == "power" ? WarpForm::power : WarpForm::additive;
  d.s = e.s;
  d.degrees = e.degrees;
  return d;
}

inline EndPtr configured_end(const Ctx& c) {
  auto e = build_end(describe(c.cfg.end));
  const auto& P = c.cfg.parameters;
  if (P.mu_link) {
    double mu = e->link.mode(P.mode).mu;
    if (std::fabs(mu - *P.mu_link) > 1e-9 * std::max(1.0, mu))
      throw config_error("parameters.mu_link: " + num(*P.mu_link) + " does not match the link eigenvalue " +
                         num(mu) + " of mode " + std::to_string(P.mode));
  }
  return e;
}

inline void need_cone_type(const Ctx& c) {
  if (self_similar(c.cfg.end))
    throw config_error("scenario " + c.cfg.scenario + " runs on cone-type ends (exact_cone, perturbed_cone)");
}

inline constexpr double kSeedRadius = 100;

inline SeparatedFunction slow_branch(const Ctx& c, EndPtr e, double m, double lambda) {
  auto mode = e->link.mode(c.cfg.parameters.mode);
  auto ode = radial_coefficients(e, m, lambda, mode.mu, OpSign::minus);
  double r_lo = std::max(e->R_inner, std::min(5.0, 0.5 * c.cfg.parameters.rho_lo));
  auto p = seeded_profile(ode, Branch::slow, std::max(kSeedRadius, 10 * e->R_inner), r_lo, c.ode());
  return separated(e, mode, p, ode.context());
}

// log-log slope of consecutive residuals; residuals below `floor` count as converged
inline double decay_exponent(const std::vector<double>& rho, const std::vector<double>& res) {
  double p = kInf;
  for (std::size_t i = 0; i + 1 < rho.size(); ++i) {
    if (!(res[i] > 0) || !(res[i + 1] > 0)) continue;
    p = std::min(p, -std::log(res[i + 1] / res[i]) / std::log(rho[i + 1] / rho[i]));
  }
  return p;
}

inline std::string csv_name(const std::string& stem, double m) {
  std::ostringstream os;
  os << stem << "_m" << m << ".csv";
  return os.str();
}

// ---- certify

inline void run_certify(Ctx& c) {
  const auto& E = c.cfg.end;
  auto desc = describe(E);
  auto wc = build_end_unchecked(desc);
  auto& cert = wc.cert;
  c.rep.set("Lambda", cert.Lambda);
  c.rep.set("sup_grad", cert.sup_grad);
  c.rep.set("sup_hess", cert.sup_hess);
  c.rep.add("weakly-conical certificate", "weakly-conical", cert.pass && std::isfinite(cert.Lambda), cert.diagnostic);
  if (!cert.pass) return;
  auto e = std::make_shared<const WeaklyConicalEnd>(std::move(wc));

  if (E.kind == "exact_cone") {
    c.rep.add("exact cone has Lambda = 0", "weakly-conical-closed-form", e->Lambda() == 0.0,
              "Lambda=" + num(e->Lambda()));
  } else if (E.kind == "perturbed_cone" && E.warp == "additive") {
    double oracle = 2 * std::sqrt(E.n - 1.0) * std::fabs(E.delta);
    c.rep.set("Lambda_closed_form", oracle);
    bool ok = oracle == 0 ? e->Lambda() == 0 : std::fabs(e->Lambda() / oracle - 1) <= 0.05;
    c.rep.add("Lambda against 2 sqrt(n-1) delta", "weakly-conical-closed-form", ok,
              "Lambda=" + num(e->Lambda()) + " closed form " + num(oracle));
  } else {
    c.rep.notes.push_back("no closed-form Lambda for this end kind");
  }

  // 2, 6, 4 Lambda r^-4 for |dr - N|, |dr - X/r|, |N - X/r|
  {
    bool ok = true;
    double worst = 0;
    for (double r : geometric_grid(e->R_inner, e->R_max, 100)) {
      auto s = sphere_data(*e, r);
      double L = e->Lambda() * std::pow(r, -4);
      double slack = 1e-12 * std::pow(r, -4);
      ok = ok && s.gap_dr_N <= 2 * L + slack && s.gap_dr_X <= 6 * L + slack && s.gap_N_X <= 4 * L + slack;
      if (L > 0) worst = std::max({worst, s.gap_dr_N / (2 * L), s.gap_dr_X / (6 * L), s.gap_N_X / (4 * L)});
    }
    c.rep.set("sphere_gap_ratio", worst);
    c.rep.add("sphere data within Lambda bounds", "sphere-data-bounds", ok,
              "max gap / bound " + num(worst) + " on [" + num(e->R_inner) + ", " + num(e->R_max) + "]");
  }

  if (!self_similar(E)) {
    const auto& P = c.cfg.parameters;
    auto u = slow_branch(c, e, P.m, P.lambda);
    double a = std::max(10.0, 2 * e->R_inner);
    auto cert_u = certify_almost_eigen(u, u.ctx.op, u.ctx.lambda, a, 4 * a, ResidualConvention::inverse_square);
    c.rep.set("M", cert_u.M);
    c.rep.add("slow branch is an almost eigenfunction", "almost-eigen-certificate", cert_u.pass, cert_u.diagnostic);
  } else {
    c.rep.notes.push_back("almost-eigen certificate of radial modes skipped on self-similar ends");
    c.rep.add("self-similar end certifies with finite Lambda", "self-similar-end-weakly-conical",
              e->cert.pass && std::isfinite(e->Lambda()), e->cert.diagnostic);
  }
}

// ---- identities

inline void run_identities(Ctx& c) {
  need_cone_type(c);
  const auto& P = c.cfg.parameters;
  auto q = c.quad();
  {
    double worst = 0;
    for (double m : P.parts_m)
      for (double r : P.parts_rho) worst = std::max(worst, check_parts_identity(m, r, q).relative);
    c.rep.set("parts_identity_residual", worst);
    c.rep.add("Gaussian integration by parts", "weighted-parts-identity", worst < 1e-8,
              "max relative residual " + num(worst) + " over " + std::to_string(P.parts_m.size() * P.parts_rho.size()) +
                  " (m, rho) pairs");
  }
  auto e = configured_end(c);
  bool exact = e->kind() == EndKind::exact_cone;
  for (double m : P.m_values) {
    auto u = slow_branch(c, e, m, P.lambda);
    auto o = c.freq(m);
    std::vector<double> parts, Bp, Dp, Np;
    for (double rho : P.identity_rho) {
      auto id = check_identities(u, rho, o, 1e-3);
      c.log(id.detail);
      parts.push_back(id.parts_rel);
      Bp.push_back(id.B_prime_rel);
      Dp.push_back(id.D_prime_rel);
      Np.push_back(id.N_prime_rel);
    }
    auto mx = [](const std::vector<double>& v) { return *std::max_element(v.begin(), v.end()); };
    std::string tag = fmt_m(m);
    c.rep.set("parts_residual" + tag, mx(parts));
    c.rep.add("F_hat = D_hat + L_hat " + tag, "bulk-parts-identity", mx(parts) < kIdentityTol,
              "max relative residual " + num(mx(parts)));
    auto verdict = [&](const char* what, const char* anchor, const std::string& key, const std::vector<double>& r) {
      double worst = mx(r);
      c.rep.set(key + tag, worst);
      if (exact || worst < kIdentityTol) {
        c.rep.add(std::string(what) + " " + tag, anchor, worst < kIdentityTol,
                  "max relative residual " + num(worst) + (exact ? " (exact cone)" : ""));
      } else {
        // warped model: the identity holds up to its O(rho^-2) terms
        double p = decay_exponent(P.identity_rho, r);
        c.rep.set(key + "_decay" + tag, p);
        c.rep.add(std::string(what) + " " + tag, anchor, p >= 1.5,
                  "residual " + num(worst) + " from O-terms, decays like rho^-" + num(p));
      }
    };
    verdict("B' = (n-1)/rho B - 2F", "boundary-derivative", "B_prime_residual", Bp);
    verdict("weighted Rellich-Necas D_hat'", "dirichlet-derivative", "D_prime_residual", Dp);
    verdict("N_hat' formula", "frequency-derivative", "N_prime_residual", Np);
  }
}

// ---- poincare

inline void run_poincare(Ctx& c) {
  need_cone_type(c);
  const auto& P = c.cfg.parameters;
  auto e = configured_end(c);
  for (double R : P.R_values)
    if (R < e->R_inner) throw config_error("parameters.R_values: " + num(R) + " lies inside the end's inner radius");
  std::mt19937_64 rng(c.cfg.seed);
  std::ostringstream csv;
  csv << "kind,m,R,mode,ratio\n";
  int violations = 0, total = 0;
  double worst = 0;
  std::string first_bad;
  for (double m : P.m_values)
    for (double R : P.R_values)
      for (int k = 0; k < P.samples; ++k) {
        auto spec = random_test_function(rng, e->link);
        auto pc = poincare_check(realize(spec, e), R, c.freq(m));
        ++total;
        worst = std::max(worst, pc.ratio);
        csv << "gaussian," << format_double(m) << "," << format_double(R) << "," << spec.mode_index << ","
            << format_double(pc.ratio) << "\n";
        if (!pc.holds) {
          if (violations == 0) first_bad = spec.describe() + " at R=" + num(R) + " m=" + num(m);
          ++violations;
        }
      }
  c.rep.set("poincare_max_ratio", worst);
  c.rep.add("weighted Poincare on random test functions", "weighted-poincare", violations == 0,
            std::to_string(violations) + " violations of " + std::to_string(total) + ", max ratio " + num(worst) +
                (violations ? "; first: " + first_bad : ""));

  std::mt19937_64 rng2(c.cfg.seed + 1);
  int pv = 0, ptot = 0;
  double pworst = 0;
  for (double m : P.m_values)
    for (double R : P.R_values)
      for (int k = 0; k < P.samples; ++k) {
        auto spec = random_test_function(rng2, e->link);
        auto pc = psi_poincare_check(realize(spec, e), m, R, 2 * R, c.quad());
        ++ptot;
        pworst = std::max(pworst, pc.ratio);
        csv << "inverse_gaussian," << format_double(m) << "," << format_double(R) << "," << spec.mode_index << ","
            << format_double(pc.ratio) << "\n";
        if (!pc.holds) ++pv;
      }
  c.rep.set("psi_poincare_max_ratio", pworst);
  c.rep.add("inverse Gaussian Poincare on random annuli [R, 2R]", "psi-poincare", pv == 0,
            std::to_string(pv) + " violations of " + std::to_string(ptot) + ", max ratio " + num(pworst));
  c.rep.artifacts.push_back({"poincare.csv", csv.str()});
}

// ---- frequency-decay

inline void run_frequency_decay(Ctx& c) {
  need_cone_type(c);
  const auto& P = c.cfg.parameters;
  auto e = configured_end(c);
  double mu = e->link.mode(P.mode).mu;
  double lam = P.lambda;
  c.rep.set("mu_link", mu);
  std::vector<double> ms = P.m_values;
  if (std::find(ms.begin(), ms.end(), P.m) == ms.end()) ms.insert(ms.begin(), P.m);
  auto grid = ratio_grid(P.rho_lo, P.rho_hi, P.rho_ratio);
  for (double m : ms) {
    std::string tag = fmt_m(m);
    auto u = slow_branch(c, e, m, lam);
    // lambda != 0: r^{-2 lambda} u is an L_{m + 4 lambda} eigenfunction with eigenvalue 0
    SeparatedFunction uh = lam == 0 ? u : transform(u, {TransformKind::power, -lam});
    auto o = c.freq(uh.ctx.op.m);
    auto tr = frequency_trace(uh, grid, o);
    std::ostringstream csv;
    tr.write_csv(csv);
    c.rep.artifacts.push_back({csv_name("frequency_trace", m), csv.str()});

    c.rep.add("B > 0 on the trace " + tag, "triviality-lemma", !tr.trivial && tr.lemma_consistent, tr.verdict);
    auto xi = extract_xi(tr);
    c.log("m=" + num(m) + " xi_hat=" + num(xi.xi_hat) + " " + xi.trend);
    double oracle = 2 * mu;
    double tol = 0.01 * std::max(oracle, 1.0);
    c.rep.set("xi_hat" + tag, xi.xi_hat);
    c.rep.set("rho_minus1" + tag, xi.rho_minus1);
    c.rep.set("K2" + tag, xi.K2);
    c.rep.set("correction_exponent" + tag, xi.correction_exponent);
    if (m == P.m) c.rep.set("xi_hat", xi.xi_hat);
    c.rep.add("xi_hat = 2 mu_link " + tag, "sharp-frequency-decay", std::fabs(xi.xi_hat - oracle) <= tol,
              "xi_hat=" + num(xi.xi_hat) + " oracle " + num(oracle) + "; " + xi.trend);
    c.rep.add("N_hat <= rho^-2 max(2 xi, 1) beyond rho_-1 <= 20 " + tag, "frequency-decay-bound",
              xi.rho_minus1_found && xi.rho_minus1 <= 20, "rho_-1=" + num(xi.rho_minus1));

    double vmax = 0;
    for (std::size_t i = 0; i < tr.rho.size(); ++i)
      if (tr.rho[i] >= 30) vmax = std::max({vmax, std::fabs(tr.N[i]), tr.N_hat[i]});
    c.rep.set("vanishing_max" + tag, vmax);
    c.rep.add("max(|N|, N_hat) < 1e-2 for rho >= 30 " + tag, "frequency-vanishing", vmax < 1e-2,
              "max " + num(vmax));

    auto lb = lhat_bracket(tr, 20);
    c.rep.set("K2_bracket" + tag, lb.K2_sup);
    c.rep.add("|L_hat| <= rho^-2/8 (D_hat + K2 rho^-1 B_hat) " + tag, "lhat-comparison", lb.holds, lb.detail);

    InequalityParams ip;
    ip.lambda = lam;
    ip.poincare_R = P.R_values;
    ip.harnack_R = P.harnack_R;
    ip.harnack_tau = P.harnack_tau;
    ip.tail_R = P.tail_R;
    ip.freq = c.freq(m);
    auto ineq = verify_inequalities(u, ip);
    for (auto& v : ineq.verdicts) c.rep.add(v.check + " " + tag, v.anchor, v.pass, v.detail);
    double K0 = 0, K0b = 0;
    for (auto& r : ineq.tails.rows) {
      K0 = std::max(K0, r.K_first);
      K0b = std::max(K0b, r.K_second);
    }
    c.rep.set("alpha2" + tag, ineq.tails.alpha2);
    c.rep.set("K0" + tag, K0);
    c.rep.set("K0_second" + tag, K0b);
    if (m == P.m) {
      c.rep.set("alpha2", ineq.tails.alpha2);
      c.rep.set("K0", K0);
    }
    auto t = trace_at_infinity(u, 2 * lam);
    bool ok = !t.zero && std::fabs(t.alpha2 - ineq.tails.alpha2) <= 0.01 * ineq.tails.alpha2;
    c.rep.add("alpha^2 from the surface limit matches the trace " + tag, "trace-compatibility", ok,
              "surface " + num(ineq.tails.alpha2) + " trace " + num(t.alpha2));
  }
}

// ---- transform-check

inline void run_transform_check(Ctx& c) {
  need_cone_type(c);
  const auto& P = c.cfg.parameters;
  auto e = configured_end(c);
  int n = e->n;
  auto u = slow_branch(c, e, P.m, P.lambda);
  // a plus-side eigenfunction from the same mode
  auto w = transform(u, {TransformKind::gauss_twist, 0.0});
  struct Acc {
    double Mmax = 0;
    bool ok = true;
    std::string bad;
  };
  std::map<TransformKind, Acc> acc;
  for (double mu : P.mu_values) {
    for (auto k : {TransformKind::power, TransformKind::gauss_twist, TransformKind::inverse_gauss_twist}) {
      auto v = transform(k == TransformKind::inverse_gauss_twist ? w : u, {k, mu});
      auto cert = certify_almost_eigen(v, v.ctx.op, v.ctx.lambda, 10, 40, natural_convention(k));
      auto& a = acc[k];
      a.Mmax = std::max(a.Mmax, cert.M);
      if (!(cert.pass && std::isfinite(cert.M))) {
        a.ok = false;
        if (a.bad.empty()) a.bad = "; fails at mu=" + num(mu) + ": " + cert.diagnostic;
      }
    }
  }
  for (auto k : {TransformKind::power, TransformKind::gauss_twist, TransformKind::inverse_gauss_twist}) {
    std::string name = transform_name(k);
    std::string anchor = std::string("transformation-") +
                         (k == TransformKind::power ? "power"
                          : k == TransformKind::gauss_twist ? "gauss-twist"
                                                            : "inverse-gauss-twist");
    c.rep.set("M_prime_" + name, acc[k].Mmax);
    c.rep.add(name + " transform recertifies", anchor, acc[k].ok,
              "max M' " + num(acc[k].Mmax) + " over " + std::to_string(P.mu_values.size()) + " mu values" + acc[k].bad);
  }

  // Psi-twist after Phi-twist is the power transform
  {
    double worst = 0;
    bool ctx_ok = true;
    for (double mu : P.mu_values) {
      auto a = transform(transform(u, {TransformKind::gauss_twist, mu}), {TransformKind::inverse_gauss_twist, mu});
      auto b = transform(u, {TransformKind::power, mu});
      ctx_ok = ctx_ok && a.ctx.lambda == b.ctx.lambda && a.ctx.op.m == b.ctx.op.m && a.ctx.op.sign == b.ctx.op.sign;
      for (double r : {2.0 * e->R_inner + 5, 17.0, 55.0}) {
        Jet ja = a.jet(r), jb = b.jet(r);
        // the twists add and remove r^2/4 in the log scale
        double scale = std::max(1.0, r * r);
        double d = std::fabs(ja.value().log_abs() - jb.value().log_abs()) / scale;
        worst = std::max(worst, d);
      }
    }
    c.rep.set("composition_residual", worst);
    c.rep.add("Psi-twist o Phi-twist = power", "twist-composition", ctx_ok && worst <= 64 * 2.220446049250313e-16,
              "max |log ratio| / r^2 " + num(worst) + (ctx_ok ? "" : "; eigen-contexts differ"));
  }
  {
    double worst = 0;
    for (double mu : P.mu_values) {
      auto v = transform(transform(u, {TransformKind::power, mu}), {TransformKind::power, -mu});
      for (double r : {12.0, 25.0, 60.0}) {
        Jet a = u.jet(r), b = v.jet(r);
        worst = std::max({worst, std::fabs(ratio(a.value() - b.value(), a.value())),
                          std::fabs(ratio(a.deriv() - b.deriv(), a.deriv()))});
      }
    }
    c.rep.set("round_trip_residual", worst);
    c.rep.add("power(-mu) o power(mu) = id", "power-round-trip", worst <= 1e-13, "max relative residual " + num(worst));
  }
  // L_m Psi_mu - (mu+n+m)/2 Psi_mu = mu(mu+n+m-2) r^-2 Psi_mu
  {
    double worst = 0;
    for (double m : P.m_values)
      for (double mu : P.mu_values) {
        auto psi = std::make_shared<TransformedProfile>(std::make_shared<PowerProfile>(0.0),
                                                        TransformKind::inverse_gauss_twist, mu);
        auto f = separated(e, e->link.constant_mode(), psi);
        for (double r : {12.0, 25.0, 60.0}) {
          Jet j = f.jet(r);
          double lhs = apply_operator_mant({OpSign::minus, m}, f, j, r) - 0.5 * (mu + n + m) * j.f;
          double rhs = mu * (mu + n + m - 2) / (r * r) * j.f;
          double rel = std::fabs(lhs - rhs) / (std::fabs(j.f) * (1 + r * r));
          worst = std::max(worst, rel);
        }
      }
    bool exact = e->kind() == EndKind::exact_cone;
    c.rep.set("motivating_residual", worst);
    if (exact)
      c.rep.add("L_m Psi_mu closed form", "motivating-computation", worst <= 1e-13,
                "max relative residual " + num(worst));
    else
      c.rep.notes.push_back("motivating computation is an exact-cone identity; residual " + num(worst) +
                            " not gated on a warped end");
  }
}

// ---- trace

inline void run_trace(Ctx& c) {
  const auto& P = c.cfg.parameters;
  auto e = configured_end(c);
  bool ss = self_similar(c.cfg.end);

  {
    bool ok = true;
    double worst = 0;
    double r0 = e->R_inner + 1;
    for (double tau : {1.5, 2.0}) {
      auto f = flow_X(e, r0, tau);
      if (f.integrated) {
        auto a = flow_X(e, r0, std::sqrt(tau));
        auto b = flow_X(e, a.r, std::sqrt(tau));
        double semi = std::fabs(b.r - f.r) / f.r;
        worst = std::max({worst, f.consistency, semi});
        ok = ok && f.consistency < kFlowConsistency && semi < 1e-10;
      } else {
        ok = ok && f.r == tau * r0;
      }
    }
    c.rep.set("flow_consistency", worst);
    c.rep.add("flow of X: r(Pi_tau) = tau r", "flow-of-X", ok,
              ss ? "integrated flow, max drift " + num(worst) : "exact on cone-type ends");
  }
  {
    std::vector<double> taus;
    for (double t : P.tau_values)
      if (t * (e->R_inner + 1) <= e->R_max || !ss) taus.push_back(t);
    auto lm = link_metric(e, taus);
    std::ostringstream csv;
    write_link_metric_csv(csv, lm);
    c.rep.artifacts.push_back({"link_metric.csv", csv.str()});
    c.rep.set("lambda_cert", lm.lambda_cert);
    c.rep.set("lambda_fit", lm.lambda_fit);
    c.rep.set("link_r_squared", lm.r_squared);
    // the Lambda-based distortion constant is only a heuristic off cone-type models
    bool ok = ss ? lm.shape_ok : lm.pass;
    std::string d = lm.diagnostic;
    if (ss && !lm.bound_holds) d += " (bound not gated on self-similar ends)";
    c.rep.add("g_L(tau) distortion ~ lambda/(2 tau^2)", "link-metric-distortion", ok, d);
  }
  if (ss) {
    c.rep.notes.push_back("trace and homogeneity checks need radial modes on a cone-type end; skipped");
    return;
  }

  double d = 2 * P.lambda;
  auto u = slow_branch(c, e, 0.0, P.lambda);
  auto t = trace_at_infinity(u, d);
  c.rep.set("trace_coefficient", t.coefficient);
  c.rep.set("trace_alpha2", t.alpha2);
  c.rep.set("trace_rate", t.rate);
  c.rep.set("alpha2", t.alpha2);
  {
    bool ok = !t.zero && std::fabs(t.coefficient - 1) <= 1e-6 &&
              std::fabs(t.alpha2 - u.mode.norm2) <= 0.01 * u.mode.norm2;
    c.rep.add("trace of the slow branch is the link mode", "trace-at-infinity", ok,
              "coefficient " + num(t.coefficient) + ", alpha^2 " + num(t.alpha2) + " vs ||a||^2 " + num(u.mode.norm2) +
                  "; " + t.diagnostic);
  }
  {
    auto td = tail_displays(u, P.lambda, P.tail_R, c.quad());
    bool ok = std::fabs(t.alpha2 - td.alpha2) <= 0.01 * td.alpha2;
    c.rep.add("alpha^2 from the trace matches the surface limit", "trace-compatibility", ok,
              "trace " + num(t.alpha2) + " surface " + num(td.alpha2));
  }
  {
    // d + 1 is the nearest higher degree satisfying the hypothesis
    auto hi = trace_at_infinity(u, d + 1);
    bool lo_fails = false;
    std::string why;
    try {
      trace_at_infinity(u, d - 0.5);
    } catch (const precondition_error& ex) {
      lo_fails = true;
      why = ex.what();
    }
    c.rep.set("measured_degree", t.measured_degree);
    c.rep.add("degree 2 lambda: higher degree gives 0, lower fails", "homogeneity-degree",
              hi.zero && lo_fails && std::fabs(t.measured_degree - d) <= kDegreeTol,
              "measured degree " + num(t.measured_degree) + (hi.zero ? ", d+1 trace 0" : ", d+1 trace nonzero") +
                  (lo_fails ? ", d-1/2 rejected" : ", d-1/2 accepted"));
  }
  {
    auto hb = verify_homogeneity_bound(u, P.tail_R, d, c.quad());
    std::ostringstream csv;
    write_homogeneity_csv(csv, hb);
    c.rep.artifacts.push_back({"homogeneity_bound.csv", csv.str()});
    c.rep.set("homogeneity_constant", hb.measured_constant);
    c.rep.add("int r^-n |F - G|^2 <= 16 alpha~^2 R^-2", "homogeneity-bound", hb.holds, hb.diagnostic);
  }
  {
    auto g = separated(e, u.mode, std::make_shared<PowerProfile>(d));
    auto hb = verify_homogeneity_bound(g, P.tail_R, d, c.quad());
    bool zero = true;
    for (auto& r : hb.rows) zero = zero && r.lhs == 0.0;
    c.rep.add("homogeneous G gives LHS = 0", "homogeneity-bound-trivial", zero && hb.holds, hb.diagnostic);
  }
  {
    auto F = separated(e, u.mode,
                       std::make_shared<ExpPolyProfile>(std::vector<ExpPolyProfile::Term>{{t.coefficient, 0.0, d}}));
    auto tf = trace_at_infinity(F, d);
    double rel = std::fabs(tf.coefficient - t.coefficient) / std::fabs(t.coefficient);
    c.rep.add("trace of the leading term is itself", "trace-idempotence", tf.exact && rel <= 1e-12,
              "relative change " + num(rel));
  }
}

// ---- shrinker-rigidity

inline void run_shrinker_rigidity(Ctx& c) {
  int n = c.cfg.end.n;
  auto e = exact_cone(n, 1.0, 100.0);
  // L_0 + 1/2, constant link mode
  auto ode = radial_coefficients(e, 0, 0.5, 0, OpSign::minus);
  auto S = seeded_profile(ode, Branch::slow, 30, 1.0, c.ode());
  auto G = regular_solution(ode, 30, c.ode());

  {
    std::mt19937_64 rng(c.cfg.seed);
    std::uniform_real_distribution<double> ud(-2.0, 2.0);
    double worst = 0;
    for (int k = 0; k < 3; ++k) {
      Jet init{ud(rng), ud(rng), 0, 0};
      auto y = integrate_profile(ode, 1.0, init, 25, c.ode(), 0.25);
      auto dd = decompose(y, S, G, 5.0, 10, 20);
      worst = std::max(worst, dd.max_rel_residual);
    }
    c.rep.set("basis_residual", worst);
    c.rep.add("solutions decompose as slow + gaussian", "shrinker-rigidity-basis", worst <= 1e-6,
              "max relative residual " + num(worst) + " on [10, 20] for 3 seeded solutions");
  }
  {
    auto fs = decaying_mode_rate(profile_sampler(S), 8, 14);
    auto fg = decaying_mode_rate(profile_sampler(G), 8, 14);
    c.rep.set("alpha_slow", fs.alpha);
    c.rep.set("beta_slow", fs.beta);
    c.rep.set("alpha_gauss", fg.alpha);
    c.rep.set("beta_gauss", fg.beta);
    bool ok = std::fabs(fs.alpha - 1) <= 0.02 && std::fabs(fs.beta) <= 0.02 * 0.25 &&
              std::fabs(fg.alpha + n + 1) <= 0.02 * (n + 1) && std::fabs(fg.beta - 0.25) <= 0.02 * 0.25;
    c.rep.add("exponents (1, 0) and (-n-1, 1/4) on [8, 14]", "shrinker-rigidity-exponents", ok,
              "slow (" + num(fs.alpha) + ", " + num(fs.beta) + "), gaussian (" + num(fg.alpha) + ", " + num(fg.beta) +
                  ")");
  }
  {
    double ref = wronskian(S->jet(2), G->jet(2)).log_abs() + abel_log_weight(ode, 2);
    double worst = 0;
    for (double r = 2; r <= 30; r += 0.7)
      worst = std::max(worst, std::fabs(wronskian(S->jet(r), G->jet(r)).log_abs() + abel_log_weight(ode, r) - ref));
    c.rep.set("wronskian_drift", worst);
    c.rep.add("Wronskian times Abel weight is constant", "abel-wronskian", worst <= 1e-9,
              "max relative drift " + num(worst) + " on [2, 30]");
  }
  {
    auto mode = e->link.constant_mode();
    // inward from its seed the gaussian branch picks up a roundoff-sized slow
    // component that overtakes e^{r^2/4} below r ~ 27; test it where it is clean
    auto Sg = seeded_profile(ode, Branch::gaussian, 30, 28, c.ode());
    auto uG = separated(e, mode, Sg, ode.context());
    auto uS = separated(e, mode, S, ode.context());
    bool g_diverges = false;
    try {
      bulk_quantities(uG, 28, c.freq(0));
    } catch (const domain_error&) {
      g_diverges = true;
    }
    bool s_ok = true;
    try {
      auto b = bulk_quantities(uS, 10, c.freq(0));
      s_ok = !b.D_hat.is_zero();
    } catch (const domain_error&) {
      s_ok = false;
    }
    auto t = trace_at_infinity(uS, 1.0);
    c.rep.set("slow_trace_degree1", t.coefficient);
    c.rep.add("only the gaussian branch is non-integrable", "gaussian-branch-non-integrable",
              g_diverges && s_ok && !t.zero,
              std::string(g_diverges ? "gaussian branch diverges" : "gaussian branch integrable") +
                  (s_ok ? ", slow branch integrable" : ", slow branch not integrable") + ", degree-1 trace " +
                  num(t.coefficient));
  }
  {
    auto d = self_similar_description(n, SelfSimilarKind::shrinker, c.cfg.end.slope, 10, 50, {0, 1, 2});
    auto wc = build_end_unchecked(d);
    c.rep.set("Lambda_shrinker", wc.cert.Lambda);
    c.rep.add("shrinker end certifies", "self-similar-end-weakly-conical",
              wc.cert.pass && std::isfinite(wc.cert.Lambda), wc.cert.diagnostic);
  }
}

// ---- expander-uniqueness

inline void run_expander_uniqueness(Ctx& c) {
  int n = c.cfg.end.n;
  double A1 = c.cfg.parameters.amplitude;
  auto base = std::make_shared<PlaneGraph>(1.0, 1e4);
  auto end1 = exact_cone(n, 1.0, 40);
  auto P = construct_expander_pair(n, base, 0, A1, 20, 4, c.ode());
  auto gd = graph_difference(base, P.second, end1, SelfSimilarKind::expander, 6, 18, P.diff);
  c.rep.set("kappa", gd.cert.kappa);
  if (A1 != 0) {
    auto f = decaying_mode_rate([&](double r) { return gd.u.jet(r).value(); }, 8, 14);
    c.rep.set("alpha_hat", f.alpha);
    c.rep.set("beta_hat", f.beta);
    bool ok = std::fabs(f.alpha + n + 1) <= 0.02 * (n + 1) && std::fabs(f.beta + 0.25) <= 0.02 * 0.25;
    c.rep.add("decaying mode (alpha, beta) = (-(n+1), -1/4)", "expander-decay-rate", ok,
              "fit (" + num(f.alpha) + ", " + num(f.beta) + ") on [8, 14]");
    c.rep.add("r|u| + r^2|grad u| bounded", "graph-lemma", gd.cert.kappa_pass, gd.cert.diagnostic);
    c.rep.add("graph difference is an L+ almost eigenfunction", "expander-almost-eigen", gd.cert.eigen.pass,
              gd.cert.eigen.diagnostic);
    std::ostringstream csv;
    csv << "rho,scaled_distance\n";
    double mn = kInf, mx = 0;
    for (int i = 0; i <= 80; ++i) {
      double rho = 8 + 0.05 * i;
      Jet j = gd.u.jet(rho);
      double v = std::exp(std::log(std::fabs(j.f)) + j.log_scale + (n + 1) * std::log(rho) + rho * rho / 4);
      mn = std::min(mn, v);
      mx = std::max(mx, v);
      csv << format_double(rho) << "," << format_double(v) << "\n";
    }
    c.rep.artifacts.push_back({"expander_threshold.csv", csv.str()});
    // best constant is the midpoint; variation is the largest deviation from it
    double var = (mx - mn) / (mx + mn);
    c.rep.set("threshold_constant", 0.5 * (mn + mx));
    c.rep.set("threshold_variation", var);
    c.rep.add("rho^{n+1} e^{rho^2/4} |u| constant on [8, 12]", "expander-threshold-constant", var <= 0.05,
              "range [" + num(mn) + ", " + num(mx) + "], variation " + num(var));
  } else {
    c.rep.notes.push_back("amplitude 0: decay-rate fit skipped");
  }
  {
    auto Z = construct_expander_pair(n, base, 0, 0.0, 20, 4, c.ode());
    auto gz = graph_difference(base, Z.second, end1, SelfSimilarKind::expander, 6, 18, Z.diff);
    bool zero = gz.cert.kappa == 0.0;
    for (double rho = 8; rho <= 12; rho += 0.5) zero = zero && gz.u.jet(rho).f == 0.0;
    c.rep.add("A1 = 0 gives identical expanders", "expander-zero-amplitude", zero,
              "kappa " + num(gz.cert.kappa) + ", " + gz.cert.diagnostic);
  }
  {
    auto d = self_similar_description(n, SelfSimilarKind::expander, c.cfg.end.slope, 10, 50, {0, 1, 2});
    auto wc = build_end_unchecked(d);
    c.rep.set("Lambda_expander", wc.cert.Lambda);
    c.rep.add("expander end certifies", "self-similar-end-weakly-conical",
              wc.cert.pass && std::isfinite(wc.cert.Lambda), wc.cert.diagnostic);
  }
}

// ---- psi-decay

inline void run_psi_decay(Ctx& c) {
  need_cone_type(c);
  const auto& P = c.cfg.parameters;
  auto e = configured_end(c);
  int n = e->n;
  auto mode = e->link.constant_mode();
  double lam = -0.5;
  auto ode = radial_coefficients(e, 0, lam, 0, OpSign::plus);
  auto p = seeded_profile(ode, Branch::gaussian, 30, std::max(e->R_inner, 5.0), c.ode());
  auto u = separated(e, mode, p, ode.context());

  auto dh = decay_hypothesis(u, lam, ratio_grid(P.rho_lo, P.rho_hi, P.rho_ratio));
  c.rep.set("decay_slope", dh.log_slope);
  c.rep.add("B = o(rho^{-4 lambda + n - 1})", "psi-decay-hypothesis", dh.holds,
            "log-slope of scaled B " + num(dh.log_slope));
  {
    bool ok = true;
    for (double mp : P.m_values) ok = ok && psi_integrability(u, P.rho_lo, mp, c.quad()).has_value();
    c.rep.add("int (1 + r^2) u^2 Psi_m' finite", "psi-integrability", ok,
              ok ? "finite for every m'" : "divergent for some m'");
  }
  auto uh = transform(u, {TransformKind::power, lam});
  auto cert = certify_almost_eigen(uh, {OpSign::plus, 0.0}, 0.0, 10, 40, ResidualConvention::inverse_linear);
  c.rep.set("M", cert.M);
  c.rep.add("r^{-2 lambda} u is an L+_0 almost eigenfunction", "strong-decay-certificate", cert.pass,
            cert.diagnostic);
  auto fm = flux_monotonicity(uh, 0.0, ratio_grid(10, 40, 1.1), cert.M);
  c.rep.set("K10", fm.K10);
  c.rep.set("K10_measured", fm.K_measured);
  c.rep.add("Psi F monotone up to K10 r^-2 Psi B", "psi-flux-monotonicity", fm.holds,
            "needed " + num(fm.K_measured) + " vs K10 = 16 M = " + num(fm.K10));
  {
    double worst = 0;
    for (double R : P.R_values) worst = std::max(worst, psi_poincare_check(uh, 0.0, R, 2 * R, c.quad()).ratio);
    c.rep.set("psi_poincare_ratio", worst);
    c.rep.add("Psi Poincare on [R, 2R]", "psi-poincare", worst <= 1.0, "max ratio " + num(worst));
  }
  {
    auto u2 = separated(e, mode, std::make_shared<TransformedProfile>(p, TransformKind::inverse_gauss_twist, n - 2 * lam),
                        ode.context());
    auto td = tail_displays(u2, 0.0, P.psi_tail_R, c.quad());
    double K0 = 0;
    for (auto& r : td.rows) K0 = std::max({K0, r.K_first, r.K_second});
    c.rep.set("K0", K0);
    c.rep.add("tail displays for the inverse Gaussian twist", "psi-tail-estimate", td.pass, td.diagnostic);
  }
}

}  // namespace detail

inline Report run(const ExperimentConfig& cfg, RunOptions opt = {}) {
  Report rep;
  rep.scenario = cfg.scenario;
  rep.config = cfg;
  auto t0 = std::chrono::steady_clock::now();
  detail::Ctx c{cfg, rep, opt};
  int forced = -1;
  try {
    validate(cfg);
    const std::string& s = cfg.scenario;
    if (s == "certify") detail::run_certify(c);
    else if (s == "identities") detail::run_identities(c);
    else if (s == "poincare") detail::run_poincare(c);
    else if (s == "frequency-decay") detail::run_frequency_decay(c);
    else if (s == "transform-check") detail::run_transform_check(c);
    else if (s == "trace") detail::run_trace(c);
    else if (s == "shrinker-rigidity") detail::run_shrinker_rigidity(c);
    else if (s == "expander-uniqueness") detail::run_expander_uniqueness(c);
    else if (s == "psi-decay") detail::run_psi_decay(c);
  } catch (const config_error& e) {
    rep.error = std::string("config error: ") + e.what();
    forced = 2;
  } catch (const certification_error& e) {
    rep.add("weakly-conical certificate", "weakly-conical", false, e.what());
    rep.error = std::string("certification failed: ") + e.what();
    forced = 1;
  } catch (const numerical_failure& e) {
    rep.error = std::string("numerical failure: ") + e.what();
    forced = 3;
  } catch (const std::domain_error& e) {
    rep.error = std::string("numerical failure (domain): ") + e.what();
    forced = 3;
  }
  rep.runtime_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  bool all = !rep.verdicts.empty();
  for (auto& v : rep.verdicts) all = all && v.pass;
  rep.pass = forced < 0 && all;
  rep.exit_code = forced >= 0 ? forced : (rep.pass ? 0 : 1);
  if (opt.log) *opt.log << "[" << cfg.scenario << "] done in " << rep.runtime_seconds << " s\n";
  return rep;
}

// ------------------------------------------------------------ emission

inline ordered_json report_json(const Report& r) {
  ordered_json j;
  j["scenario"] = r.scenario;
  j["pass"] = r.pass;
  j["exit_code"] = r.exit_code;
  if (auto xi = r.get("xi_hat")) j["xi_hat"] = std::isfinite(*xi) ? ordered_json(*xi) : ordered_json(nullptr);
  ordered_json consts = ordered_json::object();
  for (auto& [k, v] : r.constants) consts[k] = std::isfinite(v) ? ordered_json(v) : ordered_json(nullptr);
  j["constants"] = consts;
  ordered_json vs = ordered_json::array();
  for (auto& v : r.verdicts) {
    ordered_json o;
    o["check"] = v.check;
    o["anchor"] = v.anchor;
    o["pass"] = v.pass;
    o["detail"] = v.detail;
    vs.push_back(o);
  }
  j["verdicts"] = vs;
  ordered_json arts = ordered_json::array();
  for (auto& a : r.artifacts) arts.push_back(a.name);
  j["artifacts"] = arts;
  j["notes"] = r.notes;
  j["error"] = r.error.empty() ? ordered_json(nullptr) : ordered_json(r.error);
  j["config"] = to_json(r.config);
  ordered_json rt;
  rt["seconds"] = r.runtime_seconds;
  rt["checks"] = r.verdicts.size();
  j["runtime"] = rt;
  return j;
}

// write to a sibling temporary, then rename over the target
inline void atomic_write(const std::filesystem::path& path, const std::string& content) {
  namespace fs = std::filesystem;
  std::error_code ec;
  if (path.has_parent_path()) {
    fs::create_directories(path.parent_path(), ec);
    if (ec) throw io_error("cannot create directory " + path.parent_path().string() + ": " + ec.message());
  }
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw io_error("cannot open " + tmp.string() + " for writing");
    os << content;
    os.flush();
    if (!os) throw io_error("write failed for " + tmp.string());
  }
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw io_error("cannot rename " + tmp.string() + " to " + path.string());
  }
}

enum class ReportFormat { json, csv_bundle };

// returns the written paths
inline std::vector<std::filesystem::path> emit_report(const Report& r, const std::filesystem::path& dir,
                                                     ReportFormat fmt) {
  std::vector<std::filesystem::path> out;
  if (fmt == ReportFormat::json) {
    auto p = dir / (r.scenario + ".json");
    atomic_write(p, report_json(r).dump(2) + "\n");
    out.push_back(p);
  } else {
    for (auto& a : r.artifacts) {
      auto p = dir / a.name;
      atomic_write(p, a.content);
      out.push_back(p);
    }
  }
  return out;
}

}  // namespace conelab

#endif
