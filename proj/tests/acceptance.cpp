// One PASS/FAIL line per acceptance criterion; exit status 1 when any fails.

#include <algorithm>
#include <cmath>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "conelab/experiment.hpp"

using namespace conelab;

namespace {

struct Run {
  std::string label;
  Report rep;
};

Run run_json(const std::string& label, const std::string& text) {
  auto cfg = parse_config_text(text);
  return {label, run(cfg)};
}

struct Criterion {
  int id;
  std::string title;
  bool pass = true;
  std::vector<std::string> notes;

  // every verdict carrying one of the anchors must pass, and each anchor must appear
  void require(const Run& r, const std::vector<std::string>& anchors) {
    if (!r.rep.error.empty()) {
      pass = false;
      notes.push_back(r.label + ": " + r.rep.error);
    }
    for (auto& a : anchors) {
      bool seen = false;
      for (auto& v : r.rep.verdicts) {
        if (v.anchor != a) continue;
        seen = true;
        if (!v.pass) {
          pass = false;
          notes.push_back(r.label + " " + v.check + ": " + v.detail);
        }
      }
      if (!seen && r.rep.error.empty()) {
        pass = false;
        notes.push_back(r.label + ": no verdict for " + a);
      }
    }
  }
  void expect(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      notes.push_back(what);
    }
  }
  void print() const {
    std::cout << (pass ? "PASS" : "FAIL") << " criterion " << id << ": " << title;
    if (!notes.empty()) {
      std::cout << " |";
      std::size_t shown = 0;
      for (auto& n : notes) {
        if (shown++ == 4) {
          std::cout << " ... (" << notes.size() - 4 << " more)";
          break;
        }
        std::cout << " " << n << ";";
      }
    }
    std::cout << "\n" << std::flush;
  }
};

std::string num(double x) {
  std::ostringstream os;
  os << x;
  return os.str();
}

// every emitted anchor is one the scenario declares
bool anchors_declared(const Report& r) {
  auto& d = scenario_anchors().at(r.scenario);
  for (auto& v : r.verdicts)
    if (std::find(d.begin(), d.end(), v.anchor) == d.end()) return false;
  return true;
}

}  // namespace

int main() {
  std::vector<Criterion> out;
  std::vector<Run> all;
  auto keep = [&](Run r) -> const Run& {
    all.push_back(std::move(r));
    return all.back();
  };

  {
    Criterion c{1, "exact identities (parts < 1e-8; F_hat = D_hat + L_hat, B', D_hat' < 1e-6 at h = 1e-3 rho)"};
    for (int n : {2, 3}) {
      auto& r = keep(run_json("identities n=" + std::to_string(n),
                              R"({"scenario":"identities","end":{"kind":"exact_cone","n":)" + std::to_string(n) +
                                  R"(},"parameters":{"m_values":[-2,0,2],"identity_rho":[10,20]}})"));
      c.require(r, {"weighted-parts-identity", "bulk-parts-identity", "boundary-derivative", "dirichlet-derivative"});
    }
    out.push_back(c);
  }

  // slow-branch suite shared by criteria 2, 3, 5, 6
  std::vector<std::pair<int, int>> cases{{2, 1}, {2, 2}, {3, 1}, {3, 2}};
  std::vector<Run> suite_runs;
  for (auto [n, l] : cases) {
    double mu = n == 2 ? double(l * l) : double(l * (l + 1));
    std::string label = "n=" + std::to_string(n) + " mu=" + num(mu);
    suite_runs.push_back(run_json(label, R"({"scenario":"frequency-decay","end":{"kind":"exact_cone","n":)" +
                                             std::to_string(n) + R"(},"parameters":{"mode":)" + std::to_string(l) +
                                             R"(,"mu_link":)" + num(mu) + R"(,"m":0,"lambda":0,"m_values":[-2,0,2]}})"));
  }
  {
    Criterion c{2, "sharp frequency decay (xi_hat = 2 mu_link within 1%, rho_-1 <= 20)"};
    for (auto& r : suite_runs) c.require(r, {"sharp-frequency-decay", "frequency-decay-bound"});
    std::ostringstream os;
    for (auto& r : suite_runs)
      if (auto x = r.rep.get("xi_hat")) os << r.label << " xi_hat=" << *x << "  ";
    std::cout << "# " << os.str() << "\n";
    out.push_back(c);
  }
  {
    Criterion c{3, "frequency vanishing (max(|N|, N_hat) < 1e-2 for rho >= 30)"};
    for (auto& r : suite_runs) c.require(r, {"frequency-vanishing"});
    out.push_back(c);
  }
  {
    Criterion c{4, "weighted Poincare, 20 seeded functions per (n, m, R), zero violations"};
    for (int n : {2, 3}) {
      auto& r = keep(run_json("poincare n=" + std::to_string(n),
                              R"({"scenario":"poincare","seed":42,"end":{"kind":"exact_cone","n":)" +
                                  std::to_string(n) +
                                  R"(},"parameters":{"samples":20,"m_values":[-2,0,2],"R_values":[10,15,20]}})"));
      c.require(r, {"weighted-poincare"});
    }
    out.push_back(c);
  }
  {
    Criterion c{5, "Harnack bracket at R = 20, tau in {1, 2}"};
    for (auto& r : suite_runs) c.require(r, {"harnack-bracket"});
    out.push_back(c);
  }
  {
    Criterion c{6, "tail estimates: both displays, K0 stable across R in {10, 20, 40}, alpha^2 within 1%"};
    for (auto& r : suite_runs) {
      c.require(r, {"homogeneity-tail-first", "homogeneity-tail-second", "trace-compatibility"});
      auto K0 = r.rep.get("K0");
      c.expect(K0 && std::isfinite(*K0), r.label + ": K0 not finite");
    }
    out.push_back(c);
  }
  {
    Criterion c{7, "transformations recertify for mu in {+-1/2, +-1}; twist composition = power"};
    for (int n : {2, 3}) {
      auto& r = keep(run_json("transform n=" + std::to_string(n),
                              R"({"scenario":"transform-check","end":{"kind":"exact_cone","n":)" + std::to_string(n) +
                                  R"(,"R_max":100},"parameters":{"mu_values":[-1,-0.5,0.5,1]}})"));
      c.require(r, {"transformation-power", "transformation-gauss-twist", "transformation-inverse-gauss-twist",
                    "twist-composition"});
    }
    out.push_back(c);
  }
  {
    Criterion c{8, "shrinker rigidity: slow + gaussian basis, exponents within 2%, Wronskian 1e-9"};
    for (int n : {2, 3}) {
      auto& r = keep(run_json("shrinker n=" + std::to_string(n),
                              R"({"scenario":"shrinker-rigidity","end":{"kind":"exact_cone","n":)" +
                                  std::to_string(n) + "}}"));
      c.require(r, {"shrinker-rigidity-basis", "shrinker-rigidity-exponents", "abel-wronskian",
                    "gaussian-branch-non-integrable"});
    }
    out.push_back(c);
  }
  {
    Criterion c{9, "expander uniqueness: (alpha, beta) = (-(n+1), -1/4) within 2%, threshold constant within 5%"};
    for (int n : {2, 3}) {
      auto& r = keep(run_json("expander n=" + std::to_string(n),
                              R"({"scenario":"expander-uniqueness","end":{"kind":"exact_cone","n":)" +
                                  std::to_string(n) + R"(},"parameters":{"amplitude":1.0}})"));
      c.require(r, {"expander-decay-rate", "expander-threshold-constant", "expander-zero-amplitude"});
    }
    out.push_back(c);
  }
  {
    Criterion c{10, "link metric distortion shape (R^2 >= 0.99), homogeneity bound, trivial case LHS = 0"};
    for (int n : {2, 3}) {
      auto& r = keep(run_json("trace perturbed n=" + std::to_string(n),
                              R"({"scenario":"trace","end":{"kind":"perturbed_cone","n":)" + std::to_string(n) +
                                  R"(,"delta":0.2,"R_inner":2}})"));
      c.require(r, {"link-metric-distortion", "homogeneity-bound", "homogeneity-bound-trivial"});
      auto r2 = r.rep.get("link_r_squared");
      c.expect(r2 && *r2 >= 0.99, r.label + ": link R^2 below 0.99");
    }
    auto& ex = keep(run_json("trace exact", R"({"scenario":"trace","end":{"kind":"exact_cone","n":3}})"));
    c.require(ex, {"homogeneity-bound", "homogeneity-bound-trivial"});
    out.push_back(c);
  }
  {
    Criterion c{11, "weakly conical certification: exact Lambda = 0, perturbed within 5%, self-similar ends finite"};
    auto& ex = keep(run_json("certify exact", R"({"scenario":"certify","end":{"kind":"exact_cone","n":3}})"));
    c.require(ex, {"weakly-conical", "weakly-conical-closed-form"});
    c.expect(ex.rep.get("Lambda") && *ex.rep.get("Lambda") == 0.0, "exact cone Lambda != 0");
    for (int n : {2, 3}) {
      auto& p = keep(run_json("certify perturbed n=" + std::to_string(n),
                              R"({"scenario":"certify","end":{"kind":"perturbed_cone","n":)" + std::to_string(n) +
                                  R"(,"delta":0.1}})"));
      c.require(p, {"weakly-conical", "weakly-conical-closed-form"});
      for (const char* kind : {"expander", "shrinker"}) {
        auto& s = keep(run_json(std::string("certify ") + kind + " n=" + std::to_string(n),
                                std::string(R"({"scenario":"certify","end":{"kind":")") + kind + R"(","n":)" +
                                    std::to_string(n) + R"(,"slope":1.0,"R_inner":10,"R_max":50}})"));
        c.require(s, {"weakly-conical", "self-similar-end-weakly-conical"});
        auto L = s.rep.get("Lambda");
        c.expect(L && std::isfinite(*L), s.label + ": Lambda not finite");
      }
    }
    out.push_back(c);
  }

  bool declared = true;
  for (auto& r : all) declared = declared && anchors_declared(r.rep);
  for (auto& r : suite_runs) declared = declared && anchors_declared(r.rep);
  std::cout << "# emitted anchors " << (declared ? "match" : "DO NOT match") << " the declared scenario anchors\n";

  std::sort(out.begin(), out.end(), [](auto& a, auto& b) { return a.id < b.id; });
  bool ok = declared;
  for (auto& c : out) {
    c.print();
    ok = ok && c.pass;
  }
  return ok ? 0 : 1;
}
