#include <gtest/gtest.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include "conelab/experiment.hpp"

using namespace conelab;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("conelab_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

void write_file(const fs::path& p, const std::string& s) {
  std::ofstream os(p);
  os << s;
}

std::string read_file(const fs::path& p) {
  std::ifstream is(p);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

int run_cli(const std::string& args, std::string* out = nullptr) {
  std::string cmd = std::string("\"") + CONELAB_CLI_PATH + "\" " + args + " 2>&1";
  FILE* p = popen(cmd.c_str(), "r");
  if (!p) return -1;
  std::string buf;
  char b[4096];
  while (std::fgets(b, sizeof b, p)) buf += b;
  int st = pclose(p);
  if (out) *out = buf;
  return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
}

ExperimentConfig cfg_for(const std::string& scenario, const std::string& end_json = "{}",
                         const std::string& params = "{}") {
  return parse_config_text("{\"scenario\":\"" + scenario + "\",\"end\":" + end_json + ",\"parameters\":" + params + "}");
}

std::string without_runtime(const Report& r) {
  auto j = report_json(r);
  j.erase("runtime");
  return j.dump();
}

}  // namespace

TEST(ConfigTest, RoundTripIsLossless) {
  auto c = parse_config_text(R"({"scenario":"trace","end":{"kind":"perturbed_cone","n":2,"delta":0.3,
      "R_inner":2,"warp":"power","s":3.5,"degrees":[0,1]},
      "parameters":{"m":1.5,"mu_link":1,"tail_R":[10,30],"samples":7,"quad_rel_tol":1e-11},
      "seed":12345678901,"output_dir":"x/y"})");
  EXPECT_EQ(c.end.kind, "perturbed_cone");
  EXPECT_EQ(c.parameters.samples, 7);
  ASSERT_TRUE(c.parameters.mu_link.has_value());
  auto text = to_json(c).dump();
  auto back = parse_config_text(text);
  EXPECT_EQ(back, c);
  EXPECT_EQ(to_json(back).dump(), text);
  // defaults round-trip too
  ExperimentConfig d;
  EXPECT_EQ(parse_config_text(to_json(d).dump()), d);
}

TEST(ConfigTest, UnknownFieldsRejected) {
  EXPECT_THROW(parse_config_text(R"({"scenario":"certify","colour":1})"), config_error);
  EXPECT_THROW(parse_config_text(R"({"end":{"kind":"exact_cone","radius":1}})"), config_error);
  EXPECT_THROW(parse_config_text(R"({"parameters":{"lambda":0,"lamda":0}})"), config_error);
}

TEST(ConfigTest, TypeAndRangeErrors) {
  EXPECT_THROW(parse_config_text(R"({"end":{"n":2.5}})"), config_error);
  EXPECT_THROW(parse_config_text(R"({"end":{"n":"3"}})"), config_error);
  EXPECT_THROW(parse_config_text(R"({"end":{"kind":"hyperboloid"}})"), config_error);
  EXPECT_THROW(parse_config_text(R"({"scenario":"everything"})"), config_error);
  EXPECT_THROW(parse_config_text(R"({"parameters":{"rho_lo":10,"rho_hi":40}})"), config_error);
  EXPECT_THROW(parse_config_text(R"({"parameters":{"mode":5}})"), config_error);
  EXPECT_THROW(parse_config_text(R"({"seed":-1})"), config_error);
  EXPECT_THROW(parse_config_text("{not json"), config_error);
  EXPECT_THROW(parse_config_text("[1,2]"), config_error);
}

TEST(ConfigTest, MuLinkCrossCheck) {
  auto ok = run(cfg_for("certify", R"({"n":3})", R"({"mode":1,"mu_link":2})"));
  EXPECT_EQ(ok.exit_code, 0);
  auto bad = run(cfg_for("frequency-decay", R"({"n":3})", R"({"mode":1,"mu_link":3})"));
  EXPECT_EQ(bad.exit_code, 2);
  EXPECT_NE(bad.error.find("mu_link"), std::string::npos);
}

TEST(ReportTest, CertifyExactCone) {
  auto r = run(cfg_for("certify"));
  EXPECT_TRUE(r.pass);
  EXPECT_EQ(r.exit_code, 0);
  EXPECT_EQ(*r.get("Lambda"), 0.0);
  for (auto& v : r.verdicts) EXPECT_FALSE(v.anchor.empty());
}

TEST(ReportTest, FrequencyDecayHasXiHat) {
  auto r = run(cfg_for("frequency-decay", R"({"n":3})", R"({"mode":1,"m_values":[0]})"));
  EXPECT_TRUE(r.pass) << r.error;
  auto j = report_json(r);
  ASSERT_TRUE(j.contains("xi_hat"));
  EXPECT_TRUE(j["xi_hat"].is_number());
  EXPECT_NEAR(j["xi_hat"].get<double>(), 4.0, 0.04);
  ASSERT_FALSE(r.artifacts.empty());
  auto& csv = r.artifacts.front().content;
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "rho,B,F,D_hat,L_hat,N,N_hat,Xi");
}

TEST(ReportTest, DeterministicApartFromRuntime) {
  auto c = cfg_for("poincare", R"({"n":2})", R"({"samples":3})");
  auto a = run(c), b = run(c);
  EXPECT_EQ(without_runtime(a), without_runtime(b));
  EXPECT_EQ(a.artifacts.front().content, b.artifacts.front().content);
  c.seed = 43;
  auto d = run(c);
  EXPECT_NE(a.artifacts.front().content, d.artifacts.front().content);
}

TEST(ReportTest, NonFiniteConstantsBecomeNull) {
  Report r;
  r.scenario = "certify";
  r.set("x", std::numeric_limits<double>::quiet_NaN());
  r.set("y", kInf);
  auto j = report_json(r);
  EXPECT_TRUE(j["constants"]["x"].is_null());
  EXPECT_TRUE(j["constants"]["y"].is_null());
  EXPECT_FALSE(r.pass);
}

TEST(ReportTest, NumericalFailureExitsThree) {
  // four samples cannot support the Richardson extrapolation
  auto r = run(cfg_for("frequency-decay", "{}", R"({"rho_ratio":1.9,"m_values":[0]})"));
  EXPECT_EQ(r.exit_code, 3);
  EXPECT_FALSE(r.pass);
}

TEST(ReportTest, UncertifiableEndExitsOne) {
  auto r = run(cfg_for("identities", R"({"kind":"perturbed_cone","n":3,"delta":2.0,"R_inner":1.5})"));
  EXPECT_EQ(r.exit_code, 1);
  ASSERT_NE(r.find("weakly-conical"), nullptr);
  EXPECT_FALSE(r.find("weakly-conical")->pass);
}

TEST(ReportTest, AtomicEmission) {
  auto dir = scratch("emit");
  auto r = run(cfg_for("trace"));
  auto csvs = emit_report(r, dir, ReportFormat::csv_bundle);
  auto js = emit_report(r, dir, ReportFormat::json);
  ASSERT_EQ(js.size(), 1u);
  EXPECT_TRUE(fs::exists(dir / "trace.json"));
  for (auto& p : csvs) EXPECT_EQ(read_file(p).substr(0, 29), "tau_or_R,scale_or_L2gap,bound");
  for (auto& e : fs::directory_iterator(dir)) EXPECT_NE(e.path().extension(), ".tmp");
  auto parsed = json::parse(read_file(dir / "trace.json"));
  EXPECT_EQ(parsed["scenario"], "trace");
  EXPECT_THROW(atomic_write(dir / "trace.json" / "x", "z"), io_error);
}

TEST(CoverageTest, ManifestCoveredByDeclaredAnchors) {
  std::set<std::string> declared;
  for (auto& [s, anchors] : scenario_anchors()) {
    EXPECT_TRUE(is_scenario(s)) << s;
    declared.insert(anchors.begin(), anchors.end());
  }
  EXPECT_EQ(scenario_anchors().size(), scenario_names().size());
  std::set<std::string> used;
  for (auto& item : coverage_manifest()) {
    EXPECT_FALSE(item.anchors.empty()) << item.result;
    for (auto& a : item.anchors) {
      EXPECT_TRUE(declared.count(a)) << item.result << " -> " << a;
      used.insert(a);
    }
  }
  // no declared check is orphaned from the manifest
  for (auto& a : declared) EXPECT_TRUE(used.count(a)) << a;
}

TEST(CoverageTest, EmittedAnchorsMatchDeclared) {
  std::vector<ExperimentConfig> runs{
      cfg_for("certify"),
      cfg_for("certify", R"({"kind":"expander","n":2,"slope":1,"R_inner":10,"R_max":50})"),
      cfg_for("identities", R"({"n":2})", R"({"m_values":[0]})"),
      cfg_for("poincare", R"({"n":2})", R"({"samples":2})"),
      cfg_for("frequency-decay", "{}", R"({"m_values":[0]})"),
      cfg_for("transform-check"),
      cfg_for("trace"),
      cfg_for("shrinker-rigidity"),
      cfg_for("expander-uniqueness", R"({"n":2})"),
      cfg_for("psi-decay"),
  };
  std::map<std::string, std::set<std::string>> emitted;
  for (auto& c : runs) {
    auto r = run(c);
    EXPECT_TRUE(r.pass) << c.scenario << ": " << r.error;
    for (auto& v : r.verdicts) {
      auto& d = scenario_anchors().at(c.scenario);
      EXPECT_NE(std::find(d.begin(), d.end(), v.anchor), d.end()) << c.scenario << " emitted " << v.anchor;
      emitted[c.scenario].insert(v.anchor);
    }
  }
  for (auto& [s, anchors] : scenario_anchors())
    for (auto& a : anchors) EXPECT_TRUE(emitted[s].count(a)) << s << " never emitted " << a;
}

TEST(CliTest, ExitCodes) {
  auto dir = scratch("cli");
  write_file(dir / "ok.json", R"({"end":{"kind":"exact_cone","n":3}})");
  write_file(dir / "unknown.json", R"({"end":{"kind":"exact_cone","n":3,"wobble":1}})");
  write_file(dir / "mismatch.json", R"({"scenario":"trace"})");
  write_file(dir / "fail.json", R"({"end":{"n":3},"parameters":{"mode":2,"m_values":[0]}})");
  std::string out;
  EXPECT_EQ(run_cli("certify --config " + (dir / "ok.json").string() + " --out " + (dir / "o").string(), &out), 0)
      << out;
  EXPECT_TRUE(fs::exists(dir / "o" / "certify.json"));
  EXPECT_NE(out.find("PASS weakly-conical"), std::string::npos);
  EXPECT_EQ(run_cli("certify --config " + (dir / "unknown.json").string()), 2);
  EXPECT_EQ(run_cli("certify --config " + (dir / "mismatch.json").string()), 2);
  EXPECT_EQ(run_cli("certify --config " + (dir / "missing.json").string()), 2);
  EXPECT_EQ(run_cli("certify"), 2);
  EXPECT_EQ(run_cli("nonsense --config " + (dir / "ok.json").string()), 2);
  // mu_link = 6: N_hat(30) ~ 12/900 exceeds the 1e-2 vanishing threshold
  EXPECT_EQ(run_cli("frequency-decay --config " + (dir / "fail.json").string() + " --out " + (dir / "f").string(),
                    &out),
            1)
      << out;
  EXPECT_NE(out.find("FAIL frequency-vanishing"), std::string::npos);
  EXPECT_TRUE(fs::exists(dir / "f" / "frequency_trace_m0.csv"));
}

TEST(CliTest, RerunIsByteIdenticalApartFromRuntime) {
  auto dir = scratch("rerun");
  write_file(dir / "c.json", R"({"scenario":"trace","end":{"kind":"perturbed_cone","n":3,"delta":0.2,"R_inner":2}})");
  ASSERT_EQ(run_cli("trace --config " + (dir / "c.json").string() + " --out " + (dir / "a").string()), 0);
  ASSERT_EQ(run_cli("trace --config " + (dir / "c.json").string() + " --out " + (dir / "b").string() + " --verbose"), 0);
  auto a = json::parse(read_file(dir / "a" / "trace.json")), b = json::parse(read_file(dir / "b" / "trace.json"));
  a.erase("runtime");
  b.erase("runtime");
  a["config"].erase("output_dir");
  b["config"].erase("output_dir");
  EXPECT_EQ(a.dump(), b.dump());
  EXPECT_EQ(read_file(dir / "a" / "link_metric.csv"), read_file(dir / "b" / "link_metric.csv"));
}
