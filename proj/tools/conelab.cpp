// conelab <scenario> --config <path> [--out <dir>] [--verbose]
// exit: 0 all checks pass, 1 a check fails, 2 bad config or I/O, 3 numerical failure

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "conelab/experiment.hpp"

namespace {

conelab::ExperimentConfig read_config(const std::string& path, const std::string& scenario) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw conelab::config_error("cannot open config " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  conelab::json j;
  try {
    j = conelab::json::parse(ss.str());
  } catch (const conelab::json::parse_error& e) {
    throw conelab::config_error(path + ": " + e.what());
  }
  if (!j.is_object()) throw conelab::config_error(path + ": expected a JSON object");
  if (!j.contains("scenario")) {
    j["scenario"] = scenario;
  } else if (!j["scenario"].is_string() || j["scenario"].get<std::string>() != scenario) {
    throw conelab::config_error(path + ": scenario field " + j["scenario"].dump() + " does not match '" + scenario +
                                "'");
  }
  return conelab::parse_config(j);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"conelab: numerical checks for drift Laplacians on conical ends"};
  std::string scenario, config_path, out_dir;
  bool verbose = false;
  app.add_option("scenario", scenario, "scenario to run")
      ->required()
      ->check(CLI::IsMember(conelab::scenario_names()));
  app.add_option("--config", config_path, "JSON config")->required();
  app.add_option("--out", out_dir, "output directory (overrides output_dir)");
  app.add_flag("--verbose,-v", verbose, "progress on stderr");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  conelab::ExperimentConfig cfg;
  try {
    cfg = read_config(config_path, scenario);
  } catch (const conelab::config_error& e) {
    std::cerr << "conelab: " << e.what() << "\n";
    return 2;
  }
  if (!out_dir.empty()) cfg.output_dir = out_dir;

  conelab::RunOptions opt;
  if (verbose) opt.log = &std::cerr;
  auto rep = conelab::run(cfg, opt);

  for (auto& v : rep.verdicts)
    std::cout << (v.pass ? "PASS " : "FAIL ") << v.anchor << ": " << v.check << " | " << v.detail << "\n";
  if (!rep.error.empty()) std::cerr << "conelab: " << rep.error << "\n";

  try {
    std::filesystem::path dir(cfg.output_dir);
    auto csvs = conelab::emit_report(rep, dir, conelab::ReportFormat::csv_bundle);
    auto js = conelab::emit_report(rep, dir, conelab::ReportFormat::json);
    if (verbose) {
      for (auto& p : csvs) std::cerr << "wrote " << p.string() << "\n";
      for (auto& p : js) std::cerr << "wrote " << p.string() << "\n";
    }
  } catch (const conelab::io_error& e) {
    std::cerr << "conelab: " << e.what() << "\n";
    return 2;
  }
  std::cout << (rep.pass ? "PASS" : "FAIL") << " " << rep.scenario << " (" << rep.verdicts.size() << " checks, exit "
            << rep.exit_code << ")\n";
  return rep.exit_code;
}
