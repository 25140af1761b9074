#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "chemrep/runner.hpp"
#include "chemrep/verification.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kVerifyFailed = 1;
constexpr int kNonConvergence = 2;
constexpr int kBadConfig = 3;

/// --config plus one override flag per configuration key.
struct ConfigOptions {
  std::string file;
  std::map<std::string, std::string> overrides;

  void attach(CLI::App& app) {
    app.add_option("-c,--config", file, "key = value configuration file");
    for (const auto& key : chemrep::config_keys())
      app.add_option("--" + key, overrides[key], "override '" + key + "'");
  }

  chemrep::RunConfig resolve(const CLI::App& app) const {
    chemrep::RunConfig cfg = file.empty() ? chemrep::RunConfig{} : chemrep::load_config_file(file);
    for (const auto& [key, value] : overrides)
      if (app.count("--" + key) > 0) chemrep::set_config_value(cfg, key, value);
    cfg.validate();
    return cfg;
  }
};

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');)
    if (!item.empty()) out.push_back(item);
  return out;
}

std::vector<double> parse_reals(const std::string& key, const std::string& list) {
  std::vector<double> out;
  for (const auto& item : split_list(list)) {
    chemrep::RunConfig probe;
    chemrep::set_config_value(probe, key, item);
    out.push_back(key == "p" ? probe.p : probe.eps);
  }
  return out;
}

int report_run(const chemrep::RunConfig& cfg, const chemrep::RunOutcome& out) {
  if (out.status == chemrep::RunStatus::ok) {
    std::printf("%s: %ld steps written to %s\n", std::string(chemrep::to_string(cfg.scheme)).c_str(),
                out.steps_completed, cfg.out_dir.c_str());
    return kOk;
  }
  std::fprintf(stderr, "run aborted (%s) after step %ld: %s\n",
               std::string(chemrep::to_string(out.status)).c_str(), out.steps_completed,
               out.message.c_str());
  return kNonConvergence;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Finite-element chemo-repulsion simulator"};
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "advance one configuration and write series.csv");
  ConfigOptions run_opts;
  run_opts.attach(*run);

  auto* sweep = app.add_subcommand("sweep", "run the Cartesian product of scheme, p and eps lists");
  ConfigOptions sweep_opts;
  sweep_opts.attach(*sweep);
  std::string sweep_schemes, sweep_ps, sweep_eps;
  unsigned sweep_threads = 0;
  sweep->add_option("--schemes", sweep_schemes, "comma-separated schemes");
  sweep->add_option("--ps", sweep_ps, "comma-separated exponents p");
  sweep->add_option("--epss", sweep_eps, "comma-separated eps values");
  sweep->add_option("--threads", sweep_threads, "worker threads (0: all cores)");

  auto* verify = app.add_subcommand("verify", "run the verification suite");
  std::string level = "fast";
  verify->add_option("level", level, "fast or full")->check(CLI::IsMember({"fast", "full"}));

  auto* dump = app.add_subcommand("dump", "write the fields after some steps as legacy VTK");
  ConfigOptions dump_opts;
  dump_opts.attach(*dump);
  int dump_step = 0;
  std::string dump_path = "fields.vtk";
  dump->add_option("--at-step", dump_step, "steps to advance before writing")->check(CLI::NonNegativeNumber);
  dump->add_option("-o,--output", dump_path, "VTK file to write");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kBadConfig;
  }

  try {
    if (*run) {
      const auto cfg = run_opts.resolve(*run);
      return report_run(cfg, chemrep::run_simulation(cfg));
    }
    if (*sweep) {
      const auto base = sweep_opts.resolve(*sweep);
      chemrep::SweepAxes axes;
      for (const auto& s : split_list(sweep_schemes)) axes.schemes.push_back(chemrep::parse_scheme(s));
      axes.ps = parse_reals("p", sweep_ps);
      axes.epss = parse_reals("eps", sweep_eps);
      const auto entries = chemrep::run_sweep(base, axes, sweep_threads);
      int failed = 0;
      for (const auto& e : entries) {
        const bool ok = e.outcome.status == chemrep::RunStatus::ok;
        failed += !ok;
        std::printf("%-40s %s%s%s\n", e.config.out_dir.c_str(),
                    std::string(chemrep::to_string(e.outcome.status)).c_str(), ok ? "" : ": ",
                    e.outcome.message.c_str());
      }
      std::printf("%zu runs, %d failed; manifest at %s\n", entries.size(), failed,
                  (std::filesystem::path(base.out_dir) / "manifest.csv").string().c_str());
      return failed ? kNonConvergence : kOk;
    }
    if (*verify) {
      namespace cv = chemrep::verify;
      bool all = true;
      cv::run_suite(level == "full" ? cv::Level::full : cv::Level::fast,
                    [&all](int id, const cv::CheckResult& r) {
                      all = all && r.passed;
                      std::printf("[%2d] %s  %-32s %7.2fs  %s\n", id, r.passed ? "PASS" : "FAIL",
                                  r.name.c_str(), r.seconds, r.detail.c_str());
                      std::fflush(stdout);
                    });
      return all ? kOk : kVerifyFailed;
    }
    if (*dump) {
      const auto cfg = dump_opts.resolve(*dump);
      const chemrep::StructuredTriMesh mesh(cfg.nx, cfg.ny, cfg.lx, cfg.ly);
      const chemrep::SchemeSolver solver(mesh, cfg.scheme_config());
      auto state = solver.init_state(chemrep::parse_preset(cfg.ic));
      try {
        for (int n = 0; n < dump_step; ++n) state = solver.step(state).first;
      } catch (const chemrep::PicardError& e) {
        std::fprintf(stderr, "%s\n", e.what());
        return kNonConvergence;
      } catch (const chemrep::SolverError& e) {
        std::fprintf(stderr, "%s\n", e.what());
        return kNonConvergence;
      }
      chemrep::dump_field(solver, state, dump_path);
      std::printf("wrote %s (step %ld, %zu points)\n", dump_path.c_str(), state.step, mesh.num_nodes());
      return kOk;
    }
  } catch (const chemrep::ConfigError& e) {
    std::fprintf(stderr, "bad configuration: %s\n", e.what());
    return kBadConfig;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kNonConvergence;
  }
  return kOk;
}
