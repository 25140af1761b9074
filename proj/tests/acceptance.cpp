// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include <CLI11.hpp>

#include <cstdio>
#include <map>
#include <set>
#include <vector>

#include "chemrep/verification.hpp"

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  std::vector<int> only;
  app.add_option("--only", only, "criteria to run (default: all)")->check(CLI::Range(1, 10));
  CLI11_PARSE(app, argc, argv);

  // wall-clock budgets in seconds; criteria without one are unbounded
  const std::map<int, double> budget = {{1, 5.0}, {2, 5.0}, {3, 5.0}, {4, 60.0}};
  namespace cv = chemrep::verify;
  bool all = true;
  cv::run_suite(
      cv::Level::full,
      [&](int id, const cv::CheckResult& r) {
        const auto b = budget.find(id);
        const bool in_time = b == budget.end() || r.seconds < b->second;
        const bool ok = r.passed && in_time;
        all = all && ok;
        char limit[32] = "";
        if (b != budget.end()) std::snprintf(limit, sizeof limit, ", budget %.0fs", b->second);
        std::printf("criterion %2d %s  %s (%.2fs%s%s): %s\n", id, ok ? "PASS" : "FAIL", r.name.c_str(),
                    r.seconds, limit, in_time ? "" : ", over budget", r.detail.c_str());
        std::fflush(stdout);
      },
      std::set<int>(only.begin(), only.end()));
  return all ? 0 : 1;
}
