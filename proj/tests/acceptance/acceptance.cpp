// End-to-end acceptance run: the property suites, then two full sweeps of the
// frozen trend config through the lab binary. One PASS/FAIL line per criterion.
//
// usage: acceptance <lab-binary> <config.json> <scratch-dir>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "lab/checks.hpp"
#include "lab/config.hpp"
#include "lab/harness.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

int failures = 0;

void report(int criterion, bool ok, const std::string& what) {
  std::printf("%s criterion %d: %s\n", ok ? "PASS" : "FAIL", criterion, what.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t).count();
}

int run_lab(const std::string& lab, const fs::path& config, const fs::path& out, int jobs) {
  const std::string cmd = "\"" + lab + "\" run --config \"" + config.string() + "\" --out \"" + out.string() +
                          "\" --jobs " + std::to_string(jobs) + " 2>\"" + (out.string() + ".log") + "\"";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

struct Cell {
  double sum = 0.0;
  int n = 0;
  double mean() const { return n ? sum / n : std::nan(""); }
};

}  // namespace

int main(int argc, char** argv) {
  if (argc != 4) {
    std::fprintf(stderr, "usage: %s <lab-binary> <config.json> <scratch-dir>\n", argv[0]);
    return 2;
  }
  const std::string lab = argv[1];
  const fs::path config_path = argv[2];
  const fs::path scratch = argv[3];

  // 1-5: property suites.
  const lab::checks::SuiteResult grad = lab::checks::gradient_suite();
  report(1, grad.passed && grad.seconds < 30.0, grad.detail + "; " + fmt("%.2f", grad.seconds) + " s (< 30 s)");
  const lab::checks::SuiteResult second = lab::checks::second_order_suite();
  report(2, second.passed && second.seconds < 60.0,
         second.detail + "; " + fmt("%.2f", second.seconds) + " s (< 60 s)");
  const lab::checks::SuiteResult limits = lab::checks::loss_limit_suite();
  report(3, limits.passed, limits.detail);
  const lab::checks::SuiteResult ntx = lab::checks::nt_xent_suite();
  report(4, ntx.passed, ntx.detail);
  const lab::checks::SuiteResult law = lab::checks::noise_law_suite();
  report(5, law.passed, law.detail);

  // 6-9: two sweeps of the frozen config, single worker and four workers.
  const lab::ExperimentConfig cfg = lab::load_config(config_path);
  const std::size_t k = cfg.dataset.synthetic ? cfg.dataset.synthetic->num_classes : 0;
  fs::remove_all(scratch);
  fs::create_directories(scratch);
  const fs::path serial = scratch / "jobs1";
  const fs::path parallel = scratch / "jobs4";

  const auto start = std::chrono::steady_clock::now();
  const int code1 = run_lab(lab, config_path, serial, 1);
  const double serial_seconds = seconds_since(start);
  const int code4 = run_lab(lab, config_path, parallel, 4);
  const double total_seconds = seconds_since(start);

  std::vector<lab::RunResult> rows;
  try {
    rows = lab::read_results_csv(serial / "results.csv");
  } catch (const std::exception& e) {
    std::printf("cannot read sweep results: %s\n", e.what());
  }

  std::map<std::pair<std::string, std::string>, Cell> at80;
  for (const auto& r : rows) {
    if (r.noise_kind == "symmetric" && r.noise_rate == 0.8 && r.final_test_acc) {
      Cell& c = at80[{r.method, r.initializer}];
      c.sum += *r.final_test_acc;
      ++c.n;
    }
  }
  const double cce_rand = at80[{"cce", "random"}].mean();
  const double cce_con = at80[{"cce", "contrastive"}].mean();
  const double lq_con = at80[{"lq", "contrastive"}].mean();
  const double mw_con = at80[{"mwnet", "contrastive"}].mean();
  const std::string means = "80% symmetric, final test acc over seeds: cce/random " + fmt("%.4f", cce_rand) +
                            ", cce/contrastive " + fmt("%.4f", cce_con) + ", lq/contrastive " +
                            fmt("%.4f", lq_con) + ", mwnet/contrastive " + fmt("%.4f", mw_con) + "; sweep " +
                            fmt("%.0f", serial_seconds) + " s";
  std::printf("  %s\n", means.c_str());
  report(6, cce_con - cce_rand >= 0.05,
         "(a) cce contrastive - random = " + fmt("%+.4f", cce_con - cce_rand) + " (>= +0.05)");
  report(6, lq_con >= cce_con, "(b) lq/contrastive - cce/contrastive = " + fmt("%+.4f", lq_con - cce_con) + " (>= 0)");
  report(6, mw_con >= cce_rand, "(c) mwnet/contrastive - cce/random = " + fmt("%+.4f", mw_con - cce_rand) + " (>= 0)");

  // 7: per-seed final-epoch weights in the 40% MWNet + contrastive runs.
  int below = 0, seen = 0;
  std::string per_seed;
  for (const auto& r : rows) {
    if (r.method != "mwnet" || r.initializer != "contrastive" || r.noise_rate != 0.4 || !r.ok()) continue;
    const json h = json::parse(slurp(serial / "histories" / (r.run_id + ".json")));
    const json& last = h["history"]["epochs"].back();
    const double flipped = last["mean_weight_flipped"].get<double>();
    const double clean = last["mean_weight_clean"].get<double>();
    ++seen;
    below += flipped < clean ? 1 : 0;
    per_seed += " s" + std::to_string(r.seed) + " " + fmt("%.4f", flipped) + "/" + fmt("%.4f", clean);
  }
  report(7, seen == 5 && below >= 4,
         std::to_string(below) + " of " + std::to_string(seen) + " seeds with flipped < clean (flipped/clean:" +
             per_seed + ")");

  const std::string csv1 = slurp(serial / "results.csv");
  const std::string csv4 = slurp(parallel / "results.csv");
  report(8, code1 == 0 && code4 == 0 && !csv1.empty() && csv1 == csv4,
         "results.csv from --jobs 1 and --jobs 4 " + std::string(csv1 == csv4 ? "identical" : "differ") + " (" +
             std::to_string(csv1.size()) + " bytes); both sweeps " + fmt("%.0f", total_seconds) + " s");

  // 9: every run's epoch-0 CCE on its training labels.
  double worst = 0.0;
  std::size_t checked = 0, failed = 0;
  for (const auto& r : rows) {
    if (!r.ok() || !r.final_test_acc) {
      ++failed;
      continue;
    }
    const json h = json::parse(slurp(serial / "histories" / (r.run_id + ".json")));
    worst = std::max(worst, std::abs(h["history"]["initial_cce"].get<double>() - std::log(double(k))));
    ++checked;
  }
  report(9, !rows.empty() && failed == 0 && worst <= 1e-6,
         std::to_string(checked) + " runs, " + std::to_string(failed) + " failed, max |initial CCE - ln K| " +
             fmt("%.2e", worst) + " (<= 1e-6)");

  std::printf("%s: %d failing line(s)\n", failures ? "FAILED" : "ALL PASSED", failures);
  return failures ? 1 : 0;
}
