#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "temp_dir.hpp"

namespace fs = std::filesystem;

namespace {

const std::vector<std::string> kPipeline{"synth", "preprocess", "extract", "train", "tune",
                                         "eval",  "explain",    "stats",   "report"};

int vigil(const std::string& args) {
  const std::string cmd = std::string(VIGIL_EXE) + " " + args + " --log-level off";
  const int status = std::system(cmd.c_str());
  REQUIRE(status != -1);
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

std::string tiny() { return std::string(VIGIL_TINY_CONFIG); }

void run_pipeline(const fs::path& out, const std::string& config = tiny()) {
  for (const auto& c : kPipeline) {
    INFO("subcommand " << c);
    REQUIRE(vigil(c + " --config " + config + " --out " + out.string()) == 0);
  }
}

std::set<std::string> files_under(const fs::path& root) {
  std::set<std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) out.insert(fs::relative(e.path(), root).generic_string());
  }
  return out;
}

bool deterministic_artifact(const std::string& rel) {
  const auto ext = fs::path(rel).extension();
  return ext == ".csv" || ext == ".json" || ext == ".md" || ext == ".f32";
}

}  // namespace

TEST_CASE("exit codes") {
  TempDir tmp("cli_exit");
  CHECK(vigil("bogus --config " + tiny() + " --out " + tmp.path().string()) == 1);
  CHECK(vigil("synth --config " + (tmp / "missing.json").string()) == 1);
  CHECK(vigil("synth") == 1);

  write(tmp / "bad_lag.json", R"({"lags": [0, 25]})");
  CHECK(vigil("eval --config " + (tmp / "bad_lag.json").string()) == 1);
  write(tmp / "typo.json", R"({"forrest": {}})");
  CHECK(vigil("eval --config " + (tmp / "typo.json").string()) == 1);
  write(tmp / "broken.json", R"({"lags": [0, )");
  CHECK(vigil("eval --config " + (tmp / "broken.json").string()) == 1);
  write(tmp / "bad_forest.json", R"({"forest": {"max_features": 1.5}})");
  CHECK(vigil("train --config " + (tmp / "bad_forest.json").string()) == 1);

  // nothing extracted yet: a runtime failure, not a config problem
  CHECK(vigil("train --config " + tiny() + " --out " + (tmp / "empty").string()) == 2);
}

TEST_CASE("tiny pipeline: eval shape, report coverage, determinism") {
  TempDir tmp("cli_pipeline");
  const fs::path a = tmp / "a";
  const fs::path b = tmp / "b";
  run_pipeline(a);

  SUBCASE("eval csv has one row per lag") {
    std::istringstream in(slurp(a / "eval" / "eval.csv"));
    std::vector<std::string> lines;
    for (std::string l; std::getline(in, l);) lines.push_back(l);
    REQUIRE(lines.size() == 3);
    CHECK(lines[0] == "lag_s,rmse_mean,rmse_sd,r_mean,r_sd");
    CHECK(lines[1].rfind("0,", 0) == 0);
    CHECK(lines[2].rfind("20,", 0) == 0);
  }

  SUBCASE("report cites every artifact") {
    const std::string report = slurp(a / "report.md");
    for (const auto& f : files_under(a)) {
      if (f == "report.md" || f == "manifests/report.json") continue;
      INFO(f);
      CHECK(report.find("`" + f + "`") != std::string::npos);
    }
    for (const char* section : {"## Forecasting accuracy", "## Most informative connections", "## Regional statistics"}) {
      CHECK(report.find(section) != std::string::npos);
    }
  }

  SUBCASE("second run is byte identical") {
    run_pipeline(b);
    const auto fa = files_under(a);
    CHECK(fa == files_under(b));
    std::size_t compared = 0;
    for (const auto& f : fa) {
      if (!deterministic_artifact(f)) continue;
      INFO(f);
      CHECK(slurp(a / f) == slurp(b / f));
      ++compared;
    }
    CHECK(compared > 40);
  }

  SUBCASE("rerunning a subcommand in place is idempotent") {
    const std::string before = slurp(a / "eval" / "eval.csv");
    const std::string model = slurp(a / "models" / "lag_0.json");
    REQUIRE(vigil("eval --config " + tiny() + " --out " + a.string()) == 0);
    REQUIRE(vigil("train --config " + tiny() + " --out " + a.string()) == 0);
    CHECK(slurp(a / "eval" / "eval.csv") == before);
    CHECK(slurp(a / "models" / "lag_0.json") == model);
  }

  SUBCASE("seed override changes the synthetic cohort") {
    REQUIRE(vigil("synth --config " + tiny() + " --seed 99 --out " + b.string()) == 0);
    CHECK(slurp(a / "sessions" / "P001_events.csv") != slurp(b / "sessions" / "P001_events.csv"));
  }
}

TEST_CASE("tuned preset reads the tune output") {
  TempDir tmp("cli_tuned");
  const fs::path out = tmp / "run";
  write(tmp / "cfg.json", R"({"seed": 3, "lags": [0], "synth": {"n_participants": 2, "n_trials": 40, "sample_rate_hz": 100},
    "extract": {"source": "sessions"}, "forest": {"preset": "tuned"},
    "tune": {"n_trials": 5, "n_startup": 2, "n_candidates": 4}, "cv": {"k": 3}})");
  const std::string cfg = (tmp / "cfg.json").string();
  for (const char* c : {"synth", "extract"}) {
    REQUIRE(vigil(std::string(c) + " --config " + cfg + " --out " + out.string()) == 0);
  }
  CHECK(vigil("eval --config " + cfg + " --out " + out.string()) == 1);
  write(tmp / "base.json", R"({"seed": 3, "lags": [0], "synth": {"n_participants": 2, "n_trials": 40, "sample_rate_hz": 100},
    "forest": {"n_estimators": 10}, "tune": {"n_trials": 5, "n_startup": 2, "n_candidates": 4}, "cv": {"k": 3}})");
  REQUIRE(vigil("tune --config " + (tmp / "base.json").string() + " --out " + out.string()) == 0);
  REQUIRE(vigil("eval --config " + cfg + " --out " + out.string()) == 0);
  const std::string best = slurp(out / "tune" / "best_params.json");
  CHECK(best.find("\"n_estimators\": 10") != std::string::npos);
}
