#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "support.hpp"

using namespace lcp::test;
namespace fs = std::filesystem;

namespace {

int run(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(LCPREDICT_BIN) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path write_small_config(const fs::path& dir) {
  const auto p = dir / "small.json";
  std::ofstream(p) << R"({
  "profile": "highd",
  "seed": 11,
  "input": {"kind": "synthetic", "locations": [0, 1, 2, 3, 4, 5], "benchmark": {"vehicles": 10, "duration": 40}},
  "sampling": {"W": 1, "T": 1, "stride": 5},
  "balance": {"smote_k": 5, "ratio": "29:1:1", "alpha": 0.5, "tomek": true},
  "train": {"num_rounds": 15, "learning_rate": 0.2, "max_leaves": 15, "min_data_in_leaf": 10},
  "monotone": "manifest",
  "split": {"train": [0, 1, 2, 3], "test": [4, 5], "cv_folds": 2},
  "eval": {"calibrate": true, "smooth_window": 5, "tau_step": 0.05}
})";
  return p;
}

// One pipeline run shared by the tests below.
const fs::path& pipeline_dir() {
  static const fs::path dir = [] {
    auto d = temp_dir("cli_pipeline");
    const auto cfg = write_small_config(d);
    const int rc = run("--config " + cfg.string() + " --output-dir " + (d / "run").string() + " pipeline", d / "log1.txt");
    EXPECT_EQ(rc, 0) << slurp(d / "log1.txt");
    return d;
  }();
  return dir;
}

}  // namespace

TEST(Cli, PipelineWritesReport) {
  const auto& d = pipeline_dir();
  ASSERT_TRUE(fs::exists(d / "run" / "report.json"));
  const auto j = nlohmann::json::parse(slurp(d / "run" / "report.json"));
  ASSERT_TRUE(j.contains("macro_f1"));
  ASSERT_TRUE(j.contains("accuracy"));
  EXPECT_GE(j["macro_f1"].get<double>(), 0.0);
  EXPECT_LE(j["macro_f1"].get<double>(), 1.0);
  for (const char* f : {"model.json", "thresholds.json", "weights.json", "predictions.csv", "pipeline_state.json"})
    EXPECT_TRUE(fs::exists(d / "run" / f)) << f;
}

TEST(Cli, RerunIsByteIdentical) {
  const auto& d = pipeline_dir();
  const int rc = run("--config " + (d / "small.json").string() + " --output-dir " + (d / "run2").string() + " pipeline",
                     d / "log2.txt");
  ASSERT_EQ(rc, 0) << slurp(d / "log2.txt");
  for (const char* f : {"report.json", "model.json", "thresholds.json", "predictions.csv"})
    EXPECT_EQ(slurp(d / "run" / f), slurp(d / "run2" / f)) << f;
}

TEST(Cli, ResumeSkipsThenDetectsTampering) {
  const auto& d = pipeline_dir();
  const auto copy = d / "run3";
  fs::remove_all(copy);
  fs::copy(d / "run", copy, fs::copy_options::recursive);
  const std::string base = "--config " + (d / "small.json").string() + " --output-dir " + copy.string() + " --resume pipeline";
  ASSERT_EQ(run(base, d / "log3.txt"), 0) << slurp(d / "log3.txt");
  const auto log = slurp(d / "log3.txt");
  EXPECT_NE(log.find("[train] up to date, skipped"), std::string::npos) << log;
  EXPECT_EQ(log.find("running"), std::string::npos) << log;

  std::ofstream(copy / "weights.json", std::ios::app) << " ";
  EXPECT_EQ(run(base, d / "log4.txt"), 20) << slurp(d / "log4.txt");
}

TEST(Cli, DryRunWritesNothing) {
  const auto d = temp_dir("cli_dry");
  const auto cfg = write_small_config(d);
  const auto out = d / "never";
  ASSERT_EQ(run("--config " + cfg.string() + " --output-dir " + out.string() + " --dry-run pipeline", d / "log.txt"), 0)
      << slurp(d / "log.txt");
  EXPECT_FALSE(fs::exists(out));
  EXPECT_NE(slurp(d / "log.txt").find("train"), std::string::npos);
}

TEST(Cli, ExitCodes) {
  const auto d = temp_dir("cli_codes");
  std::ofstream(d / "bad.json") << R"({"profile": "highd", "bogus_key": 1})";
  EXPECT_EQ(run("--config " + (d / "bad.json").string() + " pipeline", d / "log.txt"), 2);
  EXPECT_EQ(run("ingest --profile highd --meta " + (d / "nope_meta.csv").string() + " --tracks-meta " +
                    (d / "nope_tm.csv").string() + " --tracks " + (d / "nope.csv").string() + " --out " +
                    (d / "out").string(),
                d / "log.txt"),
            10)
      << slurp(d / "log.txt");
  EXPECT_EQ(run("eval --model " + (d / "missing.json").string() + " --test " + (d / "missing.bin").string() +
                    " --report " + (d / "r.json").string(),
                d / "log.txt"),
            17)
      << slurp(d / "log.txt");
  EXPECT_NE(run("no-such-command", d / "log.txt"), 0);
}

TEST(Cli, StageCommandsChain) {
  const auto d = temp_dir("cli_stages");
  const auto rec = d / "rec";
  ASSERT_EQ(run("synth --seed 5 --locations 0,4 --out " + rec.string(), d / "log.txt"), 0) << slurp(d / "log.txt");
  ASSERT_EQ(run("label --in " + rec.string() + " --profile highd --W 1 --T 1 --stride 5 --out " +
                    (d / "samples.csv").string(),
                d / "log.txt"),
            0)
      << slurp(d / "log.txt");
  ASSERT_EQ(run("features --samples " + (d / "samples.csv").string() + " --data " + rec.string() +
                    " --train-locations 0 --locations 0 --profile highd --stats " + (d / "stats.json").string() +
                    " --out " + (d / "train.bin").string(),
                d / "log.txt"),
            0)
      << slurp(d / "log.txt");
  EXPECT_TRUE(fs::exists(d / "stats.json"));
  ASSERT_EQ(run("balance --in " + (d / "train.bin").string() + " --ratio 29:1:1 --k 5 --alpha 0.5 --seed 7 --out " +
                    (d / "bal.bin").string() + " --weights " + (d / "weights.json").string(),
                d / "log.txt"),
            0)
      << slurp(d / "log.txt");
  const auto w = nlohmann::json::parse(slurp(d / "weights.json"));
  EXPECT_TRUE(w.contains("weights"));
}
