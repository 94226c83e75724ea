#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "lcp/error.hpp"
#include "lcp/eval.hpp"
#include "lcp/synthgen.hpp"

namespace lcp {

#ifdef LCP_DATA_DIR
inline const std::filesystem::path kDefaultDataDir = LCP_DATA_DIR;
#else
inline const std::filesystem::path kDefaultDataDir = "data";
#endif

enum class InputKind { Synthetic, Normalized, Raw };

/// Every stage's parameters. Loaded from JSON; unknown keys are rejected.
/// Stage seeds are derived from `seed` (see derive_stage_seeds), so no section
/// carries its own seed.
struct RunConfig {
  DatasetProfile profile = DatasetProfile::HighD;
  std::filesystem::path data_dir = kDefaultDataDir;
  std::filesystem::path output_dir = "lcp_run";
  std::uint64_t seed = 7;

  InputKind input = InputKind::Synthetic;
  std::filesystem::path input_dir;                  // normalized or raw recordings
  std::optional<std::filesystem::path> mapping;     // raw column mapping override
  std::optional<std::filesystem::path> scenario;    // synthetic: one scripted scenario instead of the benchmark
  BenchmarkOptions benchmark;
  std::vector<int> locations{0, 1, 2, 3, 4, 5};    // synthetic benchmark: one recording per location

  double history_window = 1.0;
  double horizon = 1.0;
  int stride = 5;
  DetectionParams detection;
  std::optional<std::filesystem::path> manifest;   // defaults to the bundled profile manifest
  BalanceConfig balance;
  gbdt::TrainParams train;
  std::string monotone = "manifest";               // manifest | none | custom (given under train.monotone)
  SplitSpec split;
  bool calibrate = true;
  int smooth_window = 5;
  double tau_step = 0.05;

  std::vector<double> sweep_windows{1, 2, 3, 4, 5};
  std::vector<double> sweep_horizons{1, 2, 3};
  int search_budget = 0;

  std::string to_json() const;
  /// FNV-1a of the canonical JSON form, output_dir excluded.
  std::uint64_t hash() const;
};

RunConfig config_from_json(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);

/// Overwrites the per-stage seeds from the root seed.
void derive_stage_seeds(RunConfig& cfg);

/// Resolves the manifest and monotone spec into an experiment config.
ExperimentConfig experiment_config(const RunConfig& cfg);

/// Loads every `<id>_recordingMeta.csv` / `<id>_tracksMeta.csv` /
/// `<id>_tracks.csv` triple in a directory; an `<id>_geometry.json` is used
/// when the mapping takes geometry from an external file.
std::vector<Recording> load_raw_dir(const std::filesystem::path& dir, const ColumnMapping& mapping);

/// Recordings named by the input section (generated for synthetic input).
std::vector<Recording> load_inputs(const RunConfig& cfg);

/// Stage names in execution order.
const std::vector<std::string>& pipeline_stages();

/// Process exit code for a failing stage.
int stage_exit_code(const std::string& stage);

/// Error raised by the pipeline, carrying the failing stage.
class StageError : public std::runtime_error {
 public:
  StageError(std::string stage, ErrorCode code, const std::string& what)
      : std::runtime_error(stage + ": " + what), stage_(std::move(stage)), code_(code) {}
  const std::string& stage() const { return stage_; }
  ErrorCode code() const { return code_; }
  int exit_code() const;

 private:
  std::string stage_;
  ErrorCode code_;
};

struct PipelineOptions {
  bool resume = false;
  bool dry_run = false;
};

struct PipelineResult {
  std::vector<std::string> ran;
  std::vector<std::string> skipped;
  std::filesystem::path report;
};

/// One line per stage: name, inputs, outputs.
std::vector<std::string> pipeline_plan(const RunConfig& cfg);

/// ingest -> label -> features -> balance -> train -> eval under
/// cfg.output_dir. Each stage records its input and output hashes in
/// pipeline_state.json; with `resume`, a stage whose recorded inputs match is
/// skipped when its outputs are intact and fails with HashMismatch when an
/// output was modified.
PipelineResult run_pipeline(const RunConfig& cfg, const PipelineOptions& opt, std::ostream& log);

/// Report JSON for evaluated predictions.
std::string eval_report_json(const FeatureMatrix& test, std::span<const ProbVector> probs, const ThresholdSet& tau,
                             int smooth_window, std::uint64_t config_hash, std::uint64_t params_hash,
                             std::uint64_t model_hash, std::uint64_t data_hash);

std::string probs_to_csv(const FeatureMatrix& m, std::span<const ProbVector> probs, const ThresholdSet& tau);

}  // namespace lcp
