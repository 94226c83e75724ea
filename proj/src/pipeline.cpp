#include "lcp/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <ostream>
#include <regex>
#include <set>
#include <sstream>

#include <json.hpp>

#include "lcp/csv.hpp"
#include "lcp/io.hpp"
#include "lcp/random.hpp"

namespace lcp {

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& where) {
  if (!j.is_object()) throw Error(ErrorCode::InvalidConfig, where + " must be an object");
  for (auto& [k, v] : j.items())
    if (!known.count(k)) throw Error(ErrorCode::InvalidConfig, "unknown key '" + k + "' in " + where, {k});
}

template <class T>
void take(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

const char* input_name(InputKind k) {
  switch (k) {
    case InputKind::Synthetic: return "synthetic";
    case InputKind::Normalized: return "normalized";
    case InputKind::Raw: return "raw";
  }
  return "synthetic";
}

InputKind parse_input(const std::string& s) {
  if (s == "synthetic") return InputKind::Synthetic;
  if (s == "normalized") return InputKind::Normalized;
  if (s == "raw") return InputKind::Raw;
  throw Error(ErrorCode::InvalidConfig, "unknown input kind '" + s + "'");
}

json benchmark_json(const BenchmarkOptions& b) {
  return {{"vehicles", b.vehicles},
          {"duration", b.duration},
          {"f_s", b.f_s},
          {"spacing", b.spacing},
          {"speed", b.speed},
          {"change_probability", b.change_probability},
          {"min_change_gap", b.min_change_gap},
          {"first_change", b.first_change},
          {"transition", b.transition},
          {"cue_accel", b.cue_accel},
          {"cue_lead", b.cue_lead},
          {"pos_noise", b.pos_noise},
          {"vel_noise", b.vel_noise},
          {"accel_noise", b.accel_noise}};
}

void benchmark_from(const json& j, BenchmarkOptions& b) {
  reject_unknown(j, {"vehicles", "duration", "f_s", "spacing", "speed", "change_probability", "min_change_gap",
                     "first_change", "transition", "cue_accel", "cue_lead", "pos_noise", "vel_noise", "accel_noise"},
                 "input.benchmark");
  take(j, "vehicles", b.vehicles);
  take(j, "duration", b.duration);
  take(j, "f_s", b.f_s);
  take(j, "spacing", b.spacing);
  take(j, "speed", b.speed);
  take(j, "change_probability", b.change_probability);
  take(j, "min_change_gap", b.min_change_gap);
  take(j, "first_change", b.first_change);
  take(j, "transition", b.transition);
  take(j, "cue_accel", b.cue_accel);
  take(j, "cue_lead", b.cue_lead);
  take(j, "pos_noise", b.pos_noise);
  take(j, "vel_noise", b.vel_noise);
  take(j, "accel_noise", b.accel_noise);
}

json detection_json(const DetectionParams& d) {
  return {{"crossing_threshold", d.crossing_threshold},
          {"drift_duration", d.drift_duration},
          {"drift_sign_tolerance", d.drift_sign_tolerance},
          {"drift_violation_frames", d.drift_violation_frames},
          {"quiet_duration", d.quiet_duration},
          {"reversal_tolerance", d.reversal_tolerance},
          {"direction_window", d.direction_window},
          {"position_smoothing", d.position_smoothing},
          {"scenario", d.scenario == Scenario::Ramp ? "ramp" : "straight"},
          {"highd_left_rule",
           d.highd_left_rule == HighdLeftRule::IdIncreasesLeft ? "id_increases_left" : "id_decreases_left"}};
}

void detection_from(const json& j, DetectionParams& d) {
  reject_unknown(j, {"crossing_threshold", "drift_duration", "drift_sign_tolerance", "drift_violation_frames",
                     "quiet_duration", "reversal_tolerance", "direction_window", "position_smoothing", "scenario",
                     "highd_left_rule"},
                 "detection");
  take(j, "crossing_threshold", d.crossing_threshold);
  take(j, "drift_duration", d.drift_duration);
  take(j, "drift_sign_tolerance", d.drift_sign_tolerance);
  take(j, "drift_violation_frames", d.drift_violation_frames);
  take(j, "quiet_duration", d.quiet_duration);
  take(j, "reversal_tolerance", d.reversal_tolerance);
  take(j, "direction_window", d.direction_window);
  take(j, "position_smoothing", d.position_smoothing);
  if (j.contains("scenario")) {
    const auto s = j["scenario"].get<std::string>();
    if (s != "ramp" && s != "straight") throw Error(ErrorCode::InvalidConfig, "scenario must be straight or ramp");
    d.scenario = s == "ramp" ? Scenario::Ramp : Scenario::Straight;
  }
  if (j.contains("highd_left_rule")) {
    const auto s = j["highd_left_rule"].get<std::string>();
    if (s == "id_increases_left") d.highd_left_rule = HighdLeftRule::IdIncreasesLeft;
    else if (s == "id_decreases_left") d.highd_left_rule = HighdLeftRule::IdDecreasesLeft;
    else throw Error(ErrorCode::InvalidConfig, "highd_left_rule must be id_increases_left or id_decreases_left");
  }
}

std::string path_or_null(const std::optional<fs::path>& p) { return p ? p->string() : std::string(); }

}  // namespace

std::string RunConfig::to_json() const {
  json j;
  j["profile"] = std::string(lcp::to_string(profile));
  j["data_dir"] = data_dir.string();
  j["output_dir"] = output_dir.string();
  j["seed"] = seed;
  j["input"] = {{"kind", input_name(input)},
                {"dir", input_dir.string()},
                {"mapping", path_or_null(mapping)},
                {"scenario", path_or_null(scenario)},
                {"locations", locations},
                {"benchmark", benchmark_json(benchmark)}};
  j["sampling"] = {{"W", history_window}, {"T", horizon}, {"stride", stride}};
  j["detection"] = detection_json(detection);
  j["features"] = {{"manifest", path_or_null(manifest)}};
  j["balance"] = {{"smote_k", balance.smote_k},
                  {"ratio", format_ratio(balance.target_ratio)},
                  {"alpha", balance.alpha},
                  {"tomek", balance.tomek},
                  {"seed", balance.seed}};
  j["train"] = json::parse(gbdt::train_params_to_json(train));
  j["monotone"] = monotone;
  j["split"] = {{"train", split.train_locations},
                {"test", split.test_locations},
                {"cv_folds", split.cv_folds},
                {"fold_seed", split.fold_seed}};
  j["eval"] = {{"calibrate", calibrate}, {"smooth_window", smooth_window}, {"tau_step", tau_step}};
  j["sweep"] = {{"W", sweep_windows}, {"T", sweep_horizons}};
  j["search"] = {{"budget", search_budget}};
  return j.dump(2);
}

// The output location does not change any result, so it stays out of the hash.
std::uint64_t RunConfig::hash() const {
  RunConfig c = *this;
  c.output_dir.clear();
  return fnv1a64(c.to_json());
}

void derive_stage_seeds(RunConfig& cfg) {
  cfg.balance.seed = derive_seed(cfg.seed, "balance");
  cfg.train.seed = derive_seed(cfg.seed, "train");
  cfg.split.fold_seed = derive_seed(cfg.seed, "folds");
}

RunConfig config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("config is not valid JSON: ") + e.what());
  }
  try {
    reject_unknown(j, {"profile", "data_dir", "output_dir", "seed", "input", "sampling", "detection", "features",
                       "balance", "train", "monotone", "split", "eval", "sweep", "search"},
                   "config");
    RunConfig c;
    if (j.contains("profile")) c.profile = parse_profile(j["profile"].get<std::string>());
    if (j.contains("data_dir")) c.data_dir = j["data_dir"].get<std::string>();
    if (j.contains("output_dir")) c.output_dir = j["output_dir"].get<std::string>();
    take(j, "seed", c.seed);
    c.detection = detection_params_for(c.profile);
    c.split = default_split(c.profile);
    if (j.contains("input")) {
      const auto& in = j["input"];
      reject_unknown(in, {"kind", "dir", "mapping", "scenario", "locations", "benchmark"}, "input");
      if (in.contains("kind")) c.input = parse_input(in["kind"].get<std::string>());
      if (in.contains("dir")) c.input_dir = in["dir"].get<std::string>();
      if (in.contains("mapping") && !in["mapping"].get<std::string>().empty()) c.mapping = in["mapping"].get<std::string>();
      if (in.contains("scenario") && !in["scenario"].get<std::string>().empty())
        c.scenario = in["scenario"].get<std::string>();
      take(in, "locations", c.locations);
      if (in.contains("benchmark")) benchmark_from(in["benchmark"], c.benchmark);
    }
    if (j.contains("sampling")) {
      const auto& s = j["sampling"];
      reject_unknown(s, {"W", "T", "stride"}, "sampling");
      take(s, "W", c.history_window);
      take(s, "T", c.horizon);
      take(s, "stride", c.stride);
    }
    if (j.contains("detection")) detection_from(j["detection"], c.detection);
    if (j.contains("features")) {
      reject_unknown(j["features"], {"manifest"}, "features");
      if (j["features"].contains("manifest") && !j["features"]["manifest"].get<std::string>().empty())
        c.manifest = j["features"]["manifest"].get<std::string>();
    }
    if (j.contains("balance")) {
      const auto& b = j["balance"];
      reject_unknown(b, {"smote_k", "ratio", "alpha", "tomek"}, "balance");
      take(b, "smote_k", c.balance.smote_k);
      if (b.contains("ratio")) c.balance.target_ratio = parse_ratio(b["ratio"].get<std::string>());
      take(b, "alpha", c.balance.alpha);
      take(b, "tomek", c.balance.tomek);
    }
    if (j.contains("train")) {
      if (j["train"].contains("seed"))
        throw Error(ErrorCode::InvalidConfig, "train.seed is derived from the root seed", {"seed"});
      if (j["train"].contains("class_weights"))
        throw Error(ErrorCode::InvalidConfig, "class weights come from the balance stage", {"class_weights"});
      c.train = gbdt::train_params_from_json(j["train"].dump(), c.train);
      if (j["train"].contains("monotone")) c.monotone = "custom";
    }
    if (j.contains("monotone")) {
      c.monotone = j["monotone"].get<std::string>();
      if (c.monotone != "manifest" && c.monotone != "none" && c.monotone != "custom")
        throw Error(ErrorCode::InvalidConfig, "monotone must be manifest, none or custom");
    }
    if (j.contains("split")) {
      const auto& s = j["split"];
      reject_unknown(s, {"train", "test", "cv_folds"}, "split");
      SplitSpec sp = c.split;
      take(s, "train", sp.train_locations);
      take(s, "test", sp.test_locations);
      take(s, "cv_folds", sp.cv_folds);
      sp.validate();
      c.split = sp;
    }
    if (j.contains("eval")) {
      const auto& e = j["eval"];
      reject_unknown(e, {"calibrate", "smooth_window", "tau_step"}, "eval");
      take(e, "calibrate", c.calibrate);
      take(e, "smooth_window", c.smooth_window);
      take(e, "tau_step", c.tau_step);
    }
    if (j.contains("sweep")) {
      const auto& s = j["sweep"];
      reject_unknown(s, {"W", "T"}, "sweep");
      take(s, "W", c.sweep_windows);
      take(s, "T", c.sweep_horizons);
    }
    if (j.contains("search")) {
      reject_unknown(j["search"], {"budget"}, "search");
      take(j["search"], "budget", c.search_budget);
    }
    derive_stage_seeds(c);
    SamplingConfig{25.0, c.history_window, c.horizon, c.stride}.validate();
    c.balance.validate();
    c.train.validate();
    return c;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::InvalidConfig) throw;
    throw Error(ErrorCode::InvalidConfig, e.what(), e.details());
  }
}

RunConfig load_config(const fs::path& path) { return config_from_json(read_text_file(path)); }

ExperimentConfig experiment_config(const RunConfig& cfg) {
  ExperimentConfig e;
  e.manifest = cfg.manifest ? load_manifest(*cfg.manifest) : default_manifest(cfg.profile, cfg.data_dir);
  e.detection = cfg.detection;
  e.stride = cfg.stride;
  e.balance = cfg.balance;
  e.train = cfg.train;
  if (cfg.monotone == "manifest") e.train.monotone = gbdt::monotone_from_manifest(e.manifest);
  else if (cfg.monotone == "none") e.train.monotone = {};
  e.split = cfg.split;
  e.calibrate = cfg.calibrate;
  e.smooth_window = cfg.smooth_window;
  e.tau_step = cfg.tau_step;
  return e;
}

std::vector<Recording> load_raw_dir(const fs::path& dir, const ColumnMapping& mapping) {
  static const std::regex pattern(R"((\d+)_recordingMeta\.csv)");
  if (!fs::is_directory(dir)) throw Error(ErrorCode::IoError, dir.string() + " is not a directory");
  std::vector<std::string> ids;
  for (const auto& entry : fs::directory_iterator(dir)) {
    std::smatch m;
    const auto name = entry.path().filename().string();
    if (std::regex_match(name, m, pattern)) ids.push_back(m[1]);
  }
  std::sort(ids.begin(), ids.end());
  std::vector<Recording> out;
  for (const auto& id : ids) {
    std::optional<fs::path> geometry;
    if (!mapping.markings_geometry) geometry = dir / (id + "_geometry.json");
    out.push_back(load_recording(dir / (id + "_recordingMeta.csv"), dir / (id + "_tracksMeta.csv"),
                                 dir / (id + "_tracks.csv"), mapping, geometry));
  }
  if (out.empty()) throw Error(ErrorCode::IoError, "no *_recordingMeta.csv files in " + dir.string());
  return out;
}

std::vector<Recording> load_inputs(const RunConfig& cfg) {
  std::vector<Recording> recs;
  if (cfg.input == InputKind::Synthetic) {
    const auto seed = derive_seed(cfg.seed, "synth");
    if (cfg.scenario) {
      recs.push_back(generate_recording(scenario_from_json(read_text_file(*cfg.scenario)), seed).recording);
    } else {
      for (auto& r : benchmark_dataset(cfg.locations, seed, cfg.benchmark)) recs.push_back(std::move(r.recording));
    }
  } else if (cfg.input == InputKind::Normalized) {
    recs = load_normalized_dir(cfg.input_dir);
  } else {
    const ColumnMapping mapping =
        cfg.mapping ? load_column_mapping(*cfg.mapping) : default_column_mapping(cfg.profile, cfg.data_dir);
    recs = load_raw_dir(cfg.input_dir, mapping);
  }
  return recs;
}

const std::vector<std::string>& pipeline_stages() {
  static const std::vector<std::string> s = {"ingest", "label", "features", "balance", "train", "eval"};
  return s;
}

int stage_exit_code(const std::string& stage) {
  static const std::map<std::string, int> codes = {{"config", 2},    {"ingest", 10},  {"synth", 11},
                                                   {"label", 12},    {"features", 13}, {"balance", 14},
                                                   {"train", 15},    {"predict", 16}, {"eval", 17},
                                                   {"sweep", 18}};
  auto it = codes.find(stage);
  return it == codes.end() ? 1 : it->second;
}

int StageError::exit_code() const {
  if (code_ == ErrorCode::HashMismatch) return 20;
  if (code_ == ErrorCode::InvalidConfig) return 2;
  return stage_exit_code(stage_);
}

std::string eval_report_json(const FeatureMatrix& test, std::span<const ProbVector> probs, const ThresholdSet& tau,
                             int smooth_window, std::uint64_t config_hash, std::uint64_t params_hash,
                             std::uint64_t model_hash, std::uint64_t data_hash) {
  std::vector<std::uint8_t> raw, smooth;
  for (auto m : decide(probs, tau)) raw.push_back(static_cast<std::uint8_t>(m));
  for (auto m : smooth_matrix_predictions(test, probs, tau, smooth_window)) smooth.push_back(static_cast<std::uint8_t>(m));
  const Metrics mr = compute_metrics(raw, test.labels);
  const Metrics ms = compute_metrics(smooth, test.labels);
  json j;
  j["config_hash"] = hex64(config_hash);
  j["params_hash"] = hex64(params_hash);
  j["model_hash"] = hex64(model_hash);
  j["data_hash"] = hex64(data_hash);
  j["rows"] = test.rows;
  j["accuracy"] = mr.accuracy;
  j["macro_f1"] = mr.macro_f1;
  j["thresholds"] = json::parse(thresholds_to_json(tau));
  j["raw"] = json::parse(metrics_to_json(mr));
  j["smoothed"] = json::parse(metrics_to_json(ms));
  j["smooth_window"] = smooth_window;
  return j.dump(2);
}

std::string probs_to_csv(const FeatureMatrix& m, std::span<const ProbVector> probs, const ThresholdSet& tau) {
  std::ostringstream os;
  const bool refs = m.refs.size() == m.rows;
  if (refs) os << "recording_id,track_id,location_id,anchor_frame,";
  os << "p_NLC,p_LLC,p_RLC,predicted,label\n";
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (refs) {
      const auto& r = m.refs[i];
      os << r.recording_id << ',' << r.track_id << ',' << r.location_id << ',' << r.anchor_frame << ',';
    }
    for (int c = 0; c < kNumClasses; ++c) os << csv::format_double(probs[i][c]) << ',';
    os << to_string(apply_decision_rule(probs[i], tau)) << ',';
    os << (i < m.labels.size() ? std::string(to_string(static_cast<Maneuver>(m.labels[i]))) : std::string()) << '\n';
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Staged pipeline
// ---------------------------------------------------------------------------

namespace {

struct Paths {
  fs::path root;
  fs::path recordings() const { return root / "recordings"; }
  fs::path truth() const { return root / "truth.csv"; }
  fs::path samples() const { return root / "samples.csv"; }
  fs::path stats() const { return root / "stats.json"; }
  fs::path train_features() const { return root / "features_train.bin"; }
  fs::path test_features() const { return root / "features_test.bin"; }
  fs::path balanced() const { return root / "balanced.bin"; }
  fs::path weights() const { return root / "weights.json"; }
  fs::path model() const { return root / "model.json"; }
  fs::path thresholds() const { return root / "thresholds.json"; }
  fs::path search() const { return root / "search.json"; }
  fs::path report() const { return root / "report.json"; }
  fs::path predictions() const { return root / "predictions.csv"; }
  fs::path state() const { return root / "pipeline_state.json"; }
};

struct StageSpec {
  std::string name;
  std::vector<fs::path> inputs;
  std::vector<fs::path> outputs;
};

std::vector<StageSpec> stage_specs(const RunConfig& cfg, const Paths& p) {
  std::vector<fs::path> ingest_out = {p.recordings()};
  if (cfg.input == InputKind::Synthetic) ingest_out.push_back(p.truth());
  std::vector<fs::path> train_out = {p.model(), p.thresholds()};
  if (cfg.search_budget > 0) train_out.push_back(p.search());
  return {
      {"ingest", {}, ingest_out},
      {"label", {p.recordings()}, {p.samples()}},
      {"features", {p.recordings(), p.samples()}, {p.stats(), p.train_features(), p.test_features()}},
      {"balance", {p.train_features()}, {p.balanced(), p.weights()}},
      {"train", {p.train_features(), p.balanced(), p.weights()}, train_out},
      {"eval", {p.model(), p.thresholds(), p.test_features()}, {p.report(), p.predictions()}},
  };
}

// Hash of a file, or of a directory's files in name order.
std::uint64_t hash_path(const fs::path& path) {
  if (!fs::is_directory(path)) return hash_file(path);
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(path))
    if (e.is_regular_file()) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::uint64_t h = fnv1a64("dir");
  for (const auto& f : files) {
    h = fnv1a64(f.filename().string(), h);
    h = fnv1a64(hex64(hash_file(f)), h);
  }
  return h;
}

json hashes_of(const std::vector<fs::path>& paths) {
  json j = json::object();
  for (const auto& p : paths) j[p.filename().string()] = hex64(hash_path(p));
  return j;
}

void run_ingest(const RunConfig& cfg, const Paths& p) {
  fs::remove_all(p.recordings());
  fs::create_directories(p.recordings());
  if (cfg.input == InputKind::Synthetic) {
    std::vector<LaneChangeEvent> truth;
    std::vector<SyntheticRecording> recs;
    const auto seed = derive_seed(cfg.seed, "synth");
    if (cfg.scenario) recs.push_back(generate_recording(scenario_from_json(read_text_file(*cfg.scenario)), seed));
    else recs = benchmark_dataset(cfg.locations, seed, cfg.benchmark);
    std::ofstream out(p.truth());
    out << "recording_id,track_id,start_frame,end_frame,direction\n";
    for (const auto& r : recs) {
      write_normalized(r.recording, p.recordings());
      for (const auto& e : r.truth)
        out << r.recording.recording_id << ',' << e.track_id << ',' << e.start_frame << ',' << e.end_frame << ','
            << to_string(e.direction) << '\n';
    }
    return;
  }
  const auto recs = load_inputs(cfg);
  for (const auto& r : recs) write_normalized(r, p.recordings());
}

void run_label(const RunConfig& cfg, const Paths& p) {
  const auto recs = load_normalized_dir(p.recordings());
  std::vector<LabeledSample> samples;
  for (const auto& rec : recs) {
    std::vector<std::vector<LaneChangeEvent>> events;
    for (const auto& t : rec.tracks) events.push_back(detect_events(t, rec.geometry, cfg.detection, rec.f_s));
    auto s = build_samples(rec, events, SamplingConfig{rec.f_s, cfg.history_window, cfg.horizon, cfg.stride});
    samples.insert(samples.end(), s.begin(), s.end());
  }
  write_samples_csv(samples, p.samples());
}

void run_features(const RunConfig& cfg, const ExperimentConfig& exp, const Paths& p) {
  const auto recs = load_normalized_dir(p.recordings());
  if (recs.empty()) throw Error(ErrorCode::EmptyPartition, "no recordings");
  const auto samples = read_samples_csv(p.samples(), recs);
  const auto split = split_by_location(samples, cfg.split);
  std::vector<LabeledSample> train_s, test_s;
  for (auto i : split.train) train_s.push_back(samples[i]);
  for (auto i : split.test) test_s.push_back(samples[i]);

  std::vector<std::vector<std::vector<LaneChangeEvent>>> events(recs.size());
  for (std::size_t r = 0; r < recs.size(); ++r)
    for (const auto& t : recs[r].tracks)
      events[r].push_back(detect_events(t, recs[r].geometry, cfg.detection, recs[r].f_s));
  NeighborStats stats;
  stats.gap = compute_gap_stats(recs, events, cfg.split.train_locations);
  stats.time_gap = compute_time_gap_stats(recs, train_s);
  write_text_file(p.stats(), neighbor_stats_to_json(stats) + "\n");

  const FeatureExtractor ex(exp.manifest, stats,
                            SamplingConfig{recs.front().f_s, cfg.history_window, cfg.horizon, cfg.stride},
                            cfg.detection);
  write_features(build_feature_matrix(recs, train_s, ex), p.train_features());
  write_features(build_feature_matrix(recs, test_s, ex), p.test_features());
}

void run_balance(const RunConfig& cfg, const Paths& p) {
  const auto data = read_features(p.train_features());
  const auto res = balance(data, cfg.balance);
  write_features(res.data, p.balanced());
  write_text_file(p.weights(), class_weights_to_json(res.weights, res.after, cfg.balance.alpha) + "\n");
}

void run_train(const RunConfig& cfg, ExperimentConfig exp, const Paths& p) {
  const auto train_data = read_features(p.train_features());
  if (cfg.search_budget > 0) {
    const auto res = random_search(train_data, exp, SearchSpace{}, cfg.search_budget, derive_seed(cfg.seed, "search"));
    json j;
    j["best_score"] = res.best_score;
    j["best"] = json::parse(gbdt::train_params_to_json(res.best));
    j["trials"] = json::array();
    for (const auto& [params, score] : res.trials)
      j["trials"].push_back({{"params", json::parse(gbdt::train_params_to_json(params))}, {"score", score}});
    write_text_file(p.search(), j.dump(2) + "\n");
    exp.train = res.best;
  }
  const ThresholdSet tau = exp.calibrate && exp.split.cv_folds >= 2 ? cross_validate_thresholds(train_data, exp)
                                                                      : ThresholdSet{};
  const auto balanced = read_features(p.balanced());
  gbdt::TrainParams params = exp.train;
  params.class_weights = class_weights_from_json(read_text_file(p.weights()));
  gbdt::save_model(gbdt::train(balanced, params), p.model());
  write_text_file(p.thresholds(), thresholds_to_json(tau) + "\n");
}

void run_eval(const RunConfig& cfg, const Paths& p) {
  const auto model = gbdt::load_model(p.model());
  const auto tau = thresholds_from_json(read_text_file(p.thresholds()));
  const auto test = read_features(p.test_features());
  const auto probs = gbdt::predict_matrix(model, test);
  write_text_file(p.report(), eval_report_json(test, probs, tau, cfg.smooth_window, cfg.hash(),
                                               fnv1a64(gbdt::train_params_to_json(model.params)), hash_file(p.model()),
                                               hash_file(p.test_features())) +
                                  "\n");
  write_text_file(p.predictions(), probs_to_csv(test, probs, tau));
}

}  // namespace

std::vector<std::string> pipeline_plan(const RunConfig& cfg) {
  const Paths p{cfg.output_dir};
  std::vector<std::string> out;
  for (const auto& s : stage_specs(cfg, p)) {
    std::string line = s.name + ":";
    line += " in [";
    for (std::size_t i = 0; i < s.inputs.size(); ++i) line += (i ? " " : "") + s.inputs[i].filename().string();
    line += "] out [";
    for (std::size_t i = 0; i < s.outputs.size(); ++i) line += (i ? " " : "") + s.outputs[i].filename().string();
    line += "]";
    out.push_back(line);
  }
  return out;
}

PipelineResult run_pipeline(const RunConfig& cfg, const PipelineOptions& opt, std::ostream& log) {
  const Paths p{cfg.output_dir};
  const auto specs = stage_specs(cfg, p);
  PipelineResult result;
  result.report = p.report();
  if (opt.dry_run) {
    log << "config " << hex64(cfg.hash()) << "\n";
    for (const auto& line : pipeline_plan(cfg)) log << line << "\n";
    return result;
  }

  ExperimentConfig exp;
  try {
    exp = experiment_config(cfg);
  } catch (const Error& e) {
    throw StageError("config", e.code(), e.what());
  }

  fs::create_directories(p.root);
  json state = json::object();
  if (opt.resume && fs::exists(p.state())) {
    try {
      state = json::parse(read_text_file(p.state()));
    } catch (const json::exception&) {
      state = json::object();
    }
  }
  const std::string config_hash = hex64(cfg.hash());
  const bool same_config = state.value("config_hash", "") == config_hash;
  if (!same_config) state = json::object();
  state["config_hash"] = config_hash;

  for (const auto& s : specs) {
    const std::string stage_name = s.name == "ingest" && cfg.input == InputKind::Synthetic ? "synth" : s.name;
    try {
      const json inputs = hashes_of(s.inputs);
      if (opt.resume && state.contains("stages") && state["stages"].contains(s.name)) {
        const auto& rec = state["stages"][s.name];
        if (rec.value("inputs", json::object()) == inputs) {
          bool intact = true;
          for (const auto& out : s.outputs) {
            const auto key = out.filename().string();
            if (!fs::exists(out)) {
              intact = false;
              continue;
            }
            const auto recorded = rec["outputs"].value(key, "");
            if (recorded != hex64(hash_path(out)))
              throw Error(ErrorCode::HashMismatch, out.string() + " changed since it was produced", {out.string()});
          }
          if (intact) {
            log << "[" << s.name << "] up to date, skipped\n";
            result.skipped.push_back(s.name);
            continue;
          }
        }
      }
      log << "[" << s.name << "] running\n";
      if (s.name == "ingest") run_ingest(cfg, p);
      else if (s.name == "label") run_label(cfg, p);
      else if (s.name == "features") run_features(cfg, exp, p);
      else if (s.name == "balance") run_balance(cfg, p);
      else if (s.name == "train") run_train(cfg, exp, p);
      else if (s.name == "eval") run_eval(cfg, p);
      state["stages"][s.name] = {{"inputs", inputs}, {"outputs", hashes_of(s.outputs)}};
      write_text_file(p.state(), state.dump(2) + "\n");
      result.ran.push_back(s.name);
    } catch (const StageError&) {
      throw;
    } catch (const Error& e) {
      throw StageError(stage_name, e.code(), e.what());
    } catch (const std::exception& e) {
      throw StageError(stage_name, ErrorCode::IoError, e.what());
    }
  }
  return result;
}

}  // namespace lcp
