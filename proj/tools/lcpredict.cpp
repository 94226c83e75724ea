// lcpredict: lane-change intention prediction pipeline.
//
// Exit codes: 0 ok, 1 unexpected, 2 config/usage, 10 ingest, 11 synth,
// 12 label, 13 features, 14 balance, 15 train, 16 predict, 17 eval,
// 18 sweep, 20 hash mismatch on --resume.

#include <omp.h>

#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "lcp/eval.hpp"
#include "lcp/io.hpp"
#include "lcp/pipeline.hpp"
#include "lcp/random.hpp"
#include "lcp/synthgen.hpp"

namespace fs = std::filesystem;
using namespace lcp;

namespace {

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  int threads = 0;
  bool dry_run = false;
  bool resume = false;
  std::string data_dir = kDefaultDataDir.string();
  std::string output_dir;
};

RunConfig resolve_config(const Globals& g) {
  RunConfig cfg = g.config.empty() ? RunConfig{} : load_config(g.config);
  if (g.seed) cfg.seed = *g.seed;
  if (g.config.empty() || cfg.data_dir == kDefaultDataDir) cfg.data_dir = g.data_dir;
  if (!g.output_dir.empty()) cfg.output_dir = g.output_dir;
  derive_stage_seeds(cfg);
  return cfg;
}

std::vector<int> parse_ids(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(std::stoi(item));
  return out;
}

int fail(const std::string& stage, const std::exception& e) {
  std::cerr << "error [" << stage << "]: " << e.what() << "\n";
  if (const auto* le = dynamic_cast<const Error*>(&e)) {
    if (le->code() == ErrorCode::HashMismatch) return 20;
    if (le->code() == ErrorCode::InvalidConfig) return 2;
  }
  return stage_exit_code(stage);
}

void dry(const std::string& what) { std::cout << "dry run: " << what << "\n"; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Lane-change intention prediction"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config, "Run configuration (JSON)")->envname("LCPREDICT_CONFIG");
  app.add_option("--seed", g.seed, "Root seed")->envname("LCPREDICT_SEED");
  app.add_option("--threads", g.threads, "Worker threads (0 = runtime default)")->envname("LCPREDICT_THREADS");
  app.add_option("--data-dir", g.data_dir, "Bundled manifests and mappings")->envname("LCPREDICT_DATA_DIR");
  app.add_option("--output-dir", g.output_dir, "Pipeline output directory (overrides the config)")
      ->envname("LCPREDICT_OUTPUT_DIR");
  app.add_flag("--dry-run", g.dry_run, "Print the plan without writing files");
  app.add_flag("--resume", g.resume, "Skip pipeline stages whose recorded hashes match");

  // ingest
  auto* ingest = app.add_subcommand("ingest", "Convert raw dataset CSVs to the normalized format");
  std::string in_profile = "highd", in_meta, in_tracks_meta, in_tracks, in_out, in_mapping, in_geometry, in_raw_dir;
  ingest->add_option("--profile", in_profile, "highd | exid | custom");
  ingest->add_option("--meta", in_meta, "Recording meta CSV");
  ingest->add_option("--tracks-meta", in_tracks_meta, "Track meta CSV");
  ingest->add_option("--tracks", in_tracks, "Per-frame tracks CSV");
  ingest->add_option("--raw-dir", in_raw_dir, "Directory of <id>_recordingMeta/_tracksMeta/_tracks CSVs");
  ingest->add_option("--mapping", in_mapping, "Column mapping JSON (default: bundled for the profile)");
  ingest->add_option("--geometry", in_geometry, "Lane geometry JSON for profiles without marking columns");
  ingest->add_option("--out", in_out, "Output directory")->required();

  // synth
  auto* synth = app.add_subcommand("synth", "Generate synthetic recordings");
  std::string sy_spec, sy_out, sy_locations = "0,1,2,3,4,5";
  std::uint64_t sy_seed = 7;
  synth->add_option("--spec", sy_spec, "Scenario JSON (default: benchmark scenarios)");
  synth->add_option("--seed", sy_seed, "Generator seed");
  synth->add_option("--locations", sy_locations, "Benchmark location ids, comma separated");
  synth->add_option("--out", sy_out, "Output directory")->required();

  // label
  auto* label = app.add_subcommand("label", "Detect lane changes and emit labeled samples");
  std::string lb_in, lb_profile = "highd", lb_out;
  double lb_w = 1.0, lb_t = 1.0;
  int lb_stride = 5;
  label->add_option("--in", lb_in, "Normalized recordings directory")->required();
  label->add_option("--profile", lb_profile, "highd | exid");
  label->add_option("--W", lb_w, "History window, s");
  label->add_option("--T", lb_t, "Prediction horizon, s");
  label->add_option("--stride", lb_stride, "Anchor stride, frames");
  label->add_option("--out", lb_out, "samples.csv")->required();

  // features
  auto* feats = app.add_subcommand("features", "Extract feature vectors for labeled samples");
  std::string ft_samples, ft_data, ft_stats, ft_manifest, ft_out, ft_profile = "highd", ft_format, ft_train_loc,
                                                                     ft_locations;
  bool ft_fit = false;
  int ft_stride = 5;
  feats->add_option("--samples", ft_samples, "samples.csv")->required();
  feats->add_option("--data", ft_data, "Normalized recordings directory")->required();
  feats->add_option("--stats", ft_stats, "Neighbor stats JSON (fitted and written when absent or --fit-stats)")
      ->required();
  feats->add_flag("--fit-stats", ft_fit, "Fit stats on the training locations and write them");
  feats->add_option("--train-locations", ft_train_loc, "Locations used to fit stats (default: profile split)");
  feats->add_option("--locations", ft_locations, "Only emit samples from these locations");
  feats->add_option("--manifest", ft_manifest, "Feature manifest (default: bundled for the profile)");
  feats->add_option("--profile", ft_profile, "highd | exid");
  feats->add_option("--stride", ft_stride, "Anchor stride used for the samples");
  feats->add_option("--format", ft_format, "bin | csv (default: by extension)");
  feats->add_option("--out", ft_out, "features.bin")->required();

  // balance
  auto* bal = app.add_subcommand("balance", "SMOTE-Tomek resampling and class weights");
  std::string bl_in, bl_out, bl_weights, bl_ratio = "29:1:1";
  BalanceConfig bl_cfg;
  bool bl_no_tomek = false;
  bal->add_option("--in", bl_in, "features.bin")->required();
  bal->add_option("--ratio", bl_ratio, "Target ratio NLC:LLC:RLC");
  bal->add_option("--k", bl_cfg.smote_k, "SMOTE neighbors");
  bal->add_option("--alpha", bl_cfg.alpha, "Class-weight exponent");
  bal->add_option("--seed", bl_cfg.seed, "Sampling seed");
  bal->add_flag("--no-tomek", bl_no_tomek, "Skip Tomek-link cleaning");
  bal->add_option("--out", bl_out, "balanced.bin")->required();
  bal->add_option("--weights", bl_weights, "weights.json")->required();

  // train
  auto* trn = app.add_subcommand("train", "Train the boosted-tree ensemble");
  std::string tr_in, tr_weights, tr_params, tr_model, tr_monotone = "manifest", tr_manifest, tr_profile = "highd";
  std::optional<std::uint64_t> tr_seed;
  trn->add_option("--in", tr_in, "balanced.bin")->required();
  trn->add_option("--weights", tr_weights, "weights.json");
  trn->add_option("--params", tr_params, "Training parameters JSON");
  trn->add_option("--monotone", tr_monotone, "manifest | none | <monotone JSON file>");
  trn->add_option("--manifest", tr_manifest, "Manifest used for --monotone manifest");
  trn->add_option("--profile", tr_profile, "highd | exid");
  trn->add_option("--seed", tr_seed, "Training seed");
  trn->add_option("--model", tr_model, "model.json")->required();

  // predict
  auto* pred = app.add_subcommand("predict", "Class probabilities for a feature file");
  std::string pr_model, pr_in, pr_out, pr_thresholds;
  pred->add_option("--model", pr_model, "model.json")->required();
  pred->add_option("--in", pr_in, "features.bin")->required();
  pred->add_option("--thresholds", pr_thresholds, "thresholds.json");
  pred->add_option("--out", pr_out, "probs.csv")->required();

  // eval
  auto* evl = app.add_subcommand("eval", "Evaluate a model on a test feature file");
  std::string ev_model, ev_test, ev_report, ev_thresholds;
  int ev_window = 5;
  evl->add_option("--model", ev_model, "model.json")->required();
  evl->add_option("--test", ev_test, "features.bin")->required();
  evl->add_option("--thresholds", ev_thresholds, "thresholds.json");
  evl->add_option("--smooth-window", ev_window, "Smoothing window, frames");
  evl->add_option("--report", ev_report, "report.json")->required();

  // sweep
  auto* swp = app.add_subcommand("sweep", "Train and evaluate over a W x T grid");
  std::string sw_out;
  swp->add_option("--out", sw_out, "sweep_grid.csv")->required();

  // pipeline
  auto* pipe = app.add_subcommand("pipeline", "Run every stage from one configuration");

  CLI11_PARSE(app, argc, argv);
  if (g.threads > 0) omp_set_num_threads(g.threads);

  if (*ingest) {
    try {
      const auto profile = parse_profile(in_profile);
      const ColumnMapping mapping = in_mapping.empty() ? default_column_mapping(profile, g.data_dir)
                                                       : load_column_mapping(in_mapping);
      if (g.dry_run) return dry("ingest into " + in_out), 0;
      std::vector<Recording> recs;
      if (!in_raw_dir.empty()) {
        recs = load_raw_dir(in_raw_dir, mapping);
      } else {
        if (in_meta.empty() || in_tracks_meta.empty() || in_tracks.empty())
          throw Error(ErrorCode::InvalidConfig, "need --meta, --tracks-meta and --tracks, or --raw-dir");
        std::optional<fs::path> geom;
        if (!in_geometry.empty()) geom = in_geometry;
        recs.push_back(load_recording(in_meta, in_tracks_meta, in_tracks, mapping, geom));
      }
      fs::create_directories(in_out);
      for (const auto& r : recs) write_normalized(r, in_out);
      std::cout << "wrote " << recs.size() << " recording(s) to " << in_out << "\n";
    } catch (const std::exception& e) {
      return fail("ingest", e);
    }
    return 0;
  }

  if (*synth) {
    try {
      const std::uint64_t seed = g.seed.value_or(sy_seed);
      if (g.dry_run) return dry("synth into " + sy_out), 0;
      std::vector<SyntheticRecording> recs;
      if (!sy_spec.empty()) recs.push_back(generate_recording(scenario_from_json(read_text_file(sy_spec)), seed));
      else recs = benchmark_dataset(parse_ids(sy_locations), seed, BenchmarkOptions{});
      fs::create_directories(sy_out);
      std::vector<LaneChangeEvent> truth;
      for (const auto& r : recs) {
        write_normalized(r.recording, sy_out);
        write_truth_csv(r.truth, fs::path(sy_out) / ("truth_" + std::to_string(r.recording.recording_id) + ".csv"));
      }
      std::cout << "wrote " << recs.size() << " recording(s) to " << sy_out << "\n";
    } catch (const std::exception& e) {
      return fail("synth", e);
    }
    return 0;
  }

  if (*label) {
    try {
      const auto det = detection_params_for(parse_profile(lb_profile));
      if (g.dry_run) return dry("label " + lb_in + " -> " + lb_out), 0;
      std::vector<LabeledSample> samples;
      for (const auto& rec : load_normalized_dir(lb_in)) {
        std::vector<std::vector<LaneChangeEvent>> events;
        for (const auto& t : rec.tracks) events.push_back(detect_events(t, rec.geometry, det, rec.f_s));
        auto s = build_samples(rec, events, SamplingConfig{rec.f_s, lb_w, lb_t, lb_stride});
        samples.insert(samples.end(), s.begin(), s.end());
      }
      write_samples_csv(samples, lb_out);
      std::cout << "wrote " << samples.size() << " samples to " << lb_out << "\n";
    } catch (const std::exception& e) {
      return fail("label", e);
    }
    return 0;
  }

  if (*feats) {
    try {
      const auto profile = parse_profile(ft_profile);
      const auto manifest = ft_manifest.empty() ? default_manifest(profile, g.data_dir) : load_manifest(ft_manifest);
      const auto det = detection_params_for(profile);
      if (g.dry_run) return dry("features " + ft_samples + " -> " + ft_out), 0;
      const auto recs = load_normalized_dir(ft_data);
      if (recs.empty()) throw Error(ErrorCode::EmptyPartition, "no recordings in " + ft_data);
      auto samples = read_samples_csv(ft_samples, recs);
      if (samples.empty()) throw Error(ErrorCode::EmptyPartition, "no samples in " + ft_samples);
      const double w = samples.front().history_window, t = samples.front().horizon;

      NeighborStats stats;
      if (ft_fit || !fs::exists(ft_stats)) {
        const auto train_loc = ft_train_loc.empty() ? default_split(profile).train_locations : parse_ids(ft_train_loc);
        std::vector<std::vector<std::vector<LaneChangeEvent>>> events(recs.size());
        for (std::size_t r = 0; r < recs.size(); ++r)
          for (const auto& tr : recs[r].tracks) events[r].push_back(detect_events(tr, recs[r].geometry, det, recs[r].f_s));
        std::vector<LabeledSample> train_s;
        for (const auto& s : samples)
          if (std::find(train_loc.begin(), train_loc.end(), s.location_id) != train_loc.end()) train_s.push_back(s);
        stats.gap = compute_gap_stats(recs, events, train_loc);
        stats.time_gap = compute_time_gap_stats(recs, train_s);
        write_text_file(ft_stats, neighbor_stats_to_json(stats) + "\n");
        std::cout << "fitted stats on locations " << ft_train_loc << " -> " << ft_stats << "\n";
      } else {
        stats = neighbor_stats_from_json(read_text_file(ft_stats));
      }
      if (!ft_locations.empty()) {
        const auto keep = parse_ids(ft_locations);
        std::erase_if(samples, [&](const LabeledSample& s) {
          return std::find(keep.begin(), keep.end(), s.location_id) == keep.end();
        });
      }
      const FeatureExtractor ex(manifest, stats, SamplingConfig{recs.front().f_s, w, t, ft_stride}, det);
      const auto m = build_feature_matrix(recs, samples, ex);
      if (ft_format == "csv") write_features_csv(m, ft_out);
      else if (ft_format == "bin") write_features_bin(m, ft_out);
      else write_features(m, ft_out);
      std::cout << "wrote " << m.rows << " x " << m.cols << " features to " << ft_out << "\n";
    } catch (const std::exception& e) {
      return fail("features", e);
    }
    return 0;
  }

  if (*bal) {
    try {
      bl_cfg.target_ratio = parse_ratio(bl_ratio);
      bl_cfg.tomek = !bl_no_tomek;
      if (g.seed) bl_cfg.seed = *g.seed;
      bl_cfg.validate();
      if (g.dry_run) return dry("balance " + bl_in + " -> " + bl_out), 0;
      const auto res = balance(read_features(bl_in), bl_cfg);
      write_features(res.data, bl_out);
      write_text_file(bl_weights, class_weights_to_json(res.weights, res.after, bl_cfg.alpha) + "\n");
      std::cout << "counts before " << res.before[0] << ":" << res.before[1] << ":" << res.before[2] << ", after "
                << res.after[0] << ":" << res.after[1] << ":" << res.after[2] << " (" << res.synthetic
                << " synthetic, " << res.tomek_removed << " Tomek removals)\n";
    } catch (const std::exception& e) {
      return fail("balance", e);
    }
    return 0;
  }

  if (*trn) {
    try {
      gbdt::TrainParams params;
      if (!tr_params.empty()) params = gbdt::train_params_from_json(read_text_file(tr_params));
      if (tr_seed) params.seed = *tr_seed;
      else if (g.seed) params.seed = *g.seed;
      if (!tr_weights.empty()) params.class_weights = class_weights_from_json(read_text_file(tr_weights));
      if (tr_monotone == "manifest") {
        const auto manifest =
            tr_manifest.empty() ? default_manifest(parse_profile(tr_profile), g.data_dir) : load_manifest(tr_manifest);
        params.monotone = gbdt::monotone_from_manifest(manifest);
      } else if (tr_monotone == "none") {
        params.monotone = {};
      } else {
        params.monotone = gbdt::monotone_from_json(read_text_file(tr_monotone));
      }
      params.validate();
      if (g.dry_run) return dry("train " + tr_in + " -> " + tr_model), 0;
      const auto model = gbdt::train(read_features(tr_in), params);
      gbdt::save_model(model, tr_model);
      std::cout << "trained " << model.trees.size() << " trees, final loss " << model.train_loss.back() << "\n";
    } catch (const std::exception& e) {
      return fail("train", e);
    }
    return 0;
  }

  if (*pred) {
    try {
      if (g.dry_run) return dry("predict " + pr_in + " -> " + pr_out), 0;
      const auto model = gbdt::load_model(pr_model);
      const auto data = read_features(pr_in);
      const ThresholdSet tau = pr_thresholds.empty() ? ThresholdSet{} : thresholds_from_json(read_text_file(pr_thresholds));
      write_text_file(pr_out, probs_to_csv(data, gbdt::predict_matrix(model, data), tau));
    } catch (const std::exception& e) {
      return fail("predict", e);
    }
    return 0;
  }

  if (*evl) {
    try {
      if (g.dry_run) return dry("eval " + ev_test + " -> " + ev_report), 0;
      const auto model = gbdt::load_model(ev_model);
      const auto test = read_features(ev_test);
      const ThresholdSet tau = ev_thresholds.empty() ? ThresholdSet{} : thresholds_from_json(read_text_file(ev_thresholds));
      const auto probs = gbdt::predict_matrix(model, test);
      const std::uint64_t cfg_hash = g.config.empty() ? 0 : resolve_config(g).hash();
      const auto report = eval_report_json(test, probs, tau, ev_window, cfg_hash,
                                           fnv1a64(gbdt::train_params_to_json(model.params)), hash_file(ev_model),
                                           hash_file(ev_test));
      write_text_file(ev_report, report + "\n");
      const auto j = nlohmann::json::parse(report);
      std::cout << "accuracy " << j["accuracy"].get<double>() << ", macro F1 " << j["macro_f1"].get<double>() << "\n";
    } catch (const std::exception& e) {
      return fail("eval", e);
    }
    return 0;
  }

  if (*swp) {
    try {
      const auto cfg = resolve_config(g);
      if (g.dry_run) {
        std::cout << "config " << hex64(cfg.hash()) << ": " << cfg.sweep_windows.size() << " W x "
                  << cfg.sweep_horizons.size() << " T cells -> " << sw_out << "\n";
        return 0;
      }
      const auto exp = experiment_config(cfg);
      const auto recs = load_inputs(cfg);
      const auto res = run_sweep(recs, cfg.sweep_windows, cfg.sweep_horizons, exp);
      write_text_file(sw_out, sweep_to_csv(res));
      for (const auto& [t, w] : res.best_window) std::cout << "T = " << t << " s: best W = " << w << " s\n";
    } catch (const std::exception& e) {
      return fail("sweep", e);
    }
    return 0;
  }

  if (*pipe) {
    RunConfig cfg;
    try {
      cfg = resolve_config(g);
    } catch (const std::exception& e) {
      std::cerr << "error [config]: " << e.what() << "\n";
      return 2;
    }
    try {
      const auto res = run_pipeline(cfg, PipelineOptions{g.resume, g.dry_run}, std::cout);
      if (!g.dry_run) std::cout << "report: " << res.report.string() << "\n";
    } catch (const StageError& e) {
      std::cerr << "error [" << e.stage() << "]: " << e.what() << "\n";
      return e.exit_code();
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << "\n";
      return 1;
    }
    return 0;
  }
  return 0;
}
