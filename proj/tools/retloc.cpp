#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "config.hpp"
#include "retloc/errors.hpp"
#include "retloc/experiments.hpp"
#include "retloc/io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace retloc::cli {
namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitAssert = 4;

struct AssertionFailed : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Globals {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out = "out";
  std::optional<double> laps;
  std::optional<std::string> noise_profile;
  std::optional<double> disturbance_amp;
  std::optional<double> disturbance_period;
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_field(const std::string& s, const std::string& path, std::size_t line) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used == s.size()) return v;
  } catch (const std::exception&) {
  }
  throw DataError(path + ":" + std::to_string(line) + ": bad number '" + s + "'");
}

// Rows of a numeric CSV with the given header; every row must have as many
// fields as the header.
std::vector<std::vector<double>> read_csv(const std::string& path, const std::string& header) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line) || line != header) throw DataError(path + ": expected header '" + header + "'");
  const auto columns = static_cast<std::size_t>(std::count(header.begin(), header.end(), ',') + 1);
  std::vector<std::vector<double>> rows;
  for (std::size_t n = 2; std::getline(in, line); ++n) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    for (std::string field; std::getline(ss, field, ',');) row.push_back(parse_field(field, path, n));
    if (row.size() != columns) throw DataError(path + ":" + std::to_string(n) + ": wrong field count");
    rows.push_back(std::move(row));
  }
  return rows;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
  return out;
}

constexpr const char* kPoseHeader = "frame_id,x,y,psi";
constexpr const char* kOdometryHeader = "frame_id,v_meas,gamma_meas,dt,v_lo,v_hi,g_lo,g_hi";
constexpr const char* kEstimateHeader = "frame_id,t,est_x,est_y,est_psi,n_hyps,n_inliers,dead_reckoning";

void save_frames(const std::vector<LabeledFrame>& frames, const fs::path& feats, const fs::path& poses) {
  std::vector<FeatureSet> sets;
  sets.reserve(frames.size());
  auto out = open_out(poses);
  out << kPoseHeader << '\n';
  for (const LabeledFrame& f : frames) {
    sets.push_back(f.features);
    out << f.features.frame_id << ',' << fmt(f.pose.x()) << ',' << fmt(f.pose.y()) << ',' << fmt(f.pose.psi())
        << '\n';
  }
  save_feature_log(sets, feats.string());
}

std::vector<LabeledFrame> load_frames(const std::string& feats, const std::string& poses) {
  std::vector<FeatureSet> sets = load_feature_log(feats);
  const auto rows = read_csv(poses, kPoseHeader);
  if (rows.size() != sets.size()) throw DataError(poses + ": pose count does not match the feature log");
  std::vector<LabeledFrame> frames;
  frames.reserve(sets.size());
  for (std::size_t i = 0; i < sets.size(); ++i) {
    if (rows[i][0] != sets[i].frame_id) throw DataError(poses + ": frame ids do not match the feature log");
    frames.push_back({std::move(sets[i]), PlanarPose(rows[i][1], rows[i][2], rows[i][3])});
  }
  return frames;
}

void save_odometry(const EpisodeLog& log, const fs::path& path) {
  auto out = open_out(path);
  out << kOdometryHeader << '\n';
  for (const EpisodeFrame& f : log.frames) {
    const OdometryInput& u = f.odometry;
    out << f.index << ',' << fmt(u.v_meas) << ',' << fmt(u.gamma_meas) << ',' << fmt(u.dt) << ',' << fmt(u.v_lo)
        << ',' << fmt(u.v_hi) << ',' << fmt(u.g_lo) << ',' << fmt(u.g_hi) << '\n';
  }
}

GmmParams load_gmm(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  try {
    return gmm_from_json(json::parse(in));
  } catch (const json::exception& e) {
    throw DataError(path + ": " + e.what());
  }
}

class Runner {
 public:
  Runner(const Globals& g, std::string command) : globals_(g), command_(std::move(command)) {
    config_ = g.config_path.empty() ? parse_config(json::object()) : load_config(g.config_path);
    if (g.noise_profile) {
      config_.noise_profile_name = *g.noise_profile;
      config_.noise = noise_profile(*g.noise_profile);
    }
    if (g.laps) {
      if (!(*g.laps > 0.0)) throw ConfigError("--laps must be positive");
      config_.mapping.laps = *g.laps;
      config_.episode.laps = *g.laps;
    }
    if (g.disturbance_amp) {
      config_.episode.disturbance.amplitude = *g.disturbance_amp;
      config_.augmentation.disturbance.amplitude = *g.disturbance_amp;
    }
    if (g.disturbance_period) {
      if (!(*g.disturbance_period > 0.0)) throw ConfigError("--disturbance-period must be positive");
      config_.episode.disturbance.period = *g.disturbance_period;
      config_.augmentation.disturbance.period = *g.disturbance_period;
    }
    apply_seed(config_, g.seed.value_or(config_.seed));
    out_ = g.out;
    fs::create_directories(out_);
  }

  const PipelineConfig& config() const { return config_; }
  PipelineConfig& config() { return config_; }
  fs::path out(const std::string& name) const { return out_ / name; }

  World world() const { return World(config_.world); }

  void write_run_json(const json& extra = json::object()) const {
    json run = {{"command", command_}, {"seed", config_.seed}, {"config", to_json(config_)}};
    run.update(extra);
    open_out(out("run.json")) << run.dump(2) << '\n';
  }

 private:
  Globals globals_;
  std::string command_;
  PipelineConfig config_;
  fs::path out_;
};

void simulate_mapping(Runner& r) {
  const PipelineConfig& c = r.config();
  const World world = r.world();
  const MappingRun run = run_mapping(world, c.mapping, c.noise, CameraIntrinsics{}, default_mounting(), c.seed);
  save_frames(run.mapping, r.out("mapping.feats"), r.out("mapping_poses.csv"));
  save_frames(run.training, r.out("training.feats"), r.out("training_poses.csv"));
  r.write_run_json({{"mapping_frames", run.mapping.size()}, {"training_frames", run.training.size()}});
  std::cout << "mapping frames " << run.mapping.size() << ", training frames " << run.training.size() << '\n';
}

void build_vocab(Runner& r, const std::string& frames) {
  std::vector<LabeledFrame> labeled;
  for (FeatureSet& f : load_feature_log(frames)) labeled.push_back({std::move(f), PlanarPose()});
  const KMeansResult result = train_vocabulary(labeled, r.config().kmeans);
  save_vocabulary(result.vocabulary, r.out("vocab.bin").string());
  r.write_run_json({{"iterations", result.iterations}, {"converged", result.converged}});
  std::cout << "vocabulary of " << result.vocabulary.k() << " words after " << result.iterations
            << " iterations\n";
}

void build_map_cmd(Runner& r, const std::string& frames, const std::string& poses, const std::string& vocab) {
  const PipelineConfig& c = r.config();
  const auto labeled = load_frames(frames, poses);
  const MapMetadata meta{CameraIntrinsics{}, default_mounting(), c.seed};
  const MapDatabase db = build_map(labeled, load_vocabulary(vocab), meta, c.knn_k);
  save(db, r.out("map.bin").string());
  r.write_run_json({{"entries", db.size()}});
  std::cout << "map with " << db.size() << " entries\n";
}

void train_gmm(Runner& r, const std::string& map, const std::string& frames, const std::string& poses) {
  const PipelineConfig& c = r.config();
  const MapDatabase db = load_map(map);
  const GmmParams params = train_from_dataset(load_frames(frames, poses), db, c.knn_k, c.hypothesis);
  open_out(r.out("gmm.json")) << gmm_to_json(params).dump(2) << '\n';
  r.write_run_json();
  std::cout << "measurement model written to " << r.out("gmm.json").string() << '\n';
}

void simulate_episode(Runner& r, const std::string& map, const std::string& gmm, bool closed, bool record) {
  PipelineConfig& c = r.config();
  const World world = r.world();
  const MapDatabase db = load_map(map);
  const GmmParams params = load_gmm(gmm);
  c.episode.record_features = record;
  const EpisodeLog log = closed ? run_closed_loop(world, db, params, c.noise, c.episode)
                                : run_open_loop(world, db, params, c.noise, c.episode);
  save_episode_csv(log, r.out("episode.csv").string());
  if (record) {
    std::vector<FeatureSet> sets;
    for (const EpisodeFrame& f : log.frames) sets.push_back(*f.features);
    save_feature_log(sets, r.out("queries.feats").string());
    save_odometry(log, r.out("odometry.csv"));
  }
  const std::vector<double> thresholds{0.06, 0.10};
  const MetricsReport m = eval_metrics(log, thresholds);
  r.write_run_json({{"frames", log.frames.size()}, {"diverged", log.diverged}, {"rmse_position", m.rmse_position}});
  std::cout << (closed ? "closed" : "open") << "-loop: " << m.frames << " frames, position RMSE "
            << m.rmse_position << " m, heading RMSE " << m.rmse_heading << " rad"
            << (log.diverged ? ", diverged" : "") << '\n';
}

void simulate_augmentation(Runner& r, const std::string& map, const std::string& gmm) {
  const PipelineConfig& c = r.config();
  const World world = r.world();
  const MapDatabase db = load_map(map);
  AugmentationConfig ac = c.augmentation;
  // The disturbance only shapes the recorded run; the episodes drive undisturbed.
  ac.episode.disturbance = {};
  const AugmentationResult res = run_augmentation_experiment(world, db, load_gmm(gmm), c.noise, ac);
  save_episode_csv(res.before, r.out("before.csv").string());
  save_episode_csv(res.after, r.out("after.csv").string());
  MapDatabase augmented = augment(db, build_entries(res.recorded, db));
  save(augmented, r.out("augmented_map.bin").string());
  const std::vector<double> none;
  const double before = eval_metrics(res.before, none).rmse_position;
  const double after = eval_metrics(res.after, none).rmse_position;
  r.write_run_json({{"baseline_entries", res.baseline_entries},
                    {"augmented_entries", res.augmented_entries},
                    {"rmse_before", before},
                    {"rmse_after", after}});
  std::cout << "map " << res.baseline_entries << " -> " << res.augmented_entries << " entries, position RMSE "
            << before << " -> " << after << " m\n";
}

void localize(Runner& r, const std::string& map, const std::string& gmm, const std::string& frames,
              const std::string& odometry) {
  const PipelineConfig& c = r.config();
  const MapDatabase db = load_map(map);
  LocalizerConfig lc = c.episode.localizer;
  lc.seed = localizer_seed(c.seed);
  Localizer localizer(db, load_gmm(gmm), lc);
  const std::vector<FeatureSet> sets = load_feature_log(frames);
  const auto rows = read_csv(odometry, kOdometryHeader);
  if (rows.size() != sets.size()) throw DataError(odometry + ": row count does not match the feature log");

  auto out = open_out(r.out("estimates.csv"));
  out << kEstimateHeader << '\n';
  for (std::size_t i = 0; i < sets.size(); ++i) {
    const auto& u = rows[i];
    if (u[0] != sets[i].frame_id) throw DataError(odometry + ": frame ids do not match the feature log");
    const OdometryInput odom{u[1], u[2], u[3], u[4], u[5], u[6], u[7]};
    const LocalizationStep step = localizer.localize_frame(sets[i], odom);
    const PlanarPose& e = step.estimate;
    out << sets[i].frame_id << ',' << fmt(sets[i].timestamp) << ',' << fmt(e.x()) << ',' << fmt(e.y()) << ','
        << fmt(e.psi()) << ',' << step.diagnostics.hypothesis_count << ',' << step.diagnostics.inlier_count << ','
        << (step.diagnostics.dead_reckoning ? 1 : 0) << '\n';
  }
  r.write_run_json({{"frames", sets.size()}});
  std::cout << "localized " << sets.size() << " frames\n";
}

std::pair<double, double> parse_requirement(const std::string& s) {
  const auto colon = s.find(':');
  if (colon == std::string::npos) throw ConfigError("--require expects THRESHOLD:FRACTION, got '" + s + "'");
  try {
    return {std::stod(s.substr(0, colon)), std::stod(s.substr(colon + 1))};
  } catch (const std::exception&) {
    throw ConfigError("--require expects THRESHOLD:FRACTION, got '" + s + "'");
  }
}

void eval(Runner& r, const std::string& path, std::vector<double> thresholds, bool assert_mode,
          const std::vector<std::string>& requirements) {
  std::vector<std::pair<double, double>> required;
  for (const std::string& s : requirements) required.push_back(parse_requirement(s));
  if (assert_mode && required.empty()) required = {{0.10, 1.0}, {0.06, 0.85}};
  for (const auto& [t, f] : required) thresholds.push_back(t);
  std::sort(thresholds.begin(), thresholds.end());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());

  const EpisodeLog log = load_episode_csv(path);
  const MetricsReport m = eval_metrics(log, thresholds);
  json cdf = json::array();
  for (const auto& [t, f] : m.error_cdf) cdf.push_back({{"threshold", t}, {"fraction", f}});
  const json report = {{"frames", m.frames},
                       {"rmse_position", m.rmse_position},
                       {"rmse_heading", m.rmse_heading},
                       {"max_error", m.max_error},
                       {"error_cdf", cdf},
                       {"mean_step_ms", m.mean_step_ms},
                       {"p99_step_ms", m.p99_step_ms}};
  open_out(r.out("metrics.json")) << report.dump(2) << '\n';
  std::cout << report.dump(2) << '\n';

  std::vector<std::string> failures;
  for (const auto& [t, f] : required) {
    for (const auto& [ct, cf] : m.error_cdf) {
      if (ct == t && cf < f) {
        failures.push_back(std::to_string(cf * 100.0) + "% of frames within " + std::to_string(t) + " m, need " +
                           std::to_string(f * 100.0) + "%");
      }
    }
  }
  if (!failures.empty()) {
    std::string msg = "assertion failed";
    for (const std::string& s : failures) msg += "; " + s;
    throw AssertionFailed(msg);
  }
}

}  // namespace
}  // namespace retloc::cli

int main(int argc, char** argv) {
  using namespace retloc;
  using namespace retloc::cli;

  CLI::App app{"Image-retrieval localization engine and closed-loop simulator"};
  app.require_subcommand(1);
  Globals g;
  std::uint64_t seed = 0;
  double laps = 0.0;
  std::string profile;
  double amp = 0.0;
  double period = 0.0;
  app.add_option("--config", g.config_path, "JSON configuration file")->check(CLI::ExistingFile);
  auto* seed_opt = app.add_option("--seed", seed, "Seed for every random stream of the run");
  app.add_option("--out", g.out, "Output directory")->capture_default_str();
  auto* laps_opt = app.add_option("--laps", laps, "Laps driven by mapping runs and episodes");
  auto* profile_opt = app.add_option("--noise-profile", profile, "zero, low, moderate or high");
  auto* amp_opt = app.add_option("--disturbance-amp", amp, "Steering disturbance amplitude (rad)");
  auto* period_opt = app.add_option("--disturbance-period", period, "Steering disturbance period (s)");

  std::string map, gmm, frames, poses, vocab, odometry, log;
  bool record = false;
  bool assert_mode = false;
  std::vector<double> thresholds{0.06, 0.10};
  std::vector<std::string> requirements;

  auto* sim = app.add_subcommand("simulate", "Run the synthetic world");
  sim->require_subcommand(1);
  auto* sim_mapping = sim->add_subcommand("mapping", "Record mapping and training frames along the track");
  auto* sim_open = sim->add_subcommand("open-loop", "Episode steered from ground truth");
  auto* sim_closed = sim->add_subcommand("closed-loop", "Episode steered from the estimates");
  auto* sim_aug = sim->add_subcommand("augmentation", "Closed loop before and after adding a disturbed run to the map");
  for (auto* s : {sim_open, sim_closed, sim_aug}) {
    s->add_option("--map", map, "Map database")->required()->check(CLI::ExistingFile);
    s->add_option("--gmm", gmm, "Measurement model (JSON)")->required()->check(CLI::ExistingFile);
  }
  for (auto* s : {sim_open, sim_closed}) {
    s->add_flag("--record", record, "Also write the query feature log and odometry");
  }

  auto* vocab_cmd = app.add_subcommand("build-vocab", "Train the visual vocabulary");
  vocab_cmd->add_option("--frames", frames, "Feature log")->required()->check(CLI::ExistingFile);

  auto* map_cmd = app.add_subcommand("build-map", "Build the map database");
  map_cmd->add_option("--frames", frames, "Feature log with 3D points")->required()->check(CLI::ExistingFile);
  map_cmd->add_option("--poses", poses, "Pose CSV")->required()->check(CLI::ExistingFile);
  map_cmd->add_option("--vocab", vocab, "Vocabulary file")->required()->check(CLI::ExistingFile);

  auto* gmm_cmd = app.add_subcommand("train-gmm", "Fit the measurement model on held-out frames");
  gmm_cmd->add_option("--map", map, "Map database")->required()->check(CLI::ExistingFile);
  gmm_cmd->add_option("--frames", frames, "Feature log with 3D points")->required()->check(CLI::ExistingFile);
  gmm_cmd->add_option("--poses", poses, "Pose CSV")->required()->check(CLI::ExistingFile);

  auto* loc_cmd = app.add_subcommand("localize", "Replay a feature log through the localizer");
  loc_cmd->add_option("--map", map, "Map database")->required()->check(CLI::ExistingFile);
  loc_cmd->add_option("--gmm", gmm, "Measurement model (JSON)")->required()->check(CLI::ExistingFile);
  loc_cmd->add_option("--frames", frames, "Query feature log")->required()->check(CLI::ExistingFile);
  loc_cmd->add_option("--odometry", odometry, "Odometry CSV")->required()->check(CLI::ExistingFile);

  auto* eval_cmd = app.add_subcommand("eval", "Error metrics of an episode CSV");
  eval_cmd->add_option("--log", log, "Episode CSV")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--threshold", thresholds, "Error thresholds (m) for the CDF")->capture_default_str();
  eval_cmd->add_flag("--assert", assert_mode, "Exit with status 4 unless the requirements hold");
  eval_cmd->add_option("--require", requirements, "THRESHOLD:FRACTION, repeatable");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }
  if (*seed_opt) g.seed = seed;
  if (*laps_opt) g.laps = laps;
  if (*profile_opt) g.noise_profile = profile;
  if (*amp_opt) g.disturbance_amp = amp;
  if (*period_opt) g.disturbance_period = period;

  try {
    std::string name = app.get_subcommands().front()->get_name();
    if (name == "simulate") name += " " + sim->get_subcommands().front()->get_name();
    Runner r(g, name);
    if (*sim_mapping) {
      simulate_mapping(r);
    } else if (*sim_open || *sim_closed) {
      simulate_episode(r, map, gmm, sim_closed->parsed(), record);
    } else if (*sim_aug) {
      simulate_augmentation(r, map, gmm);
    } else if (*vocab_cmd) {
      build_vocab(r, frames);
    } else if (*map_cmd) {
      build_map_cmd(r, frames, poses, vocab);
    } else if (*gmm_cmd) {
      train_gmm(r, map, frames, poses);
    } else if (*loc_cmd) {
      localize(r, map, gmm, frames, odometry);
    } else if (*eval_cmd) {
      eval(r, log, thresholds, assert_mode, requirements);
    }
  } catch (const AssertionFailed& e) {
    std::cerr << "retloc: " << e.what() << '\n';
    return kExitAssert;
  } catch (const ConfigError& e) {
    std::cerr << "retloc: config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const DataError& e) {
    std::cerr << "retloc: data error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "retloc: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
