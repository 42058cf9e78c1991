#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "retloc/fusion.hpp"
#include "retloc/mapdb.hpp"
#include "retloc/pipeline.hpp"
#include "retloc/sim.hpp"

namespace retloc {

struct EpisodeFrame {
  std::uint32_t index = 0;
  double t = 0.0;
  PlanarPose ground_truth;
  PlanarPose estimate;
  /// Odometry fed to the filter at this frame (motion since the last one).
  OdometryInput odometry;
  ControlCommand command;
  std::size_t n_hyps = 0;
  std::size_t n_inliers = 0;
  bool dead_reckoning = false;
  double step_ms = 0.0;
  /// Present when the episode was configured to record observations.
  std::optional<FeatureSet> features;
};

struct EpisodeLog {
  std::vector<EpisodeFrame> frames;
  /// The vehicle left the world bounds and the run was cut short.
  bool diverged = false;
  std::uint64_t seed = 0;
};

/// Equality of everything except the measured step times.
bool same_outcome(const EpisodeLog& a, const EpisodeLog& b);

struct MappingConfig {
  double laps = 2.0;
  double spacing = 0.1;
  /// Fraction of frames held out for training the measurement model.
  double training_ratio = 0.15;
};

struct MappingRun {
  std::vector<LabeledFrame> mapping;
  std::vector<LabeledFrame> training;
};

/// Drives the centerline and records a frame with depth every `spacing`
/// meters of arc length: frame i sits at i * spacing (mod track length), for
/// ceil(laps * length / spacing) frames. Training frames are interleaved:
/// frame i is held out when floor((i + 1) r) > floor(i r).
MappingRun run_mapping(const World& world, const MappingConfig& config, const SensorNoise& noise,
                       const CameraIntrinsics& intr, const MountingTransform& mounting, std::uint64_t seed);

/// Sinusoidal offset added to the steering command.
struct Disturbance {
  double amplitude = 0.0;
  double period = 4.0;

  double at(double t) const;
};

struct EpisodeConfig {
  double laps = 2.0;
  double v_ref = 1.0;
  double dt = 0.1;
  PidGains gains;
  VehicleParams vehicle;
  Disturbance disturbance;
  LocalizerConfig localizer;
  /// Lower bounds on the odometry noise half-widths the filter assumes.
  double filter_min_v_noise = 0.0;
  double filter_min_g_noise = 0.0;
  bool record_features = false;
  std::uint64_t seed = 0;
};

/// Symmetric noise bounds covering the sensor's noise and bias, as assumed
/// by the filter.
std::pair<double, double> filter_noise_bounds(const SensorNoise& noise, const EpisodeConfig& config);

/// Seed of the localizer inside an episode run with `episode_seed`; replaying
/// the episode's frames with it reproduces the estimates.
std::uint64_t localizer_seed(std::uint64_t episode_seed);

/// The controller tracks the centerline from ground truth; localization runs
/// alongside without affecting the vehicle.
EpisodeLog run_open_loop(const World& world, const MapDatabase& db, const GmmParams& params,
                         const SensorNoise& noise, const EpisodeConfig& config);

/// The controller tracks the centerline from the estimated pose.
EpisodeLog run_closed_loop(const World& world, const MapDatabase& db, const GmmParams& params,
                           const SensorNoise& noise, const EpisodeConfig& config);

/// Ground-truth-tracked drive with the disturbance applied, recording frames
/// with depth at every step.
std::vector<LabeledFrame> record_disturbed_run(const World& world, const SensorNoise& noise,
                                               const CameraIntrinsics& intr, const MountingTransform& mounting,
                                               const EpisodeConfig& config);

struct AugmentationConfig {
  EpisodeConfig episode;
  Disturbance disturbance{0.3, 4.0};
  double record_laps = 1.0;
};

struct AugmentationResult {
  EpisodeLog before;
  EpisodeLog after;
  std::vector<LabeledFrame> recorded;
  std::size_t baseline_entries = 0;
  std::size_t augmented_entries = 0;
};

/// Closed-loop baseline, disturbed recording added to the map, closed-loop
/// rerun on the augmented map with the same seed.
AugmentationResult run_augmentation_experiment(const World& world, const MapDatabase& db, const GmmParams& params,
                                               const SensorNoise& noise, const AugmentationConfig& config);

struct MetricsReport {
  std::size_t frames = 0;
  double rmse_position = 0.0;
  double rmse_heading = 0.0;
  double max_error = 0.0;
  /// (threshold, fraction of frames with position error <= threshold).
  std::vector<std::pair<double, double>> error_cdf;
  double mean_step_ms = 0.0;
  double p99_step_ms = 0.0;
};

std::vector<double> position_errors(const EpisodeLog& log);

/// Throws EmptyLog for a log without frames.
MetricsReport eval_metrics(const EpisodeLog& log, std::span<const double> thresholds);

/// CSV with header t,gt_x,gt_y,gt_psi,est_x,est_y,est_psi,n_hyps,n_inliers,step_ms.
void write_episode_csv(const EpisodeLog& log, std::ostream& out);
void save_episode_csv(const EpisodeLog& log, const std::string& path);
/// Reads the columns written by write_episode_csv. Throws DataError on
/// malformed input.
EpisodeLog read_episode_csv(std::istream& in);
EpisodeLog load_episode_csv(const std::string& path);

}  // namespace retloc
