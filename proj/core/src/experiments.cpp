#include "retloc/experiments.hpp"

#include <cmath>

#include "retloc/errors.hpp"
#include "retloc/random.hpp"

namespace retloc {

namespace {

constexpr std::uint64_t kOdometryStream = 1ULL << 40;
constexpr std::uint64_t kLocalizerStream = 0x10CA1;
constexpr std::uint64_t kRecordingStream = 0xD157;

std::size_t step_count(const World& world, double laps, const EpisodeConfig& config) {
  if (!(laps > 0.0) || !(config.v_ref > 0.0) || !(config.dt > 0.0)) {
    throw ConfigError("episode needs positive laps, reference speed and time step");
  }
  return static_cast<std::size_t>(std::ceil(laps * world.track().length() / (config.v_ref * config.dt)));
}

struct Odometer {
  SensorNoise noise;
  double dt;
  double bv;
  double bg;

  OdometryInput read(double v, double yaw_rate, std::uint64_t seed) const {
    SplitMix64 rng(seed);
    OdometryInput u;
    u.dt = dt;
    u.v_meas = v + noise.v_lo + (noise.v_hi - noise.v_lo) * rng.uniform() + noise.v_bias;
    u.gamma_meas = yaw_rate + noise.g_lo + (noise.g_hi - noise.g_lo) * rng.uniform() + noise.g_bias;
    u.v_lo = -bv;
    u.v_hi = bv;
    u.g_lo = -bg;
    u.g_hi = bg;
    return u;
  }
};

EpisodeLog run_episode(const World& world, const MapDatabase& db, const GmmParams& params, const SensorNoise& noise,
                       const EpisodeConfig& config, bool closed_loop) {
  noise.validate();
  const CameraIntrinsics& intr = db.metadata().intrinsics;
  const MountingTransform& mounting = db.metadata().mounting;
  LocalizerConfig lc = config.localizer;
  lc.seed = localizer_seed(config.seed);
  Localizer localizer(db, params, lc);

  const auto [bv, bg] = filter_noise_bounds(noise, config);
  const Odometer odometer{noise, config.dt, bv, bg};
  PidGains gains = config.gains;
  gains.dt = config.dt;
  const std::size_t steps = step_count(world, config.laps, config);

  EpisodeLog log;
  log.seed = config.seed;
  log.frames.reserve(steps);
  PlanarPose pose = world.track().pose_at(0.0);
  PidState pid;
  OdometryInput odom = odometer.read(0.0, 0.0, mix_seed(config.seed, kOdometryStream));

  for (std::size_t k = 0; k < steps; ++k) {
    const double t = static_cast<double>(k) * config.dt;
    std::mt19937_64 rng(mix_seed(config.seed, k));
    FeatureSet fs = render(world, pose, intr, mounting, noise, rng, false);
    fs.frame_id = static_cast<std::uint32_t>(k);
    fs.timestamp = t;

    const LocalizationStep step = localizer.localize_frame(fs, odom);
    const PlanarPose& control_pose = closed_loop ? step.estimate : pose;
    ControlCommand cmd = pid_step(world.track(), control_pose, config.v_ref, gains, pid);
    cmd.steer_cmd += config.disturbance.at(t);

    EpisodeFrame frame;
    frame.index = static_cast<std::uint32_t>(k);
    frame.t = t;
    frame.ground_truth = pose;
    frame.estimate = step.estimate;
    frame.odometry = odom;
    frame.command = cmd;
    frame.n_hyps = step.diagnostics.hypothesis_count;
    frame.n_inliers = step.diagnostics.inlier_count;
    frame.dead_reckoning = step.diagnostics.dead_reckoning;
    frame.step_ms = step.diagnostics.step_ms;
    if (config.record_features) frame.features = std::move(fs);
    log.frames.push_back(std::move(frame));

    const PlanarPose next = step_bicycle(pose, cmd.v_cmd, cmd.steer_cmd, config.dt, config.vehicle);
    const double yaw_rate = wrap_angle(next.psi() - pose.psi()) / config.dt;
    odom = odometer.read(cmd.v_cmd, yaw_rate, mix_seed(config.seed, kOdometryStream + k + 1));
    pose = next;
    if (!world.bounds().contains(pose.x(), pose.y())) {
      log.diverged = true;
      break;
    }
  }
  return log;
}

}  // namespace

std::uint64_t localizer_seed(std::uint64_t episode_seed) { return mix_seed(episode_seed, kLocalizerStream); }

bool same_outcome(const EpisodeLog& a, const EpisodeLog& b) {
  if (a.diverged != b.diverged || a.seed != b.seed || a.frames.size() != b.frames.size()) return false;
  for (std::size_t i = 0; i < a.frames.size(); ++i) {
    const EpisodeFrame& x = a.frames[i];
    const EpisodeFrame& y = b.frames[i];
    const bool odom_equal = x.odometry.v_meas == y.odometry.v_meas && x.odometry.gamma_meas == y.odometry.gamma_meas &&
                            x.odometry.dt == y.odometry.dt && x.odometry.v_lo == y.odometry.v_lo &&
                            x.odometry.v_hi == y.odometry.v_hi && x.odometry.g_lo == y.odometry.g_lo &&
                            x.odometry.g_hi == y.odometry.g_hi;
    if (x.index != y.index || x.t != y.t || !(x.ground_truth == y.ground_truth) || !(x.estimate == y.estimate) ||
        !odom_equal || x.command.v_cmd != y.command.v_cmd || x.command.steer_cmd != y.command.steer_cmd ||
        x.n_hyps != y.n_hyps || x.n_inliers != y.n_inliers || x.dead_reckoning != y.dead_reckoning ||
        x.features != y.features) {
      return false;
    }
  }
  return true;
}

MappingRun run_mapping(const World& world, const MappingConfig& config, const SensorNoise& noise,
                       const CameraIntrinsics& intr, const MountingTransform& mounting, std::uint64_t seed) {
  noise.validate();
  if (!(config.laps > 0.0) || !(config.spacing > 0.0)) {
    throw ConfigError("mapping needs positive laps and spacing");
  }
  if (!(config.training_ratio >= 0.0 && config.training_ratio < 1.0)) {
    throw ConfigError("training ratio must lie in [0, 1)");
  }
  const double length = world.track().length();
  const auto count = static_cast<std::size_t>(std::ceil(config.laps * length / config.spacing - 1e-9));
  const double r = config.training_ratio;
  MappingRun run;
  for (std::size_t i = 0; i < count; ++i) {
    const PlanarPose pose = world.track().pose_at(static_cast<double>(i) * config.spacing);
    std::mt19937_64 rng(mix_seed(seed, i));
    LabeledFrame f{render(world, pose, intr, mounting, noise, rng, true), pose};
    f.features.frame_id = static_cast<std::uint32_t>(i);
    f.features.timestamp = static_cast<double>(i);
    const bool held_out =
        std::floor(static_cast<double>(i + 1) * r) > std::floor(static_cast<double>(i) * r);
    (held_out ? run.training : run.mapping).push_back(std::move(f));
  }
  return run;
}

double Disturbance::at(double t) const {
  if (amplitude == 0.0) return 0.0;
  if (!(period > 0.0)) throw ConfigError("disturbance period must be positive");
  return amplitude * std::sin(2.0 * kPi * t / period);
}

std::pair<double, double> filter_noise_bounds(const SensorNoise& noise, const EpisodeConfig& config) {
  const double bv = std::max(std::abs(noise.v_lo), std::abs(noise.v_hi)) + std::abs(noise.v_bias);
  const double bg = std::max(std::abs(noise.g_lo), std::abs(noise.g_hi)) + std::abs(noise.g_bias);
  return {std::max(bv, config.filter_min_v_noise), std::max(bg, config.filter_min_g_noise)};
}

EpisodeLog run_open_loop(const World& world, const MapDatabase& db, const GmmParams& params,
                         const SensorNoise& noise, const EpisodeConfig& config) {
  return run_episode(world, db, params, noise, config, false);
}

EpisodeLog run_closed_loop(const World& world, const MapDatabase& db, const GmmParams& params,
                           const SensorNoise& noise, const EpisodeConfig& config) {
  return run_episode(world, db, params, noise, config, true);
}

std::vector<LabeledFrame> record_disturbed_run(const World& world, const SensorNoise& noise,
                                               const CameraIntrinsics& intr, const MountingTransform& mounting,
                                               const EpisodeConfig& config) {
  noise.validate();
  PidGains gains = config.gains;
  gains.dt = config.dt;
  const std::size_t steps = step_count(world, config.laps, config);
  std::vector<LabeledFrame> frames;
  frames.reserve(steps);
  PlanarPose pose = world.track().pose_at(0.0);
  PidState pid;
  for (std::size_t k = 0; k < steps; ++k) {
    const double t = static_cast<double>(k) * config.dt;
    std::mt19937_64 rng(mix_seed(config.seed, k));
    LabeledFrame f{render(world, pose, intr, mounting, noise, rng, true), pose};
    f.features.frame_id = static_cast<std::uint32_t>(k);
    f.features.timestamp = t;
    frames.push_back(std::move(f));
    ControlCommand cmd = pid_step(world.track(), pose, config.v_ref, gains, pid);
    cmd.steer_cmd += config.disturbance.at(t);
    pose = step_bicycle(pose, cmd.v_cmd, cmd.steer_cmd, config.dt, config.vehicle);
    if (!world.bounds().contains(pose.x(), pose.y())) break;
  }
  return frames;
}

AugmentationResult run_augmentation_experiment(const World& world, const MapDatabase& db, const GmmParams& params,
                                               const SensorNoise& noise, const AugmentationConfig& config) {
  AugmentationResult result;
  result.before = run_closed_loop(world, db, params, noise, config.episode);

  EpisodeConfig rec = config.episode;
  rec.laps = config.record_laps;
  rec.disturbance = config.disturbance;
  rec.seed = mix_seed(config.episode.seed, kRecordingStream);
  result.recorded = record_disturbed_run(world, noise, db.metadata().intrinsics, db.metadata().mounting, rec);

  const MapDatabase augmented = augment(db, build_entries(result.recorded, db));
  result.baseline_entries = db.size();
  result.augmented_entries = augmented.size();
  result.after = run_closed_loop(world, augmented, params, noise, config.episode);
  return result;
}

}  // namespace retloc
