#include <algorithm>
#include <cmath>
#include <numeric>

#include "retloc/errors.hpp"
#include "retloc/random.hpp"
#include "retloc/sim.hpp"

namespace retloc {

namespace {

constexpr double kDegree = kPi / 180.0;

void add_box(std::vector<WallSegment>& walls, const Rect& r, bool inward, bool infield) {
  const Eigen::Vector2d c[4] = {{r.min_x, r.min_y}, {r.max_x, r.min_y}, {r.max_x, r.max_y}, {r.min_x, r.max_y}};
  for (int i = 0; i < 4; ++i) {
    const Eigen::Vector2d a = c[i];
    const Eigen::Vector2d b = c[(i + 1) % 4];
    const Eigen::Vector2d d = (b - a).normalized();
    // Counter-clockwise corners: the left normal points into the box.
    const Eigen::Vector2d left(-d.y(), d.x());
    walls.push_back({a, b, inward ? left : Eigen::Vector2d(-left), infield});
  }
}

bool in_any(const std::vector<std::pair<double, double>>& ranges, double f) {
  return std::any_of(ranges.begin(), ranges.end(), [f](const auto& r) { return f >= r.first && f < r.second; });
}

double cycles_per_radian(int bits, double bits_per_degree) {
  return bits > 0 ? bits_per_degree / kDegree / (2.0 * bits) : 0.0;
}

}  // namespace

World::World(const WorldConfig& config)
    : config_(config), track_(config.straight_x, config.straight_y, config.corner_radius) {
  if (config.landmark_count == 0) throw ConfigError("world needs at least one landmark");
  if (!(config.min_height <= config.max_height)) throw ConfigError("landmark height range is empty");
  if (!(config.room_margin > 0.0) || !(config.infield_margin > 0.0)) {
    throw ConfigError("wall margins must be positive");
  }
  const AppearanceModel& app = config.appearance;
  if (app.view_sensitive_bits < 0 || app.image_sensitive_bits < 0 ||
      app.view_sensitive_bits + app.image_sensitive_bits > static_cast<int>(kDescriptorBits) ||
      app.view_bits_per_degree < 0.0 || app.image_bits_per_degree < 0.0) {
    throw ConfigError("invalid appearance model");
  }
  if (config.max_features == 0) throw ConfigError("max_features must be at least 1");

  const Rect tb = track_.bounds();
  bounds_ = {tb.min_x - config.room_margin, tb.min_y - config.room_margin, tb.max_x + config.room_margin,
             tb.max_y + config.room_margin};
  infield_ = {tb.min_x + config.infield_margin, tb.min_y + config.infield_margin, tb.max_x - config.infield_margin,
              tb.max_y - config.infield_margin};
  if (!(infield_.min_x < infield_.max_x) || !(infield_.min_y < infield_.max_y)) {
    throw ConfigError("infield margin leaves no infield");
  }
  add_box(walls_, bounds_, true, false);
  add_box(walls_, infield_, false, true);

  std::vector<double> cumulative;
  double total = 0.0;
  for (const WallSegment& w : walls_) {
    total += (w.b - w.a).norm();
    cumulative.push_back(total);
  }

  std::mt19937_64 rng(config.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> byte(0, 255);
  landmarks_.reserve(config.landmark_count);
  bit_class_.resize(config.landmark_count);
  bit_phase_.resize(config.landmark_count);
  for (std::size_t i = 0; i < config.landmark_count; ++i) {
    double f = unit(rng);
    for (int attempt = 0; in_any(config.featureless, f); ++attempt) {
      if (attempt > 10000) throw ConfigError("featureless ranges cover every wall");
      f = unit(rng);
    }
    const double along = f * total;
    const auto wall = static_cast<std::size_t>(std::upper_bound(cumulative.begin(), cumulative.end(), along) -
                                               cumulative.begin());
    const WallSegment& w = walls_[std::min(wall, walls_.size() - 1)];
    const double len = (w.b - w.a).norm();
    const double t = std::clamp((along - (cumulative[wall] - len)) / len, 0.0, 1.0);
    const Eigen::Vector2d p = w.a + t * (w.b - w.a);
    const double z = config.min_height + (config.max_height - config.min_height) * unit(rng);

    Landmark lm;
    lm.position = Eigen::Vector3d(p.x(), p.y(), z);
    lm.wall = static_cast<std::uint32_t>(std::min(wall, walls_.size() - 1));
    for (auto& b : lm.descriptor.bytes) b = static_cast<std::uint8_t>(byte(rng));
    landmarks_.push_back(lm);

    std::array<int, 256> order;
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    bit_class_[i].fill(0);
    for (int k = 0; k < app.view_sensitive_bits; ++k) bit_class_[i][order[k]] = 1;
    for (int k = 0; k < app.image_sensitive_bits; ++k) bit_class_[i][order[app.view_sensitive_bits + k]] = 2;
    for (auto& ph : bit_phase_[i]) ph = static_cast<float>(unit(rng));
  }
}

bool World::occluded(const Eigen::Vector2d& eye, const Eigen::Vector2d& target) const {
  // Liang-Barsky clip of the segment against the slightly shrunken infield.
  constexpr double kShrink = 1e-9;
  const Eigen::Vector2d d = target - eye;
  double t0 = 0.0;
  double t1 = 1.0;
  const double p[4] = {-d.x(), d.x(), -d.y(), d.y()};
  const double q[4] = {eye.x() - (infield_.min_x + kShrink), (infield_.max_x - kShrink) - eye.x(),
                       eye.y() - (infield_.min_y + kShrink), (infield_.max_y - kShrink) - eye.y()};
  for (int i = 0; i < 4; ++i) {
    if (p[i] == 0.0) {
      if (q[i] < 0.0) return false;
      continue;
    }
    const double r = q[i] / p[i];
    if (p[i] < 0.0) {
      t0 = std::max(t0, r);
    } else {
      t1 = std::min(t1, r);
    }
    if (t0 > t1) return false;
  }
  return t1 > t0;
}

Descriptor World::appearance(std::size_t i, double view_angle, double bearing) const {
  const AppearanceModel& app = config_.appearance;
  const double gv = cycles_per_radian(app.view_sensitive_bits, app.view_bits_per_degree) * view_angle;
  const double gi = cycles_per_radian(app.image_sensitive_bits, app.image_bits_per_degree) * bearing;
  Descriptor d = landmarks_[i].descriptor;
  const auto& cls = bit_class_[i];
  const auto& phase = bit_phase_[i];
  for (std::size_t b = 0; b < kDescriptorBits; ++b) {
    if (cls[b] == 0) continue;
    const double x = (cls[b] == 1 ? gv : gi) + static_cast<double>(phase[b]);
    if (x - std::floor(x) < 0.5) d.flip_bit(b);
  }
  return d;
}

void SensorNoise::validate() const {
  if (!(pixel_sigma >= 0.0) || !(depth_sigma >= 0.0) || descriptor_flip_bits < 0 ||
      descriptor_flip_bits > static_cast<int>(kDescriptorBits)) {
    throw ConfigError("sensor noise magnitudes must be non-negative");
  }
  if (!(v_lo <= v_hi) || !(g_lo <= g_hi)) throw ConfigError("odometry noise bounds are not ordered");
  if (!(dropout_prob >= 0.0 && dropout_prob <= 1.0)) throw ConfigError("dropout probability must lie in [0, 1]");
  if (!std::isfinite(v_bias) || !std::isfinite(g_bias)) throw ConfigError("odometry bias must be finite");
}

SensorNoise noise_profile(const std::string& name) {
  SensorNoise n;
  if (name == "zero") return n;
  if (name == "low") {
    n.pixel_sigma = 0.3;
    n.descriptor_flip_bits = 4;
    n.depth_sigma = 0.002;
    n.v_lo = -0.02;
    n.v_hi = 0.02;
    n.g_lo = -0.02;
    n.g_hi = 0.02;
    n.dropout_prob = 0.05;
    return n;
  }
  if (name == "moderate") {
    n.pixel_sigma = 0.5;
    n.descriptor_flip_bits = 8;
    n.depth_sigma = 0.005;
    n.v_lo = -0.05;
    n.v_hi = 0.05;
    n.g_lo = -0.05;
    n.g_hi = 0.05;
    n.dropout_prob = 0.1;
    n.v_bias = 0.02;
    n.g_bias = 0.01;
    return n;
  }
  if (name == "high") {
    n.pixel_sigma = 1.0;
    n.descriptor_flip_bits = 16;
    n.depth_sigma = 0.01;
    n.v_lo = -0.1;
    n.v_hi = 0.1;
    n.g_lo = -0.1;
    n.g_hi = 0.1;
    n.dropout_prob = 0.2;
    n.v_bias = 0.05;
    n.g_bias = 0.03;
    return n;
  }
  throw ConfigError("unknown noise profile '" + name + "'");
}

MountingTransform default_mounting() {
  return {RigidTransform3::from_translation(Eigen::Vector3d(0.1, 0.0, 0.2))};
}

FeatureSet render(const World& world, const PlanarPose& true_pose, const CameraIntrinsics& intr,
                  const MountingTransform& mounting, const SensorNoise& noise, std::mt19937_64& rng, bool with_depth) {
  noise.validate();
  const WorldConfig& cfg = world.config();
  const RigidTransform3 world_optical = planar_to_optical(true_pose, mounting);
  const RigidTransform3 optical_world = inverse(world_optical);
  const Eigen::Vector2d eye = world_optical.translation().head<2>();
  const double max_view = cfg.max_view_angle_deg * kDegree;

  struct Candidate {
    double range;
    std::size_t index;
    Eigen::Vector3d pc;
    Eigen::Vector2d px;
    double view_angle;
  };
  std::vector<Candidate> candidates;
  const auto& landmarks = world.landmarks();
  for (std::size_t i = 0; i < landmarks.size(); ++i) {
    const Landmark& lm = landmarks[i];
    const Eigen::Vector3d pc = optical_world.apply(lm.position);
    if (pc.z() < cfg.min_depth) continue;
    const double range = pc.norm();
    if (range > cfg.max_range) continue;
    const auto px = project(intr, pc);
    if (!px || !intr.contains(*px)) continue;
    const WallSegment& wall = world.walls()[lm.wall];
    const Eigen::Vector2d to_eye = eye - lm.position.head<2>();
    const double facing = wall.normal.dot(to_eye);
    if (facing <= 0.0) continue;
    const double view = std::atan2(wall.normal.x() * to_eye.y() - wall.normal.y() * to_eye.x(), facing);
    if (std::abs(view) > max_view) continue;
    if (!wall.infield && world.occluded(eye, lm.position.head<2>())) continue;
    candidates.push_back({range, i, pc, *px, view});
  }
  std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
    return a.range != b.range ? a.range < b.range : a.index < b.index;
  });

  FeatureSet fs;
  std::vector<Eigen::Vector3f> points;
  // Each landmark draws its noise from its own stream, so two renders with
  // the same rng state but nearby poses see the same noise on shared landmarks.
  const std::uint64_t frame_key = rng();
  for (const Candidate& c : candidates) {
    if (fs.keypoints.size() >= cfg.max_features) break;
    SplitMix64 lrng(mix_seed(frame_key, c.index));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_int_distribution<std::size_t> bit(0, kDescriptorBits - 1);
    if (noise.dropout_prob > 0.0 && unit(lrng) < noise.dropout_prob) continue;
    Eigen::Vector2d px = c.px;
    if (noise.pixel_sigma > 0.0) {
      px.x() += noise.pixel_sigma * normal(lrng);
      px.y() += noise.pixel_sigma * normal(lrng);
      if (!intr.contains(px)) continue;
    }
    const double bearing = std::atan2(c.pc.x(), c.pc.z());
    Descriptor d = world.appearance(c.index, c.view_angle, bearing);
    if (noise.descriptor_flip_bits > 0) {
      Descriptor mask;
      int flipped = 0;
      while (flipped < noise.descriptor_flip_bits) {
        const std::size_t b = bit(lrng);
        if (mask.bit(b)) continue;
        mask.flip_bit(b);
        d.flip_bit(b);
        ++flipped;
      }
    }
    fs.keypoints.push_back({static_cast<float>(px.x()), static_cast<float>(px.y())});
    fs.descriptors.push_back(d);
    if (with_depth) {
      Eigen::Vector3d p = c.pc;
      if (noise.depth_sigma > 0.0) {
        const double z = c.pc.z();
        const double noisy = z + noise.depth_sigma * z * z * normal(lrng);
        p = noisy > cfg.min_depth ? Eigen::Vector3d(c.pc * (noisy / z))
                                  : Eigen::Vector3d::Constant(std::numeric_limits<double>::quiet_NaN());
      }
      points.push_back(p.cast<float>());
    }
  }
  if (with_depth) fs.points3d = std::move(points);
  return fs;
}

}  // namespace retloc
