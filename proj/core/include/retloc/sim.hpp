#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "retloc/features.hpp"
#include "retloc/geometry.hpp"

namespace retloc {

/// Closed centerline made of two pairs of straights joined by quarter arcs
/// (a rounded rectangle centered on the origin), driven counter-clockwise.
/// Arc length 0 is the middle-left end of the bottom straight, heading +X.
class Track {
 public:
  Track(double straight_x = 5.0, double straight_y = 2.0, double radius = 1.0);

  double length() const { return length_; }
  double straight_x() const { return straight_x_; }
  double straight_y() const { return straight_y_; }
  double radius() const { return radius_; }

  /// Centerline pose at arc length s (taken modulo the length).
  PlanarPose pose_at(double s) const;
  /// Signed curvature at s; positive on the (left-turning) arcs.
  double curvature_at(double s) const;

  struct Projection {
    double s = 0.0;
    /// Signed distance of the point from the centerline, positive to the left.
    double lateral = 0.0;
    PlanarPose foot;
    double curvature = 0.0;
  };
  /// Closest centerline point to (x, y).
  Projection project(double x, double y) const;

  /// Bounding box of the centerline.
  Rect bounds() const;

 private:
  struct Piece {
    bool arc = false;
    double s0 = 0.0;
    double length = 0.0;
    Eigen::Vector2d start;  // lines: start point; arcs: center
    double heading = 0.0;   // lines: direction; arcs: start angle of the radius vector
  };
  PlanarPose pose_on(const Piece& piece, double ds) const;

  double straight_x_;
  double straight_y_;
  double radius_;
  double length_ = 0.0;
  std::array<Piece, 8> pieces_{};
};

/// Descriptor appearance changes with viewpoint. A subset of each landmark's
/// bits flips periodically with the horizontal viewing angle onto its wall,
/// another with the bearing at which the camera sees it; the rates are the
/// expected Hamming distance per degree of change.
struct AppearanceModel {
  int view_sensitive_bits = 96;
  double view_bits_per_degree = 4.0;
  int image_sensitive_bits = 96;
  double image_bits_per_degree = 10.0;
};

struct WorldConfig {
  double straight_x = 5.0;
  double straight_y = 2.0;
  double corner_radius = 1.0;
  /// Outer walls sit this far outside the centerline bounding box.
  double room_margin = 1.0;
  /// The infield block reaches to within this distance of the centerline.
  double infield_margin = 0.6;
  std::size_t landmark_count = 2000;
  double min_height = 0.5;
  double max_height = 3.0;
  /// Stretches without landmarks, as [from, to) fractions of the total wall
  /// length (outer walls first, counter-clockwise from the bottom-left
  /// corner, then the infield the same way). The default blanks the east
  /// end wall and the infield face opposite it.
  std::vector<std::pair<double, double>> featureless{{0.19, 0.318}, {0.758, 0.818}};
  AppearanceModel appearance;
  double max_range = 8.0;
  double min_depth = 0.05;
  /// Landmarks seen more obliquely than this (from the wall normal, degrees)
  /// are not detected.
  double max_view_angle_deg = 75.0;
  std::size_t max_features = 500;
  std::uint64_t seed = 1;
};

struct WallSegment {
  Eigen::Vector2d a;
  Eigen::Vector2d b;
  /// Unit normal pointing to the side the wall is visible from.
  Eigen::Vector2d normal;
  bool infield = false;
};

struct Landmark {
  Eigen::Vector3d position;
  Descriptor descriptor;
  std::uint32_t wall = 0;
};

class World {
 public:
  explicit World(const WorldConfig& config = {});

  const WorldConfig& config() const { return config_; }
  const Track& track() const { return track_; }
  const std::vector<WallSegment>& walls() const { return walls_; }
  const std::vector<Landmark>& landmarks() const { return landmarks_; }
  /// Inside of the outer walls.
  const Rect& bounds() const { return bounds_; }
  const Rect& infield() const { return infield_; }

  /// True when the infield block hides `target` from `eye` (ground plane).
  bool occluded(const Eigen::Vector2d& eye, const Eigen::Vector2d& target) const;

  /// Descriptor of landmark i seen at horizontal viewing angle `view_angle`
  /// (from the wall normal) and image bearing `bearing` (radians, positive
  /// to the right), before any sensor noise.
  Descriptor appearance(std::size_t i, double view_angle, double bearing) const;

 private:
  WorldConfig config_;
  Track track_;
  std::vector<WallSegment> walls_;
  std::vector<Landmark> landmarks_;
  Rect bounds_;
  Rect infield_;
  // Per landmark and bit: 0 = stable, 1 = view sensitive, 2 = image sensitive.
  std::vector<std::array<std::uint8_t, 256>> bit_class_;
  std::vector<std::array<float, 256>> bit_phase_;
};

struct SensorNoise {
  double pixel_sigma = 0.0;
  int descriptor_flip_bits = 0;
  /// Depth noise sigma is depth_sigma * depth^2.
  double depth_sigma = 0.0;
  double v_lo = 0.0;
  double v_hi = 0.0;
  double g_lo = 0.0;
  double g_hi = 0.0;
  double dropout_prob = 0.0;
  /// Constant offsets added to the odometry readings.
  double v_bias = 0.0;
  double g_bias = 0.0;

  /// Throws ConfigError on negative sigmas, unordered bounds or a dropout
  /// probability outside [0, 1].
  void validate() const;
  bool operator==(const SensorNoise&) const = default;
};

/// Named noise profiles: "zero", "low", "moderate", "high". Throws
/// ConfigError for an unknown name.
SensorNoise noise_profile(const std::string& name);

/// Synthetic camera (and, with depth, range sensor) observation of the world
/// from a vehicle at `true_pose`. Features are ordered nearest first and
/// capped at the world's max_features.
FeatureSet render(const World& world, const PlanarPose& true_pose, const CameraIntrinsics& intr,
                  const MountingTransform& mounting, const SensorNoise& noise, std::mt19937_64& rng, bool with_depth);

/// Default camera placement: 0.1 m ahead of and 0.2 m above the rear axle,
/// looking forward.
MountingTransform default_mounting();

struct VehicleParams {
  double wheelbase = 0.26;
  double max_steer = 0.45;
  int substeps = 10;
};

/// Kinematic bicycle integrated over dt with `substeps` Euler steps.
PlanarPose step_bicycle(const PlanarPose& pose, double v, double steer, double dt, const VehicleParams& params);

struct PidGains {
  /// Combined error: lateral error + heading_weight * heading error.
  double kp = 3.0;
  double ki = 0.0;
  double kd = 0.0;
  double heading_weight = 0.8;
  double wheelbase = 0.26;
  double max_steer = 0.45;
  double dt = 0.1;
};

struct PidState {
  double integral = 0.0;
  double previous_error = 0.0;
  bool has_previous = false;
};

struct ControlCommand {
  double v_cmd = 0.0;
  double steer_cmd = 0.0;
};

/// Path-tracking step. The lateral error is positive when the path lies to
/// the vehicle's left, the heading error is path heading minus vehicle
/// heading; positive steering turns left. Adds the curvature feed-forward
/// atan(L * kappa) to the PID output.
ControlCommand pid_step(const Track& path, const PlanarPose& pose, double v_ref, const PidGains& gains,
                        PidState& state);

}  // namespace retloc
