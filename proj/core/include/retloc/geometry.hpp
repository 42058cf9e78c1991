#pragma once

#include <optional>
#include <span>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace retloc {

inline constexpr double kPi = 3.14159265358979323846;

/// Wraps an angle to (-pi, pi].
double wrap_angle(double angle);

/// Weighted circular mean: the angle of the weighted sum of unit vectors,
/// wrapped to (-pi, pi]. Returns 0 when the resultant vanishes.
double circular_mean(std::span<const double> angles, std::span<const double> weights);
double circular_mean(std::span<const double> angles);

/// Planar vehicle pose in the global frame. Heading is measured
/// counter-clockwise from the global +X axis and is always kept in (-pi, pi].
class PlanarPose {
 public:
  PlanarPose() = default;
  PlanarPose(double x, double y, double psi) : x_(x), y_(y), psi_(wrap_angle(psi)) {}

  double x() const { return x_; }
  double y() const { return y_; }
  double psi() const { return psi_; }

  Eigen::Vector2d position() const { return {x_, y_}; }
  Eigen::Vector3d vector() const { return {x_, y_, psi_}; }

  /// Component-wise difference with the heading difference wrapped.
  Eigen::Vector3d operator-(const PlanarPose& other) const {
    return {x_ - other.x_, y_ - other.y_, wrap_angle(psi_ - other.psi_)};
  }

  bool operator==(const PlanarPose&) const = default;

 private:
  double x_ = 0.0;
  double y_ = 0.0;
  double psi_ = 0.0;
};

/// Axis-aligned rectangle in the ground plane.
struct Rect {
  double min_x = 0.0;
  double min_y = 0.0;
  double max_x = 0.0;
  double max_y = 0.0;

  bool contains(double x, double y) const { return x >= min_x && x <= max_x && y >= min_y && y <= max_y; }
  bool operator==(const Rect&) const = default;
};

/// Rigid transform in 3D. A transform named T_ab maps coordinates expressed in
/// frame b into frame a: p_a = R * p_b + t.
class RigidTransform3 {
 public:
  RigidTransform3() : rotation_(Eigen::Matrix3d::Identity()), translation_(Eigen::Vector3d::Zero()) {}
  RigidTransform3(const Eigen::Matrix3d& rotation, const Eigen::Vector3d& translation)
      : rotation_(rotation), translation_(translation) {}

  static RigidTransform3 identity() { return {}; }
  static RigidTransform3 from_translation(const Eigen::Vector3d& t) {
    return {Eigen::Matrix3d::Identity(), t};
  }
  static RigidTransform3 rot_z(double angle);

  const Eigen::Matrix3d& rotation() const { return rotation_; }
  const Eigen::Vector3d& translation() const { return translation_; }

  Eigen::Vector3d apply(const Eigen::Vector3d& p) const { return rotation_ * p + translation_; }

  /// Projects the rotation back onto SO(3) (nearest orthonormal matrix).
  RigidTransform3 orthonormalized() const;

  /// True when R is orthonormal with det +1 within `tol`.
  bool is_valid(double tol = 1e-9) const;

 private:
  Eigen::Matrix3d rotation_;
  Eigen::Vector3d translation_;
};

/// a∘b: apply b first, then a.
RigidTransform3 compose(const RigidTransform3& a, const RigidTransform3& b);
RigidTransform3 inverse(const RigidTransform3& t);

/// Rotation angle (radians) of R_a^T R_b.
double rotation_distance(const Eigen::Matrix3d& a, const Eigen::Matrix3d& b);

/// Heading of a rotation expressed in a z-up frame: atan2(R(1,0), R(0,0)).
double yaw_of(const Eigen::Matrix3d& rotation);

struct CameraIntrinsics {
  double fx = 460.0;
  double fy = 460.0;
  double cx = 320.0;
  double cy = 240.0;
  int width = 640;
  int height = 480;

  /// Throws ConfigError when the invariants do not hold.
  void validate() const;
  double horizontal_fov() const;
  double vertical_fov() const;
  bool contains(const Eigen::Vector2d& pixel) const {
    return pixel.x() >= 0.0 && pixel.y() >= 0.0 && pixel.x() < width && pixel.y() < height;
  }
};

inline constexpr double kProjectionMinDepth = 1e-6;

/// Pinhole projection of a point in the optical frame (x right, y down,
/// z forward). Returns nullopt when the point is not in front of the camera.
std::optional<Eigen::Vector2d> project(const CameraIntrinsics& intr, const Eigen::Vector3d& p_cam);

/// Pose of the camera body frame (x forward, y left, z up) in the vehicle
/// frame, i.e. T_vehicle_camera. Identity means the camera sits at the
/// vehicle origin looking along vehicle +X.
struct MountingTransform {
  RigidTransform3 vehicle_to_camera;
};

/// Rotation taking optical-frame coordinates (x right, y down, z forward)
/// to camera-body coordinates (x forward, y left, z up).
const Eigen::Matrix3d& body_from_optical();

/// Camera-body pose in the world (T_world_camera) for a vehicle at `pose`.
RigidTransform3 planar_to_camera(const PlanarPose& pose, const MountingTransform& mounting);
/// Inverse of planar_to_camera; roll, pitch and height are discarded.
PlanarPose camera_to_planar(const RigidTransform3& world_camera, const MountingTransform& mounting);

/// Same as above, but for the optical frame that pinhole projection uses.
RigidTransform3 planar_to_optical(const PlanarPose& pose, const MountingTransform& mounting);
PlanarPose optical_to_planar(const RigidTransform3& world_optical, const MountingTransform& mounting);

}  // namespace retloc
