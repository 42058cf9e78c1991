#include "retloc/geometry.hpp"

#include <cmath>

#include <Eigen/SVD>

#include "retloc/errors.hpp"

namespace retloc {

double wrap_angle(double angle) {
  double wrapped = std::remainder(angle, 2.0 * kPi);
  if (wrapped <= -kPi) {
    wrapped += 2.0 * kPi;
  }
  return wrapped;
}

double circular_mean(std::span<const double> angles, std::span<const double> weights) {
  double s = 0.0;
  double c = 0.0;
  for (std::size_t i = 0; i < angles.size(); ++i) {
    s += weights[i] * std::sin(angles[i]);
    c += weights[i] * std::cos(angles[i]);
  }
  if (s == 0.0 && c == 0.0) {
    return 0.0;
  }
  return wrap_angle(std::atan2(s, c));
}

double circular_mean(std::span<const double> angles) {
  double s = 0.0;
  double c = 0.0;
  for (double a : angles) {
    s += std::sin(a);
    c += std::cos(a);
  }
  if (s == 0.0 && c == 0.0) {
    return 0.0;
  }
  return wrap_angle(std::atan2(s, c));
}

RigidTransform3 RigidTransform3::rot_z(double angle) {
  return {Eigen::AngleAxisd(angle, Eigen::Vector3d::UnitZ()).toRotationMatrix(), Eigen::Vector3d::Zero()};
}

RigidTransform3 RigidTransform3::orthonormalized() const {
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(rotation_, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d r = svd.matrixU() * svd.matrixV().transpose();
  if (r.determinant() < 0.0) {
    Eigen::Matrix3d u = svd.matrixU();
    u.col(2) *= -1.0;
    r = u * svd.matrixV().transpose();
  }
  return {r, translation_};
}

bool RigidTransform3::is_valid(double tol) const {
  const double ortho = (rotation_.transpose() * rotation_ - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
  return ortho <= tol && std::abs(rotation_.determinant() - 1.0) <= tol && translation_.allFinite();
}

RigidTransform3 compose(const RigidTransform3& a, const RigidTransform3& b) {
  return {a.rotation() * b.rotation(), a.rotation() * b.translation() + a.translation()};
}

RigidTransform3 inverse(const RigidTransform3& t) {
  const Eigen::Matrix3d rt = t.rotation().transpose();
  return {rt, -(rt * t.translation())};
}

double rotation_distance(const Eigen::Matrix3d& a, const Eigen::Matrix3d& b) {
  return Eigen::AngleAxisd(a.transpose() * b).angle();
}

double yaw_of(const Eigen::Matrix3d& rotation) { return std::atan2(rotation(1, 0), rotation(0, 0)); }

void CameraIntrinsics::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) {
    throw ConfigError("camera intrinsics: focal lengths must be positive");
  }
  if (width <= 0 || height <= 0) {
    throw ConfigError("camera intrinsics: image size must be positive");
  }
  if (!(cx > 0.0 && cx < width) || !(cy > 0.0 && cy < height)) {
    throw ConfigError("camera intrinsics: principal point must lie inside the image");
  }
}

double CameraIntrinsics::horizontal_fov() const { return 2.0 * std::atan(width / (2.0 * fx)); }

double CameraIntrinsics::vertical_fov() const { return 2.0 * std::atan(height / (2.0 * fy)); }

std::optional<Eigen::Vector2d> project(const CameraIntrinsics& intr, const Eigen::Vector3d& p_cam) {
  if (!(p_cam.z() > kProjectionMinDepth)) {
    return std::nullopt;
  }
  return Eigen::Vector2d(intr.fx * p_cam.x() / p_cam.z() + intr.cx, intr.fy * p_cam.y() / p_cam.z() + intr.cy);
}

const Eigen::Matrix3d& body_from_optical() {
  static const Eigen::Matrix3d r = [] {
    Eigen::Matrix3d m;
    // Columns are the optical axes expressed in the body frame.
    m << 0.0, 0.0, 1.0,
        -1.0, 0.0, 0.0,
        0.0, -1.0, 0.0;
    return m;
  }();
  return r;
}

RigidTransform3 planar_to_camera(const PlanarPose& pose, const MountingTransform& mounting) {
  const RigidTransform3 world_vehicle(
      Eigen::AngleAxisd(pose.psi(), Eigen::Vector3d::UnitZ()).toRotationMatrix(),
      Eigen::Vector3d(pose.x(), pose.y(), 0.0));
  return compose(world_vehicle, mounting.vehicle_to_camera);
}

PlanarPose camera_to_planar(const RigidTransform3& world_camera, const MountingTransform& mounting) {
  const RigidTransform3 world_vehicle = compose(world_camera, inverse(mounting.vehicle_to_camera));
  return {world_vehicle.translation().x(), world_vehicle.translation().y(), yaw_of(world_vehicle.rotation())};
}

RigidTransform3 planar_to_optical(const PlanarPose& pose, const MountingTransform& mounting) {
  return compose(planar_to_camera(pose, mounting), RigidTransform3(body_from_optical(), Eigen::Vector3d::Zero()));
}

PlanarPose optical_to_planar(const RigidTransform3& world_optical, const MountingTransform& mounting) {
  const RigidTransform3 optical_body(body_from_optical().transpose(), Eigen::Vector3d::Zero());
  return camera_to_planar(compose(world_optical, optical_body), mounting);
}

}  // namespace retloc
