#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "retloc/errors.hpp"
#include "retloc/geometry.hpp"

namespace retloc {
namespace {

constexpr double kDeg = kPi / 180.0;

RigidTransform3 sample_transform(std::mt19937_64& rng) { return oracle::random_camera_pose(rng); }

double transform_gap(const RigidTransform3& a, const RigidTransform3& b) {
  return std::max((a.rotation() - b.rotation()).cwiseAbs().maxCoeff(),
                  (a.translation() - b.translation()).cwiseAbs().maxCoeff());
}

TEST(Compose, IdentityIsNeutral) {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 100; ++i) {
    const RigidTransform3 t = sample_transform(rng);
    EXPECT_EQ(transform_gap(compose(t, RigidTransform3::identity()), t), 0.0);
    EXPECT_EQ(transform_gap(compose(RigidTransform3::identity(), t), t), 0.0);
  }
}

TEST(Compose, WithInverseGivesIdentity) {
  std::mt19937_64 rng(2);
  for (int i = 0; i < 100; ++i) {
    const RigidTransform3 t = sample_transform(rng);
    EXPECT_LT(transform_gap(compose(t, inverse(t)), RigidTransform3::identity()), 1e-9);
  }
}

TEST(Compose, RotationsAboutZAdd) {
  const RigidTransform3 r = compose(RigidTransform3::rot_z(30 * kDeg), RigidTransform3::rot_z(60 * kDeg));
  EXPECT_LT(transform_gap(r, RigidTransform3::rot_z(90 * kDeg)), 1e-12);
}

TEST(Compose, AppliesRightOperandFirst) {
  const RigidTransform3 a = RigidTransform3::rot_z(kPi / 2);
  const RigidTransform3 b = RigidTransform3::from_translation({1, 0, 0});
  const Eigen::Vector3d p = compose(a, b).apply(Eigen::Vector3d::Zero());
  EXPECT_NEAR(p.x(), 0.0, 1e-15);
  EXPECT_NEAR(p.y(), 1.0, 1e-15);
}

TEST(Inverse, Basics) {
  EXPECT_EQ(transform_gap(inverse(RigidTransform3::identity()), RigidTransform3::identity()), 0.0);
  const RigidTransform3 t = inverse(RigidTransform3::from_translation({1, 2, 3}));
  EXPECT_EQ(t.translation(), Eigen::Vector3d(-1, -2, -3));
  std::mt19937_64 rng(3);
  for (int i = 0; i < 100; ++i) {
    const RigidTransform3 x = sample_transform(rng);
    EXPECT_LT(transform_gap(inverse(inverse(x)), x), 1e-12);
  }
}

TEST(Project, PinholeFormula) {
  CameraIntrinsics intr{100, 100, 64, 64, 128, 128};
  auto a = project(intr, {0, 0, 2});
  ASSERT_TRUE(a);
  EXPECT_DOUBLE_EQ(a->x(), 64.0);
  EXPECT_DOUBLE_EQ(a->y(), 64.0);
  auto b = project(intr, {1, 0, 2});
  ASSERT_TRUE(b);
  EXPECT_DOUBLE_EQ(b->x(), 114.0);
  EXPECT_DOUBLE_EQ(b->y(), 64.0);
  EXPECT_FALSE(project(intr, {0, 0, -1}));
  EXPECT_FALSE(project(intr, {0, 0, 0}));
}

TEST(Intrinsics, ValidateRejectsBadValues) {
  CameraIntrinsics ok;
  EXPECT_NO_THROW(ok.validate());
  CameraIntrinsics bad = ok;
  bad.fx = 0;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = ok;
  bad.width = 0;
  EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(PlanarToCamera, IdentityMountingAtOrigin) {
  const RigidTransform3 t = planar_to_camera(PlanarPose(0, 0, 0), MountingTransform{});
  EXPECT_EQ(transform_gap(t, RigidTransform3::identity()), 0.0);
}

TEST(PlanarToCamera, DirectConstruction) {
  const RigidTransform3 t = planar_to_camera(PlanarPose(1, 2, kPi / 2), MountingTransform{});
  EXPECT_LT((t.translation() - Eigen::Vector3d(1, 2, 0)).norm(), 1e-15);
  EXPECT_LT(transform_gap(RigidTransform3(t.rotation(), Eigen::Vector3d::Zero()), RigidTransform3::rot_z(kPi / 2)),
            1e-15);
}

TEST(PlanarToCamera, RoundTrip) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-5, 5);
  std::uniform_real_distribution<double> a(-kPi, kPi);
  MountingTransform m{compose(RigidTransform3::from_translation({0.1, 0.05, 0.3}), RigidTransform3::rot_z(0.2))};
  for (int i = 0; i < 200; ++i) {
    const PlanarPose p(u(rng), u(rng), a(rng));
    for (const MountingTransform& mm : {MountingTransform{}, m}) {
      const PlanarPose back = camera_to_planar(planar_to_camera(p, mm), mm);
      EXPECT_LT((back - p).norm(), 1e-12);
      const PlanarPose back_optical = optical_to_planar(planar_to_optical(p, mm), mm);
      EXPECT_LT((back_optical - p).norm(), 1e-12);
    }
  }
}

TEST(PlanarToOptical, OpticalAxisLooksForward) {
  const RigidTransform3 wo = planar_to_optical(PlanarPose(0, 0, 0), MountingTransform{});
  // optical z maps to world x, optical y (down) to world -z
  EXPECT_LT((wo.rotation() * Eigen::Vector3d::UnitZ() - Eigen::Vector3d::UnitX()).norm(), 1e-15);
  EXPECT_LT((wo.rotation() * Eigen::Vector3d::UnitY() + Eigen::Vector3d::UnitZ()).norm(), 1e-15);
}

TEST(Angles, WrapAndCircularMean) {
  EXPECT_DOUBLE_EQ(wrap_angle(kPi), kPi);
  EXPECT_DOUBLE_EQ(wrap_angle(-kPi), kPi);
  EXPECT_NEAR(wrap_angle(3 * kPi / 2), -kPi / 2, 1e-15);
  const double m = circular_mean(std::vector<double>{175 * kDeg, -175 * kDeg});
  EXPECT_NEAR(std::abs(m), kPi, 1e-12);
  EXPECT_NEAR(circular_mean(std::vector<double>{0.1, 0.3}, std::vector<double>{1.0, 0.0}), 0.1, 1e-15);
}

TEST(PlanarPose, HeadingAlwaysWrapped) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> a(-50, 50);
  for (int i = 0; i < 1000; ++i) {
    const PlanarPose p(0, 0, a(rng));
    EXPECT_GT(p.psi(), -kPi);
    EXPECT_LE(p.psi(), kPi);
  }
}

TEST(RigidTransform, Orthonormalize) {
  Eigen::Matrix3d r = RigidTransform3::rot_z(0.4).rotation();
  r(0, 1) += 1e-3;
  const RigidTransform3 t(r, Eigen::Vector3d::Zero());
  EXPECT_FALSE(t.is_valid());
  EXPECT_TRUE(t.orthonormalized().is_valid());
}

}  // namespace
}  // namespace retloc
