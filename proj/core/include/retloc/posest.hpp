#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "retloc/features.hpp"
#include "retloc/geometry.hpp"
#include "retloc/mapdb.hpp"

namespace retloc {

/// Minimal solver: camera poses (T_camera_world) consistent with three
/// world points and their unit bearing vectors. Returns up to four
/// solutions; degenerate configurations yield none.
std::vector<RigidTransform3> solve_p3p(std::span<const Eigen::Vector3d, 3> world_points,
                                       std::span<const Eigen::Vector3d, 3> bearings);

struct RansacConfig {
  double reprojection_threshold_px = 3.0;
  std::size_t min_inliers = 8;
  std::size_t max_iterations = 200;
  double confidence = 0.99;
  std::size_t refine_iterations = 30;
  std::uint64_t seed = 0;
};

struct PnPResult {
  /// Maps reference-camera coordinates into query-camera coordinates.
  RigidTransform3 relative;
  std::vector<std::size_t> inlier_indices;
  std::size_t inlier_count = 0;
  /// RMSE over the inliers after refinement.
  double reprojection_rmse = 0.0;
  /// RMSE over the same inliers for the best minimal-sample model.
  double initial_rmse = 0.0;
  std::size_t iterations = 0;
};

enum class PnPFailure { kNone, kTooFewPoints, kNoConsensus };

struct PnPOutcome {
  std::optional<PnPResult> result;
  PnPFailure failure = PnPFailure::kNone;

  explicit operator bool() const { return result.has_value(); }
};

/// Reprojection error (pixels) of `p` under `pose`; +inf when behind.
double reprojection_error(const CameraIntrinsics& intr, const RigidTransform3& pose, const Eigen::Vector3d& p,
                          const Eigen::Vector2d& pixel);

/// Levenberg-Marquardt on reprojection error over the given correspondences.
/// Never returns a pose with higher total squared error than `initial`.
RigidTransform3 refine_pose(const CameraIntrinsics& intr, const RigidTransform3& initial,
                            std::span<const Eigen::Vector3d> points3d, std::span<const Eigen::Vector2d> points2d,
                            std::span<const std::size_t> indices, std::size_t max_iterations);

/// RANSAC over 4-point samples (P3P on three, the fourth picks among the
/// solutions), inliers by reprojection error, then LM refinement of the best
/// model over its inliers. Deterministic given config.seed.
PnPOutcome solve_pnp_ransac(std::span<const Eigen::Vector3d> points3d_ref, std::span<const Eigen::Vector2d> points2d_query,
                            const CameraIntrinsics& intr, const RansacConfig& config = {});

/// Global pose estimate of the query derived from one retrieved map entry.
struct PoseHypothesis {
  PlanarPose pose;
  std::uint32_t source_entry = 0;
  std::size_t weight_features = 0;
  double vlad_distance = 0.0;
};

struct HypothesisConfig {
  MatchConfig match;
  RansacConfig ransac;
  /// Reject entries whose relative yaw exceeds the horizontal field of view.
  bool fov_gate = true;
};

struct HypothesisStats {
  std::size_t retrieved = 0;
  std::size_t too_few_matches = 0;
  std::size_t no_consensus = 0;
  std::size_t fov_rejected = 0;
  std::size_t accepted = 0;
  std::size_t total_inliers = 0;
};

/// Relative heading (radians) between the two camera bodies of a
/// reference-to-query optical transform.
double relative_yaw(const RigidTransform3& query_from_reference);

/// For each retrieved entry: match, PnP-RANSAC, FOV gate, then chain the
/// entry's camera pose with the relative pose. Output keeps retrieval order.
std::vector<PoseHypothesis> hypothesize(const MapDatabase& db, const FeatureSet& query,
                                        std::span<const Neighbor> retrieved, const CameraIntrinsics& intr,
                                        const MountingTransform& mounting, const HypothesisConfig& config = {},
                                        HypothesisStats* stats = nullptr);

struct RobustAverageConfig {
  double inlier_radius = 0.3;
  double inlier_angle = 10.0 * kPi / 180.0;
};

/// Consensus average of hypotheses: every hypothesis proposes itself as a
/// center; the largest agreeing set (ties: more feature inliers) is
/// averaged (mean position, circular-mean heading). nullopt when empty.
std::optional<PlanarPose> robust_average(std::span<const PoseHypothesis> hyps, const RobustAverageConfig& config = {});

}  // namespace retloc
