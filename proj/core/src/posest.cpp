#include "retloc/posest.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include <Eigen/Cholesky>

#include "retloc/errors.hpp"
#include "retloc/random.hpp"

namespace retloc {

namespace {

Eigen::Vector3d bearing(const CameraIntrinsics& intr, const Eigen::Vector2d& px) {
  return Eigen::Vector3d((px.x() - intr.cx) / intr.fx, (px.y() - intr.cy) / intr.fy, 1.0).normalized();
}

double sum_squared_error(const CameraIntrinsics& intr, const RigidTransform3& pose,
                         std::span<const Eigen::Vector3d> points3d, std::span<const Eigen::Vector2d> points2d,
                         std::span<const std::size_t> indices) {
  double sum = 0.0;
  for (std::size_t i : indices) {
    const double e = reprojection_error(intr, pose, points3d[i], points2d[i]);
    sum += e * e;
  }
  return sum;
}

Eigen::Matrix3d skew(const Eigen::Vector3d& v) {
  Eigen::Matrix3d m;
  m << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
  return m;
}

}  // namespace

double reprojection_error(const CameraIntrinsics& intr, const RigidTransform3& pose, const Eigen::Vector3d& p,
                          const Eigen::Vector2d& pixel) {
  const auto projected = project(intr, pose.apply(p));
  if (!projected) return std::numeric_limits<double>::infinity();
  return (*projected - pixel).norm();
}

RigidTransform3 refine_pose(const CameraIntrinsics& intr, const RigidTransform3& initial,
                            std::span<const Eigen::Vector3d> points3d, std::span<const Eigen::Vector2d> points2d,
                            std::span<const std::size_t> indices, std::size_t max_iterations) {
  RigidTransform3 pose = initial;
  double cost = sum_squared_error(intr, pose, points3d, points2d, indices);
  if (!std::isfinite(cost) || indices.size() < 3) return pose;
  double lambda = 1e-3;

  for (std::size_t iter = 0; iter < max_iterations; ++iter) {
    Eigen::Matrix<double, 6, 6> jtj = Eigen::Matrix<double, 6, 6>::Zero();
    Eigen::Matrix<double, 6, 1> jtr = Eigen::Matrix<double, 6, 1>::Zero();
    for (std::size_t i : indices) {
      const Eigen::Vector3d pc = pose.apply(points3d[i]);
      const double iz = 1.0 / pc.z();
      const Eigen::Vector2d r(intr.fx * pc.x() * iz + intr.cx - points2d[i].x(),
                              intr.fy * pc.y() * iz + intr.cy - points2d[i].y());
      Eigen::Matrix<double, 2, 3> dpix;
      dpix << intr.fx * iz, 0.0, -intr.fx * pc.x() * iz * iz, 0.0, intr.fy * iz, -intr.fy * pc.y() * iz * iz;
      // Left perturbation: pc' = pc + w x pc + v.
      Eigen::Matrix<double, 3, 6> dpc;
      dpc.leftCols<3>() = -skew(pc);
      dpc.rightCols<3>() = Eigen::Matrix3d::Identity();
      const Eigen::Matrix<double, 2, 6> j = dpix * dpc;
      jtj.noalias() += j.transpose() * j;
      jtr.noalias() += j.transpose() * r;
    }

    bool improved = false;
    for (int attempt = 0; attempt < 10 && !improved; ++attempt) {
      Eigen::Matrix<double, 6, 6> a = jtj;
      a.diagonal() += lambda * jtj.diagonal().cwiseMax(1e-9);
      const Eigen::Matrix<double, 6, 1> delta = -a.ldlt().solve(jtr);
      if (!delta.allFinite()) break;
      const Eigen::Matrix3d dr = Eigen::AngleAxisd(delta.head<3>().norm(),
                                                   delta.head<3>().norm() > 0.0 ? Eigen::Vector3d(delta.head<3>().normalized())
                                                                                : Eigen::Vector3d::UnitZ())
                                     .toRotationMatrix();
      const RigidTransform3 candidate =
          RigidTransform3(dr * pose.rotation(), dr * pose.translation() + delta.tail<3>()).orthonormalized();
      const double candidate_cost = sum_squared_error(intr, candidate, points3d, points2d, indices);
      if (candidate_cost < cost) {
        const double decrease = cost - candidate_cost;
        pose = candidate;
        cost = candidate_cost;
        lambda = std::max(lambda * 0.3, 1e-12);
        improved = true;
        if (decrease <= 1e-14 * (1.0 + cost)) return pose;
      } else {
        lambda *= 10.0;
      }
    }
    if (!improved) break;
  }
  return pose;
}

PnPOutcome solve_pnp_ransac(std::span<const Eigen::Vector3d> points3d_ref, std::span<const Eigen::Vector2d> points2d_query,
                            const CameraIntrinsics& intr, const RansacConfig& config) {
  PnPOutcome outcome;
  const std::size_t n = std::min(points3d_ref.size(), points2d_query.size());
  if (points3d_ref.size() != points2d_query.size()) {
    throw DataError("solve_pnp_ransac: correspondence lists differ in length");
  }
  if (n < 4) {
    outcome.failure = PnPFailure::kTooFewPoints;
    return outcome;
  }

  std::vector<Eigen::Vector3d> bearings(n);
  for (std::size_t i = 0; i < n; ++i) bearings[i] = bearing(intr, points2d_query[i]);

  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);

  const double threshold = config.reprojection_threshold_px;
  std::size_t best_count = 0;
  double best_sse = std::numeric_limits<double>::infinity();
  RigidTransform3 best_pose;
  std::vector<std::size_t> inliers;
  inliers.reserve(n);
  std::size_t needed = config.max_iterations;
  std::size_t iter = 0;

  for (; iter < std::min(needed, config.max_iterations); ++iter) {
    // Partial Fisher-Yates for four distinct indices.
    for (std::size_t s = 0; s < 4; ++s) {
      std::uniform_int_distribution<std::size_t> pick(s, n - 1);
      std::swap(order[s], order[pick(rng)]);
    }
    const std::array<Eigen::Vector3d, 3> world{points3d_ref[order[0]], points3d_ref[order[1]], points3d_ref[order[2]]};
    const std::array<Eigen::Vector3d, 3> rays{bearings[order[0]], bearings[order[1]], bearings[order[2]]};
    const auto candidates = solve_p3p(world, rays);
    if (candidates.empty()) continue;

    // The fourth correspondence picks the cheapest solution.
    const RigidTransform3* model = nullptr;
    double model_err = std::numeric_limits<double>::infinity();
    for (const RigidTransform3& c : candidates) {
      const double e = reprojection_error(intr, c, points3d_ref[order[3]], points2d_query[order[3]]);
      if (e < model_err) {
        model_err = e;
        model = &c;
      }
    }
    if (model == nullptr || !std::isfinite(model_err)) continue;

    std::size_t count = 0;
    double sse = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double e = reprojection_error(intr, *model, points3d_ref[i], points2d_query[i]);
      if (e < threshold) {
        ++count;
        sse += e * e;
      }
    }
    if (count > best_count || (count == best_count && count > 0 && sse < best_sse)) {
      best_count = count;
      best_sse = sse;
      best_pose = *model;
      const double w = static_cast<double>(count) / static_cast<double>(n);
      const double p_good = std::pow(w, 4.0);
      if (p_good >= 1.0) {
        needed = iter + 1;
      } else if (p_good > 0.0) {
        const double k = std::log(1.0 - config.confidence) / std::log(1.0 - p_good);
        needed = std::isfinite(k) ? static_cast<std::size_t>(std::ceil(std::max(k, 1.0))) : config.max_iterations;
      }
    }
  }

  if (best_count < std::max<std::size_t>(config.min_inliers, 4)) {
    outcome.failure = PnPFailure::kNoConsensus;
    return outcome;
  }

  for (std::size_t i = 0; i < n; ++i) {
    if (reprojection_error(intr, best_pose, points3d_ref[i], points2d_query[i]) < threshold) inliers.push_back(i);
  }
  PnPResult result;
  result.iterations = iter;
  result.initial_rmse = std::sqrt(sum_squared_error(intr, best_pose, points3d_ref, points2d_query, inliers) /
                                  static_cast<double>(inliers.size()));
  result.relative = refine_pose(intr, best_pose, points3d_ref, points2d_query, inliers, config.refine_iterations);
  result.reprojection_rmse = std::sqrt(sum_squared_error(intr, result.relative, points3d_ref, points2d_query, inliers) /
                                       static_cast<double>(inliers.size()));
  result.inlier_count = inliers.size();
  result.inlier_indices = std::move(inliers);
  outcome.result = std::move(result);
  return outcome;
}

double relative_yaw(const RigidTransform3& query_from_reference) {
  const Eigen::Matrix3d& b = body_from_optical();
  // Rotation of the query camera body expressed in the reference body frame.
  const Eigen::Matrix3d r = b * query_from_reference.rotation().transpose() * b.transpose();
  return yaw_of(r);
}

std::vector<PoseHypothesis> hypothesize(const MapDatabase& db, const FeatureSet& query,
                                        std::span<const Neighbor> retrieved, const CameraIntrinsics& intr,
                                        const MountingTransform& mounting, const HypothesisConfig& config,
                                        HypothesisStats* stats) {
  HypothesisStats local;
  std::vector<PoseHypothesis> out;
  local.retrieved = retrieved.size();
  const double fov = intr.horizontal_fov();

  std::vector<Eigen::Vector3d> pts3;
  std::vector<Eigen::Vector2d> pts2;
  for (const Neighbor& nb : retrieved) {
    const MapEntry& entry = db.entry(nb.entry_id);
    const std::vector<Match> matches = match_bruteforce(query, entry.features, config.match);
    pts3.clear();
    pts2.clear();
    for (const Match& m : matches) {
      if (!entry.features.has_point3d(m.ref_idx)) continue;
      pts3.push_back((*entry.features.points3d)[m.ref_idx].cast<double>());
      const Keypoint& kp = query.keypoints[m.query_idx];
      pts2.emplace_back(kp.u, kp.v);
    }
    if (pts3.size() < 4) {
      ++local.too_few_matches;
      continue;
    }
    RansacConfig rc = config.ransac;
    rc.seed = mix_seed(config.ransac.seed, (static_cast<std::uint64_t>(query.frame_id) << 32) | nb.entry_id);
    const PnPOutcome pnp = solve_pnp_ransac(pts3, pts2, intr, rc);
    if (!pnp) {
      ++local.no_consensus;
      continue;
    }
    const RigidTransform3& query_from_ref = pnp.result->relative;
    if (config.fov_gate && std::abs(relative_yaw(query_from_ref)) > fov) {
      ++local.fov_rejected;
      continue;
    }
    const RigidTransform3 world_ref = planar_to_optical(entry.pose, mounting);
    const RigidTransform3 world_query = compose(world_ref, inverse(query_from_ref));
    PoseHypothesis h;
    h.pose = optical_to_planar(world_query, mounting);
    h.source_entry = nb.entry_id;
    h.weight_features = pnp.result->inlier_count;
    h.vlad_distance = nb.distance;
    local.total_inliers += h.weight_features;
    ++local.accepted;
    out.push_back(h);
  }
  if (stats) *stats = local;
  return out;
}

std::optional<PlanarPose> robust_average(std::span<const PoseHypothesis> hyps, const RobustAverageConfig& config) {
  if (hyps.empty()) return std::nullopt;

  // Both limits are inclusive; the slack absorbs rounding in the wrap.
  constexpr double kSlack = 1e-9;
  auto agrees = [&](const PlanarPose& center, const PlanarPose& p) {
    return (p.position() - center.position()).norm() <= config.inlier_radius + kSlack &&
           std::abs(wrap_angle(p.psi() - center.psi())) <= config.inlier_angle + kSlack;
  };
  auto average = [&](const std::vector<std::size_t>& members) {
    double sx = 0.0;
    double sy = 0.0;
    std::vector<double> angles;
    angles.reserve(members.size());
    for (std::size_t i : members) {
      sx += hyps[i].pose.x();
      sy += hyps[i].pose.y();
      angles.push_back(hyps[i].pose.psi());
    }
    const double n = static_cast<double>(members.size());
    return PlanarPose(sx / n, sy / n, circular_mean(angles));
  };

  std::vector<std::size_t> best;
  std::size_t best_features = 0;
  PlanarPose best_pose;
  std::vector<std::size_t> members;
  for (std::size_t c = 0; c < hyps.size(); ++c) {
    members.clear();
    std::size_t features = 0;
    for (std::size_t i = 0; i < hyps.size(); ++i) {
      if (agrees(hyps[c].pose, hyps[i].pose)) {
        members.push_back(i);
        features += hyps[i].weight_features;
      }
    }
    bool better = members.size() > best.size() || (members.size() == best.size() && features > best_features);
    PlanarPose candidate;
    if (!better && members.size() == best.size() && features == best_features) {
      // Full tie: prefer the lexicographically smallest average so the
      // result does not depend on input order.
      candidate = average(members);
      better = std::tuple(candidate.x(), candidate.y(), candidate.psi()) <
               std::tuple(best_pose.x(), best_pose.y(), best_pose.psi());
    } else if (better) {
      candidate = average(members);
    }
    if (better) {
      best = members;
      best_features = features;
      best_pose = candidate;
    }
  }
  return best_pose;
}

}  // namespace retloc
