#include "oracles.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Eigenvalues>
#include <Eigen/Geometry>
#include <Eigen/LU>

namespace retloc::oracle {

int hamming_bits(const Descriptor& a, const Descriptor& b) {
  int n = 0;
  for (std::size_t i = 0; i < kDescriptorBits; ++i) n += a.bit(i) != b.bit(i) ? 1 : 0;
  return n;
}

std::vector<Match> match_double_loop(const FeatureSet& query, const FeatureSet& reference, const MatchConfig& config) {
  std::vector<Match> out;
  const auto& qd = query.descriptors;
  const auto& rd = reference.descriptors;
  for (std::size_t q = 0; q < qd.size(); ++q) {
    std::size_t best = 0;
    int best_d = 1 << 30;
    for (std::size_t r = 0; r < rd.size(); ++r) {
      const int d = hamming_bits(qd[q], rd[r]);
      if (d < best_d) {
        best_d = d;
        best = r;
      }
    }
    if (rd.empty() || best_d > config.max_distance) continue;
    if (config.cross_check) {
      std::size_t back = 0;
      int back_d = 1 << 30;
      for (std::size_t q2 = 0; q2 < qd.size(); ++q2) {
        const int d = hamming_bits(qd[q2], rd[best]);
        if (d < back_d) {
          back_d = d;
          back = q2;
        }
      }
      if (back != q) continue;
    }
    out.push_back({static_cast<std::uint32_t>(q), static_cast<std::uint32_t>(best), best_d});
  }
  std::sort(out.begin(), out.end(), [](const Match& a, const Match& b) {
    if (a.distance != b.distance) return a.distance < b.distance;
    if (a.ref_idx != b.ref_idx) return a.ref_idx < b.ref_idx;
    return a.query_idx < b.query_idx;
  });
  return out;
}

std::size_t nearest_center_scan(const Vocabulary& vocab, const Descriptor& d) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < vocab.k(); ++j) {
    double s = 0.0;
    for (std::size_t b = 0; b < kDescriptorBytes; ++b) {
      const double diff = static_cast<double>(d.bytes[b]) - vocab.centers()(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(b));
      s += diff * diff;
    }
    if (s < best_d) {
      best_d = s;
      best = j;
    }
  }
  return best;
}

Eigen::MatrixXd vlad_literal(const Vocabulary& vocab, std::span<const Descriptor> descriptors) {
  const auto k = static_cast<Eigen::Index>(vocab.k());
  Eigen::MatrixXd v = Eigen::MatrixXd::Zero(k, static_cast<Eigen::Index>(kDescriptorBytes));
  // (i) assign, (ii) residual, (iii) per-cluster sum
  for (const Descriptor& d : descriptors) {
    const auto j = static_cast<Eigen::Index>(nearest_center_scan(vocab, d));
    for (std::size_t b = 0; b < kDescriptorBytes; ++b) {
      const auto c = static_cast<Eigen::Index>(b);
      v(j, c) += static_cast<double>(d.bytes[b]) - vocab.centers()(j, c);
    }
  }
  // (iv) intra-normalization
  for (Eigen::Index r = 0; r < k; ++r) {
    double n = 0.0;
    for (Eigen::Index c = 0; c < v.cols(); ++c) n += v(r, c) * v(r, c);
    n = std::sqrt(n);
    if (n > 0.0) {
      for (Eigen::Index c = 0; c < v.cols(); ++c) v(r, c) /= n;
    }
  }
  // (v) global normalization
  double total = 0.0;
  for (Eigen::Index r = 0; r < k; ++r) {
    for (Eigen::Index c = 0; c < v.cols(); ++c) total += v(r, c) * v(r, c);
  }
  total = std::sqrt(total);
  if (total > 0.0) v /= total;
  return v;
}

std::vector<Neighbor> knn_full_sort(const MapDatabase& db, const VladMatrix& query, std::size_t k) {
  std::vector<Neighbor> all;
  for (const MapEntry& e : db.entries()) all.push_back({e.entry_id, e.vlad.distance(query)});
  std::stable_sort(all.begin(), all.end(), [](const Neighbor& a, const Neighbor& b) { return a.distance < b.distance; });
  all.resize(std::min(k, all.size()));
  return all;
}

double mvn_density(const Eigen::VectorXd& x, const Eigen::VectorXd& mu, const Eigen::MatrixXd& sigma) {
  const Eigen::VectorXd d = x - mu;
  const double q = d.dot(sigma.inverse() * d);
  const double det = (2.0 * kPi * sigma).determinant();
  return std::exp(-0.5 * q) / std::sqrt(det);
}

double mixture_sum(const GmmParams& p, const PlanarPose& z, std::span<const PoseHypothesis> hyps,
                   const PlanarPose& particle, std::span<const double> e_vlad) {
  double total = 0.0;
  for (std::size_t i = 0; i < hyps.size(); ++i) {
    const PlanarPose& h = hyps[i].pose;
    Eigen::Vector4d e(e_vlad[i], h.x() - particle.x(), h.y() - particle.y(), wrap_angle(h.psi() - particle.psi()));
    const double c = mvn_density(e, p.mu2, p.sigma2);
    // z ~ N(hyp + mu1, sigma1), the heading residual taken on the circle
    Eigen::Vector3d r(z.x() - h.x() - p.mu1.x(), z.y() - h.y() - p.mu1.y(),
                      wrap_angle(z.psi() - h.psi() - p.mu1.z()));
    total += c * mvn_density(r, Eigen::Vector3d::Zero(), p.sigma1);
  }
  return total;
}

namespace {

template <int N>
void fit(std::span<const Eigen::Matrix<double, N, 1>> e, bool centered, Eigen::Matrix<double, N, 1>& mu,
         Eigen::Matrix<double, N, N>& sigma) {
  mu.setZero();
  for (const auto& x : e) mu += x;
  mu /= static_cast<double>(e.size());
  sigma.setZero();
  for (const auto& x : e) {
    const Eigen::Matrix<double, N, 1> d = centered ? Eigen::Matrix<double, N, 1>(x - mu) : x;
    for (int r = 0; r < N; ++r) {
      for (int c = 0; c < N; ++c) sigma(r, c) += d(r) * d(c) / static_cast<double>(e.size());
    }
  }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, N, N>> eig(sigma);
  if (eig.eigenvalues().minCoeff() < kCovarianceEpsilon) sigma += kCovarianceEpsilon * Eigen::Matrix<double, N, N>::Identity();
}

}  // namespace

GmmParams mle_direct(std::span<const Eigen::Vector3d> e3, std::span<const Eigen::Vector4d> e4, bool centered) {
  GmmParams p;
  fit<3>(e3, centered, p.mu1, p.sigma1);
  fit<4>(e4, centered, p.mu2, p.sigma2);
  return p;
}

Descriptor random_descriptor(std::mt19937_64& rng) {
  Descriptor d;
  std::uniform_int_distribution<int> byte(0, 255);
  for (auto& b : d.bytes) b = static_cast<std::uint8_t>(byte(rng));
  return d;
}

RigidTransform3 random_camera_pose(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::Quaterniond q(n(rng), n(rng), n(rng), n(rng));
  q.normalize();
  std::uniform_real_distribution<double> t(-2.0, 2.0);
  return {q.toRotationMatrix(), Eigen::Vector3d(t(rng), t(rng), t(rng))};
}

Correspondences synthetic_correspondences(const RigidTransform3& pose, const CameraIntrinsics& intr, std::size_t n,
                                          double outlier_fraction, std::mt19937_64& rng) {
  Correspondences c;
  const RigidTransform3 world_from_camera = inverse(pose);
  std::uniform_real_distribution<double> depth(2.0, 10.0);
  std::uniform_real_distribution<double> u(0.0, intr.width);
  std::uniform_real_distribution<double> v(0.0, intr.height);
  while (c.points3d.size() < n) {
    const double z = depth(rng);
    const Eigen::Vector2d px(u(rng), v(rng));
    const Eigen::Vector3d pc((px.x() - intr.cx) / intr.fx * z, (px.y() - intr.cy) / intr.fy * z, z);
    c.points3d.push_back(world_from_camera.apply(pc));
    c.points2d.push_back(*project(intr, pc));
    c.outlier.push_back(false);
  }
  const auto n_out = static_cast<std::size_t>(std::round(outlier_fraction * static_cast<double>(n)));
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  std::shuffle(idx.begin(), idx.end(), rng);
  for (std::size_t j = 0; j < n_out; ++j) {
    const std::size_t i = idx[j];
    Eigen::Vector2d p;
    do {
      p = {u(rng), v(rng)};
    } while ((p - c.points2d[i]).norm() < 50.0);
    c.points2d[i] = p;
    c.outlier[i] = true;
  }
  return c;
}

Vocabulary random_vocabulary(std::size_t k, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  CenterMatrix c(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(kDescriptorBytes));
  for (std::size_t j = 0; j < k; ++j) c.row(static_cast<Eigen::Index>(j)) = embed(random_descriptor(rng)).transpose();
  return Vocabulary(c);
}

FeatureSet random_features(std::size_t n, bool with_points, std::mt19937_64& rng) {
  FeatureSet fs;
  std::uniform_real_distribution<float> u(0.0F, 640.0F);
  std::uniform_real_distribution<float> v(0.0F, 480.0F);
  std::uniform_real_distribution<float> xy(-2.0F, 2.0F);
  std::uniform_real_distribution<float> z(0.5F, 8.0F);
  for (std::size_t i = 0; i < n; ++i) {
    fs.keypoints.push_back({u(rng), v(rng)});
    fs.descriptors.push_back(random_descriptor(rng));
  }
  if (with_points) {
    fs.points3d.emplace();
    for (std::size_t i = 0; i < n; ++i) fs.points3d->emplace_back(xy(rng), xy(rng), z(rng));
  }
  return fs;
}

MapDatabase random_database(std::size_t entries, std::size_t features, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const Vocabulary vocab = random_vocabulary(kDefaultVocabularySize, seed + 1);
  MapDatabase db(vocab, MapMetadata{CameraIntrinsics{}, MountingTransform{}, seed});
  std::uniform_real_distribution<double> pos(-5.0, 5.0);
  std::uniform_real_distribution<double> ang(-kPi, kPi);
  for (std::size_t i = 0; i < entries; ++i) {
    FeatureSet fs = random_features(features, true, rng);
    fs.frame_id = static_cast<std::uint32_t>(i);
    db.add(build_entry(fs, PlanarPose(pos(rng), pos(rng), ang(rng)), vocab).entry);
  }
  return db;
}

Scenario make_scenario(const WorldConfig& wc, const SensorNoise& noise, const MappingConfig& mc, std::uint64_t seed) {
  Scenario s{World(wc), noise, CameraIntrinsics{}, default_mounting(), {}, {}, {}};
  s.run = run_mapping(s.world, mc, noise, s.intr, s.mounting, seed);
  KMeansConfig kc;
  kc.seed = seed;
  const KMeansResult vocab = train_vocabulary(s.run.mapping, kc);
  s.db = build_map(s.run.mapping, vocab.vocabulary, MapMetadata{s.intr, s.mounting, seed});
  s.params = train_from_dataset(s.run.training, s.db, kDefaultKnnK);
  return s;
}

}  // namespace retloc::oracle
