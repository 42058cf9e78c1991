#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "retloc/geometry.hpp"
#include "retloc/mapdb.hpp"
#include "retloc/posest.hpp"

namespace retloc {

inline constexpr double kCovarianceEpsilon = 1e-9;

/// Parameters of the measurement model. mu1/sigma1 describe the error
/// between the true pose and a single hypothesis (x, y, psi); mu2/sigma2
/// add the VLAD distance as a leading component.
struct GmmParams {
  Eigen::Vector3d mu1 = Eigen::Vector3d::Zero();
  Eigen::Matrix3d sigma1 = Eigen::Matrix3d::Identity();
  Eigen::Vector4d mu2 = Eigen::Vector4d::Zero();
  Eigen::Matrix4d sigma2 = Eigen::Matrix4d::Identity();

  /// Throws ConfigError unless both covariances are symmetric positive
  /// definite and every entry is finite.
  void validate() const;
  bool operator==(const GmmParams&) const = default;
};

/// Maximum likelihood fit. By default sigma is the uncentered second moment
/// (1/k) sum e e^T; `centered` gives the usual covariance. Adds epsilon*I
/// when the smallest eigenvalue is below epsilon. Throws
/// InsufficientSamples with fewer than two samples in either list.
GmmParams mle_fit(std::span<const Eigen::Vector3d> errors3, std::span<const Eigen::Vector4d> errors4,
                  bool centered = false);

/// Gaussian density of the 4-d error e (angle component wrapped) under
/// (mu2, sigma2).
double coefficient(const GmmParams& params, const Eigen::Vector4d& e);

/// Sum over hypotheses of c_i * N(z; hyp_i + mu1, sigma1), where c_i is the
/// coefficient of [e_vlad_i, hyp_i - particle]. Zero when it underflows.
double measurement_likelihood(const GmmParams& params, const PlanarPose& z, std::span<const PoseHypothesis> hyps,
                              const PlanarPose& particle, std::span<const double> e_vlad_per_hyp);

/// Precomputed factorizations of GmmParams for repeated evaluation in the
/// log domain.
class GmmModel {
 public:
  explicit GmmModel(const GmmParams& params);

  const GmmParams& params() const { return params_; }
  double log_component(const Eigen::Vector3d& e) const;
  double log_coefficient(const Eigen::Vector4d& e) const;

 private:
  GmmParams params_;
  Eigen::LLT<Eigen::Matrix3d> llt1_;
  Eigen::LLT<Eigen::Matrix4d> llt2_;
  double log_norm1_ = 0.0;
  double log_norm2_ = 0.0;
};

/// One filter measurement: the consensus pose and the hypotheses behind it.
struct Measurement {
  PlanarPose z;
  std::vector<PoseHypothesis> hypotheses;
  /// Per hypothesis, the VLAD distance to its source entry.
  std::vector<double> e_vlads;
};

/// log measurement_likelihood, computed with log-sum-exp. -inf when every
/// term vanishes exactly.
double log_measurement_likelihood(const GmmModel& model, const Measurement& m, const PlanarPose& particle);

struct Particle {
  PlanarPose pose;
  double weight = 0.0;

  bool operator==(const Particle&) const = default;
};

struct ParticleSet {
  std::vector<Particle> particles;
  bool normalized = false;

  std::size_t size() const { return particles.size(); }
  bool empty() const { return particles.empty(); }
  double weight_sum() const;
  /// Divides weights by their sum. Throws DataError if the sum is not
  /// positive and finite.
  void normalize();
  bool operator==(const ParticleSet&) const = default;
};

struct OdometryInput {
  double v_meas = 0.0;
  double gamma_meas = 0.0;
  double dt = 0.1;
  double v_lo = 0.0;
  double v_hi = 0.0;
  double g_lo = 0.0;
  double g_hi = 0.0;

  /// Throws ConfigError unless dt > 0 and both bound pairs are ordered.
  void validate() const;
};

/// Euler step of the unicycle model with uniform speed and yaw-rate noise.
/// Particle i draws from its own stream derived from (seed, i), so the result
/// does not depend on how the loop is split across threads. With substeps > 1
/// the sampled inputs are held over dt split into that many Euler steps.
ParticleSet propagate(const ParticleSet& p, const OdometryInput& u, std::uint64_t seed, int substeps = 1);

double effective_sample_size(const ParticleSet& p);

/// Systematic resampling with offset u0 in [0, 1): returns N equally
/// weighted copies.
ParticleSet systematic_resample(const ParticleSet& p, double u0);

struct UpdateConfig {
  /// Resample when ESS < resample_fraction * N.
  double resample_fraction = 0.5;
};

struct UpdateResult {
  ParticleSet particles;
  bool measurement_used = false;
  /// Every likelihood vanished; the prior weights were kept.
  bool likelihood_underflow = false;
  bool resampled = false;
  double ess = 0.0;
};

/// Reweights by the measurement likelihood and normalizes. Without a
/// measurement the set is returned untouched. Resamples when the effective
/// sample size drops below the configured fraction of N.
UpdateResult update(const ParticleSet& p, const GmmModel& model, const std::optional<Measurement>& measurement,
                    std::uint64_t seed, const UpdateConfig& config = {});

/// Weighted mean position and weighted circular-mean heading.
PlanarPose estimate(const ParticleSet& p);

ParticleSet initialize_gaussian(const PlanarPose& mean, const Eigen::Matrix3d& covariance, std::size_t n,
                                std::uint64_t seed);
ParticleSet initialize_uniform(const Rect& bounds, std::size_t n, std::uint64_t seed);

/// A training query with its ground-truth pose.
struct LabeledFrame {
  FeatureSet features;
  PlanarPose pose;
};

struct TrainingErrors {
  /// truth - hypothesis.
  std::vector<Eigen::Vector3d> errors3;
  /// [vlad distance, hypothesis - truth], the same orientation the filter
  /// uses when it compares a hypothesis with a particle.
  std::vector<Eigen::Vector4d> errors4;
};

TrainingErrors collect_training_errors(std::span<const LabeledFrame> frames, const MapDatabase& db, std::size_t k,
                                       const HypothesisConfig& config = {});

/// Pools hypothesis errors over the frames and fits the model. Throws
/// InsufficientSamples when fewer than two errors are collected.
GmmParams train_from_dataset(std::span<const LabeledFrame> frames, const MapDatabase& db, std::size_t k,
                             const HypothesisConfig& config = {}, bool centered = false);

}  // namespace retloc
