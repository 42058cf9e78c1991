#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Eigenvalues>

#include "retloc/errors.hpp"
#include "retloc/fusion.hpp"

namespace retloc {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

template <int N>
Eigen::Matrix<double, N, N> second_moment(std::span<const Eigen::Matrix<double, N, 1>> errors,
                                          const Eigen::Matrix<double, N, 1>& center) {
  Eigen::Matrix<double, N, N> s = Eigen::Matrix<double, N, N>::Zero();
  for (const auto& e : errors) {
    const Eigen::Matrix<double, N, 1> d = e - center;
    s.noalias() += d * d.transpose();
  }
  s /= static_cast<double>(errors.size());
  return 0.5 * (s + s.transpose());
}

template <int N>
void regularize(Eigen::Matrix<double, N, N>& sigma) {
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, N, N>> eig(sigma, Eigen::EigenvaluesOnly);
  if (eig.info() != Eigen::Success || !(eig.eigenvalues().minCoeff() >= kCovarianceEpsilon)) {
    sigma.diagonal().array() += kCovarianceEpsilon;
  }
}

template <int N>
Eigen::Matrix<double, N, 1> mean_of(std::span<const Eigen::Matrix<double, N, 1>> errors) {
  Eigen::Matrix<double, N, 1> m = Eigen::Matrix<double, N, 1>::Zero();
  for (const auto& e : errors) m += e;
  return m / static_cast<double>(errors.size());
}

template <int N>
bool is_spd(const Eigen::Matrix<double, N, N>& m) {
  if (!m.allFinite()) return false;
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-9 * std::max(1.0, m.cwiseAbs().maxCoeff())) return false;
  Eigen::LLT<Eigen::Matrix<double, N, N>> llt(m);
  return llt.info() == Eigen::Success;
}

template <int N>
double log_normalizer(const Eigen::LLT<Eigen::Matrix<double, N, N>>& llt) {
  const double log_det = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  return -0.5 * (N * kLog2Pi + log_det);
}

}  // namespace

void GmmParams::validate() const {
  if (!mu1.allFinite() || !mu2.allFinite()) {
    throw ConfigError("GMM means must be finite");
  }
  if (!is_spd<3>(sigma1) || !is_spd<4>(sigma2)) {
    throw ConfigError("GMM covariances must be symmetric positive definite");
  }
}

GmmParams mle_fit(std::span<const Eigen::Vector3d> errors3, std::span<const Eigen::Vector4d> errors4, bool centered) {
  if (errors3.size() < 2 || errors4.size() < 2) {
    throw InsufficientSamples("mle_fit needs at least two samples, got " + std::to_string(errors3.size()) + " and " +
                              std::to_string(errors4.size()));
  }
  GmmParams p;
  p.mu1 = mean_of<3>(errors3);
  p.mu2 = mean_of<4>(errors4);
  p.sigma1 = second_moment<3>(errors3, centered ? p.mu1 : Eigen::Vector3d::Zero());
  p.sigma2 = second_moment<4>(errors4, centered ? p.mu2 : Eigen::Vector4d::Zero());
  regularize<3>(p.sigma1);
  regularize<4>(p.sigma2);
  return p;
}

GmmModel::GmmModel(const GmmParams& params) : params_(params), llt1_(params.sigma1), llt2_(params.sigma2) {
  params_.validate();
  log_norm1_ = log_normalizer<3>(llt1_);
  log_norm2_ = log_normalizer<4>(llt2_);
}

double GmmModel::log_component(const Eigen::Vector3d& e) const {
  Eigen::Vector3d d = e - params_.mu1;
  d.z() = wrap_angle(d.z());
  return log_norm1_ - 0.5 * llt1_.matrixL().solve(d).squaredNorm();
}

double GmmModel::log_coefficient(const Eigen::Vector4d& e) const {
  Eigen::Vector4d d = e;
  d(3) = wrap_angle(d(3));
  d -= params_.mu2;
  return log_norm2_ - 0.5 * llt2_.matrixL().solve(d).squaredNorm();
}

double coefficient(const GmmParams& params, const Eigen::Vector4d& e) {
  return std::exp(GmmModel(params).log_coefficient(e));
}

namespace {

Eigen::Vector4d hypothesis_error(double e_vlad, const PoseHypothesis& h, const PlanarPose& particle) {
  const Eigen::Vector3d d = h.pose - particle;
  return {e_vlad, d.x(), d.y(), d.z()};
}

}  // namespace

double measurement_likelihood(const GmmParams& params, const PlanarPose& z, std::span<const PoseHypothesis> hyps,
                              const PlanarPose& particle, std::span<const double> e_vlad_per_hyp) {
  if (hyps.size() != e_vlad_per_hyp.size()) {
    throw DataError("measurement_likelihood: hypotheses and VLAD distances differ in length");
  }
  const GmmModel model(params);
  double sum = 0.0;
  for (std::size_t i = 0; i < hyps.size(); ++i) {
    const double c = std::exp(model.log_coefficient(hypothesis_error(e_vlad_per_hyp[i], hyps[i], particle)));
    sum += c * std::exp(model.log_component(z - hyps[i].pose));
  }
  return sum;
}

double log_measurement_likelihood(const GmmModel& model, const Measurement& m, const PlanarPose& particle) {
  double best = -std::numeric_limits<double>::infinity();
  thread_local std::vector<double> terms;
  terms.resize(m.hypotheses.size());
  for (std::size_t i = 0; i < m.hypotheses.size(); ++i) {
    const PoseHypothesis& h = m.hypotheses[i];
    terms[i] = model.log_coefficient(hypothesis_error(m.e_vlads[i], h, particle)) + model.log_component(m.z - h.pose);
    best = std::max(best, terms[i]);
  }
  if (!std::isfinite(best)) return best;
  double sum = 0.0;
  for (double t : terms) sum += std::exp(t - best);
  return best + std::log(sum);
}

}  // namespace retloc
