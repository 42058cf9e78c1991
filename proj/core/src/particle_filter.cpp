#include <cmath>
#include <random>

#include "retloc/errors.hpp"
#include "retloc/fusion.hpp"
#include "retloc/parallel.hpp"
#include "retloc/random.hpp"

namespace retloc {

double ParticleSet::weight_sum() const {
  double s = 0.0;
  for (const Particle& p : particles) s += p.weight;
  return s;
}

void ParticleSet::normalize() {
  const double s = weight_sum();
  if (!(s > 0.0) || !std::isfinite(s)) {
    throw DataError("cannot normalize particle weights with sum " + std::to_string(s));
  }
  for (Particle& p : particles) p.weight /= s;
  normalized = true;
}

void OdometryInput::validate() const {
  if (!(dt > 0.0)) throw ConfigError("odometry dt must be positive");
  if (!(v_lo <= v_hi) || !(g_lo <= g_hi)) throw ConfigError("odometry noise bounds are not ordered");
  if (!std::isfinite(v_meas) || !std::isfinite(gamma_meas)) throw ConfigError("odometry measurement is not finite");
}

ParticleSet propagate(const ParticleSet& p, const OdometryInput& u, std::uint64_t seed, int substeps) {
  u.validate();
  if (substeps < 1) throw ConfigError("propagate needs at least one substep");
  const double h = u.dt / substeps;
  ParticleSet out;
  out.normalized = p.normalized;
  out.particles.resize(p.size());
  parallel_for(p.size(), 256, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      SplitMix64 rng(mix_seed(seed, i));
      const double wv = u.v_lo + (u.v_hi - u.v_lo) * rng.uniform();
      const double wg = u.g_lo + (u.g_hi - u.g_lo) * rng.uniform();
      const double v = u.v_meas + wv;
      const double g = u.gamma_meas + wg;
      const PlanarPose& s = p.particles[i].pose;
      double x = s.x();
      double y = s.y();
      double psi = s.psi();
      for (int k = 0; k < substeps; ++k) {
        x += v * std::cos(psi) * h;
        y += v * std::sin(psi) * h;
        psi += g * h;
      }
      out.particles[i].pose = PlanarPose(x, y, psi);
      out.particles[i].weight = p.particles[i].weight;
    }
  });
  return out;
}

double effective_sample_size(const ParticleSet& p) {
  const double s = p.weight_sum();
  if (!(s > 0.0)) return 0.0;
  double s2 = 0.0;
  for (const Particle& q : p.particles) s2 += (q.weight / s) * (q.weight / s);
  return 1.0 / s2;
}

ParticleSet systematic_resample(const ParticleSet& p, double u0) {
  if (p.empty()) return p;
  if (!(u0 >= 0.0 && u0 < 1.0)) throw DataError("systematic_resample offset must lie in [0, 1)");
  const std::size_t n = p.size();
  const double total = p.weight_sum();
  if (!(total > 0.0) || !std::isfinite(total)) throw DataError("cannot resample particles with zero total weight");

  ParticleSet out;
  out.normalized = true;
  out.particles.reserve(n);
  const double w = 1.0 / static_cast<double>(n);
  double cumulative = p.particles[0].weight / total * static_cast<double>(n);
  std::size_t j = 0;
  for (std::size_t m = 0; m < n; ++m) {
    const double target = u0 + static_cast<double>(m);
    while (target >= cumulative && j + 1 < n) {
      ++j;
      cumulative += p.particles[j].weight / total * static_cast<double>(n);
    }
    out.particles.push_back({p.particles[j].pose, w});
  }
  return out;
}

UpdateResult update(const ParticleSet& p, const GmmModel& model, const std::optional<Measurement>& measurement,
                    std::uint64_t seed, const UpdateConfig& config) {
  UpdateResult r;
  if (!measurement || measurement->hypotheses.empty()) {
    r.particles = p;
    r.ess = effective_sample_size(p);
    return r;
  }
  if (measurement->hypotheses.size() != measurement->e_vlads.size()) {
    throw DataError("measurement hypotheses and VLAD distances differ in length");
  }
  r.measurement_used = true;

  const std::size_t n = p.size();
  std::vector<double> log_w(n);
  parallel_for(n, 128, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      log_w[i] = std::log(p.particles[i].weight) + log_measurement_likelihood(model, *measurement, p.particles[i].pose);
    }
  });
  double best = -std::numeric_limits<double>::infinity();
  for (double l : log_w) {
    if (!std::isnan(l)) best = std::max(best, l);
  }

  r.particles = p;
  if (!std::isfinite(best)) {
    r.likelihood_underflow = true;
    if (!r.particles.normalized && r.particles.weight_sum() > 0.0) r.particles.normalize();
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      r.particles.particles[i].weight = std::isnan(log_w[i]) ? 0.0 : std::exp(log_w[i] - best);
    }
    r.particles.normalize();
  }

  r.ess = effective_sample_size(r.particles);
  if (r.ess < config.resample_fraction * static_cast<double>(n)) {
    SplitMix64 rng(mix_seed(seed, 0x5EED));
    r.particles = systematic_resample(r.particles, rng.uniform());
    r.resampled = true;
  }
  return r;
}

PlanarPose estimate(const ParticleSet& p) {
  if (p.empty()) throw DataError("cannot estimate from an empty particle set");
  const double total = p.weight_sum();
  if (!(total > 0.0)) throw DataError("cannot estimate from zero-weight particles");
  double x = 0.0;
  double y = 0.0;
  std::vector<double> angles(p.size());
  std::vector<double> weights(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    const Particle& q = p.particles[i];
    x += q.weight * q.pose.x();
    y += q.weight * q.pose.y();
    angles[i] = q.pose.psi();
    weights[i] = q.weight;
  }
  return PlanarPose(x / total, y / total, circular_mean(angles, weights));
}

ParticleSet initialize_gaussian(const PlanarPose& mean, const Eigen::Matrix3d& covariance, std::size_t n,
                                std::uint64_t seed) {
  Eigen::LLT<Eigen::Matrix3d> llt(covariance);
  if (llt.info() != Eigen::Success) throw ConfigError("initial covariance is not positive definite");
  const Eigen::Matrix3d l = llt.matrixL();
  ParticleSet out;
  out.normalized = true;
  out.particles.resize(n);
  const double w = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::mt19937_64 rng(mix_seed(seed, i));
    std::normal_distribution<double> normal;
    const Eigen::Vector3d z(normal(rng), normal(rng), normal(rng));
    const Eigen::Vector3d d = l * z;
    out.particles[i] = {PlanarPose(mean.x() + d.x(), mean.y() + d.y(), mean.psi() + d.z()), w};
  }
  return out;
}

ParticleSet initialize_uniform(const Rect& bounds, std::size_t n, std::uint64_t seed) {
  ParticleSet out;
  out.normalized = true;
  out.particles.resize(n);
  const double w = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    SplitMix64 rng(mix_seed(seed, i));
    const double x = bounds.min_x + (bounds.max_x - bounds.min_x) * rng.uniform();
    const double y = bounds.min_y + (bounds.max_y - bounds.min_y) * rng.uniform();
    const double psi = -kPi + 2.0 * kPi * rng.uniform();
    out.particles[i] = {PlanarPose(x, y, psi), w};
  }
  return out;
}

}  // namespace retloc
