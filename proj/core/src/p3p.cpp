// Grunert's three-point pose solution. The distances along the three rays
// are parameterized as s2 = u*s1, s3 = v*s1; eliminating u from the law of
// cosines yields a quartic in v. The quartic is assembled by polynomial
// arithmetic and solved through its companion matrix.

#include <algorithm>
#include <cmath>
#include <complex>
#include <optional>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "retloc/posest.hpp"

namespace retloc {

namespace {

using Poly = std::vector<double>;  // ascending powers

Poly mul(const Poly& a, const Poly& b) {
  Poly r(a.size() + b.size() - 1, 0.0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < b.size(); ++j) r[i + j] += a[i] * b[j];
  }
  return r;
}

Poly add(const Poly& a, const Poly& b, double scale_b = 1.0) {
  Poly r(std::max(a.size(), b.size()), 0.0);
  for (std::size_t i = 0; i < a.size(); ++i) r[i] += a[i];
  for (std::size_t i = 0; i < b.size(); ++i) r[i] += scale_b * b[i];
  return r;
}

double eval(const Poly& p, double x) {
  double y = 0.0;
  for (auto it = p.rbegin(); it != p.rend(); ++it) y = y * x + *it;
  return y;
}

double eval_derivative(const Poly& p, double x) {
  double y = 0.0;
  for (std::size_t i = p.size() - 1; i >= 1; --i) y = y * x + static_cast<double>(i) * p[i];
  return y;
}

std::vector<double> real_roots(Poly p) {
  double scale = 0.0;
  for (double c : p) scale = std::max(scale, std::abs(c));
  if (scale == 0.0) return {};
  while (p.size() > 1 && std::abs(p.back()) <= 1e-14 * scale) p.pop_back();
  const std::size_t n = p.size() - 1;
  if (n == 0) return {};
  if (n == 1) return {-p[0] / p[1]};

  Eigen::MatrixXd companion = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t i = 1; i < n; ++i) companion(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i - 1)) = 1.0;
  for (std::size_t i = 0; i < n; ++i) {
    companion(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(n - 1)) = -p[i] / p[n];
  }
  Eigen::EigenSolver<Eigen::MatrixXd> solver(companion, false);
  std::vector<double> roots;
  for (Eigen::Index i = 0; i < solver.eigenvalues().size(); ++i) {
    const std::complex<double> z = solver.eigenvalues()[i];
    if (std::abs(z.imag()) > 1e-4 * (1.0 + std::abs(z.real()))) continue;
    double x = z.real();
    for (int it = 0; it < 4; ++it) {
      const double d = eval_derivative(p, x);
      if (d == 0.0) break;
      const double step = eval(p, x) / d;
      x -= step;
      if (std::abs(step) <= 1e-15 * (1.0 + std::abs(x))) break;
    }
    roots.push_back(x);
  }
  return roots;
}

// Least-squares rigid alignment with camera = R * world + t (Kabsch).
std::optional<RigidTransform3> align(std::span<const Eigen::Vector3d, 3> world, const Eigen::Vector3d camera[3]) {
  const Eigen::Vector3d cw = (world[0] + world[1] + world[2]) / 3.0;
  const Eigen::Vector3d cc = (camera[0] + camera[1] + camera[2]) / 3.0;
  Eigen::Matrix3d h = Eigen::Matrix3d::Zero();
  for (int i = 0; i < 3; ++i) h += (world[i] - cw) * (camera[i] - cc).transpose();
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  if (svd.singularValues()(1) <= 1e-12 * std::max(1.0, svd.singularValues()(0))) {
    return std::nullopt;  // collinear
  }
  Eigen::Matrix3d d = Eigen::Matrix3d::Identity();
  d(2, 2) = (svd.matrixV() * svd.matrixU().transpose()).determinant() < 0.0 ? -1.0 : 1.0;
  const Eigen::Matrix3d r = svd.matrixV() * d * svd.matrixU().transpose();
  return RigidTransform3(r, cc - r * cw);
}

}  // namespace

std::vector<RigidTransform3> solve_p3p(std::span<const Eigen::Vector3d, 3> world_points,
                                       std::span<const Eigen::Vector3d, 3> bearings) {
  const Eigen::Vector3d j1 = bearings[0].normalized();
  const Eigen::Vector3d j2 = bearings[1].normalized();
  const Eigen::Vector3d j3 = bearings[2].normalized();
  const double cos_alpha = j2.dot(j3);
  const double cos_beta = j1.dot(j3);
  const double cos_gamma = j1.dot(j2);
  const double a2 = (world_points[1] - world_points[2]).squaredNorm();
  const double b2 = (world_points[0] - world_points[2]).squaredNorm();
  const double c2 = (world_points[0] - world_points[1]).squaredNorm();
  if (b2 <= 0.0 || a2 <= 0.0 || c2 <= 0.0) return {};

  const double k = (a2 - c2) / b2;
  const double c_over_b = c2 / b2;
  // u = numer(v) / denom(v)
  const Poly numer{1.0 + k, -2.0 * k * cos_beta, k - 1.0};
  const Poly denom{2.0 * cos_gamma, -2.0 * cos_alpha};
  const Poly q{1.0, -2.0 * cos_beta, 1.0};  // 1 + v^2 - 2 v cos(beta)
  // (1 + u^2 - 2u cos(gamma)) - (c^2/b^2) q(v) = 0, multiplied through by denom^2.
  const Poly dd = mul(denom, denom);
  Poly quartic = add(dd, mul(numer, numer));
  quartic = add(quartic, mul(numer, denom), -2.0 * cos_gamma);
  quartic = add(quartic, mul(q, dd), -c_over_b);

  std::vector<RigidTransform3> solutions;
  const Eigen::Vector3d rays[3] = {j1, j2, j3};
  for (double v : real_roots(quartic)) {
    const double den = eval(denom, v);
    if (std::abs(den) < 1e-12) continue;
    const double u = eval(numer, v) / den;
    const double qv = eval(q, v);
    if (!(qv > 0.0) || !(u > 0.0) || !(v > 0.0)) continue;
    const double s1 = std::sqrt(b2 / qv);
    const double s[3] = {s1, u * s1, v * s1};
    Eigen::Vector3d camera[3];
    for (int i = 0; i < 3; ++i) camera[i] = s[i] * rays[i];
    if (auto pose = align(world_points, camera)) {
      solutions.push_back(*pose);
    }
  }
  return solutions;
}

}  // namespace retloc
