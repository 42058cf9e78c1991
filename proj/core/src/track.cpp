#include <algorithm>
#include <cmath>
#include <limits>

#include "retloc/errors.hpp"
#include "retloc/sim.hpp"

namespace retloc {

Track::Track(double straight_x, double straight_y, double radius)
    : straight_x_(straight_x), straight_y_(straight_y), radius_(radius) {
  if (!(straight_x >= 0.0) || !(straight_y >= 0.0) || !(radius > 0.0)) {
    throw ConfigError("track dimensions must be non-negative with a positive corner radius");
  }
  const double hx = straight_x / 2.0;
  const double hy = straight_y / 2.0;
  const double arc = kPi / 2.0 * radius;
  double s = 0.0;
  auto line = [&](std::size_t i, double x, double y, double heading, double len) {
    pieces_[i] = {false, s, len, {x, y}, heading};
    s += len;
  };
  auto corner = [&](std::size_t i, double cx, double cy, double start_angle) {
    pieces_[i] = {true, s, arc, {cx, cy}, start_angle};
    s += arc;
  };
  line(0, -hx, -hy - radius, 0.0, straight_x);
  corner(1, hx, -hy, -kPi / 2.0);
  line(2, hx + radius, -hy, kPi / 2.0, straight_y);
  corner(3, hx, hy, 0.0);
  line(4, hx, hy + radius, kPi, straight_x);
  corner(5, -hx, hy, kPi / 2.0);
  line(6, -hx - radius, hy, -kPi / 2.0, straight_y);
  corner(7, -hx, -hy, kPi);
  length_ = s;
}

PlanarPose Track::pose_on(const Piece& piece, double ds) const {
  if (!piece.arc) {
    return PlanarPose(piece.start.x() + ds * std::cos(piece.heading), piece.start.y() + ds * std::sin(piece.heading),
                      piece.heading);
  }
  const double angle = piece.heading + ds / radius_;
  return PlanarPose(piece.start.x() + radius_ * std::cos(angle), piece.start.y() + radius_ * std::sin(angle),
                    angle + kPi / 2.0);
}

PlanarPose Track::pose_at(double s) const {
  s = std::fmod(s, length_);
  if (s < 0.0) s += length_;
  for (std::size_t i = pieces_.size(); i-- > 0;) {
    if (s >= pieces_[i].s0) return pose_on(pieces_[i], s - pieces_[i].s0);
  }
  return pose_on(pieces_[0], s);
}

double Track::curvature_at(double s) const {
  s = std::fmod(s, length_);
  if (s < 0.0) s += length_;
  for (std::size_t i = pieces_.size(); i-- > 0;) {
    if (s >= pieces_[i].s0) return pieces_[i].arc ? 1.0 / radius_ : 0.0;
  }
  return 0.0;
}

Track::Projection Track::project(double x, double y) const {
  const Eigen::Vector2d p(x, y);
  Projection best;
  double best_d2 = std::numeric_limits<double>::infinity();
  for (const Piece& piece : pieces_) {
    double ds = 0.0;
    if (!piece.arc) {
      const Eigen::Vector2d dir(std::cos(piece.heading), std::sin(piece.heading));
      ds = std::clamp((p - piece.start).dot(dir), 0.0, piece.length);
    } else {
      const Eigen::Vector2d r = p - piece.start;
      const double angle = r.squaredNorm() > 0.0 ? std::atan2(r.y(), r.x()) : piece.heading;
      const double rel = wrap_angle(angle - piece.heading);
      if (rel >= 0.0 && rel <= kPi / 2.0) {
        ds = rel * radius_;
      } else {
        const double d_start = (pose_on(piece, 0.0).position() - p).squaredNorm();
        const double d_end = (pose_on(piece, piece.length).position() - p).squaredNorm();
        ds = d_start <= d_end ? 0.0 : piece.length;
      }
    }
    const PlanarPose foot = pose_on(piece, ds);
    const double d2 = (foot.position() - p).squaredNorm();
    if (d2 < best_d2) {
      best_d2 = d2;
      const Eigen::Vector2d tangent(std::cos(foot.psi()), std::sin(foot.psi()));
      const Eigen::Vector2d offset = p - foot.position();
      best.s = piece.s0 + ds;
      best.lateral = tangent.x() * offset.y() - tangent.y() * offset.x();
      best.foot = foot;
      best.curvature = piece.arc ? 1.0 / radius_ : 0.0;
    }
  }
  if (best.s >= length_) best.s -= length_;
  return best;
}

Rect Track::bounds() const {
  const double hx = straight_x_ / 2.0 + radius_;
  const double hy = straight_y_ / 2.0 + radius_;
  return {-hx, -hy, hx, hy};
}

}  // namespace retloc
