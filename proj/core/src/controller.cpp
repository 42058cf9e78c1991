#include <algorithm>
#include <cmath>

#include "retloc/errors.hpp"
#include "retloc/sim.hpp"

namespace retloc {

PlanarPose step_bicycle(const PlanarPose& pose, double v, double steer, double dt, const VehicleParams& params) {
  if (!(dt > 0.0) || params.substeps < 1 || !(params.wheelbase > 0.0)) {
    throw ConfigError("invalid vehicle step parameters");
  }
  const double delta = std::clamp(steer, -params.max_steer, params.max_steer);
  const double yaw_rate = v * std::tan(delta) / params.wheelbase;
  const double h = dt / params.substeps;
  double x = pose.x();
  double y = pose.y();
  double psi = pose.psi();
  for (int i = 0; i < params.substeps; ++i) {
    x += v * std::cos(psi) * h;
    y += v * std::sin(psi) * h;
    psi += yaw_rate * h;
  }
  return PlanarPose(x, y, psi);
}

ControlCommand pid_step(const Track& path, const PlanarPose& pose, double v_ref, const PidGains& gains,
                        PidState& state) {
  const Track::Projection proj = path.project(pose.x(), pose.y());
  const double lateral_error = -proj.lateral;
  const double heading_error = wrap_angle(proj.foot.psi() - pose.psi());
  const double error = lateral_error + gains.heading_weight * heading_error;

  state.integral += error * gains.dt;
  const double derivative = state.has_previous ? (error - state.previous_error) / gains.dt : 0.0;
  state.previous_error = error;
  state.has_previous = true;

  const double feedforward = std::atan(gains.wheelbase * proj.curvature);
  const double correction = gains.kp * error + gains.ki * state.integral + gains.kd * derivative;
  ControlCommand cmd;
  cmd.v_cmd = v_ref;
  cmd.steer_cmd = std::clamp(feedforward + correction, -gains.max_steer, gains.max_steer);
  return cmd;
}

}  // namespace retloc
