#include "mixedlane/control.h"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace mixedlane {

namespace {
constexpr double kTanLimit = 20.0;
}

void SteeringParams::validate() const {
  if (!(gain > 0.0 && damping > 0.0 && feedforward >= 0.0 && max_steer > 0.0)) {
    throw std::invalid_argument("steering gains must satisfy g > 0, d > 0, l >= 0");
  }
}

SteeringCommand steering_command(double offset, double relative_heading,
                                 double curvature, const SteeringParams& params) {
  if (!std::isfinite(offset) || !std::isfinite(relative_heading) ||
      !std::isfinite(curvature)) {
    throw std::invalid_argument("steering inputs must be finite");
  }
  SteeringCommand cmd;
  double t;
  if (std::abs(relative_heading) >= std::numbers::pi / 2.0) {
    cmd.heading_saturated = true;
    t = std::copysign(kTanLimit, relative_heading);
  } else {
    t = std::clamp(std::tan(relative_heading), -kTanLimit, kTanLimit);
  }
  const double raw = -params.gain * offset - params.gain * params.damping * t +
                     params.feedforward * curvature;
  cmd.angle = std::clamp(raw, -params.max_steer, params.max_steer);
  return cmd;
}

SpeedTracker SpeedTracker::ideal(double accel_limit) {
  if (!(accel_limit > 0.0)) throw std::invalid_argument("accel limit must be > 0");
  SpeedTracker t;
  t.mode_ = Mode::kIdeal;
  t.accel_limit_ = accel_limit;
  return t;
}

SpeedTracker SpeedTracker::pid(const PidGains& gains) {
  if (!(gains.integral_limit > 0.0)) {
    throw std::invalid_argument("integral limit must be > 0");
  }
  SpeedTracker t;
  t.mode_ = Mode::kPid;
  t.gains_ = gains;
  return t;
}

double SpeedTracker::update(double current, double commanded, double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("dt must be positive");
  if (mode_ == Mode::kIdeal) {
    const double step = accel_limit_ * dt;
    return current + std::clamp(commanded - current, -step, step);
  }
  const double error = commanded - current;
  integral_ = std::clamp(integral_ + error * dt, -gains_.integral_limit,
                         gains_.integral_limit);
  const double derivative = has_previous_ ? (error - previous_error_) / dt : 0.0;
  previous_error_ = error;
  has_previous_ = true;
  return gains_.kp * error + gains_.ki * integral_ + gains_.kd * derivative;
}

void SpeedTracker::reset(double output) {
  integral_ = (gains_.ki > 0.0)
                  ? std::clamp(output / gains_.ki, -gains_.integral_limit,
                               gains_.integral_limit)
                  : 0.0;
  previous_error_ = 0.0;
  has_previous_ = false;
}

double track_speed(SpeedTracker& tracker, double current, double commanded, double dt) {
  return tracker.update(current, commanded, dt);
}

bool begin_lane_change(VehicleState& state, LaneChangeStatus direction,
                       std::size_t lane_count) {
  if (state.changing_lane() || direction == LaneChangeStatus::kNone) return false;
  if (direction == LaneChangeStatus::kChangingLeft) {
    if (state.lane == 0) return false;
    state.target_lane = state.lane - 1;
  } else {
    if (state.lane + 1 >= lane_count) return false;
    state.target_lane = state.lane + 1;
  }
  state.lane_change = direction;
  return true;
}

void lane_change_update(VehicleState& state, const Projection& to_destination,
                        double lane_width, const LaneChangeThresholds& thresholds) {
  if (!state.changing_lane()) return;
  const double rel = wrap_angle(state.heading - to_destination.heading);
  if (std::abs(to_destination.offset) < thresholds.offset_fraction * lane_width &&
      std::abs(rel) < thresholds.heading) {
    state.lane = state.target_lane;
    state.lane_change = LaneChangeStatus::kNone;
  }
}

void lane_change_update(VehicleState& state, const TrackSpec& track,
                        const LaneChangeThresholds& thresholds) {
  if (!state.changing_lane()) return;
  if (state.target_lane >= track.lane_count()) {
    state.lane_change = LaneChangeStatus::kNone;
    return;
  }
  const Projection p = track.lane(state.target_lane)
                           .project(Vec2(state.x, state.y), 10.0 * track.lane_width());
  lane_change_update(state, p, track.lane_width(), thresholds);
}

}  // namespace mixedlane
