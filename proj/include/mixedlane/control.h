#ifndef MIXEDLANE_CONTROL_H_
#define MIXEDLANE_CONTROL_H_

#include "mixedlane/dynamics.h"
#include "mixedlane/track.h"

namespace mixedlane {

struct SteeringParams {
  double gain = 3.0;       // g, 1/m
  double damping = 0.4;    // d, m
  double feedforward = 0.16;  // l, m
  double max_steer = 0.6;  // rad

  void validate() const;
};

struct SteeringCommand {
  double angle = 0.0;
  bool heading_saturated = false;  // |psi_rel| >= pi/2, tan replaced by +-20
};

// phi = -g*delta - g*d*tan(psi_rel) + l*kappa, clamped to +-max_steer.
SteeringCommand steering_command(double offset, double relative_heading,
                                 double curvature, const SteeringParams& params);

struct PidGains {
  double kp = 2.0;
  double ki = 0.5;
  double kd = 0.0;
  double integral_limit = 5.0;
};

class SpeedTracker {
 public:
  enum class Mode { kIdeal, kPid };

  static SpeedTracker ideal(double accel_limit);
  static SpeedTracker pid(const PidGains& gains);

  Mode mode() const { return mode_; }
  double accel_limit() const { return accel_limit_; }
  const PidGains& gains() const { return gains_; }
  double integral() const { return integral_; }

  // Ideal mode returns the new speed, rate limited toward the command.
  // PID mode returns the controller output for the plant.
  double update(double current, double commanded, double dt);

  // Sets the integral so that a zero-error PID output equals `output`.
  void reset(double output = 0.0);

 private:
  Mode mode_ = Mode::kIdeal;
  double accel_limit_ = 4.0;
  PidGains gains_;
  double integral_ = 0.0;
  double previous_error_ = 0.0;
  bool has_previous_ = false;
};

double track_speed(SpeedTracker& tracker, double current, double commanded, double dt);

// Starts a change toward the adjacent lane in the given direction. Returns
// false (and leaves the state alone) when a change is already active or the
// destination does not exist.
bool begin_lane_change(VehicleState& state, LaneChangeStatus direction,
                       std::size_t lane_count);

struct LaneChangeThresholds {
  double offset_fraction = 0.05;  // of the lane width
  double heading = 0.1;           // rad
};

// Completes an active change once the vehicle is settled on the destination
// lane. `to_destination` is the projection onto the destination lane.
void lane_change_update(VehicleState& state, const Projection& to_destination,
                        double lane_width,
                        const LaneChangeThresholds& thresholds = {});

// Convenience overload that projects onto the destination lane itself.
void lane_change_update(VehicleState& state, const TrackSpec& track,
                        const LaneChangeThresholds& thresholds = {});

}  // namespace mixedlane

#endif  // MIXEDLANE_CONTROL_H_
