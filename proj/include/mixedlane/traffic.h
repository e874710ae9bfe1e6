#ifndef MIXEDLANE_TRAFFIC_H_
#define MIXEDLANE_TRAFFIC_H_

#include <limits>
#include <optional>

namespace mixedlane {

struct IdmParams {
  double max_accel = 0.75;          // alpha, m/s^2
  double comfortable_decel = 1.0;   // beta, m/s^2
  double exponent = 4.0;
  double jam_distance = 0.25;       // s0, m; >= the gap needed to steer out from standstill
  double time_headway = 1.0;        // T, s

  void validate() const;
  double hard_decel() const { return 4.0 * comfortable_decel; }
};

struct MobilParams {
  double politeness = 0.5;
  double threshold = 0.05;   // m/s^2
  double safe_decel = 1.5;   // beta_n, m/s^2
  double cooldown = 1.0;     // s between changes of one vehicle
  double min_leader_gap = 0.20;  // m of room ahead needed to steer out of the lane

  void validate() const;
};

inline constexpr double kNoLeaderGap = std::numeric_limits<double>::infinity();

// s* = max(s0, s0 + T v + v dv / (2 sqrt(alpha beta))); dv > 0 when closing.
double desired_gap(double speed, double approach_rate, const IdmParams& params);

// IDM acceleration clamped to [-4 beta, alpha]. Pass kNoLeaderGap with
// approach_rate 0 for a free road.
double idm_acceleration(double speed, double target_speed, double gap,
                        double approach_rate, const IdmParams& params);

struct MobilNeighbor {
  double gap = kNoLeaderGap;  // bumper-to-bumper distance to the ego vehicle
  double speed = 0.0;
  double target_speed = 1.0;
};

struct MobilSide {
  std::optional<MobilNeighbor> leader;
  std::optional<MobilNeighbor> follower;
};

struct MobilContext {
  double speed = 0.0;
  double target_speed = 1.0;
  double length = 0.32;  // ego body length
  std::optional<MobilNeighbor> leader;
  std::optional<MobilNeighbor> follower;
  std::optional<MobilSide> left;   // nullopt: no lane on that side
  std::optional<MobilSide> right;
};

enum class LaneDecision { kNone, kLeft, kRight };

struct MobilEvaluation {
  bool feasible = false;
  double criterion = 0.0;
  double new_follower_accel = 0.0;
};

MobilEvaluation evaluate_side(const MobilContext& ctx, const MobilSide& side,
                              const MobilParams& mobil, const IdmParams& idm);

LaneDecision mobil_decision(const MobilContext& ctx, const MobilParams& mobil,
                            const IdmParams& idm);

}  // namespace mixedlane

#endif  // MIXEDLANE_TRAFFIC_H_
