#include "mixedlane/traffic.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mixedlane {

void IdmParams::validate() const {
  if (!(max_accel > 0.0 && comfortable_decel > 0.0 && jam_distance > 0.0 &&
        time_headway > 0.0 && exponent >= 1.0)) {
    throw std::invalid_argument("IDM parameters out of range");
  }
}

void MobilParams::validate() const {
  if (!(politeness >= 0.0 && safe_decel > 0.0 && cooldown >= 0.0 && min_leader_gap >= 0.0)) {
    throw std::invalid_argument("MOBIL parameters out of range");
  }
}

double desired_gap(double speed, double approach_rate, const IdmParams& p) {
  const double raw = p.jam_distance + p.time_headway * speed +
                     speed * approach_rate /
                         (2.0 * std::sqrt(p.max_accel * p.comfortable_decel));
  return std::max(p.jam_distance, raw);
}

double idm_acceleration(double speed, double target_speed, double gap,
                        double approach_rate, const IdmParams& p) {
  if (!(target_speed > 0.0)) {
    throw std::invalid_argument("IDM target speed must be positive");
  }
  if (!(gap > 0.0)) return -p.hard_decel();
  const double free_term = std::pow(speed / target_speed, p.exponent);
  double interaction = 0.0;
  if (std::isfinite(gap)) {
    const double ratio = desired_gap(speed, approach_rate, p) / gap;
    interaction = ratio * ratio;
  }
  const double a = p.max_accel * (1.0 - free_term - interaction);
  return std::clamp(a, -p.hard_decel(), p.max_accel);
}

namespace {

double follow_accel(const MobilNeighbor& follower, double leader_speed, double gap,
                    const IdmParams& idm) {
  if (!std::isfinite(gap)) {
    return idm_acceleration(follower.speed, follower.target_speed, kNoLeaderGap, 0.0, idm);
  }
  return idm_acceleration(follower.speed, follower.target_speed, gap,
                          follower.speed - leader_speed, idm);
}

double ego_accel(const MobilContext& ctx, const std::optional<MobilNeighbor>& leader,
                 const IdmParams& idm) {
  if (!leader || !std::isfinite(leader->gap)) {
    return idm_acceleration(ctx.speed, ctx.target_speed, kNoLeaderGap, 0.0, idm);
  }
  return idm_acceleration(ctx.speed, ctx.target_speed, leader->gap,
                          ctx.speed - leader->speed, idm);
}

}  // namespace

MobilEvaluation evaluate_side(const MobilContext& ctx, const MobilSide& side,
                              const MobilParams& mobil, const IdmParams& idm) {
  MobilEvaluation eval;
  // The destination must have room beside the ego vehicle.
  if ((side.leader && side.leader->gap <= 0.0) ||
      (side.follower && side.follower->gap <= 0.0)) {
    return eval;
  }

  const double self_gain = ego_accel(ctx, side.leader, idm) - ego_accel(ctx, ctx.leader, idm);

  double new_follower_gain = 0.0;
  if (side.follower) {
    const MobilNeighbor& f = *side.follower;
    const double before =
        side.leader ? follow_accel(f, side.leader->speed,
                                   f.gap + ctx.length + side.leader->gap, idm)
                    : follow_accel(f, 0.0, kNoLeaderGap, idm);
    const double after = follow_accel(f, ctx.speed, f.gap, idm);
    eval.new_follower_accel = after;
    if (after < -mobil.safe_decel) return eval;
    new_follower_gain = after - before;
  }

  double old_follower_gain = 0.0;
  if (ctx.follower) {
    const MobilNeighbor& f = *ctx.follower;
    const double before = follow_accel(f, ctx.speed, f.gap, idm);
    const double after =
        ctx.leader ? follow_accel(f, ctx.leader->speed,
                                  f.gap + ctx.length + ctx.leader->gap, idm)
                   : follow_accel(f, 0.0, kNoLeaderGap, idm);
    old_follower_gain = after - before;
  }

  eval.feasible = true;
  eval.criterion =
      self_gain + mobil.politeness * (new_follower_gain + old_follower_gain);
  return eval;
}

LaneDecision mobil_decision(const MobilContext& ctx, const MobilParams& mobil,
                            const IdmParams& idm) {
  if (ctx.leader && ctx.leader->gap < mobil.min_leader_gap) return LaneDecision::kNone;
  std::optional<double> left, right;
  if (ctx.left) {
    const auto e = evaluate_side(ctx, *ctx.left, mobil, idm);
    if (e.feasible && e.criterion > mobil.threshold) left = e.criterion;
  }
  if (ctx.right) {
    const auto e = evaluate_side(ctx, *ctx.right, mobil, idm);
    if (e.feasible && e.criterion > mobil.threshold) right = e.criterion;
  }
  if (left && (!right || *left >= *right)) return LaneDecision::kLeft;
  if (right) return LaneDecision::kRight;
  return LaneDecision::kNone;
}

}  // namespace mixedlane
