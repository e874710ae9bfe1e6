#include <doctest.h>

#include <cmath>
#include <random>

#include "mixedlane/traffic.h"

using namespace mixedlane;

namespace {

IdmParams hand_idm() {
  IdmParams p;
  p.max_accel = 0.75;
  p.exponent = 4.0;
  p.jam_distance = 0.1;
  p.time_headway = 0.5;
  return p;
}

}  // namespace

TEST_CASE("desired gap") {
  const IdmParams p = hand_idm();
  CHECK(desired_gap(1.0, 0.0, p) == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(desired_gap(0.0, 0.0, p) == doctest::Approx(0.1));
  CHECK(desired_gap(1.0, -10.0, p) == doctest::Approx(0.1));
}

TEST_CASE("IDM acceleration values") {
  const IdmParams p = hand_idm();
  CHECK(idm_acceleration(1.0, 1.0, kNoLeaderGap, 0.0, p) == doctest::Approx(0.0));
  CHECK(idm_acceleration(0.0, 1.0, kNoLeaderGap, 0.0, p) == doctest::Approx(0.75));
  CHECK(idm_acceleration(1.0, 2.0, 1.0, 0.0, p) == doctest::Approx(0.75 * (1 - 0.0625 - 0.36)).epsilon(1e-12));
  CHECK(idm_acceleration(1.0, 2.0, 1.0, 0.0, p) == doctest::Approx(0.4331).epsilon(1e-4));
  CHECK(idm_acceleration(1.0, 1.0, 0.0, 0.0, p) == doctest::Approx(-4.0));
  CHECK(idm_acceleration(0.0, 1.0, 0.1, 0.0, p) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("MOBIL: empty road stays") {
  MobilContext ctx;
  ctx.speed = 1.0;
  ctx.target_speed = 1.0;
  ctx.left = MobilSide{};
  ctx.right = MobilSide{};
  CHECK(mobil_decision(ctx, MobilParams{}, IdmParams{}) == LaneDecision::kNone);
}

TEST_CASE("MOBIL: a blocked vehicle changes to an empty lane") {
  MobilContext ctx;
  ctx.speed = 0.5;
  ctx.target_speed = 1.0;
  ctx.leader = MobilNeighbor{0.30, 0.0, 0.0};
  ctx.left = MobilSide{};
  MobilParams m;
  m.politeness = 0.0;
  CHECK(mobil_decision(ctx, m, IdmParams{}) == LaneDecision::kLeft);
  ctx.left.reset();
  ctx.right = MobilSide{};
  CHECK(mobil_decision(ctx, m, IdmParams{}) == LaneDecision::kRight);
}

TEST_CASE("MOBIL: safety veto discards an unsafe side") {
  MobilContext ctx;
  ctx.speed = 0.5;
  ctx.target_speed = 1.0;
  ctx.leader = MobilNeighbor{0.30, 0.0, 0.0};
  MobilSide unsafe;
  unsafe.follower = MobilNeighbor{0.02, 1.5, 1.5};
  ctx.left = unsafe;
  MobilParams m;
  m.politeness = 0.0;
  const MobilEvaluation e = evaluate_side(ctx, unsafe, m, IdmParams{});
  CHECK_FALSE(e.feasible);
  CHECK(e.new_follower_accel < -m.safe_decel);
  CHECK(mobil_decision(ctx, m, IdmParams{}) == LaneDecision::kNone);
}

TEST_CASE("IDM monotonicity over random states") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  const IdmParams p;
  for (int i = 0; i < 20000; ++i) {
    const double v = 2.0 * U(rng), vt = 0.1 + 1.9 * U(rng), s = 0.01 + 3.0 * U(rng);
    const double dv = 2.0 * U(rng) - 1.0;
    const double a = idm_acceleration(v, vt, s, dv, p);
    REQUIRE(a <= p.max_accel);
    REQUIRE(a >= -p.hard_decel());
    REQUIRE(idm_acceleration(v, vt, s + 0.05, dv, p) >= a);
    REQUIRE(idm_acceleration(v, vt, s, dv + 0.05, p) <= a);
    REQUIRE(idm_acceleration(v, vt + 0.05, s, dv, p) >= a);
  }
}
