#include <doctest.h>

#include <cmath>
#include <numbers>

#include "mixedlane/control.h"

using namespace mixedlane;

TEST_CASE("steering law values") {
  const SteeringParams p;
  CHECK(steering_command(0.0, 0.0, 0.0, p).angle == 0.0);
  CHECK(steering_command(0.1, 0.0, 0.0, p).angle == doctest::Approx(-0.3).epsilon(1e-12));
  CHECK(steering_command(0.0, 0.0, 2.0, p).angle == doctest::Approx(0.32).epsilon(1e-12));
  CHECK(steering_command(0.0, 0.1, 0.0, p).angle ==
        doctest::Approx(-3.0 * 0.4 * std::tan(0.1)).epsilon(1e-12));
  CHECK(steering_command(1.0, 0.0, 0.0, p).angle == doctest::Approx(-0.6));
  CHECK(steering_command(-1.0, 0.0, 0.0, p).angle == doctest::Approx(0.6));
  const SteeringCommand back = steering_command(0.0, std::numbers::pi * 0.75, 0.0, p);
  CHECK(back.heading_saturated);
  CHECK(std::abs(back.angle) == doctest::Approx(0.6));
}

TEST_CASE("ideal speed tracking") {
  SpeedTracker t = SpeedTracker::ideal(4.0);
  CHECK(track_speed(t, 1.0, 1.0, 0.02) == 1.0);
  SpeedTracker slow = SpeedTracker::ideal(0.5);
  CHECK(track_speed(slow, 0.0, 1.0, 0.02) == doctest::Approx(0.01));
  CHECK(track_speed(slow, 1.0, 0.0, 0.02) == doctest::Approx(0.99));
  CHECK(track_speed(t, 0.0, 0.05, 0.02) == doctest::Approx(0.05));
}

TEST_CASE("PID tracking") {
  SpeedTracker p = SpeedTracker::pid(PidGains{1.0, 0.0, 0.0, 5.0});
  CHECK(track_speed(p, 0.0, 1.0, 0.02) == doctest::Approx(1.0));
  SpeedTracker pi = SpeedTracker::pid(PidGains{0.0, 1.0, 0.0, 5.0});
  pi.reset(0.7);
  CHECK(track_speed(pi, 1.0, 1.0, 0.02) == doctest::Approx(0.7));
  SpeedTracker clamp = SpeedTracker::pid(PidGains{0.0, 1.0, 0.0, 0.5});
  for (int i = 0; i < 1000; ++i) track_speed(clamp, 0.0, 1.0, 0.02);
  CHECK(clamp.integral() == doctest::Approx(0.5));
}

TEST_CASE("lane change start respects the lane mask") {
  VehicleState s;
  s.lane = 0;
  CHECK_FALSE(begin_lane_change(s, LaneChangeStatus::kChangingLeft, 3));
  CHECK_FALSE(s.changing_lane());
  CHECK(begin_lane_change(s, LaneChangeStatus::kChangingRight, 3));
  CHECK(s.target_lane == 1);
  CHECK(s.steering_lane() == 1);
  CHECK_FALSE(begin_lane_change(s, LaneChangeStatus::kChangingRight, 3));
  VehicleState r;
  r.lane = 2;
  CHECK_FALSE(begin_lane_change(r, LaneChangeStatus::kChangingRight, 3));
}

TEST_CASE("lane change completion thresholds") {
  VehicleState s;
  s.lane = 1;
  REQUIRE(begin_lane_change(s, LaneChangeStatus::kChangingLeft, 3));
  Projection centred;
  lane_change_update(s, centred, 0.30);
  CHECK_FALSE(s.changing_lane());
  CHECK(s.lane == 0);

  VehicleState far;
  far.lane = 1;
  REQUIRE(begin_lane_change(far, LaneChangeStatus::kChangingLeft, 3));
  Projection off;
  off.offset = 0.30;
  lane_change_update(far, off, 0.30);
  CHECK(far.lane_change == LaneChangeStatus::kChangingLeft);
}

TEST_CASE("closed-loop lane change on a straight converges") {
  const TrackSpec track = build_track(rounded_rect_spine(5.56, 3.5, 1.0), 3, 0.30);
  const SteeringParams p;
  VehicleState s;
  s.lane = 1;
  s.x = -1.78;
  s.y = -1.75;
  s.speed = 1.0;
  REQUIRE(begin_lane_change(s, LaneChangeStatus::kChangingLeft, 3));
  int ticks = 0;
  while (s.changing_lane() && ticks < 500) {
    const Projection q = track.lane(s.target_lane).project(Vec2(s.x, s.y), 1.0);
    const double phi = steering_command(q.offset, wrap_angle(s.heading - q.heading), q.curvature, p).angle;
    s = step_bicycle(s, phi, 0.02, 0.16);
    lane_change_update(s, track);
    ++ticks;
  }
  CHECK_FALSE(s.changing_lane());
  CHECK(s.lane == 0);
  CHECK(ticks < 150);
  const Projection q = track.lane(0).project(Vec2(s.x, s.y), 1.0);
  CHECK(std::abs(q.offset) < 0.05 * 0.30);
}
