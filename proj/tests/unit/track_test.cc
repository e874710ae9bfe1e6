#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "mixedlane/track.h"
#include "oracles.h"

using namespace mixedlane;

namespace {

BezierSegment line(Vec2 a, Vec2 b) { return {a, a + (b - a) / 3.0, a + 2.0 * (b - a) / 3.0, b}; }

// Straight-lane examples use the bottom run of the rounded rectangle.
const TrackSpec& default_track() {
  static const TrackSpec track = build_track(rounded_rect_spine(5.56, 3.5, 1.0), 3, 0.30);
  return track;
}

oracle::Cubic to_oracle(const BezierSegment& s) {
  return {oracle::Pt{s.p0.x(), s.p0.y()}, oracle::Pt{s.p1.x(), s.p1.y()},
          oracle::Pt{s.p2.x(), s.p2.y()}, oracle::Pt{s.p3.x(), s.p3.y()}};
}

}  // namespace

TEST_CASE("eval_point endpoints and midpoint") {
  const BezierSegment s{{0, 0}, {0, 1}, {1, 1}, {1, 0}};
  CHECK((eval_point(s, 0.0) - s.p0).norm() == 0.0);
  CHECK((eval_point(s, 1.0) - s.p3).norm() == 0.0);
  const Vec2 m = eval_point(s, 0.5);
  CHECK(m.x() == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(m.y() == doctest::Approx(0.75).epsilon(1e-15));
  CHECK_THROWS_AS(eval_point(s, 1.5), std::out_of_range);
  CHECK_THROWS_AS(eval_point(s, -0.1), std::out_of_range);
}

TEST_CASE("curvature of straight, hand and mirrored cubics") {
  const BezierSegment straight = line({0, 0}, {3, 0});
  for (double u : {0.0, 0.3, 1.0}) CHECK(curvature(straight, u) == doctest::Approx(0.0));
  const BezierSegment s{{0, 0}, {1, 0}, {2, 1}, {3, 3}};
  CHECK(curvature(s, 0.0) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  const BezierSegment m{{0, 0}, {1, 0}, {2, -1}, {3, -3}};
  for (double u : {0.0, 0.4, 0.9}) CHECK(curvature(m, u) == doctest::Approx(-curvature(s, u)));
  const BezierSegment degenerate{{1, 1}, {1, 1}, {1, 1}, {1, 1}};
  CHECK_THROWS_AS(curvature(degenerate, 0.5), GeometryError);
}

TEST_CASE("arc length of a straight piece and a quarter circle") {
  CHECK(segment_arc_length(line({0, 0}, {3, 0}), 0.0, 1.0) == doctest::Approx(3.0).epsilon(1e-9));
  const double c = 0.5523;
  const BezierSegment q{{1, 0}, {1, c}, {c, 1}, {0, 1}};
  CHECK(std::abs(segment_arc_length(q, 0.0, 1.0) - std::numbers::pi / 2.0) < 2e-3);
}

TEST_CASE("arc length agrees with Simpson quadrature on random cubics") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> U(-2.0, 2.0);
  for (int i = 0; i < 200; ++i) {
    const BezierSegment s{{U(rng), U(rng)}, {U(rng), U(rng)}, {U(rng), U(rng)}, {U(rng), U(rng)}};
    double lib = 0.0;
    for (int j = 0; j < 256; ++j) lib += segment_arc_length(s, j / 256.0, (j + 1) / 256.0);
    const double ref = oracle::cubic_arc_length(to_oracle(s), 0.0, 1.0, 200000);
    CHECK(std::abs(lib - ref) <= 1e-6 * ref);
  }
}

TEST_CASE("lane validation rejects open and kinked loops") {
  CHECK_THROWS_AS(Lane({line({0, 0}, {1, 0}), line({1, 0}, {1, 1})}), GeometryError);
  // Closed square: corners are kinks.
  CHECK_THROWS_AS(Lane({line({0, 0}, {1, 0}), line({1, 0}, {1, 1}), line({1, 1}, {0, 1}),
                        line({0, 1}, {0, 0})}),
                  GeometryError);
}

TEST_CASE("default track: lap lengths, lookup and table monotonicity") {
  const TrackSpec& track = default_track();
  REQUIRE(track.lane_count() == 3);
  const double spine = oracle::rounded_rect_lap(5.56, 3.5, 1.0);
  CHECK(std::abs(track.lane(1).total_length() - spine) <= 1e-5 * spine);
  // Lane 0 is the inner one; four quarter turns change the lap by 2 pi lambda.
  CHECK(track.lane(1).total_length() - track.lane(0).total_length() ==
        doctest::Approx(2.0 * std::numbers::pi * 0.30).epsilon(1e-3));
  CHECK(track.lane(2).total_length() - track.lane(1).total_length() ==
        doctest::Approx(2.0 * std::numbers::pi * 0.30).epsilon(1e-3));
  for (std::size_t i = 0; i < 3; ++i) {
    const auto& table = track.lane(i).arc_table();
    for (std::size_t j = 1; j < table.size(); ++j) REQUIRE(table[j].s > table[j - 1].s);
    const LanePoint p = track.lane(i).locate(0.0);
    CHECK(p.segment == 0);
    CHECK(p.u == 0.0);
  }
}

TEST_CASE("projection on the bottom straight") {
  const Lane& lane = default_track().lane(1);
  const double a = 5.56 / 2.0 - 1.0;
  const Projection p = lane.project(Vec2(-a + 1.5, -1.75 + 0.2), 1.0);
  CHECK(p.s == doctest::Approx(1.5).epsilon(1e-9));
  CHECK(p.offset == doctest::Approx(0.2).epsilon(1e-9));
  CHECK(p.heading == doctest::Approx(0.0).epsilon(1e-12));
  const Projection on = lane.project(Vec2(-a + 1.5, -1.75), 1.0);
  CHECK(std::abs(on.offset) < 1e-12);
  CHECK_THROWS_AS(lane.project(Vec2(0.0, 0.0), 0.5), GeometryError);
}

TEST_CASE("reversed lane flips the offset sign") {
  // The same rounded rectangle travelled clockwise: mirror y.
  std::vector<BezierSegment> spine = rounded_rect_spine(5.56, 3.5, 1.0);
  std::vector<BezierSegment> reversed;
  for (auto it = spine.rbegin(); it != spine.rend(); ++it) reversed.push_back({it->p3, it->p2, it->p1, it->p0});
  const Lane fwd(spine), back(reversed);
  const Vec2 q(0.3, -1.75 + 0.2);
  CHECK(fwd.project(q, 1.0).offset == doctest::Approx(0.2).epsilon(1e-9));
  CHECK(back.project(q, 1.0).offset == doctest::Approx(-0.2).epsilon(1e-9));
}

TEST_CASE("project is a left inverse of point_at") {
  const TrackSpec& track = default_track();
  std::mt19937_64 rng(11);
  for (std::size_t i = 0; i < track.lane_count(); ++i) {
    const Lane& lane = track.lane(i);
    std::uniform_real_distribution<double> S(0.0, lane.total_length());
    for (int k = 0; k < 500; ++k) {
      const double s = S(rng);
      const Projection p = lane.project(lane.point_at(s), 0.1);
      const double ds = std::min(lane.forward_distance(s, p.s), lane.forward_distance(p.s, s));
      REQUIRE(ds < 1e-4);
      REQUIRE(std::abs(p.offset) < 1e-6);
      const Projection near = lane.project_near(lane.point_at(s), s + 0.3, 0.5, 0.1);
      REQUIRE(std::min(lane.forward_distance(s, near.s), lane.forward_distance(near.s, s)) < 1e-4);
    }
  }
}

TEST_CASE("forward distance and wrapping") {
  const Lane& lane = default_track().lane(1);
  const double L = lane.total_length();
  CHECK(lane.wrap_s(L + 0.5) == doctest::Approx(0.5));
  CHECK(lane.wrap_s(-0.5) == doctest::Approx(L - 0.5));
  CHECK(lane.forward_distance(L - 0.1, 0.2) == doctest::Approx(0.3));
  CHECK(lane.forward_distance(1.0, 1.0) == 0.0);
}

TEST_CASE("drivability check") {
  CHECK_NOTHROW(validate_drivable(default_track(), 0.16));
  const TrackSpec tight = build_track(rounded_rect_spine(1.0, 1.0, 0.2), 1, 0.3);
  CHECK_THROWS_AS(validate_drivable(tight, 0.16), GeometryError);
}

TEST_CASE("wrap_angle range") {
  CHECK(wrap_angle(std::numbers::pi) == doctest::Approx(std::numbers::pi));
  CHECK(wrap_angle(-std::numbers::pi) == doctest::Approx(std::numbers::pi));
  CHECK(wrap_angle(3.0 * std::numbers::pi / 2.0) == doctest::Approx(-std::numbers::pi / 2.0));
}
