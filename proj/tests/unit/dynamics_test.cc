#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "mixedlane/dynamics.h"
#include "oracles.h"

using namespace mixedlane;

namespace {

OrientedBox aligned(double x, double y, double heading = 0.0) {
  return {Vec2(x, y), heading, 0.15, 0.10};
}

}  // namespace

TEST_CASE("bicycle step") {
  VehicleState s;
  s.speed = 1.0;
  VehicleState n = step_bicycle(s, 0.0, 0.02, 0.16);
  CHECK(n.x == doctest::Approx(0.02));
  CHECK(n.y == 0.0);
  CHECK(n.heading == 0.0);

  s.heading = std::numbers::pi / 2.0;
  n = step_bicycle(s, 0.0, 0.02, 0.16);
  CHECK(std::abs(n.x) < 1e-15);
  CHECK(n.y == doctest::Approx(0.02));
  CHECK(n.heading == doctest::Approx(std::numbers::pi / 2.0));

  s.heading = 0.0;
  n = step_bicycle(s, std::atan(0.16), 0.02, 0.16);
  CHECK(n.x == doctest::Approx(0.02));
  CHECK(n.y == 0.0);
  CHECK(n.heading == doctest::Approx(0.02).epsilon(1e-12));
  CHECK(n.speed == s.speed);
}

TEST_CASE("vehicle box sits ahead of the rear reference point") {
  const VehicleGeometry g{0.16, 0.30, 0.20};
  VehicleState s;
  OrientedBox b = vehicle_box(s, g);
  CHECK(b.centre.x() == doctest::Approx(0.15));
  CHECK(b.centre.y() == doctest::Approx(0.0));
  s.heading = std::numbers::pi;
  b = vehicle_box(s, g);
  CHECK(b.centre.x() == doctest::Approx(-0.15));
  CHECK_THROWS(vehicle_box(s, VehicleGeometry{0.16, 0.30, 0.0}));
  CHECK_THROWS(vehicle_box(s, VehicleGeometry{0.0, 0.0, 0.2}));
}

TEST_CASE("SAT hand cases") {
  CHECK(boxes_collide(aligned(0, 0), aligned(0.25, 0)));
  CHECK_FALSE(boxes_collide(aligned(0, 0), aligned(0.35, 0)));
  CHECK_FALSE(boxes_collide(aligned(0, 0), aligned(0.26, 0, std::numbers::pi / 2.0)));
  CHECK(box_separation(aligned(0, 0), aligned(0.35, 0)) == doctest::Approx(0.05));
  CHECK(box_separation(aligned(0, 0), aligned(0.25, 0)) == doctest::Approx(-0.05));
  // Touching counts.
  CHECK(boxes_collide(aligned(0, 0), aligned(0.30, 0)));
}

TEST_CASE("collision detection trivial worlds") {
  std::vector<OrientedBox> one{aligned(0, 0)};
  CHECK(detect_collisions(one).empty());
  std::vector<OrientedBox> two{aligned(0, 0), aligned(5, 0), aligned(0.2, 0.05)};
  const auto pairs = detect_collisions(two);
  REQUIRE(pairs.size() == 1);
  CHECK(pairs[0] == CollisionPair{0, 2});
}

TEST_CASE("sweep detection equals all-pairs brute force on random worlds") {
  // Boxes scattered along a ring of circumference 16, stations from angle.
  std::mt19937_64 rng(3);
  const double lap = 16.0, radius = lap / (2.0 * std::numbers::pi);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  for (int world = 0; world < 200; ++world) {
    std::vector<OrientedBox> boxes;
    std::vector<double> stations;
    for (int i = 0; i < 50; ++i) {
      const double s = U(rng) * lap;
      const double th = s / radius;
      const double r = radius + (U(rng) - 0.5) * 0.9;
      boxes.push_back({Vec2(r * std::cos(th), r * std::sin(th)),
                       th + std::numbers::pi / 2.0 + (U(rng) - 0.5), 0.16, 0.10});
      stations.push_back(s);
    }
    // Two boxes that overlap are within 2 * circumradius + lateral spread in
    // station; the ring scales lateral offsets by at most radius / (radius - 0.45).
    const double reach = 2.0 * std::hypot(0.16, 0.10) * radius / (radius - 0.5);
    const auto fast = detect_collisions(boxes, stations, lap, reach);
    std::vector<CollisionPair> brute;
    for (std::size_t i = 0; i < boxes.size(); ++i) {
      for (std::size_t j = i + 1; j < boxes.size(); ++j) {
        const oracle::Box a{{boxes[i].centre.x(), boxes[i].centre.y()}, boxes[i].heading, 0.16, 0.10};
        const oracle::Box b{{boxes[j].centre.x(), boxes[j].centre.y()}, boxes[j].heading, 0.16, 0.10};
        if (oracle::box_overlap(a, b, 100)) brute.push_back({i, j});
      }
    }
    REQUIRE(fast == brute);
  }
}
