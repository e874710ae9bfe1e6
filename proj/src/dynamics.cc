#include "mixedlane/dynamics.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace mixedlane {

namespace {

std::array<Vec2, 2> box_axes(const OrientedBox& b) {
  const Vec2 forward(std::cos(b.heading), std::sin(b.heading));
  return {forward, Vec2(-forward.y(), forward.x())};
}

double projected_radius(const OrientedBox& b, const std::array<Vec2, 2>& axes,
                        const Vec2& n) {
  return b.half_length * std::abs(axes[0].dot(n)) +
         b.half_width * std::abs(axes[1].dot(n));
}

}  // namespace

void validate(const VehicleGeometry& g) {
  if (!(g.wheel_base > 0.0 && g.body_length > 0.0 && g.body_width > 0.0)) {
    throw std::invalid_argument("vehicle dimensions must be positive");
  }
  if (g.wheel_base > g.body_length) {
    throw std::invalid_argument("body must enclose the wheel base");
  }
}

VehicleState step_bicycle(const VehicleState& state, double steering, double dt,
                          double wheel_base) {
  if (!(dt > 0.0)) throw std::invalid_argument("dt must be positive");
  VehicleState next = state;
  next.x = state.x + state.speed * std::cos(state.heading) * dt;
  next.y = state.y + state.speed * std::sin(state.heading) * dt;
  next.heading = wrap_angle(state.heading +
                            state.speed / wheel_base * std::tan(steering) * dt);
  return next;
}

OrientedBox vehicle_box(const VehicleState& state, const VehicleGeometry& geometry) {
  validate(geometry);
  const double half = geometry.body_length / 2.0;
  return {Vec2(state.x + half * std::cos(state.heading),
               state.y + half * std::sin(state.heading)),
          state.heading, half, geometry.body_width / 2.0};
}

double box_separation(const OrientedBox& a, const OrientedBox& b) {
  const auto axes_a = box_axes(a);
  const auto axes_b = box_axes(b);
  const Vec2 delta = b.centre - a.centre;
  double gap = -std::numeric_limits<double>::infinity();
  for (const auto* axes : {&axes_a, &axes_b}) {
    for (const Vec2& n : *axes) {
      const double dist = std::abs(delta.dot(n));
      gap = std::max(gap, dist - (projected_radius(a, axes_a, n) +
                                  projected_radius(b, axes_b, n)));
    }
  }
  return gap;
}

bool boxes_collide(const OrientedBox& a, const OrientedBox& b) {
  return box_separation(a, b) <= 0.0;
}

std::vector<CollisionPair> detect_collisions(std::span<const OrientedBox> boxes) {
  std::vector<CollisionPair> out;
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    for (std::size_t j = i + 1; j < boxes.size(); ++j) {
      if (boxes_collide(boxes[i], boxes[j])) out.push_back({i, j});
    }
  }
  return out;
}

std::vector<CollisionPair> detect_collisions(std::span<const OrientedBox> boxes,
                                             std::span<const double> stations,
                                             double lap_length,
                                             double station_reach) {
  if (boxes.size() != stations.size()) {
    throw std::invalid_argument("one station per box required");
  }
  const std::size_t n = boxes.size();
  if (n < 2) return {};
  if (!(station_reach > 0.0) || 2.0 * station_reach >= lap_length) {
    return detect_collisions(boxes);
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return stations[a] < stations[b];
  });

  std::vector<CollisionPair> out;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t a = order[i];
    // Walk forward around the lap until the station gap exceeds the reach.
    for (std::size_t step = 1; step < n; ++step) {
      const std::size_t b = order[(i + step) % n];
      double ds = stations[b] - stations[a];
      if (ds < 0.0) ds += lap_length;
      if (ds > station_reach) break;
      if (boxes_collide(boxes[a], boxes[b])) {
        out.push_back({std::min(a, b), std::max(a, b)});
      }
    }
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

}  // namespace mixedlane
