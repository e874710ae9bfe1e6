#ifndef MIXEDLANE_DYNAMICS_H_
#define MIXEDLANE_DYNAMICS_H_

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "mixedlane/track.h"

namespace mixedlane {

enum class Role : std::uint8_t { kAgent, kBackground, kObstacle, kBridgedPlant };

enum class LaneChangeStatus : std::uint8_t { kNone, kChangingLeft, kChangingRight };

struct VehicleState {
  double x = 0.0;
  double y = 0.0;
  double heading = 0.0;  // rad, (-pi, pi]
  double speed = 0.0;    // m/s
  double commanded_speed = 0.0;
  double target_speed = 0.0;
  std::size_t lane = 0;
  LaneChangeStatus lane_change = LaneChangeStatus::kNone;
  std::size_t target_lane = 0;  // meaningful only while changing
  Role role = Role::kBackground;

  bool changing_lane() const { return lane_change != LaneChangeStatus::kNone; }
  // Lane whose centreline the steering law tracks.
  std::size_t steering_lane() const { return changing_lane() ? target_lane : lane; }
};

struct VehicleGeometry {
  double wheel_base = 0.16;
  double body_length = 0.32;
  double body_width = 0.20;
};

void validate(const VehicleGeometry& geometry);

struct OrientedBox {
  Vec2 centre = Vec2::Zero();
  double heading = 0.0;
  double half_length = 0.0;
  double half_width = 0.0;
};

// One explicit Euler step of the kinematic bicycle model. Speed is unchanged.
VehicleState step_bicycle(const VehicleState& state, double steering, double dt,
                          double wheel_base);

// The reference point (x, y) is the rear axle; the body extends forward of it.
OrientedBox vehicle_box(const VehicleState& state, const VehicleGeometry& geometry);

// Separating-axis test over both boxes' edge normals. Touching counts.
bool boxes_collide(const OrientedBox& a, const OrientedBox& b);

// Largest gap over the four candidate axes; negative means overlap.
double box_separation(const OrientedBox& a, const OrientedBox& b);

struct CollisionPair {
  std::size_t first;
  std::size_t second;
  bool operator==(const CollisionPair&) const = default;
  auto operator<=>(const CollisionPair&) const = default;
};

// Sweep over an along-track coordinate, then SAT on candidate pairs.
// `stations` is each box's along-track position on a lap of length
// `lap_length`; `station_reach` bounds the station difference of any two
// overlapping boxes. Pairs are returned sorted with first < second.
std::vector<CollisionPair> detect_collisions(std::span<const OrientedBox> boxes,
                                             std::span<const double> stations,
                                             double lap_length,
                                             double station_reach);

// All-pairs SAT; used when no along-track bound is available.
std::vector<CollisionPair> detect_collisions(std::span<const OrientedBox> boxes);

}  // namespace mixedlane

#endif  // MIXEDLANE_DYNAMICS_H_
