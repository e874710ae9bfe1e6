#ifndef MIXEDLANE_ENV_H_
#define MIXEDLANE_ENV_H_

#include <array>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include "mixedlane/control.h"
#include "mixedlane/dynamics.h"
#include "mixedlane/track.h"
#include "mixedlane/traffic.h"

namespace mixedlane {

class ScenarioError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class AccelAction : std::uint8_t { kDecelerate = 0, kHold = 1, kAccelerate = 2 };
enum class LaneAction : std::uint8_t { kLeft = 0, kNone = 1, kRight = 2 };

struct ActionPair {
  AccelAction accel = AccelAction::kHold;
  LaneAction lane = LaneAction::kNone;
  bool operator==(const ActionPair&) const = default;
};

inline constexpr std::size_t kSelfDim = 5;
inline constexpr std::size_t kNeighborDim = 6;
inline constexpr std::size_t kNeighborSlots = 6;

struct SelfObservation {
  double speed = 0.0;
  double target_speed = 0.0;
  double lanes_right = 0.0;
  double lanes_left = 0.0;
  double changing_lane = 0.0;

  std::array<double, kSelfDim> values() const {
    return {speed, target_speed, lanes_right, lanes_left, changing_lane};
  }
};

struct NeighborObservation {
  double distance = 0.0;
  double cos_bearing = 0.0;
  double sin_bearing = 0.0;
  double relative_speed = 0.0;
  double lane_delta = 0.0;
  double changing_lane = 0.0;
  bool is_null = true;
  std::uint32_t vehicle_id = 0;  // bookkeeping, not part of the vector

  std::array<double, kNeighborDim> values() const {
    return {distance, cos_bearing, sin_bearing, relative_speed, lane_delta, changing_lane};
  }
  static NeighborObservation null(double vision_radius) {
    NeighborObservation n;
    n.distance = vision_radius;
    return n;
  }
};

struct Observation {
  SelfObservation self;
  std::array<NeighborObservation, kNeighborSlots> neighbors;
};

struct RewardParams {
  double c0 = 0.06;   // per m/s of speed error
  double c1 = 0.833;  // fraction of vehicle length
  double c2 = 2.81;   // fraction of lane separation
  double vehicle_length = 0.32;
  double lane_separation = 0.30;

  void validate() const;
};

// -c0 |v - v_t| - max(max(0, c1 L - d_lane), max(0, c2 lambda - d_any)).
// Pass infinity when no such vehicle exists.
double reward_from_terms(double speed, double target_speed, double nearest_same_lane,
                         double nearest_any, const RewardParams& params);

struct EnvConfig {
  VehicleGeometry geometry;
  double max_speed = 2.0;
  SteeringParams steering;
  double ideal_accel_limit = 4.0;
  LaneChangeThresholds lane_change;
  IdmParams idm;
  MobilParams mobil;
  RewardParams reward;

  std::size_t vehicles = 13;  // moving vehicles, the agent included
  std::size_t obstacles = 4;
  double vision_radius = 2.0;
  double target_speed_min = 0.4;
  double target_speed_max = 1.2;
  double dt = 0.02;
  double accel_step = 0.5;
  double max_episode_time = 0.0;  // 0: episodes end only on collision
  bool terminate_on_collision = true;
  Role agent_role = Role::kAgent;

  void validate(const TrackSpec& track) const;
};

struct Vehicle {
  std::uint32_t id = 0;
  VehicleState state;
  std::vector<Projection> lane_frames;  // projection onto every lane
  double station = 0.0;                 // arc position on the reference lane
  double cooldown = 0.0;                // until the next MOBIL change is allowed

  bool moving() const { return state.role != Role::kObstacle; }
  // Lane-wise speed along its own lane.
  double lane_speed() const;
};

// Pose/speed fed back from an externally simulated agent vehicle.
struct ExternalPose {
  double x = 0.0;
  double y = 0.0;
  double heading = 0.0;
  double speed = 0.0;
};

// The external vehicle stopped answering.
class BridgeTimeout : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Stand-in for a vehicle whose physics run outside the environment.
class ExternalPlant {
 public:
  virtual ~ExternalPlant() = default;
  virtual void reset(std::uint32_t vehicle_id, const VehicleState& state,
                     std::uint64_t timestamp_us) = 0;
  // Sends this tick's command and returns the synchronised pose.
  virtual ExternalPose exchange(std::uint32_t vehicle_id, std::uint64_t timestamp_us,
                                double steering, double target_speed, double dt) = 0;
};

struct StepResult {
  Observation observation;
  double reward = 0.0;
  bool collision = false;  // the agent started touching another vehicle
  bool terminal = false;
  bool truncated = false;
  bool lap = false;
  std::vector<CollisionPair> collisions;  // every overlapping pair this tick
  std::vector<std::uint32_t> agent_contacts;  // new contact partners
};

// Initial vehicle states: the agent first, then background traffic, then
// obstacles. Deterministic in the seed.
std::vector<VehicleState> randomize_scenario(const TrackSpec& track,
                                             const EnvConfig& config,
                                             std::uint64_t seed);

std::uint64_t mix_seed(std::uint64_t base, std::uint64_t stream);

// [0, 1) from the top 53 bits of one draw.
double uniform01(std::mt19937_64& rng);

class Env {
 public:
  Env(std::shared_ptr<const TrackSpec> track, EnvConfig config, std::uint64_t seed);

  Observation reset();                      // next seed of this env's stream
  Observation reset(std::uint64_t scenario_seed);
  // Explicit world; the first vehicle with an agent role is the agent.
  Observation reset_with(std::vector<VehicleState> states);

  StepResult step(const ActionPair& action);

  void apply_action(const ActionPair& action);

  Observation observe() const { return observe(agent_); }
  Observation observe(std::size_t index) const;
  double reward() const { return reward(agent_); }
  double reward(std::size_t index) const;

  // Collision-free sorted pairs using the along-track sweep.
  std::vector<CollisionPair> detect_collisions() const;

  void attach_plant(ExternalPlant* plant) { plant_ = plant; }

  const TrackSpec& track() const { return *track_; }
  std::shared_ptr<const TrackSpec> track_ptr() const { return track_; }
  const EnvConfig& config() const { return config_; }
  const std::vector<Vehicle>& vehicles() const { return vehicles_; }
  std::size_t agent_index() const { return agent_; }
  std::uint64_t tick() const { return tick_; }
  double time() const { return static_cast<double>(tick_) * config_.dt; }
  std::uint64_t scenario_seed() const { return scenario_seed_; }
  std::uint64_t episodes() const { return episode_; }

 private:
  void refresh_frames(Vehicle& v, bool global);
  double idm_command(const Vehicle& v) const;
  void mobil_step(Vehicle& v);
  std::optional<MobilNeighbor> neighbour(const Vehicle& v, std::size_t lane,
                                         bool ahead) const;
  bool occupies(const Vehicle& v, std::size_t lane) const;
  // No vehicle, parked ones included, overlaps `v` along `lane`.
  bool beside_clear(const Vehicle& v, std::size_t lane) const;
  double station_reach() const;

  std::shared_ptr<const TrackSpec> track_;
  EnvConfig config_;
  std::uint64_t base_seed_;
  std::uint64_t episode_ = 0;
  std::uint64_t scenario_seed_ = 0;
  std::vector<Vehicle> vehicles_;
  std::size_t agent_ = 0;
  std::uint64_t tick_ = 0;
  std::vector<std::uint32_t> agent_contacts_;
  double reference_curvature_ = 0.0;
  ExternalPlant* plant_ = nullptr;
  SpeedTracker ideal_;
};

class BatchEnv {
 public:
  BatchEnv(std::shared_ptr<const TrackSpec> track, const EnvConfig& config,
           std::span<const std::uint64_t> seeds);

  std::size_t size() const { return envs_.size(); }
  Env& env(std::size_t i) { return envs_.at(i); }
  const Env& env(std::size_t i) const { return envs_.at(i); }

  std::vector<Observation> reset();
  std::vector<Observation> observations() const;

  struct Result {
    StepResult step;
    // Observation before an automatic reset (set only when one happened).
    std::optional<Observation> final_observation;
  };
  // Steps every env; terminal or truncated envs reset to a fresh scenario and
  // report the new scenario's first observation.
  std::vector<Result> step_many(std::span<const ActionPair> actions);

 private:
  std::vector<Env> envs_;
};

}  // namespace mixedlane

#endif  // MIXEDLANE_ENV_H_
