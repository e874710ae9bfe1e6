#include "mixedlane/env.h"

#include <algorithm>
#include <cmath>
#include <string>

namespace mixedlane {

double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

namespace {

std::size_t uniform_index(std::mt19937_64& rng, std::size_t n) {
  return std::min(n - 1, static_cast<std::size_t>(uniform01(rng) * static_cast<double>(n)));
}

double circular_gap(double a, double b, double lap) {
  const double d = std::abs(a - b);
  return std::min(d, lap - d);
}

struct Candidate {
  VehicleState state;
  double lane_s = 0.0;
  OrientedBox box;
};

VehicleState pose_on_lane(const TrackSpec& track, std::size_t lane, double station) {
  const Lane& ref = track.lane(track.reference_lane());
  const Lane& target = track.lane(lane);
  const double s = target.project(ref.point_at(station), 1e9).s;
  VehicleState st;
  const Vec2 p = target.point_at(s);
  st.x = p.x();
  st.y = p.y();
  st.heading = target.heading_at(s);
  st.lane = lane;
  return st;
}

}  // namespace

void RewardParams::validate() const {
  if (!(c0 > 0.0 && c1 > 0.0 && c2 > 0.0 && vehicle_length > 0.0 &&
        lane_separation > 0.0)) {
    throw std::invalid_argument("reward constants must be positive");
  }
}

double reward_from_terms(double speed, double target_speed, double nearest_same_lane,
                         double nearest_any, const RewardParams& p) {
  const double p1 = std::max(0.0, p.c1 * p.vehicle_length - nearest_same_lane);
  const double p2 = std::max(0.0, p.c2 * p.lane_separation - nearest_any);
  return -p.c0 * std::abs(speed - target_speed) - std::max(p1, p2);
}

void EnvConfig::validate(const TrackSpec& track) const {
  mixedlane::validate(geometry);
  steering.validate();
  idm.validate();
  mobil.validate();
  reward.validate();
  if (!(max_speed > 0.0)) throw std::invalid_argument("max speed must be positive");
  if (!(dt > 0.0)) throw std::invalid_argument("dt must be positive");
  if (!(accel_step > 0.0)) throw std::invalid_argument("accel step must be positive");
  if (!(ideal_accel_limit > 0.0)) throw std::invalid_argument("accel limit must be positive");
  if (!(vision_radius > 0.0)) throw std::invalid_argument("vision radius must be positive");
  if (!(target_speed_min > 0.0 && target_speed_max >= target_speed_min &&
        target_speed_max <= max_speed)) {
    throw std::invalid_argument("target speed range must lie in (0, max_speed]");
  }
  if (vehicles < 1) throw std::invalid_argument("at least one moving vehicle (the agent)");
  if (obstacles < track.lane_count()) {
    throw std::invalid_argument("need at least one obstacle per lane");
  }
  if (max_episode_time < 0.0) throw std::invalid_argument("episode limit must be >= 0");
}

double Vehicle::lane_speed() const {
  return state.speed * std::cos(state.heading - lane_frames.at(state.lane).heading);
}

std::uint64_t mix_seed(std::uint64_t base, std::uint64_t stream) {
  std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::vector<VehicleState> randomize_scenario(const TrackSpec& track,
                                             const EnvConfig& config,
                                             std::uint64_t seed) {
  config.validate(track);
  std::mt19937_64 rng(seed);
  const std::size_t lanes = track.lane_count();
  const double lap = track.lane(track.reference_lane()).total_length();
  const double body = config.geometry.body_length;
  const double obstacle_spacing = 4.0 * body;
  if (static_cast<double>(config.obstacles) * obstacle_spacing > lap) {
    throw ScenarioError("obstacles cannot be spaced on this lap");
  }

  constexpr int kScenarioAttempts = 50;
  constexpr int kPlacementAttempts = 400;
  for (int attempt = 0; attempt < kScenarioAttempts; ++attempt) {
    std::vector<Candidate> placed;
    bool ok = true;

    std::vector<std::size_t> obstacle_lanes(lanes);
    for (std::size_t i = 0; i < lanes; ++i) obstacle_lanes[i] = i;
    for (std::size_t i = lanes; i > 1; --i) {
      std::swap(obstacle_lanes[i - 1], obstacle_lanes[uniform_index(rng, i)]);
    }
    while (obstacle_lanes.size() < config.obstacles) {
      obstacle_lanes.push_back(uniform_index(rng, lanes));
    }
    std::vector<double> obstacle_stations;
    for (std::size_t k = 0; k < config.obstacles && ok; ++k) {
      bool found = false;
      for (int tries = 0; tries < kPlacementAttempts && !found; ++tries) {
        const double station = uniform01(rng) * lap;
        found = std::all_of(obstacle_stations.begin(), obstacle_stations.end(),
                            [&](double other) {
                              return circular_gap(station, other, lap) >= obstacle_spacing;
                            });
        if (found) {
          obstacle_stations.push_back(station);
          Candidate c;
          c.state = pose_on_lane(track, obstacle_lanes[k], station);
          c.state.role = Role::kObstacle;
          c.lane_s = track.lane(c.state.lane).project(Vec2(c.state.x, c.state.y), 1e9).s;
          c.box = vehicle_box(c.state, config.geometry);
          placed.push_back(c);
        }
      }
      ok = found;
    }

    for (std::size_t i = 0; i < config.vehicles && ok; ++i) {
      const double vt = config.target_speed_min +
                        uniform01(rng) * (config.target_speed_max - config.target_speed_min);
      const std::size_t lane = uniform_index(rng, lanes);
      const Lane& l = track.lane(lane);
      bool found = false;
      for (int tries = 0; tries < kPlacementAttempts && !found; ++tries) {
        Candidate c;
        c.state = pose_on_lane(track, lane, uniform01(rng) * lap);
        c.state.speed = vt;
        c.state.commanded_speed = vt;
        c.state.target_speed = vt;
        c.state.role = (i == 0) ? config.agent_role : Role::kBackground;
        c.lane_s = l.project(Vec2(c.state.x, c.state.y), 1e9).s;
        c.box = vehicle_box(c.state, config.geometry);
        found = std::all_of(placed.begin(), placed.end(), [&](const Candidate& o) {
          if (o.state.lane == lane) {
            const double ahead = l.forward_distance(c.lane_s, o.lane_s);
            const double behind = l.forward_distance(o.lane_s, c.lane_s);
            const double need_ahead =
                desired_gap(vt, vt - o.state.speed, config.idm) + body;
            const double need_behind =
                desired_gap(o.state.speed, o.state.speed - vt, config.idm) + body;
            return ahead >= need_ahead && behind >= need_behind;
          }
          return box_separation(c.box, o.box) > 0.05;
        });
        if (found) placed.push_back(c);
      }
      ok = found;
    }
    if (!ok) continue;

    std::vector<VehicleState> out;
    out.reserve(placed.size());
    for (std::size_t i = config.obstacles; i < placed.size(); ++i) {
      out.push_back(placed[i].state);
    }
    for (std::size_t i = 0; i < config.obstacles; ++i) out.push_back(placed[i].state);
    return out;
  }
  throw ScenarioError("could not place " + std::to_string(config.vehicles) +
                      " vehicles and " + std::to_string(config.obstacles) +
                      " obstacles on this track");
}

Env::Env(std::shared_ptr<const TrackSpec> track, EnvConfig config, std::uint64_t seed)
    : track_(std::move(track)),
      config_(std::move(config)),
      base_seed_(seed),
      ideal_(SpeedTracker::ideal(config_.ideal_accel_limit)) {
  if (!track_) throw std::invalid_argument("env needs a track");
  config_.validate(*track_);
  const Lane& ref = track_->lane(track_->reference_lane());
  for (double s = 0.0; s < ref.total_length(); s += 0.01) {
    reference_curvature_ = std::max(reference_curvature_, std::abs(ref.curvature_at(s)));
  }
}

Observation Env::reset() { return reset(mix_seed(base_seed_, episode_++)); }

Observation Env::reset(std::uint64_t scenario_seed) {
  scenario_seed_ = scenario_seed;
  return reset_with(randomize_scenario(*track_, config_, scenario_seed));
}

Observation Env::reset_with(std::vector<VehicleState> states) {
  vehicles_.clear();
  vehicles_.reserve(states.size());
  std::optional<std::size_t> agent;
  for (std::size_t i = 0; i < states.size(); ++i) {
    Vehicle v;
    v.id = static_cast<std::uint32_t>(i);
    v.state = states[i];
    if (v.state.lane >= track_->lane_count()) {
      throw std::invalid_argument("vehicle lane out of range");
    }
    if (v.state.role == Role::kObstacle) {
      v.state.speed = v.state.commanded_speed = v.state.target_speed = 0.0;
    }
    refresh_frames(v, true);
    if (!agent && (v.state.role == Role::kAgent || v.state.role == Role::kBridgedPlant)) {
      agent = i;
    }
    vehicles_.push_back(std::move(v));
  }
  if (!agent) throw std::invalid_argument("world has no agent vehicle");
  agent_ = *agent;
  tick_ = 0;
  agent_contacts_.clear();
  if (vehicles_[agent_].state.role == Role::kBridgedPlant) {
    if (plant_ == nullptr) throw std::logic_error("bridged agent without a plant link");
    plant_->reset(vehicles_[agent_].id, vehicles_[agent_].state, 0);
  }
  return observe(agent_);
}

void Env::refresh_frames(Vehicle& v, bool global) {
  const Vec2 p(v.state.x, v.state.y);
  const double max_distance = 10.0 * track_->lane_width();
  v.lane_frames.resize(track_->lane_count());
  for (std::size_t m = 0; m < track_->lane_count(); ++m) {
    const Lane& lane = track_->lane(m);
    v.lane_frames[m] = global ? lane.project(p, max_distance)
                              : lane.project_near(p, v.lane_frames[m].s, 0.25, max_distance);
  }
  v.station = v.lane_frames[track_->reference_lane()].s;
}

bool Env::occupies(const Vehicle& v, std::size_t lane) const {
  return v.state.lane == lane || (v.state.changing_lane() && v.state.target_lane == lane);
}

std::optional<MobilNeighbor> Env::neighbour(const Vehicle& v, std::size_t lane,
                                            bool ahead) const {
  const Lane& l = track_->lane(lane);
  const Vehicle* best = nullptr;
  double best_ds = std::numeric_limits<double>::infinity();
  for (const Vehicle& o : vehicles_) {
    if (&o == &v || !occupies(o, lane)) continue;
    if (!ahead && !o.moving()) continue;  // parked vehicles never follow
    const double ds = ahead ? l.forward_distance(v.lane_frames[lane].s, o.lane_frames[lane].s)
                            : l.forward_distance(o.lane_frames[lane].s, v.lane_frames[lane].s);
    if (ds < best_ds) {
      best_ds = ds;
      best = &o;
    }
  }
  if (best == nullptr) return std::nullopt;
  MobilNeighbor n;
  n.gap = best_ds - config_.geometry.body_length;
  n.speed = best->state.speed;
  n.target_speed = best->state.target_speed;
  return n;
}

bool Env::beside_clear(const Vehicle& v, std::size_t lane) const {
  const Lane& l = track_->lane(lane);
  const double length = config_.geometry.body_length;
  for (const Vehicle& o : vehicles_) {
    if (&o == &v || !occupies(o, lane)) continue;
    const double ahead = l.forward_distance(v.lane_frames[lane].s, o.lane_frames[lane].s);
    const double behind = l.forward_distance(o.lane_frames[lane].s, v.lane_frames[lane].s);
    if (std::min(ahead, behind) <= length) return false;
  }
  return true;
}

double Env::idm_command(const Vehicle& v) const {
  double accel = idm_acceleration(v.state.speed, v.state.target_speed, kNoLeaderGap,
                                  0.0, config_.idm);
  // A change only starts with room to steer out, so the old lane's leader is
  // dropped once it begins.
  if (const auto leader = neighbour(v, v.state.steering_lane(), true)) {
    accel = idm_acceleration(v.state.speed, v.state.target_speed, leader->gap,
                             v.state.speed - leader->speed, config_.idm);
  }
  return std::clamp(v.state.speed + accel * config_.dt, 0.0, config_.max_speed);
}

void Env::mobil_step(Vehicle& v) {
  if (v.state.changing_lane() || v.cooldown > 0.0) return;
  MobilContext ctx;
  ctx.speed = v.state.speed;
  ctx.target_speed = v.state.target_speed;
  ctx.length = config_.geometry.body_length;
  ctx.leader = neighbour(v, v.state.lane, true);
  ctx.follower = neighbour(v, v.state.lane, false);
  if (v.state.lane > 0 && beside_clear(v, v.state.lane - 1)) {
    ctx.left = MobilSide{neighbour(v, v.state.lane - 1, true),
                         neighbour(v, v.state.lane - 1, false)};
  }
  if (v.state.lane + 1 < track_->lane_count() && beside_clear(v, v.state.lane + 1)) {
    ctx.right = MobilSide{neighbour(v, v.state.lane + 1, true),
                          neighbour(v, v.state.lane + 1, false)};
  }
  const LaneDecision d = mobil_decision(ctx, config_.mobil, config_.idm);
  if (d == LaneDecision::kNone) return;
  const auto dir = (d == LaneDecision::kLeft) ? LaneChangeStatus::kChangingLeft
                                              : LaneChangeStatus::kChangingRight;
  if (begin_lane_change(v.state, dir, track_->lane_count())) {
    v.cooldown = config_.mobil.cooldown;
  }
}

void Env::apply_action(const ActionPair& action) {
  VehicleState& s = vehicles_.at(agent_).state;
  const double sign = static_cast<double>(static_cast<int>(action.accel) - 1);
  s.commanded_speed = std::clamp(s.commanded_speed + sign * config_.accel_step * config_.dt,
                                 0.0, config_.max_speed);
  if (action.lane == LaneAction::kLeft) {
    begin_lane_change(s, LaneChangeStatus::kChangingLeft, track_->lane_count());
  } else if (action.lane == LaneAction::kRight) {
    begin_lane_change(s, LaneChangeStatus::kChangingRight, track_->lane_count());
  }
}

StepResult Env::step(const ActionPair& action) {
  if (vehicles_.empty()) throw std::logic_error("env stepped before reset");
  const double dt = config_.dt;
  const double station_before = vehicles_[agent_].station;

  apply_action(action);

  std::vector<double> idm_commands(vehicles_.size(), 0.0);
  for (std::size_t i = 0; i < vehicles_.size(); ++i) {
    if (vehicles_[i].state.role == Role::kBackground) idm_commands[i] = idm_command(vehicles_[i]);
  }
  for (std::size_t i = 0; i < vehicles_.size(); ++i) {
    Vehicle& v = vehicles_[i];
    if (v.state.role != Role::kBackground) continue;
    v.state.commanded_speed = idm_commands[i];
    mobil_step(v);
  }

  for (Vehicle& v : vehicles_) {
    if (!v.moving() || v.state.role == Role::kBridgedPlant) continue;
    v.state.speed = std::clamp(ideal_.update(v.state.speed, v.state.commanded_speed, dt),
                               0.0, config_.max_speed);
  }

  std::vector<double> steer(vehicles_.size(), 0.0);
  for (std::size_t i = 0; i < vehicles_.size(); ++i) {
    Vehicle& v = vehicles_[i];
    if (!v.moving()) continue;
    if (v.state.changing_lane()) {
      lane_change_update(v.state, v.lane_frames[v.state.target_lane],
                         track_->lane_width(), config_.lane_change);
    }
    const Projection& f = v.lane_frames[v.state.steering_lane()];
    steer[i] = steering_command(f.offset, wrap_angle(v.state.heading - f.heading),
                                f.curvature, config_.steering)
                   .angle;
  }

  const auto stamp = static_cast<std::uint64_t>(std::llround(
      static_cast<double>(tick_ + 1) * dt * 1e6));
  for (std::size_t i = 0; i < vehicles_.size(); ++i) {
    Vehicle& v = vehicles_[i];
    if (!v.moving()) continue;
    if (v.state.role == Role::kBridgedPlant) {
      const ExternalPose pose =
          plant_->exchange(v.id, stamp, steer[i], v.state.commanded_speed, dt);
      v.state.x = pose.x;
      v.state.y = pose.y;
      v.state.heading = pose.heading;
      v.state.speed = pose.speed;
    } else {
      v.state = step_bicycle(v.state, steer[i], dt, config_.geometry.wheel_base);
    }
    refresh_frames(v, false);
    v.cooldown = std::max(0.0, v.cooldown - dt);
  }
  ++tick_;

  StepResult r;
  r.collisions = detect_collisions();
  std::vector<std::uint32_t> contacts;
  for (const auto& p : r.collisions) {
    if (p.first == agent_) contacts.push_back(vehicles_[p.second].id);
    if (p.second == agent_) contacts.push_back(vehicles_[p.first].id);
  }
  std::sort(contacts.begin(), contacts.end());
  for (std::uint32_t id : contacts) {
    if (!std::binary_search(agent_contacts_.begin(), agent_contacts_.end(), id)) {
      r.agent_contacts.push_back(id);
    }
  }
  agent_contacts_ = std::move(contacts);
  r.collision = !r.agent_contacts.empty();

  const double lap = track_->lane(track_->reference_lane()).total_length();
  r.lap = vehicles_[agent_].station < station_before - lap / 2.0;

  r.reward = reward(agent_);
  r.observation = observe(agent_);
  r.terminal = r.collision && config_.terminate_on_collision;
  r.truncated = !r.terminal && config_.max_episode_time > 0.0 &&
                time() >= config_.max_episode_time - 1e-9;
  return r;
}

double Env::station_reach() const {
  const double hl = config_.geometry.body_length / 2.0;
  const double hw = config_.geometry.body_width / 2.0;
  const double reach = 2.0 * std::hypot(hl, hw) + config_.geometry.body_length;
  double lateral = 0.0;
  const std::size_t ref = track_->reference_lane();
  for (const Vehicle& v : vehicles_) {
    lateral = std::max(lateral, std::abs(v.lane_frames[ref].offset));
  }
  const double bend = reference_curvature_ * (lateral + reach / 2.0);
  if (bend >= 0.95) return 0.0;
  return reach / (1.0 - bend);
}

std::vector<CollisionPair> Env::detect_collisions() const {
  std::vector<OrientedBox> boxes;
  std::vector<double> stations;
  boxes.reserve(vehicles_.size());
  stations.reserve(vehicles_.size());
  for (const Vehicle& v : vehicles_) {
    boxes.push_back(vehicle_box(v.state, config_.geometry));
    stations.push_back(v.station);
  }
  return mixedlane::detect_collisions(
      boxes, stations, track_->lane(track_->reference_lane()).total_length(),
      station_reach());
}

Observation Env::observe(std::size_t index) const {
  const Vehicle& me = vehicles_.at(index);
  Observation obs;
  obs.self.speed = me.state.speed;
  obs.self.target_speed = me.state.target_speed;
  obs.self.lanes_right = static_cast<double>(track_->lanes_right_of(me.state.lane));
  obs.self.lanes_left = static_cast<double>(track_->lanes_left_of(me.state.lane));
  obs.self.changing_lane = me.state.changing_lane() ? 1.0 : 0.0;

  struct Seen {
    double d;
    std::uint32_t id;
    const Vehicle* v;
  };
  std::vector<Seen> seen;
  for (const Vehicle& o : vehicles_) {
    if (&o == &me) continue;
    const double d = std::hypot(o.state.x - me.state.x, o.state.y - me.state.y);
    if (d <= config_.vision_radius) seen.push_back({d, o.id, &o});
  }
  std::sort(seen.begin(), seen.end(), [](const Seen& a, const Seen& b) {
    return a.d < b.d || (a.d == b.d && a.id < b.id);
  });
  const double c = std::cos(me.state.heading), s = std::sin(me.state.heading);
  const double my_lane_speed = me.lane_speed();
  for (std::size_t k = 0; k < kNeighborSlots; ++k) {
    if (k >= seen.size()) {
      obs.neighbors[k] = NeighborObservation::null(config_.vision_radius);
      continue;
    }
    const Vehicle& o = *seen[k].v;
    NeighborObservation n;
    n.is_null = false;
    n.vehicle_id = o.id;
    n.distance = seen[k].d;
    const double dx = o.state.x - me.state.x, dy = o.state.y - me.state.y;
    const double fx = c * dx + s * dy, fy = -s * dx + c * dy;
    const double norm = std::hypot(fx, fy);
    n.cos_bearing = norm > 0.0 ? fx / norm : 1.0;
    n.sin_bearing = norm > 0.0 ? fy / norm : 0.0;
    n.relative_speed = o.lane_speed() - my_lane_speed;
    n.lane_delta = static_cast<double>(o.state.lane) - static_cast<double>(me.state.lane);
    n.changing_lane = o.state.changing_lane() ? 1.0 : 0.0;
    obs.neighbors[k] = n;
  }
  return obs;
}

double Env::reward(std::size_t index) const {
  const Vehicle& me = vehicles_.at(index);
  double same_lane = std::numeric_limits<double>::infinity();
  double any = std::numeric_limits<double>::infinity();
  for (const Vehicle& o : vehicles_) {
    if (&o == &me) continue;
    const double d = std::hypot(o.state.x - me.state.x, o.state.y - me.state.y);
    any = std::min(any, d);
    if (o.state.lane == me.state.lane) same_lane = std::min(same_lane, d);
  }
  return reward_from_terms(me.state.speed, me.state.target_speed, same_lane, any,
                           config_.reward);
}

BatchEnv::BatchEnv(std::shared_ptr<const TrackSpec> track, const EnvConfig& config,
                   std::span<const std::uint64_t> seeds) {
  envs_.reserve(seeds.size());
  for (std::uint64_t seed : seeds) envs_.emplace_back(track, config, seed);
}

std::vector<Observation> BatchEnv::reset() {
  std::vector<Observation> out;
  out.reserve(envs_.size());
  for (Env& e : envs_) out.push_back(e.reset());
  return out;
}

std::vector<Observation> BatchEnv::observations() const {
  std::vector<Observation> out;
  out.reserve(envs_.size());
  for (const Env& e : envs_) out.push_back(e.observe());
  return out;
}

std::vector<BatchEnv::Result> BatchEnv::step_many(std::span<const ActionPair> actions) {
  if (actions.size() != envs_.size()) {
    throw std::invalid_argument("step_many: " + std::to_string(actions.size()) +
                                " actions for " + std::to_string(envs_.size()) + " envs");
  }
  std::vector<Result> out(envs_.size());
  for (std::size_t i = 0; i < envs_.size(); ++i) {
    out[i].step = envs_[i].step(actions[i]);
    if (out[i].step.terminal || out[i].step.truncated) {
      out[i].final_observation = out[i].step.observation;
      out[i].step.observation = envs_[i].reset();
    }
  }
  return out;
}

}  // namespace mixedlane
