#include "mixedlane/config.h"

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace mixedlane {

const char* const kCodeVersion = "mixedlane 1.0.0";

namespace {

struct ValueError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(const std::string& s) {
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end == s.c_str() || *end != '\0' || errno == ERANGE) {
    throw ValueError("expected a number, got '" + s + "'");
  }
  return v;
}

std::uint64_t parse_uint(const std::string& s) {
  if (s.empty() || s[0] == '-') throw ValueError("expected a non-negative integer, got '" + s + "'");
  char* end = nullptr;
  errno = 0;
  const unsigned long long v = std::strtoull(s.c_str(), &end, 10);
  if (end == s.c_str() || *end != '\0' || errno == ERANGE) {
    throw ValueError("expected a non-negative integer, got '" + s + "'");
  }
  return v;
}

int parse_int(const std::string& s) {
  const std::uint64_t v = parse_uint(s);
  if (v > 1000000000ULL) throw ValueError("integer too large: " + s);
  return static_cast<int>(v);
}

std::string choice(const std::string& s, std::initializer_list<const char*> allowed) {
  for (const char* a : allowed) {
    if (s == a) return s;
  }
  std::string list;
  for (const char* a : allowed) list += std::string(list.empty() ? "" : "|") + a;
  throw ValueError("expected one of " + list + ", got '" + s + "'");
}

BezierSegment parse_segment(const std::string& s) {
  std::istringstream is(s);
  std::vector<double> v;
  std::string tok;
  while (is >> tok) v.push_back(parse_double(tok));
  if (v.size() != 8) throw ValueError("spine_segment needs 8 numbers (x0 y0 ... x3 y3)");
  return BezierSegment{Vec2(v[0], v[1]), Vec2(v[2], v[3]), Vec2(v[4], v[5]), Vec2(v[6], v[7])};
}

std::string format_segment(const BezierSegment& b) {
  return fmt(b.p0.x()) + " " + fmt(b.p0.y()) + " " + fmt(b.p1.x()) + " " + fmt(b.p1.y()) + " " +
         fmt(b.p2.x()) + " " + fmt(b.p2.y()) + " " + fmt(b.p3.x()) + " " + fmt(b.p3.y());
}

struct Key {
  std::string section;
  std::string name;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::vector<std::string>(const RunConfig&)> get;  // one line per value
  bool repeatable = false;
};

template <typename Getter>
Key real_key(const char* section, const char* name, Getter ref) {
  return Key{section, name,
             [ref](RunConfig& c, const std::string& v) { ref(c) = parse_double(v); },
             [ref](const RunConfig& c) {
               return std::vector<std::string>{fmt(ref(const_cast<RunConfig&>(c)))};
             }};
}

template <typename T, typename Getter>
Key uint_key(const char* section, const char* name, Getter ref) {
  return Key{section, name,
             [ref](RunConfig& c, const std::string& v) { ref(c) = static_cast<T>(parse_uint(v)); },
             [ref](const RunConfig& c) {
               return std::vector<std::string>{
                   std::to_string(ref(const_cast<RunConfig&>(c)))};
             }};
}

template <typename Getter>
Key int_key(const char* section, const char* name, Getter ref) {
  return Key{section, name,
             [ref](RunConfig& c, const std::string& v) { ref(c) = parse_int(v); },
             [ref](const RunConfig& c) {
               return std::vector<std::string>{std::to_string(ref(const_cast<RunConfig&>(c)))};
             }};
}

template <typename Getter>
Key string_key(const char* section, const char* name, Getter ref) {
  return Key{section, name, [ref](RunConfig& c, const std::string& v) { ref(c) = v; },
             [ref](const RunConfig& c) {
               return std::vector<std::string>{ref(const_cast<RunConfig&>(c))};
             }};
}

#define REF(expr) [](RunConfig& c) -> auto& { return expr; }

const std::vector<Key>& registry() {
  static const std::vector<Key> keys = [] {
    std::vector<Key> k;
    k.push_back(Key{"track", "shape",
                    [](RunConfig& c, const std::string& v) {
                      c.track.shape = choice(v, {"rounded_rect", "bezier"});
                    },
                    [](const RunConfig& c) { return std::vector<std::string>{c.track.shape}; }});
    k.push_back(real_key("track", "width_m", REF(c.track.width_m)));
    k.push_back(real_key("track", "height_m", REF(c.track.height_m)));
    k.push_back(real_key("track", "corner_radius_m", REF(c.track.corner_radius_m)));
    k.push_back(uint_key<std::size_t>("track", "lanes", REF(c.track.lanes)));
    k.push_back(real_key("track", "lane_width_m", REF(c.track.lane_width_m)));
    k.push_back(real_key("track", "arc_resolution_m", REF(c.track.arc_resolution_m)));
    k.push_back(Key{"track", "spine_segment",
                    [](RunConfig& c, const std::string& v) {
                      c.track.spine.push_back(parse_segment(v));
                    },
                    [](const RunConfig& c) {
                      std::vector<std::string> out;
                      for (const auto& s : c.track.spine) out.push_back(format_segment(s));
                      return out;
                    },
                    true});

    k.push_back(real_key("vehicle", "wheel_base_m", REF(c.env.geometry.wheel_base)));
    k.push_back(real_key("vehicle", "body_length_m", REF(c.env.geometry.body_length)));
    k.push_back(real_key("vehicle", "body_width_m", REF(c.env.geometry.body_width)));
    k.push_back(real_key("vehicle", "max_speed_mps", REF(c.env.max_speed)));
    k.push_back(real_key("vehicle", "max_steer_rad", REF(c.env.steering.max_steer)));

    k.push_back(real_key("control", "steering_gain_per_m", REF(c.env.steering.gain)));
    k.push_back(real_key("control", "steering_damping_m", REF(c.env.steering.damping)));
    k.push_back(real_key("control", "curvature_feedforward_m", REF(c.env.steering.feedforward)));
    k.push_back(real_key("control", "ideal_accel_limit_mps2", REF(c.env.ideal_accel_limit)));
    k.push_back(real_key("control", "lane_change_offset_fraction",
                         REF(c.env.lane_change.offset_fraction)));
    k.push_back(real_key("control", "lane_change_heading_rad", REF(c.env.lane_change.heading)));

    k.push_back(real_key("idm", "max_accel_mps2", REF(c.env.idm.max_accel)));
    k.push_back(real_key("idm", "comfortable_decel_mps2", REF(c.env.idm.comfortable_decel)));
    k.push_back(real_key("idm", "exponent", REF(c.env.idm.exponent)));
    k.push_back(real_key("idm", "jam_distance_m", REF(c.env.idm.jam_distance)));
    k.push_back(real_key("idm", "time_headway_s", REF(c.env.idm.time_headway)));

    k.push_back(real_key("mobil", "politeness", REF(c.env.mobil.politeness)));
    k.push_back(real_key("mobil", "threshold_mps2", REF(c.env.mobil.threshold)));
    k.push_back(real_key("mobil", "safe_decel_mps2", REF(c.env.mobil.safe_decel)));
    k.push_back(real_key("mobil", "cooldown_s", REF(c.env.mobil.cooldown)));
    k.push_back(real_key("mobil", "min_leader_gap_m", REF(c.env.mobil.min_leader_gap)));

    k.push_back(uint_key<std::size_t>("scenario", "vehicles", REF(c.env.vehicles)));
    k.push_back(uint_key<std::size_t>("scenario", "obstacles", REF(c.env.obstacles)));
    k.push_back(real_key("scenario", "vision_radius_m", REF(c.env.vision_radius)));
    k.push_back(real_key("scenario", "target_speed_min_mps", REF(c.env.target_speed_min)));
    k.push_back(real_key("scenario", "target_speed_max_mps", REF(c.env.target_speed_max)));
    k.push_back(real_key("scenario", "dt_s", REF(c.env.dt)));
    k.push_back(real_key("scenario", "accel_step_mps2", REF(c.env.accel_step)));
    k.push_back(real_key("scenario", "max_episode_time_s", REF(c.env.max_episode_time)));
    k.push_back(Key{"scenario", "terminate_on_collision",
                    [](RunConfig& c, const std::string& v) {
                      c.env.terminate_on_collision = choice(v, {"true", "false"}) == "true";
                    },
                    [](const RunConfig& c) {
                      return std::vector<std::string>{c.env.terminate_on_collision ? "true"
                                                                                   : "false"};
                    }});

    k.push_back(real_key("reward", "c0", REF(c.env.reward.c0)));
    k.push_back(real_key("reward", "c1", REF(c.env.reward.c1)));
    k.push_back(real_key("reward", "c2", REF(c.env.reward.c2)));

    k.push_back(uint_key<std::size_t>("network", "hidden", REF(c.network.hidden)));
    k.push_back(uint_key<std::size_t>("network", "features", REF(c.network.features)));

    k.push_back(uint_key<std::uint64_t>("train", "seed", REF(c.train.seed)));
    k.push_back(real_key("train", "gamma", REF(c.train.gamma)));
    k.push_back(real_key("train", "tau", REF(c.train.tau)));
    k.push_back(real_key("train", "epsilon", REF(c.train.epsilon)));
    k.push_back(uint_key<std::size_t>("train", "horizon", REF(c.train.horizon)));
    k.push_back(real_key("train", "weight_actor", REF(c.train.weights.actor)));
    k.push_back(real_key("train", "weight_critic", REF(c.train.weights.critic)));
    k.push_back(real_key("train", "weight_entropy", REF(c.train.weights.entropy)));
    k.push_back(real_key("train", "lr_actor", REF(c.train.adam.lr_actor)));
    k.push_back(real_key("train", "lr_critic", REF(c.train.adam.lr_critic)));
    k.push_back(real_key("train", "adam_beta1", REF(c.train.adam.beta1)));
    k.push_back(real_key("train", "adam_beta2", REF(c.train.adam.beta2)));
    k.push_back(real_key("train", "adam_epsilon", REF(c.train.adam.epsilon)));
    k.push_back(real_key("train", "clip_norm", REF(c.train.adam.clip_norm)));
    k.push_back(Key{"train", "critic_choice",
                    [](RunConfig& c, const std::string& v) {
                      c.train.critic_choice = choice(v, {"closest", "min"}) == "closest"
                                                  ? CriticChoice::kClosestToReturn
                                                  : CriticChoice::kMinimum;
                    },
                    [](const RunConfig& c) {
                      return std::vector<std::string>{
                          c.train.critic_choice == CriticChoice::kClosestToReturn ? "closest"
                                                                                 : "min"};
                    }});
    k.push_back(Key{"train", "behaviour_policy",
                    [](RunConfig& c, const std::string& v) {
                      c.train.sample_from_target = choice(v, {"target", "online"}) == "target";
                    },
                    [](const RunConfig& c) {
                      return std::vector<std::string>{c.train.sample_from_target ? "target"
                                                                                 : "online"};
                    }});
    k.push_back(uint_key<std::size_t>("train", "workers", REF(c.train.workers)));
    k.push_back(uint_key<std::size_t>("train", "envs_per_worker", REF(c.train.envs_per_worker)));
    k.push_back(uint_key<std::uint64_t>("train", "total_frames", REF(c.train.total_frames)));
    k.push_back(uint_key<std::size_t>("train", "adapt_horizon", REF(c.train.adapt_horizon)));
    k.push_back(
        uint_key<std::size_t>("train", "adapt_trajectories", REF(c.train.adapt_trajectories)));
    k.push_back(uint_key<std::size_t>("train", "adapt_retries", REF(c.train.adapt_retries)));
    k.push_back(uint_key<std::size_t>("train", "metrics_window", REF(c.train.metrics_window)));

    k.push_back(Key{"plant", "preset",
                    [](RunConfig& c, const std::string& v) {
                      c.plant = choice(v, {"ideal", "deepracer-like"}) == "ideal"
                                    ? PlantConfig::ideal()
                                    : PlantConfig::deepracer_like();
                    },
                    [](const RunConfig&) { return std::vector<std::string>{}; }});
    k.push_back(uint_key<std::size_t>("plant", "actuation_delay_ticks",
                                      REF(c.plant.actuation_delay)));
    k.push_back(real_key("plant", "velocity_lag_s", REF(c.plant.velocity_lag)));
    k.push_back(real_key("plant", "wheelbase_error", REF(c.plant.wheelbase_error)));
    k.push_back(real_key("plant", "steering_bias_rad", REF(c.plant.steering_bias)));
    k.push_back(real_key("plant", "position_noise_m", REF(c.plant.position_noise)));
    k.push_back(Key{"plant", "speed_mode",
                    [](RunConfig& c, const std::string& v) {
                      c.plant.speed_mode = choice(v, {"ideal", "pid"}) == "ideal"
                                               ? PlantSpeedMode::kIdeal
                                               : PlantSpeedMode::kPid;
                    },
                    [](const RunConfig& c) {
                      return std::vector<std::string>{
                          c.plant.speed_mode == PlantSpeedMode::kIdeal ? "ideal" : "pid"};
                    }});
    k.push_back(real_key("plant", "pid_kp", REF(c.plant.pid.kp)));
    k.push_back(real_key("plant", "pid_ki", REF(c.plant.pid.ki)));
    k.push_back(real_key("plant", "pid_kd", REF(c.plant.pid.kd)));
    k.push_back(real_key("plant", "pid_integral_limit", REF(c.plant.pid.integral_limit)));
    k.push_back(uint_key<std::uint64_t>("plant", "noise_seed", REF(c.plant.noise_seed)));

    k.push_back(string_key("bridge", "host", REF(c.bridge.host)));
    k.push_back(uint_key<std::uint16_t>("bridge", "port", REF(c.bridge.port)));
    k.push_back(int_key("bridge", "reply_timeout_ms", REF(c.bridge.reply_timeout_ms)));
    k.push_back(int_key("bridge", "reset_timeout_ms", REF(c.bridge.reset_timeout_ms)));
    k.push_back(int_key("bridge", "reset_attempts", REF(c.bridge.reset_attempts)));

    k.push_back(uint_key<std::size_t>("eval", "scenarios", REF(c.eval.scenarios)));
    k.push_back(real_key("eval", "duration_s", REF(c.eval.duration_s)));
    k.push_back(uint_key<std::uint64_t>("eval", "seed", REF(c.eval.seed)));

    k.push_back(string_key("output", "directory", REF(c.output_directory)));
    return k;
  }();
  return keys;
}

#undef REF

}  // namespace

void RunConfig::sync() {
  env.reward.vehicle_length = env.geometry.body_length;
  env.reward.lane_separation = track.lane_width_m;
  plant.wheel_base = env.geometry.wheel_base;
  plant.max_speed = env.max_speed;
  plant.max_steer = env.steering.max_steer;
  plant.dt = env.dt;
  plant.ideal_accel_limit = env.ideal_accel_limit;
}

void RunConfig::validate() const {
  const auto track_spec = make_track(track);
  validate_drivable(*track_spec, env.geometry.wheel_base);
  env.validate(*track_spec);
  network.validate();
  train.validate();
  plant.validate();
  if (eval.duration_s <= 0.0) throw std::invalid_argument("eval duration must be positive");
  if (bridge.reply_timeout_ms <= 0 || bridge.reset_timeout_ms <= 0 || bridge.reset_attempts <= 0) {
    throw std::invalid_argument("bridge timeouts and attempts must be positive");
  }
}

RunConfig default_config() {
  RunConfig c;
  c.sync();
  return c;
}

RunConfig parse_config(const std::string& text, const std::string& source) {
  std::map<std::string, const Key*> index;
  for (const Key& k : registry()) index[k.section + "." + k.name] = &k;

  RunConfig c = default_config();
  std::istringstream is(text);
  std::string line, section;
  std::map<std::string, int> seen;
  bool spine_cleared = false;
  int number = 0;
  auto fail = [&](const std::string& msg) {
    throw ConfigError(source + ":" + std::to_string(number) + ": " + msg);
  };
  while (std::getline(is, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') fail("malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      bool known = false;
      for (const Key& k : registry()) known = known || k.section == section;
      if (!known) fail("unknown section [" + section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail("expected key = value");
    if (section.empty()) fail("key outside any section");
    const std::string name = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto it = index.find(section + "." + name);
    if (it == index.end()) fail("unknown key '" + name + "' in [" + section + "]");
    const Key& key = *it->second;
    if (!key.repeatable && seen[section + "." + name]++ > 0) {
      fail("duplicate key '" + name + "'");
    }
    if (key.repeatable && !spine_cleared) {
      c.track.spine.clear();
      spine_cleared = true;
    }
    try {
      key.set(c, value);
    } catch (const ValueError& e) {
      fail(name + ": " + e.what());
    }
  }
  c.sync();
  try {
    c.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(source + ": invalid configuration: " + e.what());
  }
  return c;
}

RunConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError(path + ": cannot open config file");
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_config(ss.str(), path);
}

std::string dump_config(const RunConfig& config) {
  std::ostringstream os;
  std::string section;
  for (const Key& k : registry()) {
    const std::vector<std::string> values = k.get(config);
    if (k.section != section) {
      os << (section.empty() ? "" : "\n") << '[' << k.section << "]\n";
      section = k.section;
    }
    for (const std::string& v : values) os << k.name << " = " << v << '\n';
  }
  return os.str();
}

std::shared_ptr<const TrackSpec> make_track(const TrackConfig& config) {
  std::vector<BezierSegment> spine =
      config.shape == "bezier"
          ? config.spine
          : rounded_rect_spine(config.width_m, config.height_m, config.corner_radius_m);
  if (spine.empty()) throw std::invalid_argument("bezier track needs spine_segment entries");
  return std::make_shared<const TrackSpec>(
      build_track(spine, config.lanes, config.lane_width_m, config.arc_resolution_m));
}

std::uint64_t fnv1a64(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::vector<std::string> provenance_lines(const RunConfig& config) {
  // Where artifacts go does not change what produced them.
  RunConfig hashed = config;
  hashed.output_directory.clear();
  char buf[64];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a64(dump_config(hashed))));
  return {std::string(" ") + kCodeVersion + " config-fnv1a " + buf};
}

}  // namespace mixedlane
