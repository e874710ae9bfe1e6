#include "mixedlane/train.h"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <condition_variable>
#include <deque>
#include <mutex>
#include <optional>
#include <thread>

namespace mixedlane {

void TrainConfig::validate() const {
  if (!(gamma > 0.0 && gamma < 1.0)) throw std::invalid_argument("gamma must lie in (0, 1)");
  if (!(tau > 0.0 && tau < 1.0)) throw std::invalid_argument("tau must lie in (0, 1)");
  if (!(epsilon > 0.0)) throw std::invalid_argument("epsilon must be positive");
  if (horizon == 0 || adapt_horizon == 0 || adapt_trajectories == 0) {
    throw std::invalid_argument("trajectory lengths and counts must be positive");
  }
  if (!(weights.actor >= 0.0 && weights.critic >= 0.0 && weights.entropy >= 0.0)) {
    throw std::invalid_argument("loss weights must be non-negative");
  }
  if (workers == 0 || envs_per_worker == 0) {
    throw std::invalid_argument("need at least one worker and one environment");
  }
  if (metrics_window == 0) throw std::invalid_argument("metrics window must be positive");
  adam.validate();
}

std::uint64_t worker_env_seed(std::uint64_t run_seed, std::size_t worker, std::size_t env,
                              std::size_t envs_per_worker) {
  return mix_seed(run_seed, worker * envs_per_worker + env);
}

std::uint64_t worker_action_seed(std::uint64_t run_seed, std::size_t worker) {
  return mix_seed(run_seed ^ 0xA5A5A5A5A5A5A5A5ULL, worker);
}

std::uint64_t adaptation_env_seed(std::uint64_t run_seed) {
  return mix_seed(run_seed ^ 0x5EED0ADA5EED0ADAULL, 0);
}

std::uint64_t adaptation_action_seed(std::uint64_t run_seed) {
  return mix_seed(run_seed ^ 0x5EED0ADA5EED0ADAULL, 1);
}

GradientResult segment_gradient(const Network& net, const Eigen::VectorXd& online,
                                std::span<const Segment> segments, const TrainConfig& config) {
  std::vector<Observation> observations;
  LossTargets targets;
  std::vector<Observation> bootstraps;
  for (const Segment& s : segments) {
    if (s.steps.empty()) throw std::invalid_argument("empty segment");
    for (const Transition& t : s.steps) {
      observations.push_back(t.observation);
      targets.actions.push_back(t.action);
      targets.behaviour_log_probs.push_back(t.behaviour_log_prob);
    }
    if (!s.terminal) bootstraps.push_back(s.bootstrap);
  }
  const ObservationBatch batch = encode(observations);
  ForwardCache cache;
  const NetworkOutput out = net.forward(online, batch, &cache);

  Eigen::RowVectorXd bootstrap_values;
  if (!bootstraps.empty()) {
    const NetworkOutput b = net.forward(online, encode(bootstraps));
    bootstrap_values = 0.5 * (b.v1 + b.v2);
  }
  std::size_t next_bootstrap = 0;
  for (const Segment& s : segments) {
    std::vector<double> rewards;
    rewards.reserve(s.steps.size());
    for (const Transition& t : s.steps) rewards.push_back(t.reward);
    const double v = s.terminal ? 0.0 : bootstrap_values[static_cast<Eigen::Index>(next_bootstrap++)];
    const std::vector<double> r = compute_returns(rewards, s.terminal, config.gamma, v);
    targets.returns.insert(targets.returns.end(), r.begin(), r.end());
  }
  const std::vector<double> v1(out.v1.data(), out.v1.data() + out.v1.size());
  const std::vector<double> v2(out.v2.data(), out.v2.data() + out.v2.size());
  targets.advantages =
      advantage_and_critic_loss(targets.returns, v1, v2, config.critic_choice).advantages;

  GradientResult g;
  g.gradient = Eigen::VectorXd::Zero(online.size());
  g.loss = loss_and_gradient(net, online, batch, targets, config.epsilon, config.weights,
                             &g.gradient, &out, &cache);
  return g;
}

namespace {

void check_sizes(const Network& net, const Eigen::VectorXd& online, const Eigen::VectorXd& target) {
  if (static_cast<std::size_t>(online.size()) != net.layout().total_size() ||
      static_cast<std::size_t>(target.size()) != net.layout().actor_size()) {
    throw std::invalid_argument("parameter vectors do not match the network shape");
  }
}

struct Snapshot {
  Eigen::VectorXd online;
  Eigen::VectorXd target;
};

struct Message {
  enum class Kind { kUpdate, kDone, kFailed } kind = Kind::kUpdate;
  std::size_t worker = 0;
  GradientResult result;
  std::vector<FrameRecord> frames;
};

class Inbox {
 public:
  void push(Message m) {
    {
      std::lock_guard lock(mu_);
      queue_.push_back(std::move(m));
    }
    cv_.notify_one();
  }
  Message pop() {
    std::unique_lock lock(mu_);
    cv_.wait(lock, [&] { return !queue_.empty(); });
    Message m = std::move(queue_.front());
    queue_.pop_front();
    return m;
  }

 private:
  std::mutex mu_;
  std::condition_variable cv_;
  std::deque<Message> queue_;
};

class Mailbox {
 public:
  void post(std::shared_ptr<const Snapshot> s) {
    {
      std::lock_guard lock(mu_);
      slot_ = std::move(s);
    }
    cv_.notify_one();
  }
  std::shared_ptr<const Snapshot> take() {
    std::unique_lock lock(mu_);
    cv_.wait(lock, [&] { return slot_ != nullptr; });
    return std::exchange(slot_, nullptr);
  }

 private:
  std::mutex mu_;
  std::condition_variable cv_;
  std::shared_ptr<const Snapshot> slot_;
};

// Steps every environment `horizon` times; frames are recorded step-major,
// segments are returned environment-major.
std::vector<Segment> collect_batch(BatchEnv& envs, std::vector<Observation>& obs,
                                   std::mt19937_64& rng, const Network& net,
                                   const Eigen::VectorXd& sampler, std::size_t horizon,
                                   std::vector<FrameRecord>& frames) {
  const std::size_t n = envs.size();
  std::vector<Segment> open(n);
  std::vector<std::vector<Segment>> closed(n);
  std::vector<ActionPair> actions(n);
  std::vector<double> log_probs(n);
  for (std::size_t t = 0; t < horizon; ++t) {
    const PolicyOutput pol = net.policy(sampler, encode(obs));
    for (std::size_t e = 0; e < n; ++e) {
      const SampledAction s =
          sample_action(head_column(pol.lane, e), head_column(pol.accel, e), rng);
      actions[e] = s.action;
      log_probs[e] = s.log_prob;
    }
    std::vector<BatchEnv::Result> results = envs.step_many(actions);
    for (std::size_t e = 0; e < n; ++e) {
      BatchEnv::Result& r = results[e];
      open[e].steps.push_back({obs[e], actions[e], log_probs[e], r.step.reward});
      frames.push_back({r.step.reward, r.step.collision});
      if (r.final_observation) {
        open[e].terminal = r.step.terminal;
        open[e].bootstrap = *r.final_observation;
        closed[e].push_back(std::move(open[e]));
        open[e] = Segment{};
      }
      obs[e] = std::move(r.step.observation);
    }
  }
  std::vector<Segment> out;
  for (std::size_t e = 0; e < n; ++e) {
    for (Segment& s : closed[e]) out.push_back(std::move(s));
    if (!open[e].steps.empty()) {
      open[e].bootstrap = obs[e];
      out.push_back(std::move(open[e]));
    }
  }
  return out;
}

void append_frames(std::vector<FrameRecord>& all, const std::vector<FrameRecord>& frames,
                   std::uint64_t total) {
  for (const FrameRecord& f : frames) {
    if (all.size() >= total) break;
    all.push_back(f);
  }
}

void log_progress(std::ostream* log, const std::vector<FrameRecord>& frames,
                  std::uint64_t& next, std::uint64_t every, std::size_t window) {
  if (log == nullptr || frames.size() < next) return;
  const std::size_t start = frames.size() > window ? frames.size() - window : 0;
  double reward = 0.0;
  std::size_t collisions = 0;
  for (std::size_t i = start; i < frames.size(); ++i) {
    reward += frames[i].reward;
    collisions += frames[i].collision ? 1 : 0;
  }
  const auto n = static_cast<double>(frames.size() - start);
  *log << "frames " << frames.size() << "  window reward " << reward / n << "  collisions "
       << collisions << '\n';
  next += every;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

TrainResult run_pretraining(const TrainConfig& config, std::shared_ptr<const TrackSpec> track,
                            const EnvConfig& env_config, const Network& net,
                            Eigen::VectorXd online, Eigen::VectorXd target, std::ostream* log) {
  config.validate();
  check_sizes(net, online, target);
  const auto t0 = std::chrono::steady_clock::now();
  TrainResult result;
  result.online = std::move(online);
  result.target = std::move(target);
  if (config.total_frames == 0) return result;

  const std::uint64_t chunk = config.envs_per_worker * config.horizon;
  const std::uint64_t total = config.total_frames;
  std::atomic<std::uint64_t> reserved{0};
  Inbox inbox;
  std::vector<Mailbox> mailboxes(config.workers);
  auto initial = std::make_shared<const Snapshot>(Snapshot{result.online, result.target});

  auto worker = [&](std::size_t w) {
    bool holding = false;
    try {
      std::vector<std::uint64_t> seeds(config.envs_per_worker);
      for (std::size_t e = 0; e < seeds.size(); ++e) {
        seeds[e] = worker_env_seed(config.seed, w, e, config.envs_per_worker);
      }
      BatchEnv envs(track, env_config, seeds);
      std::vector<Observation> obs = envs.reset();
      std::mt19937_64 rng(worker_action_seed(config.seed, w));
      std::shared_ptr<const Snapshot> snap = initial;
      while (true) {
        if (reserved.fetch_add(chunk) >= total) break;
        holding = true;
        std::vector<FrameRecord> frames;
        frames.reserve(chunk);
        const Eigen::VectorXd& sampler = config.sample_from_target ? snap->target : snap->online;
        const std::vector<Segment> segments =
            collect_batch(envs, obs, rng, net, sampler, config.horizon, frames);
        Message m;
        m.worker = w;
        m.result = segment_gradient(net, snap->online, segments, config);
        m.frames = std::move(frames);
        inbox.push(std::move(m));
        holding = false;
        snap = mailboxes[w].take();
      }
      Message done;
      done.kind = Message::Kind::kDone;
      done.worker = w;
      inbox.push(std::move(done));
    } catch (const std::exception& e) {
      if (holding) reserved.fetch_sub(chunk);
      if (log != nullptr) *log << "worker " << w << " failed: " << e.what() << '\n';
      Message failed;
      failed.kind = Message::Kind::kFailed;
      failed.worker = w;
      inbox.push(std::move(failed));
    }
  };

  std::vector<std::jthread> threads;
  threads.reserve(config.workers);
  for (std::size_t w = 0; w < config.workers; ++w) threads.emplace_back(worker, w);

  Adam adam(net.layout().total_size(), net.layout().actor_size(), config.adam);
  result.frames.reserve(total);
  std::uint64_t next_log = 10000;
  std::size_t active = config.workers;
  while (active > 0) {
    Message m = inbox.pop();
    if (m.kind != Message::Kind::kUpdate) {
      if (m.kind == Message::Kind::kFailed) ++result.worker_errors;
      --active;
      continue;
    }
    if (adam.step(result.online, m.result.gradient)) {
      polyak_update(result.target, result.online, config.tau);
    } else {
      ++result.skipped_updates;
      if (log != nullptr) *log << "skipped non-finite update\n";
    }
    ++result.updates;
    append_frames(result.frames, m.frames, total);
    log_progress(log, result.frames, next_log, 10000, config.metrics_window);
    mailboxes[m.worker].post(std::make_shared<const Snapshot>(Snapshot{result.online, result.target}));
  }
  threads.clear();
  result.seconds = seconds_since(t0);
  return result;
}

TrainResult run_adaptation(const TrainConfig& config, Env& env, const Network& net,
                           Eigen::VectorXd online, Eigen::VectorXd target, std::ostream* log) {
  config.validate();
  check_sizes(net, online, target);
  const auto t0 = std::chrono::steady_clock::now();
  TrainResult result;
  result.online = std::move(online);
  result.target = std::move(target);
  const std::uint64_t total = config.total_frames;
  if (total == 0) return result;

  std::mt19937_64 rng(adaptation_action_seed(config.seed));
  Adam adam(net.layout().total_size(), net.layout().actor_size(), config.adam);
  std::uint64_t consumed = 0;
  std::uint64_t next_log = 10000;

  auto collect_trajectory = [&](std::vector<Segment>& segments, std::vector<FrameRecord>& frames) {
    const Eigen::VectorXd& sampler = config.sample_from_target ? result.target : result.online;
    Observation obs = env.reset();
    Segment open;
    for (std::size_t t = 0; t < config.adapt_horizon; ++t) {
      const PolicyOutput pol = net.policy(sampler, encode(std::span(&obs, 1)));
      const SampledAction s = sample_action(head_column(pol.lane, 0), head_column(pol.accel, 0), rng);
      StepResult r = env.step(s.action);
      open.steps.push_back({obs, s.action, s.log_prob, r.reward});
      frames.push_back({r.reward, r.collision});
      if (r.terminal || r.truncated) {
        open.terminal = r.terminal;
        open.bootstrap = std::move(r.observation);
        segments.push_back(std::move(open));
        open = Segment{};
        obs = env.reset();
      } else {
        obs = std::move(r.observation);
      }
    }
    if (!open.steps.empty()) {
      open.bootstrap = obs;
      segments.push_back(std::move(open));
    }
  };

  while (consumed < total) {
    std::vector<Segment> segments;
    std::vector<FrameRecord> frames;
    for (std::size_t j = 0; j < config.adapt_trajectories; ++j) {
      while (true) {
        std::vector<Segment> traj;
        std::vector<FrameRecord> traj_frames;
        try {
          collect_trajectory(traj, traj_frames);
        } catch (const BridgeTimeout& e) {
          ++result.bridge_timeouts;
          if (log != nullptr) *log << "bridge timeout: " << e.what() << '\n';
          if (result.bridge_timeouts > config.adapt_retries) throw;
          std::this_thread::sleep_for(std::chrono::milliseconds(100 * result.bridge_timeouts));
          continue;
        }
        for (Segment& s : traj) segments.push_back(std::move(s));
        frames.insert(frames.end(), traj_frames.begin(), traj_frames.end());
        break;
      }
    }
    const GradientResult g = segment_gradient(net, result.online, segments, config);
    if (adam.step(result.online, g.gradient)) {
      polyak_update(result.target, result.online, config.tau);
    } else {
      ++result.skipped_updates;
    }
    ++result.updates;
    consumed += frames.size();
    append_frames(result.frames, frames, total);
    log_progress(log, result.frames, next_log, 10000, config.metrics_window);
  }
  result.seconds = seconds_since(t0);
  return result;
}

}  // namespace mixedlane
