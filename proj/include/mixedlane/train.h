#ifndef MIXEDLANE_TRAIN_H_
#define MIXEDLANE_TRAIN_H_

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <memory>
#include <ostream>
#include <span>
#include <vector>

#include "mixedlane/env.h"
#include "mixedlane/losses.h"
#include "mixedlane/metrics.h"
#include "mixedlane/net.h"
#include "mixedlane/optimizer.h"

namespace mixedlane {

struct TrainConfig {
  double gamma = 0.9;
  double tau = 0.7;
  double epsilon = 0.1;
  std::size_t horizon = 128;  // k
  LossWeights weights;
  AdamConfig adam;
  CriticChoice critic_choice = CriticChoice::kClosestToReturn;
  bool sample_from_target = true;

  std::size_t workers = 1;
  std::size_t envs_per_worker = 1;
  std::uint64_t total_frames = 0;

  std::size_t adapt_horizon = 512;     // k_mr
  std::size_t adapt_trajectories = 2;  // per optimisation step
  std::size_t adapt_retries = 3;       // bridge timeouts tolerated per run

  std::size_t metrics_window = 8000;
  std::uint64_t seed = 1;

  void validate() const;
};

struct Transition {
  Observation observation;
  ActionPair action;
  double behaviour_log_prob = 0.0;
  double reward = 0.0;
};

// A run of consecutive steps from one episode. `bootstrap` is the observation
// after the last step; it is ignored when `terminal`.
struct Segment {
  std::vector<Transition> steps;
  bool terminal = false;
  Observation bootstrap;
};

struct GradientResult {
  Eigen::VectorXd gradient;
  LossBreakdown loss;
};

// Returns, advantages and the loss gradient over every step of `segments`,
// taken in order as one batch.
GradientResult segment_gradient(const Network& net, const Eigen::VectorXd& online,
                                std::span<const Segment> segments, const TrainConfig& config);

struct TrainResult {
  Eigen::VectorXd online;
  Eigen::VectorXd target;
  std::vector<FrameRecord> frames;  // exactly the requested frame count when complete
  std::uint64_t updates = 0;
  std::uint64_t skipped_updates = 0;
  std::uint64_t worker_errors = 0;
  std::uint64_t bridge_timeouts = 0;
  double seconds = 0.0;
};

// Seed streams shared with anything that wants to replay a run.
std::uint64_t worker_env_seed(std::uint64_t run_seed, std::size_t worker, std::size_t env,
                              std::size_t envs_per_worker);
std::uint64_t worker_action_seed(std::uint64_t run_seed, std::size_t worker);
std::uint64_t adaptation_env_seed(std::uint64_t run_seed);
std::uint64_t adaptation_action_seed(std::uint64_t run_seed);

// Asynchronous actor-learner pre-training. One updater thread owns the
// parameters; each worker steps its own environments, computes a gradient on
// its trajectory batch and waits for the refreshed parameters.
TrainResult run_pretraining(const TrainConfig& config, std::shared_ptr<const TrackSpec> track,
                            const EnvConfig& env_config, const Network& net,
                            Eigen::VectorXd online, Eigen::VectorXd target,
                            std::ostream* log = nullptr);

// Single-environment training with long trajectories, each from a freshly
// randomised scenario. `env` may carry a bridged plant.
TrainResult run_adaptation(const TrainConfig& config, Env& env, const Network& net,
                           Eigen::VectorXd online, Eigen::VectorXd target,
                           std::ostream* log = nullptr);

}  // namespace mixedlane

#endif  // MIXEDLANE_TRAIN_H_
