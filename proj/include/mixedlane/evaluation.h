#ifndef MIXEDLANE_EVALUATION_H_
#define MIXEDLANE_EVALUATION_H_

#include <cstdint>
#include <functional>
#include <memory>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "mixedlane/env.h"
#include "mixedlane/net.h"
#include "mixedlane/plot.h"

namespace mixedlane {

struct EvalOptions {
  std::size_t scenarios = 20;
  double duration_s = 120.0;
  std::uint64_t seed = 1000;
};

struct ScenarioResult {
  std::uint64_t scenario_seed = 0;
  std::size_t collisions = 0;  // contact onsets of the agent
  double total_reward = 0.0;
  bool operator==(const ScenarioResult&) const = default;
};

// Returns a fresh plant per scenario, or null to run the agent in simulation.
using PlantFactory = std::function<std::unique_ptr<ExternalPlant>()>;

std::uint64_t eval_scenario_seed(std::uint64_t eval_seed, std::size_t scenario);

// Greedy rollouts of a fixed duration that continue through collisions.
// `trace` (if set) receives rows for scenario 0 only.
std::vector<ScenarioResult> evaluate_policy(std::shared_ptr<const TrackSpec> track,
                                            const EnvConfig& env_config, const Network& net,
                                            const Eigen::VectorXd& params,
                                            const EvalOptions& options,
                                            const PlantFactory& plant = {},
                                            std::vector<TraceRow>* trace = nullptr);

double median(std::vector<double> values);

struct SignTest {
  std::size_t improved = 0;
  std::size_t worsened = 0;
  std::size_t ties = 0;
  double p_value = 1.0;  // one-sided, ties dropped
};
// Tests whether `after` tends to exceed `before`, paired by index.
SignTest sign_test_greater(std::span<const double> before, std::span<const double> after);

struct EvalReport {
  std::vector<ScenarioResult> before;
  std::vector<ScenarioResult> after;
  double median_collisions_before = 0.0;
  double median_collisions_after = 0.0;
  double median_reward_before = 0.0;
  double median_reward_after = 0.0;
  SignTest fewer_collisions;  // after < before
  SignTest more_reward;       // after > before
};

EvalReport make_report(std::vector<ScenarioResult> before, std::vector<ScenarioResult> after);
void write_eval_csv(std::ostream& os, const EvalReport& report,
                    std::span<const std::string> header_comments = {});

}  // namespace mixedlane

#endif  // MIXEDLANE_EVALUATION_H_
