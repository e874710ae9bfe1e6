#ifndef MIXEDLANE_LOSSES_H_
#define MIXEDLANE_LOSSES_H_

#include <Eigen/Dense>

#include <span>
#include <vector>

#include "mixedlane/env.h"
#include "mixedlane/net.h"

namespace mixedlane {

// R_t = sum_{i<k-t} gamma^i r_{t+i} + gamma^{k-t} bootstrap; bootstrap is
// replaced by 0 when the trajectory ended in a terminal state.
std::vector<double> compute_returns(std::span<const double> rewards, bool terminal,
                                    double gamma, double bootstrap_value);

// Which critic the actor's advantage is measured against.
enum class CriticChoice {
  kClosestToReturn,  // smaller |R - V|, V1 on ties
  kMinimum,
};

struct AdvantageResult {
  std::vector<double> advantages;
  double critic_loss = 0.0;  // mean of (R - V1)^2 + (R - V2)^2
};

AdvantageResult advantage_and_critic_loss(std::span<const double> returns,
                                          std::span<const double> v1,
                                          std::span<const double> v2,
                                          CriticChoice choice = CriticChoice::kClosestToReturn);

// mean of -min(rho A, clamp(rho, 1 - eps, 1 + eps) A).
double ppo_clip_loss(std::span<const double> ratios, std::span<const double> advantages,
                     double epsilon);

// Factorised joint entropy of the two heads; 0 log 0 is 0.
double policy_entropy(const HeadProbs& lane, const HeadProbs& accel);
inline double entropy_loss(const HeadProbs& lane, const HeadProbs& accel) {
  return -policy_entropy(lane, accel);
}

struct LossWeights {
  double actor = 10.0;
  double critic = 1.0;
  double entropy = 0.003;
};

double total_loss(double ppo, double critic, double entropy_term, const LossWeights& w);

// Per-sample quantities held constant while differentiating.
struct LossTargets {
  std::vector<ActionPair> actions;
  std::vector<double> behaviour_log_probs;
  std::vector<double> returns;
  std::vector<double> advantages;
};

struct LossBreakdown {
  double ppo = 0.0;
  double critic = 0.0;
  double entropy = 0.0;  // the -H term, batch mean
  double total = 0.0;
};

// Evaluates the combined loss over a batch and, when `grad` is non-null,
// accumulates its gradient. Reuses `cache` when it already holds a forward
// pass of the same parameters and batch.
LossBreakdown loss_and_gradient(const Network& net, const Eigen::VectorXd& params,
                                const ObservationBatch& batch, const LossTargets& targets,
                                double epsilon, const LossWeights& weights,
                                Eigen::VectorXd* grad, const NetworkOutput* output = nullptr,
                                const ForwardCache* cache = nullptr);

}  // namespace mixedlane

#endif  // MIXEDLANE_LOSSES_H_
