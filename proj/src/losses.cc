#include "mixedlane/losses.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mixedlane {

std::vector<double> compute_returns(std::span<const double> rewards, bool terminal,
                                    double gamma, double bootstrap_value) {
  if (rewards.empty()) throw std::invalid_argument("empty trajectory");
  std::vector<double> out(rewards.size());
  double running = terminal ? 0.0 : bootstrap_value;
  for (std::size_t t = rewards.size(); t-- > 0;) {
    running = rewards[t] + gamma * running;
    out[t] = running;
  }
  return out;
}

AdvantageResult advantage_and_critic_loss(std::span<const double> returns,
                                          std::span<const double> v1,
                                          std::span<const double> v2, CriticChoice choice) {
  if (returns.size() != v1.size() || returns.size() != v2.size()) {
    throw std::invalid_argument("returns and values must align");
  }
  AdvantageResult r;
  r.advantages.resize(returns.size());
  double sum = 0.0;
  for (std::size_t t = 0; t < returns.size(); ++t) {
    const double e1 = returns[t] - v1[t], e2 = returns[t] - v2[t];
    sum += e1 * e1 + e2 * e2;
    if (choice == CriticChoice::kClosestToReturn) {
      r.advantages[t] = (std::abs(e2) < std::abs(e1)) ? e2 : e1;
    } else {
      r.advantages[t] = returns[t] - std::min(v1[t], v2[t]);
    }
  }
  r.critic_loss = returns.empty() ? 0.0 : sum / static_cast<double>(returns.size());
  return r;
}

double ppo_clip_loss(std::span<const double> ratios, std::span<const double> advantages,
                     double epsilon) {
  if (ratios.size() != advantages.size()) {
    throw std::invalid_argument("ratios and advantages must align");
  }
  if (ratios.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t t = 0; t < ratios.size(); ++t) {
    if (!(ratios[t] > 0.0)) throw std::invalid_argument("probability ratio must be positive");
    const double clipped = std::clamp(ratios[t], 1.0 - epsilon, 1.0 + epsilon);
    sum += -std::min(ratios[t] * advantages[t], clipped * advantages[t]);
  }
  return sum / static_cast<double>(ratios.size());
}

namespace {

double head_entropy(const HeadProbs& p) {
  double h = 0.0;
  for (double q : p) {
    if (q > 0.0) h -= q * std::log(q);
  }
  return h;
}

}  // namespace

double policy_entropy(const HeadProbs& lane, const HeadProbs& accel) {
  return head_entropy(lane) + head_entropy(accel);
}

double total_loss(double ppo, double critic, double entropy_term, const LossWeights& w) {
  return w.actor * ppo + w.critic * critic + w.entropy * entropy_term;
}

LossBreakdown loss_and_gradient(const Network& net, const Eigen::VectorXd& params,
                                const ObservationBatch& batch, const LossTargets& targets,
                                double epsilon, const LossWeights& weights,
                                Eigen::VectorXd* grad, const NetworkOutput* output,
                                const ForwardCache* cache) {
  const std::size_t n = batch.size();
  if (targets.actions.size() != n || targets.behaviour_log_probs.size() != n ||
      targets.returns.size() != n || targets.advantages.size() != n) {
    throw std::invalid_argument("loss targets must match the batch");
  }
  if (n == 0) return {};
  ForwardCache local_cache;
  NetworkOutput local_out;
  if (output == nullptr || cache == nullptr) {
    local_out = net.forward(params, batch, &local_cache);
    output = &local_out;
    cache = &local_cache;
  }
  const double inv_n = 1.0 / static_cast<double>(n);

  OutputGradient d;
  if (grad != nullptr) {
    d.lane_logits = Eigen::MatrixXd::Zero(3, static_cast<Eigen::Index>(n));
    d.accel_logits = Eigen::MatrixXd::Zero(3, static_cast<Eigen::Index>(n));
    d.v1.resize(static_cast<Eigen::Index>(n));
    d.v2.resize(static_cast<Eigen::Index>(n));
  }

  LossBreakdown loss;
  for (std::size_t t = 0; t < n; ++t) {
    const auto c = static_cast<Eigen::Index>(t);
    const HeadProbs lane = head_column(output->policy.lane, t);
    const HeadProbs accel = head_column(output->policy.accel, t);
    const ActionPair& a = targets.actions[t];
    const double ratio =
        std::exp(action_log_prob(lane, accel, a) - targets.behaviour_log_probs[t]);
    const double adv = targets.advantages[t];
    const double clipped = std::clamp(ratio, 1.0 - epsilon, 1.0 + epsilon);
    const bool unclipped_active = ratio * adv <= clipped * adv;
    loss.ppo += -std::min(ratio * adv, clipped * adv);

    const double e1 = targets.returns[t] - output->v1[c];
    const double e2 = targets.returns[t] - output->v2[c];
    loss.critic += e1 * e1 + e2 * e2;

    const double h_lane = head_entropy(lane), h_accel = head_entropy(accel);
    loss.entropy += -(h_lane + h_accel);

    if (grad == nullptr) continue;
    // d(loss)/d(rho): only the unclipped branch depends on the parameters.
    const double drho = unclipped_active ? -adv * inv_n * weights.actor : 0.0;
    const auto la = static_cast<std::size_t>(a.lane), aa = static_cast<std::size_t>(a.accel);
    for (std::size_t j = 0; j < 3; ++j) {
      const auto r = static_cast<Eigen::Index>(j);
      const double lane_ppo = drho * ratio * ((j == la ? 1.0 : 0.0) - lane[j]);
      const double accel_ppo = drho * ratio * ((j == aa ? 1.0 : 0.0) - accel[j]);
      // d(-H)/dz_j = p_j (log p_j + H)
      const double lane_ent =
          lane[j] > 0.0 ? lane[j] * (std::log(lane[j]) + h_lane) : 0.0;
      const double accel_ent =
          accel[j] > 0.0 ? accel[j] * (std::log(accel[j]) + h_accel) : 0.0;
      d.lane_logits(r, c) = lane_ppo + weights.entropy * inv_n * lane_ent;
      d.accel_logits(r, c) = accel_ppo + weights.entropy * inv_n * accel_ent;
    }
    d.v1[c] = -2.0 * e1 * inv_n * weights.critic;
    d.v2[c] = -2.0 * e2 * inv_n * weights.critic;
  }
  loss.ppo *= inv_n;
  loss.critic *= inv_n;
  loss.entropy *= inv_n;
  loss.total = total_loss(loss.ppo, loss.critic, loss.entropy, weights);
  if (grad != nullptr) net.backward(params, *cache, d, *grad);
  return loss;
}

}  // namespace mixedlane
