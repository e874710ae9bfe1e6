#ifndef MIXEDLANE_OPTIMIZER_H_
#define MIXEDLANE_OPTIMIZER_H_

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>

namespace mixedlane {

struct AdamConfig {
  double lr_actor = 2e-4;   // trunk, actor body and heads
  double lr_critic = 2e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double clip_norm = 0.0;   // global-norm clip; 0 disables

  void validate() const;
};

// Adam with two learning-rate groups split at `actor_size`.
class Adam {
 public:
  Adam(std::size_t size, std::size_t actor_size, AdamConfig config);

  // Returns false and leaves everything untouched when the gradient (or the
  // resulting update) is not finite.
  bool step(Eigen::VectorXd& params, const Eigen::VectorXd& grad);

  std::uint64_t steps() const { return t_; }
  std::uint64_t skipped() const { return skipped_; }
  const Eigen::VectorXd& first_moment() const { return m_; }
  const Eigen::VectorXd& second_moment() const { return v_; }

 private:
  AdamConfig config_;
  std::size_t actor_size_;
  Eigen::VectorXd m_;
  Eigen::VectorXd v_;
  std::uint64_t t_ = 0;
  std::uint64_t skipped_ = 0;
};

}  // namespace mixedlane

#endif  // MIXEDLANE_OPTIMIZER_H_
