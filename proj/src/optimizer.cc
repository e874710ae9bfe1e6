#include "mixedlane/optimizer.h"

#include <cmath>
#include <stdexcept>

namespace mixedlane {

void AdamConfig::validate() const {
  if (!(lr_actor >= 0.0 && lr_critic >= 0.0 && beta1 >= 0.0 && beta1 < 1.0 &&
        beta2 >= 0.0 && beta2 < 1.0 && epsilon > 0.0 && clip_norm >= 0.0)) {
    throw std::invalid_argument("optimiser settings out of range");
  }
}

Adam::Adam(std::size_t size, std::size_t actor_size, AdamConfig config)
    : config_(config),
      actor_size_(actor_size),
      m_(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(size))),
      v_(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(size))) {
  config_.validate();
  if (actor_size > size) throw std::invalid_argument("actor group larger than parameters");
}

bool Adam::step(Eigen::VectorXd& params, const Eigen::VectorXd& grad) {
  if (grad.size() != m_.size() || params.size() != m_.size()) {
    throw std::invalid_argument("optimiser: gradient shape mismatch");
  }
  if (!grad.allFinite()) {
    ++skipped_;
    return false;
  }
  double scale = 1.0;
  if (config_.clip_norm > 0.0) {
    const double norm = grad.norm();
    if (norm > config_.clip_norm) scale = config_.clip_norm / norm;
  }
  const Eigen::VectorXd g = grad * scale;
  const Eigen::VectorXd m = config_.beta1 * m_ + (1.0 - config_.beta1) * g;
  const Eigen::VectorXd v = config_.beta2 * v_ + (1.0 - config_.beta2) * g.cwiseProduct(g);
  const auto t = static_cast<double>(t_ + 1);
  const double c1 = 1.0 - std::pow(config_.beta1, t);
  const double c2 = 1.0 - std::pow(config_.beta2, t);
  Eigen::VectorXd delta =
      (m / c1).cwiseQuotient(((v / c2).cwiseSqrt().array() + config_.epsilon).matrix());
  const auto na = static_cast<Eigen::Index>(actor_size_);
  delta.head(na) *= config_.lr_actor;
  delta.tail(delta.size() - na) *= config_.lr_critic;
  if (!delta.allFinite()) {
    ++skipped_;
    return false;
  }
  params -= delta;
  m_ = m;
  v_ = v;
  ++t_;
  return true;
}

}  // namespace mixedlane
