#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "mixedlane/losses.h"
#include "mixedlane/optimizer.h"
#include "oracles.h"

using namespace mixedlane;

TEST_CASE("returns: hand values") {
  const std::vector<double> one{1.0};
  CHECK(compute_returns(one, false, 0.9, 0.0)[0] == 1.0);
  CHECK(compute_returns(one, false, 0.9, 2.0)[0] == doctest::Approx(2.8));
  const std::vector<double> r{1.0, 1.0};
  const auto R = compute_returns(r, false, 0.9, 10.0);
  // 1 + 0.9 * 1 + 0.81 * 10.
  CHECK(R[0] == doctest::Approx(10.0).epsilon(1e-12));
  CHECK(R[1] == doctest::Approx(10.0).epsilon(1e-12));
  const auto T = compute_returns(r, true, 0.9, 10.0);
  CHECK(T[0] == doctest::Approx(1.9).epsilon(1e-12));
  CHECK(T[1] == 1.0);
}

TEST_CASE("returns agree with the double-loop oracle") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  for (int i = 0; i < 1000; ++i) {
    const std::size_t k = 1 + rng() % 200;
    std::vector<double> r(k);
    for (double& x : r) x = U(rng);
    const bool terminal = rng() % 2;
    const double boot = 5.0 * U(rng);
    const auto lib = compute_returns(r, terminal, 0.9, boot);
    const auto ref = oracle::returns(r, terminal, 0.9, boot);
    for (std::size_t t = 0; t < k; ++t) REQUIRE(lib[t] == doctest::Approx(ref[t]).epsilon(1e-12));
  }
}

TEST_CASE("advantages and critic loss") {
  const std::vector<double> R{2.0}, a{1.0}, b{3.0};
  AdvantageResult res = advantage_and_critic_loss(R, a, b);
  CHECK(res.advantages[0] == 1.0);
  CHECK(res.critic_loss == doctest::Approx(2.0));
  const std::vector<double> c{0.0}, d{1.5};
  CHECK(advantage_and_critic_loss(R, c, d).advantages[0] == doctest::Approx(0.5));
  CHECK(advantage_and_critic_loss(R, c, d, CriticChoice::kMinimum).advantages[0] == doctest::Approx(2.0));
  const std::vector<double> same{2.0};
  res = advantage_and_critic_loss(R, same, same);
  CHECK(res.advantages[0] == 0.0);
  CHECK(res.critic_loss == 0.0);
}

TEST_CASE("PPO clip hand values") {
  const std::vector<double> one{1.0}, adv{0.7};
  CHECK(ppo_clip_loss(one, adv, 0.1) == doctest::Approx(-0.7));
  const std::vector<double> r1{1.5}, a1{1.0};
  CHECK(ppo_clip_loss(r1, a1, 0.1) == doctest::Approx(-1.1).epsilon(1e-12));
  const std::vector<double> r2{0.5}, a2{-1.0};
  CHECK(ppo_clip_loss(r2, a2, 0.1) == doctest::Approx(0.9).epsilon(1e-12));
}

TEST_CASE("entropy hand values") {
  const HeadProbs uni{1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0}, det{0.0, 1.0, 0.0};
  CHECK(policy_entropy(uni, uni) == doctest::Approx(2.0 * std::log(3.0)).epsilon(1e-12));
  CHECK(policy_entropy(det, det) == 0.0);
  CHECK(policy_entropy(uni, det) == doctest::Approx(std::log(3.0)).epsilon(1e-12));
  CHECK(entropy_loss(uni, uni) == doctest::Approx(-2.1972).epsilon(1e-4));
}

TEST_CASE("total loss") {
  const LossWeights w;
  CHECK(total_loss(0.0, 0.0, 0.0, w) == 0.0);
  CHECK(total_loss(-1.1, 2.0, -2.1972, w) == doctest::Approx(-9.0065916).epsilon(1e-12));
  CHECK(std::abs(total_loss(-1.1, 2.0, -2.1972, w) - (-9.0066)) < 1e-4);
}

TEST_CASE("entropy weight zero removes its gradient") {
  Network net(NetworkShape{8, 4});
  std::mt19937_64 rng(6);
  const Eigen::VectorXd p = initialize_parameters(net.layout(), rng);
  std::vector<Observation> obs(3);
  for (auto& o : obs) {
    o.self = {1.0, 0.8, 1.0, 1.0, 0.0};
    for (auto& n : o.neighbors) n = NeighborObservation::null(2.0);
  }
  LossTargets t;
  t.actions.assign(3, ActionPair{});
  t.behaviour_log_probs.assign(3, std::log(1.0 / 9.0));
  t.returns.assign(3, 0.0);
  t.advantages.assign(3, 0.0);
  LossWeights only_entropy{0.0, 0.0, 0.0};
  Eigen::VectorXd g = Eigen::VectorXd::Zero(p.size());
  loss_and_gradient(net, p, encode(obs), t, 0.1, only_entropy, &g);
  CHECK(g.isZero(0.0));
}

TEST_CASE("Adam") {
  AdamConfig cfg;
  cfg.lr_actor = 0.01;
  cfg.lr_critic = 0.1;
  Adam adam(2, 1, cfg);
  Eigen::VectorXd p(2);
  p << 1.0, 1.0;
  Eigen::VectorXd g(2);
  g << 1.0, 1.0;
  REQUIRE(adam.step(p, g));
  CHECK(p[0] == doctest::Approx(1.0 - 0.01 / (1.0 + 1e-8)).epsilon(1e-14));
  CHECK(p[1] == doctest::Approx(1.0 - 0.1 / (1.0 + 1e-8)).epsilon(1e-14));
  const Eigen::VectorXd m = adam.first_moment();
  REQUIRE(adam.step(p, Eigen::VectorXd::Zero(2)));
  CHECK(adam.first_moment()[0] == doctest::Approx(0.9 * m[0]));
  g[0] = std::nan("");
  CHECK_FALSE(adam.step(p, g));
  CHECK(adam.skipped() == 1);
  CHECK(adam.steps() == 2);

  Adam fresh(2, 1, cfg);
  Eigen::VectorXd q = Eigen::VectorXd::Ones(2);
  REQUIRE(fresh.step(q, Eigen::VectorXd::Zero(2)));
  CHECK(q == Eigen::VectorXd::Ones(2));
}
