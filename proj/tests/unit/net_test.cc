#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "mixedlane/net.h"

using namespace mixedlane;

namespace {

Observation random_observation(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  Observation o;
  o.self = {U(rng) + 1.0, U(rng) + 1.0, 1.0, 1.0, 0.0};
  for (auto& n : o.neighbors) {
    n.is_null = false;
    n.distance = 1.0 + U(rng);
    n.cos_bearing = U(rng);
    n.sin_bearing = U(rng);
    n.relative_speed = U(rng);
    n.lane_delta = std::round(U(rng));
    n.changing_lane = 0.0;
  }
  return o;
}

std::string temp_path(const char* name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("policy heads are distributions") {
  Network net(NetworkShape{});
  std::mt19937_64 rng(1);
  const Eigen::VectorXd params = initialize_parameters(net.layout(), rng);
  std::vector<Observation> obs;
  for (int i = 0; i < 32; ++i) obs.push_back(random_observation(rng));
  const NetworkOutput out = net.forward(params, encode(obs));
  for (Eigen::Index b = 0; b < 32; ++b) {
    CHECK(out.policy.lane.col(b).sum() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(out.policy.accel.col(b).sum() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(out.policy.lane.col(b).minCoeff() > 0.0);
    CHECK(out.policy.accel.col(b).minCoeff() > 0.0);
  }
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(params.size());
  const NetworkOutput u = net.forward(zero, encode(obs));
  CHECK((u.policy.lane.array() - 1.0 / 3.0).abs().maxCoeff() < 1e-15);
  CHECK((u.policy.accel.array() - 1.0 / 3.0).abs().maxCoeff() < 1e-15);
  // The target copy (actor prefix) gives the same policy.
  const PolicyOutput p = net.policy(params.head(net.layout().actor_size()), encode(obs));
  CHECK(p.lane == out.policy.lane);
}

TEST_CASE("neighbour permutations leave outputs bit-identical") {
  Network net(NetworkShape{});
  std::mt19937_64 rng(2);
  const Eigen::VectorXd params = initialize_parameters(net.layout(), rng);
  for (int trial = 0; trial < 50; ++trial) {
    Observation o = random_observation(rng);
    Observation shuffled = o;
    std::shuffle(shuffled.neighbors.begin(), shuffled.neighbors.end(), rng);
    const Observation a[1] = {o};
    const Observation b[1] = {shuffled};
    const NetworkOutput x = net.forward(params, encode(a));
    const NetworkOutput y = net.forward(params, encode(b));
    REQUIRE(x.policy.lane == y.policy.lane);
    REQUIRE(x.policy.accel == y.policy.accel);
    REQUIRE(x.v1 == y.v1);
    REQUIRE(x.v2 == y.v2);
  }
}

TEST_CASE("backward: zero sensitivity and the last critic bias") {
  Network net(NetworkShape{});
  std::mt19937_64 rng(3);
  const Eigen::VectorXd params = initialize_parameters(net.layout(), rng);
  std::vector<Observation> obs;
  for (int i = 0; i < 5; ++i) obs.push_back(random_observation(rng));
  ForwardCache cache;
  net.forward(params, encode(obs), &cache);
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(params.size());
  net.backward(params, cache, OutputGradient{}, grad);
  CHECK(grad.isZero(0.0));

  // d(sum_b V1_b)/d(output bias of critic 1) = batch size.
  OutputGradient dout;
  dout.v1 = Eigen::RowVectorXd::Ones(5);
  net.backward(params, cache, dout, grad);
  const LayerSlice& last = net.layout().block(Block::kCritic1).back();
  CHECK(grad[static_cast<Eigen::Index>(last.offset + last.out * last.in)] == doctest::Approx(5.0));
  // Critic 1 does not reach critic 2 or the heads.
  for (const LayerSlice& l : net.layout().block(Block::kCritic2)) {
    CHECK(grad.segment(static_cast<Eigen::Index>(l.offset), static_cast<Eigen::Index>(l.size())).isZero(0.0));
  }
}

TEST_CASE("action sampling") {
  std::mt19937_64 rng(4);
  const HeadProbs det{1.0, 0.0, 0.0};
  for (int i = 0; i < 100; ++i) {
    const SampledAction s = sample_action(det, det, rng);
    REQUIRE(s.action.lane == LaneAction::kLeft);
    REQUIRE(s.action.accel == AccelAction::kDecelerate);
    REQUIRE(s.log_prob == 0.0);
  }
  const HeadProbs uni{1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};
  std::array<int, 9> counts{};
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const SampledAction s = sample_action(uni, uni, rng);
    ++counts[static_cast<std::size_t>(s.action.lane) * 3 + static_cast<std::size_t>(s.action.accel)];
  }
  const double p = 1.0 / 9.0, sigma = std::sqrt(n * p * (1 - p));
  for (int c : counts) CHECK(std::abs(c - n * p) < 3.0 * sigma);
  const HeadProbs lane{0.2, 0.5, 0.3}, accel{0.6, 0.1, 0.3};
  const SampledAction s = sample_action(lane, accel, rng);
  CHECK(s.log_prob == doctest::Approx(action_log_prob(lane, accel, s.action)));
  CHECK(action_log_prob(lane, accel, {AccelAction::kHold, LaneAction::kNone}) ==
        doctest::Approx(std::log(0.5) + std::log(0.1)));
  CHECK(greedy_action(lane, accel) == ActionPair{AccelAction::kDecelerate, LaneAction::kNone});
}

TEST_CASE("Polyak averaging") {
  Eigen::VectorXd target = Eigen::VectorXd::Constant(4, 1.0);
  const Eigen::VectorXd online = Eigen::VectorXd::Zero(6);
  Eigen::VectorXd same = online.head(4);
  polyak_update(same, online, 0.7);
  CHECK(same.isZero(0.0));
  polyak_update(target, online, 0.7);
  CHECK(target[0] == doctest::Approx(0.7));
  for (int k = 2; k <= 20; ++k) {
    polyak_update(target, online, 0.7);
    REQUIRE(target[3] == doctest::Approx(std::pow(0.7, k)).epsilon(1e-12));
  }
}

TEST_CASE("checkpoint round trip and shape checks") {
  Checkpoint c = make_checkpoint(NetworkShape{16, 4}, 9);
  c.provenance = {" test"};
  const std::string path = temp_path("mixedlane_net_test.ckpt");
  save_checkpoint(path, c);
  const Checkpoint back = load_checkpoint(path, NetworkShape{16, 4});
  CHECK(back.shape == c.shape);
  CHECK(back.online == c.online);
  CHECK(back.target == c.target);
  CHECK_THROWS_AS(load_checkpoint(path, NetworkShape{}), CheckpointError);
  {
    std::ofstream os(path);
    os << "mixedlane-checkpoint 1\nshape 16 4\nonline 3\n";
  }
  CHECK_THROWS_AS(load_checkpoint(path), CheckpointError);
  CHECK_THROWS_AS(load_checkpoint(temp_path("does_not_exist.ckpt")), CheckpointError);
  std::remove(path.c_str());
}
