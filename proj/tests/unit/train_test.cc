#include <doctest.h>

#include <memory>

#include "mixedlane/bridge.h"
#include "mixedlane/train.h"
#include "serial_trainer.h"

using namespace mixedlane;

namespace {

std::shared_ptr<const TrackSpec> track3() {
  static auto t = std::make_shared<const TrackSpec>(
      build_track(rounded_rect_spine(5.56, 3.5, 1.0), 3, 0.30));
  return t;
}

struct Start {
  Network net{NetworkShape{16, 4}};
  Checkpoint ckpt = make_checkpoint(NetworkShape{16, 4}, 21);
};

}  // namespace

TEST_CASE("single-worker pre-training equals the serial reference") {
  Start s;
  EnvConfig env;
  env.max_episode_time = 3.0;
  for (std::size_t envs : {1u, 3u}) {
    TrainConfig cfg;
    cfg.horizon = 32;
    cfg.envs_per_worker = envs;
    cfg.total_frames = 1000;
    cfg.seed = 77;
    const TrainResult async = run_pretraining(cfg, track3(), env, s.net, s.ckpt.online, s.ckpt.target);
    const TrainResult serial = oracle::serial_train(cfg, track3(), env, s.net, s.ckpt.online, s.ckpt.target);
    REQUIRE(async.frames.size() == 1000);
    CHECK(async.frames == serial.frames);
    CHECK(async.online == serial.online);
    CHECK(async.target == serial.target);
    CHECK(async.updates == serial.updates);

    cfg.seed = 78;
    const TrainResult other = run_pretraining(cfg, track3(), env, s.net, s.ckpt.online, s.ckpt.target);
    CHECK(other.frames != async.frames);
  }
  TrainConfig none;
  const TrainResult zero = run_pretraining(none, track3(), env, s.net, s.ckpt.online, s.ckpt.target);
  const TrainResult zero_ref = oracle::serial_train(none, track3(), env, s.net, s.ckpt.online, s.ckpt.target);
  CHECK(zero.frames.empty());
  CHECK(zero.online == s.ckpt.online);
  CHECK(zero.target == s.ckpt.target);
  CHECK(zero_ref.online == zero.online);
}

TEST_CASE("multi-worker pre-training delivers exactly the requested frames") {
  Start s;
  TrainConfig cfg;
  cfg.horizon = 16;
  cfg.workers = 3;
  cfg.envs_per_worker = 2;
  cfg.total_frames = 1001;
  const TrainResult r = run_pretraining(cfg, track3(), EnvConfig{}, s.net, s.ckpt.online, s.ckpt.target);
  CHECK(r.frames.size() == 1001);
  CHECK(r.worker_errors == 0);
  CHECK(r.updates * 32 >= 1001);
}

TEST_CASE("adaptation bookkeeping") {
  Start s;
  TrainConfig cfg;
  cfg.total_frames = 2048;
  Env env(track3(), EnvConfig{}, adaptation_env_seed(cfg.seed));
  const TrainResult r = run_adaptation(cfg, env, s.net, s.ckpt.online, s.ckpt.target);
  CHECK(r.frames.size() == 2048);
  CHECK(r.updates == 2);
  CHECK(env.episodes() >= 4);

  cfg.total_frames = 0;
  const TrainResult none = run_adaptation(cfg, env, s.net, s.ckpt.online, s.ckpt.target);
  CHECK(none.online == s.ckpt.online);
  CHECK(none.updates == 0);
}

TEST_CASE("adaptation through an ideal in-process plant matches pure simulation") {
  Start s;
  TrainConfig cfg;
  cfg.total_frames = 1024;
  EnvConfig sim;
  EnvConfig bridged;
  bridged.agent_role = Role::kBridgedPlant;
  Env a(track3(), sim, adaptation_env_seed(cfg.seed));
  Env b(track3(), bridged, adaptation_env_seed(cfg.seed));
  InProcessPlantLink link(PlantConfig::ideal());
  b.attach_plant(&link);
  const TrainResult ra = run_adaptation(cfg, a, s.net, s.ckpt.online, s.ckpt.target);
  const TrainResult rb = run_adaptation(cfg, b, s.net, s.ckpt.online, s.ckpt.target);
  CHECK(ra.frames == rb.frames);
  CHECK(ra.online == rb.online);
}

TEST_CASE("the learner solves a speed-matching bandit") {
  // One-step episodes: accelerate when slow, brake when fast, else -1.
  TrainConfig cfg;
  Network net(NetworkShape{});
  std::mt19937_64 rng(5);
  Eigen::VectorXd online = initialize_parameters(net.layout(), rng);
  Eigen::VectorXd target = online.head(static_cast<Eigen::Index>(net.layout().actor_size()));
  Adam adam(net.layout().total_size(), net.layout().actor_size(), cfg.adam);
  auto make_obs = [](double dv) {
    Observation o;
    o.self = {0.8 + dv, 0.8, 1.0, 1.0, 0.0};
    for (auto& n : o.neighbors) n = NeighborObservation::null(2.0);
    return o;
  };
  auto batch_reward = [&](bool learn) {
    std::vector<Segment> segs;
    double total = 0.0;
    for (int b = 0; b < 128; ++b) {
      const double dv = uniform01(rng) - 0.5;
      const Observation o[1] = {make_obs(dv)};
      const PolicyOutput pol = net.policy(target, encode(o));
      const SampledAction act = sample_action(head_column(pol.lane, 0), head_column(pol.accel, 0), rng);
      const bool right = (dv < 0 && act.action.accel == AccelAction::kAccelerate) ||
                         (dv > 0 && act.action.accel == AccelAction::kDecelerate);
      const double r = right ? 0.0 : -1.0;
      total += r;
      Segment sg;
      sg.steps.push_back({o[0], act.action, act.log_prob, r});
      sg.terminal = true;
      segs.push_back(std::move(sg));
    }
    if (learn) {
      const GradientResult g = segment_gradient(net, online, segs, cfg);
      if (adam.step(online, g.gradient)) polyak_update(target, online, cfg.tau);
    }
    return total / 128.0;
  };
  double early = 0.0;
  for (int i = 0; i < 10; ++i) early += batch_reward(false) / 10.0;
  for (int i = 0; i < 600; ++i) batch_reward(true);
  double late = 0.0;
  for (int i = 0; i < 10; ++i) late += batch_reward(false) / 10.0;
  CHECK(early < -0.5);
  CHECK(late > -0.3);
  CHECK(late > early + 0.3);
}
