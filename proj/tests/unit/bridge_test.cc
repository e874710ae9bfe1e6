#include <doctest.h>

#include <cmath>
#include <random>

#include "mixedlane/bridge.h"

using namespace mixedlane;

TEST_CASE("wire sizes and round trips") {
  PoseMessage p{7, 123456789012ULL, 1.5, -2.25, 0.3, 0.9};
  const auto pb = encode(p);
  CHECK(pb.size() == 45);
  CHECK(pb[0] == 0x01);
  const PoseMessage q = decode_pose(pb);
  CHECK(encode(q) == pb);
  CHECK(q.x == p.x);
  CommandMessage c{3, 42, -0.2, 1.1};
  const auto cb = encode(c);
  CHECK(cb.size() == 29);
  CHECK(encode(decode_command(cb)) == cb);
  CHECK(std::holds_alternative<CommandMessage>(decode(cb)));
  CHECK(std::holds_alternative<PoseMessage>(decode(pb)));
  CHECK_THROWS_AS(decode_pose(cb), ProtocolError);
  CHECK_THROWS_AS(decode_command(std::span(pb).first(29)), ProtocolError);
  CHECK_THROWS_AS(decode(std::span(pb).first(10)), ProtocolError);
  // Little-endian id.
  CHECK(pb[1] == 7);
  CHECK(pb[2] == 0);
}

TEST_CASE("zero-perturbation plant equals the bicycle model") {
  PlantEmulator plant(PlantConfig::ideal());
  PoseMessage start{1, 0, 0.5, -1.0, 0.2, 0.8};
  plant.reset(start);
  VehicleState sim;
  sim.x = 0.5;
  sim.y = -1.0;
  sim.heading = 0.2;
  sim.speed = 0.8;
  SpeedTracker tracker = SpeedTracker::ideal(4.0);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> U(-0.6, 0.6);
  for (int t = 1; t <= 500; ++t) {
    const double steer = U(rng), target = 1.0 + U(rng);
    const PoseMessage m = plant.step({1, static_cast<std::uint64_t>(t), steer, target});
    sim.speed = std::clamp(tracker.update(sim.speed, target, 0.02), 0.0, 2.0);
    sim = step_bicycle(sim, steer, 0.02, 0.16);
    REQUIRE(m.x == sim.x);
    REQUIRE(m.y == sim.y);
    REQUIRE(m.heading == sim.heading);
    REQUIRE(m.speed == sim.speed);
    REQUIRE(m.timestamp_us == static_cast<std::uint64_t>(t));
  }
}

TEST_CASE("velocity lag") {
  PlantConfig cfg;
  cfg.velocity_lag = 0.25;
  cfg.speed_mode = PlantSpeedMode::kPid;
  cfg.pid = PidGains{1.0, 0.0, 0.0, 5.0};
  PlantEmulator plant(cfg);
  plant.reset({1, 0, 0, 0, 0, 0});
  CHECK(plant.step({1, 1, 0.0, 1.0}).speed == doctest::Approx(0.08).epsilon(1e-12));
}

TEST_CASE("actuation delay") {
  PlantConfig cfg;
  cfg.actuation_delay = 2;
  PlantEmulator plant(cfg);
  plant.reset({1, 0, 0, 0, 0, 1.0});
  const PoseMessage a = plant.step({1, 1, 0.5, 1.0});
  const PoseMessage b = plant.step({1, 2, 0.0, 1.0});
  const PoseMessage c = plant.step({1, 3, 0.0, 1.0});
  CHECK(a.heading == 0.0);
  CHECK(b.heading == 0.0);
  CHECK(c.heading > 0.0);
}

TEST_CASE("pose sync extrapolates and times out") {
  PoseSync sync;
  CHECK_THROWS_AS(sync.missed(0.02), BridgeTimeout);
  sync.fresh({1, 0, 1.0, 2.0, 0.0, 1.0});
  const ExternalPose p = sync.missed(0.02);
  CHECK(p.x == doctest::Approx(1.02));
  CHECK(p.y == 2.0);
  for (int i = 2; i <= kMaxStaleTicks; ++i) sync.missed(0.02);
  CHECK_THROWS_AS(sync.missed(0.02), BridgeTimeout);
  sync.fresh({1, 0, 0.0, 0.0, 0.0, 1.0});
  CHECK(sync.stale_ticks() == 0);
}

TEST_CASE("in-process link drops and recovers") {
  InProcessPlantLink link(PlantConfig::ideal());
  VehicleState s;
  s.speed = 1.0;
  s.commanded_speed = 1.0;
  link.reset(1, s, 0);
  link.set_drop([](std::uint64_t ts) { return ts == 2; });
  const ExternalPose a = link.exchange(1, 1, 0.0, 1.0, 0.02);
  const ExternalPose b = link.exchange(1, 2, 0.0, 1.0, 0.02);
  CHECK(a.x == doctest::Approx(0.02));
  CHECK(b.x == doctest::Approx(0.04));
  CHECK(link.sync().stale_ticks() == 1);
  link.set_drop([](std::uint64_t) { return true; });
  for (int i = 0; i < kMaxStaleTicks - 1; ++i) link.exchange(1, 10 + i, 0.0, 1.0, 0.02);
  CHECK_THROWS_AS(link.exchange(1, 100, 0.0, 1.0, 0.02), BridgeTimeout);
}

TEST_CASE("UDP link against a plant server") {
  PlantServer server(PlantConfig::ideal(), Endpoint{"127.0.0.1", 0});
  server.start();
  UdpLinkConfig cfg;
  cfg.plant = Endpoint{"127.0.0.1", server.port()};
  cfg.reply_timeout_ms = 500;
  UdpPlantLink link(cfg);
  InProcessPlantLink local(PlantConfig::ideal());
  VehicleState s;
  s.x = 0.3;
  s.speed = 0.5;
  link.reset(2, s, 0);
  local.reset(2, s, 0);
  for (int t = 1; t <= 200; ++t) {
    const auto ts = static_cast<std::uint64_t>(t) * 20000;
    const ExternalPose a = link.exchange(2, ts, 0.1, 1.0, 0.02);
    const ExternalPose b = local.exchange(2, ts, 0.1, 1.0, 0.02);
    REQUIRE(a.x == b.x);
    REQUIRE(a.heading == b.heading);
  }
  server.stop();
}

TEST_CASE("UDP link without a plant times out") {
  UdpSocket probe(Endpoint{"127.0.0.1", 0});
  const std::uint16_t dead = probe.local_port();
  UdpLinkConfig cfg;
  cfg.plant = Endpoint{"127.0.0.1", dead};
  cfg.reset_timeout_ms = 20;
  cfg.reset_attempts = 2;
  UdpPlantLink link(cfg);
  CHECK_THROWS_AS(link.reset(1, VehicleState{}, 0), BridgeTimeout);
}
