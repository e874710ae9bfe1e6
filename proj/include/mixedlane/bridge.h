#ifndef MIXEDLANE_BRIDGE_H_
#define MIXEDLANE_BRIDGE_H_

#include <array>
#include <atomic>
#include <condition_variable>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <mutex>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <variant>

#include "mixedlane/control.h"
#include "mixedlane/dynamics.h"
#include "mixedlane/env.h"

namespace mixedlane {

inline constexpr std::size_t kPoseMessageSize = 45;
inline constexpr std::size_t kCommandMessageSize = 29;

enum class MessageType : std::uint8_t { kPose = 0x01, kCommand = 0x02 };

struct PoseMessage {
  std::uint32_t vehicle_id = 0;
  std::uint64_t timestamp_us = 0;
  double x = 0.0;
  double y = 0.0;
  double heading = 0.0;
  double speed = 0.0;
};

struct CommandMessage {
  std::uint32_t vehicle_id = 0;
  std::uint64_t timestamp_us = 0;
  double steering = 0.0;
  double target_speed = 0.0;
};

class ProtocolError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Little-endian, no padding: type byte, u32 id, u64 timestamp, f64 fields.
std::array<std::uint8_t, kPoseMessageSize> encode(const PoseMessage& m);
std::array<std::uint8_t, kCommandMessageSize> encode(const CommandMessage& m);

// Reject buffers of the wrong length or type.
PoseMessage decode_pose(std::span<const std::uint8_t> bytes);
CommandMessage decode_command(std::span<const std::uint8_t> bytes);
std::variant<PoseMessage, CommandMessage> decode(std::span<const std::uint8_t> bytes);

enum class PlantSpeedMode { kIdeal, kPid };

struct PlantConfig {
  std::size_t actuation_delay = 0;  // ticks
  double velocity_lag = 0.0;        // tau_v, s; 0 applies the effective command directly
  double wheelbase_error = 0.0;     // fraction
  double steering_bias = 0.0;       // rad
  double position_noise = 0.0;      // sigma, m
  PlantSpeedMode speed_mode = PlantSpeedMode::kIdeal;
  PidGains pid;
  double ideal_accel_limit = 4.0;
  double wheel_base = 0.16;
  double max_speed = 2.0;
  double max_steer = 0.6;
  double dt = 0.02;
  std::uint64_t noise_seed = 0;

  void validate() const;
  // Zero perturbation: stepping matches the simulated vehicle bit for bit.
  static PlantConfig ideal();
  static PlantConfig deepracer_like();
};

// The emulated vehicle. A pose message teleports it; each command message
// advances it by one tick.
class PlantEmulator {
 public:
  explicit PlantEmulator(PlantConfig config);

  PoseMessage reset(const PoseMessage& pose);
  PoseMessage step(const CommandMessage& command);

  const VehicleState& state() const { return state_; }
  const PlantConfig& config() const { return config_; }

 private:
  PoseMessage pose(std::uint64_t timestamp_us) const;

  PlantConfig config_;
  VehicleState state_;
  std::uint32_t vehicle_id_ = 0;
  std::deque<CommandMessage> queue_;
  SpeedTracker tracker_;
  std::mt19937_64 rng_;
  std::normal_distribution<double> noise_{0.0, 1.0};
};

inline constexpr int kMaxStaleTicks = 5;

// Newest pose for the bridged vehicle, dead-reckoned across missed ticks.
class PoseSync {
 public:
  ExternalPose fresh(const PoseMessage& m);
  // Throws BridgeTimeout on the (kMaxStaleTicks + 1)-th consecutive miss.
  ExternalPose missed(double dt);
  int stale_ticks() const { return stale_; }

 private:
  std::optional<ExternalPose> last_;
  int stale_ = 0;
};

// Synchronous link to an emulator in the same process. Every message still
// passes through its wire encoding.
class InProcessPlantLink : public ExternalPlant {
 public:
  explicit InProcessPlantLink(PlantConfig config) : emulator_(std::move(config)) {}

  void reset(std::uint32_t vehicle_id, const VehicleState& state,
             std::uint64_t timestamp_us) override;
  ExternalPose exchange(std::uint32_t vehicle_id, std::uint64_t timestamp_us, double steering,
                        double target_speed, double dt) override;

  // Replies for which this returns true are lost in transit.
  void set_drop(std::function<bool(std::uint64_t timestamp_us)> drop) { drop_ = std::move(drop); }
  PlantEmulator& emulator() { return emulator_; }
  const PoseSync& sync() const { return sync_; }

 private:
  PlantEmulator emulator_;
  PoseSync sync_;
  std::function<bool(std::uint64_t)> drop_;
};

struct Endpoint {
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;
};

class UdpSocket {
 public:
  explicit UdpSocket(const Endpoint& bind_to);
  ~UdpSocket();
  UdpSocket(const UdpSocket&) = delete;
  UdpSocket& operator=(const UdpSocket&) = delete;

  std::uint16_t local_port() const;
  void send_to(std::span<const std::uint8_t> bytes, const Endpoint& to);
  struct Datagram {
    std::vector<std::uint8_t> bytes;
    Endpoint from;
  };
  std::optional<Datagram> receive(int timeout_ms);

 private:
  int fd_ = -1;
};

// Serves one emulator over datagrams: a pose resets it, a command steps it;
// both are answered with the resulting pose.
class PlantServer {
 public:
  PlantServer(PlantConfig config, const Endpoint& bind_to);
  ~PlantServer();

  std::uint16_t port() const { return socket_.local_port(); }
  void start();  // background thread
  void stop();
  void serve(const std::atomic<bool>& stop_flag);  // blocking
  std::uint64_t malformed() const { return malformed_; }

 private:
  PlantEmulator emulator_;
  UdpSocket socket_;
  std::atomic<bool> stop_{false};
  std::thread thread_;
  std::atomic<std::uint64_t> malformed_{0};
};

struct UdpLinkConfig {
  Endpoint plant;
  int reply_timeout_ms = 50;
  int reset_timeout_ms = 200;
  int reset_attempts = 5;
};

// Datagram link to a plant server. A receiver thread keeps the newest pose
// in a single-slot mailbox.
class UdpPlantLink : public ExternalPlant {
 public:
  explicit UdpPlantLink(UdpLinkConfig config);
  ~UdpPlantLink() override;

  void reset(std::uint32_t vehicle_id, const VehicleState& state,
             std::uint64_t timestamp_us) override;
  ExternalPose exchange(std::uint32_t vehicle_id, std::uint64_t timestamp_us, double steering,
                        double target_speed, double dt) override;

 private:
  std::optional<PoseMessage> await(std::uint64_t wire_timestamp, int timeout_ms);
  void receive_loop();

  UdpLinkConfig config_;
  UdpSocket socket_;
  PoseSync sync_;
  std::uint64_t session_base_ = 0;  // keeps wire timestamps monotone across resets
  std::uint64_t last_wire_ = 0;

  std::mutex mu_;
  std::condition_variable cv_;
  std::optional<PoseMessage> latest_;
  std::atomic<bool> stop_{false};
  std::thread receiver_;
};

}  // namespace mixedlane

#endif  // MIXEDLANE_BRIDGE_H_
