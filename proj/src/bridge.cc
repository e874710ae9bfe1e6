#include "mixedlane/bridge.h"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <bit>
#include <cerrno>
#include <chrono>
#include <cmath>
#include <cstring>

namespace mixedlane {

namespace {

template <std::size_t N>
class Writer {
 public:
  explicit Writer(std::array<std::uint8_t, N>& out) : out_(out) {}
  void u8(std::uint8_t v) { out_[pos_++] = v; }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_[pos_++] = static_cast<std::uint8_t>(v >> (8 * i));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_[pos_++] = static_cast<std::uint8_t>(v >> (8 * i));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

 private:
  std::array<std::uint8_t, N>& out_;
  std::size_t pos_ = 0;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}
  std::uint8_t u8() { return in_[pos_++]; }
  std::uint32_t u32() {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in_[pos_++]) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(in_[pos_++]) << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }

 private:
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

void check_frame(std::span<const std::uint8_t> bytes, MessageType type, std::size_t size) {
  if (bytes.empty()) throw ProtocolError("empty datagram");
  if (bytes[0] != static_cast<std::uint8_t>(type)) {
    throw ProtocolError("unexpected message type " + std::to_string(bytes[0]));
  }
  if (bytes.size() < size) {
    throw ProtocolError("short datagram: " + std::to_string(bytes.size()) + " of " +
                        std::to_string(size) + " bytes");
  }
  if (bytes.size() > size) {
    throw ProtocolError("datagram has " + std::to_string(bytes.size() - size) +
                        " trailing bytes");
  }
}

sockaddr_in to_sockaddr(const Endpoint& e) {
  sockaddr_in a{};
  a.sin_family = AF_INET;
  a.sin_port = htons(e.port);
  if (inet_pton(AF_INET, e.host.c_str(), &a.sin_addr) != 1) {
    throw std::invalid_argument("bad IPv4 address: " + e.host);
  }
  return a;
}

}  // namespace

std::array<std::uint8_t, kPoseMessageSize> encode(const PoseMessage& m) {
  std::array<std::uint8_t, kPoseMessageSize> out{};
  Writer w(out);
  w.u8(static_cast<std::uint8_t>(MessageType::kPose));
  w.u32(m.vehicle_id);
  w.u64(m.timestamp_us);
  w.f64(m.x);
  w.f64(m.y);
  w.f64(m.heading);
  w.f64(m.speed);
  return out;
}

std::array<std::uint8_t, kCommandMessageSize> encode(const CommandMessage& m) {
  std::array<std::uint8_t, kCommandMessageSize> out{};
  Writer w(out);
  w.u8(static_cast<std::uint8_t>(MessageType::kCommand));
  w.u32(m.vehicle_id);
  w.u64(m.timestamp_us);
  w.f64(m.steering);
  w.f64(m.target_speed);
  return out;
}

PoseMessage decode_pose(std::span<const std::uint8_t> bytes) {
  check_frame(bytes, MessageType::kPose, kPoseMessageSize);
  Reader r(bytes);
  r.u8();
  PoseMessage m;
  m.vehicle_id = r.u32();
  m.timestamp_us = r.u64();
  m.x = r.f64();
  m.y = r.f64();
  m.heading = r.f64();
  m.speed = r.f64();
  return m;
}

CommandMessage decode_command(std::span<const std::uint8_t> bytes) {
  check_frame(bytes, MessageType::kCommand, kCommandMessageSize);
  Reader r(bytes);
  r.u8();
  CommandMessage m;
  m.vehicle_id = r.u32();
  m.timestamp_us = r.u64();
  m.steering = r.f64();
  m.target_speed = r.f64();
  return m;
}

std::variant<PoseMessage, CommandMessage> decode(std::span<const std::uint8_t> bytes) {
  if (bytes.empty()) throw ProtocolError("empty datagram");
  switch (bytes[0]) {
    case static_cast<std::uint8_t>(MessageType::kPose): return decode_pose(bytes);
    case static_cast<std::uint8_t>(MessageType::kCommand): return decode_command(bytes);
    default: throw ProtocolError("unknown message type " + std::to_string(bytes[0]));
  }
}

void PlantConfig::validate() const {
  if (!(velocity_lag >= 0.0 && wheelbase_error > -1.0 && position_noise >= 0.0 &&
        ideal_accel_limit > 0.0 && wheel_base > 0.0 && max_speed > 0.0 && max_steer > 0.0 &&
        dt > 0.0 && std::isfinite(steering_bias))) {
    throw std::invalid_argument("plant configuration out of range");
  }
  if (speed_mode == PlantSpeedMode::kPid && !(pid.integral_limit > 0.0)) {
    throw std::invalid_argument("plant PID integral limit must be positive");
  }
}

PlantConfig PlantConfig::ideal() { return PlantConfig{}; }

PlantConfig PlantConfig::deepracer_like() {
  PlantConfig c;
  c.actuation_delay = 2;
  c.velocity_lag = 0.3;
  c.wheelbase_error = 0.10;
  c.steering_bias = 0.02;
  c.position_noise = 0.0;
  c.speed_mode = PlantSpeedMode::kPid;
  return c;
}

PlantEmulator::PlantEmulator(PlantConfig config)
    : config_(std::move(config)),
      tracker_(config_.speed_mode == PlantSpeedMode::kPid
                   ? SpeedTracker::pid(config_.pid)
                   : SpeedTracker::ideal(config_.ideal_accel_limit)),
      rng_(config_.noise_seed) {
  config_.validate();
}

PoseMessage PlantEmulator::pose(std::uint64_t timestamp_us) const {
  PoseMessage p;
  p.vehicle_id = vehicle_id_;
  p.timestamp_us = timestamp_us;
  p.x = state_.x;
  p.y = state_.y;
  p.heading = state_.heading;
  p.speed = state_.speed;
  return p;
}

PoseMessage PlantEmulator::reset(const PoseMessage& m) {
  vehicle_id_ = m.vehicle_id;
  state_ = VehicleState{};
  state_.x = m.x;
  state_.y = m.y;
  state_.heading = m.heading;
  state_.speed = std::clamp(m.speed, 0.0, config_.max_speed);
  state_.role = Role::kBridgedPlant;
  queue_.clear();
  CommandMessage hold;
  hold.vehicle_id = m.vehicle_id;
  hold.target_speed = state_.speed;
  queue_.assign(config_.actuation_delay, hold);
  tracker_.reset(state_.speed);
  return pose(m.timestamp_us);
}

PoseMessage PlantEmulator::step(const CommandMessage& command) {
  queue_.push_back(command);
  const CommandMessage applied = queue_.front();
  queue_.pop_front();

  const double dt = config_.dt;
  const double effective = tracker_.update(state_.speed, applied.target_speed, dt);
  double v = (config_.velocity_lag > 0.0)
                 ? state_.speed + (dt / config_.velocity_lag) * (effective - state_.speed)
                 : effective;
  state_.speed = std::clamp(v, 0.0, config_.max_speed);

  const double steer = std::clamp(applied.steering + config_.steering_bias, -config_.max_steer,
                                  config_.max_steer);
  state_ = step_bicycle(state_, steer, dt, config_.wheel_base * (1.0 + config_.wheelbase_error));
  if (config_.position_noise > 0.0) {
    state_.x += config_.position_noise * noise_(rng_);
    state_.y += config_.position_noise * noise_(rng_);
  }
  return pose(command.timestamp_us);
}

ExternalPose PoseSync::fresh(const PoseMessage& m) {
  last_ = ExternalPose{m.x, m.y, m.heading, m.speed};
  stale_ = 0;
  return *last_;
}

ExternalPose PoseSync::missed(double dt) {
  if (!last_) throw BridgeTimeout("no pose received from the plant yet");
  if (++stale_ > kMaxStaleTicks) {
    throw BridgeTimeout("no fresh pose for " + std::to_string(stale_) + " ticks");
  }
  last_->x += last_->speed * std::cos(last_->heading) * dt;
  last_->y += last_->speed * std::sin(last_->heading) * dt;
  return *last_;
}

namespace {

PoseMessage pose_from_state(std::uint32_t id, const VehicleState& s, std::uint64_t ts) {
  PoseMessage p;
  p.vehicle_id = id;
  p.timestamp_us = ts;
  p.x = s.x;
  p.y = s.y;
  p.heading = s.heading;
  p.speed = s.speed;
  return p;
}

CommandMessage make_command(std::uint32_t id, std::uint64_t ts, double steering,
                            double target_speed) {
  CommandMessage c;
  c.vehicle_id = id;
  c.timestamp_us = ts;
  c.steering = steering;
  c.target_speed = target_speed;
  return c;
}

}  // namespace

void InProcessPlantLink::reset(std::uint32_t vehicle_id, const VehicleState& state,
                               std::uint64_t timestamp_us) {
  const auto wire = encode(pose_from_state(vehicle_id, state, timestamp_us));
  const auto echo = encode(emulator_.reset(decode_pose(wire)));
  sync_ = PoseSync{};
  sync_.fresh(decode_pose(echo));
}

ExternalPose InProcessPlantLink::exchange(std::uint32_t vehicle_id, std::uint64_t timestamp_us,
                                          double steering, double target_speed, double dt) {
  const auto wire = encode(make_command(vehicle_id, timestamp_us, steering, target_speed));
  const auto reply = encode(emulator_.step(decode_command(wire)));
  if (drop_ && drop_(timestamp_us)) return sync_.missed(dt);
  return sync_.fresh(decode_pose(reply));
}

UdpSocket::UdpSocket(const Endpoint& bind_to) {
  fd_ = ::socket(AF_INET, SOCK_DGRAM, 0);
  if (fd_ < 0) throw std::runtime_error(std::string("socket: ") + std::strerror(errno));
  const sockaddr_in a = to_sockaddr(bind_to);
  if (::bind(fd_, reinterpret_cast<const sockaddr*>(&a), sizeof a) != 0) {
    const std::string err = std::strerror(errno);
    ::close(fd_);
    throw std::runtime_error("bind " + bind_to.host + ":" + std::to_string(bind_to.port) +
                             ": " + err);
  }
}

UdpSocket::~UdpSocket() {
  if (fd_ >= 0) ::close(fd_);
}

std::uint16_t UdpSocket::local_port() const {
  sockaddr_in a{};
  socklen_t len = sizeof a;
  ::getsockname(fd_, reinterpret_cast<sockaddr*>(&a), &len);
  return ntohs(a.sin_port);
}

void UdpSocket::send_to(std::span<const std::uint8_t> bytes, const Endpoint& to) {
  const sockaddr_in a = to_sockaddr(to);
  // Loss is tolerated by the staleness logic, so send errors are not fatal.
  (void)::sendto(fd_, bytes.data(), bytes.size(), 0, reinterpret_cast<const sockaddr*>(&a),
                 sizeof a);
}

std::optional<UdpSocket::Datagram> UdpSocket::receive(int timeout_ms) {
  pollfd p{fd_, POLLIN, 0};
  const int ready = ::poll(&p, 1, timeout_ms);
  if (ready <= 0 || !(p.revents & POLLIN)) return std::nullopt;
  std::array<std::uint8_t, 512> buf{};
  sockaddr_in from{};
  socklen_t len = sizeof from;
  const ssize_t n = ::recvfrom(fd_, buf.data(), buf.size(), 0,
                               reinterpret_cast<sockaddr*>(&from), &len);
  if (n < 0) return std::nullopt;
  Datagram d;
  d.bytes.assign(buf.begin(), buf.begin() + n);
  char host[INET_ADDRSTRLEN] = {};
  ::inet_ntop(AF_INET, &from.sin_addr, host, sizeof host);
  d.from.host = host;
  d.from.port = ntohs(from.sin_port);
  return d;
}

PlantServer::PlantServer(PlantConfig config, const Endpoint& bind_to)
    : emulator_(std::move(config)), socket_(bind_to) {}

PlantServer::~PlantServer() { stop(); }

void PlantServer::start() {
  stop_ = false;
  thread_ = std::thread([this] { serve(stop_); });
}

void PlantServer::stop() {
  stop_ = true;
  if (thread_.joinable()) thread_.join();
}

void PlantServer::serve(const std::atomic<bool>& stop_flag) {
  while (!stop_flag) {
    const auto d = socket_.receive(20);
    if (!d) continue;
    try {
      const auto msg = decode(d->bytes);
      if (const auto* p = std::get_if<PoseMessage>(&msg)) {
        socket_.send_to(encode(emulator_.reset(*p)), d->from);
      } else {
        socket_.send_to(encode(emulator_.step(std::get<CommandMessage>(msg))), d->from);
      }
    } catch (const ProtocolError&) {
      ++malformed_;
    }
  }
}

UdpPlantLink::UdpPlantLink(UdpLinkConfig config)
    : config_(std::move(config)),
      socket_(Endpoint{config_.plant.host == "127.0.0.1" ? "127.0.0.1" : "0.0.0.0", 0}) {
  receiver_ = std::thread([this] { receive_loop(); });
}

UdpPlantLink::~UdpPlantLink() {
  stop_ = true;
  if (receiver_.joinable()) receiver_.join();
}

void UdpPlantLink::receive_loop() {
  while (!stop_) {
    const auto d = socket_.receive(20);
    if (!d) continue;
    try {
      const PoseMessage p = decode_pose(d->bytes);
      {
        std::lock_guard lock(mu_);
        if (!latest_ || p.timestamp_us >= latest_->timestamp_us) latest_ = p;
      }
      cv_.notify_all();
    } catch (const ProtocolError&) {
    }
  }
}

std::optional<PoseMessage> UdpPlantLink::await(std::uint64_t wire_timestamp, int timeout_ms) {
  std::unique_lock lock(mu_);
  const bool ok = cv_.wait_for(lock, std::chrono::milliseconds(timeout_ms), [&] {
    return latest_ && latest_->timestamp_us >= wire_timestamp;
  });
  if (!ok || latest_->timestamp_us != wire_timestamp) return std::nullopt;
  return latest_;
}

void UdpPlantLink::reset(std::uint32_t vehicle_id, const VehicleState& state,
                         std::uint64_t timestamp_us) {
  session_base_ = last_wire_ + 1000000;
  const std::uint64_t wire = session_base_ + timestamp_us;
  last_wire_ = wire;
  const auto bytes = encode(pose_from_state(vehicle_id, state, wire));
  for (int attempt = 0; attempt < config_.reset_attempts; ++attempt) {
    socket_.send_to(bytes, config_.plant);
    if (const auto echo = await(wire, config_.reset_timeout_ms)) {
      sync_ = PoseSync{};
      sync_.fresh(*echo);
      return;
    }
  }
  throw BridgeTimeout("plant at " + config_.plant.host + ":" +
                      std::to_string(config_.plant.port) + " did not acknowledge a reset");
}

ExternalPose UdpPlantLink::exchange(std::uint32_t vehicle_id, std::uint64_t timestamp_us,
                                    double steering, double target_speed, double dt) {
  const std::uint64_t wire = session_base_ + timestamp_us;
  last_wire_ = std::max(last_wire_, wire);
  socket_.send_to(encode(make_command(vehicle_id, wire, steering, target_speed)), config_.plant);
  if (const auto pose = await(wire, config_.reply_timeout_ms)) return sync_.fresh(*pose);
  return sync_.missed(dt);
}

}  // namespace mixedlane
