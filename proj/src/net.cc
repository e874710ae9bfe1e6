#include "mixedlane/net.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace mixedlane {

namespace {

using ConstMatrixMap = Eigen::Map<const Eigen::MatrixXd>;
using ConstVectorMap = Eigen::Map<const Eigen::VectorXd>;
using MatrixMap = Eigen::Map<Eigen::MatrixXd>;
using VectorMap = Eigen::Map<Eigen::VectorXd>;

ConstMatrixMap weight(const Eigen::VectorXd& p, const LayerSlice& l) {
  return ConstMatrixMap(p.data() + l.offset, static_cast<Eigen::Index>(l.out),
                        static_cast<Eigen::Index>(l.in));
}

ConstVectorMap bias(const Eigen::VectorXd& p, const LayerSlice& l) {
  return ConstVectorMap(p.data() + l.offset + l.out * l.in, static_cast<Eigen::Index>(l.out));
}

// ReLU follows every layer except the last, and the last too when relu_last.
void run_stack(const Eigen::VectorXd& p, const std::vector<LayerSlice>& layers,
               bool relu_last, Eigen::MatrixXd input, std::vector<Eigen::MatrixXd>& acts) {
  acts.clear();
  acts.reserve(layers.size() + 1);
  acts.push_back(std::move(input));
  for (std::size_t i = 0; i < layers.size(); ++i) {
    Eigen::MatrixXd y = weight(p, layers[i]) * acts.back();
    y.colwise() += bias(p, layers[i]);
    if (i + 1 < layers.size() || relu_last) y = y.cwiseMax(0.0);
    acts.push_back(std::move(y));
  }
}

Eigen::MatrixXd stack_backward(const Eigen::VectorXd& p, const std::vector<LayerSlice>& layers,
                               bool relu_last, const std::vector<Eigen::MatrixXd>& acts,
                               Eigen::MatrixXd d, Eigen::VectorXd& grad, bool want_input) {
  for (std::size_t i = layers.size(); i-- > 0;) {
    const LayerSlice& l = layers[i];
    if (i + 1 < layers.size() || relu_last) {
      d = d.cwiseProduct((acts[i + 1].array() > 0.0).cast<double>().matrix());
    }
    MatrixMap gw(grad.data() + l.offset, static_cast<Eigen::Index>(l.out),
                 static_cast<Eigen::Index>(l.in));
    VectorMap gb(grad.data() + l.offset + l.out * l.in, static_cast<Eigen::Index>(l.out));
    gw.noalias() += d * acts[i].transpose();
    gb += d.rowwise().sum();
    if (i > 0 || want_input) d = weight(p, l).transpose() * d;
  }
  return d;
}

Eigen::MatrixXd softmax_columns(const Eigen::MatrixXd& logits) {
  Eigen::MatrixXd out(logits.rows(), logits.cols());
  for (Eigen::Index c = 0; c < logits.cols(); ++c) {
    const double m = logits.col(c).maxCoeff();
    out.col(c) = (logits.col(c).array() - m).exp().matrix();
    out.col(c) /= out.col(c).sum();
  }
  return out;
}

std::size_t pick(const HeadProbs& p, double u) {
  double acc = 0.0;
  for (std::size_t i = 0; i < 3; ++i) {
    acc += p[i];
    if (u < acc) return i;
  }
  for (std::size_t i = 3; i-- > 0;) {
    if (p[i] > 0.0) return i;
  }
  return 2;
}

std::size_t argmax(const HeadProbs& p) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < 3; ++i) {
    if (p[i] > p[best]) best = i;
  }
  return best;
}

constexpr Block kBlocks[kBlockCount] = {Block::kTrunk,    Block::kActorBody, Block::kHeadLane,
                                        Block::kHeadAccel, Block::kCritic1,  Block::kCritic2};

}  // namespace

void NetworkShape::validate() const {
  if (!(features >= 1 && hidden >= features)) {
    throw std::invalid_argument("network shape needs hidden >= features >= 1");
  }
}

const char* block_name(Block b) {
  switch (b) {
    case Block::kTrunk: return "trunk";
    case Block::kActorBody: return "actor_body";
    case Block::kHeadLane: return "head_lane";
    case Block::kHeadAccel: return "head_accel";
    case Block::kCritic1: return "critic1";
    case Block::kCritic2: return "critic2";
  }
  return "?";
}

NetworkLayout::NetworkLayout(NetworkShape shape) : shape_(shape) {
  shape_.validate();
  const std::size_t nh = shape_.hidden, nf = shape_.features, nz = nf + kSelfDim;
  std::size_t offset = 0;
  auto add = [&](Block b, std::initializer_list<std::pair<std::size_t, std::size_t>> dims) {
    for (const auto& [in, out] : dims) {
      LayerSlice l{in, out, offset};
      offset += l.size();
      blocks_[static_cast<std::size_t>(b)].push_back(l);
    }
  };
  add(Block::kTrunk, {{kNeighborDim, nh}, {nh, nh}, {nh, nh}, {nh, nf}});
  add(Block::kActorBody, {{nz, nh}, {nh, nh}, {nh, nh}});
  add(Block::kHeadLane, {{nh, nh}, {nh, 3}});
  add(Block::kHeadAccel, {{nh, nh}, {nh, 3}});
  actor_ = offset;
  add(Block::kCritic1, {{nz, nh}, {nh, nh}, {nh, nh}, {nh, 1}});
  add(Block::kCritic2, {{nz, nh}, {nh, nh}, {nh, nh}, {nh, 1}});
  total_ = offset;
}

ObservationBatch encode(std::span<const Observation> observations) {
  const auto n = static_cast<Eigen::Index>(observations.size());
  ObservationBatch batch;
  batch.self.resize(kSelfDim, n);
  batch.neighbors.resize(kNeighborDim, n * static_cast<Eigen::Index>(kNeighborSlots));
  for (Eigen::Index b = 0; b < n; ++b) {
    const Observation& o = observations[static_cast<std::size_t>(b)];
    const auto s = o.self.values();
    for (std::size_t i = 0; i < kSelfDim; ++i) batch.self(static_cast<Eigen::Index>(i), b) = s[i];
    for (std::size_t j = 0; j < kNeighborSlots; ++j) {
      const auto v = o.neighbors[j].values();
      const Eigen::Index col = b * static_cast<Eigen::Index>(kNeighborSlots) +
                               static_cast<Eigen::Index>(j);
      for (std::size_t i = 0; i < kNeighborDim; ++i) {
        batch.neighbors(static_cast<Eigen::Index>(i), col) = v[i];
      }
    }
  }
  return batch;
}

void Network::trunk_and_pool(const Eigen::VectorXd& params, const ObservationBatch& batch,
                             ForwardCache& cache) const {
  if (batch.self.rows() != static_cast<Eigen::Index>(kSelfDim) ||
      batch.neighbors.rows() != static_cast<Eigen::Index>(kNeighborDim) ||
      batch.neighbors.cols() != batch.self.cols() * static_cast<Eigen::Index>(kNeighborSlots)) {
    throw std::invalid_argument("observation batch has the wrong shape");
  }
  if (!batch.self.allFinite() || !batch.neighbors.allFinite()) {
    throw std::invalid_argument("non-finite observation");
  }
  if (static_cast<std::size_t>(params.size()) < layout_.actor_size()) {
    throw std::invalid_argument("parameter vector too short for the actor");
  }
  run_stack(params, layout_.block(Block::kTrunk), false, batch.neighbors, cache.trunk);
  const Eigen::MatrixXd& f = cache.trunk.back();
  const Eigen::Index nf = f.rows(), n = batch.self.cols();
  const auto slots = static_cast<Eigen::Index>(kNeighborSlots);
  Eigen::MatrixXd z(nf + static_cast<Eigen::Index>(kSelfDim), n);
  cache.pool_slot.resize(nf, n);
  for (Eigen::Index b = 0; b < n; ++b) {
    for (Eigen::Index r = 0; r < nf; ++r) {
      Eigen::Index best = 0;
      double value = f(r, b * slots);
      for (Eigen::Index j = 1; j < slots; ++j) {
        if (f(r, b * slots + j) > value) {
          value = f(r, b * slots + j);
          best = j;
        }
      }
      z(r, b) = value;
      cache.pool_slot(r, b) = static_cast<int>(best);
    }
  }
  z.bottomRows(static_cast<Eigen::Index>(kSelfDim)) = batch.self;
  cache.body.assign(1, std::move(z));
}

PolicyOutput Network::policy(const Eigen::VectorXd& params, const ObservationBatch& batch,
                             ForwardCache* cache) const {
  ForwardCache local;
  ForwardCache& c = cache ? *cache : local;
  trunk_and_pool(params, batch, c);
  Eigen::MatrixXd z = c.body.front();
  run_stack(params, layout_.block(Block::kActorBody), true, std::move(z), c.body);
  run_stack(params, layout_.block(Block::kHeadLane), false, c.body.back(), c.head_lane);
  run_stack(params, layout_.block(Block::kHeadAccel), false, c.body.back(), c.head_accel);
  c.has_critics = false;
  PolicyOutput out;
  out.lane_logits = c.head_lane.back();
  out.accel_logits = c.head_accel.back();
  out.lane = softmax_columns(out.lane_logits);
  out.accel = softmax_columns(out.accel_logits);
  return out;
}

NetworkOutput Network::forward(const Eigen::VectorXd& params, const ObservationBatch& batch,
                               ForwardCache* cache) const {
  if (static_cast<std::size_t>(params.size()) != layout_.total_size()) {
    throw std::invalid_argument("forward needs the full parameter vector");
  }
  ForwardCache local;
  ForwardCache& c = cache ? *cache : local;
  NetworkOutput out;
  out.policy = policy(params, batch, &c);
  const Eigen::MatrixXd& z = c.body.front();
  run_stack(params, layout_.block(Block::kCritic1), false, z, c.critic1);
  run_stack(params, layout_.block(Block::kCritic2), false, z, c.critic2);
  c.has_critics = true;
  out.v1 = c.critic1.back().row(0);
  out.v2 = c.critic2.back().row(0);
  return out;
}

void Network::backward(const Eigen::VectorXd& params, const ForwardCache& cache,
                       const OutputGradient& dout, Eigen::VectorXd& grad) const {
  if (static_cast<std::size_t>(grad.size()) != layout_.total_size()) {
    throw std::invalid_argument("gradient vector has the wrong size");
  }
  const Eigen::Index n = cache.body.front().cols();
  Eigen::MatrixXd dz = Eigen::MatrixXd::Zero(cache.body.front().rows(), n);

  const bool actor = dout.lane_logits.size() > 0 || dout.accel_logits.size() > 0;
  if (actor) {
    Eigen::MatrixXd dbody = Eigen::MatrixXd::Zero(cache.body.back().rows(), n);
    if (dout.lane_logits.size() > 0) {
      dbody += stack_backward(params, layout_.block(Block::kHeadLane), false, cache.head_lane,
                              dout.lane_logits, grad, true);
    }
    if (dout.accel_logits.size() > 0) {
      dbody += stack_backward(params, layout_.block(Block::kHeadAccel), false, cache.head_accel,
                              dout.accel_logits, grad, true);
    }
    dz += stack_backward(params, layout_.block(Block::kActorBody), true, cache.body, dbody,
                         grad, true);
  }
  if (dout.v1.size() > 0 || dout.v2.size() > 0) {
    if (!cache.has_critics) throw std::logic_error("critic gradient without critic forward");
    if (dout.v1.size() > 0) {
      dz += stack_backward(params, layout_.block(Block::kCritic1), false, cache.critic1,
                           Eigen::MatrixXd(dout.v1), grad, true);
    }
    if (dout.v2.size() > 0) {
      dz += stack_backward(params, layout_.block(Block::kCritic2), false, cache.critic2,
                           Eigen::MatrixXd(dout.v2), grad, true);
    }
  }

  const Eigen::Index nf = cache.pool_slot.rows();
  const auto slots = static_cast<Eigen::Index>(kNeighborSlots);
  Eigen::MatrixXd df = Eigen::MatrixXd::Zero(nf, n * slots);
  for (Eigen::Index b = 0; b < n; ++b) {
    for (Eigen::Index r = 0; r < nf; ++r) df(r, b * slots + cache.pool_slot(r, b)) = dz(r, b);
  }
  stack_backward(params, layout_.block(Block::kTrunk), false, cache.trunk, std::move(df), grad,
                 false);
}

Eigen::VectorXd initialize_parameters(const NetworkLayout& layout, std::mt19937_64& rng) {
  Eigen::VectorXd p = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(layout.total_size()));
  for (Block b : kBlocks) {
    for (const LayerSlice& l : layout.block(b)) {
      const double bound = std::sqrt(1.0 / static_cast<double>(l.in));
      for (std::size_t i = 0; i < l.out * l.in; ++i) {
        p[static_cast<Eigen::Index>(l.offset + i)] = bound * (2.0 * uniform01(rng) - 1.0);
      }
    }
  }
  return p;
}

std::vector<std::uint8_t> activation_pattern(const ForwardCache& cache) {
  std::vector<std::uint8_t> out;
  auto add = [&](const std::vector<Eigen::MatrixXd>& acts, std::size_t relu_layers) {
    for (std::size_t i = 1; i <= relu_layers && i < acts.size(); ++i) {
      const Eigen::MatrixXd& a = acts[i];
      for (Eigen::Index k = 0; k < a.size(); ++k) out.push_back(a.data()[k] > 0.0 ? 1 : 0);
    }
  };
  add(cache.trunk, 3);
  for (Eigen::Index k = 0; k < cache.pool_slot.size(); ++k) {
    out.push_back(static_cast<std::uint8_t>(cache.pool_slot.data()[k]));
  }
  add(cache.body, 3);
  add(cache.head_lane, 1);
  add(cache.head_accel, 1);
  if (cache.has_critics) {
    add(cache.critic1, 3);
    add(cache.critic2, 3);
  }
  return out;
}

HeadProbs head_column(const Eigen::MatrixXd& probs, std::size_t column) {
  const auto c = static_cast<Eigen::Index>(column);
  return {probs(0, c), probs(1, c), probs(2, c)};
}

SampledAction sample_action(const HeadProbs& lane, const HeadProbs& accel,
                            std::mt19937_64& rng) {
  const std::size_t l = pick(lane, uniform01(rng));
  const std::size_t a = pick(accel, uniform01(rng));
  SampledAction s;
  s.action.lane = static_cast<LaneAction>(l);
  s.action.accel = static_cast<AccelAction>(a);
  s.log_prob = std::log(lane[l]) + std::log(accel[a]);
  return s;
}

ActionPair greedy_action(const HeadProbs& lane, const HeadProbs& accel) {
  ActionPair a;
  a.lane = static_cast<LaneAction>(argmax(lane));
  a.accel = static_cast<AccelAction>(argmax(accel));
  return a;
}

double action_log_prob(const HeadProbs& lane, const HeadProbs& accel, const ActionPair& a) {
  return std::log(lane[static_cast<std::size_t>(a.lane)]) +
         std::log(accel[static_cast<std::size_t>(a.accel)]);
}

void polyak_update(Eigen::VectorXd& target, const Eigen::VectorXd& online, double tau) {
  if (online.size() < target.size()) {
    throw std::invalid_argument("polyak update: online vector shorter than target");
  }
  if (!(tau >= 0.0 && tau <= 1.0)) throw std::invalid_argument("polyak tau outside [0, 1]");
  target = tau * target + (1.0 - tau) * online.head(target.size());
}

Checkpoint make_checkpoint(const NetworkShape& shape, std::uint64_t seed) {
  const NetworkLayout layout(shape);
  std::mt19937_64 rng(seed);
  Checkpoint c;
  c.shape = shape;
  c.online = initialize_parameters(layout, rng);
  c.target = c.online.head(static_cast<Eigen::Index>(layout.actor_size()));
  return c;
}

namespace {

void write_tensor_set(std::ostream& os, const char* name, const NetworkLayout& layout,
                      const Eigen::VectorXd& p, std::size_t blocks) {
  os << name << ' ' << p.size() << '\n';
  char buf[40];
  for (std::size_t bi = 0; bi < blocks; ++bi) {
    const Block b = kBlocks[bi];
    const auto& layers = layout.block(b);
    for (std::size_t li = 0; li < layers.size(); ++li) {
      const LayerSlice& l = layers[li];
      os << "layer " << block_name(b) << ' ' << li << ' ' << l.out << ' ' << l.in << '\n';
      for (std::size_t k = 0; k < l.size(); ++k) {
        std::snprintf(buf, sizeof buf, "%a", p[static_cast<Eigen::Index>(l.offset + k)]);
        os << buf << (((k + 1) % 8 == 0 || k + 1 == l.size()) ? '\n' : ' ');
      }
    }
  }
}

class TokenReader {
 public:
  explicit TokenReader(std::istream& is) {
    std::string line;
    while (std::getline(is, line)) {
      if (!line.empty() && line[0] == '#') {
        comments.push_back(line.substr(1));
        continue;
      }
      std::istringstream ls(line);
      std::string tok;
      while (ls >> tok) tokens_.push_back(tok);
    }
  }
  std::string next() {
    if (pos_ >= tokens_.size()) throw CheckpointError("checkpoint truncated");
    return tokens_[pos_++];
  }
  void expect(const std::string& word) {
    const std::string got = next();
    if (got != word) throw CheckpointError("checkpoint: expected '" + word + "', got '" + got + "'");
  }
  std::size_t number() {
    const std::string t = next();
    char* end = nullptr;
    const unsigned long long v = std::strtoull(t.c_str(), &end, 10);
    if (end == t.c_str() || *end != '\0') throw CheckpointError("checkpoint: bad integer " + t);
    return static_cast<std::size_t>(v);
  }
  double real() {
    const std::string t = next();
    char* end = nullptr;
    const double v = std::strtod(t.c_str(), &end);
    if (end == t.c_str() || *end != '\0') throw CheckpointError("checkpoint: bad value " + t);
    return v;
  }
  bool done() const { return pos_ >= tokens_.size(); }

  std::vector<std::string> comments;

 private:
  std::vector<std::string> tokens_;
  std::size_t pos_ = 0;
};

Eigen::VectorXd read_tensor_set(TokenReader& r, const char* name, const NetworkLayout& layout,
                                std::size_t blocks, std::size_t expected_size) {
  r.expect(name);
  const std::size_t n = r.number();
  if (n != expected_size) {
    throw CheckpointError(std::string("checkpoint: ") + name + " holds " + std::to_string(n) +
                          " values, layout needs " + std::to_string(expected_size));
  }
  Eigen::VectorXd p(static_cast<Eigen::Index>(n));
  for (std::size_t bi = 0; bi < blocks; ++bi) {
    const Block b = kBlocks[bi];
    const auto& layers = layout.block(b);
    for (std::size_t li = 0; li < layers.size(); ++li) {
      const LayerSlice& l = layers[li];
      r.expect("layer");
      r.expect(block_name(b));
      const std::size_t idx = r.number(), out = r.number(), in = r.number();
      if (idx != li || out != l.out || in != l.in) {
        throw CheckpointError(std::string("checkpoint: ") + block_name(b) + " layer " +
                              std::to_string(li) + " is " + std::to_string(out) + "x" +
                              std::to_string(in) + ", expected " + std::to_string(l.out) +
                              "x" + std::to_string(l.in));
      }
      for (std::size_t k = 0; k < l.size(); ++k) {
        p[static_cast<Eigen::Index>(l.offset + k)] = r.real();
      }
    }
  }
  if (!p.allFinite()) throw CheckpointError("checkpoint holds non-finite values");
  return p;
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& c) {
  const NetworkLayout layout(c.shape);
  if (static_cast<std::size_t>(c.online.size()) != layout.total_size() ||
      static_cast<std::size_t>(c.target.size()) != layout.actor_size()) {
    throw CheckpointError("checkpoint tensors do not match their shape");
  }
  std::ofstream os(path);
  if (!os) throw CheckpointError("cannot write checkpoint " + path);
  for (const std::string& line : c.provenance) os << '#' << line << '\n';
  os << "mixedlane-checkpoint 1\n";
  os << "shape " << c.shape.hidden << ' ' << c.shape.features << '\n';
  write_tensor_set(os, "online", layout, c.online, kBlockCount);
  write_tensor_set(os, "target", layout, c.target, 4);
  os << "end\n";
  if (!os) throw CheckpointError("failed writing checkpoint " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw CheckpointError("cannot open checkpoint " + path);
  TokenReader r(is);
  r.expect("mixedlane-checkpoint");
  if (r.number() != 1) throw CheckpointError("unsupported checkpoint version");
  r.expect("shape");
  Checkpoint c;
  c.shape.hidden = r.number();
  c.shape.features = r.number();
  try {
    c.shape.validate();
  } catch (const std::invalid_argument& e) {
    throw CheckpointError(std::string("checkpoint: ") + e.what());
  }
  const NetworkLayout layout(c.shape);
  c.online = read_tensor_set(r, "online", layout, kBlockCount, layout.total_size());
  c.target = read_tensor_set(r, "target", layout, 4, layout.actor_size());
  r.expect("end");
  if (!r.done()) throw CheckpointError("trailing data in checkpoint");
  c.provenance = r.comments;
  return c;
}

Checkpoint load_checkpoint(const std::string& path, const NetworkShape& expected) {
  Checkpoint c = load_checkpoint(path);
  if (!(c.shape == expected)) {
    throw CheckpointError("checkpoint shape " + std::to_string(c.shape.hidden) + "/" +
                          std::to_string(c.shape.features) + " differs from configured " +
                          std::to_string(expected.hidden) + "/" +
                          std::to_string(expected.features));
  }
  return c;
}

}  // namespace mixedlane
