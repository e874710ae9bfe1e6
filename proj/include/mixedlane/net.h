#ifndef MIXEDLANE_NET_H_
#define MIXEDLANE_NET_H_

#include <Eigen/Dense>

#include <array>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mixedlane/env.h"

namespace mixedlane {

struct NetworkShape {
  std::size_t hidden = 64;   // n_h
  std::size_t features = 8;  // n_f

  void validate() const;
  bool operator==(const NetworkShape&) const = default;
};

// One affine layer inside the flat parameter vector: an out x in column-major
// weight matrix followed by the bias.
struct LayerSlice {
  std::size_t in = 0;
  std::size_t out = 0;
  std::size_t offset = 0;
  std::size_t size() const { return out * in + out; }
};

enum class Block : std::size_t {
  kTrunk = 0,
  kActorBody,
  kHeadLane,
  kHeadAccel,
  kCritic1,
  kCritic2,
};
inline constexpr std::size_t kBlockCount = 6;
const char* block_name(Block b);

// Parameter layout. The actor blocks (trunk, body, both heads) form a prefix
// of the vector; the target copy stores exactly that prefix.
class NetworkLayout {
 public:
  explicit NetworkLayout(NetworkShape shape);

  const NetworkShape& shape() const { return shape_; }
  std::size_t total_size() const { return total_; }
  std::size_t actor_size() const { return actor_; }
  const std::vector<LayerSlice>& block(Block b) const {
    return blocks_[static_cast<std::size_t>(b)];
  }

 private:
  NetworkShape shape_;
  std::array<std::vector<LayerSlice>, kBlockCount> blocks_;
  std::size_t total_ = 0;
  std::size_t actor_ = 0;
};

// Column b of `self` is o_s of sample b; columns 6b..6b+5 of `neighbors` are
// its neighbour vectors.
struct ObservationBatch {
  Eigen::MatrixXd self;
  Eigen::MatrixXd neighbors;
  std::size_t size() const { return static_cast<std::size_t>(self.cols()); }
};

ObservationBatch encode(std::span<const Observation> observations);

struct PolicyOutput {
  Eigen::MatrixXd lane_logits;  // 3 x B
  Eigen::MatrixXd accel_logits;
  Eigen::MatrixXd lane;         // soft-max of the logits
  Eigen::MatrixXd accel;
};

struct NetworkOutput {
  PolicyOutput policy;
  Eigen::RowVectorXd v1;
  Eigen::RowVectorXd v2;
};

// Activations kept by forward for the backward pass.
struct ForwardCache {
  std::vector<Eigen::MatrixXd> trunk;  // input, then each layer's output
  Eigen::MatrixXi pool_slot;           // n_f x B winning neighbour slot
  std::vector<Eigen::MatrixXd> body;   // input is the pooled+self vector
  std::vector<Eigen::MatrixXd> head_lane;
  std::vector<Eigen::MatrixXd> head_accel;
  std::vector<Eigen::MatrixXd> critic1;
  std::vector<Eigen::MatrixXd> critic2;
  bool has_critics = false;
};

// Loss sensitivities with respect to the network outputs. Empty members are
// treated as zero.
struct OutputGradient {
  Eigen::MatrixXd lane_logits;
  Eigen::MatrixXd accel_logits;
  Eigen::RowVectorXd v1;
  Eigen::RowVectorXd v2;
};

class Network {
 public:
  explicit Network(NetworkShape shape) : layout_(shape) {}

  const NetworkLayout& layout() const { return layout_; }

  // `params` may hold just the actor prefix (e.g. the target copy).
  PolicyOutput policy(const Eigen::VectorXd& params, const ObservationBatch& batch,
                      ForwardCache* cache = nullptr) const;
  NetworkOutput forward(const Eigen::VectorXd& params, const ObservationBatch& batch,
                        ForwardCache* cache = nullptr) const;

  // Accumulates d(loss)/d(params) into `grad` (full-size vector).
  void backward(const Eigen::VectorXd& params, const ForwardCache& cache,
                const OutputGradient& dout, Eigen::VectorXd& grad) const;

 private:
  void trunk_and_pool(const Eigen::VectorXd& params, const ObservationBatch& batch,
                      ForwardCache& cache) const;

  NetworkLayout layout_;
};

// Uniform in +-sqrt(1/fan_in), zero biases.
Eigen::VectorXd initialize_parameters(const NetworkLayout& layout, std::mt19937_64& rng);

// Which ReLUs are active and which slot wins each pooled feature. Two
// parameter vectors with equal patterns lie on the same smooth piece.
std::vector<std::uint8_t> activation_pattern(const ForwardCache& cache);

struct SampledAction {
  ActionPair action;
  double log_prob = 0.0;
};

using HeadProbs = std::array<double, 3>;

HeadProbs head_column(const Eigen::MatrixXd& probs, std::size_t column);

// Lane head first, then acceleration head; inverse CDF on 53-bit uniforms.
SampledAction sample_action(const HeadProbs& lane, const HeadProbs& accel,
                            std::mt19937_64& rng);
ActionPair greedy_action(const HeadProbs& lane, const HeadProbs& accel);
double action_log_prob(const HeadProbs& lane, const HeadProbs& accel, const ActionPair& a);

// target <- tau * target + (1 - tau) * online over the target's length.
void polyak_update(Eigen::VectorXd& target, const Eigen::VectorXd& online, double tau);

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Checkpoint {
  NetworkShape shape;
  Eigen::VectorXd online;
  Eigen::VectorXd target;
  std::vector<std::string> provenance;  // free-form header lines
};

Checkpoint make_checkpoint(const NetworkShape& shape, std::uint64_t seed);
void save_checkpoint(const std::string& path, const Checkpoint& checkpoint);
// Throws CheckpointError on malformed files or tensors whose shapes disagree
// with the header.
Checkpoint load_checkpoint(const std::string& path);
Checkpoint load_checkpoint(const std::string& path, const NetworkShape& expected);

}  // namespace mixedlane

#endif  // MIXEDLANE_NET_H_
