#ifndef MIXEDLANE_TESTS_SERIAL_TRAINER_H_
#define MIXEDLANE_TESTS_SERIAL_TRAINER_H_

// Single-threaded reference of asynchronous pre-training with one worker.
// The per-step maths (network, losses, optimiser) comes from the library; the
// orchestration (stepping, resets, segmentation, frame budget, update order)
// is written out here without the batch environment or any threads.

#include <memory>

#include "mixedlane/train.h"

namespace oracle {

mixedlane::TrainResult serial_train(const mixedlane::TrainConfig& config,
                                    std::shared_ptr<const mixedlane::TrackSpec> track,
                                    const mixedlane::EnvConfig& env_config,
                                    const mixedlane::Network& net, Eigen::VectorXd online,
                                    Eigen::VectorXd target);

}  // namespace oracle

#endif  // MIXEDLANE_TESTS_SERIAL_TRAINER_H_
