#ifndef MIXEDLANE_METRICS_H_
#define MIXEDLANE_METRICS_H_

#include <cstddef>
#include <cstdint>
#include <deque>
#include <ostream>
#include <span>
#include <string>
#include <vector>

namespace mixedlane {

struct WindowStats {
  double collisions_per_minute = 0.0;
  double mean_reward = 0.0;
};

// Sliding window over the most recent frames.
class MetricsWindow {
 public:
  explicit MetricsWindow(std::size_t window = 8000, double frame_dt = 0.02);

  WindowStats push(double reward, bool collision);
  WindowStats stats() const;
  std::size_t size() const { return frames_.size(); }

 private:
  struct Frame {
    double reward;
    bool collision;
  };
  std::size_t window_;
  double frame_dt_;
  std::deque<Frame> frames_;
  double reward_sum_ = 0.0;
  std::size_t collisions_ = 0;
  std::size_t resum_counter_ = 0;
};

struct MetricsRow {
  std::uint64_t frame = 0;
  double reward = 0.0;
  bool collision = false;
  double window_cpm = 0.0;
  double window_reward = 0.0;
  bool operator==(const MetricsRow&) const = default;
};

struct FrameRecord {
  double reward = 0.0;
  bool collision = false;
  bool operator==(const FrameRecord&) const = default;
};

// Rows for a stream of frames, numbered from 1.
std::vector<MetricsRow> metrics_rows(std::span<const FrameRecord> frames,
                                     std::size_t window = 8000, double frame_dt = 0.02);

void write_metrics_csv(std::ostream& os, std::span<const MetricsRow> rows,
                       std::span<const std::string> header_comments = {});

double pearson(std::span<const double> a, std::span<const double> b);

}  // namespace mixedlane

#endif  // MIXEDLANE_METRICS_H_
