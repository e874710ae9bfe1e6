#include "mixedlane/metrics.h"

#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace mixedlane {

MetricsWindow::MetricsWindow(std::size_t window, double frame_dt)
    : window_(window), frame_dt_(frame_dt) {
  if (window == 0 || !(frame_dt > 0.0)) {
    throw std::invalid_argument("metrics window needs frames > 0 and dt > 0");
  }
}

WindowStats MetricsWindow::push(double reward, bool collision) {
  frames_.push_back({reward, collision});
  reward_sum_ += reward;
  collisions_ += collision ? 1 : 0;
  if (frames_.size() > window_) {
    reward_sum_ -= frames_.front().reward;
    collisions_ -= frames_.front().collision ? 1 : 0;
    frames_.pop_front();
  }
  // Re-summing keeps the mean free of drift from long add/subtract chains.
  if (frames_.size() == window_ && (++resum_counter_ % window_) == 0) {
    reward_sum_ = 0.0;
    for (const Frame& f : frames_) reward_sum_ += f.reward;
  }
  return stats();
}

WindowStats MetricsWindow::stats() const {
  if (frames_.empty()) return {};
  const auto n = static_cast<double>(frames_.size());
  return {60.0 * static_cast<double>(collisions_) / (n * frame_dt_), reward_sum_ / n};
}

std::vector<MetricsRow> metrics_rows(std::span<const FrameRecord> frames, std::size_t window,
                                     double frame_dt) {
  MetricsWindow w(window, frame_dt);
  std::vector<MetricsRow> rows;
  rows.reserve(frames.size());
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const WindowStats s = w.push(frames[i].reward, frames[i].collision);
    rows.push_back({i + 1, frames[i].reward, frames[i].collision, s.collisions_per_minute,
                    s.mean_reward});
  }
  return rows;
}

void write_metrics_csv(std::ostream& os, std::span<const MetricsRow> rows,
                       std::span<const std::string> header_comments) {
  for (const std::string& c : header_comments) os << '#' << c << '\n';
  os << "frame,reward,collision,window_cpm,window_reward\n";
  char buf[160];
  for (const MetricsRow& r : rows) {
    std::snprintf(buf, sizeof buf, "%llu,%.17g,%d,%.17g,%.17g\n",
                  static_cast<unsigned long long>(r.frame), r.reward, r.collision ? 1 : 0,
                  r.window_cpm, r.window_reward);
    os << buf;
  }
}

double pearson(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2) {
    throw std::invalid_argument("pearson needs two equal series of length >= 2");
  }
  const auto n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

}  // namespace mixedlane
