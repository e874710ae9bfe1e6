#ifndef MIXEDLANE_PLOT_H_
#define MIXEDLANE_PLOT_H_

#include <cstdint>
#include <istream>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mixedlane/env.h"

namespace mixedlane {

struct TraceRow {
  std::uint64_t tick = 0;
  double time_s = 0.0;
  std::uint32_t vehicle_id = 0;
  Role role = Role::kBackground;
  std::size_t lane = 0;
  double station_m = 0.0;  // reference-lane arc position in [0, lap)
  double speed_mps = 0.0;
  double x = 0.0;
  double y = 0.0;
  bool collision = false;  // this vehicle is in a contact that started at this tick with the agent
  bool operator==(const TraceRow&) const = default;
};

class TraceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// One row per vehicle for the env's current tick. `step` is the result that
// produced this tick, or null for the initial state.
void append_trace(const Env& env, const StepResult* step, std::vector<TraceRow>& out);

const char* role_name(Role role);
Role parse_role(const std::string& name);

void write_trace_csv(std::ostream& os, std::span<const TraceRow> rows, double lap_length_m,
                     std::span<const std::string> header_comments = {});
struct Trace {
  std::vector<TraceRow> rows;
  double lap_length_m = 0.0;
};
// Accepts what write_trace_csv emits; '#' lines are comments except the
// "# lap_length_m=" line.
Trace read_trace_csv(std::istream& is);

struct PlotCounts {
  std::size_t vehicles = 0;
  std::size_t obstacles = 0;
  std::size_t collisions = 0;
};

// Space-time diagram: station (y, wrapped per lap) against time (x). Each
// moving vehicle is a <g class="vehicle"> of speed-coloured segments, broken
// where it wraps past the lap end; the agent is drawn thicker. Obstacles are
// <line class="obstacle">, collisions <circle class="collision">.
PlotCounts write_space_time_svg(std::ostream& os, const Trace& trace, double max_speed_mps,
                                std::span<const std::string> header_comments = {});

}  // namespace mixedlane

#endif  // MIXEDLANE_PLOT_H_
