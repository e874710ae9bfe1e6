#ifndef MIXEDLANE_CONFIG_H_
#define MIXEDLANE_CONFIG_H_

#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "mixedlane/bridge.h"
#include "mixedlane/env.h"
#include "mixedlane/net.h"
#include "mixedlane/track.h"
#include "mixedlane/train.h"

namespace mixedlane {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrackConfig {
  std::string shape = "rounded_rect";  // or "bezier" with explicit spine segments
  double width_m = 5.56;
  double height_m = 3.5;
  double corner_radius_m = 1.0;
  std::size_t lanes = 3;
  double lane_width_m = 0.30;
  double arc_resolution_m = 0.005;
  std::vector<BezierSegment> spine;
};

struct BridgeConfig {
  std::string host = "127.0.0.1";
  std::uint16_t port = 47800;
  int reply_timeout_ms = 50;
  int reset_timeout_ms = 200;
  int reset_attempts = 5;
};

struct EvalConfig {
  std::size_t scenarios = 20;
  double duration_s = 120.0;
  std::uint64_t seed = 1000;
};

struct RunConfig {
  TrackConfig track;
  EnvConfig env;
  NetworkShape network;
  TrainConfig train;
  PlantConfig plant = PlantConfig::deepracer_like();
  BridgeConfig bridge;
  EvalConfig eval;
  std::string output_directory = "out";

  // Copies shared quantities (geometry, lane width, dt, limits) into the
  // module configs that need them.
  void sync();
  // Runs every module's validation, including building the track.
  void validate() const;
};

RunConfig default_config();

// Parses the sectioned key = value format. Errors name the source and line.
RunConfig parse_config(const std::string& text, const std::string& source = "<config>");
RunConfig load_config(const std::string& path);
std::string dump_config(const RunConfig& config);

std::shared_ptr<const TrackSpec> make_track(const TrackConfig& config);

std::uint64_t fnv1a64(const std::string& text);
extern const char* const kCodeVersion;
// "# mixedlane <version> config-fnv1a <hash>" header lines for artifacts. The
// hash covers everything except the output directory.
std::vector<std::string> provenance_lines(const RunConfig& config);

}  // namespace mixedlane

#endif  // MIXEDLANE_CONFIG_H_
