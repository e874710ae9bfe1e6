#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "mixedlane/bridge.h"
#include "mixedlane/config.h"
#include "mixedlane/evaluation.h"
#include "mixedlane/metrics.h"
#include "mixedlane/net.h"
#include "mixedlane/plot.h"
#include "mixedlane/train.h"

namespace ml = mixedlane;

namespace {

constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;
constexpr int kExitBridge = 3;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::uint64_t> frames;
  std::string out;
  std::string plant = "inprocess";
};

ml::RunConfig load(const Common& c) {
  ml::RunConfig config = c.config_path.empty() ? ml::default_config()
                                               : ml::load_config(c.config_path);
  if (!c.out.empty()) config.output_directory = c.out;
  return config;
}

std::filesystem::path out_path(const ml::RunConfig& config, const std::string& name) {
  std::filesystem::create_directories(config.output_directory);
  return std::filesystem::path(config.output_directory) / name;
}

std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream os(p);
  if (!os) throw std::runtime_error("cannot write " + p.string());
  return os;
}

void write_metrics(const ml::RunConfig& config, const std::string& name,
                   const ml::TrainResult& result) {
  const auto rows =
      ml::metrics_rows(result.frames, config.train.metrics_window, config.env.dt);
  auto os = open_out(out_path(config, name));
  const auto header = ml::provenance_lines(config);
  ml::write_metrics_csv(os, rows, header);
}

ml::Endpoint parse_endpoint(const std::string& spec, const ml::RunConfig& config) {
  if (spec == "loopback") return {"127.0.0.1", config.bridge.port};
  const auto colon = spec.rfind(':');
  if (colon == std::string::npos) return {spec, config.bridge.port};
  const std::string port = spec.substr(colon + 1);
  char* end = nullptr;
  const unsigned long p = std::strtoul(port.c_str(), &end, 10);
  if (port.empty() || *end != '\0' || p == 0 || p > 65535) {
    throw UsageError("bad plant address '" + spec + "'");
  }
  return {spec.substr(0, colon), static_cast<std::uint16_t>(p)};
}

ml::PlantFactory plant_factory(const std::string& spec, const ml::RunConfig& config) {
  if (spec == "inprocess") {
    return [plant = config.plant] { return std::make_unique<ml::InProcessPlantLink>(plant); };
  }
  ml::UdpLinkConfig link;
  link.plant = parse_endpoint(spec, config);
  link.reply_timeout_ms = config.bridge.reply_timeout_ms;
  link.reset_timeout_ms = config.bridge.reset_timeout_ms;
  link.reset_attempts = config.bridge.reset_attempts;
  return [link] { return std::make_unique<ml::UdpPlantLink>(link); };
}

ml::Checkpoint read_checkpoint(const std::string& path, const ml::RunConfig& config) {
  return ml::load_checkpoint(path, config.network);
}

int cmd_pretrain(const Common& c, const std::string& init) {
  ml::RunConfig config = load(c);
  if (c.seed) config.train.seed = *c.seed;
  if (c.frames) config.train.total_frames = *c.frames;
  const ml::Network net(config.network);
  ml::Checkpoint ckpt = init.empty() ? ml::make_checkpoint(config.network, config.train.seed)
                                     : read_checkpoint(init, config);
  const auto track = ml::make_track(config.track);
  ml::TrainResult result = ml::run_pretraining(config.train, track, config.env, net, ckpt.online,
                                               ckpt.target, &std::cerr);
  ckpt.online = result.online;
  ckpt.target = result.target;
  ckpt.provenance = ml::provenance_lines(config);
  ml::save_checkpoint(out_path(config, "pretrain.ckpt").string(), ckpt);
  write_metrics(config, "pretrain_metrics.csv", result);
  std::fprintf(stderr, "pretrain: %llu frames, %llu updates (%llu skipped), %.1f s\n",
               static_cast<unsigned long long>(result.frames.size()),
               static_cast<unsigned long long>(result.updates),
               static_cast<unsigned long long>(result.skipped_updates), result.seconds);
  return result.worker_errors == 0 ? 0 : kExitFailure;
}

int cmd_adapt(const Common& c, const std::string& checkpoint) {
  ml::RunConfig config = load(c);
  if (c.seed) config.train.seed = *c.seed;
  if (c.frames) config.train.total_frames = *c.frames;
  const ml::Network net(config.network);
  ml::Checkpoint ckpt = read_checkpoint(checkpoint, config);
  const auto track = ml::make_track(config.track);
  const ml::PlantFactory factory = plant_factory(c.plant, config);

  ml::EnvConfig env_config = config.env;
  env_config.agent_role = ml::Role::kBridgedPlant;
  ml::Env env(track, env_config, ml::adaptation_env_seed(config.train.seed));
  const auto link = factory();
  env.attach_plant(link.get());
  ml::TrainResult result =
      ml::run_adaptation(config.train, env, net, ckpt.online, ckpt.target, &std::cerr);
  ckpt.online = result.online;
  ckpt.target = result.target;
  ckpt.provenance = ml::provenance_lines(config);
  ml::save_checkpoint(out_path(config, "adapted.ckpt").string(), ckpt);
  write_metrics(config, "adapt_metrics.csv", result);

  // Greedy rollout of the adapted policy against the same plant.
  ml::EvalOptions options{1, config.eval.duration_s, config.eval.seed};
  std::vector<ml::TraceRow> trace;
  ml::evaluate_policy(track, config.env, net, ckpt.online, options, factory, &trace);
  auto os = open_out(out_path(config, "adapt_trace.csv"));
  const auto header = ml::provenance_lines(config);
  ml::write_trace_csv(os, trace, track->lane(track->reference_lane()).total_length(), header);
  std::fprintf(stderr, "adapt: %llu frames, %llu updates, %llu bridge timeouts, %.1f s\n",
               static_cast<unsigned long long>(result.frames.size()),
               static_cast<unsigned long long>(result.updates),
               static_cast<unsigned long long>(result.bridge_timeouts), result.seconds);
  return 0;
}

int cmd_eval(const Common& c, const std::string& before, const std::string& after,
             std::optional<std::size_t> scenarios) {
  ml::RunConfig config = load(c);
  if (c.seed) config.eval.seed = *c.seed;
  if (scenarios) config.eval.scenarios = *scenarios;
  const ml::Network net(config.network);
  const ml::Checkpoint b = read_checkpoint(before, config);
  const ml::Checkpoint a = read_checkpoint(after.empty() ? before : after, config);
  const auto track = ml::make_track(config.track);
  const ml::PlantFactory factory =
      c.plant == "none" ? ml::PlantFactory{} : plant_factory(c.plant, config);
  const ml::EvalOptions options{config.eval.scenarios, config.eval.duration_s, config.eval.seed};
  std::vector<ml::TraceRow> trace;
  auto rb = ml::evaluate_policy(track, config.env, net, b.online, options, factory);
  auto ra = ml::evaluate_policy(track, config.env, net, a.online, options, factory, &trace);
  const ml::EvalReport report = ml::make_report(std::move(rb), std::move(ra));
  const auto header = ml::provenance_lines(config);
  {
    auto os = open_out(out_path(config, "eval.csv"));
    ml::write_eval_csv(os, report, header);
  }
  if (!trace.empty()) {
    auto os = open_out(out_path(config, "eval_trace.csv"));
    ml::write_trace_csv(os, trace, track->lane(track->reference_lane()).total_length(), header);
  }
  std::printf("median collisions before %g after %g (sign test p=%.4g)\n",
              report.median_collisions_before, report.median_collisions_after,
              report.fewer_collisions.p_value);
  std::printf("median reward before %g after %g (sign test p=%.4g)\n",
              report.median_reward_before, report.median_reward_after,
              report.more_reward.p_value);
  return 0;
}

int cmd_plot(const Common& c, const std::string& trace_path, const std::string& svg_path) {
  ml::RunConfig config = load(c);
  std::ifstream is(trace_path);
  if (!is) throw ml::TraceError("cannot open trace " + trace_path);
  const ml::Trace trace = ml::read_trace_csv(is);
  const std::filesystem::path out =
      svg_path.empty() ? out_path(config, "space_time.svg") : std::filesystem::path(svg_path);
  auto os = open_out(out);
  const auto header = ml::provenance_lines(config);
  const ml::PlotCounts n = ml::write_space_time_svg(os, trace, config.env.max_speed, header);
  std::printf("%s: %zu vehicles, %zu obstacles, %zu collision markers\n", out.string().c_str(),
              n.vehicles, n.obstacles, n.collisions);
  return 0;
}

std::atomic<bool> g_stop{false};

int cmd_plant(const Common& c, std::optional<std::uint16_t> port) {
  ml::RunConfig config = load(c);
  ml::Endpoint bind_to{"0.0.0.0", port.value_or(config.bridge.port)};
  ml::PlantConfig plant = config.plant;
  if (c.seed) plant.noise_seed = *c.seed;
  ml::PlantServer server(plant, bind_to);
  std::signal(SIGINT, [](int) { g_stop = true; });
  std::signal(SIGTERM, [](int) { g_stop = true; });
  std::fprintf(stderr, "plant listening on udp port %u\n", server.port());
  server.serve(g_stop);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mixed-traffic lane driving: training, adaptation and evaluation"};
  app.require_subcommand(1);
  Common common;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config_path, "Configuration file");
    sub->add_option("--seed", common.seed, "Seed override");
    sub->add_option("--out", common.out, "Output directory");
  };

  auto* pretrain = app.add_subcommand("pretrain", "Asynchronous pre-training in simulation");
  add_common(pretrain);
  pretrain->add_option("--frames", common.frames, "Frame budget");
  std::string init;
  pretrain->add_option("--init", init, "Start from this checkpoint");

  auto* adapt = app.add_subcommand("adapt", "Training against a bridged plant");
  add_common(adapt);
  adapt->add_option("--frames", common.frames, "Frame budget");
  std::string checkpoint;
  adapt->add_option("--checkpoint", checkpoint, "Input checkpoint")->required();
  adapt->add_option("--plant", common.plant, "inprocess, loopback or host:port");

  auto* eval = app.add_subcommand("eval", "Greedy before/after evaluation");
  add_common(eval);
  std::string before, after;
  std::optional<std::size_t> scenarios;
  eval->add_option("--before", before, "Checkpoint before")->required();
  eval->add_option("--after", after, "Checkpoint after (defaults to --before)");
  eval->add_option("--scenarios", scenarios, "Scenario count");
  eval->add_option("--plant", common.plant, "none, inprocess, loopback or host:port");

  auto* plot = app.add_subcommand("plot", "Space-time SVG from a trace CSV");
  add_common(plot);
  std::string trace_path, svg_path;
  plot->add_option("--trace", trace_path, "Trace CSV")->required();
  plot->add_option("--svg", svg_path, "Output SVG (defaults to <out>/space_time.svg)");

  auto* plant = app.add_subcommand("plant", "Serve the emulated vehicle over UDP");
  add_common(plant);
  std::optional<std::uint16_t> port;
  plant->add_option("--port", port, "UDP port (defaults to [bridge] port)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*pretrain) return cmd_pretrain(common, init);
    if (*adapt) return cmd_adapt(common, checkpoint);
    if (*eval) return cmd_eval(common, before, after, scenarios);
    if (*plot) return cmd_plot(common, trace_path, svg_path);
    if (*plant) return cmd_plant(common, port);
  } catch (const ml::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const UsageError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return kExitConfig;
  } catch (const ml::BridgeTimeout& e) {
    std::fprintf(stderr, "bridge timeout: %s\n", e.what());
    return kExitBridge;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitFailure;
  }
  return kExitFailure;
}
