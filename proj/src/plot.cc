#include "mixedlane/plot.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

namespace mixedlane {

void append_trace(const Env& env, const StepResult* step, std::vector<TraceRow>& out) {
  const double lap = env.track().lane(env.track().reference_lane()).total_length();
  const auto& vehicles = env.vehicles();
  const std::uint32_t agent_id = vehicles[env.agent_index()].id;
  for (const Vehicle& v : vehicles) {
    TraceRow r;
    r.tick = env.tick();
    r.time_s = env.time();
    r.vehicle_id = v.id;
    r.role = v.state.role;
    r.lane = v.state.lane;
    r.station_m = std::fmod(std::fmod(v.station, lap) + lap, lap);
    r.speed_mps = v.state.speed;
    r.x = v.state.x;
    r.y = v.state.y;
    if (step && step->collision) {
      r.collision = v.id == agent_id ||
                    std::find(step->agent_contacts.begin(), step->agent_contacts.end(), v.id) !=
                        step->agent_contacts.end();
    }
    out.push_back(r);
  }
}

const char* role_name(Role role) {
  switch (role) {
    case Role::kAgent: return "agent";
    case Role::kBackground: return "background";
    case Role::kObstacle: return "obstacle";
    case Role::kBridgedPlant: return "bridged";
  }
  return "background";
}

Role parse_role(const std::string& name) {
  if (name == "agent") return Role::kAgent;
  if (name == "background") return Role::kBackground;
  if (name == "obstacle") return Role::kObstacle;
  if (name == "bridged") return Role::kBridgedPlant;
  throw TraceError("unknown role '" + name + "'");
}

namespace {

constexpr const char* kTraceHeader =
    "tick,time_s,vehicle_id,role,lane,station_m,speed_mps,x,y,collision";

double field_double(const std::string& s, std::size_t line) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || *end != '\0') {
    throw TraceError("line " + std::to_string(line) + ": bad number '" + s + "'");
  }
  return v;
}

unsigned long long field_uint(const std::string& s, std::size_t line) {
  char* end = nullptr;
  const unsigned long long v = std::strtoull(s.c_str(), &end, 10);
  if (s.empty() || s[0] == '-' || *end != '\0') {
    throw TraceError("line " + std::to_string(line) + ": bad integer '" + s + "'");
  }
  return v;
}

bool is_agent(Role r) { return r == Role::kAgent || r == Role::kBridgedPlant; }

// Piecewise-linear dark blue -> teal -> yellow.
std::string speed_colour(double speed, double max_speed) {
  static constexpr std::array<std::array<double, 3>, 3> kStops = {{
      {68, 1, 84},
      {33, 145, 140},
      {253, 231, 37},
  }};
  double f = max_speed > 0.0 ? std::clamp(speed / max_speed, 0.0, 1.0) : 0.0;
  f *= 2.0;
  const std::size_t i = std::min<std::size_t>(static_cast<std::size_t>(f), 1);
  const double t = f - static_cast<double>(i);
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x",
                static_cast<int>(std::lround(kStops[i][0] + t * (kStops[i + 1][0] - kStops[i][0]))),
                static_cast<int>(std::lround(kStops[i][1] + t * (kStops[i + 1][1] - kStops[i][1]))),
                static_cast<int>(std::lround(kStops[i][2] + t * (kStops[i + 1][2] - kStops[i][2]))));
  return buf;
}

}  // namespace

void write_trace_csv(std::ostream& os, std::span<const TraceRow> rows, double lap_length_m,
                     std::span<const std::string> header_comments) {
  for (const auto& line : header_comments) os << '#' << line << '\n';
  char buf[256];
  std::snprintf(buf, sizeof buf, "# lap_length_m=%.17g\n", lap_length_m);
  os << buf << kTraceHeader << '\n';
  for (const TraceRow& r : rows) {
    std::snprintf(buf, sizeof buf, "%llu,%.17g,%u,%s,%zu,%.17g,%.17g,%.17g,%.17g,%d\n",
                  static_cast<unsigned long long>(r.tick), r.time_s, r.vehicle_id,
                  role_name(r.role), r.lane, r.station_m, r.speed_mps, r.x, r.y,
                  r.collision ? 1 : 0);
    os << buf;
  }
}

Trace read_trace_csv(std::istream& is) {
  Trace trace;
  std::string line;
  std::size_t number = 0;
  bool header = false;
  while (std::getline(is, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      const std::string key = "# lap_length_m=";
      if (line.rfind(key, 0) == 0) trace.lap_length_m = field_double(line.substr(key.size()), number);
      continue;
    }
    if (!header) {
      if (line != kTraceHeader) throw TraceError("line " + std::to_string(number) + ": bad header");
      header = true;
      continue;
    }
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != 10) {
      throw TraceError("line " + std::to_string(number) + ": expected 10 fields");
    }
    TraceRow r;
    r.tick = field_uint(f[0], number);
    r.time_s = field_double(f[1], number);
    r.vehicle_id = static_cast<std::uint32_t>(field_uint(f[2], number));
    r.role = parse_role(f[3]);
    r.lane = field_uint(f[4], number);
    r.station_m = field_double(f[5], number);
    r.speed_mps = field_double(f[6], number);
    r.x = field_double(f[7], number);
    r.y = field_double(f[8], number);
    if (f[9] != "0" && f[9] != "1") {
      throw TraceError("line " + std::to_string(number) + ": collision must be 0 or 1");
    }
    r.collision = f[9] == "1";
    trace.rows.push_back(r);
  }
  if (!header) throw TraceError("trace has no header");
  if (!(trace.lap_length_m > 0.0)) throw TraceError("trace lacks a positive lap_length_m");
  return trace;
}

PlotCounts write_space_time_svg(std::ostream& os, const Trace& trace, double max_speed_mps,
                                std::span<const std::string> header_comments) {
  constexpr double kWidth = 1000.0, kHeight = 600.0, kMargin = 50.0;
  double t_max = 0.0;
  for (const auto& r : trace.rows) t_max = std::max(t_max, r.time_s);
  const double lap = trace.lap_length_m;
  const auto px = [&](double t) {
    return kMargin + (t_max > 0.0 ? t / t_max : 0.0) * (kWidth - 2 * kMargin);
  };
  const auto py = [&](double s) { return kHeight - kMargin - s / lap * (kHeight - 2 * kMargin); };

  std::map<std::uint32_t, std::vector<const TraceRow*>> by_vehicle;
  for (const auto& r : trace.rows) by_vehicle[r.vehicle_id].push_back(&r);

  char buf[256];
  os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  for (const auto& line : header_comments) os << "<!--" << line << " -->\n";
  std::snprintf(buf, sizeof buf,
                "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%.0f\" height=\"%.0f\" "
                "viewBox=\"0 0 %.0f %.0f\">\n",
                kWidth, kHeight, kWidth, kHeight);
  os << buf;
  std::snprintf(buf, sizeof buf,
                "<rect x=\"%.1f\" y=\"%.1f\" width=\"%.1f\" height=\"%.1f\" fill=\"white\" "
                "stroke=\"black\"/>\n",
                kMargin, kMargin, kWidth - 2 * kMargin, kHeight - 2 * kMargin);
  os << buf;
  std::snprintf(buf, sizeof buf,
                "<text x=\"%.1f\" y=\"%.1f\" font-size=\"14\">time (s) 0 to %.1f</text>\n"
                "<text x=\"10\" y=\"%.1f\" font-size=\"14\">station (m) 0 to %.2f</text>\n",
                kMargin, kHeight - 15.0, t_max, kMargin - 15.0, lap);
  os << buf;

  PlotCounts counts;
  for (auto& [id, rows] : by_vehicle) {
    std::sort(rows.begin(), rows.end(),
              [](const TraceRow* a, const TraceRow* b) { return a->tick < b->tick; });
    const Role role = rows.front()->role;
    if (role == Role::kObstacle) {
      std::snprintf(buf, sizeof buf,
                    "<line class=\"obstacle\" data-id=\"%u\" x1=\"%.2f\" y1=\"%.2f\" x2=\"%.2f\" "
                    "y2=\"%.2f\" stroke=\"black\" stroke-width=\"2\"/>\n",
                    id, px(rows.front()->time_s), py(rows.front()->station_m),
                    px(rows.back()->time_s), py(rows.front()->station_m));
      os << buf;
      ++counts.obstacles;
      continue;
    }
    const double width = is_agent(role) ? 3.0 : 1.0;
    std::snprintf(buf, sizeof buf, "<g class=\"vehicle\" data-id=\"%u\" data-role=\"%s\">\n", id,
                  role_name(role));
    os << buf;
    for (std::size_t i = 1; i < rows.size(); ++i) {
      const TraceRow& a = *rows[i - 1];
      const TraceRow& b = *rows[i];
      if (std::abs(b.station_m - a.station_m) > 0.5 * lap) continue;  // lap wrap
      std::snprintf(buf, sizeof buf,
                    "<line x1=\"%.2f\" y1=\"%.2f\" x2=\"%.2f\" y2=\"%.2f\" stroke=\"%s\" "
                    "stroke-width=\"%.0f\"/>\n",
                    px(a.time_s), py(a.station_m), px(b.time_s), py(b.station_m),
                    speed_colour(0.5 * (a.speed_mps + b.speed_mps), max_speed_mps).c_str(),
                    width);
      os << buf;
    }
    os << "</g>\n";
    ++counts.vehicles;
  }
  for (const auto& r : trace.rows) {
    if (!r.collision) continue;
    std::snprintf(buf, sizeof buf,
                  "<circle class=\"collision\" cx=\"%.2f\" cy=\"%.2f\" r=\"4\" fill=\"red\"/>\n",
                  px(r.time_s), py(r.station_m));
    os << buf;
    ++counts.collisions;
  }
  os << "</svg>\n";
  return counts;
}

}  // namespace mixedlane
