#include "mixedlane/track.h"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

namespace mixedlane {

namespace {

// 5-point Gauss-Legendre on [-1, 1].
constexpr std::array<double, 5> kGaussNodes = {
    -0.9061798459386640, -0.5384693101056831, 0.0, 0.5384693101056831,
    0.9061798459386640};
constexpr std::array<double, 5> kGaussWeights = {
    0.2369268850561891, 0.4786286704993665, 0.5688888888888889,
    0.4786286704993665, 0.2369268850561891};

double cross(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

Vec2 unit_tangent_at(const BezierSegment& seg, double u) {
  Vec2 d = seg.derivative(u);
  if (d.norm() < 1e-12) {
    // Coincident control points at an end: fall back to the chord direction.
    d = (u < 0.5) ? Vec2(seg.p2 - seg.p0) : Vec2(seg.p3 - seg.p1);
  }
  return d.normalized();
}

Vec2 left_normal(const Vec2& t) { return Vec2(-t.y(), t.x()); }

std::pair<BezierSegment, BezierSegment> split_half(const BezierSegment& s) {
  const Vec2 a = 0.5 * (s.p0 + s.p1);
  const Vec2 b = 0.5 * (s.p1 + s.p2);
  const Vec2 c = 0.5 * (s.p2 + s.p3);
  const Vec2 d = 0.5 * (a + b);
  const Vec2 e = 0.5 * (b + c);
  const Vec2 m = 0.5 * (d + e);
  return {BezierSegment{s.p0, a, d, m}, BezierSegment{m, e, c, s.p3}};
}

// Distance from q to curve, Newton-refined from parameter u.
double distance_to_curve(const BezierSegment& seg, const Vec2& q, double u) {
  for (int it = 0; it < 8; ++it) {
    const Vec2 diff = seg.point(u) - q;
    const Vec2 d1 = seg.derivative(u);
    const double g = d1.dot(diff);
    const double h = seg.second_derivative(u).dot(diff) + d1.squaredNorm();
    if (h <= 0.0) break;
    u = std::clamp(u - g / h, 0.0, 1.0);
  }
  return (seg.point(u) - q).norm();
}

void fit_offset(const BezierSegment& seg, double offset, double tolerance,
                int depth, std::vector<BezierSegment>& out) {
  auto offset_point = [&](double u) {
    return Vec2(seg.point(u) + offset * left_normal(unit_tangent_at(seg, u)));
  };
  const Vec2 q0 = offset_point(0.0);
  const Vec2 q3 = offset_point(1.0);
  const Vec2 t0 = unit_tangent_at(seg, 0.0);
  const Vec2 t3 = unit_tangent_at(seg, 1.0);

  // Least squares for the two tangent lengths with fixed end tangents.
  constexpr int kSamples = 32;
  Eigen::Matrix2d normal = Eigen::Matrix2d::Zero();
  Eigen::Vector2d rhs = Eigen::Vector2d::Zero();
  for (int j = 1; j < kSamples; ++j) {
    const double u = static_cast<double>(j) / kSamples;
    const double w = 1.0 - u;
    const double b0 = w * w * w, b1 = 3 * w * w * u, b2 = 3 * w * u * u,
                 b3 = u * u * u;
    const Vec2 r = offset_point(u) - (b0 + b1) * q0 - (b2 + b3) * q3;
    const Vec2 ca = b1 * t0;
    const Vec2 cb = -b2 * t3;
    normal(0, 0) += ca.dot(ca);
    normal(0, 1) += ca.dot(cb);
    normal(1, 1) += cb.dot(cb);
    rhs(0) += ca.dot(r);
    rhs(1) += cb.dot(r);
  }
  normal(1, 0) = normal(0, 1);
  const Eigen::Vector2d ab = normal.ldlt().solve(rhs);
  BezierSegment fit{q0, q0 + ab(0) * t0, q3 - ab(1) * t3, q3};

  double err = 0.0;
  for (int j = 0; j <= 2 * kSamples; ++j) {
    const double u = static_cast<double>(j) / (2 * kSamples);
    err = std::max(err, distance_to_curve(fit, offset_point(u), u));
  }
  if (err <= tolerance || depth >= 10) {
    if (err > tolerance) {
      throw GeometryError("offset refit did not reach tolerance");
    }
    out.push_back(fit);
    return;
  }
  auto [left, right] = split_half(seg);
  fit_offset(left, offset, tolerance, depth + 1, out);
  fit_offset(right, offset, tolerance, depth + 1, out);
}

}  // namespace

double wrap_angle(double angle) {
  double a = std::remainder(angle, 2.0 * std::numbers::pi);
  if (a <= -std::numbers::pi) a += 2.0 * std::numbers::pi;
  return a;
}

Vec2 BezierSegment::point(double u) const {
  const double w = 1.0 - u;
  return w * w * w * p0 + 3.0 * w * w * u * p1 + 3.0 * w * u * u * p2 +
         u * u * u * p3;
}

Vec2 BezierSegment::derivative(double u) const {
  const double w = 1.0 - u;
  return 3.0 * w * w * (p1 - p0) + 6.0 * w * u * (p2 - p1) +
         3.0 * u * u * (p3 - p2);
}

Vec2 BezierSegment::second_derivative(double u) const {
  return 6.0 * (1.0 - u) * (p2 - 2.0 * p1 + p0) + 6.0 * u * (p3 - 2.0 * p2 + p1);
}

Vec2 eval_point(const BezierSegment& seg, double u) {
  if (!(u >= 0.0 && u <= 1.0)) {
    throw std::out_of_range("bezier parameter outside [0, 1]: " +
                            std::to_string(u));
  }
  return seg.point(u);
}

double curvature(const BezierSegment& seg, double u) {
  const Vec2 d1 = seg.derivative(u);
  const double speed2 = d1.squaredNorm();
  if (std::sqrt(speed2) <= 1e-9) {
    throw GeometryError("curvature undefined: degenerate tangent");
  }
  const Vec2 d2 = seg.second_derivative(u);
  return cross(d1, d2) / (speed2 * std::sqrt(speed2));
}

double segment_arc_length(const BezierSegment& seg, double u0, double u1) {
  const double half = 0.5 * (u1 - u0);
  const double mid = 0.5 * (u1 + u0);
  double sum = 0.0;
  for (std::size_t i = 0; i < kGaussNodes.size(); ++i) {
    sum += kGaussWeights[i] * seg.derivative(mid + half * kGaussNodes[i]).norm();
  }
  return sum * half;
}

Lane::Lane(std::vector<BezierSegment> segments, double resolution)
    : segments_(std::move(segments)), resolution_(resolution) {
  if (segments_.empty()) throw GeometryError("lane has no segments");
  if (!(resolution_ > 0.0)) throw GeometryError("arc resolution must be > 0");
  const std::size_t n = segments_.size();
  for (std::size_t i = 0; i < n; ++i) {
    const auto& s = segments_[i];
    if ((s.p0 - s.p3).norm() == 0.0 &&
        ((s.p1 - s.p0).norm() == 0.0 || (s.p2 - s.p1).norm() == 0.0)) {
      throw GeometryError("degenerate bezier segment " + std::to_string(i));
    }
    const auto& next = segments_[(i + 1) % n];
    if ((s.p3 - next.p0).norm() > 1e-9) {
      throw GeometryError("lane is not closed at junction " + std::to_string(i));
    }
    const Vec2 tin = unit_tangent_at(s, 1.0);
    const Vec2 tout = unit_tangent_at(next, 0.0);
    const double angle = std::atan2(std::abs(cross(tin, tout)), tin.dot(tout));
    if (angle > 1e-6) {
      throw GeometryError("lane is not C1 at junction " + std::to_string(i));
    }
  }

  double s_acc = 0.0;
  segment_first_entry_.reserve(n + 1);
  for (std::size_t i = 0; i < n; ++i) {
    const double len = segment_arc_length(segments_[i], 0.0, 0.5) +
                       segment_arc_length(segments_[i], 0.5, 1.0);
    const auto pieces =
        std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(len / resolution_)));
    segment_first_entry_.push_back(table_.size());
    for (std::size_t j = 0; j < pieces; ++j) {
      const double u0 = static_cast<double>(j) / pieces;
      const double u1 = static_cast<double>(j + 1) / pieces;
      table_.push_back({s_acc, i, u0});
      s_acc += segment_arc_length(segments_[i], u0, u1);
    }
  }
  segment_first_entry_.push_back(table_.size());
  total_length_ = s_acc;
}

Lane build_arc_table_lane(std::vector<BezierSegment> segments,
                          double resolution) {
  return Lane(std::move(segments), resolution);
}

double Lane::wrap_s(double s) const {
  double w = std::fmod(s, total_length_);
  if (w < 0.0) w += total_length_;
  if (w >= total_length_) w = 0.0;
  return w;
}

double Lane::forward_distance(double s_from, double s_to) const {
  return wrap_s(s_to - s_from);
}

std::size_t Lane::table_index_for(double s) const {
  auto it = std::upper_bound(
      table_.begin(), table_.end(), s,
      [](double value, const ArcTableEntry& e) { return value < e.s; });
  if (it == table_.begin()) return 0;
  return static_cast<std::size_t>(std::distance(table_.begin(), it)) - 1;
}

LanePoint Lane::locate(double s) const {
  s = wrap_s(s);
  const std::size_t k = table_index_for(s);
  const ArcTableEntry& e = table_[k];
  const std::size_t seg = e.segment;
  const double u_hi =
      (k + 1 < segment_first_entry_[seg + 1]) ? table_[k + 1].u : 1.0;
  const BezierSegment& b = segments_[seg];
  double u = e.u;
  const double remaining = s - e.s;
  if (remaining > 0.0) {
    u = std::clamp(e.u + remaining / b.derivative(e.u).norm(), e.u, u_hi);
    for (int it = 0; it < 4; ++it) {
      const double f = segment_arc_length(b, e.u, u) - remaining;
      const double speed = b.derivative(u).norm();
      if (speed <= 0.0) break;
      u = std::clamp(u - f / speed, e.u, u_hi);
    }
  }
  return {seg, u};
}

double Lane::arc_length_at(const LanePoint& where) const {
  const std::size_t first = segment_first_entry_.at(where.segment);
  const std::size_t count = segment_first_entry_[where.segment + 1] - first;
  const double u = std::clamp(where.u, 0.0, 1.0);
  const auto j = std::min(count - 1,
                          static_cast<std::size_t>(std::floor(u * count)));
  const ArcTableEntry& e = table_[first + j];
  return e.s + segment_arc_length(segments_[where.segment], e.u, u);
}

Vec2 Lane::point_at(double s) const {
  const LanePoint lp = locate(s);
  return segments_[lp.segment].point(lp.u);
}

double Lane::heading_at(double s) const {
  const LanePoint lp = locate(s);
  const Vec2 t = unit_tangent_at(segments_[lp.segment], lp.u);
  return std::atan2(t.y(), t.x());
}

double Lane::curvature_at(double s) const {
  const LanePoint lp = locate(s);
  return curvature(segments_[lp.segment], lp.u);
}

Projection Lane::refine(const Vec2& point, std::size_t table_index) const {
  const std::size_t n = segments_.size();
  std::size_t seg = table_[table_index].segment;
  double u = table_[table_index].u;
  for (int it = 0; it < 64; ++it) {
    const BezierSegment& b = segments_[seg];
    const Vec2 diff = b.point(u) - point;
    const Vec2 d1 = b.derivative(u);
    const double grad = 2.0 * d1.dot(diff);
    if (std::abs(grad) < 1e-10) break;
    const double hess = 2.0 * (b.second_derivative(u).dot(diff) + d1.squaredNorm());
    double step = (hess > 0.0) ? -grad / hess : -grad / (2.0 * d1.squaredNorm());
    const double next = u + step;
    if (next < 0.0) {
      if (u == 0.0) {
        seg = (seg + n - 1) % n;
        u = 1.0;
      } else {
        u = 0.0;
      }
    } else if (next > 1.0) {
      if (u == 1.0) {
        seg = (seg + 1) % n;
        u = 0.0;
      } else {
        u = 1.0;
      }
    } else {
      if (next == u) break;
      u = next;
    }
  }
  const BezierSegment& b = segments_[seg];
  Projection p;
  p.where = {seg, u};
  p.point = b.point(u);
  const Vec2 t = unit_tangent_at(b, u);
  p.offset = cross(t, point - p.point);
  p.heading = std::atan2(t.y(), t.x());
  p.curvature = curvature(b, u);
  p.s = wrap_s(arc_length_at(p.where));
  return p;
}

Projection Lane::project(const Vec2& point, double max_distance) const {
  std::size_t best = 0;
  double best_d2 = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < table_.size(); ++k) {
    const auto& e = table_[k];
    const double d2 = (segments_[e.segment].point(e.u) - point).squaredNorm();
    if (d2 < best_d2) {
      best_d2 = d2;
      best = k;
    }
  }
  Projection p = refine(point, best);
  if (std::abs(p.offset) > max_distance) {
    throw GeometryError("point too far from lane");
  }
  return p;
}

Projection Lane::project_near(const Vec2& point, double s_hint, double window,
                              double max_distance) const {
  const std::size_t count = table_.size();
  const auto span = std::min<std::size_t>(
      count / 2, static_cast<std::size_t>(std::ceil(window / resolution_)) + 1);
  const std::size_t centre = table_index_for(wrap_s(s_hint));
  std::size_t best = centre;
  double best_d2 = std::numeric_limits<double>::infinity();
  std::size_t best_step = 0;
  for (std::size_t step = 0; step <= 2 * span; ++step) {
    const std::size_t k = (centre + count - span + step) % count;
    const auto& e = table_[k];
    const double d2 = (segments_[e.segment].point(e.u) - point).squaredNorm();
    if (d2 < best_d2) {
      best_d2 = d2;
      best = k;
      best_step = step;
    }
  }
  if (best_step == 0 || best_step == 2 * span) {
    return project(point, max_distance);
  }
  Projection p = refine(point, best);
  if (std::abs(p.offset) > max_distance) {
    throw GeometryError("point too far from lane");
  }
  return p;
}

TrackSpec::TrackSpec(std::vector<Lane> lanes, double lane_width)
    : lanes_(std::move(lanes)), lane_width_(lane_width) {
  if (lanes_.empty()) throw GeometryError("track needs at least one lane");
  if (!(lane_width_ > 0.0)) throw GeometryError("lane width must be > 0");
  const double bound = static_cast<double>(lanes_.size()) * 2.0 *
                       std::numbers::pi * lane_width_;
  for (std::size_t i = 0; i < lanes_.size(); ++i) {
    for (std::size_t j = i + 1; j < lanes_.size(); ++j) {
      if (std::abs(lanes_[i].total_length() - lanes_[j].total_length()) >= bound) {
        throw GeometryError("lane lengths inconsistent with lateral offsets");
      }
    }
  }
}

double TrackSpec::max_abs_curvature(double step) const {
  double worst = 0.0;
  for (const Lane& lane : lanes_) {
    for (double s = 0.0; s < lane.total_length(); s += step) {
      worst = std::max(worst, std::abs(lane.curvature_at(s)));
    }
  }
  return worst;
}

std::vector<BezierSegment> rounded_rect_spine(double width, double height,
                                              double corner_radius) {
  if (!(corner_radius > 0.0) || width < 2.0 * corner_radius ||
      height < 2.0 * corner_radius) {
    throw GeometryError("rounded rectangle needs width, height >= 2 * radius > 0");
  }
  const double k = 4.0 / 3.0 * std::tan(std::numbers::pi / 8.0);
  const double a = width / 2.0 - corner_radius;
  const double b = height / 2.0 - corner_radius;
  const double hw = width / 2.0, hh = height / 2.0, r = corner_radius;

  std::vector<BezierSegment> out;
  auto straight = [&](Vec2 from, Vec2 to) {
    if ((to - from).norm() < 1e-12) return;
    out.push_back({from, from + (to - from) / 3.0, from + 2.0 * (to - from) / 3.0, to});
  };
  auto arc = [&](Vec2 from, Vec2 t_from, Vec2 to, Vec2 t_to) {
    out.push_back({from, from + k * r * t_from, to - k * r * t_to, to});
  };
  straight({-a, -hh}, {a, -hh});
  arc({a, -hh}, {1, 0}, {hw, -b}, {0, 1});
  straight({hw, -b}, {hw, b});
  arc({hw, b}, {0, 1}, {a, hh}, {-1, 0});
  straight({a, hh}, {-a, hh});
  arc({-a, hh}, {-1, 0}, {-hw, b}, {0, -1});
  straight({-hw, b}, {-hw, -b});
  arc({-hw, -b}, {0, -1}, {-a, -hh}, {1, 0});
  return out;
}

std::vector<BezierSegment> offset_spine(const std::vector<BezierSegment>& spine,
                                        double offset, double tolerance) {
  if (offset == 0.0) return spine;
  std::vector<BezierSegment> out;
  for (const auto& seg : spine) fit_offset(seg, offset, tolerance, 0, out);
  // Consecutive fits share the same spine point and normal; snap away rounding.
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[(i + 1) % out.size()].p0 = out[i].p3;
  }
  return out;
}

TrackSpec build_track(const std::vector<BezierSegment>& spine,
                      std::size_t lanes, double lane_width, double resolution) {
  if (lanes == 0) throw GeometryError("track needs at least one lane");
  std::vector<Lane> built;
  built.reserve(lanes);
  for (std::size_t i = 0; i < lanes; ++i) {
    const double offset =
        (static_cast<double>(lanes - 1) / 2.0 - static_cast<double>(i)) * lane_width;
    built.emplace_back(offset_spine(spine, offset), resolution);
  }
  return TrackSpec(std::move(built), lane_width);
}

void validate_drivable(const TrackSpec& track, double wheel_base) {
  const double limit = 1.0 / (2.0 * wheel_base);
  const double worst = track.max_abs_curvature();
  if (worst > limit) {
    throw GeometryError("track curvature " + std::to_string(worst) +
                        " exceeds drivable limit " + std::to_string(limit));
  }
}

}  // namespace mixedlane
