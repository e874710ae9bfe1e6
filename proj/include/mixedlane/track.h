#ifndef MIXEDLANE_TRACK_H_
#define MIXEDLANE_TRACK_H_

#include <Eigen/Core>

#include <cstddef>
#include <stdexcept>
#include <vector>

namespace mixedlane {

using Vec2 = Eigen::Vector2d;

class GeometryError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Wraps an angle into (-pi, pi].
double wrap_angle(double angle);

struct BezierSegment {
  Vec2 p0, p1, p2, p3;

  Vec2 point(double u) const;
  Vec2 derivative(double u) const;
  Vec2 second_derivative(double u) const;
};

// Cubic Bezier evaluation. Throws std::out_of_range for u outside [0, 1].
Vec2 eval_point(const BezierSegment& seg, double u);

// Signed curvature, positive for left-turning. Throws GeometryError when the
// tangent vanishes.
double curvature(const BezierSegment& seg, double u);

// Gauss-Legendre arc length of seg between parameters u0 and u1.
double segment_arc_length(const BezierSegment& seg, double u0, double u1);

struct ArcTableEntry {
  double s;
  std::size_t segment;
  double u;
};

struct LanePoint {
  std::size_t segment = 0;
  double u = 0.0;
};

// Nearest-point query result.
struct Projection {
  double s = 0.0;        // arc length of the nearest lane point
  double offset = 0.0;   // signed perpendicular distance, positive to the left
  double heading = 0.0;  // lane tangent heading at the nearest point
  double curvature = 0.0;
  Vec2 point = Vec2::Zero();
  LanePoint where;
};

class Lane {
 public:
  // Validates closure and C1 continuity, then builds the arc table.
  Lane(std::vector<BezierSegment> segments, double resolution = 0.005);

  const std::vector<BezierSegment>& segments() const { return segments_; }
  const std::vector<ArcTableEntry>& arc_table() const { return table_; }
  double total_length() const { return total_length_; }
  double resolution() const { return resolution_; }

  // Arc length -> (segment, u); s is wrapped onto the lap.
  LanePoint locate(double s) const;
  double arc_length_at(const LanePoint& where) const;

  Vec2 point_at(double s) const;
  double heading_at(double s) const;
  double curvature_at(double s) const;

  // Global nearest point. Throws GeometryError when the point is farther than
  // max_distance from the lane. Ties resolve to the smaller s.
  Projection project(const Vec2& point, double max_distance) const;

  // Nearest point searched within +-window of s_hint; falls back to the
  // global search when the local minimum sits on the window edge.
  Projection project_near(const Vec2& point, double s_hint, double window,
                          double max_distance) const;

  // Circular arc distance from s_from forward to s_to, in [0, total_length).
  double forward_distance(double s_from, double s_to) const;
  double wrap_s(double s) const;

 private:
  Projection refine(const Vec2& point, std::size_t table_index) const;
  std::size_t table_index_for(double s) const;

  std::vector<BezierSegment> segments_;
  std::vector<ArcTableEntry> table_;
  std::vector<std::size_t> segment_first_entry_;
  double total_length_ = 0.0;
  double resolution_ = 0.005;
};

Lane build_arc_table_lane(std::vector<BezierSegment> segments,
                          double resolution);

// Closed multi-lane circuit. Lanes are ordered left to right relative to the
// direction of travel.
class TrackSpec {
 public:
  TrackSpec(std::vector<Lane> lanes, double lane_width);

  std::size_t lane_count() const { return lanes_.size(); }
  const Lane& lane(std::size_t i) const { return lanes_.at(i); }
  const std::vector<Lane>& lanes() const { return lanes_; }
  double lane_width() const { return lane_width_; }

  std::size_t lanes_left_of(std::size_t lane) const { return lane; }
  std::size_t lanes_right_of(std::size_t lane) const {
    return lanes_.size() - 1 - lane;
  }

  // Lane used for the common along-track coordinate (the middle lane).
  std::size_t reference_lane() const { return lanes_.size() / 2; }

  double max_abs_curvature(double step = 0.01) const;

 private:
  std::vector<Lane> lanes_;
  double lane_width_;
};

// Rounded-rectangle spine centred at the origin, travelled counter-clockwise.
std::vector<BezierSegment> rounded_rect_spine(double width, double height,
                                              double corner_radius);

// Offsets a spine to the left by `offset` and refits each piece with cubic
// Beziers, subdividing until the fit error is at most `tolerance`.
std::vector<BezierSegment> offset_spine(const std::vector<BezierSegment>& spine,
                                        double offset, double tolerance = 1e-3);

// Builds `lanes` lanes spaced lane_width apart, centred on the spine.
TrackSpec build_track(const std::vector<BezierSegment>& spine,
                      std::size_t lanes, double lane_width,
                      double resolution = 0.005);

// Rejects tracks whose curvature exceeds 1 / (2 * wheel_base) anywhere.
void validate_drivable(const TrackSpec& track, double wheel_base);

}  // namespace mixedlane

#endif  // MIXEDLANE_TRACK_H_
