#ifndef MIXEDLANE_TESTS_ORACLES_H_
#define MIXEDLANE_TESTS_ORACLES_H_

// Brute-force references for the acceptance and unit tests. Apart from the
// serial trainer, nothing here includes the library: geometry, boxes, returns
// and the hand-stepped world are written out from the defining equations.

#include <array>
#include <cstddef>
#include <cstdint>
#include <vector>

namespace oracle {

struct Pt {
  double x = 0.0;
  double y = 0.0;
};

using Cubic = std::array<Pt, 4>;

Pt cubic_point(const Cubic& c, double u);
// Composite Simpson over |B'(u)| with `intervals` (even) panels.
double cubic_arc_length(const Cubic& c, double u0, double u1, int intervals = 20000);

struct Box {
  Pt centre;
  double heading = 0.0;
  double half_length = 0.0;
  double half_width = 0.0;
};

bool contains(const Box& b, Pt p, double slack = 0.0);
// Samples an n x n grid over each box (edges included) and tests the samples
// for containment in the other one.
bool box_overlap(const Box& a, const Box& b, int n = 100, double slack = 0.0);
// Signed distance-like margin: how far apart the boxes are (> 0) or how deep
// they interpenetrate (< 0), estimated on a fine boundary sampling.
double boundary_margin(const Box& a, const Box& b, int n = 400);

// Discounted n-step returns, one inner loop per start index.
std::vector<double> returns(const std::vector<double>& rewards, bool terminal, double gamma,
                            double bootstrap);

// Single-lane world on the bottom straight of the rounded rectangle. The
// agent is index 0, a background IDM vehicle index 1.
struct WorldParams {
  double width = 5.56, height = 3.5, radius = 1.0;
  double lap = 0.0;  // spine lap length; computed by the caller's quadrature
  double wheel_base = 0.16, body_length = 0.32, body_width = 0.20;
  double max_speed = 2.0, dt = 0.02, accel_step = 0.5, accel_limit = 4.0;
  double gain = 3.0, damping = 0.4, feedforward = 0.16, max_steer = 0.6;
  double idm_alpha = 0.75, idm_beta = 1.0, idm_delta = 4.0, idm_s0 = 0.25, idm_T = 1.0;
  double c0 = 0.06, c1 = 0.833, c2 = 2.81, lane_separation = 0.30;
};

struct Car {
  double x = 0.0, y = 0.0, heading = 0.0, speed = 0.0, commanded = 0.0, target = 0.0;
};

struct WorldTick {
  std::array<Car, 2> cars;
  double reward = 0.0;
  bool overlap = false;
};

// accel[t] in {-1, 0, +1} per tick.
std::vector<WorldTick> hand_step(const WorldParams& p, std::array<Car, 2> start,
                                 const std::vector<int>& accel);

// Spine lap length of the rounded rectangle from its eight cubic pieces.
double rounded_rect_lap(double width, double height, double radius);
std::vector<Cubic> rounded_rect_cubics(double width, double height, double radius);

}  // namespace oracle

#endif  // MIXEDLANE_TESTS_ORACLES_H_
