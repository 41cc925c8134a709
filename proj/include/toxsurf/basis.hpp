#pragma once

#include <array>
#include <optional>

namespace toxsurf {

// Minimum admissible gap between interior knots, as a fraction of the domain.
// Closer pairs are rejected as degenerate rather than merged.
inline constexpr double knot_gap_frac = 1e-9;

using Vec4 = std::array<double, 4>;

// One additive effect: a piecewise-linear function through the points
// (0, coef[0]), (knot1, coef[1]), (knot2, coef[2]), (domain_max, coef[3]).
// coef[0] is always 0 so the effect vanishes at the origin; the interior
// knots are the change points of the slope.
struct SplineComponent {
  double knot1 = 0.0;
  double knot2 = 0.0;
  Vec4 coef{0.0, 0.0, 0.0, 0.0};
  double domain_max = 0.0;

  // Throws std::domain_error naming the offending value.
  void validate() const;
};

// Degree-1 B-spline (hat function) weights on the grid {0, knot1, knot2, m}.
// Exactly the two entries bracketing x are nonzero and the entries sum to 1.
Vec4 spline_basis(double x, double knot1, double knot2, double m);

// S(x, knots)' coef for the component.
double eval_component(double x, const SplineComponent& comp);

// Per-(particle, outcome) surface state.
struct SurfaceParams {
  double alpha = 0.0;           // background response level
  SplineComponent dose;         // effect of dose, domain [0, D]
  SplineComponent time;         // effect of exposure time, domain [0, T]
  bool rho = false;             // dose-time interaction included?
  std::optional<SplineComponent> interaction;  // present iff rho; domain [0, D*T]

  void validate() const;
};

// alpha + f(d) + g(t) (+ h(d*t) when the interaction is present).
double eval_surface(double d, double t, const SurfaceParams& p);

}  // namespace toxsurf
