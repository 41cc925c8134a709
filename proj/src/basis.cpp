#include "toxsurf/basis.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace toxsurf {

namespace {

[[noreturn]] void domain_fail(const char* what, double value) {
  std::ostringstream os;
  os << what << " (value = " << value << ")";
  throw std::domain_error(os.str());
}

void check_knots(double knot1, double knot2, double m) {
  if (!(m > 0.0)) domain_fail("spline domain max must be positive", m);
  if (!(knot1 > 0.0)) domain_fail("knot1 must exceed 0", knot1);
  if (!(knot2 < m)) domain_fail("knot2 must be below the domain max", knot2);
  if (!(knot2 - knot1 > knot_gap_frac * m)) domain_fail("degenerate knot pair, knot2 - knot1 too small", knot2 - knot1);
}

}  // namespace

Vec4 spline_basis(double x, double knot1, double knot2, double m) {
  check_knots(knot1, knot2, m);
  if (!(x >= 0.0 && x <= m)) domain_fail("basis argument outside [0, domain max]", x);
  Vec4 w{0.0, 0.0, 0.0, 0.0};
  if (x <= knot1) {
    const double u = x / knot1;
    w[0] = 1.0 - u;
    w[1] = u;
  } else if (x <= knot2) {
    const double u = (x - knot1) / (knot2 - knot1);
    w[1] = 1.0 - u;
    w[2] = u;
  } else {
    const double u = (x - knot2) / (m - knot2);
    w[2] = 1.0 - u;
    w[3] = u;
  }
  return w;
}

void SplineComponent::validate() const {
  check_knots(knot1, knot2, domain_max);
  if (coef[0] != 0.0) domain_fail("first spline coefficient must be pinned at 0", coef[0]);
  if (coef[1] > 0.0) domain_fail("second spline coefficient must be <= 0", coef[1]);
  if (coef[2] < 0.0) domain_fail("third spline coefficient must be >= 0", coef[2]);
  if (coef[3] < 0.0) domain_fail("fourth spline coefficient must be >= 0", coef[3]);
  for (double c : coef) {
    if (!std::isfinite(c)) domain_fail("non-finite spline coefficient", c);
  }
}

double eval_component(double x, const SplineComponent& comp) {
  const Vec4 w = spline_basis(x, comp.knot1, comp.knot2, comp.domain_max);
  return w[0] * comp.coef[0] + w[1] * comp.coef[1] + w[2] * comp.coef[2] + w[3] * comp.coef[3];
}

void SurfaceParams::validate() const {
  if (!std::isfinite(alpha)) throw std::domain_error("non-finite alpha");
  dose.validate();
  time.validate();
  if (rho != interaction.has_value()) {
    throw std::domain_error("interaction component must be present exactly when rho = 1");
  }
  if (interaction) interaction->validate();
}

double eval_surface(double d, double t, const SurfaceParams& p) {
  double v = p.alpha + eval_component(d, p.dose) + eval_component(t, p.time);
  if (p.rho) v += eval_component(d * t, *p.interaction);
  return v;
}

}  // namespace toxsurf
