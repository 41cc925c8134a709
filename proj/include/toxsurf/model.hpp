#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "toxsurf/basis.hpp"
#include "toxsurf/rng.hpp"

namespace toxsurf {

// One screening measurement on the logit scale. Particle/outcome/replicate
// indexes are zero-based internally; file formats use one-based labels.
struct Record {
  int particle = 0;
  int outcome = 0;
  int replicate = 0;
  double dose = 0.0;
  double time = 0.0;
  double y = 0.0;
};

struct Dataset {
  std::vector<Record> records;
  int n_particles = 0;   // I
  int n_outcomes = 0;    // J
  int n_replicates = 0;  // K
  double dose_max = 0.0; // D
  double time_max = 0.0; // T
  std::vector<double> dose_grid;  // sorted unique design doses
  std::vector<double> time_grid;  // sorted unique design times

  // Builds grids and checks indexes and domain bounds. Empty record sets are
  // allowed here (prior-only runs); use validate_design() for ingest-level
  // completeness requirements.
  static Dataset build(std::vector<Record> records, int n_particles, int n_outcomes,
                       int n_replicates, double dose_max, double time_max);

  // Every (particle, outcome) cell must carry records with at least two
  // distinct doses and two distinct times; otherwise the change points are
  // unidentifiable.
  void validate_design() const;
};

struct GammaPrior {
  double shape = 1.0;
  double rate = 1.0;
};

struct NormalPrior {
  double mean = 0.0;
  double var = 1.0;
};

// Shape parameters of the ordered-pair density on {0 < x1 < x2 < m}; see
// bivariate_beta_logpdf. This struct is the single extension point for the
// knot-pair prior: every knot density evaluation and every prior knot draw
// routes through knot_pair_logpdf / sample_knot_pair, so an alternative
// family only needs to swap those two functions.
struct BivariateBetaParams {
  double a1 = 1.0;
  double b1 = 1.0;
  double a2 = 1.0;
  double b2 = 1.0;
};

struct PriorConfig {
  GammaPrior eps_precision{0.01, 0.01};   // 1/sigma^2_eps, per outcome
  GammaPrior alpha_precision{1.0, 0.1};   // 1/sigma^2_alpha, per particle
  GammaPrior beta_precision{1.0, 0.1};    // 1/sigma^2_beta, per particle and coordinate
  GammaPrior gamma_precision{1.0, 0.1};   // 1/sigma^2_gamma
  NormalPrior alpha_pop{0.0, 10.0};       // population baselines
  NormalPrior beta_pop{1.0, 10.0};        // population dose coefficients (sign-truncated)
  NormalPrior gamma_pop{1.0, 10.0};       // population time coefficients (sign-truncated)
  NormalPrior inter_coef{1.0, 10.0};      // interaction coefficients (sign-truncated)
  GammaPrior lambda_phi1{2.0, 1.0};       // dose knot-rate components, ordered > 1
  GammaPrior lambda_phi2{3.0, 1.0};
  GammaPrior lambda_psi1{2.0, 1.0};       // time knot-rate components
  GammaPrior lambda_psi2{3.0, 1.0};
  BivariateBetaParams chi_prior{2.0, 3.0, 1.0, 1.0};  // interaction knots on [0, D*T]
  bool pin_coef2 = true;                  // pin the second coefficients at 0
  std::vector<int> nu_support{1, 2, 4, 8, 16, 32};
  double strict_pos_eps = 1e-8;           // lower bound standing in for strict positivity

  void validate() const;  // throws std::invalid_argument
};

// Sign region of one free coefficient coordinate.
struct CoordRegion {
  int idx;     // 0-based position within the 4-vector
  double lo;
  double hi;
};

// Free (sampled) coordinates of a dose/time coefficient vector, or of an
// interaction coefficient vector. Coordinate 0 is always pinned at zero;
// coordinate 1 is pinned when pin_coef2 is set, otherwise nonpositive;
// coordinates 2 and 3 are nonnegative (bounded away from zero for the
// interaction).
std::vector<CoordRegion> free_coef_regions(const PriorConfig& cfg, bool interaction);

// Particle-level parameters.
struct ParticleParams {
  double alpha_pop = 0.0;                      // mean of the cell baselines
  Vec4 beta_pop{0.0, 0.0, 0.0, 0.0};           // mean of the dose coefficients
  Vec4 gamma_pop{0.0, 0.0, 0.0, 0.0};          // mean of the time coefficients
  std::array<double, 2> lambda_phi{2.0, 3.0};  // dose knot rates, 1 < l1 < l2
  std::array<double, 2> lambda_psi{2.0, 3.0};  // time knot rates
  double tau = 1.0;                            // variance inflation
  double sigma2_alpha = 1.0;
  Vec4 sigma2_beta{1.0, 1.0, 1.0, 1.0};
  Vec4 sigma2_gamma{1.0, 1.0, 1.0, 1.0};
};

// Complete model state.
struct HierarchyParams {
  std::vector<std::vector<SurfaceParams>> cells;  // [particle][outcome]
  std::vector<ParticleParams> particles;
  std::vector<double> sigma2_eps;  // per outcome
  double pi = 0.5;                 // interaction inclusion probability
  int nu = 4;                      // error degrees of freedom
  double dose_max = 0.0;
  double time_max = 0.0;

  int n_particles() const { return static_cast<int>(particles.size()); }
  int n_outcomes() const { return static_cast<int>(sigma2_eps.size()); }

  // Checks every structural invariant (knot ordering, sign constraints,
  // positivity, lambda ordering, interaction presence matching rho).
  void validate(const PriorConfig& cfg) const;  // throws std::domain_error
};

// Log of the ordered-pair density
//   p(x1, x2) = Beta(x1/m; a1, b1) / m * Beta((x2-x1)/(m-x1); a2, b2) / (m-x1)
// over the simplex {0 < x1 < x2 < m}. Returns -inf outside the support.
double bivariate_beta_logpdf(double x1, double x2, double a1, double b1, double a2, double b2,
                             double m);

double knot_pair_logpdf(double x1, double x2, const BivariateBetaParams& p, double m);
std::array<double, 2> sample_knot_pair(const BivariateBetaParams& p, double m, Rng& rng);

// Sum over records of the normal log density with mean eval_surface(d, t) and
// variance sigma^2_eps[j] / tau[i]. Throws std::runtime_error naming the
// offending record if a non-finite contribution appears.
double log_likelihood(const HierarchyParams& state, const Dataset& data);

// Joint log prior density of the full state. Returns -inf on any constraint
// violation. The constant normalizer of the lambda ordering constraint is
// omitted (it does not depend on the state).
double log_prior(const HierarchyParams& state, const PriorConfig& cfg);

inline double log_posterior(const HierarchyParams& state, const Dataset& data,
                            const PriorConfig& cfg) {
  return log_likelihood(state, data) + log_prior(state, cfg);
}

// Ancestral draw from the full prior (hyperpriors first, then particle level,
// then cells). The result satisfies every HierarchyParams invariant. Bounded
// rejection for ordered/gapped draws; exhaustion throws naming the constraint.
HierarchyParams sample_prior(const PriorConfig& cfg, int n_particles, int n_outcomes,
                             double dose_max, double time_max, Rng& rng);
HierarchyParams sample_prior(const PriorConfig& cfg, int n_particles, int n_outcomes,
                             double dose_max, double time_max, std::uint64_t seed);

}  // namespace toxsurf
