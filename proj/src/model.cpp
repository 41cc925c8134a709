#include "toxsurf/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <sstream>
#include <stdexcept>

#include "toxsurf/special.hpp"

namespace toxsurf {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr int kRetryBudget = 10000;

[[noreturn]] void invalid(const std::string& msg) { throw std::invalid_argument(msg); }

void require_positive(double v, const char* name) {
  if (!(v > 0.0)) invalid(std::string(name) + " must be positive");
}
}  // namespace

Dataset Dataset::build(std::vector<Record> records, int n_particles, int n_outcomes,
                       int n_replicates, double dose_max, double time_max) {
  if (n_particles < 1 || n_outcomes < 1 || n_replicates < 1) {
    invalid("dataset dimensions must be at least 1");
  }
  require_positive(dose_max, "dose_max");
  require_positive(time_max, "time_max");
  std::set<double> doses;
  std::set<double> times;
  for (const Record& r : records) {
    if (r.particle < 0 || r.particle >= n_particles) invalid("record particle index out of range");
    if (r.outcome < 0 || r.outcome >= n_outcomes) invalid("record outcome index out of range");
    if (r.replicate < 0 || r.replicate >= n_replicates) invalid("record replicate index out of range");
    if (!(r.dose >= 0.0 && r.dose <= dose_max)) invalid("record dose outside [0, D]");
    if (!(r.time >= 0.0 && r.time <= time_max)) invalid("record time outside [0, T]");
    if (!std::isfinite(r.y)) invalid("record response is not finite");
    doses.insert(r.dose);
    times.insert(r.time);
  }
  Dataset d;
  d.records = std::move(records);
  d.n_particles = n_particles;
  d.n_outcomes = n_outcomes;
  d.n_replicates = n_replicates;
  d.dose_max = dose_max;
  d.time_max = time_max;
  d.dose_grid.assign(doses.begin(), doses.end());
  d.time_grid.assign(times.begin(), times.end());
  return d;
}

void Dataset::validate_design() const {
  std::vector<std::vector<std::set<double>>> cell_doses(
      n_particles, std::vector<std::set<double>>(n_outcomes));
  auto cell_times = cell_doses;
  for (const Record& r : records) {
    cell_doses[r.particle][r.outcome].insert(r.dose);
    cell_times[r.particle][r.outcome].insert(r.time);
  }
  for (int i = 0; i < n_particles; ++i) {
    for (int j = 0; j < n_outcomes; ++j) {
      std::ostringstream cell;
      cell << "(particle " << i + 1 << ", outcome " << j + 1 << ")";
      if (cell_doses[i][j].empty()) invalid("no records for cell " + cell.str());
      if (cell_doses[i][j].size() < 2) invalid("need at least 2 distinct doses for cell " + cell.str());
      if (cell_times[i][j].size() < 2) invalid("need at least 2 distinct times for cell " + cell.str());
    }
  }
}

void PriorConfig::validate() const {
  for (const GammaPrior* g : {&eps_precision, &alpha_precision, &beta_precision, &gamma_precision,
                              &lambda_phi1, &lambda_phi2, &lambda_psi1, &lambda_psi2}) {
    require_positive(g->shape, "gamma prior shape");
    require_positive(g->rate, "gamma prior rate");
  }
  for (const NormalPrior* n : {&alpha_pop, &beta_pop, &gamma_pop, &inter_coef}) {
    require_positive(n->var, "normal prior variance");
  }
  for (double s : {chi_prior.a1, chi_prior.b1, chi_prior.a2, chi_prior.b2}) {
    require_positive(s, "chi prior shape");
  }
  if (nu_support.empty()) invalid("nu support must be non-empty");
  for (int v : nu_support) {
    if (v < 1) invalid("nu support values must be >= 1");
  }
  require_positive(strict_pos_eps, "strict_pos_eps");
}

std::vector<CoordRegion> free_coef_regions(const PriorConfig& cfg, bool interaction) {
  std::vector<CoordRegion> out;
  if (!cfg.pin_coef2) out.push_back({1, -kInf, 0.0});
  const double lo = interaction ? cfg.strict_pos_eps : 0.0;
  out.push_back({2, lo, kInf});
  out.push_back({3, lo, kInf});
  return out;
}

void HierarchyParams::validate(const PriorConfig& cfg) const {
  const int I = n_particles();
  const int J = n_outcomes();
  if (static_cast<int>(cells.size()) != I) throw std::domain_error("cell grid/particle mismatch");
  for (const auto& row : cells) {
    if (static_cast<int>(row.size()) != J) throw std::domain_error("cell grid/outcome mismatch");
    for (const SurfaceParams& c : row) {
      c.validate();
      if (cfg.pin_coef2) {
        if (c.dose.coef[1] != 0.0 || c.time.coef[1] != 0.0 ||
            (c.interaction && c.interaction->coef[1] != 0.0)) {
          throw std::domain_error("second coefficients must stay pinned at 0");
        }
      }
      if (c.interaction) {
        if (!(c.interaction->coef[2] >= cfg.strict_pos_eps &&
              c.interaction->coef[3] >= cfg.strict_pos_eps)) {
          throw std::domain_error("interaction coefficients 3 and 4 must be strictly positive");
        }
      }
    }
  }
  for (const ParticleParams& p : particles) {
    if (!(p.tau > 0.0)) throw std::domain_error("tau must be positive");
    if (!(p.sigma2_alpha > 0.0)) throw std::domain_error("sigma2_alpha must be positive");
    for (double v : p.sigma2_beta) {
      if (!(v > 0.0)) throw std::domain_error("sigma2_beta must be positive");
    }
    for (double v : p.sigma2_gamma) {
      if (!(v > 0.0)) throw std::domain_error("sigma2_gamma must be positive");
    }
    if (!(p.lambda_phi[1] > p.lambda_phi[0] && p.lambda_phi[0] > 1.0)) {
      throw std::domain_error("lambda_phi must satisfy l2 > l1 > 1");
    }
    if (!(p.lambda_psi[1] > p.lambda_psi[0] && p.lambda_psi[0] > 1.0)) {
      throw std::domain_error("lambda_psi must satisfy l2 > l1 > 1");
    }
    if (cfg.pin_coef2 && (p.beta_pop[1] != 0.0 || p.gamma_pop[1] != 0.0)) {
      throw std::domain_error("second population coefficients must stay pinned at 0");
    }
  }
  for (double v : sigma2_eps) {
    if (!(v > 0.0)) throw std::domain_error("sigma2_eps must be positive");
  }
  if (!(pi > 0.0 && pi < 1.0)) throw std::domain_error("pi must lie in (0,1)");
  if (std::find(cfg.nu_support.begin(), cfg.nu_support.end(), nu) == cfg.nu_support.end()) {
    throw std::domain_error("nu outside its support set");
  }
}

double bivariate_beta_logpdf(double x1, double x2, double a1, double b1, double a2, double b2,
                             double m) {
  if (!(x1 > 0.0 && x1 < x2 && x2 < m)) return -kInf;
  const double lb1 = std::lgamma(a1 + b1) - std::lgamma(a1) - std::lgamma(b1);
  const double lb2 = std::lgamma(a2 + b2) - std::lgamma(a2) - std::lgamma(b2);
  const double first = lb1 + (a1 - 1.0) * std::log(x1) + (b1 - 1.0) * std::log(m - x1) -
                       (a1 + b1 - 1.0) * std::log(m);
  const double second = lb2 + (a2 - 1.0) * std::log(x2 - x1) + (b2 - 1.0) * std::log(m - x2) -
                        (a2 + b2 - 1.0) * std::log(m - x1);
  return first + second;
}

double knot_pair_logpdf(double x1, double x2, const BivariateBetaParams& p, double m) {
  return bivariate_beta_logpdf(x1, x2, p.a1, p.b1, p.a2, p.b2, m);
}

std::array<double, 2> sample_knot_pair(const BivariateBetaParams& p, double m, Rng& rng) {
  for (int it = 0; it < kRetryBudget; ++it) {
    const double x1 = m * rng.beta(p.a1, p.b1);
    const double x2 = x1 + (m - x1) * rng.beta(p.a2, p.b2);
    if (x1 > 0.0 && x2 < m && x2 - x1 > knot_gap_frac * m) return {x1, x2};
  }
  throw std::runtime_error("sample_knot_pair: could not draw a non-degenerate ordered pair");
}

double log_likelihood(const HierarchyParams& state, const Dataset& data) {
  if (state.n_particles() != data.n_particles || state.n_outcomes() != data.n_outcomes) {
    invalid("state dimensions do not match dataset dimensions");
  }
  double total = 0.0;
  for (const Record& r : data.records) {
    const SurfaceParams& cell = state.cells[r.particle][r.outcome];
    const double var = state.sigma2_eps[r.outcome] / state.particles[r.particle].tau;
    const double ll = special::normal_logpdf(r.y, eval_surface(r.dose, r.time, cell), var);
    if (!std::isfinite(ll)) {
      std::ostringstream os;
      os << "non-finite log-likelihood at particle " << r.particle + 1 << ", outcome "
         << r.outcome + 1 << ", replicate " << r.replicate + 1 << ", dose " << r.dose << ", time "
         << r.time;
      throw std::runtime_error(os.str());
    }
    total += ll;
  }
  return total;
}

namespace {

// Log prior of one coefficient vector given its (possibly truncated) normal
// law: sum over free coordinates of the truncated-normal log density, with
// the normalizing constant of each truncation included.
double coef_logprior(const Vec4& coef, const Vec4& center, const Vec4& var,
                     const std::vector<CoordRegion>& regions, bool pin_coef2) {
  if (coef[0] != 0.0) return -kInf;
  if (pin_coef2 && coef[1] != 0.0) return -kInf;
  double lp = 0.0;
  for (const CoordRegion& r : regions) {
    const double x = coef[r.idx];
    if (!(x >= r.lo && x <= r.hi)) return -kInf;
    const double z = special::norm_interval_prob(center[r.idx], std::sqrt(var[r.idx]), r.lo, r.hi);
    if (!(z > 0.0)) return -kInf;
    lp += special::normal_logpdf(x, center[r.idx], var[r.idx]) - std::log(z);
  }
  return lp;
}

Vec4 splat(double v) { return Vec4{v, v, v, v}; }

}  // namespace

double log_prior(const HierarchyParams& state, const PriorConfig& cfg) {
  const int J = state.n_outcomes();
  const double dt_max = state.dose_max * state.time_max;
  const auto main_regions = free_coef_regions(cfg, false);
  const auto inter_regions = free_coef_regions(cfg, true);

  double lp = 0.0;
  // pi ~ U(0,1); nu uniform over its support.
  if (!(state.pi > 0.0 && state.pi < 1.0)) return -kInf;
  if (std::find(cfg.nu_support.begin(), cfg.nu_support.end(), state.nu) == cfg.nu_support.end()) {
    return -kInf;
  }
  lp -= std::log(static_cast<double>(cfg.nu_support.size()));

  for (int j = 0; j < J; ++j) {
    lp += special::inv_gamma_logpdf_from_precision_prior(state.sigma2_eps[j],
                                                         cfg.eps_precision.shape,
                                                         cfg.eps_precision.rate);
  }

  for (int i = 0; i < state.n_particles(); ++i) {
    const ParticleParams& p = state.particles[i];
    lp += special::gamma_logpdf(p.tau, 0.5 * state.nu, 0.5 * state.nu);
    lp += special::normal_logpdf(p.alpha_pop, cfg.alpha_pop.mean, cfg.alpha_pop.var);
    lp += coef_logprior(p.beta_pop, splat(cfg.beta_pop.mean), splat(cfg.beta_pop.var),
                        main_regions, cfg.pin_coef2);
    lp += coef_logprior(p.gamma_pop, splat(cfg.gamma_pop.mean), splat(cfg.gamma_pop.var),
                        main_regions, cfg.pin_coef2);
    lp += special::inv_gamma_logpdf_from_precision_prior(p.sigma2_alpha, cfg.alpha_precision.shape,
                                                         cfg.alpha_precision.rate);
    for (const CoordRegion& r : main_regions) {
      lp += special::inv_gamma_logpdf_from_precision_prior(p.sigma2_beta[r.idx],
                                                           cfg.beta_precision.shape,
                                                           cfg.beta_precision.rate);
      lp += special::inv_gamma_logpdf_from_precision_prior(p.sigma2_gamma[r.idx],
                                                           cfg.gamma_precision.shape,
                                                           cfg.gamma_precision.rate);
    }
    // Ordered knot rates; the constraint's joint normalizer is state-free and
    // omitted.
    if (!(p.lambda_phi[1] > p.lambda_phi[0] && p.lambda_phi[0] > 1.0)) return -kInf;
    if (!(p.lambda_psi[1] > p.lambda_psi[0] && p.lambda_psi[0] > 1.0)) return -kInf;
    lp += special::gamma_logpdf(p.lambda_phi[0], cfg.lambda_phi1.shape, cfg.lambda_phi1.rate);
    lp += special::gamma_logpdf(p.lambda_phi[1], cfg.lambda_phi2.shape, cfg.lambda_phi2.rate);
    lp += special::gamma_logpdf(p.lambda_psi[0], cfg.lambda_psi1.shape, cfg.lambda_psi1.rate);
    lp += special::gamma_logpdf(p.lambda_psi[1], cfg.lambda_psi2.shape, cfg.lambda_psi2.rate);

    for (int j = 0; j < J; ++j) {
      const SurfaceParams& c = state.cells[i][j];
      lp += special::normal_logpdf(c.alpha, p.alpha_pop, p.sigma2_alpha);
      lp += coef_logprior(c.dose.coef, p.beta_pop, p.sigma2_beta, main_regions, cfg.pin_coef2);
      lp += coef_logprior(c.time.coef, p.gamma_pop, p.sigma2_gamma, main_regions, cfg.pin_coef2);
      lp += knot_pair_logpdf(c.dose.knot1, c.dose.knot2,
                             {1.0, p.lambda_phi[0], p.lambda_phi[1], 1.0}, state.dose_max);
      lp += knot_pair_logpdf(c.time.knot1, c.time.knot2,
                             {1.0, p.lambda_psi[0], p.lambda_psi[1], 1.0}, state.time_max);
      if (c.rho != c.interaction.has_value()) return -kInf;
      lp += c.rho ? std::log(state.pi) : std::log1p(-state.pi);
      if (c.rho) {
        lp += coef_logprior(c.interaction->coef, splat(cfg.inter_coef.mean),
                            splat(cfg.inter_coef.var), inter_regions, cfg.pin_coef2);
        lp += knot_pair_logpdf(c.interaction->knot1, c.interaction->knot2, cfg.chi_prior, dt_max);
      }
    }
  }
  return lp;
}

namespace {

Vec4 sample_coef(const Vec4& center, const Vec4& var, const std::vector<CoordRegion>& regions,
                 Rng& rng) {
  Vec4 coef{0.0, 0.0, 0.0, 0.0};
  for (const CoordRegion& r : regions) {
    coef[r.idx] = rng.trunc_normal(center[r.idx], std::sqrt(var[r.idx]), r.lo, r.hi);
  }
  return coef;
}

std::array<double, 2> sample_ordered_lambdas(const GammaPrior& g1, const GammaPrior& g2,
                                             Rng& rng) {
  for (int it = 0; it < kRetryBudget; ++it) {
    const double l1 = rng.gamma(g1.shape, g1.rate);
    const double l2 = rng.gamma(g2.shape, g2.rate);
    if (l2 > l1 && l1 > 1.0) return {l1, l2};
  }
  throw std::runtime_error("sample_prior: constraint l2 > l1 > 1 not satisfied within budget");
}

}  // namespace

HierarchyParams sample_prior(const PriorConfig& cfg, int n_particles, int n_outcomes,
                             double dose_max, double time_max, Rng& rng) {
  cfg.validate();
  if (n_particles < 1 || n_outcomes < 1) invalid("need at least one particle and one outcome");
  require_positive(dose_max, "dose_max");
  require_positive(time_max, "time_max");

  const auto main_regions = free_coef_regions(cfg, false);
  const auto inter_regions = free_coef_regions(cfg, true);

  HierarchyParams s;
  s.dose_max = dose_max;
  s.time_max = time_max;
  s.nu = cfg.nu_support[rng.uniform_index(cfg.nu_support.size())];
  s.pi = rng.uniform01();
  s.sigma2_eps.resize(n_outcomes);
  for (double& v : s.sigma2_eps) v = 1.0 / rng.gamma(cfg.eps_precision.shape, cfg.eps_precision.rate);

  s.particles.resize(n_particles);
  s.cells.assign(n_particles, std::vector<SurfaceParams>(n_outcomes));
  for (int i = 0; i < n_particles; ++i) {
    ParticleParams& p = s.particles[i];
    p.tau = rng.gamma(0.5 * s.nu, 0.5 * s.nu);
    p.alpha_pop = rng.normal(cfg.alpha_pop.mean, std::sqrt(cfg.alpha_pop.var));
    p.beta_pop = sample_coef(splat(cfg.beta_pop.mean), splat(cfg.beta_pop.var), main_regions, rng);
    p.gamma_pop =
        sample_coef(splat(cfg.gamma_pop.mean), splat(cfg.gamma_pop.var), main_regions, rng);
    p.sigma2_alpha = 1.0 / rng.gamma(cfg.alpha_precision.shape, cfg.alpha_precision.rate);
    p.sigma2_beta = splat(1.0);
    p.sigma2_gamma = splat(1.0);
    for (const CoordRegion& r : main_regions) {
      p.sigma2_beta[r.idx] = 1.0 / rng.gamma(cfg.beta_precision.shape, cfg.beta_precision.rate);
      p.sigma2_gamma[r.idx] = 1.0 / rng.gamma(cfg.gamma_precision.shape, cfg.gamma_precision.rate);
    }
    p.lambda_phi = sample_ordered_lambdas(cfg.lambda_phi1, cfg.lambda_phi2, rng);
    p.lambda_psi = sample_ordered_lambdas(cfg.lambda_psi1, cfg.lambda_psi2, rng);

    for (int j = 0; j < n_outcomes; ++j) {
      SurfaceParams& c = s.cells[i][j];
      c.alpha = rng.normal(p.alpha_pop, std::sqrt(p.sigma2_alpha));
      const auto phi = sample_knot_pair({1.0, p.lambda_phi[0], p.lambda_phi[1], 1.0}, dose_max, rng);
      const auto psi = sample_knot_pair({1.0, p.lambda_psi[0], p.lambda_psi[1], 1.0}, time_max, rng);
      c.dose = SplineComponent{phi[0], phi[1],
                               sample_coef(p.beta_pop, p.sigma2_beta, main_regions, rng), dose_max};
      c.time = SplineComponent{psi[0], psi[1],
                               sample_coef(p.gamma_pop, p.sigma2_gamma, main_regions, rng),
                               time_max};
      c.rho = rng.bernoulli(s.pi);
      if (c.rho) {
        const double dt_max = dose_max * time_max;
        const auto chi = sample_knot_pair(cfg.chi_prior, dt_max, rng);
        c.interaction = SplineComponent{
            chi[0], chi[1],
            sample_coef(splat(cfg.inter_coef.mean), splat(cfg.inter_coef.var), inter_regions, rng),
            dt_max};
      }
    }
  }
  s.validate(cfg);
  return s;
}

HierarchyParams sample_prior(const PriorConfig& cfg, int n_particles, int n_outcomes,
                             double dose_max, double time_max, std::uint64_t seed) {
  Rng rng(seed);
  return sample_prior(cfg, n_particles, n_outcomes, dose_max, time_max, rng);
}

}  // namespace toxsurf
