#include "toxsurf/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <limits>
#include <sstream>

#include "toxsurf/special.hpp"

namespace toxsurf {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr int kTiltBudget = 100000;

double comp_arg(const Record& r, Comp comp) {
  switch (comp) {
    case Comp::dose: return r.dose;
    case Comp::time: return r.time;
    default: return r.dose * r.time;
  }
}

const char* comp_knot_name(Comp comp) {
  switch (comp) {
    case Comp::dose: return "phi";
    case Comp::time: return "psi";
    default: return "chi";
  }
}

// Truncated-normal log density on [lo, hi].
double trunc_normal_logpdf(double x, double mean, double sd, double lo, double hi) {
  if (!(x >= lo && x <= hi)) return -kInf;
  const double z = special::norm_interval_prob(mean, sd, lo, hi);
  if (!(z > 0.0)) return -kInf;
  return special::normal_logpdf(x, mean, sd * sd) - std::log(z);
}

}  // namespace

void SamplerConfig::validate() const {
  if (n_burnin < 0 || n_samples < 0) throw std::invalid_argument("negative chain lengths");
  if (thin < 1) throw std::invalid_argument("thin must be >= 1");
  if (adapt_interval < 1) throw std::invalid_argument("adapt_interval must be >= 1");
  if (!(target_accept_lo > 0.0 && target_accept_lo < target_accept_hi && target_accept_hi < 1.0)) {
    throw std::invalid_argument("target acceptance band must satisfy 0 < lo < hi < 1");
  }
  if (!(initial_step_frac > 0.0)) throw std::invalid_argument("initial_step_frac must be positive");
  if (!(rj_move_rate >= 0.0 && rj_move_rate <= 1.0)) {
    throw std::invalid_argument("rj_move_rate must lie in [0,1]");
  }
}

Sampler::Sampler(const Dataset& data, const PriorConfig& prior, const SamplerConfig& cfg)
    : data_(data), prior_(prior), cfg_(cfg), rng_(cfg.seed) {
  cfg_.validate();
  prior_.validate();
  main_regions_ = free_coef_regions(prior_, false);
  inter_regions_ = free_coef_regions(prior_, true);

  const int I = data_.n_particles;
  const int J = data_.n_outcomes;
  cell_recs_.assign(I, std::vector<std::vector<int>>(J));
  particle_recs_.assign(I, {});
  outcome_recs_.assign(J, {});
  for (int r = 0; r < static_cast<int>(data_.records.size()); ++r) {
    const Record& rec = data_.records[r];
    cell_recs_[rec.particle][rec.outcome].push_back(r);
    particle_recs_[rec.particle].push_back(r);
    outcome_recs_[rec.outcome].push_back(r);
  }

  const double dt_max = data_.dose_max * data_.time_max;
  blocks_.resize(static_cast<std::size_t>(I) * J * 6);
  for (int i = 0; i < I; ++i) {
    for (int j = 0; j < J; ++j) {
      for (int c = 0; c < 3; ++c) {
        for (int which = 0; which < 2; ++which) {
          KnotBlockStats& b = blocks_[block_index(i, j, static_cast<Comp>(c), which)];
          std::ostringstream os;
          os << comp_knot_name(static_cast<Comp>(c)) << "[" << i + 1 << "," << j + 1 << "]."
             << which + 1;
          b.name = os.str();
          const double m = c == 0 ? data_.dose_max : (c == 1 ? data_.time_max : dt_max);
          b.width = cfg_.initial_step_frac * m;
        }
      }
    }
  }
}

int Sampler::block_index(int i, int j, Comp comp, int which) const {
  return ((i * data_.n_outcomes + j) * 3 + static_cast<int>(comp)) * 2 + which;
}

SplineComponent& Sampler::component(int i, int j, Comp comp) {
  SurfaceParams& c = state_.cells[i][j];
  switch (comp) {
    case Comp::dose: return c.dose;
    case Comp::time: return c.time;
    default: return *c.interaction;
  }
}

const SplineComponent& Sampler::component(int i, int j, Comp comp) const {
  const SurfaceParams& c = state_.cells[i][j];
  switch (comp) {
    case Comp::dose: return c.dose;
    case Comp::time: return c.time;
    default: return *c.interaction;
  }
}

void Sampler::initialize_from_prior() {
  set_state(sample_prior(prior_, data_.n_particles, data_.n_outcomes, data_.dose_max,
                         data_.time_max, rng_));
}

void Sampler::initialize(HierarchyParams warm_start) { set_state(std::move(warm_start)); }

void Sampler::set_state(HierarchyParams s) {
  if (s.n_particles() != data_.n_particles || s.n_outcomes() != data_.n_outcomes) {
    throw std::invalid_argument("state dimensions do not match dataset");
  }
  s.validate(prior_);
  state_ = std::move(s);
  rebuild_caches();
}

void Sampler::rebuild_caches() {
  const int n = static_cast<int>(data_.records.size());
  for (int c = 0; c < 3; ++c) {
    basis_[c].assign(n, Vec4{0.0, 0.0, 0.0, 0.0});
    value_[c].assign(n, 0.0);
  }
  for (int i = 0; i < data_.n_particles; ++i) {
    for (int j = 0; j < data_.n_outcomes; ++j) {
      refresh_component(i, j, Comp::dose);
      refresh_component(i, j, Comp::time);
      if (state_.cells[i][j].rho) refresh_component(i, j, Comp::interaction);
    }
  }
}

void Sampler::refresh_component(int i, int j, Comp comp) {
  const SplineComponent& sc = component(i, j, comp);
  const int c = static_cast<int>(comp);
  for (int r : cell_recs_[i][j]) {
    const Vec4 w = spline_basis(comp_arg(data_.records[r], comp), sc.knot1, sc.knot2, sc.domain_max);
    basis_[c][r] = w;
    value_[c][r] = w[0] * sc.coef[0] + w[1] * sc.coef[1] + w[2] * sc.coef[2] + w[3] * sc.coef[3];
  }
}

double Sampler::cell_weight(int i, int j) const {
  return state_.particles[i].tau / state_.sigma2_eps[j];
}

double Sampler::record_mean(int r) const {
  const Record& rec = data_.records[r];
  const SurfaceParams& cell = state_.cells[rec.particle][rec.outcome];
  double m = cell.alpha + value_[0][r] + value_[1][r];
  if (cell.rho) m += value_[2][r];
  return m;
}

double Sampler::log_likelihood_cached() const {
  double total = 0.0;
  for (int r = 0; r < static_cast<int>(data_.records.size()); ++r) {
    const Record& rec = data_.records[r];
    const double var = state_.sigma2_eps[rec.outcome] / state_.particles[rec.particle].tau;
    total += special::normal_logpdf(rec.y, record_mean(r), var);
  }
  return total;
}

double Sampler::log_posterior_current() const {
  return log_likelihood_cached() + log_prior(state_, prior_);
}

// ---------------------------------------------------------------------------
// Linear Gibbs block
// ---------------------------------------------------------------------------

double Sampler::redraw_cell_alpha(int i, int j) {
  SurfaceParams& cell = state_.cells[i][j];
  const ParticleParams& p = state_.particles[i];
  const double w = cell_weight(i, j);
  double sum_e = 0.0;
  long n = 0;
  for (int r : cell_recs_[i][j]) {
    double e = data_.records[r].y - value_[0][r] - value_[1][r];
    if (cell.rho) e -= value_[2][r];
    sum_e += e;
    ++n;
  }
  const double prec = n * w + 1.0 / p.sigma2_alpha;
  const double mean = (w * sum_e + p.alpha_pop / p.sigma2_alpha) / prec;
  cell.alpha = rng_.normal(mean, std::sqrt(1.0 / prec));
  return cell.alpha;
}

double Sampler::redraw_cell_coef(int i, int j, Comp comp, int coord) {
  const bool inter = comp == Comp::interaction;
  const auto& regions = inter ? inter_regions_ : main_regions_;
  auto it = std::find_if(regions.begin(), regions.end(),
                         [coord](const CoordRegion& r) { return r.idx == coord; });
  if (it == regions.end()) throw std::invalid_argument("coordinate is pinned, not sampled");
  const CoordRegion region = *it;

  const ParticleParams& p = state_.particles[i];
  double mu0;
  double v0;
  if (comp == Comp::dose) {
    mu0 = p.beta_pop[coord];
    v0 = p.sigma2_beta[coord];
  } else if (comp == Comp::time) {
    mu0 = p.gamma_pop[coord];
    v0 = p.sigma2_gamma[coord];
  } else {
    mu0 = prior_.inter_coef.mean;
    v0 = prior_.inter_coef.var;
  }

  SplineComponent& sc = component(i, j, comp);
  const int c = static_cast<int>(comp);
  const double w = cell_weight(i, j);
  const double old = sc.coef[coord];
  double ss = 0.0;
  double se = 0.0;
  for (int r : cell_recs_[i][j]) {
    const double s = basis_[c][r][coord];
    if (s == 0.0) continue;
    const double e = data_.records[r].y - record_mean(r) + s * old;
    ss += s * s;
    se += s * e;
  }
  const double prec = w * ss + 1.0 / v0;
  const double mean = (w * se + mu0 / v0) / prec;
  const double drawn = rng_.trunc_normal(mean, std::sqrt(1.0 / prec), region.lo, region.hi);
  sc.coef[coord] = drawn;
  for (int r : cell_recs_[i][j]) {
    const double s = basis_[c][r][coord];
    if (s != 0.0) value_[c][r] += s * (drawn - old);
  }
  return drawn;
}

double Sampler::redraw_pop_alpha(int i) {
  ParticleParams& p = state_.particles[i];
  const int J = data_.n_outcomes;
  double sum = 0.0;
  for (int j = 0; j < J; ++j) sum += state_.cells[i][j].alpha;
  const double prec = J / p.sigma2_alpha + 1.0 / prior_.alpha_pop.var;
  const double mean = (sum / p.sigma2_alpha + prior_.alpha_pop.mean / prior_.alpha_pop.var) / prec;
  p.alpha_pop = rng_.normal(mean, std::sqrt(1.0 / prec));
  return p.alpha_pop;
}

double Sampler::redraw_pop_coef(int i, Comp comp, int coord) {
  if (comp == Comp::interaction) throw std::invalid_argument("no population interaction mean");
  auto it = std::find_if(main_regions_.begin(), main_regions_.end(),
                         [coord](const CoordRegion& r) { return r.idx == coord; });
  if (it == main_regions_.end()) throw std::invalid_argument("coordinate is pinned, not sampled");
  const CoordRegion region = *it;

  ParticleParams& p = state_.particles[i];
  const int J = data_.n_outcomes;
  const bool dose = comp == Comp::dose;
  const double sigma2 = dose ? p.sigma2_beta[coord] : p.sigma2_gamma[coord];
  const NormalPrior& pop = dose ? prior_.beta_pop : prior_.gamma_pop;
  double sum = 0.0;
  for (int j = 0; j < J; ++j) {
    const SplineComponent& sc = dose ? state_.cells[i][j].dose : state_.cells[i][j].time;
    sum += sc.coef[coord];
  }
  const double prec = J / sigma2 + 1.0 / pop.var;
  const double mean = (sum / sigma2 + pop.mean / pop.var) / prec;
  const double sd = std::sqrt(1.0 / prec);
  const double sigma = std::sqrt(sigma2);

  // The cell coefficients are truncated normals located at this mean, so the
  // exact conditional carries the factor Z(x)^{-J} with
  // Z(x) = P(N(x, sigma2) in region). Z >= 1/2 on the region, which gives an
  // exact rejection sampler with acceptance (2 Z)^{-J} from the conjugate
  // truncated-normal envelope.
  for (int it2 = 0; it2 < kTiltBudget; ++it2) {
    const double x = rng_.trunc_normal(mean, sd, region.lo, region.hi);
    const double z = special::norm_interval_prob(x, sigma, region.lo, region.hi);
    if (std::log(rng_.uniform01()) < -J * std::log(2.0 * z)) {
      (dose ? p.beta_pop[coord] : p.gamma_pop[coord]) = x;
      return x;
    }
  }
  throw std::runtime_error("population coefficient redraw: rejection budget exhausted");
}

void Sampler::recenter_alpha(int i) {
  ParticleParams& p = state_.particles[i];
  // Collapsed draw of the population baseline: per cell, the mean residual
  // excluding alpha is normal about alpha_pop with variance
  // sigma2_alpha + 1/(n w); empty cells drop out.
  double prec = 1.0 / prior_.alpha_pop.var;
  double mean_acc = prior_.alpha_pop.mean / prior_.alpha_pop.var;
  for (int j = 0; j < data_.n_outcomes; ++j) {
    const auto& recs = cell_recs_[i][j];
    if (recs.empty()) continue;
    const SurfaceParams& cell = state_.cells[i][j];
    double sum_e = 0.0;
    for (int r : recs) {
      double e = data_.records[r].y - value_[0][r] - value_[1][r];
      if (cell.rho) e -= value_[2][r];
      sum_e += e;
    }
    const double n = static_cast<double>(recs.size());
    const double var_j = p.sigma2_alpha + 1.0 / (n * cell_weight(i, j));
    prec += 1.0 / var_j;
    mean_acc += (sum_e / n) / var_j;
  }
  p.alpha_pop = rng_.normal(mean_acc / prec, std::sqrt(1.0 / prec));
  for (int j = 0; j < data_.n_outcomes; ++j) redraw_cell_alpha(i, j);
}

bool Sampler::recenter_coef(int i, Comp comp, int coord) {
  auto it = std::find_if(main_regions_.begin(), main_regions_.end(),
                         [coord](const CoordRegion& r) { return r.idx == coord; });
  if (it == main_regions_.end()) throw std::invalid_argument("coordinate is pinned, not sampled");
  const CoordRegion region = *it;

  ParticleParams& p = state_.particles[i];
  const bool dose = comp == Comp::dose;
  const NormalPrior& pop_prior = dose ? prior_.beta_pop : prior_.gamma_pop;
  const double sigma = std::sqrt(dose ? p.sigma2_beta[coord] : p.sigma2_gamma[coord]);
  double& pop = dose ? p.beta_pop[coord] : p.gamma_pop[coord];

  const double pop_new =
      rng_.trunc_normal(pop_prior.mean, std::sqrt(pop_prior.var), region.lo, region.hi);
  const double shift = pop_new - pop;

  // Shifted cell coordinates must stay inside the sign region.
  for (int j = 0; j < data_.n_outcomes; ++j) {
    const SplineComponent& sc = dose ? state_.cells[i][j].dose : state_.cells[i][j].time;
    const double moved = sc.coef[coord] + shift;
    if (!(moved >= region.lo && moved <= region.hi)) return false;
  }

  // Population prior and proposal cancel; the cell kernels are shift
  // invariant, leaving their normalizers and the likelihood.
  const int J = data_.n_outcomes;
  double log_ratio =
      J * (std::log(special::norm_interval_prob(pop, sigma, region.lo, region.hi)) -
           std::log(special::norm_interval_prob(pop_new, sigma, region.lo, region.hi)));
  const int c = static_cast<int>(comp);
  for (int j = 0; j < J; ++j) {
    const double w = cell_weight(i, j);
    double dquad = 0.0;
    for (int r : cell_recs_[i][j]) {
      const double s = basis_[c][r][coord];
      if (s == 0.0) continue;
      const double res_old = data_.records[r].y - record_mean(r);
      const double res_new = res_old - s * shift;
      dquad += res_new * res_new - res_old * res_old;
    }
    log_ratio -= 0.5 * w * dquad;
  }
  if (std::log(rng_.uniform01()) >= log_ratio) return false;

  pop = pop_new;
  for (int j = 0; j < J; ++j) {
    SplineComponent& sc = dose ? state_.cells[i][j].dose : state_.cells[i][j].time;
    sc.coef[coord] += shift;
    for (int r : cell_recs_[i][j]) {
      const double s = basis_[c][r][coord];
      if (s != 0.0) value_[c][r] += s * shift;
    }
  }
  return true;
}

void Sampler::update_linear_block() {
  for (int i = 0; i < data_.n_particles; ++i) {
    for (int j = 0; j < data_.n_outcomes; ++j) {
      redraw_cell_alpha(i, j);
      for (const CoordRegion& r : main_regions_) {
        redraw_cell_coef(i, j, Comp::dose, r.idx);
        redraw_cell_coef(i, j, Comp::time, r.idx);
      }
      if (state_.cells[i][j].rho) {
        for (const CoordRegion& r : inter_regions_) {
          redraw_cell_coef(i, j, Comp::interaction, r.idx);
        }
      }
    }
    redraw_pop_alpha(i);
    for (const CoordRegion& r : main_regions_) {
      redraw_pop_coef(i, Comp::dose, r.idx);
      redraw_pop_coef(i, Comp::time, r.idx);
    }
    recenter_alpha(i);
    for (const CoordRegion& r : main_regions_) {
      recenter_coef(i, Comp::dose, r.idx);
      recenter_coef(i, Comp::time, r.idx);
    }
  }
}

// ---------------------------------------------------------------------------
// Scale Gibbs block
// ---------------------------------------------------------------------------

double Sampler::redraw_sigma2_eps(int j) {
  double rate = prior_.eps_precision.rate;
  long n = 0;
  for (int r : outcome_recs_[j]) {
    const Record& rec = data_.records[r];
    const double res = rec.y - record_mean(r);
    rate += 0.5 * state_.particles[rec.particle].tau * res * res;
    ++n;
  }
  const double shape = prior_.eps_precision.shape + 0.5 * n;
  const double p = std::max(rng_.gamma(shape, rate), 1e-300);
  state_.sigma2_eps[j] = 1.0 / p;
  return state_.sigma2_eps[j];
}

double Sampler::redraw_sigma2_alpha(int i) {
  ParticleParams& p = state_.particles[i];
  double rate = prior_.alpha_precision.rate;
  for (int j = 0; j < data_.n_outcomes; ++j) {
    const double d = state_.cells[i][j].alpha - p.alpha_pop;
    rate += 0.5 * d * d;
  }
  const double shape = prior_.alpha_precision.shape + 0.5 * data_.n_outcomes;
  p.sigma2_alpha = 1.0 / std::max(rng_.gamma(shape, rate), 1e-300);
  return p.sigma2_alpha;
}

double Sampler::redraw_sigma2_coef(int i, Comp comp, int coord) {
  if (comp == Comp::interaction) throw std::invalid_argument("interaction variance is fixed");
  auto it = std::find_if(main_regions_.begin(), main_regions_.end(),
                         [coord](const CoordRegion& r) { return r.idx == coord; });
  if (it == main_regions_.end()) throw std::invalid_argument("coordinate is pinned, not sampled");
  const CoordRegion region = *it;

  ParticleParams& p = state_.particles[i];
  const int J = data_.n_outcomes;
  const bool dose = comp == Comp::dose;
  const GammaPrior& g = dose ? prior_.beta_precision : prior_.gamma_precision;
  const double pop = dose ? p.beta_pop[coord] : p.gamma_pop[coord];
  double ss = 0.0;
  for (int j = 0; j < J; ++j) {
    const SplineComponent& sc = dose ? state_.cells[i][j].dose : state_.cells[i][j].time;
    const double d = sc.coef[coord] - pop;
    ss += d * d;
  }
  const double shape = g.shape + 0.5 * J;
  const double rate = g.rate + 0.5 * ss;

  // Same Z(.)^{-J} tilt as the population-mean conditional, here as a
  // function of the precision; exact rejection from the conjugate gamma.
  for (int it2 = 0; it2 < kTiltBudget; ++it2) {
    const double prec = std::max(rng_.gamma(shape, rate), 1e-300);
    const double z = special::norm_interval_prob(pop, std::sqrt(1.0 / prec), region.lo, region.hi);
    if (std::log(rng_.uniform01()) < -J * std::log(2.0 * z)) {
      (dose ? p.sigma2_beta[coord] : p.sigma2_gamma[coord]) = 1.0 / prec;
      return 1.0 / prec;
    }
  }
  throw std::runtime_error("coefficient variance redraw: rejection budget exhausted");
}

double Sampler::redraw_tau(int i) {
  ParticleParams& p = state_.particles[i];
  double quad = 0.0;
  long n = 0;
  for (int r : particle_recs_[i]) {
    const Record& rec = data_.records[r];
    const double res = rec.y - record_mean(r);
    quad += res * res / state_.sigma2_eps[rec.outcome];
    ++n;
  }
  const double shape = 0.5 * (state_.nu + n);
  const double rate = 0.5 * (state_.nu + quad);
  p.tau = std::max(rng_.gamma(shape, rate), 1e-300);
  return p.tau;
}

double Sampler::redraw_pi() {
  long inc = 0;
  for (const auto& row : state_.cells) {
    for (const SurfaceParams& c : row) inc += c.rho ? 1 : 0;
  }
  const long total = static_cast<long>(data_.n_particles) * data_.n_outcomes;
  state_.pi = rng_.beta(1.0 + inc, 1.0 + (total - inc));
  return state_.pi;
}

int Sampler::redraw_nu() {
  std::vector<double> log_w(prior_.nu_support.size(), 0.0);
  for (std::size_t k = 0; k < prior_.nu_support.size(); ++k) {
    const double half = 0.5 * prior_.nu_support[k];
    for (const ParticleParams& p : state_.particles) {
      log_w[k] += special::gamma_logpdf(p.tau, half, half);
    }
  }
  state_.nu = prior_.nu_support[rng_.categorical_from_log_weights(log_w)];
  return state_.nu;
}

double Sampler::redraw_lambda(int i, Comp comp, int which) {
  if (comp == Comp::interaction) throw std::invalid_argument("interaction knot rates are fixed");
  ParticleParams& p = state_.particles[i];
  const bool dose = comp == Comp::dose;
  auto& lambda = dose ? p.lambda_phi : p.lambda_psi;
  const double m = dose ? data_.dose_max : data_.time_max;
  const GammaPrior& g = which == 0 ? (dose ? prior_.lambda_phi1 : prior_.lambda_psi1)
                                   : (dose ? prior_.lambda_phi2 : prior_.lambda_psi2);
  // The ordered-pair knot density is log-linear in each rate, so the gamma
  // prior is conjugate; ordering truncates the draw.
  double rate = g.rate;
  for (int j = 0; j < data_.n_outcomes; ++j) {
    const SplineComponent& sc = dose ? state_.cells[i][j].dose : state_.cells[i][j].time;
    if (which == 0) {
      rate -= std::log((m - sc.knot1) / m);
    } else {
      rate -= std::log((sc.knot2 - sc.knot1) / (m - sc.knot1));
    }
  }
  const double shape = g.shape + data_.n_outcomes;
  const double lo = which == 0 ? 1.0 : lambda[0];
  const double hi = which == 0 ? lambda[1] : kInf;
  lambda[which] = rng_.trunc_gamma(shape, rate, lo, hi);
  return lambda[which];
}

void Sampler::update_scales() {
  for (int j = 0; j < data_.n_outcomes; ++j) redraw_sigma2_eps(j);
  for (int i = 0; i < data_.n_particles; ++i) {
    redraw_sigma2_alpha(i);
    for (const CoordRegion& r : main_regions_) {
      redraw_sigma2_coef(i, Comp::dose, r.idx);
      redraw_sigma2_coef(i, Comp::time, r.idx);
    }
    redraw_tau(i);
    redraw_lambda(i, Comp::dose, 0);
    redraw_lambda(i, Comp::dose, 1);
    redraw_lambda(i, Comp::time, 0);
    redraw_lambda(i, Comp::time, 1);
  }
  redraw_pi();
  redraw_nu();
}

// ---------------------------------------------------------------------------
// Knot Metropolis-Hastings
// ---------------------------------------------------------------------------

double Sampler::knot_prior_logpdf(int i, Comp comp, double k1, double k2) const {
  const ParticleParams& p = state_.particles[i];
  switch (comp) {
    case Comp::dose:
      return knot_pair_logpdf(k1, k2, {1.0, p.lambda_phi[0], p.lambda_phi[1], 1.0},
                              data_.dose_max);
    case Comp::time:
      return knot_pair_logpdf(k1, k2, {1.0, p.lambda_psi[0], p.lambda_psi[1], 1.0},
                              data_.time_max);
    default:
      return knot_pair_logpdf(k1, k2, prior_.chi_prior, data_.dose_max * data_.time_max);
  }
}

bool Sampler::mh_step_knot(int i, int j, Comp comp, int which) {
  if (comp == Comp::interaction && !state_.cells[i][j].rho) return false;
  SplineComponent& sc = component(i, j, comp);
  KnotBlockStats& blk = blocks_[block_index(i, j, comp, which)];

  const double m = sc.domain_max;
  const double slo = which == 0 ? 0.0 : sc.knot1;
  const double shi = which == 0 ? sc.knot2 : m;
  const double x0 = which == 0 ? sc.knot1 : sc.knot2;
  const double w = blk.width;

  blk.proposals++;
  blk.window_proposals++;
  if (post_burnin_) blk.post_proposals++;

  const double lo0 = std::max(slo, x0 - w);
  const double hi0 = std::min(shi, x0 + w);
  const double x1 = rng_.uniform(lo0, hi0);
  const double len0 = hi0 - lo0;
  const double len1 = std::min(shi, x1 + w) - std::max(slo, x1 - w);

  const double k1_new = which == 0 ? x1 : sc.knot1;
  const double k2_new = which == 0 ? sc.knot2 : x1;
  if (!(k2_new - k1_new > knot_gap_frac * m)) return false;  // degenerate pair

  double log_ratio = knot_prior_logpdf(i, comp, k1_new, k2_new) -
                     knot_prior_logpdf(i, comp, sc.knot1, sc.knot2) +
                     std::log(len0) - std::log(len1);
  if (log_ratio == -kInf) return false;

  // Likelihood change over this cell's records only.
  const int c = static_cast<int>(comp);
  const double wgt = cell_weight(i, j);
  double dquad = 0.0;
  scratch_basis_.clear();
  scratch_value_.clear();
  for (int r : cell_recs_[i][j]) {
    const Vec4 wb = spline_basis(comp_arg(data_.records[r], comp), k1_new, k2_new, m);
    const double v =
        wb[0] * sc.coef[0] + wb[1] * sc.coef[1] + wb[2] * sc.coef[2] + wb[3] * sc.coef[3];
    const double res_old = data_.records[r].y - record_mean(r);
    const double res_new = res_old - (v - value_[c][r]);
    dquad += res_new * res_new - res_old * res_old;
    scratch_basis_.push_back(wb);
    scratch_value_.push_back(v);
  }
  log_ratio -= 0.5 * wgt * dquad;

  if (std::log(rng_.uniform01()) >= log_ratio) return false;

  (which == 0 ? sc.knot1 : sc.knot2) = x1;
  std::size_t k = 0;
  for (int r : cell_recs_[i][j]) {
    basis_[c][r] = scratch_basis_[k];
    value_[c][r] = scratch_value_[k];
    ++k;
  }
  blk.accepts++;
  blk.window_accepts++;
  if (post_burnin_) blk.post_accepts++;
  return true;
}

bool Sampler::refresh_knots_from_prior(int i, int j, Comp comp) {
  if (comp == Comp::interaction && !state_.cells[i][j].rho) return false;
  SplineComponent& sc = component(i, j, comp);
  const ParticleParams& p = state_.particles[i];
  BivariateBetaParams prior_params = prior_.chi_prior;
  if (comp == Comp::dose) prior_params = {1.0, p.lambda_phi[0], p.lambda_phi[1], 1.0};
  if (comp == Comp::time) prior_params = {1.0, p.lambda_psi[0], p.lambda_psi[1], 1.0};
  const auto pair = sample_knot_pair(prior_params, sc.domain_max, rng_);

  const int c = static_cast<int>(comp);
  const double wgt = cell_weight(i, j);
  double dquad = 0.0;
  scratch_basis_.clear();
  scratch_value_.clear();
  for (int r : cell_recs_[i][j]) {
    const Vec4 wb = spline_basis(comp_arg(data_.records[r], comp), pair[0], pair[1],
                                 sc.domain_max);
    const double v =
        wb[0] * sc.coef[0] + wb[1] * sc.coef[1] + wb[2] * sc.coef[2] + wb[3] * sc.coef[3];
    const double res_old = data_.records[r].y - record_mean(r);
    const double res_new = res_old - (v - value_[c][r]);
    dquad += res_new * res_new - res_old * res_old;
    scratch_basis_.push_back(wb);
    scratch_value_.push_back(v);
  }
  if (std::log(rng_.uniform01()) >= -0.5 * wgt * dquad) return false;
  sc.knot1 = pair[0];
  sc.knot2 = pair[1];
  std::size_t k = 0;
  for (int r : cell_recs_[i][j]) {
    basis_[c][r] = scratch_basis_[k];
    value_[c][r] = scratch_value_[k];
    ++k;
  }
  return true;
}

void Sampler::update_knots() {
  for (int i = 0; i < data_.n_particles; ++i) {
    for (int j = 0; j < data_.n_outcomes; ++j) {
      mh_step_knot(i, j, Comp::dose, 0);
      mh_step_knot(i, j, Comp::dose, 1);
      mh_step_knot(i, j, Comp::time, 0);
      mh_step_knot(i, j, Comp::time, 1);
      if (state_.cells[i][j].rho) {
        mh_step_knot(i, j, Comp::interaction, 0);
        mh_step_knot(i, j, Comp::interaction, 1);
      }
      refresh_knots_from_prior(i, j, Comp::dose);
      refresh_knots_from_prior(i, j, Comp::time);
      refresh_knots_from_prior(i, j, Comp::interaction);
    }
  }
}

void Sampler::adapt_step_widths() {
  for (std::size_t idx = 0; idx < blocks_.size(); ++idx) {
    KnotBlockStats& b = blocks_[idx];
    if (b.window_proposals == 0) continue;
    const double rate = double(b.window_accepts) / double(b.window_proposals);
    if (rate < cfg_.target_accept_lo) {
      b.width *= 0.8;
    } else if (rate > cfg_.target_accept_hi) {
      b.width *= 1.25;
    }
    // Clamp against the block's knot domain.
    const int comp = static_cast<int>(idx / 2) % 3;
    const double m = comp == 0 ? data_.dose_max
                               : (comp == 1 ? data_.time_max : data_.dose_max * data_.time_max);
    b.width = std::min(std::max(b.width, 1e-6 * m), m);
    b.window_proposals = 0;
    b.window_accepts = 0;
  }
}

// ---------------------------------------------------------------------------
// Reversible-jump interaction move
// ---------------------------------------------------------------------------

namespace {

// Dense solve of a tiny symmetric system (at most 3 unknowns).
bool solve_small(int n, double m[3][3], const double v[3], double out[3]) {
  double a[3][4];
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) a[r][c] = m[r][c];
    a[r][n] = v[r];
  }
  for (int col = 0; col < n; ++col) {
    int piv = col;
    for (int r = col + 1; r < n; ++r) {
      if (std::fabs(a[r][col]) > std::fabs(a[piv][col])) piv = r;
    }
    if (std::fabs(a[piv][col]) < 1e-100) return false;
    if (piv != col) {
      for (int c = 0; c <= n; ++c) std::swap(a[piv][c], a[col][c]);
    }
    for (int r = 0; r < n; ++r) {
      if (r == col) continue;
      const double f = a[r][col] / a[col][col];
      for (int c = col; c <= n; ++c) a[r][c] -= f * a[col][c];
    }
  }
  for (int r = 0; r < n; ++r) out[r] = a[r][n] / a[r][r];
  return true;
}

}  // namespace

Sampler::RjProposal Sampler::build_rj_proposal(int i, int j) const {
  RjProposal prop;
  const auto& recs = cell_recs_[i][j];
  const double dt_max = data_.dose_max * data_.time_max;
  const int nf = static_cast<int>(inter_regions_.size());

  if (recs.empty()) {
    prop.ok = true;
    prop.from_prior = true;
    return prop;
  }

  // Residuals with no interaction term.
  const SurfaceParams& cell = state_.cells[i][j];
  std::vector<double> e;
  e.reserve(recs.size());
  for (int r : recs) {
    e.push_back(data_.records[r].y - cell.alpha - value_[0][r] - value_[1][r]);
  }

  // Profile search: candidate knot pairs on a coarse grid, conditional least
  // squares for the free coefficients, keep the best residual sum of squares.
  const double noise_var = state_.sigma2_eps[j] / state_.particles[i].tau;
  double best_rss = kInf;
  bool found = false;
  for (int a = 1; a <= 8; ++a) {
    for (int b = a + 1; b <= 8; ++b) {
      const double k1 = a * dt_max / 9.0;
      const double k2 = b * dt_max / 9.0;
      double mtx[3][3] = {{0}};
      double rhs[3] = {0};
      std::vector<Vec4> rows(recs.size());
      for (std::size_t k = 0; k < recs.size(); ++k) {
        rows[k] = spline_basis(comp_arg(data_.records[recs[k]], Comp::interaction), k1, k2, dt_max);
        for (int u = 0; u < nf; ++u) {
          const double su = rows[k][inter_regions_[u].idx];
          rhs[u] += su * e[k];
          for (int v = 0; v <= u; ++v) mtx[u][v] += su * rows[k][inter_regions_[v].idx];
        }
      }
      double ridge = 0.0;
      for (int u = 0; u < nf; ++u) ridge += mtx[u][u];
      ridge = std::max(ridge * 1e-8 / nf, 1e-12);
      for (int u = 0; u < nf; ++u) {
        mtx[u][u] += ridge;
        for (int v = u + 1; v < nf; ++v) mtx[u][v] = mtx[v][u];
      }
      double sol[3];
      if (!solve_small(nf, mtx, rhs, sol)) continue;
      Vec4 coef{0.0, 0.0, 0.0, 0.0};
      for (int u = 0; u < nf; ++u) {
        coef[inter_regions_[u].idx] =
            std::min(std::max(sol[u], inter_regions_[u].lo), inter_regions_[u].hi);
      }
      double rss = 0.0;
      for (std::size_t k = 0; k < recs.size(); ++k) {
        double fit = 0.0;
        for (int u = 0; u < nf; ++u) {
          fit += rows[k][inter_regions_[u].idx] * coef[inter_regions_[u].idx];
        }
        const double d = e[k] - fit;
        rss += d * d;
      }
      if (rss < best_rss) {
        best_rss = rss;
        found = true;
        prop.knot_center = {k1, k2};
        prop.coef_center = coef;
        // Conditional least-squares standard errors for the coefficient
        // proposal widths.
        for (int u = 0; u < nf; ++u) {
          double unit[3] = {0, 0, 0};
          unit[u] = 1.0;
          double col[3];
          double se = std::sqrt(prior_.inter_coef.var);
          if (solve_small(nf, mtx, unit, col) && col[u] > 0.0) {
            se = std::sqrt(noise_var * col[u]);
          }
          prop.coef_sd[inter_regions_[u].idx] = std::max(se, 1e-3);
        }
      }
    }
  }
  if (!found) return prop;  // ok stays false: move will be skipped
  prop.ok = true;
  prop.knot_sd = 0.1 * dt_max;
  return prop;
}

void Sampler::rj_interaction_move() {
  const int I = data_.n_particles;
  const int J = data_.n_outcomes;
  const int i = static_cast<int>(rng_.uniform_index(I));
  const int j = static_cast<int>(rng_.uniform_index(J));
  SurfaceParams& cell = state_.cells[i][j];
  const double dt_max = data_.dose_max * data_.time_max;
  const double prior_odds = std::log(state_.pi) - std::log1p(-state_.pi);
  const double w = cell_weight(i, j);

  const RjProposal prop = build_rj_proposal(i, j);
  if (!prop.ok) {
    rj_.skipped++;
    return;
  }

  // Log density of the proposal kernel at a given interaction configuration.
  auto proposal_logpdf = [&](const SplineComponent& h) {
    if (prop.from_prior) {
      double lq = knot_pair_logpdf(h.knot1, h.knot2, prior_.chi_prior, dt_max);
      for (const CoordRegion& r : inter_regions_) {
        lq += trunc_normal_logpdf(h.coef[r.idx], prior_.inter_coef.mean,
                                  std::sqrt(prior_.inter_coef.var), r.lo, r.hi);
      }
      return lq;
    }
    double lq = trunc_normal_logpdf(h.knot1, prop.knot_center[0], prop.knot_sd, 0.0, dt_max);
    lq += trunc_normal_logpdf(h.knot2, prop.knot_center[1], prop.knot_sd, h.knot1, dt_max);
    for (const CoordRegion& r : inter_regions_) {
      lq += trunc_normal_logpdf(h.coef[r.idx], prop.coef_center[r.idx], prop.coef_sd[r.idx], r.lo,
                                r.hi);
    }
    return lq;
  };

  auto prior_logpdf = [&](const SplineComponent& h) {
    double lp = knot_pair_logpdf(h.knot1, h.knot2, prior_.chi_prior, dt_max);
    for (const CoordRegion& r : inter_regions_) {
      lp += trunc_normal_logpdf(h.coef[r.idx], prior_.inter_coef.mean,
                                std::sqrt(prior_.inter_coef.var), r.lo, r.hi);
    }
    return lp;
  };

  // Likelihood log-ratio of (with h) over (without h), with h values given
  // per record.
  auto loglik_gain = [&](const std::vector<double>& h_vals) {
    double dq = 0.0;
    std::size_t k = 0;
    for (int r : cell_recs_[i][j]) {
      const double e = data_.records[r].y - cell.alpha - value_[0][r] - value_[1][r];
      const double with_h = e - h_vals[k];
      dq += with_h * with_h - e * e;
      ++k;
    }
    return -0.5 * w * dq;
  };

  if (!cell.rho) {
    rj_.birth_attempts++;
    SplineComponent h;
    h.domain_max = dt_max;
    if (prop.from_prior) {
      const auto knots = sample_knot_pair(prior_.chi_prior, dt_max, rng_);
      h.knot1 = knots[0];
      h.knot2 = knots[1];
      for (const CoordRegion& r : inter_regions_) {
        h.coef[r.idx] = rng_.trunc_normal(prior_.inter_coef.mean, std::sqrt(prior_.inter_coef.var),
                                          r.lo, r.hi);
      }
    } else {
      h.knot1 = rng_.trunc_normal(prop.knot_center[0], prop.knot_sd, 0.0, dt_max);
      h.knot2 = rng_.trunc_normal(prop.knot_center[1], prop.knot_sd, h.knot1, dt_max);
      for (const CoordRegion& r : inter_regions_) {
        h.coef[r.idx] = rng_.trunc_normal(prop.coef_center[r.idx], prop.coef_sd[r.idx], r.lo, r.hi);
      }
    }
    if (!(h.knot2 - h.knot1 > knot_gap_frac * dt_max)) return;  // degenerate; prior mass zero

    std::vector<double> h_vals;
    h_vals.reserve(cell_recs_[i][j].size());
    std::vector<Vec4> h_rows;
    h_rows.reserve(cell_recs_[i][j].size());
    for (int r : cell_recs_[i][j]) {
      const Vec4 wb =
          spline_basis(comp_arg(data_.records[r], Comp::interaction), h.knot1, h.knot2, dt_max);
      h_rows.push_back(wb);
      h_vals.push_back(wb[0] * h.coef[0] + wb[1] * h.coef[1] + wb[2] * h.coef[2] +
                       wb[3] * h.coef[3]);
    }
    const double log_rb =
        loglik_gain(h_vals) + prior_logpdf(h) - proposal_logpdf(h) + prior_odds;
    if (std::log(rng_.uniform01()) < log_rb) {
      cell.rho = true;
      cell.interaction = h;
      std::size_t k = 0;
      for (int r : cell_recs_[i][j]) {
        basis_[2][r] = h_rows[k];
        value_[2][r] = h_vals[k];
        ++k;
      }
      rj_.birth_accepts++;
    }
  } else {
    rj_.death_attempts++;
    const SplineComponent& h = *cell.interaction;
    std::vector<double> h_vals;
    h_vals.reserve(cell_recs_[i][j].size());
    for (int r : cell_recs_[i][j]) h_vals.push_back(value_[2][r]);
    // Acceptance is the reciprocal of the birth ratio evaluated at the
    // component being removed.
    const double log_rb =
        loglik_gain(h_vals) + prior_logpdf(h) - proposal_logpdf(h) + prior_odds;
    if (std::log(rng_.uniform01()) < -log_rb) {
      cell.rho = false;
      cell.interaction.reset();
      rj_.death_accepts++;
    }
  }
}

void Sampler::iterate() {
  if (rng_.uniform01() < cfg_.rj_move_rate) rj_interaction_move();
  update_knots();
  update_linear_block();
  update_scales();
}

// ---------------------------------------------------------------------------
// Chain driver
// ---------------------------------------------------------------------------

ChainOutput run_chain(const Dataset& data, const PriorConfig& prior, const SamplerConfig& cfg,
                      const std::optional<HierarchyParams>& warm_start, const DrawSink& sink) {
  cfg.validate();
  Sampler sampler(data, prior, cfg);

  ChainOutput out;
  out.config = cfg;
  out.complete = false;

  auto fail = [&](long iter, const char* block, const std::string& what) -> SamplerError {
    out.telemetry.knot_blocks = sampler.knot_blocks();
    out.telemetry.rj = sampler.rj_stats();
    return SamplerError(iter, block, what, std::move(out));
  };

  try {
    if (warm_start) {
      sampler.initialize(*warm_start);
    } else {
      sampler.initialize_from_prior();
    }
  } catch (const std::exception& ex) {
    throw fail(-1, "initialization", ex.what());
  }

  const long total = cfg.n_burnin + cfg.n_samples * cfg.thin;
  out.draws.reserve(cfg.n_samples);
  out.telemetry.log_posterior_trace.reserve(total);

  for (long iter = 0; iter < total; ++iter) {
    if (iter == cfg.n_burnin) sampler.begin_post_burnin();

    const char* block = "rjmcmc_interaction_move";
    try {
      if (sampler.rng().uniform01() < cfg.rj_move_rate) sampler.rj_interaction_move();
      block = "mh_update_knots";
      sampler.update_knots();
      block = "gibbs_update_linear_block";
      sampler.update_linear_block();
      block = "gibbs_update_scales";
      sampler.update_scales();
    } catch (const std::exception& ex) {
      throw fail(iter, block, ex.what());
    }

    const double lp = sampler.log_posterior_current();
    if (!std::isfinite(lp)) throw fail(iter, "log_posterior", "non-finite log posterior");
    out.telemetry.log_posterior_trace.push_back(lp);

    if (iter < cfg.n_burnin) {
      if ((iter + 1) % cfg.adapt_interval == 0) sampler.adapt_step_widths();
    } else if ((iter - cfg.n_burnin + 1) % cfg.thin == 0) {
      try {
        sampler.state().validate(prior);
      } catch (const std::exception& ex) {
        throw fail(iter, "snapshot_validation", ex.what());
      }
      out.draws.push_back(sampler.state());
      if (sink) sink(out.draws.back(), iter);
    }
  }

  out.telemetry.knot_blocks = sampler.knot_blocks();
  out.telemetry.rj = sampler.rj_stats();
  out.complete = true;
  return out;
}

std::vector<ChainOutput> run_chains(const Dataset& data, const PriorConfig& prior,
                                    const SamplerConfig& cfg, int n_chains,
                                    const std::vector<DrawSink>& sinks) {
  if (n_chains < 1) throw std::invalid_argument("need at least one chain");
  std::vector<std::future<ChainOutput>> futures;
  futures.reserve(n_chains);
  for (int c = 0; c < n_chains; ++c) {
    SamplerConfig chain_cfg = cfg;
    chain_cfg.seed = Rng::split_seed(cfg.seed, static_cast<std::uint64_t>(c));
    DrawSink sink = c < static_cast<int>(sinks.size()) ? sinks[c] : nullptr;
    futures.push_back(std::async(std::launch::async, [&data, &prior, chain_cfg, sink]() {
      return run_chain(data, prior, chain_cfg, std::nullopt, sink);
    }));
  }
  std::vector<ChainOutput> outs;
  outs.reserve(n_chains);
  for (auto& f : futures) outs.push_back(f.get());
  return outs;
}

}  // namespace toxsurf
