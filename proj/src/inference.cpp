#include "toxsurf/inference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "toxsurf/special.hpp"

namespace toxsurf {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();

void require_nonempty(const std::vector<HierarchyParams>& draws) {
  if (draws.empty()) throw std::invalid_argument("empty chain: no draws to summarize");
}

void require_grid_in_domain(const EvalGrid& grid, const HierarchyParams& s) {
  for (double d : grid.doses) {
    if (!(d >= 0.0 && d <= s.dose_max)) throw std::invalid_argument("dose grid outside [0, D]");
  }
  for (double t : grid.times) {
    if (!(t >= 0.0 && t <= s.time_max)) throw std::invalid_argument("time grid outside [0, T]");
  }
}
}  // namespace

double quantile_type7(const std::vector<double>& sorted, double p) {
  if (sorted.empty()) throw std::invalid_argument("quantile of empty sample");
  const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
  const std::size_t lo = static_cast<std::size_t>(h);
  if (lo + 1 >= sorted.size()) return sorted.back();
  return sorted[lo] + (h - lo) * (sorted[lo + 1] - sorted[lo]);
}

Summary summarize_draws(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("summary of empty sample");
  Summary s;
  double acc = 0.0;
  for (double v : values) acc += v;
  s.mean = acc / values.size();
  std::sort(values.begin(), values.end());
  s.median = quantile_type7(values, 0.5);
  s.q025 = quantile_type7(values, 0.025);
  s.q975 = quantile_type7(values, 0.975);
  return s;
}

EvalGrid EvalGrid::uniform(double dose_max, double time_max, int n) {
  if (n < 2) throw std::invalid_argument("evaluation grid needs at least 2 points per axis");
  EvalGrid g;
  g.doses.resize(n);
  g.times.resize(n);
  for (int k = 0; k < n; ++k) {
    g.doses[k] = dose_max * k / (n - 1);
    g.times[k] = time_max * k / (n - 1);
  }
  return g;
}

RiskSummary risk_parameters(const std::vector<HierarchyParams>& draws, const EvalGrid& grid) {
  require_nonempty(draws);
  require_grid_in_domain(grid, draws.front());
  const int I = draws.front().n_particles();
  const int J = draws.front().n_outcomes();
  const std::size_t N = draws.size();

  RiskSummary out;
  out.time_grid = grid.times;
  for (int i = 0; i < I; ++i) {
    for (int j = 0; j < J; ++j) {
      RiskCell cell;
      cell.particle = i;
      cell.outcome = j;
      std::vector<double> msd, mst, dslope, tslope, mmax;
      msd.reserve(N);
      mst.reserve(N);
      dslope.reserve(N);
      tslope.reserve(N);
      mmax.reserve(N);
      std::vector<std::vector<double>> cmsd(grid.times.size());
      double inc = 0.0;
      for (const HierarchyParams& s : draws) {
        const SurfaceParams& c = s.cells[i][j];
        msd.push_back(c.dose.knot1);
        mst.push_back(c.time.knot1);
        dslope.push_back(c.dose.coef[2] / (c.dose.knot2 - c.dose.knot1));
        tslope.push_back(c.time.coef[2] / (c.time.knot2 - c.time.knot1));
        inc += c.rho ? 1.0 : 0.0;
        double mx = -kInf;
        for (double d : grid.doses) {
          for (double t : grid.times) {
            mx = std::max(mx, eval_surface(d, t, c));
          }
        }
        mmax.push_back(mx);
        for (std::size_t k = 0; k < grid.times.size(); ++k) {
          const double t = grid.times[k];
          double v = c.dose.knot1;
          if (c.rho && t > 0.0) v = std::min(v, c.interaction->knot1 / t);
          cmsd[k].push_back(v);
        }
      }
      cell.maximal_safe_dose = summarize_draws(std::move(msd));
      cell.maximal_safe_time = summarize_draws(std::move(mst));
      cell.overall_dose_slope = summarize_draws(std::move(dslope));
      cell.overall_time_slope = summarize_draws(std::move(tslope));
      cell.maximal_response = summarize_draws(std::move(mmax));
      cell.inclusion_probability = inc / static_cast<double>(N);
      cell.conditional_msd.reserve(cmsd.size());
      for (auto& v : cmsd) cell.conditional_msd.push_back(summarize_draws(std::move(v)));
      out.cells.push_back(std::move(cell));
    }
  }
  return out;
}

SurfaceSummary surface_summary(const std::vector<HierarchyParams>& draws, const EvalGrid& grid) {
  require_nonempty(draws);
  require_grid_in_domain(grid, draws.front());
  const int I = draws.front().n_particles();
  const int J = draws.front().n_outcomes();
  const std::size_t N = draws.size();
  const std::size_t nt = grid.times.size();

  SurfaceSummary out;
  out.grid = grid;
  for (int i = 0; i < I; ++i) {
    for (int j = 0; j < J; ++j) {
      SurfaceCellSummary cell;
      cell.particle = i;
      cell.outcome = j;
      const std::size_t npts = grid.doses.size() * nt;
      cell.mean.resize(npts);
      cell.median.resize(npts);
      cell.q025.resize(npts);
      cell.q975.resize(npts);
      // One dose row at a time keeps the draws x grid workspace small.
      std::vector<std::vector<double>> row(nt, std::vector<double>(N));
      for (std::size_t di = 0; di < grid.doses.size(); ++di) {
        for (std::size_t n = 0; n < N; ++n) {
          const SurfaceParams& c = draws[n].cells[i][j];
          for (std::size_t ti = 0; ti < nt; ++ti) {
            row[ti][n] = eval_surface(grid.doses[di], grid.times[ti], c);
          }
        }
        for (std::size_t ti = 0; ti < nt; ++ti) {
          const Summary s = summarize_draws(row[ti]);
          const std::size_t at = di * nt + ti;
          cell.mean[at] = s.mean;
          cell.median[at] = s.median;
          cell.q025[at] = s.q025;
          cell.q975[at] = s.q975;
        }
      }
      out.cells.push_back(std::move(cell));
    }
  }
  return out;
}

namespace {

// Pointwise summaries plus the 95% simultaneous band from the empirical
// quantile of the max standardized deviation across the grid.
CurveSummary summarize_curve(std::vector<std::vector<double>>& values_per_point,
                             const std::vector<double>& x) {
  CurveSummary c;
  c.x = x;
  const std::size_t npts = x.size();
  const std::size_t N = values_per_point.empty() ? 0 : values_per_point.front().size();
  std::vector<double> mean(npts), sd(npts);
  for (std::size_t k = 0; k < npts; ++k) {
    double m = 0.0;
    for (double v : values_per_point[k]) m += v;
    m /= N;
    double ss = 0.0;
    for (double v : values_per_point[k]) ss += (v - m) * (v - m);
    mean[k] = m;
    sd[k] = N > 1 ? std::sqrt(ss / (N - 1)) : 0.0;
  }
  std::vector<double> max_dev(N, 0.0);
  for (std::size_t k = 0; k < npts; ++k) {
    if (sd[k] < 1e-12) continue;
    for (std::size_t n = 0; n < N; ++n) {
      max_dev[n] = std::max(max_dev[n], std::fabs(values_per_point[k][n] - mean[k]) / sd[k]);
    }
  }
  std::sort(max_dev.begin(), max_dev.end());
  c.sim_multiplier = quantile_type7(max_dev, 0.95);
  for (std::size_t k = 0; k < npts; ++k) {
    Summary s = summarize_draws(values_per_point[k]);
    c.mean.push_back(s.mean);
    c.median.push_back(s.median);
    c.q025.push_back(s.q025);
    c.q975.push_back(s.q975);
    c.sim_lo.push_back(mean[k] - c.sim_multiplier * sd[k]);
    c.sim_hi.push_back(mean[k] + c.sim_multiplier * sd[k]);
  }
  return c;
}

}  // namespace

std::vector<CurveSummary> component_curves(const std::vector<HierarchyParams>& draws,
                                           const EvalGrid& grid) {
  require_nonempty(draws);
  require_grid_in_domain(grid, draws.front());
  const int I = draws.front().n_particles();
  const int J = draws.front().n_outcomes();
  const double dt_max = draws.front().dose_max * draws.front().time_max;
  std::vector<double> dt_grid(grid.doses.size());
  for (std::size_t k = 0; k < dt_grid.size(); ++k) {
    dt_grid[k] = dt_max * k / (dt_grid.size() - 1.0);
  }

  std::vector<CurveSummary> out;
  for (int i = 0; i < I; ++i) {
    for (int j = 0; j < J; ++j) {
      for (char comp : {'f', 'g', 'h'}) {
        const std::vector<double>& x =
            comp == 'f' ? grid.doses : (comp == 'g' ? grid.times : dt_grid);
        std::vector<std::vector<double>> vals(x.size());
        std::size_t used = 0;
        for (const HierarchyParams& s : draws) {
          const SurfaceParams& cell = s.cells[i][j];
          const SplineComponent* sc = nullptr;
          if (comp == 'f') sc = &cell.dose;
          if (comp == 'g') sc = &cell.time;
          if (comp == 'h') sc = cell.rho ? &*cell.interaction : nullptr;
          if (!sc) continue;
          ++used;
          for (std::size_t k = 0; k < x.size(); ++k) {
            vals[k].push_back(eval_component(x[k], *sc));
          }
        }
        if (used == 0) continue;  // interaction absent in every draw
        CurveSummary c = summarize_curve(vals, x);
        c.particle = i;
        c.outcome = j;
        c.component = comp;
        c.include_fraction = static_cast<double>(used) / draws.size();
        out.push_back(std::move(c));
      }
    }
  }
  return out;
}

SafeExposureMap safe_exposure_map(const std::vector<HierarchyParams>& draws,
                                  const EvalGrid& grid) {
  require_nonempty(draws);
  require_grid_in_domain(grid, draws.front());
  const int I = draws.front().n_particles();
  const int J = draws.front().n_outcomes();
  const std::size_t N = draws.size();
  const std::size_t nt = grid.times.size();

  SafeExposureMap out;
  out.grid = grid;
  for (int i = 0; i < I; ++i) {
    for (int j = 0; j < J; ++j) {
      SafeExposureCell cell;
      cell.particle = i;
      cell.outcome = j;
      cell.median_rel.resize(grid.doses.size() * nt);
      std::vector<std::vector<double>> row(nt, std::vector<double>(N));
      for (std::size_t di = 0; di < grid.doses.size(); ++di) {
        for (std::size_t n = 0; n < N; ++n) {
          const SurfaceParams& c = draws[n].cells[i][j];
          for (std::size_t ti = 0; ti < nt; ++ti) {
            row[ti][n] = eval_surface(grid.doses[di], grid.times[ti], c) - c.alpha;
          }
        }
        for (std::size_t ti = 0; ti < nt; ++ti) {
          std::sort(row[ti].begin(), row[ti].end());
          cell.median_rel[di * nt + ti] = quantile_type7(row[ti], 0.5);
        }
      }
      out.cells.push_back(std::move(cell));
    }
  }
  return out;
}

PitResult pit_diagnostic(const std::vector<HierarchyParams>& draws, const Dataset& data,
                         int n_bins) {
  require_nonempty(draws);
  if (n_bins < 2) throw std::invalid_argument("need at least 2 PIT bins");
  PitResult out;
  out.pit.reserve(data.records.size());
  out.counts.assign(n_bins, 0);
  for (const Record& r : data.records) {
    double acc = 0.0;
    for (const HierarchyParams& s : draws) {
      const double m = eval_surface(r.dose, r.time, s.cells[r.particle][r.outcome]);
      const double sd = std::sqrt(s.sigma2_eps[r.outcome] / s.particles[r.particle].tau);
      acc += special::norm_cdf((r.y - m) / sd);
    }
    const double pit = acc / draws.size();
    out.pit.push_back(pit);
    int bin = static_cast<int>(pit * n_bins);
    bin = std::min(std::max(bin, 0), n_bins - 1);
    out.counts[bin]++;
  }
  const double expected = static_cast<double>(data.records.size()) / n_bins;
  double chisq = 0.0;
  for (long c : out.counts) {
    const double d = c - expected;
    chisq += d * d / expected;
  }
  out.chisq = chisq;
  out.df = n_bins - 1;
  out.p_value = special::chi_square_sf(chisq, out.df);
  return out;
}

std::vector<PpcCell> posterior_predictive_mean_check(const std::vector<HierarchyParams>& draws,
                                                     const Dataset& data, std::uint64_t seed) {
  require_nonempty(draws);
  const int I = data.n_particles;
  const int J = data.n_outcomes;
  Rng rng(seed);

  std::vector<std::vector<std::vector<int>>> cell_recs(I, std::vector<std::vector<int>>(J));
  for (int r = 0; r < static_cast<int>(data.records.size()); ++r) {
    cell_recs[data.records[r].particle][data.records[r].outcome].push_back(r);
  }

  std::vector<PpcCell> out;
  for (int i = 0; i < I; ++i) {
    for (int j = 0; j < J; ++j) {
      const auto& recs = cell_recs[i][j];
      PpcCell cell;
      cell.particle = i;
      cell.outcome = j;
      if (recs.empty()) {
        out.push_back(cell);
        continue;
      }
      double emp = 0.0;
      for (int r : recs) emp += data.records[r].y;
      cell.empirical = emp / recs.size();

      std::vector<double> rep_means;
      rep_means.reserve(draws.size());
      for (const HierarchyParams& s : draws) {
        const SurfaceParams& c = s.cells[i][j];
        const double sd = std::sqrt(s.sigma2_eps[j] / s.particles[i].tau);
        double acc = 0.0;
        for (int r : recs) {
          acc += eval_surface(data.records[r].dose, data.records[r].time, c) + sd * rng.normal();
        }
        rep_means.push_back(acc / recs.size());
      }
      const Summary s = summarize_draws(std::move(rep_means));
      cell.lo = s.q025;
      cell.hi = s.q975;
      cell.mean = s.mean;
      cell.inside = cell.empirical >= cell.lo && cell.empirical <= cell.hi;
      out.push_back(cell);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Convergence diagnostics
// ---------------------------------------------------------------------------

namespace {

struct ParamSeries {
  std::string name;
  double cond_fraction = 1.0;
  std::vector<std::vector<double>> per_chain;  // usable draws per chain
};

double variance(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  double m = 0.0;
  for (double x : v) m += x;
  m /= v.size();
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return ss / (v.size() - 1);
}

double mean_of(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m += x;
  return v.empty() ? 0.0 : m / v.size();
}

// rhat = sqrt(1 + B/W): B across chain means, W across split-half variances.
// A single chain is diagnosed by treating its two halves as chains.
double compute_rhat(const std::vector<std::vector<double>>& chains) {
  std::vector<std::vector<double>> units;
  if (chains.size() == 1) {
    const auto& c = chains.front();
    const std::size_t h = c.size() / 2;
    units.push_back({c.begin(), c.begin() + h});
    units.push_back({c.begin() + h, c.end()});
  } else {
    units = chains;
  }
  std::vector<double> means;
  double w = 0.0;
  int w_n = 0;
  for (const auto& u : units) {
    means.push_back(mean_of(u));
    const std::size_t h = u.size() / 2;
    if (h >= 2) {
      w += variance({u.begin(), u.begin() + h});
      w += variance({u.begin() + h, u.end()});
      w_n += 2;
    } else {
      w += variance(u);
      w_n += 1;
    }
  }
  w /= std::max(w_n, 1);
  const double b = variance(means);
  if (w <= 0.0) return b > 0.0 ? kInf : 1.0;
  return std::sqrt(1.0 + b / w);
}

// Effective sample size via per-chain autocovariances combined with the
// between-chain variance, truncated by Geyer's initial positive-pair rule.
double compute_ess(const std::vector<std::vector<double>>& chains) {
  std::size_t n = std::numeric_limits<std::size_t>::max();
  for (const auto& c : chains) n = std::min(n, c.size());
  if (n < 4) return 0.0;
  const std::size_t m = chains.size();

  std::vector<std::vector<double>> acov(m);
  std::vector<double> chain_mean(m), chain_var(m);
  double w = 0.0;
  for (std::size_t c = 0; c < m; ++c) {
    std::vector<double> x(chains[c].begin(), chains[c].begin() + n);
    chain_mean[c] = mean_of(x);
    acov[c].resize(n, 0.0);
    for (std::size_t t = 0; t < n; ++t) {
      double s = 0.0;
      for (std::size_t k = 0; k + t < n; ++k) {
        s += (x[k] - chain_mean[c]) * (x[k + t] - chain_mean[c]);
      }
      acov[c][t] = s / n;
    }
    chain_var[c] = acov[c][0] * n / (n - 1.0);
    w += chain_var[c];
  }
  w /= m;
  double b_over_n = 0.0;
  if (m > 1) b_over_n = variance(chain_mean);
  const double var_plus = w * (n - 1.0) / n + b_over_n;
  if (var_plus <= 0.0) return 0.0;

  double tau = 1.0;
  double prev_pair = kInf;
  for (std::size_t t = 1; t + 1 < n; t += 2) {
    double rho_t = 0.0, rho_t1 = 0.0;
    for (std::size_t c = 0; c < m; ++c) {
      rho_t += acov[c][t];
      rho_t1 += acov[c][t + 1];
    }
    rho_t = 1.0 - (w - rho_t / m) / var_plus;
    rho_t1 = 1.0 - (w - rho_t1 / m) / var_plus;
    double pair = rho_t + rho_t1;
    if (pair < 0.0) break;
    pair = std::min(pair, prev_pair);  // enforce monotone decrease
    prev_pair = pair;
    tau += 2.0 * pair;
  }
  return static_cast<double>(m * n) / tau;
}

void add_value(std::vector<ParamSeries>& out, std::size_t& cursor, const std::string& name,
               std::size_t chain_idx, std::size_t n_chains, double value, bool present) {
  if (cursor == out.size()) {
    ParamSeries p;
    p.name = name;
    p.per_chain.resize(n_chains);
    out.push_back(std::move(p));
  }
  if (present) out[cursor].per_chain[chain_idx].push_back(value);
  ++cursor;
}

}  // namespace

std::vector<ConvergenceParam> convergence_stats(const std::vector<ChainOutput>& chains) {
  if (chains.empty()) throw std::invalid_argument("convergence_stats needs at least one chain");
  const std::size_t M = chains.size();

  std::vector<ParamSeries> series;
  long total_draws = 0;
  std::vector<long> rho_present;  // per trans-dimensional parameter, count of usable draws

  for (std::size_t c = 0; c < M; ++c) {
    for (const HierarchyParams& s : chains[c].draws) {
      ++total_draws;
      std::size_t cur = 0;
      std::ostringstream nm;
      for (int i = 0; i < s.n_particles(); ++i) {
        const ParticleParams& p = s.particles[i];
        const std::string si = std::to_string(i + 1);
        add_value(series, cur, "alpha_o[" + si + "]", c, M, p.alpha_pop, true);
        add_value(series, cur, "tau[" + si + "]", c, M, p.tau, true);
        add_value(series, cur, "sigma2_alpha[" + si + "]", c, M, p.sigma2_alpha, true);
        add_value(series, cur, "lambda_phi[" + si + "].1", c, M, p.lambda_phi[0], true);
        add_value(series, cur, "lambda_phi[" + si + "].2", c, M, p.lambda_phi[1], true);
        add_value(series, cur, "lambda_psi[" + si + "].1", c, M, p.lambda_psi[0], true);
        add_value(series, cur, "lambda_psi[" + si + "].2", c, M, p.lambda_psi[1], true);
        for (int l = 2; l <= 3; ++l) {
          const std::string sl = "." + std::to_string(l + 1);
          add_value(series, cur, "beta_o[" + si + "]" + sl, c, M, p.beta_pop[l], true);
          add_value(series, cur, "gamma_o[" + si + "]" + sl, c, M, p.gamma_pop[l], true);
          add_value(series, cur, "sigma2_beta[" + si + "]" + sl, c, M, p.sigma2_beta[l], true);
          add_value(series, cur, "sigma2_gamma[" + si + "]" + sl, c, M, p.sigma2_gamma[l], true);
        }
        for (int j = 0; j < s.n_outcomes(); ++j) {
          const SurfaceParams& cell = s.cells[i][j];
          const std::string sij = "[" + si + "," + std::to_string(j + 1) + "]";
          add_value(series, cur, "alpha" + sij, c, M, cell.alpha, true);
          add_value(series, cur, "phi" + sij + ".1", c, M, cell.dose.knot1, true);
          add_value(series, cur, "phi" + sij + ".2", c, M, cell.dose.knot2, true);
          add_value(series, cur, "psi" + sij + ".1", c, M, cell.time.knot1, true);
          add_value(series, cur, "psi" + sij + ".2", c, M, cell.time.knot2, true);
          add_value(series, cur, "beta" + sij + ".3", c, M, cell.dose.coef[2], true);
          add_value(series, cur, "beta" + sij + ".4", c, M, cell.dose.coef[3], true);
          add_value(series, cur, "gamma" + sij + ".3", c, M, cell.time.coef[2], true);
          add_value(series, cur, "gamma" + sij + ".4", c, M, cell.time.coef[3], true);
          add_value(series, cur, "rho" + sij, c, M, cell.rho ? 1.0 : 0.0, true);
          const bool has = cell.rho;
          add_value(series, cur, "chi" + sij + ".1", c, M, has ? cell.interaction->knot1 : 0.0, has);
          add_value(series, cur, "chi" + sij + ".2", c, M, has ? cell.interaction->knot2 : 0.0, has);
          add_value(series, cur, "delta" + sij + ".3", c, M, has ? cell.interaction->coef[2] : 0.0,
                    has);
          add_value(series, cur, "delta" + sij + ".4", c, M, has ? cell.interaction->coef[3] : 0.0,
                    has);
        }
      }
      for (int j = 0; j < s.n_outcomes(); ++j) {
        add_value(series, cur, "sigma2_eps[" + std::to_string(j + 1) + "]", c, M, s.sigma2_eps[j],
                  true);
      }
      add_value(series, cur, "pi", c, M, s.pi, true);
      add_value(series, cur, "nu", c, M, static_cast<double>(s.nu), true);
    }
  }

  std::vector<ConvergenceParam> out;
  out.reserve(series.size());
  for (ParamSeries& p : series) {
    ConvergenceParam r;
    r.name = p.name;
    long usable = 0;
    for (const auto& v : p.per_chain) usable += static_cast<long>(v.size());
    r.cond_fraction = total_draws > 0 ? static_cast<double>(usable) / total_draws : 0.0;
    long min_per_chain = std::numeric_limits<long>::max();
    for (const auto& v : p.per_chain) {
      min_per_chain = std::min(min_per_chain, static_cast<long>(v.size()));
    }
    if (usable < 4 || min_per_chain < 2) {
      r.available = false;
    } else {
      r.available = true;
      r.rhat = compute_rhat(p.per_chain);
      r.ess = compute_ess(p.per_chain);
    }
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace toxsurf
