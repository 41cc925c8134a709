#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "toxsurf/model.hpp"
#include "toxsurf/sampler.hpp"

namespace toxsurf {

// Posterior summary of one scalar: mean, median and central 95% interval.
// Quantiles use type-7 (linear) interpolation of the order statistics.
struct Summary {
  double mean = 0.0;
  double median = 0.0;
  double q025 = 0.0;
  double q975 = 0.0;
};

Summary summarize_draws(std::vector<double> values);
double quantile_type7(const std::vector<double>& sorted, double p);

// Rectangular evaluation grid over [0, D] x [0, T].
struct EvalGrid {
  std::vector<double> doses;
  std::vector<double> times;

  static EvalGrid uniform(double dose_max, double time_max, int n = 101);
};

struct RiskCell {
  int particle = 0;  // 0-based
  int outcome = 0;
  Summary maximal_safe_dose;    // first dose change point
  Summary maximal_safe_time;    // first time change point
  Summary overall_dose_slope;   // coef3 / (knot2 - knot1) of the dose component
  Summary overall_time_slope;
  Summary maximal_response;     // max of the surface over the grid, per draw
  double inclusion_probability = 0.0;
  std::vector<Summary> conditional_msd;  // maximal safe dose given each grid time

  // Median-model rule: keep the interaction when it appears in more than
  // half the draws.
  bool median_model_interacting() const { return inclusion_probability > 0.5; }
};

struct RiskSummary {
  std::vector<RiskCell> cells;
  std::vector<double> time_grid;  // grid backing conditional_msd
};

RiskSummary risk_parameters(const std::vector<HierarchyParams>& draws, const EvalGrid& grid);

struct SurfaceCellSummary {
  int particle = 0;
  int outcome = 0;
  // Row-major over (dose index, time index).
  std::vector<double> mean, median, q025, q975;
};

struct SurfaceSummary {
  std::vector<SurfaceCellSummary> cells;
  EvalGrid grid;
};

SurfaceSummary surface_summary(const std::vector<HierarchyParams>& draws, const EvalGrid& grid);

// Component curves f (over doses), g (over times), h (over the dose*time
// range, conditional on inclusion), with pointwise bands plus simultaneous
// bands from the max-standardized-deviation multiplier at the 95% level.
struct CurveSummary {
  int particle = 0;
  int outcome = 0;
  char component = 'f';
  std::vector<double> x;
  std::vector<double> mean, median, q025, q975, sim_lo, sim_hi;
  double sim_multiplier = 0.0;
  double include_fraction = 1.0;  // share of draws the curve is defined on (h only)
};

std::vector<CurveSummary> component_curves(const std::vector<HierarchyParams>& draws,
                                           const EvalGrid& grid);

// Posterior median of m(d,t) - alpha per grid point; zero regions are the
// safe exposure regions.
struct SafeExposureCell {
  int particle = 0;
  int outcome = 0;
  std::vector<double> median_rel;  // row-major over (dose, time)
};

struct SafeExposureMap {
  std::vector<SafeExposureCell> cells;
  EvalGrid grid;
};

SafeExposureMap safe_exposure_map(const std::vector<HierarchyParams>& draws, const EvalGrid& grid);

// Probability integral transform of every observation under the posterior
// predictive (normal CDF given each draw's tau and sigma2, averaged over
// draws), binned counts and a chi-square uniformity statistic.
struct PitResult {
  std::vector<double> pit;     // one value per record
  std::vector<long> counts;    // histogram over equal bins
  double chisq = 0.0;
  int df = 0;
  double p_value = 1.0;
};

PitResult pit_diagnostic(const std::vector<HierarchyParams>& draws, const Dataset& data,
                         int n_bins = 10);

// Posterior predictive mean response per cell: simulate a replicate data set
// from each draw at the observed design points, average within the cell, and
// compare the 95% interval with the observed cell mean.
struct PpcCell {
  int particle = 0;
  int outcome = 0;
  double lo = 0.0;
  double hi = 0.0;
  double mean = 0.0;
  double empirical = 0.0;
  bool inside = true;
};

std::vector<PpcCell> posterior_predictive_mean_check(const std::vector<HierarchyParams>& draws,
                                                     const Dataset& data, std::uint64_t seed);

// Split-half potential scale reduction and effective sample size.
//
// rhat = sqrt(1 + B/W) with B the variance of the chain means and W the mean
// within-half variance; a duplicated chain therefore reports exactly 1. With
// a single chain its two halves play the role of chains. Trans-dimensional
// parameters are diagnosed on the draws where they exist, with the
// conditioning fraction reported.
struct ConvergenceParam {
  std::string name;
  bool available = false;  // needs at least 4 usable draws
  double rhat = 0.0;
  double ess = 0.0;
  double cond_fraction = 1.0;
};

std::vector<ConvergenceParam> convergence_stats(const std::vector<ChainOutput>& chains);

}  // namespace toxsurf
