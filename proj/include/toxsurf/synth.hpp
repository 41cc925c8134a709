#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "toxsurf/model.hpp"

namespace toxsurf {

// Ground-truth effect shapes for simulation: piecewise linear with known
// change points, a saturating log-logistic ramp, or no effect at all.
enum class TruthKind { piecewise_linear, sigmoid, flat_null };

struct TruthFunction {
  TruthKind kind = TruthKind::flat_null;
  // piecewise_linear: interpolates (0,0), (knot1, v1), (knot2, v2), (m, v3).
  double knot1 = 0.0, knot2 = 0.0;
  double v1 = 0.0, v2 = 0.0, v3 = 0.0;
  // sigmoid: upper / (1 + (half/x)^slope), zero at x = 0.
  double upper = 1.0, half = 1.0, slope = 2.0;

  double eval(double x, double domain_max) const;
};

struct CellTruth {
  double alpha = 0.0;
  TruthFunction dose;
  TruthFunction time;
  bool has_interaction = false;
  TruthFunction interaction;  // argument is dose*time
};

struct TruthSpec {
  std::vector<std::vector<CellTruth>> cells;  // [particle][outcome]
  std::vector<double> sigma_eps;              // noise scale per outcome
  std::vector<double> tau_fixed;              // per particle; empty -> draw from Gamma(nu/2, nu/2)
  int nu = 8;
  std::vector<double> dose_grid;
  std::vector<double> time_grid;
  int n_replicates = 3;
  double dose_max = 0.0;  // 0 -> max of dose_grid
  double time_max = 0.0;

  int n_particles() const { return static_cast<int>(cells.size()); }
  int n_outcomes() const { return cells.empty() ? 0 : static_cast<int>(cells.front().size()); }
  void validate() const;
};

// Desk-scale default: 2 particles x 2 outcomes on a 10-dose x 7-time grid
// with 3 replicates; the diagonal cells carry a dose-time interaction.
TruthSpec default_truth_spec();

struct SimulatedData {
  Dataset data;
  TruthSpec truth;
  std::vector<double> tau_used;  // per particle
};

// y = alpha + f(d) + g(t) [+ h(d t)] + eps with eps ~ N(0, sigma^2/tau),
// tau per particle. Deterministic per seed.
SimulatedData simulate_dataset(const TruthSpec& spec, std::uint64_t seed);

// Recovery scoring against a chain fitted to simulated data.
struct ParamRecovery {
  std::string name;
  double truth = 0.0;
  double post_mean = 0.0;
  double abs_error = 0.0;
  bool covered = false;  // truth inside the central 95% interval
};

struct SelectionRecovery {
  int particle = 0;
  int outcome = 0;
  bool truth_interaction = false;
  double p_hat = 0.0;
  bool correct = false;  // median-model rule agrees with the truth
};

struct RecoveryReport {
  std::vector<ParamRecovery> params;       // change points of piecewise-linear components
  std::vector<SelectionRecovery> selection;
};

RecoveryReport score_recovery(const TruthSpec& truth, const std::vector<HierarchyParams>& draws);

}  // namespace toxsurf
