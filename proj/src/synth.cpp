#include "toxsurf/synth.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "toxsurf/inference.hpp"

namespace toxsurf {

double TruthFunction::eval(double x, double domain_max) const {
  switch (kind) {
    case TruthKind::flat_null:
      return 0.0;
    case TruthKind::sigmoid:
      if (x <= 0.0) return 0.0;
      return upper / (1.0 + std::pow(half / x, slope));
    case TruthKind::piecewise_linear: {
      if (x <= knot1) return v1 * (x / knot1);
      if (x <= knot2) return v1 + (v2 - v1) * (x - knot1) / (knot2 - knot1);
      return v2 + (v3 - v2) * (x - knot2) / (domain_max - knot2);
    }
  }
  return 0.0;
}

void TruthSpec::validate() const {
  if (cells.empty() || cells.front().empty()) {
    throw std::invalid_argument("truth spec needs at least one cell");
  }
  for (const auto& row : cells) {
    if (row.size() != cells.front().size()) throw std::invalid_argument("ragged truth cell grid");
  }
  if (static_cast<int>(sigma_eps.size()) != n_outcomes()) {
    throw std::invalid_argument("sigma_eps must have one entry per outcome");
  }
  for (double s : sigma_eps) {
    if (!(s > 0.0)) throw std::invalid_argument("noise scales must be positive");
  }
  if (!tau_fixed.empty() && static_cast<int>(tau_fixed.size()) != n_particles()) {
    throw std::invalid_argument("tau_fixed must have one entry per particle");
  }
  for (double t : tau_fixed) {
    if (!(t > 0.0)) throw std::invalid_argument("tau values must be positive");
  }
  if (dose_grid.size() < 2 || time_grid.size() < 2) {
    throw std::invalid_argument("need at least 2 doses and 2 times");
  }
  if (n_replicates < 1) throw std::invalid_argument("need at least one replicate");
  if (nu < 1) throw std::invalid_argument("nu must be >= 1");
}

TruthSpec default_truth_spec() {
  TruthSpec spec;
  const double D = 10.0;
  const double T = 7.0;
  spec.dose_grid.resize(10);
  for (int k = 0; k < 10; ++k) spec.dose_grid[k] = D * k / 9.0;
  spec.time_grid.resize(7);
  for (int k = 0; k < 7; ++k) spec.time_grid[k] = T * k / 6.0;
  spec.dose_max = D;
  spec.time_max = T;
  spec.n_replicates = 3;
  spec.nu = 8;
  spec.sigma_eps = {0.25, 0.3};

  TruthFunction f;
  f.kind = TruthKind::piecewise_linear;
  f.knot1 = 3.0;
  f.knot2 = 7.0;
  f.v1 = 0.0;
  f.v2 = 2.0;
  f.v3 = 2.4;

  TruthFunction g;
  g.kind = TruthKind::piecewise_linear;
  g.knot1 = 2.0;
  g.knot2 = 5.0;
  g.v1 = 0.0;
  g.v2 = 1.5;
  g.v3 = 1.8;

  TruthFunction h;
  h.kind = TruthKind::piecewise_linear;
  h.knot1 = 20.0;
  h.knot2 = 50.0;
  h.v1 = 0.0;
  h.v2 = 1.6;
  h.v3 = 2.0;

  spec.cells.assign(2, std::vector<CellTruth>(2));
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) {
      CellTruth& c = spec.cells[i][j];
      c.alpha = -2.0 + 0.5 * i - 0.25 * j;
      c.dose = f;
      c.time = g;
      c.has_interaction = i == j;  // diagonal cells interact
      if (c.has_interaction) c.interaction = h;
    }
  }
  return spec;
}

SimulatedData simulate_dataset(const TruthSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng rng(seed);
  const int I = spec.n_particles();
  const int J = spec.n_outcomes();
  const double D = spec.dose_max > 0.0 ? spec.dose_max
                                       : *std::max_element(spec.dose_grid.begin(),
                                                           spec.dose_grid.end());
  const double T = spec.time_max > 0.0 ? spec.time_max
                                       : *std::max_element(spec.time_grid.begin(),
                                                           spec.time_grid.end());

  SimulatedData out;
  out.truth = spec;
  out.truth.dose_max = D;
  out.truth.time_max = T;
  out.tau_used.resize(I);
  for (int i = 0; i < I; ++i) {
    out.tau_used[i] =
        spec.tau_fixed.empty() ? rng.gamma(0.5 * spec.nu, 0.5 * spec.nu) : spec.tau_fixed[i];
  }

  std::vector<Record> records;
  records.reserve(static_cast<std::size_t>(I) * J * spec.n_replicates * spec.dose_grid.size() *
                  spec.time_grid.size());
  for (int i = 0; i < I; ++i) {
    for (int j = 0; j < J; ++j) {
      const CellTruth& c = spec.cells[i][j];
      const double sd = spec.sigma_eps[j] / std::sqrt(out.tau_used[i]);
      for (int k = 0; k < spec.n_replicates; ++k) {
        for (double d : spec.dose_grid) {
          for (double t : spec.time_grid) {
            double m = c.alpha + c.dose.eval(d, D) + c.time.eval(t, T);
            if (c.has_interaction) m += c.interaction.eval(d * t, D * T);
            records.push_back({i, j, k, d, t, m + sd * rng.normal()});
          }
        }
      }
    }
  }
  out.data = Dataset::build(std::move(records), I, J, spec.n_replicates, D, T);
  out.data.validate_design();
  return out;
}

RecoveryReport score_recovery(const TruthSpec& truth, const std::vector<HierarchyParams>& draws) {
  if (draws.empty()) throw std::invalid_argument("score_recovery: empty chain");
  RecoveryReport report;
  const int I = truth.n_particles();
  const int J = truth.n_outcomes();

  auto score_param = [&](const std::string& name, double tv, std::vector<double> values) {
    ParamRecovery p;
    p.name = name;
    p.truth = tv;
    const Summary s = summarize_draws(std::move(values));
    p.post_mean = s.mean;
    p.abs_error = std::fabs(s.mean - tv);
    p.covered = tv >= s.q025 && tv <= s.q975;
    report.params.push_back(std::move(p));
  };

  for (int i = 0; i < I; ++i) {
    for (int j = 0; j < J; ++j) {
      const CellTruth& ct = truth.cells[i][j];
      const std::string sij = "[" + std::to_string(i + 1) + "," + std::to_string(j + 1) + "]";
      std::vector<double> phi1, phi2, psi1, psi2, alpha;
      double inc = 0.0;
      for (const HierarchyParams& s : draws) {
        const SurfaceParams& cell = s.cells[i][j];
        phi1.push_back(cell.dose.knot1);
        phi2.push_back(cell.dose.knot2);
        psi1.push_back(cell.time.knot1);
        psi2.push_back(cell.time.knot2);
        alpha.push_back(cell.alpha);
        inc += cell.rho ? 1.0 : 0.0;
      }
      score_param("alpha" + sij, ct.alpha, std::move(alpha));
      if (ct.dose.kind == TruthKind::piecewise_linear) {
        score_param("phi" + sij + ".1", ct.dose.knot1, std::move(phi1));
        score_param("phi" + sij + ".2", ct.dose.knot2, std::move(phi2));
      }
      if (ct.time.kind == TruthKind::piecewise_linear) {
        score_param("psi" + sij + ".1", ct.time.knot1, std::move(psi1));
        score_param("psi" + sij + ".2", ct.time.knot2, std::move(psi2));
      }
      SelectionRecovery sel;
      sel.particle = i;
      sel.outcome = j;
      sel.truth_interaction = ct.has_interaction;
      sel.p_hat = inc / draws.size();
      sel.correct = (sel.p_hat > 0.5) == ct.has_interaction;
      report.selection.push_back(sel);
    }
  }
  return report;
}

}  // namespace toxsurf
