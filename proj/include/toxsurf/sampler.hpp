#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "toxsurf/model.hpp"

namespace toxsurf {

struct SamplerConfig {
  long n_burnin = 60000;
  long n_samples = 20000;
  int thin = 1;
  int adapt_interval = 200;          // burn-in acceptance monitoring window
  double target_accept_lo = 0.30;
  double target_accept_hi = 0.70;
  double initial_step_frac = 0.10;   // initial proposal width, fraction of the knot domain
  double rj_move_rate = 1.0;         // chance an iteration attempts a trans-dimensional move
  std::uint64_t seed = 1;

  void validate() const;
};

// Which component of a surface a knot/coefficient block belongs to.
enum class Comp { dose = 0, time = 1, interaction = 2 };

struct KnotBlockStats {
  std::string name;       // e.g. "phi[1,2].1"
  double width = 0.0;     // current proposal half-width
  long proposals = 0;
  long accepts = 0;
  long post_proposals = 0;  // after burn-in (adaptation frozen)
  long post_accepts = 0;
  long window_proposals = 0;
  long window_accepts = 0;

  double rate() const { return proposals ? double(accepts) / double(proposals) : 0.0; }
  double post_rate() const {
    return post_proposals ? double(post_accepts) / double(post_proposals) : 0.0;
  }
};

struct RjStats {
  long birth_attempts = 0;
  long birth_accepts = 0;
  long death_attempts = 0;
  long death_accepts = 0;
  long skipped = 0;  // proposal construction failures, counted as rejections
};

struct ChainTelemetry {
  std::vector<KnotBlockStats> knot_blocks;
  RjStats rj;
  std::vector<double> log_posterior_trace;  // one entry per iteration
};

struct ChainOutput {
  std::vector<HierarchyParams> draws;  // post burn-in, post thinning
  ChainTelemetry telemetry;
  SamplerConfig config;
  bool complete = true;
};

// Raised when an update fails; carries the failing iteration and block plus
// everything sampled so far.
class SamplerError : public std::runtime_error {
 public:
  SamplerError(long iteration, std::string block, const std::string& what, ChainOutput partial)
      : std::runtime_error("iteration " + std::to_string(iteration) + ", block " + block + ": " +
                           what),
        iteration_(iteration),
        block_(std::move(block)),
        partial_(std::move(partial)) {}

  long iteration() const { return iteration_; }
  const std::string& block() const { return block_; }
  const ChainOutput& partial() const { return partial_; }

 private:
  long iteration_;
  std::string block_;
  ChainOutput partial_;
};

// One MCMC chain over the hierarchical surface model. Holds the current
// state together with per-record caches of basis rows and component values,
// so each block update touches only the records it affects.
//
// Block updates are public so tests can redraw a single conditional with the
// rest of the state frozen.
class Sampler {
 public:
  Sampler(const Dataset& data, const PriorConfig& prior, const SamplerConfig& cfg);

  void initialize_from_prior();
  void initialize(HierarchyParams warm_start);

  // One full iteration: trans-dimensional move, knot MH sweep, linear Gibbs
  // block, scale Gibbs block, in that order.
  void iterate();

  // Phase updates.
  void rj_interaction_move();
  void update_knots();
  void update_linear_block();
  void update_scales();

  // Burn-in step-width adaptation (call every adapt_interval iterations;
  // freeze after burn-in by simply not calling it).
  void adapt_step_widths();

  // Fine-grained conditional redraws; each returns the sampled value.
  double redraw_cell_alpha(int i, int j);
  double redraw_cell_coef(int i, int j, Comp comp, int coord);
  double redraw_pop_alpha(int i);
  double redraw_pop_coef(int i, Comp comp, int coord);  // dose -> beta_o, time -> gamma_o
  double redraw_sigma2_eps(int j);
  double redraw_sigma2_alpha(int i);
  double redraw_sigma2_coef(int i, Comp comp, int coord);
  double redraw_tau(int i);
  double redraw_pi();
  int redraw_nu();
  double redraw_lambda(int i, Comp comp, int which);  // which in {0, 1}
  bool mh_step_knot(int i, int j, Comp comp, int which);

  // Mixing moves for the location hierarchies. The per-coordinate sweep
  // leaves the (population mean, cell values) pairs nearly frozen when the
  // population prior is much wider than the cell-level spread, so each sweep
  // also performs one exact joint update per hierarchy:
  //  - recenter_alpha draws the population baseline with the cell baselines
  //    integrated out (collapsed Gibbs), then refreshes the cells;
  //  - recenter_coef proposes a fresh population coordinate from its prior
  //    and shifts the cell coordinates along with it, accepted by the exact
  //    Metropolis ratio (the truncation normalizers and the likelihood).
  void recenter_alpha(int i);
  bool recenter_coef(int i, Comp comp, int coord);

  // Joint independence refresh of a knot pair from its prior; accepted with
  // the bare likelihood ratio (prior and proposal cancel). Gives exact
  // regeneration on prior-only runs and a mode-escape route under data.
  bool refresh_knots_from_prior(int i, int j, Comp comp);

  double log_likelihood_cached() const;
  double log_posterior_current() const;

  const HierarchyParams& state() const { return state_; }
  void set_state(HierarchyParams s);  // rebuilds caches
  Rng& rng() { return rng_; }

  const std::vector<KnotBlockStats>& knot_blocks() const { return blocks_; }
  KnotBlockStats& block_stats(int idx) { return blocks_[idx]; }
  const RjStats& rj_stats() const { return rj_; }
  void begin_post_burnin() { post_burnin_ = true; }

  int block_index(int i, int j, Comp comp, int which) const;

 private:
  struct LinearSystem;  // small LS helper for the trans-dimensional proposal

  void rebuild_caches();
  void refresh_component(int i, int j, Comp comp);
  double cell_weight(int i, int j) const;  // tau_i / sigma2_eps_j
  double record_mean(int r) const;
  double knot_prior_logpdf(int i, Comp comp, double k1, double k2) const;
  SplineComponent& component(int i, int j, Comp comp);
  const SplineComponent& component(int i, int j, Comp comp) const;

  struct RjProposal {
    bool ok = false;
    std::array<double, 2> knot_center{0.0, 0.0};
    Vec4 coef_center{0.0, 0.0, 0.0, 0.0};
    Vec4 coef_sd{1.0, 1.0, 1.0, 1.0};
    double knot_sd = 1.0;
    bool from_prior = false;  // no records: fall back to proposing from the prior
  };
  RjProposal build_rj_proposal(int i, int j) const;

  const Dataset& data_;
  const PriorConfig& prior_;
  SamplerConfig cfg_;
  Rng rng_;
  HierarchyParams state_;
  bool post_burnin_ = false;

  // Record index groups.
  std::vector<std::vector<std::vector<int>>> cell_recs_;
  std::vector<std::vector<int>> particle_recs_;
  std::vector<std::vector<int>> outcome_recs_;

  // Per-record caches, parallel to data_.records.
  std::vector<Vec4> basis_[3];        // dose/time/interaction basis rows
  std::vector<double> value_[3];      // component values
  std::vector<double> mean_;          // full surface mean per record

  std::vector<KnotBlockStats> blocks_;  // 6 per cell: phi1 phi2 psi1 psi2 chi1 chi2
  RjStats rj_;

  std::vector<CoordRegion> main_regions_;
  std::vector<CoordRegion> inter_regions_;

  // Reusable scratch for knot proposals.
  std::vector<Vec4> scratch_basis_;
  std::vector<double> scratch_value_;
};

using DrawSink = std::function<void(const HierarchyParams&, long iteration)>;

// Runs one chain: initializes from the prior (or the given warm start),
// iterates, adapts during burn-in, thins, validates and stores draws.
// Bit-reproducible for fixed (config, inputs). Throws SamplerError carrying
// partial output if an update fails.
ChainOutput run_chain(const Dataset& data, const PriorConfig& prior, const SamplerConfig& cfg,
                      const std::optional<HierarchyParams>& warm_start = std::nullopt,
                      const DrawSink& sink = nullptr);

// Independent chains with per-chain derived seeds; chains may run
// concurrently, outputs are in chain order and deterministic.
std::vector<ChainOutput> run_chains(const Dataset& data, const PriorConfig& prior,
                                    const SamplerConfig& cfg, int n_chains,
                                    const std::vector<DrawSink>& sinks = {});

}  // namespace toxsurf
