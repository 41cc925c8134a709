// toxsurf: fit | summarize | simulate | diagnose over dose-time screening data.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>

#include "CLI11.hpp"
#include "toxsurf/inference.hpp"
#include "toxsurf/io.hpp"
#include "toxsurf/model.hpp"
#include "toxsurf/sampler.hpp"
#include "toxsurf/synth.hpp"

namespace fs = std::filesystem;
using toxsurf::io::ordered_json;

namespace {

constexpr int exit_ok = 0;
constexpr int exit_input_error = 1;
constexpr int exit_numerical_error = 2;

struct CommonOpts {
  std::string data_path;
  std::string out_dir;
  std::string config_path;
  std::string normalization = "raw";
  double clamp_eps = 1e-4;
  double dose_max = 0.0;  // 0 -> observed maximum
  double time_max = 0.0;
  std::uint64_t seed = 1;
  int chains = 1;
  int grid = 101;
  bool force = false;
};

ordered_json load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open config file: " + path);
  return ordered_json::parse(in);
}

toxsurf::io::IngestOptions ingest_options(const CommonOpts& o) {
  toxsurf::io::IngestOptions opts;
  if (o.normalization == "raw") {
    opts.mode = toxsurf::io::IngestOptions::Mode::raw_percent;
  } else if (o.normalization == "pre") {
    opts.mode = toxsurf::io::IngestOptions::Mode::pre_transformed;
  } else {
    throw std::invalid_argument("normalization must be 'raw' or 'pre'");
  }
  opts.clamp_eps = o.clamp_eps;
  if (o.dose_max > 0.0) opts.dose_max = o.dose_max;
  if (o.time_max > 0.0) opts.time_max = o.time_max;
  return opts;
}

void ensure_out_dir(const std::string& dir) {
  if (dir.empty()) throw std::invalid_argument("--out directory is required");
  fs::create_directories(dir);
}

struct FitOverrides {
  long n_burnin = -1;
  long n_samples = -1;
  int thin = -1;
};

int run_fit(const CommonOpts& opts, const std::string& warm_start_path,
            const FitOverrides& over) {
  toxsurf::PriorConfig prior;
  toxsurf::SamplerConfig sampler_cfg;
  ordered_json file_cfg;
  if (!opts.config_path.empty()) {
    file_cfg = load_config_file(opts.config_path);
    if (file_cfg.contains("prior")) toxsurf::io::prior_overlay_json(prior, file_cfg["prior"]);
    if (file_cfg.contains("sampler")) {
      toxsurf::io::sampler_overlay_json(sampler_cfg, file_cfg["sampler"]);
    }
  }
  // Command-line values win over the config file.
  sampler_cfg.seed = opts.seed;
  if (over.n_burnin >= 0) sampler_cfg.n_burnin = over.n_burnin;
  if (over.n_samples >= 0) sampler_cfg.n_samples = over.n_samples;
  if (over.thin >= 1) sampler_cfg.thin = over.thin;
  sampler_cfg.validate();

  const toxsurf::Dataset data = toxsurf::io::ingest_csv(opts.data_path, ingest_options(opts));
  ensure_out_dir(opts.out_dir);

  ordered_json run_config;
  run_config["prior"] = toxsurf::io::prior_to_json(prior);
  run_config["sampler"] = toxsurf::io::sampler_to_json(sampler_cfg);
  run_config["chains"] = opts.chains;
  run_config["normalization"] = opts.normalization;
  run_config["clamp_eps"] = opts.clamp_eps;
  run_config["grid"] = opts.grid;
  run_config["warm_start"] = warm_start_path;
  const toxsurf::io::Manifest manifest = toxsurf::io::make_manifest(
      run_config, fs::path(opts.data_path).filename().string(),
      toxsurf::io::file_fnv1a64_hex(opts.data_path));
  toxsurf::io::write_manifest((fs::path(opts.out_dir) / "manifest.json").string(), manifest);

  std::optional<toxsurf::HierarchyParams> warm_start;
  if (!warm_start_path.empty()) {
    const auto loaded = toxsurf::io::read_chain_file(warm_start_path);
    if (loaded.draws.empty()) throw std::invalid_argument("warm-start chain has no draws");
    warm_start = loaded.draws.back();
  }

  std::vector<std::unique_ptr<toxsurf::io::ChainWriter>> writers;
  std::vector<toxsurf::DrawSink> sinks;
  for (int c = 0; c < opts.chains; ++c) {
    toxsurf::io::ChainFileInfo info;
    info.manifest_hash = manifest.hash;
    info.chain_index = c;
    info.n_particles = data.n_particles;
    info.n_outcomes = data.n_outcomes;
    info.dose_max = data.dose_max;
    info.time_max = data.time_max;
    const std::string path =
        (fs::path(opts.out_dir) / ("chain_" + std::to_string(c) + ".jsonl")).string();
    writers.push_back(std::make_unique<toxsurf::io::ChainWriter>(path, info));
    toxsurf::io::ChainWriter* w = writers.back().get();
    sinks.push_back([w](const toxsurf::HierarchyParams& s, long iter) { w->write_draw(s, iter); });
  }

  std::vector<toxsurf::ChainOutput> outs;
  if (warm_start && opts.chains == 1) {
    outs.push_back(toxsurf::run_chain(data, prior, sampler_cfg, warm_start, sinks[0]));
  } else {
    if (warm_start) {
      throw std::invalid_argument("warm start supports a single chain");
    }
    outs = toxsurf::run_chains(data, prior, sampler_cfg, opts.chains, sinks);
  }
  for (int c = 0; c < opts.chains; ++c) {
    writers[c]->finalize();
    toxsurf::io::write_telemetry_json(
        (fs::path(opts.out_dir) / ("telemetry_" + std::to_string(c) + ".json")).string(),
        outs[c].telemetry, manifest.hash);
  }
  std::cout << "fit complete: " << opts.chains << " chain(s), " << outs.front().draws.size()
            << " draws each, outputs in " << opts.out_dir << "\n";
  return exit_ok;
}

struct LoadedChains {
  std::vector<toxsurf::io::LoadedChain> chains;
  std::string manifest_hash;
};

LoadedChains load_chains(const std::vector<std::string>& paths, bool force) {
  if (paths.empty()) throw std::invalid_argument("no chain files given");
  LoadedChains out;
  for (const std::string& p : paths) {
    out.chains.push_back(toxsurf::io::read_chain_file(p));
    const auto& c = out.chains.back();
    if (out.manifest_hash.empty()) out.manifest_hash = c.info.manifest_hash;
    if (c.info.manifest_hash != out.manifest_hash && !force) {
      throw std::invalid_argument("chain files come from different manifests (" +
                                  out.manifest_hash + " vs " + c.info.manifest_hash +
                                  "); pass --force to combine anyway");
    }
  }
  return out;
}

std::vector<toxsurf::HierarchyParams> pool_draws(const LoadedChains& lc) {
  std::vector<toxsurf::HierarchyParams> draws;
  for (const auto& c : lc.chains) {
    draws.insert(draws.end(), c.draws.begin(), c.draws.end());
  }
  if (draws.empty()) {
    throw std::invalid_argument("diagnostic unavailable: chain files contain no draws");
  }
  return draws;
}

int run_summarize(const CommonOpts& opts, const std::vector<std::string>& chain_paths) {
  const LoadedChains lc = load_chains(chain_paths, opts.force);
  const auto draws = pool_draws(lc);
  ensure_out_dir(opts.out_dir);
  const toxsurf::EvalGrid grid =
      toxsurf::EvalGrid::uniform(lc.chains.front().info.dose_max,
                                 lc.chains.front().info.time_max, opts.grid);
  const std::string& h = lc.manifest_hash;
  const fs::path out(opts.out_dir);
  const toxsurf::RiskSummary rs = toxsurf::risk_parameters(draws, grid);
  toxsurf::io::write_risk_summary_csv((out / "risk_summary.csv").string(), rs, h);
  toxsurf::io::write_conditional_msd_csv((out / "conditional_msd.csv").string(), rs, h);
  toxsurf::io::write_surface_csv((out / "surface.csv").string(),
                                 toxsurf::surface_summary(draws, grid), h);
  toxsurf::io::write_components_csv((out / "components.csv").string(),
                                    toxsurf::component_curves(draws, grid), h);
  toxsurf::io::write_safe_exposure_csv((out / "safe_exposure.csv").string(),
                                       toxsurf::safe_exposure_map(draws, grid), h);
  std::cout << "summaries written to " << opts.out_dir << "\n";
  return exit_ok;
}

int run_simulate(const CommonOpts& opts) {
  ensure_out_dir(opts.out_dir);
  const toxsurf::TruthSpec spec = toxsurf::default_truth_spec();
  const toxsurf::SimulatedData sim = toxsurf::simulate_dataset(spec, opts.seed);
  const fs::path out(opts.out_dir);
  toxsurf::io::write_dataset_csv((out / "dataset.csv").string(), sim.data);
  std::ofstream truth((out / "truth.json").string());
  truth << toxsurf::io::truth_to_json(sim.truth, sim.tau_used).dump(2) << '\n';
  std::cout << "simulated dataset and truth written to " << opts.out_dir << "\n";
  return exit_ok;
}

int run_diagnose(const CommonOpts& opts, const std::vector<std::string>& chain_paths) {
  const LoadedChains lc = load_chains(chain_paths, opts.force);
  const auto draws = pool_draws(lc);
  const toxsurf::Dataset data = toxsurf::io::ingest_csv(opts.data_path, ingest_options(opts));
  ensure_out_dir(opts.out_dir);
  const std::string& h = lc.manifest_hash;
  const fs::path out(opts.out_dir);

  const toxsurf::PitResult pit = toxsurf::pit_diagnostic(draws, data);
  toxsurf::io::write_pit_csv((out / "pit.csv").string(), pit, h);
  const auto ppc = toxsurf::posterior_predictive_mean_check(draws, data, opts.seed);
  toxsurf::io::write_ppc_csv((out / "ppc_mean.csv").string(), ppc, h);

  std::vector<toxsurf::ChainOutput> chain_outputs;
  for (const auto& c : lc.chains) {
    toxsurf::ChainOutput co;
    co.draws = c.draws;
    chain_outputs.push_back(std::move(co));
  }
  const auto conv = toxsurf::convergence_stats(chain_outputs);
  toxsurf::io::write_convergence_csv((out / "convergence.csv").string(), conv, h);

  long inside = 0;
  for (const auto& c : ppc) inside += c.inside ? 1 : 0;
  ordered_json dj;
  dj["manifest_hash"] = h;
  dj["pit_chisq"] = pit.chisq;
  dj["pit_df"] = pit.df;
  dj["pit_p_value"] = pit.p_value;
  dj["ppc_cells_inside"] = inside;
  dj["ppc_cells_total"] = static_cast<long>(ppc.size());
  long unavailable = 0;
  double max_rhat = 0.0;
  for (const auto& p : conv) {
    if (!p.available) {
      ++unavailable;
    } else {
      max_rhat = std::max(max_rhat, p.rhat);
    }
  }
  dj["convergence_max_rhat"] = max_rhat;
  dj["convergence_unavailable"] = unavailable;
  std::ofstream dout((out / "diagnostics.json").string());
  dout << dj.dump(2) << '\n';
  std::cout << "diagnostics written to " << opts.out_dir << "\n";
  return exit_ok;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hierarchical Bayesian dose-time response surface modeling"};
  app.require_subcommand(1);

  CommonOpts opts;
  std::string warm_start_path;
  std::vector<std::string> chain_paths;
  long n_burnin = -1, n_samples = -1;
  int thin = -1;

  auto add_common = [&](CLI::App* cmd, bool needs_data, bool needs_chains) {
    cmd->add_option("--out", opts.out_dir, "Output directory")->required();
    cmd->add_option("--seed", opts.seed, "Random seed");
    if (needs_data) {
      cmd->add_option("--data", opts.data_path, "Input CSV")->required();
      cmd->add_option("--normalization", opts.normalization,
                      "Input value scale: 'raw' percent or 'pre' (already logit)");
      cmd->add_option("--clamp-eps", opts.clamp_eps, "Percent clamp before the logit");
      cmd->add_option("--dose-max", opts.dose_max, "Override the dose domain bound D");
      cmd->add_option("--time-max", opts.time_max, "Override the time domain bound T");
    }
    if (needs_chains) {
      cmd->add_option("chains", chain_paths, "Chain files (JSON lines)")->required();
      cmd->add_flag("--force", opts.force, "Combine chains from different manifests");
    }
  };

  CLI::App* fit = app.add_subcommand("fit", "Run the MCMC sampler");
  add_common(fit, true, false);
  fit->add_option("--config", opts.config_path, "JSON config with prior/sampler overrides");
  fit->add_option("--chains", opts.chains, "Number of independent chains");
  fit->add_option("--n-burnin", n_burnin, "Burn-in iterations (default 60000)");
  fit->add_option("--n-samples", n_samples, "Retained draws (default 20000)");
  fit->add_option("--thin", thin, "Thinning interval");
  fit->add_option("--grid", opts.grid, "Evaluation grid recorded in the manifest");
  fit->add_option("--warm-start", warm_start_path, "Chain file whose last draw seeds the chain");

  CLI::App* summarize = app.add_subcommand("summarize", "Posterior risk summaries and grids");
  summarize->add_option("--grid", opts.grid, "Evaluation grid points per axis");
  add_common(summarize, false, true);

  CLI::App* simulate = app.add_subcommand("simulate", "Generate a synthetic dataset with truth");
  add_common(simulate, false, false);

  CLI::App* diagnose = app.add_subcommand("diagnose", "PIT, predictive and convergence checks");
  add_common(diagnose, true, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? exit_ok : exit_input_error;
  }

  try {
    if (fit->parsed()) {
      FitOverrides over;
      over.n_burnin = n_burnin;
      over.n_samples = n_samples;
      over.thin = thin;
      return run_fit(opts, warm_start_path, over);
    }
    if (summarize->parsed()) return run_summarize(opts, chain_paths);
    if (simulate->parsed()) return run_simulate(opts);
    if (diagnose->parsed()) return run_diagnose(opts, chain_paths);
  } catch (const toxsurf::SamplerError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return exit_numerical_error;
  } catch (const std::invalid_argument& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return exit_input_error;
  } catch (const std::domain_error& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return exit_input_error;
  } catch (const std::exception& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return exit_numerical_error;
  }
  return exit_input_error;
}
