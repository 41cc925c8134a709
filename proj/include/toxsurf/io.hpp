#pragma once

#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "toxsurf/inference.hpp"
#include "toxsurf/model.hpp"
#include "toxsurf/sampler.hpp"
#include "toxsurf/synth.hpp"

namespace toxsurf::io {

using ordered_json = nlohmann::ordered_json;

inline constexpr const char* chain_schema = "toxsurf.chain.v1";
inline constexpr const char* manifest_schema = "toxsurf.manifest.v1";
inline constexpr const char* software_version = "0.1.0";

// FNV-1a 64-bit, hex encoded; used to stamp outputs with their manifest.
std::string fnv1a64_hex(std::string_view bytes);
std::string file_fnv1a64_hex(const std::string& path);

// ---------------------------------------------------------------------------
// Dataset files
// ---------------------------------------------------------------------------

struct IngestOptions {
  enum class Mode { raw_percent, pre_transformed };
  Mode mode = Mode::raw_percent;
  double clamp_eps = 1e-4;                 // percent clamp before the logit
  std::optional<double> dose_max;          // defaults to the observed maxima
  std::optional<double> time_max;
};

// Applies value -> log(p/(1-p)) with p = value/100 clamped into
// [clamp_eps, 1-clamp_eps].
double logit_percent(double value, double clamp_eps);

// CSV with header particle,outcome,replicate,dose,time,value. Indexes are
// one-based; every error names the offending line.
Dataset ingest_csv(const std::string& path, const IngestOptions& opts = {});

// Writes the logit-scale dataset back out (readable with pre_transformed mode).
void write_dataset_csv(const std::string& path, const Dataset& data);

ordered_json truth_to_json(const TruthSpec& truth, const std::vector<double>& tau_used);

// ---------------------------------------------------------------------------
// Chain persistence (JSON lines, one draw per record)
// ---------------------------------------------------------------------------

ordered_json state_to_json(const HierarchyParams& s);
HierarchyParams state_from_json(const ordered_json& j);

struct ChainFileInfo {
  std::string manifest_hash;
  int chain_index = 0;
  int n_particles = 0;
  int n_outcomes = 0;
  double dose_max = 0.0;
  double time_max = 0.0;
  bool complete = false;
};

// Append-only writer: header line, then one line per draw, then a footer
// marking the file complete. A crash leaves a readable, incomplete file.
class ChainWriter {
 public:
  ChainWriter(const std::string& path, const ChainFileInfo& info);
  void write_draw(const HierarchyParams& state, long iteration);
  void finalize();

 private:
  std::ofstream out_;
};

struct LoadedChain {
  ChainFileInfo info;
  std::vector<HierarchyParams> draws;
};

LoadedChain read_chain_file(const std::string& path);

void write_telemetry_json(const std::string& path, const ChainTelemetry& telemetry,
                          const std::string& manifest_hash);

// ---------------------------------------------------------------------------
// Config plumbing and the run manifest
// ---------------------------------------------------------------------------

ordered_json prior_to_json(const PriorConfig& cfg);
void prior_overlay_json(PriorConfig& cfg, const ordered_json& j);
ordered_json sampler_to_json(const SamplerConfig& cfg);
void sampler_overlay_json(SamplerConfig& cfg, const ordered_json& j);

// Manifest of a fit: every field that determines the outputs. The hash is
// computed over the manifest body and stamped on every output file.
struct Manifest {
  ordered_json body;
  std::string hash;
};

Manifest make_manifest(const ordered_json& run_config, const std::string& data_file,
                       const std::string& data_hash);
void write_manifest(const std::string& path, const Manifest& m);

// ---------------------------------------------------------------------------
// Plot-ready CSV outputs (period decimal separator, fixed column order, first
// line carries the manifest hash)
// ---------------------------------------------------------------------------

std::string format_double(double v);

void write_risk_summary_csv(const std::string& path, const RiskSummary& rs,
                            const std::string& manifest_hash);
void write_conditional_msd_csv(const std::string& path, const RiskSummary& rs,
                               const std::string& manifest_hash);
void write_surface_csv(const std::string& path, const SurfaceSummary& ss,
                       const std::string& manifest_hash);
void write_components_csv(const std::string& path, const std::vector<CurveSummary>& curves,
                          const std::string& manifest_hash);
void write_safe_exposure_csv(const std::string& path, const SafeExposureMap& map,
                             const std::string& manifest_hash);
void write_pit_csv(const std::string& path, const PitResult& pit,
                   const std::string& manifest_hash);
void write_ppc_csv(const std::string& path, const std::vector<PpcCell>& cells,
                   const std::string& manifest_hash);
void write_convergence_csv(const std::string& path, const std::vector<ConvergenceParam>& params,
                           const std::string& manifest_hash);

}  // namespace toxsurf::io
