#include "toxsurf/io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace toxsurf::io {

namespace {

[[noreturn]] void input_error(const std::string& msg) { throw std::invalid_argument(msg); }

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) input_error("cannot open for writing: " + path);
  return out;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) input_error("cannot open for reading: " + path);
  return in;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

double parse_double(const std::string& s, long line_no, const char* what) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
    if (pos != s.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    input_error("line " + std::to_string(line_no) + ": cannot parse " + what + " from '" + s + "'");
  }
}

int parse_index(const std::string& s, long line_no, const char* what) {
  const double v = parse_double(s, line_no, what);
  const int i = static_cast<int>(v);
  if (v != i || i < 1) {
    input_error("line " + std::to_string(line_no) + ": " + what + " must be a positive integer");
  }
  return i;
}

}  // namespace

std::string fnv1a64_hex(std::string_view bytes) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string file_fnv1a64_hex(const std::string& path) {
  std::ifstream in = open_in(path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return fnv1a64_hex(ss.str());
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// ---------------------------------------------------------------------------
// Dataset files
// ---------------------------------------------------------------------------

double logit_percent(double value, double clamp_eps) {
  double p = value / 100.0;
  p = std::min(std::max(p, clamp_eps), 1.0 - clamp_eps);
  return std::log(p / (1.0 - p));
}

Dataset ingest_csv(const std::string& path, const IngestOptions& opts) {
  std::ifstream in = open_in(path);
  std::string line;
  if (!std::getline(in, line)) input_error(path + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "particle,outcome,replicate,dose,time,value") {
    input_error(path + ": expected header particle,outcome,replicate,dose,time,value");
  }

  std::vector<Record> records;
  int max_i = 0, max_j = 0, max_k = 0;
  double max_d = 0.0, max_t = 0.0;
  long line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != 6) {
      input_error("line " + std::to_string(line_no) + ": expected 6 fields, got " +
                  std::to_string(fields.size()));
    }
    Record r;
    r.particle = parse_index(fields[0], line_no, "particle") - 1;
    r.outcome = parse_index(fields[1], line_no, "outcome") - 1;
    r.replicate = parse_index(fields[2], line_no, "replicate") - 1;
    r.dose = parse_double(fields[3], line_no, "dose");
    r.time = parse_double(fields[4], line_no, "time");
    const double value = parse_double(fields[5], line_no, "value");
    if (r.dose < 0.0) input_error("line " + std::to_string(line_no) + ": negative dose");
    if (r.time < 0.0) input_error("line " + std::to_string(line_no) + ": negative time");
    if (opts.mode == IngestOptions::Mode::raw_percent) {
      if (!(value >= 0.0 && value <= 100.0)) {
        input_error("line " + std::to_string(line_no) +
                    ": raw value outside [0, 100]: " + fields[5]);
      }
      r.y = logit_percent(value, opts.clamp_eps);
    } else {
      if (!std::isfinite(value)) {
        input_error("line " + std::to_string(line_no) + ": non-finite value");
      }
      r.y = value;
    }
    max_i = std::max(max_i, r.particle + 1);
    max_j = std::max(max_j, r.outcome + 1);
    max_k = std::max(max_k, r.replicate + 1);
    max_d = std::max(max_d, r.dose);
    max_t = std::max(max_t, r.time);
    records.push_back(r);
  }
  if (records.empty()) input_error(path + ": no data rows");

  const double D = opts.dose_max.value_or(max_d);
  const double T = opts.time_max.value_or(max_t);
  Dataset data = Dataset::build(std::move(records), max_i, max_j, max_k, D, T);
  data.validate_design();
  return data;
}

void write_dataset_csv(const std::string& path, const Dataset& data) {
  std::ofstream out = open_out(path);
  out << "particle,outcome,replicate,dose,time,value\n";
  for (const Record& r : data.records) {
    out << r.particle + 1 << ',' << r.outcome + 1 << ',' << r.replicate + 1 << ','
        << format_double(r.dose) << ',' << format_double(r.time) << ',' << format_double(r.y)
        << '\n';
  }
}

namespace {
ordered_json truth_fn_to_json(const TruthFunction& f) {
  ordered_json j;
  switch (f.kind) {
    case TruthKind::flat_null:
      j["kind"] = "flat_null";
      break;
    case TruthKind::sigmoid:
      j["kind"] = "sigmoid";
      j["upper"] = f.upper;
      j["half"] = f.half;
      j["slope"] = f.slope;
      break;
    case TruthKind::piecewise_linear:
      j["kind"] = "piecewise_linear";
      j["knots"] = {f.knot1, f.knot2};
      j["values"] = {f.v1, f.v2, f.v3};
      break;
  }
  return j;
}
}  // namespace

ordered_json truth_to_json(const TruthSpec& truth, const std::vector<double>& tau_used) {
  ordered_json j;
  j["n_particles"] = truth.n_particles();
  j["n_outcomes"] = truth.n_outcomes();
  j["n_replicates"] = truth.n_replicates;
  j["dose_max"] = truth.dose_max;
  j["time_max"] = truth.time_max;
  j["dose_grid"] = truth.dose_grid;
  j["time_grid"] = truth.time_grid;
  j["sigma_eps"] = truth.sigma_eps;
  j["nu"] = truth.nu;
  j["tau_used"] = tau_used;
  ordered_json cells = ordered_json::array();
  for (int i = 0; i < truth.n_particles(); ++i) {
    for (int j2 = 0; j2 < truth.n_outcomes(); ++j2) {
      const CellTruth& c = truth.cells[i][j2];
      ordered_json cj;
      cj["particle"] = i + 1;
      cj["outcome"] = j2 + 1;
      cj["alpha"] = c.alpha;
      cj["dose"] = truth_fn_to_json(c.dose);
      cj["time"] = truth_fn_to_json(c.time);
      cj["has_interaction"] = c.has_interaction;
      if (c.has_interaction) cj["interaction"] = truth_fn_to_json(c.interaction);
      cells.push_back(std::move(cj));
    }
  }
  j["cells"] = std::move(cells);
  return j;
}

// ---------------------------------------------------------------------------
// Chain persistence
// ---------------------------------------------------------------------------

ordered_json state_to_json(const HierarchyParams& s) {
  ordered_json j;
  j["pi"] = s.pi;
  j["nu"] = s.nu;
  j["sigma2_eps"] = s.sigma2_eps;
  ordered_json particles = ordered_json::array();
  for (const ParticleParams& p : s.particles) {
    ordered_json pj;
    pj["alpha_o"] = p.alpha_pop;
    pj["beta_o"] = p.beta_pop;
    pj["gamma_o"] = p.gamma_pop;
    pj["lambda_phi"] = p.lambda_phi;
    pj["lambda_psi"] = p.lambda_psi;
    pj["tau"] = p.tau;
    pj["sigma2_alpha"] = p.sigma2_alpha;
    pj["sigma2_beta"] = p.sigma2_beta;
    pj["sigma2_gamma"] = p.sigma2_gamma;
    particles.push_back(std::move(pj));
  }
  j["particles"] = std::move(particles);
  ordered_json cells = ordered_json::array();
  for (const auto& row : s.cells) {
    ordered_json rj = ordered_json::array();
    for (const SurfaceParams& c : row) {
      ordered_json cj;
      cj["alpha"] = c.alpha;
      cj["phi"] = {c.dose.knot1, c.dose.knot2};
      cj["beta"] = c.dose.coef;
      cj["psi"] = {c.time.knot1, c.time.knot2};
      cj["gamma"] = c.time.coef;
      cj["rho"] = c.rho ? 1 : 0;
      if (c.rho) {
        cj["chi"] = {c.interaction->knot1, c.interaction->knot2};
        cj["delta"] = c.interaction->coef;
      }
      rj.push_back(std::move(cj));
    }
    cells.push_back(std::move(rj));
  }
  j["cells"] = std::move(cells);
  j["dose_max"] = s.dose_max;
  j["time_max"] = s.time_max;
  return j;
}

HierarchyParams state_from_json(const ordered_json& j) {
  HierarchyParams s;
  s.pi = j.at("pi").get<double>();
  s.nu = j.at("nu").get<int>();
  s.sigma2_eps = j.at("sigma2_eps").get<std::vector<double>>();
  s.dose_max = j.at("dose_max").get<double>();
  s.time_max = j.at("time_max").get<double>();
  for (const auto& pj : j.at("particles")) {
    ParticleParams p;
    p.alpha_pop = pj.at("alpha_o").get<double>();
    p.beta_pop = pj.at("beta_o").get<Vec4>();
    p.gamma_pop = pj.at("gamma_o").get<Vec4>();
    p.lambda_phi = pj.at("lambda_phi").get<std::array<double, 2>>();
    p.lambda_psi = pj.at("lambda_psi").get<std::array<double, 2>>();
    p.tau = pj.at("tau").get<double>();
    p.sigma2_alpha = pj.at("sigma2_alpha").get<double>();
    p.sigma2_beta = pj.at("sigma2_beta").get<Vec4>();
    p.sigma2_gamma = pj.at("sigma2_gamma").get<Vec4>();
    s.particles.push_back(p);
  }
  const double dt_max = s.dose_max * s.time_max;
  for (const auto& rj : j.at("cells")) {
    std::vector<SurfaceParams> row;
    for (const auto& cj : rj) {
      SurfaceParams c;
      c.alpha = cj.at("alpha").get<double>();
      const auto phi = cj.at("phi").get<std::array<double, 2>>();
      c.dose = SplineComponent{phi[0], phi[1], cj.at("beta").get<Vec4>(), s.dose_max};
      const auto psi = cj.at("psi").get<std::array<double, 2>>();
      c.time = SplineComponent{psi[0], psi[1], cj.at("gamma").get<Vec4>(), s.time_max};
      c.rho = cj.at("rho").get<int>() != 0;
      if (c.rho) {
        const auto chi = cj.at("chi").get<std::array<double, 2>>();
        c.interaction = SplineComponent{chi[0], chi[1], cj.at("delta").get<Vec4>(), dt_max};
      }
      row.push_back(std::move(c));
    }
    s.cells.push_back(std::move(row));
  }
  return s;
}

ChainWriter::ChainWriter(const std::string& path, const ChainFileInfo& info)
    : out_(open_out(path)) {
  ordered_json header;
  header["schema"] = chain_schema;
  header["manifest_hash"] = info.manifest_hash;
  header["chain"] = info.chain_index;
  header["n_particles"] = info.n_particles;
  header["n_outcomes"] = info.n_outcomes;
  header["dose_max"] = info.dose_max;
  header["time_max"] = info.time_max;
  out_ << header.dump() << '\n';
  out_.flush();
}

void ChainWriter::write_draw(const HierarchyParams& state, long iteration) {
  ordered_json j;
  j["iter"] = iteration;
  j["state"] = state_to_json(state);
  out_ << j.dump() << '\n';
  out_.flush();  // an interrupted run keeps every draw written so far
}

void ChainWriter::finalize() {
  ordered_json j;
  j["complete"] = true;
  out_ << j.dump() << '\n';
  out_.flush();
}

LoadedChain read_chain_file(const std::string& path) {
  std::ifstream in = open_in(path);
  std::string line;
  if (!std::getline(in, line)) input_error(path + ": empty chain file");
  ordered_json header = ordered_json::parse(line, nullptr, true);
  if (header.value("schema", "") != std::string(chain_schema)) {
    input_error(path + ": unsupported chain schema version '" + header.value("schema", "") +
                "', expected " + chain_schema);
  }
  LoadedChain out;
  out.info.manifest_hash = header.value("manifest_hash", "");
  out.info.chain_index = header.value("chain", 0);
  out.info.n_particles = header.at("n_particles").get<int>();
  out.info.n_outcomes = header.at("n_outcomes").get<int>();
  out.info.dose_max = header.at("dose_max").get<double>();
  out.info.time_max = header.at("time_max").get<double>();
  long line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    ordered_json j;
    try {
      j = ordered_json::parse(line);
    } catch (const std::exception& ex) {
      input_error(path + ": line " + std::to_string(line_no) + ": " + ex.what());
    }
    if (j.contains("complete")) {
      out.info.complete = j.at("complete").get<bool>();
      break;
    }
    out.draws.push_back(state_from_json(j.at("state")));
  }
  return out;
}

void write_telemetry_json(const std::string& path, const ChainTelemetry& telemetry,
                          const std::string& manifest_hash) {
  ordered_json j;
  j["manifest_hash"] = manifest_hash;
  ordered_json blocks = ordered_json::array();
  for (const KnotBlockStats& b : telemetry.knot_blocks) {
    ordered_json bj;
    bj["name"] = b.name;
    bj["width"] = b.width;
    bj["proposals"] = b.proposals;
    bj["accepts"] = b.accepts;
    bj["post_proposals"] = b.post_proposals;
    bj["post_accepts"] = b.post_accepts;
    blocks.push_back(std::move(bj));
  }
  j["knot_blocks"] = std::move(blocks);
  j["rj"] = {{"birth_attempts", telemetry.rj.birth_attempts},
             {"birth_accepts", telemetry.rj.birth_accepts},
             {"death_attempts", telemetry.rj.death_attempts},
             {"death_accepts", telemetry.rj.death_accepts},
             {"skipped", telemetry.rj.skipped}};
  j["log_posterior_trace"] = telemetry.log_posterior_trace;
  std::ofstream out = open_out(path);
  out << j.dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// Config plumbing and manifest
// ---------------------------------------------------------------------------

namespace {
ordered_json gamma_to_json(const GammaPrior& g) { return {{"shape", g.shape}, {"rate", g.rate}}; }
ordered_json normal_to_json(const NormalPrior& n) { return {{"mean", n.mean}, {"var", n.var}}; }

void gamma_overlay(GammaPrior& g, const ordered_json& j) {
  g.shape = j.value("shape", g.shape);
  g.rate = j.value("rate", g.rate);
}
void normal_overlay(NormalPrior& n, const ordered_json& j) {
  n.mean = j.value("mean", n.mean);
  n.var = j.value("var", n.var);
}
}  // namespace

ordered_json prior_to_json(const PriorConfig& cfg) {
  ordered_json j;
  j["eps_precision"] = gamma_to_json(cfg.eps_precision);
  j["alpha_precision"] = gamma_to_json(cfg.alpha_precision);
  j["beta_precision"] = gamma_to_json(cfg.beta_precision);
  j["gamma_precision"] = gamma_to_json(cfg.gamma_precision);
  j["alpha_pop"] = normal_to_json(cfg.alpha_pop);
  j["beta_pop"] = normal_to_json(cfg.beta_pop);
  j["gamma_pop"] = normal_to_json(cfg.gamma_pop);
  j["inter_coef"] = normal_to_json(cfg.inter_coef);
  j["lambda_phi1"] = gamma_to_json(cfg.lambda_phi1);
  j["lambda_phi2"] = gamma_to_json(cfg.lambda_phi2);
  j["lambda_psi1"] = gamma_to_json(cfg.lambda_psi1);
  j["lambda_psi2"] = gamma_to_json(cfg.lambda_psi2);
  j["chi_prior"] = {{"a1", cfg.chi_prior.a1},
                    {"b1", cfg.chi_prior.b1},
                    {"a2", cfg.chi_prior.a2},
                    {"b2", cfg.chi_prior.b2}};
  j["pin_coef2"] = cfg.pin_coef2;
  j["nu_support"] = cfg.nu_support;
  j["strict_pos_eps"] = cfg.strict_pos_eps;
  return j;
}

void prior_overlay_json(PriorConfig& cfg, const ordered_json& j) {
  if (j.contains("eps_precision")) gamma_overlay(cfg.eps_precision, j["eps_precision"]);
  if (j.contains("alpha_precision")) gamma_overlay(cfg.alpha_precision, j["alpha_precision"]);
  if (j.contains("beta_precision")) gamma_overlay(cfg.beta_precision, j["beta_precision"]);
  if (j.contains("gamma_precision")) gamma_overlay(cfg.gamma_precision, j["gamma_precision"]);
  if (j.contains("alpha_pop")) normal_overlay(cfg.alpha_pop, j["alpha_pop"]);
  if (j.contains("beta_pop")) normal_overlay(cfg.beta_pop, j["beta_pop"]);
  if (j.contains("gamma_pop")) normal_overlay(cfg.gamma_pop, j["gamma_pop"]);
  if (j.contains("inter_coef")) normal_overlay(cfg.inter_coef, j["inter_coef"]);
  if (j.contains("lambda_phi1")) gamma_overlay(cfg.lambda_phi1, j["lambda_phi1"]);
  if (j.contains("lambda_phi2")) gamma_overlay(cfg.lambda_phi2, j["lambda_phi2"]);
  if (j.contains("lambda_psi1")) gamma_overlay(cfg.lambda_psi1, j["lambda_psi1"]);
  if (j.contains("lambda_psi2")) gamma_overlay(cfg.lambda_psi2, j["lambda_psi2"]);
  if (j.contains("chi_prior")) {
    const auto& c = j["chi_prior"];
    cfg.chi_prior.a1 = c.value("a1", cfg.chi_prior.a1);
    cfg.chi_prior.b1 = c.value("b1", cfg.chi_prior.b1);
    cfg.chi_prior.a2 = c.value("a2", cfg.chi_prior.a2);
    cfg.chi_prior.b2 = c.value("b2", cfg.chi_prior.b2);
  }
  cfg.pin_coef2 = j.value("pin_coef2", cfg.pin_coef2);
  if (j.contains("nu_support")) cfg.nu_support = j["nu_support"].get<std::vector<int>>();
  cfg.strict_pos_eps = j.value("strict_pos_eps", cfg.strict_pos_eps);
  cfg.validate();
}

ordered_json sampler_to_json(const SamplerConfig& cfg) {
  ordered_json j;
  j["n_burnin"] = cfg.n_burnin;
  j["n_samples"] = cfg.n_samples;
  j["thin"] = cfg.thin;
  j["adapt_interval"] = cfg.adapt_interval;
  j["target_accept_lo"] = cfg.target_accept_lo;
  j["target_accept_hi"] = cfg.target_accept_hi;
  j["initial_step_frac"] = cfg.initial_step_frac;
  j["rj_move_rate"] = cfg.rj_move_rate;
  j["seed"] = cfg.seed;
  return j;
}

void sampler_overlay_json(SamplerConfig& cfg, const ordered_json& j) {
  cfg.n_burnin = j.value("n_burnin", cfg.n_burnin);
  cfg.n_samples = j.value("n_samples", cfg.n_samples);
  cfg.thin = j.value("thin", cfg.thin);
  cfg.adapt_interval = j.value("adapt_interval", cfg.adapt_interval);
  cfg.target_accept_lo = j.value("target_accept_lo", cfg.target_accept_lo);
  cfg.target_accept_hi = j.value("target_accept_hi", cfg.target_accept_hi);
  cfg.initial_step_frac = j.value("initial_step_frac", cfg.initial_step_frac);
  cfg.rj_move_rate = j.value("rj_move_rate", cfg.rj_move_rate);
  cfg.seed = j.value("seed", cfg.seed);
  cfg.validate();
}

Manifest make_manifest(const ordered_json& run_config, const std::string& data_file,
                       const std::string& data_hash) {
  Manifest m;
  m.body["schema"] = manifest_schema;
  m.body["software_version"] = software_version;
  m.body["data_file"] = data_file;
  m.body["data_hash"] = data_hash;
  m.body["config"] = run_config;
  m.hash = fnv1a64_hex(m.body.dump());
  return m;
}

void write_manifest(const std::string& path, const Manifest& m) {
  ordered_json j = m.body;
  j["manifest_hash"] = m.hash;
  std::ofstream out = open_out(path);
  out << j.dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// Summary CSVs
// ---------------------------------------------------------------------------

namespace {

std::ofstream open_csv(const std::string& path, const std::string& manifest_hash) {
  std::ofstream out = open_out(path);
  out << "# manifest_hash=" << manifest_hash << '\n';
  return out;
}

void write_summary_fields(std::ofstream& out, const Summary& s) {
  out << format_double(s.mean) << ',' << format_double(s.median) << ',' << format_double(s.q025)
      << ',' << format_double(s.q975);
}

}  // namespace

void write_risk_summary_csv(const std::string& path, const RiskSummary& rs,
                            const std::string& manifest_hash) {
  std::ofstream out = open_csv(path, manifest_hash);
  out << "particle,outcome,parameter,mean,median,q025,q975\n";
  for (const RiskCell& c : rs.cells) {
    const std::string prefix =
        std::to_string(c.particle + 1) + ',' + std::to_string(c.outcome + 1) + ',';
    const std::pair<const char*, const Summary*> rows[] = {
        {"maximal_safe_dose", &c.maximal_safe_dose},
        {"maximal_safe_time", &c.maximal_safe_time},
        {"overall_dose_slope", &c.overall_dose_slope},
        {"overall_time_slope", &c.overall_time_slope},
        {"maximal_response", &c.maximal_response},
    };
    for (const auto& [name, s] : rows) {
      out << prefix << name << ',';
      write_summary_fields(out, *s);
      out << '\n';
    }
    const std::string p = format_double(c.inclusion_probability);
    out << prefix << "inclusion_probability," << p << ',' << p << ',' << p << ',' << p << '\n';
  }
}

void write_conditional_msd_csv(const std::string& path, const RiskSummary& rs,
                               const std::string& manifest_hash) {
  std::ofstream out = open_csv(path, manifest_hash);
  out << "particle,outcome,time,mean,median,q025,q975\n";
  for (const RiskCell& c : rs.cells) {
    for (std::size_t k = 0; k < rs.time_grid.size(); ++k) {
      out << c.particle + 1 << ',' << c.outcome + 1 << ',' << format_double(rs.time_grid[k])
          << ',';
      write_summary_fields(out, c.conditional_msd[k]);
      out << '\n';
    }
  }
}

void write_surface_csv(const std::string& path, const SurfaceSummary& ss,
                       const std::string& manifest_hash) {
  std::ofstream out = open_csv(path, manifest_hash);
  out << "particle,outcome,dose,time,mean,median,q025,q975\n";
  const std::size_t nt = ss.grid.times.size();
  for (const SurfaceCellSummary& c : ss.cells) {
    for (std::size_t di = 0; di < ss.grid.doses.size(); ++di) {
      for (std::size_t ti = 0; ti < nt; ++ti) {
        const std::size_t at = di * nt + ti;
        out << c.particle + 1 << ',' << c.outcome + 1 << ',' << format_double(ss.grid.doses[di])
            << ',' << format_double(ss.grid.times[ti]) << ',' << format_double(c.mean[at]) << ','
            << format_double(c.median[at]) << ',' << format_double(c.q025[at]) << ','
            << format_double(c.q975[at]) << '\n';
      }
    }
  }
}

void write_components_csv(const std::string& path, const std::vector<CurveSummary>& curves,
                          const std::string& manifest_hash) {
  std::ofstream out = open_csv(path, manifest_hash);
  out << "particle,outcome,component,x,mean,median,q025,q975,sim_lo,sim_hi,include_fraction\n";
  for (const CurveSummary& c : curves) {
    for (std::size_t k = 0; k < c.x.size(); ++k) {
      out << c.particle + 1 << ',' << c.outcome + 1 << ',' << c.component << ','
          << format_double(c.x[k]) << ',' << format_double(c.mean[k]) << ','
          << format_double(c.median[k]) << ',' << format_double(c.q025[k]) << ','
          << format_double(c.q975[k]) << ',' << format_double(c.sim_lo[k]) << ','
          << format_double(c.sim_hi[k]) << ',' << format_double(c.include_fraction) << '\n';
    }
  }
}

void write_safe_exposure_csv(const std::string& path, const SafeExposureMap& map,
                             const std::string& manifest_hash) {
  std::ofstream out = open_csv(path, manifest_hash);
  out << "particle,outcome,dose,time,median_relative_response\n";
  const std::size_t nt = map.grid.times.size();
  for (const SafeExposureCell& c : map.cells) {
    for (std::size_t di = 0; di < map.grid.doses.size(); ++di) {
      for (std::size_t ti = 0; ti < nt; ++ti) {
        out << c.particle + 1 << ',' << c.outcome + 1 << ',' << format_double(map.grid.doses[di])
            << ',' << format_double(map.grid.times[ti]) << ','
            << format_double(c.median_rel[di * nt + ti]) << '\n';
      }
    }
  }
}

void write_pit_csv(const std::string& path, const PitResult& pit,
                   const std::string& manifest_hash) {
  std::ofstream out = open_csv(path, manifest_hash);
  out << "bin_lo,bin_hi,count\n";
  const int n = static_cast<int>(pit.counts.size());
  for (int k = 0; k < n; ++k) {
    out << format_double(static_cast<double>(k) / n) << ','
        << format_double(static_cast<double>(k + 1) / n) << ',' << pit.counts[k] << '\n';
  }
}

void write_ppc_csv(const std::string& path, const std::vector<PpcCell>& cells,
                   const std::string& manifest_hash) {
  std::ofstream out = open_csv(path, manifest_hash);
  out << "particle,outcome,pred_mean,pred_lo,pred_hi,empirical_mean,inside\n";
  for (const PpcCell& c : cells) {
    out << c.particle + 1 << ',' << c.outcome + 1 << ',' << format_double(c.mean) << ','
        << format_double(c.lo) << ',' << format_double(c.hi) << ',' << format_double(c.empirical)
        << ',' << (c.inside ? 1 : 0) << '\n';
  }
}

void write_convergence_csv(const std::string& path, const std::vector<ConvergenceParam>& params,
                           const std::string& manifest_hash) {
  std::ofstream out = open_csv(path, manifest_hash);
  out << "parameter,available,rhat,ess,cond_fraction\n";
  for (const ConvergenceParam& p : params) {
    out << p.name << ',' << (p.available ? 1 : 0) << ','
        << (p.available ? format_double(p.rhat) : "") << ','
        << (p.available ? format_double(p.ess) : "") << ',' << format_double(p.cond_fraction)
        << '\n';
  }
}

}  // namespace toxsurf::io
