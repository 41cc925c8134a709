// End-to-end checks of the command-line tool: exit codes, file contracts,
// determinism of fit outputs, and summarize/diagnose round trips.
// Usage: cli_tests <path-to-toxsurf-binary>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

namespace fs = std::filesystem;

namespace {

int failures = 0;

void check(bool ok, const std::string& what) {
  std::cout << (ok ? "  ok: " : "  FAILED: ") << what << "\n";
  if (!ok) ++failures;
}

int run(const std::string& cmd) {
  const int rc = std::system((cmd + " > /dev/null 2>&1").c_str());
  return WEXITSTATUS(rc);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::cerr << "usage: cli_tests <toxsurf binary>\n";
    return 2;
  }
  const std::string bin = argv[1];
  const fs::path root = fs::temp_directory_path() / "toxsurf_cli_test";
  fs::remove_all(root);
  fs::create_directories(root);

  std::cout << "simulate writes deterministic dataset and truth files\n";
  const fs::path sim1 = root / "sim1";
  const fs::path sim2 = root / "sim2";
  check(run(bin + " simulate --out " + sim1.string() + " --seed 7") == 0, "simulate exits 0");
  check(run(bin + " simulate --out " + sim2.string() + " --seed 7") == 0, "simulate again");
  check(fs::exists(sim1 / "dataset.csv"), "dataset.csv exists");
  check(fs::exists(sim1 / "truth.json"), "truth.json exists");
  check(slurp(sim1 / "dataset.csv") == slurp(sim2 / "dataset.csv"),
        "same seed gives identical dataset files");

  std::cout << "fit produces manifest, chains and telemetry\n";
  const fs::path fit1 = root / "fit1";
  auto fit_cmd_seeded = [&](const std::string& out, int seed) {
    return bin + " fit --data " + (sim1 / "dataset.csv").string() +
           " --normalization pre --seed " + std::to_string(seed) +
           " --chains 2 --n-burnin 60 --n-samples 25 --thin 2 --out " + out;
  };
  check(run(fit_cmd_seeded(fit1.string(), 11)) == 0, "fit exits 0");
  check(fs::exists(fit1 / "manifest.json"), "manifest written");
  check(fs::exists(fit1 / "chain_0.jsonl"), "chain 0 written");
  check(fs::exists(fit1 / "chain_1.jsonl"), "chain 1 written");
  check(fs::exists(fit1 / "telemetry_0.json"), "telemetry written");

  std::cout << "fit is byte-identical under the same manifest inputs\n";
  const fs::path fit2 = root / "fit2";
  check(run(fit_cmd_seeded(fit2.string(), 11)) == 0, "second fit exits 0");
  check(slurp(fit1 / "chain_0.jsonl") == slurp(fit2 / "chain_0.jsonl"), "chain 0 bytes equal");
  check(slurp(fit1 / "chain_1.jsonl") == slurp(fit2 / "chain_1.jsonl"), "chain 1 bytes equal");
  check(slurp(fit1 / "manifest.json") == slurp(fit2 / "manifest.json"), "manifest bytes equal");

  std::cout << "chain files carry 25 draws each and the manifest hash\n";
  {
    std::ifstream in(fit1 / "chain_0.jsonl");
    std::string line;
    std::getline(in, line);
    const auto header = nlohmann::json::parse(line);
    const auto manifest = nlohmann::json::parse(slurp(fit1 / "manifest.json"));
    check(header.at("manifest_hash") == manifest.at("manifest_hash"),
          "chain header hash matches manifest");
    long draws = 0;
    bool complete = false;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto j = nlohmann::json::parse(line);
      if (j.contains("complete")) {
        complete = j["complete"].get<bool>();
      } else {
        ++draws;
      }
    }
    check(draws == 25, "25 retained draws");
    check(complete, "file marked complete");
  }

  std::cout << "summarize writes plot-ready tables stamped with the hash\n";
  const fs::path sum1 = root / "sum1";
  check(run(bin + " summarize --out " + sum1.string() + " --grid 21 " +
            (fit1 / "chain_0.jsonl").string() + " " + (fit1 / "chain_1.jsonl").string()) == 0,
        "summarize exits 0");
  for (const char* f : {"risk_summary.csv", "conditional_msd.csv", "surface.csv",
                        "components.csv", "safe_exposure.csv"}) {
    check(fs::exists(sum1 / f), std::string(f) + " exists");
  }
  {
    const auto manifest = nlohmann::json::parse(slurp(fit1 / "manifest.json"));
    std::ifstream in(sum1 / "risk_summary.csv");
    std::string line;
    std::getline(in, line);
    check(line == "# manifest_hash=" + manifest.at("manifest_hash").get<std::string>(),
          "summary stamped with manifest hash");
    // Inclusion probabilities stay in [0, 1].
    std::getline(in, line);  // header
    bool ok = true;
    while (std::getline(in, line)) {
      if (line.find(",inclusion_probability,") == std::string::npos) continue;
      const auto pos = line.rfind(',');
      const double v = std::stod(line.substr(pos + 1));
      ok = ok && v >= 0.0 && v <= 1.0;
    }
    check(ok, "inclusion probabilities bounded");
  }

  std::cout << "summarize refuses mixed manifests unless forced\n";
  const fs::path fit3 = root / "fit3";
  check(run(fit_cmd_seeded(fit3.string(), 12)) == 0, "fit with another seed");
  const std::string mixed = (fit1 / "chain_0.jsonl").string() + " " +
                            (fit3 / "chain_0.jsonl").string();
  check(run(bin + " summarize --out " + (root / "summix").string() + " " + mixed) == 1,
        "mixed manifests exit 1");
  check(run(bin + " summarize --force --out " + (root / "summix").string() + " " + mixed) == 0,
        "forced mixed manifests exit 0");

  std::cout << "diagnose writes PIT, predictive and convergence tables\n";
  const fs::path diag = root / "diag";
  check(run(bin + " diagnose --data " + (sim1 / "dataset.csv").string() +
            " --normalization pre --seed 5 --out " + diag.string() + " " +
            (fit1 / "chain_0.jsonl").string() + " " + (fit1 / "chain_1.jsonl").string()) == 0,
        "diagnose exits 0");
  for (const char* f : {"pit.csv", "ppc_mean.csv", "convergence.csv", "diagnostics.json"}) {
    check(fs::exists(diag / f), std::string(f) + " exists");
  }

  std::cout << "diagnose on an empty-draw chain reports it as unavailable\n";
  const fs::path fit0 = root / "fit0";
  check(run(bin + " fit --data " + (sim1 / "dataset.csv").string() +
            " --normalization pre --seed 3 --n-burnin 15 --n-samples 0 --out " + fit0.string()) ==
            0,
        "zero-sample fit exits 0");
  check(run(bin + " diagnose --data " + (sim1 / "dataset.csv").string() +
            " --normalization pre --out " + (root / "diag0").string() + " " +
            (fit0 / "chain_0.jsonl").string()) == 1,
        "empty-draw diagnose exits 1");

  std::cout << "input errors exit with code 1\n";
  check(run(bin + " fit --data /nonexistent.csv --out " + (root / "x").string()) == 1,
        "missing data file");
  {
    std::ofstream bad(root / "bad.csv");
    bad << "particle,outcome,replicate,dose,time,value\n1,1,1,0,0,250\n";
  }
  check(run(bin + " fit --data " + (root / "bad.csv").string() + " --out " +
            (root / "y").string()) == 1,
        "out-of-range raw value");
  check(run(bin + " nonsense") == 1, "unknown subcommand");

  std::cout << "warm start resumes from a stored draw\n";
  const fs::path fit4 = root / "fit4";
  check(run(bin + " fit --data " + (sim1 / "dataset.csv").string() +
            " --normalization pre --seed 13 --n-burnin 10 --n-samples 5 --warm-start " +
            (fit1 / "chain_0.jsonl").string() + " --out " + fit4.string()) == 0,
        "warm-start fit exits 0");

  fs::remove_all(root);
  if (failures == 0) {
    std::cout << "ALL CLI CHECKS PASSED\n";
    return 0;
  }
  std::cout << failures << " CLI CHECKS FAILED\n";
  return 1;
}
