#ifndef QCOLLIDE_SCENARIOS_HPP
#define QCOLLIDE_SCENARIOS_HPP

#include <cstdint>
#include <filesystem>

#include <json.hpp>

#include "qcollide/emergent.hpp"
#include "qcollide/filtering.hpp"

// Config-driven runner: JSON scenarios, the built-in preset catalog, CSV and
// manifest emission.
namespace qcollide {

using Json = nlohmann::json;

// Operator expression -> dense matrix. Builders: identity, zero, pauli_x/y/z,
// diag, number, position, momentum, oscillator_hamiltonian, grid, lowering,
// raising, matrix (explicit escape hatch), scaled, sum, power, kron, embed.
Matrix parse_operator(const Json& spec);

PreparationFamily parse_preparation(const Json& spec);

struct ScenarioConfig {
  std::string name;
  double hbar = 1.0;
  CycleSpec cycle;
  std::vector<PreparationFamily> preps;
  DensityMatrix rho0;
  double T = 1.0;
  std::vector<int> n_list;        // collision counts, tau = T/n
  std::vector<double> tau_sweep;  // decreasing, for limit extrapolation
  std::string mode = "unconditional";
  int ntraj = 1;
  std::uint64_t seed = 1;
  std::optional<FeedbackSpec> feedback;
  std::optional<PointerBasis> pointer;
  std::vector<Json> outputs;
  std::vector<Json> checks;
  Json raw;  // canonical source document
};

// Throws std::invalid_argument with a field path on any schema violation.
ScenarioConfig parse_scenario(const Json& doc);

std::vector<std::string> preset_names();
Json preset_config(const std::string& name);

struct CheckResult {
  std::string name;
  bool pass = false;
  double value = 0.0;
  double tolerance = 0.0;
};

struct RunResult {
  std::vector<CheckResult> checks;
  std::vector<std::string> files;
  bool ok() const {
    for (const auto& c : checks)
      if (!c.pass) return false;
    return true;
  }
};

// Executes the scenario: sweeps, requested CSV series, declared checks, and
// the JSON run manifest (written last).
RunResult run_scenario(const ScenarioConfig& cfg,
                       const std::filesystem::path& out_dir);

// Full-precision round-trip decimal formatting used by every CSV/manifest.
std::string format_double(double v);

// FNV-1a over the canonical dump; recorded in the manifest.
std::uint64_t config_hash(const Json& doc);

}  // namespace qcollide

#endif
