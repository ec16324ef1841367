// qcollide command-line front end: run JSON scenario configs, materialize the
// built-in presets, and validate configs without running them.
//
// Exit codes: 0 success, 2 usage/config error, 3 a declared check failed.
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "qcollide/scenarios.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitCheckFailed = 3;

std::filesystem::path default_out_dir() {
  if (const char* env = std::getenv("QCOLLIDE_OUT_DIR")) return env;
  return std::filesystem::current_path();
}

struct Overrides {
  int tau_points = 0;   // resample the tau sweep to this many points
  int ntraj = 0;        // override the ensemble size
  double hbar = 0.0;    // override hbar (0 = keep)
  std::uint64_t seed = 0;
  bool seed_set = false;
};

void apply_overrides(qcollide::Json& doc, const Overrides& ov) {
  if (ov.hbar > 0.0) doc["hbar"] = ov.hbar;
  if (ov.ntraj > 0) {
    if (!doc.contains("ensemble")) doc["ensemble"] = qcollide::Json::object();
    doc["ensemble"]["ntraj"] = ov.ntraj;
  }
  if (ov.seed_set) {
    if (!doc.contains("ensemble")) doc["ensemble"] = qcollide::Json::object();
    doc["ensemble"]["seed"] = ov.seed;
  }
  if (ov.tau_points > 1 && doc.contains("sweep") &&
      doc["sweep"].contains("tau_list") && doc["sweep"]["tau_list"].size() >= 2) {
    double hi = doc["sweep"]["tau_list"].front().get<double>();
    double lo = doc["sweep"]["tau_list"].back().get<double>();
    std::vector<double> taus;
    for (int i = 0; i < ov.tau_points; ++i)
      taus.push_back(hi * std::pow(lo / hi, double(i) / (ov.tau_points - 1)));
    doc["sweep"]["tau_list"] = taus;
  }
}

qcollide::Json load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open config file '" + path + "'");
  qcollide::Json doc;
  in >> doc;
  return doc;
}

int execute(qcollide::Json doc, const Overrides& ov,
            const std::filesystem::path& out_dir) {
  apply_overrides(doc, ov);
  qcollide::ScenarioConfig cfg = qcollide::parse_scenario(doc);
  qcollide::RunResult result = qcollide::run_scenario(cfg, out_dir);
  for (const auto& c : result.checks)
    std::cout << (c.pass ? "PASS " : "FAIL ") << c.name
              << "  value=" << qcollide::format_double(c.value)
              << "  tolerance=" << qcollide::format_double(c.tolerance) << "\n";
  std::cout << "wrote " << result.files.size() << " file(s) to "
            << out_dir.string() << "\n";
  return result.ok() ? kExitOk : kExitCheckFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"collisional open-quantum-system engine"};
  app.require_subcommand(1);

  Overrides ov;
  std::string out_dir_s;
  app.add_option("--out", out_dir_s, "output directory (default: $QCOLLIDE_OUT_DIR or cwd)");
  app.add_option("--tau-points", ov.tau_points, "resample the tau sweep to N log-spaced points");
  app.add_option("--ntraj", ov.ntraj, "override the trajectory ensemble size");
  app.add_option("--hbar", ov.hbar, "override hbar");
  app.add_option("--seed", ov.seed, "override the ensemble seed")
      ->each([&](const std::string&) { ov.seed_set = true; });

  std::string config_path;
  auto* run = app.add_subcommand("run", "run a JSON scenario config");
  run->fallthrough();
  run->add_option("config", config_path, "path to the config file")->required();

  std::string preset_name;
  auto* preset = app.add_subcommand("preset", "run a built-in preset");
  preset->fallthrough();
  preset->add_option("name", preset_name, "preset name (see `list`)")->required();

  auto* list = app.add_subcommand("list", "list the built-in presets");

  std::string validate_path;
  auto* validate = app.add_subcommand("validate", "parse and check a config, run nothing");
  validate->fallthrough();
  validate->add_option("config", validate_path, "path to the config file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  std::filesystem::path out_dir =
      out_dir_s.empty() ? default_out_dir() : std::filesystem::path(out_dir_s);

  try {
    if (list->parsed()) {
      for (const auto& n : qcollide::preset_names()) std::cout << n << "\n";
      return kExitOk;
    }
    if (validate->parsed()) {
      qcollide::Json doc = load_config(validate_path);
      apply_overrides(doc, ov);
      qcollide::ScenarioConfig cfg = qcollide::parse_scenario(doc);
      char hash[32];
      std::snprintf(hash, sizeof hash, "%016llx",
                    (unsigned long long)qcollide::config_hash(cfg.raw));
      std::cout << "ok: " << cfg.name << " (config hash " << hash << ")\n";
      return kExitOk;
    }
    if (run->parsed()) return execute(load_config(config_path), ov, out_dir);
    if (preset->parsed())
      return execute(qcollide::preset_config(preset_name), ov, out_dir);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  return kExitConfig;
}
