#include "qcollide/scenarios.hpp"

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace qcollide {

namespace {

[[noreturn]] void fail(const std::string& where, const std::string& what) {
  throw std::invalid_argument("config error at '" + where + "': " + what);
}

double need_number(const Json& j, const std::string& key,
                   const std::string& where) {
  if (!j.contains(key) || !j[key].is_number())
    fail(where, "missing numeric field '" + key + "'");
  return j[key].get<double>();
}

Eigen::Index need_dim(const Json& j, const std::string& where) {
  if (!j.contains("dim") || !j["dim"].is_number_integer())
    fail(where, "missing integer field 'dim'");
  auto d = j["dim"].get<Eigen::Index>();
  if (d < 2) fail(where, "'dim' must be >= 2");
  return d;
}

Polynomial parse_poly(const Json& j, const std::string& where) {
  if (!j.is_array()) fail(where, "polynomial must be an array of coefficients");
  Polynomial p;
  for (const auto& c : j) {
    if (!c.is_number()) fail(where, "polynomial coefficients must be numbers");
    p.coeffs.push_back(c.get<double>());
  }
  if (p.coeffs.empty()) p.coeffs.push_back(0.0);
  return p;
}

}  // namespace

Matrix parse_operator(const Json& spec) {
  if (!spec.is_object() || !spec.contains("builder") ||
      !spec["builder"].is_string())
    fail("operator", "expected an object with a 'builder' string");
  const std::string b = spec["builder"].get<std::string>();
  const std::string where = "operator/" + b;

  if (b == "pauli_x") return ops::pauli_x();
  if (b == "pauli_y") return ops::pauli_y();
  if (b == "pauli_z") return ops::pauli_z();
  if (b == "identity") return ops::identity(need_dim(spec, where));
  if (b == "zero") {
    auto d = need_dim(spec, where);
    return Matrix::Zero(d, d);
  }
  if (b == "diag") {
    if (!spec.contains("values") || !spec["values"].is_array())
      fail(where, "missing array 'values'");
    std::vector<double> v;
    for (const auto& x : spec["values"]) v.push_back(x.get<double>());
    return ops::diag(v);
  }
  if (b == "number") return ops::number(need_dim(spec, where));
  if (b == "lowering") return ops::lowering(need_dim(spec, where));
  if (b == "raising") return ops::lowering(need_dim(spec, where)).adjoint();
  if (b == "position" || b == "momentum") {
    auto d = need_dim(spec, where);
    double scale = spec.value("scale", 1.0);
    double hbar = spec.value("hbar", 1.0);
    return b == "position" ? ops::position(d, scale, hbar)
                           : ops::momentum(d, scale, hbar);
  }
  if (b == "oscillator_hamiltonian") {
    auto d = need_dim(spec, where);
    return ops::oscillator_hamiltonian(d, spec.value("omega", 1.0),
                                       spec.value("hbar", 1.0));
  }
  if (b == "grid") {
    auto d = need_dim(spec, where);
    return ops::grid_operator(d, need_number(spec, "lo", where),
                              need_number(spec, "hi", where));
  }
  if (b == "matrix") {
    if (!spec.contains("re") || !spec["re"].is_array())
      fail(where, "missing matrix 're'");
    auto rows = spec["re"].size();
    Matrix m(rows, rows);
    for (std::size_t i = 0; i < rows; ++i) {
      if (spec["re"][i].size() != rows) fail(where, "'re' must be square");
      for (std::size_t j = 0; j < rows; ++j) {
        double re = spec["re"][i][j].get<double>();
        double im = 0.0;
        if (spec.contains("im")) im = spec["im"][i][j].get<double>();
        m(i, j) = Complex(re, im);
      }
    }
    return m;
  }
  if (b == "scaled") {
    if (!spec.contains("of")) fail(where, "missing operand 'of'");
    return need_number(spec, "factor", where) * parse_operator(spec["of"]);
  }
  if (b == "sum") {
    if (!spec.contains("terms") || !spec["terms"].is_array() ||
        spec["terms"].empty())
      fail(where, "missing nonempty array 'terms'");
    Matrix m = parse_operator(spec["terms"][0]);
    for (std::size_t i = 1; i < spec["terms"].size(); ++i)
      m += parse_operator(spec["terms"][i]);
    return m;
  }
  if (b == "power") {
    if (!spec.contains("of")) fail(where, "missing operand 'of'");
    int k = spec.value("k", 2);
    if (k < 0) fail(where, "'k' must be nonnegative");
    Matrix base = parse_operator(spec["of"]);
    Matrix m = Matrix::Identity(base.rows(), base.cols());
    for (int i = 0; i < k; ++i) m = m * base;
    return m;
  }
  if (b == "kron") {
    if (!spec.contains("factors") || !spec["factors"].is_array() ||
        spec["factors"].empty())
      fail(where, "missing nonempty array 'factors'");
    std::vector<Matrix> fs;
    for (const auto& f : spec["factors"]) fs.push_back(parse_operator(f));
    return kron(fs);
  }
  if (b == "embed") {
    if (!spec.contains("of") || !spec.contains("dims") ||
        !spec.contains("factor"))
      fail(where, "needs 'of', 'dims', 'factor'");
    TensorLayout layout;
    for (const auto& d : spec["dims"])
      layout.dims.push_back(d.get<Eigen::Index>());
    return embed(parse_operator(spec["of"]), layout,
                 spec["factor"].get<std::size_t>());
  }
  fail("operator", "unknown builder '" + b + "'");
}

PreparationFamily parse_preparation(const Json& spec) {
  if (!spec.is_object() || !spec.contains("kind") || !spec["kind"].is_string())
    fail("preparation", "expected an object with a 'kind' string");
  const std::string k = spec["kind"].get<std::string>();
  const std::string where = "preparation/" + k;
  if (k == "eigenstate") {
    if (!spec.contains("m")) fail(where, "missing operator 'm'");
    return PreparationFamily::eigenstate(parse_operator(spec["m"]),
                                         need_number(spec, "value", where));
  }
  if (k == "moment_gaussian") {
    auto d = need_dim(spec, where);
    return PreparationFamily::moment_gaussian(
        d, need_number(spec, "lo", where), need_number(spec, "hi", where),
        parse_poly(spec.value("mean", Json::array({0.0})), where + "/mean"),
        parse_poly(spec.value("var", Json::array({1.0})), where + "/var"));
  }
  if (k == "pure_gaussian") {
    auto d = need_dim(spec, where);
    auto f = PreparationFamily::pure_gaussian(
        d, need_number(spec, "width_amp", where), spec.value("width_exp", 0.0),
        spec.value("osc_scale", 1.0), spec.value("hbar", 1.0));
    if (spec.contains("mean_x"))
      f.mean_x_poly = parse_poly(spec["mean_x"], where + "/mean_x");
    if (spec.contains("mean_p"))
      f.mean_p_poly = parse_poly(spec["mean_p"], where + "/mean_p");
    return f;
  }
  if (k == "explicit") {
    if (!spec.contains("rho")) fail(where, "missing operator 'rho'");
    return PreparationFamily::explicit_state_of(parse_operator(spec["rho"]));
  }
  fail("preparation", "unknown kind '" + k + "'");
}

namespace {

CouplingSchedule parse_schedule(const Json& j) {
  CouplingSchedule s;
  if (!j.is_object()) fail("schedule", "expected an object");
  s.amplitude = need_number(j, "amplitude", "schedule");
  s.exponent = j.value("exponent", 0.0);
  std::string profile = j.value("profile", "constant");
  if (profile == "constant")
    s.profile = SwitchingProfile::Constant;
  else if (profile == "delta_like")
    s.profile = SwitchingProfile::DeltaLike;
  else if (profile == "symmetric_bump")
    s.profile = SwitchingProfile::SymmetricBump;
  else if (profile == "custom") {
    s.profile = SwitchingProfile::Custom;
    if (!j.contains("samples") || !j["samples"].is_array() ||
        j["samples"].empty())
      fail("schedule", "custom profile requires nonempty 'samples'");
    for (const auto& v : j["samples"]) s.samples.push_back(v.get<double>());
  } else
    fail("schedule", "unknown profile '" + profile + "'");
  return s;
}

}  // namespace

ScenarioConfig parse_scenario(const Json& doc) {
  if (!doc.is_object()) fail("$", "document must be a JSON object");
  ScenarioConfig cfg;
  cfg.raw = doc;
  if (!doc.contains("name") || !doc["name"].is_string())
    fail("name", "missing string");
  cfg.name = doc["name"].get<std::string>();
  cfg.hbar = doc.value("hbar", 1.0);
  if (cfg.hbar <= 0.0) fail("hbar", "must be positive");
  cfg.cycle.hbar = cfg.hbar;

  if (!doc.contains("system") || !doc["system"].is_object())
    fail("system", "missing object");
  const auto& sys = doc["system"];
  if (!sys.contains("dims") || !sys["dims"].is_array() || sys["dims"].empty())
    fail("system/dims", "missing nonempty array");
  for (const auto& d : sys["dims"])
    cfg.cycle.system_layout.dims.push_back(d.get<Eigen::Index>());
  if (!sys.contains("h0")) fail("system/h0", "missing operator");
  cfg.cycle.s0 = parse_operator(sys["h0"]);

  if (!doc.contains("ancillas") || !doc["ancillas"].is_array() ||
      doc["ancillas"].empty())
    fail("ancillas", "missing nonempty array");
  for (const auto& a : doc["ancillas"]) {
    auto d = need_dim(a, "ancillas[]");
    cfg.cycle.ancilla_dims.push_back(d);
    cfg.cycle.m0.push_back(a.contains("m0") ? parse_operator(a["m0"])
                                            : Matrix::Zero(d, d));
    if (!a.contains("preparation")) fail("ancillas[]", "missing 'preparation'");
    cfg.preps.push_back(parse_preparation(a["preparation"]));
  }

  if (!doc.contains("substeps") || !doc["substeps"].is_array() ||
      doc["substeps"].empty())
    fail("substeps", "missing nonempty array");
  for (const auto& step : doc["substeps"]) {
    if (!step.is_array() || step.empty())
      fail("substeps[]", "each substep must be a nonempty array");
    std::vector<SubInteraction> terms;
    for (const auto& t : step) {
      SubInteraction si;
      if (!t.contains("s") || !t.contains("m"))
        fail("substeps[][]", "interaction needs operators 's' and 'm'");
      si.s_op = parse_operator(t["s"]);
      si.m_op = parse_operator(t["m"]);
      si.ancilla = t.value("ancilla", std::size_t(0));
      si.schedule = t.contains("schedule") ? parse_schedule(t["schedule"])
                                           : CouplingSchedule{};
      terms.push_back(std::move(si));
    }
    cfg.cycle.substeps.push_back(std::move(terms));
  }
  try {
    cfg.cycle.validate();
  } catch (const std::exception& e) {
    fail("cycle", e.what());
  }

  if (!doc.contains("initial_state")) fail("initial_state", "missing");
  const auto& init = doc["initial_state"];
  if (init.contains("matrix")) {
    cfg.rho0 = make_density(parse_operator(init["matrix"]));
  } else if (init.contains("preparation")) {
    cfg.rho0 =
        parse_preparation(init["preparation"]).realize(init.value("tau", 1.0));
  } else {
    fail("initial_state", "needs 'matrix' or 'preparation'");
  }
  if (cfg.rho0.dim() != cfg.cycle.system_dim())
    fail("initial_state", "dimension does not match the system");

  if (!doc.contains("sweep") || !doc["sweep"].is_object())
    fail("sweep", "missing object");
  const auto& sweep = doc["sweep"];
  cfg.T = need_number(sweep, "T", "sweep");
  if (cfg.T <= 0.0) fail("sweep/T", "must be positive");
  if (sweep.contains("n_list")) {
    for (const auto& n : sweep["n_list"]) {
      int v = n.get<int>();
      if (v < 1) fail("sweep/n_list", "entries must be >= 1");
      cfg.n_list.push_back(v);
    }
  }
  if (sweep.contains("tau_list")) {
    for (const auto& t : sweep["tau_list"]) cfg.tau_sweep.push_back(t.get<double>());
    for (std::size_t i = 1; i < cfg.tau_sweep.size(); ++i)
      if (cfg.tau_sweep[i] >= cfg.tau_sweep[i - 1])
        fail("sweep/tau_list", "must be strictly decreasing");
  }
  if (cfg.n_list.empty() && cfg.tau_sweep.empty())
    fail("sweep", "needs 'n_list' or 'tau_list'");

  cfg.mode = doc.value("mode", "unconditional");
  if (cfg.mode != "unconditional" && cfg.mode != "conditional" &&
      cfg.mode != "both")
    fail("mode", "must be unconditional | conditional | both");

  if (doc.contains("ensemble")) {
    cfg.ntraj = doc["ensemble"].value("ntraj", 1);
    cfg.seed = doc["ensemble"].value("seed", std::uint64_t(1));
  }
  if (cfg.mode != "unconditional" && cfg.ntraj < 1)
    fail("ensemble/ntraj", "must be >= 1 in conditional mode");

  if (doc.contains("feedback")) {
    FeedbackSpec fb;
    if (!doc["feedback"].contains("s2")) fail("feedback", "missing 's2'");
    fb.s2 = parse_operator(doc["feedback"]["s2"]);
    fb.g2 = need_number(doc["feedback"], "g2", "feedback");
    cfg.feedback = std::move(fb);
  }
  if (doc.contains("pointer_basis")) {
    PointerBasis pb;
    pb.name = doc["pointer_basis"].value("name", "custom");
    if (!doc["pointer_basis"].contains("operator"))
      fail("pointer_basis", "missing 'operator'");
    Matrix op = parse_operator(doc["pointer_basis"]["operator"]);
    Eigen::SelfAdjointEigenSolver<Matrix> es(op);
    pb.states = es.eigenvectors();
    pb.m_op = op;
    cfg.pointer = std::move(pb);
  }

  if (doc.contains("outputs"))
    for (const auto& o : doc["outputs"]) cfg.outputs.push_back(o);
  if (doc.contains("checks"))
    for (const auto& c : doc["checks"]) cfg.checks.push_back(c);
  return cfg;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::uint64_t config_hash(const Json& doc) {
  std::string s = doc.dump();
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

// ---------------------------------------------------------------------------
// Preset catalog
// ---------------------------------------------------------------------------

namespace {

Json op_scaled(double f, Json of) {
  return Json{{"builder", "scaled"}, {"factor", f}, {"of", std::move(of)}};
}

Json op_embed(Json of, std::vector<Eigen::Index> dims, std::size_t factor) {
  return Json{{"builder", "embed"},
              {"of", std::move(of)},
              {"dims", dims},
              {"factor", factor}};
}

Json qubit_plus_state() {
  return Json{{"matrix", Json{{"builder", "matrix"},
                              {"re", {{0.5, 0.5}, {0.5, 0.5}}}}}};
}

Json preset_exact_unitary_qubit() {
  return Json{
      {"name", "exact-unitary-qubit"},
      {"hbar", 1.0},
      {"system", {{"dims", {2}}, {"h0", op_scaled(0.5, {{"builder", "pauli_z"}})}}},
      {"ancillas",
       {{{"dim", 2},
         {"m0", {{"builder", "pauli_z"}}},
         {"preparation",
          {{"kind", "eigenstate"}, {"m", {{"builder", "pauli_z"}}}, {"value", 1.0}}}}}},
      {"substeps",
       {{{{"s", {{"builder", "pauli_x"}}},
          {"m", {{"builder", "pauli_z"}}},
          {"ancilla", 0},
          {"schedule", {{"amplitude", 0.7}, {"exponent", 0.0}}}}}}},
      {"initial_state", qubit_plus_state()},
      {"sweep",
       {{"T", 1.0},
        {"n_list", {1000}},
        {"tau_list", {0.1, 0.05, 0.02, 0.01, 0.005, 0.002, 0.001}}}},
      {"outputs", {{{"series", "purity"}}, {{"series", "populations"}}}},
      {"checks",
       {{{"type", "classify"}, {"expect", "exact-unitary"}},
        {{"type", "exact-unitary-purity"}, {"n", 1000}, {"tol", 1e-9}}}}};
}

Json preset_weak_potential() {
  return Json{
      {"name", "weak-potential"},
      {"hbar", 1.0},
      {"system", {{"dims", {2}}, {"h0", op_scaled(0.5, {{"builder", "pauli_z"}})}}},
      {"ancillas",
       {{{"dim", 2},
         {"m0", {{"builder", "zero"}, {"dim", 2}}},
         {"preparation",
          {{"kind", "explicit"},
           {"rho", {{"builder", "diag"}, {"values", {0.8, 0.2}}}}}}}}},
      {"substeps",
       {{{{"s", {{"builder", "pauli_x"}}},
          {"m", {{"builder", "pauli_z"}}},
          {"ancilla", 0},
          {"schedule", {{"amplitude", 0.5}, {"exponent", 0.0}}}}}}},
      {"initial_state", qubit_plus_state()},
      {"sweep",
       {{"T", 1.0},
        {"n_list", {32, 64, 128, 256, 512, 1024, 2048}},
        {"tau_list", {0.1, 0.05, 0.02, 0.01, 0.005, 0.002, 0.001}}}},
      {"outputs", {{{"series", "coherence"}, {"i", 0}, {"j", 1}}}},
      {"checks",
       {{{"type", "classify"}, {"expect", "effective-unitary"}},
        {{"type", "unitary-convergence"},
         {"ratio_lo", 1.6},
         {"ratio_hi", 2.4}}}}};
}

Json preset_zeno_qubit() {
  return Json{
      {"name", "zeno-qubit"},
      {"hbar", 1.0},
      {"system",
       {{"dims", {2}},
        {"h0", {{"builder", "zero"}, {"dim", 2}}}}},
      {"ancillas",
       {{{"dim", 64},
         {"preparation",
          {{"kind", "moment_gaussian"},
           {"dim", 64},
           {"lo", -2.0},
           {"hi", 2.0},
           {"mean", {0.0}},
           {"var", {0.01}}}}}}},
      {"substeps",
       {{{{"s", {{"builder", "diag"}, {"values", {0.5, -0.5}}}},
          {"m", {{"builder", "grid"}, {"dim", 64}, {"lo", -2.0}, {"hi", 2.0}}},
          {"ancilla", 0},
          {"schedule", {{"amplitude", 1.0}, {"exponent", -1.0}}}}}}},
      {"initial_state", qubit_plus_state()},
      {"sweep",
       {{"T", 1.0},
        {"n_list", {200}},
        {"tau_list", {0.1, 0.05, 0.02, 0.01, 0.005, 0.002, 0.001}}}},
      {"outputs",
       {{{"series", "coherence"}, {"i", 0}, {"j", 1}},
        {{"series", "zeno-analytic"}, {"delta_s", 1.0}}}},
      {"checks",
       {{{"type", "classify"}, {"expect", "zeno"}},
        {{"type", "zeno-curve"}, {"delta_s", 1.0}, {"tol", 5e-3}}}}};
}

Json preset_finite_decoherence_gaussian() {
  const double xi = 0.3, gamma = 0.5;
  return Json{
      {"name", "finite-decoherence-gaussian"},
      {"hbar", 1.0},
      {"system",
       {{"dims", {2}}, {"h0", {{"builder", "zero"}, {"dim", 2}}}}},
      {"ancillas",
       {{{"dim", 128},
         {"preparation",
          {{"kind", "moment_gaussian"},
           {"dim", 128},
           {"lo", -0.35},
           {"hi", 0.35},
           {"mean", {0.0, xi}},
           {"var", {0.0, gamma, -xi * xi}}}}}}},
      {"substeps",
       {{{{"s",
           {{"builder", "diag"},
            {"values", {1.0 / std::sqrt(2.0), -1.0 / std::sqrt(2.0)}}}},
          {"m",
           {{"builder", "grid"}, {"dim", 128}, {"lo", -0.35}, {"hi", 0.35}}},
          {"ancilla", 0},
          {"schedule", {{"amplitude", 1.0}, {"exponent", -1.0}}}}}}},
      {"initial_state", qubit_plus_state()},
      {"sweep",
       {{"T", 1.0},
        // n starts at 128: at tau = 1/64 the realized Gaussian is only ~4
        // sigma inside the grid and truncation distorts the first ratio
        {"n_list", {128, 256, 512}},
        {"tau_list",
         {1.0 / 64, 1.0 / 128, 1.0 / 256, 1.0 / 512, 1.0 / 1024, 1.0 / 2048,
          1.0 / 4096, 1.0 / 6400}}}},
      {"outputs", {{{"series", "coherence"}, {"i", 0}, {"j", 1}}}},
      {"checks",
       {{{"type", "classify"}, {"expect", "finite-decoherence"}},
        {{"type", "master-convergence"},
         {"dt", 0.002},
         {"tol_last", 0.02},
         {"ratio_lo", 1.5},
         {"ratio_hi", 2.5}}}}};
}

Json preset_two_substep_feedback() {
  const int d = 64;
  const double lambda = 5.0, dtilde = 0.05, alpha = 0.8;
  Json xhat{{"builder", "position"}, {"dim", d}, {"scale", lambda}};
  Json phat{{"builder", "momentum"}, {"dim", d}, {"scale", lambda}};
  return Json{
      {"name", "two-substep-feedback"},
      {"hbar", 1.0},
      {"system",
       {{"dims", {2}}, {"h0", op_scaled(0.3, {{"builder", "pauli_z"}})}}},
      {"ancillas",
       {{{"dim", d},
         {"m0", op_scaled(alpha, xhat)},
         {"preparation",
          {{"kind", "pure_gaussian"},
           {"dim", d},
           {"width_amp", 2.0 * dtilde},
           {"width_exp", -1.0},
           {"osc_scale", lambda},
           {"mean_x", {0.3}},
           {"mean_p", {0.0, 0.25}}}}}}},
      {"substeps",
       {{{{"s", {{"builder", "pauli_z"}}},
          {"m", xhat},
          {"ancilla", 0},
          {"schedule", {{"amplitude", 0.6}, {"exponent", 0.0}}}}},
        {{{"s", {{"builder", "pauli_x"}}},
          {"m", phat},
          {"ancilla", 0},
          {"schedule", {{"amplitude", 1.0}, {"exponent", -1.0}}}}}}},
      {"initial_state", qubit_plus_state()},
      {"sweep",
       {{"T", 1.0},
        {"n_list", {50}},
        {"tau_list", {0.2, 0.1, 0.05, 0.02, 0.01, 0.005, 0.002}}}},
      {"outputs", {{{"series", "coherence"}, {"i", 0}, {"j", 1}}}},
      {"checks",
       {{{"type", "noise-bound"}, {"tol", 1e-10}},
        {{"type", "feedback-generator"}, {"tol", 0.05}}}}};
}

Json preset_milburn_caves() {
  const int ds = 8, dm = 24;
  const double D = 0.2, lm = 56.568542494923804;  // sqrt(20*160)
  Json xs{{"builder", "position"}, {"dim", ds}, {"scale", 1.0}};
  Json ps{{"builder", "momentum"}, {"dim", ds}, {"scale", 1.0}};
  Json xm{{"builder", "position"}, {"dim", dm}, {"scale", lm}};
  Json pm{{"builder", "momentum"}, {"dim", dm}, {"scale", lm}};
  const double g2 = std::sqrt(2.0);
  return Json{
      {"name", "milburn-caves"},
      {"hbar", 1.0},
      {"system", {{"dims", {ds}}, {"h0", {{"builder", "zero"}, {"dim", ds}}}}},
      {"ancillas",
       {{{"dim", dm},
         {"preparation",
          {{"kind", "pure_gaussian"},
           {"dim", dm},
           {"width_amp", 2.0 * D},
           {"width_exp", -1.0},
           {"osc_scale", lm}}}}}},
      {"substeps",
       {{{{"s", op_scaled(std::sqrt(2.0), xs)},
          {"m", pm},
          {"ancilla", 0},
          {"schedule", {{"amplitude", 1.0}, {"exponent", -1.0}}}}},
        {{{"s", ps},
          {"m", xm},
          {"ancilla", 0},
          {"schedule", {{"amplitude", g2}, {"exponent", 0.0}}}}}}},
      {"initial_state",
       {{"preparation",
         {{"kind", "pure_gaussian"},
          {"dim", ds},
          {"width_amp", 1.0},
          {"mean_x", {0.5}}}},
        {"tau", 1.0}}},
      {"sweep",
       {{"T", 0.3},
        {"n_list", {15, 30, 60, 120}},
        {"tau_list", {0.02, 0.014, 0.01, 0.007, 0.005, 0.0035, 0.0025}}}},
      {"outputs", {{{"series", "purity"}}}},
      {"checks",
       {{{"type", "declared-master-convergence"},
         {"dt", 0.0005},
         {"tol_last", 0.05},
         {"ratio_lo", 1.5},
         {"ratio_hi", 2.6},
         {"h_eff", {{"builder", "zero"}, {"dim", ds}}},
         {"dissipators",
          {{{"a", op_scaled(std::sqrt(2.0), xs)},
            {"b", op_scaled(std::sqrt(2.0), xs)},
            {"rate", 1.0 / (8.0 * D)}},
           {{"a", ps}, {"b", ps}, {"rate", D * g2 * g2 / 8.0}}}},
         {"feedback",
          {{{"a", ps}, {"b", op_scaled(std::sqrt(2.0), xs)}, {"rate", -g2 / 4.0}}}}},
        {{"type", "generator-fit"},
         {"tol", 0.05},
         {"terms",
          {{{"kind", "dissipator"}, {"a", xs}, {"b", xs}, {"target", 1.0 / (4.0 * D)}},
           {{"kind", "dissipator"}, {"a", ps}, {"b", ps}, {"target", D / 4.0}},
           {{"kind", "feedback"},
            {"a", ps},
            {"b", op_scaled(std::sqrt(2.0), xs)},
            {"target", -g2 / 4.0}}}}}}}};
}

Json preset_newton_pair() {
  const int ds = 8;
  const double D = 0.2;
  std::vector<Eigen::Index> dims{ds, ds};
  Json xs{{"builder", "position"}, {"dim", ds}, {"scale", 1.0}};
  Json x1 = op_embed(xs, dims, 0);
  Json x2 = op_embed(xs, dims, 1);
  Json x1x2{{"builder", "kron"}, {"factors", {xs, xs}}};
  Json sy{{"builder", "pauli_y"}};
  Json sx{{"builder", "pauli_x"}};
  Json prep{{"kind", "eigenstate"}, {"m", {{"builder", "pauli_z"}}}, {"value", 1.0}};
  const double amp_p = 1.0 / std::sqrt(2.0 * D);  // hbar = 1
  const double amp_x = std::sqrt(D / 2.0);
  Json sched_p{{"amplitude", amp_p}, {"exponent", -0.5}};
  Json sched_x{{"amplitude", amp_x}, {"exponent", -0.5}};
  return Json{
      {"name", "newton-pair"},
      {"hbar", 1.0},
      {"system",
       {{"dims", {ds, ds}},
        {"h0", {{"builder", "zero"}, {"dim", ds * ds}}}}},
      {"ancillas",
       {{{"dim", 2}, {"preparation", prep}}, {{"dim", 2}, {"preparation", prep}}}},
      {"substeps",
       {{{{"s", x1}, {"m", sy}, {"ancilla", 0}, {"schedule", sched_p}},
         {{"s", x2}, {"m", sy}, {"ancilla", 1}, {"schedule", sched_p}}},
        {{{"s", x1}, {"m", sx}, {"ancilla", 1}, {"schedule", sched_x}},
         {{"s", x2}, {"m", sx}, {"ancilla", 0}, {"schedule", sched_x}}}}},
      {"initial_state",
       {{"matrix",
         {{"builder", "kron"},
          {"factors",
           {Json{{"builder", "matrix"},
                 {"re", {{1, 0, 0, 0, 0, 0, 0, 0},
                         {0, 0, 0, 0, 0, 0, 0, 0},
                         {0, 0, 0, 0, 0, 0, 0, 0},
                         {0, 0, 0, 0, 0, 0, 0, 0},
                         {0, 0, 0, 0, 0, 0, 0, 0},
                         {0, 0, 0, 0, 0, 0, 0, 0},
                         {0, 0, 0, 0, 0, 0, 0, 0},
                         {0, 0, 0, 0, 0, 0, 0, 0}}}},
            Json{{"builder", "matrix"},
                 {"re", {{1, 0, 0, 0, 0, 0, 0, 0},
                         {0, 0, 0, 0, 0, 0, 0, 0},
                         {0, 0, 0, 0, 0, 0, 0, 0},
                         {0, 0, 0, 0, 0, 0, 0, 0},
                         {0, 0, 0, 0, 0, 0, 0, 0},
                         {0, 0, 0, 0, 0, 0, 0, 0},
                         {0, 0, 0, 0, 0, 0, 0, 0},
                         {0, 0, 0, 0, 0, 0, 0, 0}}}}}}}}}},
      {"sweep",
       {{"T", 0.5},
        {"n_list", {10}},
        {"tau_list", {0.08, 0.056, 0.04, 0.028, 0.02, 0.014, 0.01}}}},
      {"outputs", {{{"series", "purity"}}}},
      {"checks",
       {{{"type", "generator-fit"},
         {"tol", 0.05},
         {"probe_displacements", {{0.4, 0.3}, {-0.3, 0.5}}},
         {"terms",
          {{{"kind", "hamiltonian"}, {"a", x1x2}, {"target", 0.5}},
           {{"kind", "dissipator"},
            {"a", x1},
            {"b", x1},
            {"target", D / 8.0 + 1.0 / (8.0 * D)}},
           {{"kind", "dissipator"},
            {"a", x2},
            {"b", x2},
            {"target", D / 8.0 + 1.0 / (8.0 * D)}}}}}}}};
}

Json preset_joint_measurement_entangler() {
  const int ds = 4;
  Json xs{{"builder", "position"}, {"dim", ds}, {"scale", 1.0}};
  Json x1x2{{"builder", "kron"}, {"factors", {xs, xs}}};
  return Json{
      {"name", "joint-measurement-entangler"},
      {"hbar", 1.0},
      {"system",
       {{"dims", {ds, ds}},
        {"h0", {{"builder", "zero"}, {"dim", ds * ds}}}}},
      {"ancillas",
       {{{"dim", 2},
         {"m0", {{"builder", "zero"}, {"dim", 2}}},
         {"preparation",
          {{"kind", "explicit"},
           {"rho", {{"builder", "diag"}, {"values", {0.8, 0.2}}}}}}}}},
      {"substeps",
       {{{{"s", x1x2},
          {"m", {{"builder", "pauli_z"}}},
          {"ancilla", 0},
          {"schedule", {{"amplitude", 1.2}, {"exponent", 0.0}}}}}}},
      {"initial_state",
       {{"matrix",
         {{"builder", "kron"},
          {"factors",
           {Json{{"builder", "matrix"},
                 {"re", {{0.5, 0.5, 0, 0},
                         {0.5, 0.5, 0, 0},
                         {0, 0, 0, 0},
                         {0, 0, 0, 0}}}},
            Json{{"builder", "matrix"},
                 {"re", {{0.5, 0.5, 0, 0},
                         {0.5, 0.5, 0, 0},
                         {0, 0, 0, 0},
                         {0, 0, 0, 0}}}}}}}}}},
      {"sweep",
       {{"T", 1.0},
        {"n_list", {64}},
        {"tau_list", {0.1, 0.05, 0.02, 0.01, 0.005, 0.002, 0.001}}}},
      {"outputs", {{{"series", "negativity"}, {"factor", 0}}}},
      {"checks",
       {{{"type", "classify"}, {"expect", "effective-unitary"}},
        {{"type", "interaction-strength"},
         {"op", x1x2},
         {"min", 0.1},
         {"max_dissipator", 1e-12}},
        {{"type", "negativity"}, {"factor", 0}, {"min", 0.01}}}}};
}

Json preset_magnus_symmetric_switch() {
  return Json{
      {"name", "magnus-symmetric-switch"},
      {"hbar", 1.0},
      {"system",
       {{"dims", {2}}, {"h0", op_scaled(0.6, {{"builder", "pauli_z"}})}}},
      {"ancillas",
       {{{"dim", 2},
         {"m0", op_scaled(0.5, {{"builder", "pauli_z"}})},
         {"preparation",
          {{"kind", "explicit"},
           {"rho", {{"builder", "diag"}, {"values", {0.7, 0.3}}}}}}}}},
      {"substeps",
       {{{{"s", {{"builder", "pauli_x"}}},
          {"m", {{"builder", "pauli_x"}}},
          {"ancilla", 0},
          {"schedule",
           {{"amplitude", 0.8}, {"exponent", 0.0}, {"profile", "symmetric_bump"}}}}}}},
      {"initial_state", qubit_plus_state()},
      {"sweep",
       {{"T", 1.0},
        {"n_list", {16}},
        {"tau_list", {0.4, 0.2, 0.1, 0.05, 0.025, 0.0125}}}},
      {"outputs", Json::array()},
      {"checks",
       {{{"type", "magnus-slope"},
         {"substep", 0},
         {"expect", 3.0},
         {"tol", 0.2}},
        {{"type", "magnus-slope"},
         {"substep", 0},
         {"samples", {0.4, 0.8, 1.2, 1.6}},
         {"expect", 2.0},
         {"tol", 0.2},
         {"coeff_tol", 0.05}}}}};
}

Json filtering_common(const std::string& name) {
  const int dm = 16;
  const double gamma = 0.4, n_op = 256.0;
  // meter momentum variance Gamma/tau at the operating tau = T/n
  const double tau_op = 1.0 / n_op;
  const double lam = tau_op / (2.0 * gamma);  // sigma(tau_op) = lam -> r = 0
  Json xm{{"builder", "position"}, {"dim", dm}, {"scale", lam}};
  Json pm{{"builder", "momentum"}, {"dim", dm}, {"scale", lam}};
  return Json{
      {"name", name},
      {"hbar", 1.0},
      {"system",
       {{"dims", {2}}, {"h0", op_scaled(0.3, {{"builder", "pauli_z"}})}}},
      {"ancillas",
       {{{"dim", dm},
         {"m0", op_scaled(0.5, Json{{"builder", "power"}, {"of", pm}, {"k", 2}})},
         {"preparation",
          {{"kind", "pure_gaussian"},
           {"dim", dm},
           {"width_amp", 1.0 / (2.0 * gamma)},
           {"width_exp", 1.0},
           {"osc_scale", lam}}}}}},
      {"substeps",
       {{{{"s", op_scaled(0.5, {{"builder", "pauli_z"}})},
          {"m", pm},
          {"ancilla", 0},
          {"schedule", {{"amplitude", 1.0}, {"exponent", 0.0}}}}}}},
      {"pointer_basis", {{"name", "position"}, {"operator", xm}}},
      {"initial_state", qubit_plus_state()},
      {"sweep", {{"T", 1.0}, {"n_list", {int(n_op)}}}},
      {"mode", "both"},
      {"ensemble", {{"ntraj", 512}, {"seed", 20260823}}},
      {"outputs",
       {{{"series", "coherence"}, {"i", 0}, {"j", 1}},
        {{"series", "trajectory"}, {"index", 0}}}},
      {"checks", Json::array()}};
}

Json preset_filtering_ensemble() {
  Json j = filtering_common("filtering-ensemble");
  j["checks"].push_back(Json{{"type", "ensemble-match"}});
  return j;
}

Json preset_filtering_feedback() {
  Json j = filtering_common("filtering-feedback");
  // free meter evolution off so the averaged feedback equation is exact
  j["ancillas"][0]["m0"] = Json{{"builder", "zero"}, {"dim", 16}};
  j["feedback"] = Json{{"s2", op_scaled(0.5, {{"builder", "pauli_x"}})},
                       {"g2", 0.8}};
  j["checks"].push_back(Json{{"type", "feedback-ensemble"},
                             {"gamma", 0.4},
                             {"dt", 0.002}});
  return j;
}

}  // namespace

std::vector<std::string> preset_names() {
  return {"exact-unitary-qubit",
          "weak-potential",
          "zeno-qubit",
          "finite-decoherence-gaussian",
          "two-substep-feedback",
          "milburn-caves",
          "newton-pair",
          "joint-measurement-entangler",
          "magnus-symmetric-switch",
          "filtering-ensemble",
          "filtering-feedback"};
}

Json preset_config(const std::string& name) {
  if (name == "exact-unitary-qubit") return preset_exact_unitary_qubit();
  if (name == "weak-potential") return preset_weak_potential();
  if (name == "zeno-qubit") return preset_zeno_qubit();
  if (name == "finite-decoherence-gaussian")
    return preset_finite_decoherence_gaussian();
  if (name == "two-substep-feedback") return preset_two_substep_feedback();
  if (name == "milburn-caves") return preset_milburn_caves();
  if (name == "newton-pair") return preset_newton_pair();
  if (name == "joint-measurement-entangler")
    return preset_joint_measurement_entangler();
  if (name == "magnus-symmetric-switch") return preset_magnus_symmetric_switch();
  if (name == "filtering-ensemble") return preset_filtering_ensemble();
  if (name == "filtering-feedback") return preset_filtering_feedback();
  throw std::invalid_argument("unknown preset '" + name + "'");
}

// ---------------------------------------------------------------------------
// Runner
// ---------------------------------------------------------------------------

namespace {

struct CsvWriter {
  std::ofstream out;
  explicit CsvWriter(const std::filesystem::path& p) : out(p) {
    if (!out) throw std::runtime_error("cannot open " + p.string());
  }
  void row(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out << ',';
      out << cells[i];
    }
    out << "\r\n";
  }
};

std::string series_label(const Json& o) {
  std::string s = o.value("series", "series");
  if (o.contains("i")) s += "-" + std::to_string(o["i"].get<int>()) +
                            std::to_string(o.value("j", 0));
  return s;
}

void emit_trace_series(const ScenarioConfig& cfg, const EvolutionTrace& trace,
                       const Json& o, const std::filesystem::path& path) {
  CsvWriter csv(path);
  const std::string kind = o.value("series", "");
  if (kind == "populations") {
    std::vector<std::string> header{"time"};
    for (Eigen::Index i = 0; i < cfg.rho0.dim(); ++i)
      header.push_back("pop" + std::to_string(i));
    csv.row(header);
    for (std::size_t k = 0; k < trace.times.size(); ++k) {
      std::vector<std::string> cells{format_double(trace.times[k])};
      for (Eigen::Index i = 0; i < cfg.rho0.dim(); ++i)
        cells.push_back(format_double(trace.states[k].mat(i, i).real()));
      csv.row(cells);
    }
  } else if (kind == "coherence") {
    int i = o.value("i", 0), j = o.value("j", 1);
    csv.row({"time", "value", "imag", "abs"});
    for (std::size_t k = 0; k < trace.times.size(); ++k) {
      Complex c = trace.states[k].mat(i, j);
      csv.row({format_double(trace.times[k]), format_double(c.real()),
               format_double(c.imag()), format_double(std::abs(c))});
    }
  } else if (kind == "purity") {
    csv.row({"time", "value"});
    for (std::size_t k = 0; k < trace.times.size(); ++k)
      csv.row({format_double(trace.times[k]),
               format_double(purity(trace.states[k].mat))});
  } else if (kind == "expectation") {
    Matrix op = parse_operator(o.at("op"));
    csv.row({"time", "value"});
    for (std::size_t k = 0; k < trace.times.size(); ++k)
      csv.row({format_double(trace.times[k]),
               format_double((op * trace.states[k].mat).trace().real())});
  } else if (kind == "negativity") {
    std::size_t factor = o.value("factor", 0);
    csv.row({"time", "value"});
    for (std::size_t k = 0; k < trace.times.size(); ++k)
      csv.row({format_double(trace.times[k]),
               format_double(negativity(trace.states[k].mat,
                                        cfg.cycle.system_layout, factor))});
  } else if (kind == "zeno-analytic") {
    double ds = o.value("delta_s", 1.0);
    csv.row({"time", "value"});
    for (std::size_t k = 0; k < trace.times.size(); ++k)
      csv.row({format_double(trace.times[k]),
               format_double(zeno_decay_curve(
                   cfg.preps[0], cfg.cycle.substeps[0][0].m_op, ds,
                   trace.times[k], trace.tau, cfg.hbar))});
  } else {
    throw std::invalid_argument("unknown output series '" + kind + "'");
  }
}

void emit_trajectory(const ConditionalTrajectory& traj,
                     const std::filesystem::path& path) {
  CsvWriter csv(path);
  csv.row({"step", "time", "outcome", "probability", "dW_re", "dW_im",
           "current"});
  for (std::size_t k = 0; k < traj.record.outcomes.size(); ++k)
    csv.row({std::to_string(k + 1), format_double(traj.times[k + 1]),
             std::to_string(traj.record.outcomes[k]),
             format_double(traj.record.probabilities[k]),
             format_double(traj.increments[k].re),
             format_double(traj.increments[k].im),
             format_double(traj.current[k])});
}

MasterEquationSpec parse_declared_master(const ScenarioConfig& cfg,
                                         const Json& c) {
  MasterEquationSpec spec;
  spec.hbar = cfg.hbar;
  spec.h_eff = parse_operator(c.at("h_eff"));
  if (c.contains("dissipators"))
    for (const auto& d : c["dissipators"])
      spec.dissipators.push_back({parse_operator(d.at("a")),
                                  parse_operator(d.at("b")),
                                  d.at("rate").get<double>()});
  if (c.contains("feedback"))
    for (const auto& f : c["feedback"])
      spec.feedback_terms.push_back({parse_operator(f.at("a")),
                                     parse_operator(f.at("b")),
                                     f.at("rate").get<double>()});
  return spec;
}

// Convergence of evolve() against a deterministic master-equation target:
// final-time trace distance per n, first-order ratio band, last below tol.
CheckResult convergence_check(const ScenarioConfig& cfg,
                              const MasterEquationSpec& spec, const Json& c,
                              const std::string& name,
                              const std::filesystem::path& out_dir,
                              std::vector<std::string>& files) {
  double dt = c.value("dt", 0.001);
  double bound = 0.1 / spec.generator_norm_bound();
  if (dt > bound) dt = bound;
  EvolutionTrace target = integrate_master(spec, cfg.rho0, cfg.T, dt);

  std::vector<double> dists;
  CsvWriter csv(out_dir / (cfg.name + "-" + name + ".csv"));
  files.push_back(cfg.name + "-" + name + ".csv");
  csv.row({"n", "tau", "trace_distance"});
  for (int n : cfg.n_list) {
    EvolutionTrace run = evolve(cfg.rho0, cfg.cycle, cfg.preps, cfg.T, n);
    double d = trace_distance(run.states.back().mat, target.states.back().mat);
    dists.push_back(d);
    csv.row({std::to_string(n), format_double(cfg.T / n), format_double(d)});
  }
  CheckResult r;
  r.name = name;
  r.tolerance = c.value("tol_last", 0.05);
  r.value = dists.back();
  bool ratios_ok = true;
  double lo = c.value("ratio_lo", 1.5), hi = c.value("ratio_hi", 2.6);
  for (std::size_t i = 1; i < dists.size(); ++i) {
    double ratio = dists[i - 1] / std::max(dists[i], 1e-300);
    if (ratio < lo || ratio > hi) ratios_ok = false;
  }
  r.pass = ratios_ok && dists.back() <= r.tolerance;
  return r;
}

// Least-squares decomposition of the extrapolated generator onto declared
// superoperator structures plus a free Hamiltonian remainder basis.
CheckResult generator_fit_check(const ScenarioConfig& cfg, const Json& c) {
  CheckResult r;
  r.name = "generator-fit";
  r.tolerance = c.value("tol", 0.05);

  std::vector<DensityMatrix> probes{cfg.rho0};
  if (c.contains("probe_displacements")) {
    // product of displaced oscillator ground states over the system factors
    for (const auto& dj : c["probe_displacements"]) {
      std::vector<Matrix> fs;
      for (std::size_t f = 0; f < cfg.cycle.system_layout.factors(); ++f) {
        auto p = PreparationFamily::pure_gaussian(
            cfg.cycle.system_layout.dims[f], 1.0, 0.0, 1.0, cfg.hbar);
        p.mean_x_poly = Polynomial{{dj[f].get<double>()}};
        fs.push_back(p.realize(1.0).mat);
      }
      probes.push_back(make_density(kron(fs)));
    }
  }

  const Eigen::Index dim = cfg.rho0.dim();
  const Complex I(0, 1);
  enum class Kind { Hamiltonian, Dissipator, Feedback };
  struct Term {
    Matrix a, b;
    Kind kind;
    double target;
  };
  std::vector<Term> terms;
  for (const auto& tj : c.at("terms")) {
    Term t;
    std::string k = tj.at("kind").get<std::string>();
    t.kind = k == "hamiltonian"  ? Kind::Hamiltonian
             : k == "dissipator" ? Kind::Dissipator
                                 : Kind::Feedback;
    t.a = parse_operator(tj.at("a"));
    if (t.kind != Kind::Hamiltonian) t.b = parse_operator(tj.at("b"));
    t.target = tj.at("target").get<double>();
    terms.push_back(std::move(t));
  }

  // rho_dot(theta) = sum_k theta_k * L_k[rho]; solve for theta by stacked
  // least squares over all probes.
  auto apply_term = [&](const Term& t, const Matrix& rho) -> Matrix {
    if (t.kind == Kind::Hamiltonian)
      return -I / cfg.hbar * (t.a * rho - rho * t.a);
    if (t.kind == Kind::Feedback) {
      Matrix sand = t.b * rho + rho * t.b;
      return I / cfg.hbar * (t.a * sand - sand * t.a);
    }
    Matrix inner = t.b * rho - rho * t.b;
    return -1.0 / (cfg.hbar * cfg.hbar) * (t.a * inner - inner * t.a);
  };

  const std::size_t nt = terms.size();
  const Eigen::Index rows_per = 2 * dim * dim;
  Eigen::MatrixXd A(rows_per * Eigen::Index(probes.size()), nt);
  Eigen::VectorXd y(rows_per * Eigen::Index(probes.size()));
  for (std::size_t p = 0; p < probes.size(); ++p) {
    std::vector<double> taus(c.value("fit_taus", std::vector<double>{}));
    GeneratorEstimate est = generator_estimate(
        cfg.cycle, cfg.preps, probes[p],
        taus.empty() ? cfg.tau_sweep : taus);
    if (est.diverged) {
      r.pass = false;
      r.value = est.residual;
      return r;
    }
    Eigen::Index off = rows_per * Eigen::Index(p);
    for (Eigen::Index i = 0; i < dim; ++i)
      for (Eigen::Index j = 0; j < dim; ++j) {
        Eigen::Index row = off + 2 * (i * dim + j);
        y[row] = est.rho_dot(i, j).real();
        y[row + 1] = est.rho_dot(i, j).imag();
      }
    for (std::size_t k = 0; k < nt; ++k) {
      Matrix lk = apply_term(terms[k], probes[p].mat);
      for (Eigen::Index i = 0; i < dim; ++i)
        for (Eigen::Index j = 0; j < dim; ++j) {
          Eigen::Index row = off + 2 * (i * dim + j);
          A(row, k) = lk(i, j).real();
          A(row + 1, k) = lk(i, j).imag();
        }
    }
  }
  Eigen::VectorXd theta = A.colPivHouseholderQr().solve(y);
  double worst = 0.0;
  for (std::size_t k = 0; k < nt; ++k) {
    double rel = std::abs(theta[k] - terms[k].target) /
                 std::max(1e-12, std::abs(terms[k].target));
    worst = std::max(worst, rel);
  }
  r.value = worst;
  r.pass = worst <= r.tolerance;
  return r;
}

CheckResult magnus_check(const ScenarioConfig& cfg, const Json& c) {
  CheckResult r;
  r.name = "magnus-slope";
  std::size_t substep = c.value("substep", std::size_t(0));
  CycleSpec cycle = cfg.cycle;
  if (c.contains("samples")) {
    auto& sched = cycle.substeps[substep][0].schedule;
    sched.profile = SwitchingProfile::Custom;
    sched.samples.clear();
    for (const auto& v : c["samples"])
      sched.samples.push_back(v.get<double>());
  }
  const int K = 128;
  std::vector<double> logt, logd, defects;
  for (double tau : cfg.tau_sweep) {
    double tau_sub = tau / double(cycle.p());
    Matrix u_step = stepped_propagator(cycle, substep, tau_sub, K);
    Matrix u_mean = mean_propagator(cycle, substep, tau_sub);
    double d = (u_step - u_mean).norm();
    defects.push_back(d);
    logt.push_back(std::log(tau_sub));
    logd.push_back(std::log(std::max(d, 1e-300)));
  }
  // least-squares slope
  double n = double(logt.size()), sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < logt.size(); ++i) {
    sx += logt[i];
    sy += logd[i];
    sxx += logt[i] * logt[i];
    sxy += logt[i] * logd[i];
  }
  double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  double expect = c.value("expect", 3.0);
  double tol = c.value("tol", 0.2);
  r.value = slope;
  r.tolerance = tol;
  r.pass = std::abs(slope - expect) <= tol;

  if (c.contains("coeff_tol") && r.pass) {
    // leading defect coefficient vs the Magnus second-term double integral,
    // evaluated well below the sweep so higher orders are negligible
    const auto& si = cycle.substeps[substep][0];
    TensorLayout joint = cycle.joint_layout();
    Matrix h0 = embed(cycle.s0, joint, 0) + embed(cycle.m0[0], joint, 1);
    Matrix hi = kron(si.s_op, si.m_op);
    Matrix comm = h0 * hi - hi * h0;
    double tau_sub = cfg.tau_sweep.back() / double(cycle.p()) / 4.0;
    double defect =
        (stepped_propagator(cycle, substep, tau_sub, K) -
         mean_propagator(cycle, substep, tau_sub))
            .norm();
    // I2 = integral_{t1 < t2} (g(t1) - g(t2)) dt1 dt2 on the same profile
    const int q = 4096;
    double dt = tau_sub / q;
    double integral = 0.0;
    std::vector<double> g(q);
    for (int i = 0; i < q; ++i)
      g[i] = si.schedule.g((i + 0.5) * dt, tau_sub);
    std::vector<double> prefix(q + 1, 0.0);
    for (int i = 0; i < q; ++i) prefix[i + 1] = prefix[i] + g[i] * dt;
    for (int i2 = 0; i2 < q; ++i2)
      integral += (prefix[i2] - g[i2] * (i2 * dt)) * dt;
    double predicted = comm.norm() * std::abs(integral) /
                       (2.0 * cfg.hbar * cfg.hbar);
    double rel = std::abs(defect - predicted) / std::max(predicted, 1e-300);
    r.name = "magnus-slope+coefficient";
    r.value = rel;
    r.tolerance = c.value("coeff_tol", 0.05);
    r.pass = rel <= r.tolerance;
  }
  return r;
}

double traj_sigma_hat(const std::vector<ConditionalTrajectory>& trajs,
                      const Matrix& mean, std::size_t k) {
  double s2 = 0.0;
  for (const auto& t : trajs) {
    double d = trace_distance(t.states[k].mat, mean);
    s2 += d * d;
  }
  return std::sqrt(s2 / std::max<std::size_t>(1, trajs.size() - 1));
}

CheckResult ensemble_check(const ScenarioConfig& cfg,
                           const std::vector<ConditionalTrajectory>& trajs,
                           const EvolutionTrace& target, const char* name) {
  CheckResult r;
  r.name = name;
  EvolutionTrace mean = ensemble_average(trajs);
  double worst_excess = -1e300;
  double n = double(trajs.size());
  for (std::size_t k = 0; k < mean.times.size(); ++k) {
    double d = trace_distance(mean.states[k].mat, target.states[k].mat);
    double band =
        std::max(3.0 * traj_sigma_hat(trajs, mean.states[k].mat, k) /
                     std::sqrt(n),
                 1e-12);
    worst_excess = std::max(worst_excess, d - band);
    if (k == mean.times.size() - 1) {
      r.value = d;
      r.tolerance = band;
    }
  }
  r.pass = worst_excess <= 0.0;
  return r;
}

}  // namespace

RunResult run_scenario(const ScenarioConfig& cfg,
                       const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  RunResult result;

  const bool unconditional = cfg.mode != "conditional";
  const bool conditional = cfg.mode != "unconditional";

  std::optional<EvolutionTrace> finest;
  if (unconditional && !cfg.n_list.empty()) {
    finest = evolve(cfg.rho0, cfg.cycle, cfg.preps, cfg.T,
                    cfg.n_list.back());
    for (const auto& o : cfg.outputs) {
      if (o.value("series", "") == "trajectory") continue;
      std::string fn = cfg.name + "-" + series_label(o) + ".csv";
      emit_trace_series(cfg, *finest, o, out_dir / fn);
      result.files.push_back(fn);
    }
  }

  std::vector<ConditionalTrajectory> trajs;
  if (conditional) {
    TrajectoryOptions opts;
    opts.basis = cfg.pointer;
    opts.feedback = cfg.feedback;
    int n = cfg.n_list.back();
    for (int t = 0; t < cfg.ntraj; ++t) {
      std::uint64_t s = cfg.seed * 0x9e3779b97f4a7c15ull + std::uint64_t(t);
      trajs.push_back(sample_trajectory(cfg.rho0, cfg.cycle, cfg.preps, cfg.T,
                                        n, s, opts));
    }
    for (const auto& o : cfg.outputs) {
      if (o.value("series", "") != "trajectory") continue;
      std::size_t idx = o.value("index", std::size_t(0));
      if (idx >= trajs.size()) continue;
      std::string fn = cfg.name + "-trajectory" + std::to_string(idx) + ".csv";
      emit_trajectory(trajs[idx], out_dir / fn);
      result.files.push_back(fn);
    }
  }

  for (const auto& c : cfg.checks) {
    const std::string type = c.value("type", "");
    if (type == "classify") {
      RegimeReport rep = classify_regime(cfg.cycle, cfg.preps, cfg.tau_sweep);
      CheckResult r;
      r.name = "classify=" + c.value("expect", std::string());
      r.pass = to_string(rep.regime) == c.value("expect", std::string());
      r.value = double(int(rep.regime));
      result.checks.push_back(r);
    } else if (type == "exact-unitary-purity") {
      int n = c.value("n", 1000);
      EvolutionTrace run = evolve(cfg.rho0, cfg.cycle, cfg.preps, cfg.T, n);
      double worst = 0.0;
      double p0 = purity(cfg.rho0.mat);
      for (const auto& st : run.states)
        worst = std::max(worst, std::abs(purity(st.mat) - p0));
      CheckResult r{"exact-unitary-purity", worst <= c.value("tol", 1e-9),
                    worst, c.value("tol", 1e-9)};
      result.checks.push_back(r);
    } else if (type == "unitary-convergence") {
      LimitSet limits = limit_set(cfg.cycle, cfg.preps, cfg.tau_sweep);
      MasterEquationSpec spec = build_master_equation(cfg.cycle, limits);
      std::vector<double> dists;
      Matrix u = expm(Complex(0, -1) * cfg.T / cfg.hbar * spec.h_eff);
      Matrix target = u * cfg.rho0.mat * u.adjoint();
      CsvWriter csv(out_dir / (cfg.name + "-unitary-convergence.csv"));
      result.files.push_back(cfg.name + "-unitary-convergence.csv");
      csv.row({"n", "trace_distance"});
      for (int n : cfg.n_list) {
        auto run = evolve(cfg.rho0, cfg.cycle, cfg.preps, cfg.T, n);
        double d = trace_distance(run.states.back().mat, target);
        dists.push_back(d);
        csv.row({std::to_string(n), format_double(d)});
      }
      bool ok = true;
      double lo = c.value("ratio_lo", 1.6), hi = c.value("ratio_hi", 2.4);
      double worst = 0.0;
      for (std::size_t i = 1; i < dists.size(); ++i) {
        double ratio = dists[i - 1] / std::max(dists[i], 1e-300);
        worst = ratio;
        if (ratio < lo || ratio > hi) ok = false;
      }
      result.checks.push_back({"unitary-convergence", ok, worst, hi});
    } else if (type == "master-convergence") {
      LimitSet limits = limit_set(cfg.cycle, cfg.preps, cfg.tau_sweep);
      MasterEquationSpec spec = build_master_equation(cfg.cycle, limits);
      result.checks.push_back(convergence_check(cfg, spec, c,
                                                "master-convergence", out_dir,
                                                result.files));
    } else if (type == "declared-master-convergence") {
      MasterEquationSpec spec = parse_declared_master(cfg, c);
      result.checks.push_back(convergence_check(
          cfg, spec, c, "declared-master-convergence", out_dir, result.files));
    } else if (type == "zeno-curve") {
      if (!finest)
        finest = evolve(cfg.rho0, cfg.cycle, cfg.preps, cfg.T,
                        cfg.n_list.back());
      double ds = c.value("delta_s", 1.0);
      double base = std::abs(cfg.rho0.mat(0, 1));
      double worst = 0.0;
      for (std::size_t k = 0; k < finest->times.size(); ++k) {
        double sim = std::abs(finest->states[k].mat(0, 1)) / base;
        double ana = zeno_decay_curve(cfg.preps[0],
                                      cfg.cycle.substeps[0][0].m_op, ds,
                                      finest->times[k], finest->tau, cfg.hbar);
        worst = std::max(worst, std::abs(sim - ana));
      }
      result.checks.push_back({"zeno-curve", worst <= c.value("tol", 5e-3),
                               worst, c.value("tol", 5e-3)});
    } else if (type == "noise-bound") {
      LimitSet limits = limit_set(cfg.cycle, cfg.preps, cfg.tau_sweep);
      double slack = c.value("tol", 1e-10);
      bool ok = true;
      double worst = -1e300;
      for (std::size_t i = 0; i < limits.substep_of.size(); ++i)
        for (std::size_t j = i + 1; j < limits.substep_of.size(); ++j) {
          double lhs = cfg.hbar * std::abs(limits.mtilde[i][j].value);
          double rhs = limits.gamma[i][i].value + limits.gamma[j][j].value;
          worst = std::max(worst, lhs - rhs);
          if (lhs > rhs + slack) ok = false;
        }
      result.checks.push_back({"noise-bound", ok, worst, slack});
    } else if (type == "feedback-generator") {
      LimitSet limits = limit_set(cfg.cycle, cfg.preps, cfg.tau_sweep);
      MasterEquationSpec spec = build_master_equation(cfg.cycle, limits);
      GeneratorEstimate est =
          generator_estimate(cfg.cycle, cfg.preps, cfg.rho0, cfg.tau_sweep);
      double rel = (est.rho_dot - spec.apply(cfg.rho0.mat)).norm() /
                   std::max(1e-12, est.rho_dot.norm());
      result.checks.push_back({"feedback-generator",
                               !est.diverged && rel <= c.value("tol", 0.05),
                               rel, c.value("tol", 0.05)});
    } else if (type == "generator-fit") {
      result.checks.push_back(generator_fit_check(cfg, c));
    } else if (type == "interaction-strength") {
      LimitSet limits = limit_set(cfg.cycle, cfg.preps, cfg.tau_sweep);
      MasterEquationSpec spec = build_master_equation(cfg.cycle, limits);
      Matrix x = parse_operator(c.at("op"));
      Matrix h = spec.h_eff - cfg.cycle.s0;
      double coeff = (x.adjoint() * h).trace().real() /
                     (x.adjoint() * x).trace().real();
      double max_rate = 0.0;
      for (const auto& d : spec.dissipators)
        max_rate = std::max(max_rate, std::abs(d.rate));
      bool ok = std::abs(coeff) >= c.value("min", 0.1) &&
                max_rate <= c.value("max_dissipator", 1e-12);
      result.checks.push_back(
          {"interaction-strength", ok, coeff, c.value("min", 0.1)});
    } else if (type == "negativity") {
      if (!finest)
        finest = evolve(cfg.rho0, cfg.cycle, cfg.preps, cfg.T,
                        cfg.n_list.back());
      double v = negativity(finest->states.back().mat,
                            cfg.cycle.system_layout,
                            c.value("factor", std::size_t(0)));
      result.checks.push_back(
          {"negativity", v > c.value("min", 0.01), v, c.value("min", 0.01)});
    } else if (type == "magnus-slope") {
      result.checks.push_back(magnus_check(cfg, c));
    } else if (type == "ensemble-match") {
      if (!finest)
        finest = evolve(cfg.rho0, cfg.cycle, cfg.preps, cfg.T,
                        cfg.n_list.back());
      result.checks.push_back(
          ensemble_check(cfg, trajs, *finest, "ensemble-match"));
    } else if (type == "feedback-ensemble") {
      // deterministic part of the feedback-averaged equation
      const auto& si = cfg.cycle.substeps[0][0];
      double tau = cfg.T / cfg.n_list.back();
      double g = si.schedule.gbar(tau);
      double gamma = tau * g * g *
                     moment(cfg.preps[0].realize(tau), si.m_op, 2);
      MasterEquationSpec spec;
      spec.hbar = cfg.hbar;
      spec.h_eff = cfg.cycle.s0;
      spec.dissipators.push_back({si.s_op, si.s_op, gamma / 2.0});
      if (cfg.feedback) {
        spec.dissipators.push_back(
            {cfg.feedback->s2, cfg.feedback->s2,
             cfg.feedback->g2 * cfg.feedback->g2 * cfg.hbar * cfg.hbar /
                 (8.0 * gamma)});
        spec.feedback_terms.push_back(
            {cfg.feedback->s2, si.s_op, -cfg.feedback->g2 / 2.0});
      }
      double dt = std::min(c.value("dt", 0.002),
                           0.1 / spec.generator_norm_bound());
      dt = tau / std::ceil(tau / dt);  // align the grids
      EvolutionTrace target = integrate_master(spec, cfg.rho0, cfg.T, dt);
      // resample target to the collision grid
      EvolutionTrace resampled;
      resampled.tau = cfg.T / cfg.n_list.back();
      for (std::size_t k = 0; k < trajs.front().times.size(); ++k) {
        double t = trajs.front().times[k];
        std::size_t idx = std::min<std::size_t>(
            target.times.size() - 1,
            std::size_t(std::llround(t / target.tau)));
        resampled.times.push_back(t);
        resampled.states.push_back(target.states[idx]);
      }
      result.checks.push_back(
          ensemble_check(cfg, trajs, resampled, "feedback-ensemble"));
    } else {
      throw std::invalid_argument("unknown check type '" + type + "'");
    }
  }

  // manifest last
  Json manifest;
  manifest["name"] = cfg.name;
  char hashbuf[32];
  std::snprintf(hashbuf, sizeof hashbuf, "%016" PRIx64, config_hash(cfg.raw));
  manifest["config_hash"] = hashbuf;
  manifest["seed"] = cfg.seed;
  manifest["hbar"] = cfg.hbar;
  manifest["version"] = "1.0.0";
  manifest["tolerances"] = Json{{"structural", tol::structural},
                                {"comparison", tol::comparison},
                                {"trace_drift_per_step", tol::trace_drift_per_step},
                                {"unitarity", tol::unitarity_predicate},
                                {"grid_moments", tol::grid_moments},
                                {"oscillator_leakage", tol::oscillator_leakage}};
  manifest["files"] = result.files;
  Json checks = Json::array();
  for (const auto& r : result.checks)
    checks.push_back(Json{{"name", r.name},
                          {"pass", r.pass},
                          {"value", r.value},
                          {"tolerance", r.tolerance}});
  manifest["checks"] = checks;
  manifest["pass"] = result.ok();
  std::ofstream mf(out_dir / (cfg.name + "-manifest.json"));
  mf << manifest.dump(2) << "\n";
  result.files.push_back(cfg.name + "-manifest.json");
  return result;
}

}  // namespace qcollide
