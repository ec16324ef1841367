#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "qcollide/builders.hpp"
#include "qcollide/emergent.hpp"

using namespace qcollide;

namespace {

const std::vector<double> kSweep{0.1, 0.05, 0.02, 0.01, 0.005, 0.002, 0.001};

DensityMatrix plus_state() {
  Matrix m(2, 2);
  m << 0.5, 0.5, 0.5, 0.5;
  return make_density(m);
}

CycleSpec single_qubit_cycle(Matrix s, Matrix m, CouplingSchedule sched,
                             Matrix m0 = Matrix::Zero(2, 2)) {
  CycleSpec cycle;
  cycle.system_layout = TensorLayout{2};
  cycle.s0 = Matrix::Zero(2, 2);
  cycle.ancilla_dims = {m.rows()};
  cycle.m0 = {std::move(m0)};
  cycle.substeps = {{SubInteraction{std::move(s), std::move(m), 0, sched}}};
  return cycle;
}

}  // namespace

TEST_CASE("exact-unitarity witness: both conditions checked independently") {
  Matrix m0c = 0.3 * ops::pauli_z();  // preserves sigma_z eigenspaces
  auto good = PreparationFamily::eigenstate(ops::pauli_z(), 1.0);
  UnitarityWitness w = check_exact_unitarity(good, ops::pauli_z(), m0c);
  CHECK(w.pass);

  // (i) violated: state not supported on a single M-eigenspace
  auto tilted = PreparationFamily::eigenstate(ops::pauli_x(), 1.0);
  UnitarityWitness wi = check_exact_unitarity(tilted, ops::pauli_z(), m0c);
  CHECK_FALSE(wi.pass);
  CHECK(wi.magnitude > 1e-3);

  // (ii) violated: m0 rotates the eigenspace away
  UnitarityWitness wii =
      check_exact_unitarity(good, ops::pauli_z(), ops::pauli_x());
  CHECK_FALSE(wii.pass);
  CHECK(wii.magnitude > 1e-3);
}

TEST_CASE("regime classification across the four canonical setups") {
  // exact unitary: eigenstate ancilla, commuting m0
  {
    auto cycle = single_qubit_cycle(ops::pauli_x(), ops::pauli_z(),
                                    CouplingSchedule{0.7, 0.0},
                                    0.4 * ops::pauli_z());
    std::vector<PreparationFamily> preps{
        PreparationFamily::eigenstate(ops::pauli_z(), 1.0)};
    CHECK(classify_regime(cycle, preps, kSweep).regime == Regime::ExactUnitary);
  }
  // effective unitary: weak coupling to a mixed ancilla
  {
    auto cycle = single_qubit_cycle(ops::pauli_x(), ops::pauli_z(),
                                    CouplingSchedule{0.5, 0.0});
    std::vector<PreparationFamily> preps{
        PreparationFamily::explicit_state_of(ops::diag({0.8, 0.2}))};
    CHECK(classify_regime(cycle, preps, kSweep).regime ==
          Regime::EffectiveUnitary);
  }
  // finite decoherence: strong coupling, shrinking Gaussian
  {
    auto cycle = single_qubit_cycle(
        ops::diag({1.0 / std::sqrt(2.0), -1.0 / std::sqrt(2.0)}),
        ops::grid_operator(128, -0.35, 0.35), CouplingSchedule{1.0, -1.0});
    cycle.ancilla_dims = {128};
    cycle.m0 = {Matrix::Zero(128, 128)};
    std::vector<PreparationFamily> preps{PreparationFamily::moment_gaussian(
        128, -0.35, 0.35, Polynomial{{0.0, 0.3}},
        Polynomial{{0.0, 0.5, -0.09}})};
    std::vector<double> sweep;
    for (int k = 0; k < 8; ++k) sweep.push_back(1.0 / (64 << k));
    RegimeReport rep = classify_regime(cycle, preps, sweep);
    CHECK(rep.regime == Regime::FiniteDecoherence);
  }
  // zeno: strong coupling, fixed-width Gaussian
  {
    auto cycle = single_qubit_cycle(ops::diag({0.5, -0.5}),
                                    ops::grid_operator(64, -2.0, 2.0),
                                    CouplingSchedule{1.0, -1.0});
    cycle.ancilla_dims = {64};
    cycle.m0 = {Matrix::Zero(64, 64)};
    std::vector<PreparationFamily> preps{PreparationFamily::moment_gaussian(
        64, -2.0, 2.0, Polynomial{{0.0}}, Polynomial{{0.01}})};
    CHECK(classify_regime(cycle, preps, kSweep).regime == Regime::Zeno);
  }
}

TEST_CASE("single-substep master equation: potential plus dephasing") {
  // strong coupling, Gaussian with mean Xi*tau and variance Gamma*tau
  auto cycle = single_qubit_cycle(
      ops::diag({1.0 / std::sqrt(2.0), -1.0 / std::sqrt(2.0)}),
      ops::grid_operator(128, -0.35, 0.35), CouplingSchedule{1.0, -1.0});
  cycle.ancilla_dims = {128};
  cycle.m0 = {Matrix::Zero(128, 128)};
  std::vector<PreparationFamily> preps{PreparationFamily::moment_gaussian(
      128, -0.35, 0.35, Polynomial{{0.0, 0.3}}, Polynomial{{0.0, 0.5, -0.09}})};
  std::vector<double> sweep;
  for (int k = 0; k < 8; ++k) sweep.push_back(1.0 / (64 << k));
  MasterEquationSpec spec =
      build_master_equation(cycle, limit_set(cycle, preps, sweep));
  // h_eff = Xi * S with Xi = 0.3
  Matrix s = ops::diag({1.0 / std::sqrt(2.0), -1.0 / std::sqrt(2.0)});
  CHECK((spec.h_eff - 0.3 * s).norm() < 1e-6);
  REQUIRE(spec.dissipators.size() == 1);
  // Gamma_11 = (tau/4) g^2 <{M,M}> = <M^2>/(2 tau) -> 0.25
  CHECK(spec.dissipators[0].rate == doctest::Approx(0.25).epsilon(1e-4));
  CHECK(spec.feedback_terms.empty());
}

TEST_CASE("two-substep assembly reproduces the asymmetric coefficients") {
  // handcrafted finite-tau sample fed straight into the assembler
  CycleSpec cycle;
  cycle.system_layout = TensorLayout{2};
  cycle.s0 = 0.3 * ops::pauli_z();
  cycle.ancilla_dims = {2};
  cycle.m0 = {Matrix::Zero(2, 2)};
  cycle.substeps = {
      {SubInteraction{ops::pauli_z(), ops::pauli_z(), 0, CouplingSchedule{1, 0}}},
      {SubInteraction{ops::pauli_x(), ops::pauli_z(), 0, CouplingSchedule{1, 0}}}};

  LimitSweepSample sample;
  sample.tau = 0.0;
  sample.substep_of = {0, 1};
  sample.xi = Eigen::VectorXd::Zero(2);
  sample.xi << 0.18, 0.5;
  sample.mtilde0 = Eigen::VectorXd::Zero(2);
  sample.mtilde0 << 0.0, 0.2;
  sample.gamma = Eigen::MatrixXd::Zero(2, 2);
  sample.gamma(0, 0) = 0.009;
  sample.gamma(1, 1) = 2.5;
  sample.mtilde = Eigen::MatrixXd::Zero(2, 2);
  sample.mtilde(0, 1) = -0.15;
  sample.mtilde(1, 0) = 0.15;

  MasterEquationSpec spec = build_master_equation(cycle, sample);
  // h_eff = s0 + (Xi_1/2) S_1 + (Xi_2/2 - 3 Mt_20) S_2
  Matrix expect_h = 0.3 * ops::pauli_z() + 0.09 * ops::pauli_z() +
                    (0.25 - 3.0 * 0.2) * ops::pauli_x();
  CHECK((spec.h_eff - expect_h).norm() < 1e-12);
  REQUIRE(spec.dissipators.size() == 2);
  CHECK(spec.dissipators[0].rate == doctest::Approx(0.009 / 2.0));
  CHECK(spec.dissipators[1].rate == doctest::Approx(2.5 / 2.0));
  REQUIRE(spec.feedback_terms.size() == 1);
  // sequential pair: -(2/p) Mtilde_12 with the later operator outside
  CHECK(spec.feedback_terms[0].rate == doctest::Approx(0.15));
  CHECK((spec.feedback_terms[0].a - ops::pauli_x()).norm() < 1e-14);
  CHECK((spec.feedback_terms[0].b - ops::pauli_z()).norm() < 1e-14);
}

TEST_CASE("matched sequential feedback pairs fold into the Hamiltonian") {
  // newton-pair wiring at small dimension: the induced x1 x2 interaction must
  // appear in h_eff with no leftover sandwich terms
  const Eigen::Index d = 4;
  const double D = 0.2;
  Matrix x = ops::position(d, 1.0, 1.0);
  Matrix x1 = kron(x, Matrix::Identity(d, d));
  Matrix x2 = kron(Matrix::Identity(d, d), x);
  CycleSpec cycle;
  cycle.system_layout = TensorLayout{d, d};
  cycle.s0 = Matrix::Zero(d * d, d * d);
  cycle.ancilla_dims = {2, 2};
  cycle.m0 = {Matrix::Zero(2, 2), Matrix::Zero(2, 2)};
  CouplingSchedule sp{1.0 / std::sqrt(2.0 * D), -0.5};
  CouplingSchedule sx{std::sqrt(D / 2.0), -0.5};
  cycle.substeps = {
      {SubInteraction{x1, ops::pauli_y(), 0, sp},
       SubInteraction{x2, ops::pauli_y(), 1, sp}},
      {SubInteraction{x1, ops::pauli_x(), 1, sx},
       SubInteraction{x2, ops::pauli_x(), 0, sx}}};
  std::vector<PreparationFamily> preps{
      PreparationFamily::eigenstate(ops::pauli_z(), 1.0),
      PreparationFamily::eigenstate(ops::pauli_z(), 1.0)};
  MasterEquationSpec spec =
      build_master_equation(cycle, limit_set(cycle, preps, kSweep));
  CHECK(spec.feedback_terms.empty());
  Matrix x1x2 = x1 * x2;
  double coeff = (x1x2.adjoint() * spec.h_eff).trace().real() /
                 (x1x2.adjoint() * x1x2).trace().real();
  CHECK(coeff == doctest::Approx(0.5).epsilon(1e-8));  // K/2 with K = 1
  CHECK((spec.h_eff - coeff * x1x2).norm() < 1e-8);
  // per-site dissipator rates D/8 + 1/(8D)
  double r1 = 0.0, r2 = 0.0;
  for (const auto& diss : spec.dissipators) {
    if ((diss.a - x1).norm() < 1e-12) r1 += diss.rate;
    if ((diss.a - x2).norm() < 1e-12) r2 += diss.rate;
  }
  CHECK(r1 == doctest::Approx(D / 8.0 + 1.0 / (8.0 * D)).epsilon(1e-8));
  CHECK(r2 == doctest::Approx(D / 8.0 + 1.0 / (8.0 * D)).epsilon(1e-8));
}

TEST_CASE("integrate_master reproduces the analytic dephasing curve") {
  MasterEquationSpec spec;
  spec.hbar = 1.0;
  spec.h_eff = 0.4 * ops::pauli_z();
  spec.dissipators.push_back({ops::pauli_z(), ops::pauli_z(), 0.15});
  EvolutionTrace trace = integrate_master(spec, plus_state(), 1.0, 0.001);
  // rho01(t) = 0.5 exp(-0.8 i t) exp(-4 * 0.15 t / hbar^2)
  for (std::size_t k = 0; k < trace.times.size(); k += 100) {
    double t = trace.times[k];
    Complex expect = 0.5 * std::exp(Complex(-0.6 * t, -0.8 * t));
    CHECK(std::abs(trace.states[k].mat(0, 1) - expect) < 1e-9);
  }
}

TEST_CASE("integrate_master enforces its stability bound") {
  MasterEquationSpec spec;
  spec.hbar = 1.0;
  spec.h_eff = 50.0 * ops::pauli_z();
  CHECK_THROWS_AS(integrate_master(spec, plus_state(), 1.0, 0.5),
                  std::invalid_argument);
}

TEST_CASE("apply() is the derivative of the integrated flow") {
  MasterEquationSpec spec;
  spec.hbar = 1.0;
  spec.h_eff = 0.3 * ops::pauli_x();
  spec.dissipators.push_back({ops::pauli_z(), ops::pauli_z(), 0.1});
  spec.feedback_terms.push_back({ops::pauli_x(), ops::pauli_z(), 0.05});
  DensityMatrix rho = plus_state();
  const double dt = 1e-6;
  EvolutionTrace t = integrate_master(spec, rho, 10.0 * dt, dt);
  Matrix numeric = (t.states[1].mat - t.states[0].mat) / dt;
  CHECK((numeric - spec.apply(rho.mat)).norm() < 1e-5);
}

TEST_CASE("zeno factor and decay curve match the Gaussian closed forms") {
  const double sigma2 = 0.04, ds = 1.0;
  auto prep = PreparationFamily::moment_gaussian(
      64, -2.0, 2.0, Polynomial{{0.1}}, Polynomial{{sigma2}});
  Matrix m = ops::grid_operator(64, -2.0, 2.0);
  Complex z = zeno_factor(prep, m, ds, 1.0);
  Complex expect = std::exp(Complex(-sigma2 * ds * ds / 2.0, -0.1 * ds));
  CHECK(std::abs(z - expect) < 1e-9);

  const double tau = 0.005, t = 0.4;
  double curve = zeno_decay_curve(prep, m, ds, t, tau);
  double rate = 1.0 - std::exp(-sigma2 * ds * ds / 2.0);
  CHECK(curve == doctest::Approx(std::exp(-t / tau * rate)).epsilon(1e-9));
}

TEST_CASE("weak-coupling generator agrees with the built master equation") {
  CycleSpec cycle = single_qubit_cycle(ops::pauli_x(), ops::pauli_z(),
                                       CouplingSchedule{0.5, 0.0});
  cycle.s0 = 0.5 * ops::pauli_z();
  std::vector<PreparationFamily> preps{
      PreparationFamily::explicit_state_of(ops::diag({0.8, 0.2}))};
  MasterEquationSpec spec =
      build_master_equation(cycle, limit_set(cycle, preps, kSweep));
  DensityMatrix rho = plus_state();
  GeneratorEstimate est = generator_estimate(cycle, preps, rho, kSweep);
  CHECK((est.rho_dot - spec.apply(rho.mat)).norm() < 1e-6);
}

TEST_CASE("build_master_equation refuses divergent limits") {
  auto cycle = single_qubit_cycle(ops::diag({0.5, -0.5}),
                                  ops::grid_operator(64, -2.0, 2.0),
                                  CouplingSchedule{1.0, -1.0});
  cycle.ancilla_dims = {64};
  cycle.m0 = {Matrix::Zero(64, 64)};
  std::vector<PreparationFamily> preps{PreparationFamily::moment_gaussian(
      64, -2.0, 2.0, Polynomial{{0.0}}, Polynomial{{0.01}})};
  LimitSet limits = limit_set(cycle, preps, kSweep);
  CHECK(limits.any_diverged());
  CHECK_THROWS_AS(build_master_equation(cycle, limits), std::invalid_argument);
}
