#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "qcollide/builders.hpp"
#include "qcollide/filtering.hpp"

using namespace qcollide;

namespace {

std::mt19937_64 rng(0x5eed0003ull);

DensityMatrix random_density(Eigen::Index d) {
  std::normal_distribution<double> g;
  Matrix m(d, d);
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = 0; j < d; ++j) m(i, j) = Complex(g(rng), g(rng));
  Matrix rho = m * m.adjoint();
  rho /= rho.trace();
  return make_density(rho);
}

CycleSpec qubit_meter_cycle(double amplitude = 0.8, Matrix m0 = Matrix::Zero(2, 2)) {
  CycleSpec cycle;
  cycle.system_layout = TensorLayout{2};
  cycle.s0 = 0.3 * ops::pauli_z();
  cycle.ancilla_dims = {2};
  cycle.m0 = {std::move(m0)};
  cycle.substeps = {{SubInteraction{ops::pauli_x(), ops::pauli_z(), 0,
                                    CouplingSchedule{amplitude, 0.0}}}};
  return cycle;
}

std::vector<PreparationFamily> qubit_prep() {
  return {PreparationFamily::explicit_state_of(ops::diag({0.7, 0.3}))};
}

PointerBasis hadamard_basis() {
  PointerBasis b;
  b.name = "hadamard";
  Matrix h(2, 2);
  double s = 1.0 / std::sqrt(2.0);
  h << s, s, s, -s;
  b.states = h;
  return b;
}

}  // namespace

TEST_CASE("conjugate basis is unitary and Fourier-shifts the eigenbasis") {
  Matrix m = ops::diag({1.0, 2.0, 4.0});
  PointerBasis b = conjugate_basis(m);
  CHECK(is_unitary(b.states, 1e-11));
  // rows have uniform overlap with every eigenvector of M
  for (Eigen::Index j = 0; j < 3; ++j)
    for (Eigen::Index k = 0; k < 3; ++k)
      CHECK(std::abs(b.states(j, k)) ==
            doctest::Approx(1.0 / std::sqrt(3.0)).epsilon(1e-10));
}

TEST_CASE("outcome-weighted conditional states reconstruct the channel") {
  CycleSpec cycle = qubit_meter_cycle(0.8, 0.2 * ops::pauli_x());
  auto preps = qubit_prep();
  PointerBasis basis = hadamard_basis();
  const double tau = 0.13;
  for (int trial = 0; trial < 100; ++trial) {
    DensityMatrix rho = random_density(2);
    Matrix sum = Matrix::Zero(2, 2);
    double psum = 0.0;
    for (std::size_t x = 0; x < 2; ++x) {
      auto [block, prob] = conditional_collide(rho, cycle, preps, tau, basis, x);
      sum += block;
      psum += prob;
      CHECK(std::abs(block.trace().real() - prob) < 1e-13);
    }
    DensityMatrix full = collide_once(rho, cycle, preps, tau);
    CHECK((sum - full.mat).norm() < 1e-12);
    CHECK(psum == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("trajectories are bit-reproducible from the seed") {
  CycleSpec cycle = qubit_meter_cycle();
  auto preps = qubit_prep();
  DensityMatrix rho = random_density(2);
  auto a = sample_trajectory(rho, cycle, preps, 1.0, 64, 42);
  auto b = sample_trajectory(rho, cycle, preps, 1.0, 64, 42);
  REQUIRE(a.record.outcomes.size() == 64);
  CHECK(a.record.outcomes == b.record.outcomes);
  for (std::size_t k = 0; k < 64; ++k) {
    CHECK(a.increments[k].re == b.increments[k].re);
    CHECK(a.increments[k].im == b.increments[k].im);
    CHECK(a.record.probabilities[k] == b.record.probabilities[k]);
  }
  CHECK((a.states.back().mat - b.states.back().mat).norm() == 0.0);
  auto c = sample_trajectory(rho, cycle, preps, 1.0, 64, 43);
  CHECK(a.record.outcomes != c.record.outcomes);
}

TEST_CASE("trajectory bookkeeping: sizes, grid, probabilities") {
  CycleSpec cycle = qubit_meter_cycle();
  auto traj = sample_trajectory(random_density(2), cycle, qubit_prep(), 0.5,
                                20, 7);
  CHECK(traj.states.size() == 21);
  CHECK(traj.times.size() == 21);
  CHECK(traj.increments.size() == 20);
  CHECK(traj.current.size() == 20);
  CHECK(traj.tau == doctest::Approx(0.025));
  CHECK(traj.times.back() == doctest::Approx(0.5));
  for (double p : traj.record.probabilities) {
    CHECK(p > 0.0);
    CHECK(p <= 1.0 + 1e-12);
  }
  for (const auto& st : traj.states) {
    CHECK(std::abs(st.mat.trace().real() - 1.0) < 1e-10);
    CHECK(min_eigenvalue(st.mat) > -1e-10);
  }
}

TEST_CASE("pure initial state stays pure along a conditioned trajectory") {
  CycleSpec cycle = qubit_meter_cycle();
  std::vector<PreparationFamily> preps{
      PreparationFamily::eigenstate(ops::pauli_x(), 1.0)};
  Matrix plus(2, 2);
  plus << 0.5, 0.5, 0.5, 0.5;
  auto traj = sample_trajectory(make_density(plus), cycle, preps, 1.0, 50, 11);
  for (const auto& st : traj.states)
    CHECK(purity(st.mat) == doctest::Approx(1.0).epsilon(1e-8));
}

TEST_CASE("noise increment: re is a martingale, moments follow the meter") {
  CycleSpec cycle = qubit_meter_cycle(0.8, 0.2 * ops::pauli_x());
  auto preps = qubit_prep();
  PointerBasis basis = hadamard_basis();
  const double tau = 0.13, g = 0.8;
  DensityMatrix rho = random_density(2);
  // sum_x p_x rho~_x is the pointer-dephased meter state, so E[re] (a trace
  // of a commutator) vanishes and E[im] follows <M> of the dephased state.
  // Reconstruct increments by replaying both outcomes of the first collision.
  double exp_re = 0.0, exp_im = 0.0, psum = 0.0;
  Matrix m = ops::pauli_z();
  Matrix meter_post = Matrix::Zero(2, 2);
  TensorLayout joint{2, 2};
  auto us = substep_unitaries(cycle, tau);
  Matrix joint_rho = kron(rho.mat, preps[0].realize(tau).mat);
  for (const auto& u : us) joint_rho = u * joint_rho * u.adjoint();
  Matrix rho_m = partial_trace(joint_rho, joint, {1});
  for (std::size_t x = 0; x < 2; ++x) {
    Vector px = basis.states.col(x);
    Matrix proj = px * px.adjoint();
    double prob = (proj * rho_m).trace().real();
    Matrix cond = (proj * rho_m * proj) / prob;
    Complex comm = (m * cond - cond * m).trace();
    double re = tau * g * (Complex(0, -0.5) * comm).real();
    double im = tau * g * 0.5 * (m * cond + cond * m).trace().real();
    exp_re += prob * re;
    exp_im += prob * im;
    psum += prob;
    meter_post += prob * cond;
  }
  Matrix dephased = Matrix::Zero(2, 2);
  for (std::size_t x = 0; x < 2; ++x) {
    Vector px = basis.states.col(x);
    Matrix proj = px * px.adjoint();
    dephased += proj * rho_m * proj;
  }
  CHECK(psum == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(std::abs(exp_re) < 1e-12);
  CHECK(exp_im == doctest::Approx(tau * g * (m * dephased).trace().real())
                      .epsilon(1e-10));
  CHECK((meter_post - dephased).norm() < 1e-12);
}

TEST_CASE("sharp pointer basis: the noisy quadrature of dW vanishes") {
  // pointer basis = eigenbasis of M: each conditional meter state is an
  // M-eigenprojector, so <[M, rho~]> = 0 outcome by outcome.
  CycleSpec cycle = qubit_meter_cycle();
  auto preps = qubit_prep();
  PointerBasis sharp;
  sharp.name = "sharp";
  sharp.states = Matrix::Identity(2, 2);  // sigma_z eigenbasis
  TrajectoryOptions opts;
  opts.basis = sharp;
  auto traj = sample_trajectory(random_density(2), cycle, preps, 1.0, 40, 3,
                                opts);
  for (const auto& inc : traj.increments) CHECK(std::abs(inc.re) < 1e-12);
}

TEST_CASE("ensemble average drifts toward the unconditional evolution") {
  CycleSpec cycle = qubit_meter_cycle();
  auto preps = qubit_prep();
  DensityMatrix rho = random_density(2);
  const double T = 0.5;
  const int n = 16, ntraj = 600;
  std::vector<ConditionalTrajectory> trajs;
  for (int t = 0; t < ntraj; ++t)
    trajs.push_back(sample_trajectory(rho, cycle, preps, T, n, 1000 + t));
  EvolutionTrace mean = ensemble_average(trajs);
  EvolutionTrace exact = evolve(rho, cycle, preps, T, n);
  for (std::size_t k = 0; k < mean.times.size(); ++k)
    CHECK(trace_distance(mean.states[k].mat, exact.states[k].mat) < 0.05);
}

TEST_CASE("feedback step is the stated unitary conjugation") {
  FeedbackSpec fb{0.5 * ops::pauli_x(), 0.8};
  DensityMatrix rho = random_density(2);
  DensityMatrix out = feedback_step(rho, 1.7, fb, 0.02, 1.0);
  Matrix u = expm(Complex(0, -1) * 0.8 * 1.7 * 0.02 * 0.5 * ops::pauli_x());
  CHECK((out.mat - u * rho.mat * u.adjoint()).norm() < 1e-12);
  CHECK(std::abs(out.mat.trace().real() - 1.0) < 1e-12);
}

TEST_CASE("input-output current availability follows [M0, pointer] = f M") {
  // qubit meter: [sigma_y/2, sigma_x] = -i sigma_z = f M exactly
  CycleSpec cycle;
  cycle.system_layout = TensorLayout{2};
  cycle.s0 = 0.3 * ops::pauli_z();
  cycle.ancilla_dims = {2};
  cycle.m0 = {0.5 * ops::pauli_y()};
  cycle.substeps = {{SubInteraction{0.5 * ops::pauli_z(), ops::pauli_z(), 0,
                                    CouplingSchedule{1.0, 0.0}}}};
  std::vector<PreparationFamily> preps{
      PreparationFamily::explicit_state_of(ops::diag({0.6, 0.4}))};
  PointerBasis basis = hadamard_basis();  // sigma_x eigenbasis
  basis.m_op = ops::pauli_x();
  TrajectoryOptions opts;
  opts.basis = basis;
  Matrix plus(2, 2);
  plus << 0.5, 0.5, 0.5, 0.5;
  auto traj =
      sample_trajectory(make_density(plus), cycle, preps, 0.2, 8, 5, opts);
  CHECK(traj.io_available);
  CHECK(traj.io_current.size() == 8);

  // an M0 with no such relation disables the input-output form
  CycleSpec bad = cycle;
  bad.m0 = {ops::diag({0.7, -0.1})};
  auto t2 = sample_trajectory(make_density(plus), bad, preps, 0.2, 8, 5, opts);
  CHECK_FALSE(t2.io_available);
}

TEST_CASE("ensemble_average rejects mismatched grids") {
  CycleSpec cycle = qubit_meter_cycle();
  auto preps = qubit_prep();
  DensityMatrix rho = random_density(2);
  std::vector<ConditionalTrajectory> trajs{
      sample_trajectory(rho, cycle, preps, 1.0, 8, 1),
      sample_trajectory(rho, cycle, preps, 1.0, 16, 2)};
  CHECK_THROWS_AS(ensemble_average(trajs), std::invalid_argument);
}
