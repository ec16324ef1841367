#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "qcollide/builders.hpp"
#include "qcollide/collision.hpp"

using namespace qcollide;

namespace {

std::mt19937_64 rng(0x5eed0002ull);

DensityMatrix random_density(Eigen::Index d) {
  std::normal_distribution<double> g;
  Matrix m(d, d);
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = 0; j < d; ++j) m(i, j) = Complex(g(rng), g(rng));
  Matrix rho = m * m.adjoint();
  rho /= rho.trace();
  return make_density(rho);
}

CycleSpec weak_qubit_cycle(double c = 0.5) {
  CycleSpec cycle;
  cycle.system_layout = TensorLayout{2};
  cycle.s0 = 0.5 * ops::pauli_z();
  cycle.ancilla_dims = {2};
  cycle.m0 = {Matrix::Zero(2, 2)};
  cycle.substeps = {{SubInteraction{ops::pauli_x(), ops::pauli_z(), 0,
                                    CouplingSchedule{c, 0.0}}}};
  return cycle;
}

std::vector<PreparationFamily> mixed_prep() {
  return {PreparationFamily::explicit_state_of(ops::diag({0.8, 0.2}))};
}

}  // namespace

TEST_CASE("substep unitaries are unitary and act on the joint space") {
  CycleSpec cycle = weak_qubit_cycle();
  auto us = substep_unitaries(cycle, 0.1);
  REQUIRE(us.size() == 1);
  CHECK(us[0].rows() == 4);
  CHECK(is_unitary(us[0], 1e-11));
}

TEST_CASE("substep unitary equals the direct exponential of the mean coupling") {
  CycleSpec cycle = weak_qubit_cycle(0.7);
  const double tau = 0.23;
  Matrix h = kron(cycle.s0, Matrix::Identity(2, 2)) +
             0.7 * kron(ops::pauli_x(), ops::pauli_z());
  Matrix expect = expm(Complex(0, -1) * tau * h);
  CHECK((substep_unitaries(cycle, tau)[0] - expect).norm() < 1e-11);
}

TEST_CASE("collide_once is trace preserving, positive, and linear") {
  CycleSpec cycle = weak_qubit_cycle();
  auto preps = mixed_prep();
  for (int trial = 0; trial < 10; ++trial) {
    DensityMatrix rho = random_density(2);
    DensityMatrix out = collide_once(rho, cycle, preps, 0.17);
    CHECK(std::abs(out.mat.trace().real() - 1.0) < 1e-12);
    CHECK(min_eigenvalue(out.mat) > -1e-12);
    CHECK(is_hermitian(out.mat, 1e-12));
  }
  DensityMatrix a = random_density(2), b = random_density(2);
  Matrix mix = 0.3 * a.mat + 0.7 * b.mat;
  DensityMatrix vm = collide_once(make_density(mix), cycle, preps, 0.17);
  Matrix sum = 0.3 * collide_once(a, cycle, preps, 0.17).mat +
               0.7 * collide_once(b, cycle, preps, 0.17).mat;
  CHECK((vm.mat - sum).norm() < 1e-12);
}

TEST_CASE("zero coupling and zero free Hamiltonian leave the state alone") {
  CycleSpec cycle = weak_qubit_cycle(0.0);
  cycle.s0 = Matrix::Zero(2, 2);
  DensityMatrix rho = random_density(2);
  DensityMatrix out = collide_once(rho, cycle, mixed_prep(), 0.3);
  CHECK((out.mat - rho.mat).norm() < 1e-12);
}

TEST_CASE("eigenstate ancilla yields exactly unitary reduced dynamics") {
  // ancilla in a sigma_z eigenstate, m0 diagonal: the system sees
  // exp(-i tau (s0 + gbar * <M> * S))
  CycleSpec cycle = weak_qubit_cycle(0.7);
  cycle.m0 = {0.4 * ops::pauli_z()};
  std::vector<PreparationFamily> preps{
      PreparationFamily::eigenstate(ops::pauli_z(), 1.0)};
  const double T = 2.0;
  const int n = 50;
  DensityMatrix rho = random_density(2);
  EvolutionTrace trace = evolve(rho, cycle, preps, T, n);
  Matrix h = cycle.s0 + 0.7 * 1.0 * ops::pauli_x();
  Matrix u = expm(Complex(0, -1) * T * h);
  CHECK(trace_distance(trace.states.back().mat,
                       (u * rho.mat * u.adjoint()).eval()) < 1e-10);
  CHECK(std::abs(purity(trace.states.back().mat) - purity(rho.mat)) < 1e-12);
}

TEST_CASE("evolve records n+1 states on the uniform grid") {
  CycleSpec cycle = weak_qubit_cycle();
  EvolutionTrace trace = evolve(random_density(2), cycle, mixed_prep(), 1.0, 8);
  REQUIRE(trace.states.size() == 9);
  REQUIRE(trace.times.size() == 9);
  CHECK(trace.times.front() == doctest::Approx(0.0));
  CHECK(trace.times.back() == doctest::Approx(1.0));
  CHECK(trace.tau == doctest::Approx(0.125));
  // iterating collide_once by hand reproduces the trace
  DensityMatrix rho = trace.states.front();
  for (int k = 1; k <= 8; ++k) {
    rho = collide_once(rho, cycle, mixed_prep(), 0.125);
    CHECK((rho.mat - trace.states[k].mat).norm() < 1e-12);
  }
}

TEST_CASE("mean propagator equals the stepped one for constant switching") {
  CycleSpec cycle = weak_qubit_cycle(0.9);
  Matrix mean = mean_propagator(cycle, 0, 0.2);
  Matrix stepped = stepped_propagator(cycle, 0, 0.2, 16);
  CHECK((mean - stepped).norm() < 1e-11);
}

TEST_CASE("stepped propagator converges as the slice count grows") {
  CycleSpec cycle = weak_qubit_cycle(0.9);
  cycle.substeps[0][0].schedule.profile = SwitchingProfile::SymmetricBump;
  cycle.m0 = {0.5 * ops::pauli_x()};  // make time ordering matter
  Matrix fine = stepped_propagator(cycle, 0, 0.4, 4096);
  double d32 = (stepped_propagator(cycle, 0, 0.4, 32) - fine).norm();
  double d256 = (stepped_propagator(cycle, 0, 0.4, 256) - fine).norm();
  CHECK(is_unitary(fine, 1e-10));
  CHECK(d256 < d32);
  CHECK(d256 < 1e-5);
}

TEST_CASE("generator estimate matches the analytic weak-coupling drift") {
  CycleSpec cycle = weak_qubit_cycle(0.5);
  auto preps = mixed_prep();
  DensityMatrix rho = random_density(2);
  std::vector<double> taus{0.1, 0.05, 0.02, 0.01, 0.005, 0.002, 0.001};
  GeneratorEstimate est = generator_estimate(cycle, preps, rho, taus);
  CHECK_FALSE(est.diverged);
  Matrix h = cycle.s0 + 0.5 * 0.6 * ops::pauli_x();  // Xi = gbar <M>
  Matrix expect = Complex(0, -1) * (h * rho.mat - rho.mat * h);
  CHECK((est.rho_dot - expect).norm() < 1e-6);
}

TEST_CASE("generator estimate flags the divergent strong-measurement regime") {
  CycleSpec cycle;
  cycle.system_layout = TensorLayout{2};
  cycle.s0 = Matrix::Zero(2, 2);
  cycle.ancilla_dims = {32};
  cycle.m0 = {Matrix::Zero(32, 32)};
  cycle.substeps = {{SubInteraction{ops::diag({0.5, -0.5}),
                                    ops::grid_operator(32, -2.0, 2.0), 0,
                                    CouplingSchedule{1.0, -1.0}}}};
  std::vector<PreparationFamily> preps{PreparationFamily::moment_gaussian(
      32, -2.0, 2.0, Polynomial{{0.0}}, Polynomial{{0.04}})};
  Matrix plus(2, 2);
  plus << 0.5, 0.5, 0.5, 0.5;
  GeneratorEstimate est = generator_estimate(cycle, preps, make_density(plus),
                                             {0.1, 0.05, 0.02, 0.01, 0.005});
  CHECK(est.diverged);
}
