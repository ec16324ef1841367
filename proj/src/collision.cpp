#include "qcollide/collision.hpp"

#include <cmath>

namespace qcollide {

namespace {

Matrix joint_free_hamiltonian(const CycleSpec& cycle,
                              const TensorLayout& joint) {
  Matrix h = embed(cycle.s0, joint, 0);
  for (std::size_t k = 0; k < cycle.ancilla_dims.size(); ++k)
    h += embed(cycle.m0[k], joint, k + 1);
  return h;
}

// H0 + sum over the substep's terms of g * S (x) M, with the interaction
// embedded on (system block, ancilla k).
Matrix substep_hamiltonian(const CycleSpec& cycle, const TensorLayout& joint,
                           const Matrix& h0, std::size_t substep,
                           const std::vector<double>& couplings) {
  Matrix h = h0;
  const auto& step = cycle.substeps[substep];
  for (std::size_t t = 0; t < step.size(); ++t) {
    const auto& si = step[t];
    std::vector<Matrix> factors;
    for (std::size_t f = 0; f < joint.factors(); ++f) {
      if (f == 0)
        factors.push_back(si.s_op);
      else if (f == si.ancilla + 1)
        factors.push_back(si.m_op);
      else
        factors.push_back(ops::identity(joint.dims[f]));
    }
    h += couplings[t] * kron(factors);
  }
  return h;
}

Matrix joint_initial_state(const DensityMatrix& rho_s, const CycleSpec& cycle,
                           const std::vector<DensityMatrix>& ancillae) {
  Matrix joint = rho_s.mat;
  for (const auto& m : ancillae) joint = kron(joint, m.mat);
  return joint;
}

std::vector<DensityMatrix> realize_all(
    const std::vector<PreparationFamily>& preps, double tau) {
  std::vector<DensityMatrix> out;
  out.reserve(preps.size());
  for (const auto& p : preps) out.push_back(p.realize(tau));
  return out;
}

}  // namespace

std::vector<Matrix> substep_unitaries(const CycleSpec& cycle, double tau) {
  cycle.validate();
  if (tau <= 0.0) throw std::invalid_argument("collision: tau must be positive");
  const TensorLayout joint = cycle.joint_layout();
  const double tau_sub = tau / double(cycle.p());
  const Matrix h0 = joint_free_hamiltonian(cycle, joint);
  std::vector<Matrix> us;
  us.reserve(cycle.p());
  for (std::size_t i = 0; i < cycle.p(); ++i) {
    std::vector<double> couplings;
    for (const auto& si : cycle.substeps[i])
      couplings.push_back(si.schedule.gbar(tau_sub));
    Matrix h = substep_hamiltonian(cycle, joint, h0, i, couplings);
    us.push_back(expm(Complex(0, -1) * tau_sub / cycle.hbar * h));
  }
  return us;
}

DensityMatrix collide_once(const DensityMatrix& rho_s, const CycleSpec& cycle,
                           const std::vector<PreparationFamily>& preps,
                           double tau) {
  if (rho_s.dim() != cycle.system_dim())
    throw std::invalid_argument("collide_once: system dimension mismatch");
  auto us = substep_unitaries(cycle, tau);
  auto ancillae = realize_all(preps, tau);
  Matrix joint = joint_initial_state(rho_s, cycle, ancillae);
  for (const auto& u : us) joint = u * joint * u.adjoint();
  Matrix reduced = partial_trace(joint, cycle.joint_layout(), {0});
  return DensityMatrix{std::move(reduced), rho_s.tolerance};
}

EvolutionTrace evolve(const DensityMatrix& rho0, const CycleSpec& cycle,
                      const std::vector<PreparationFamily>& preps, double T,
                      int n) {
  if (n < 1) throw std::invalid_argument("evolve: n must be >= 1");
  const double tau = T / double(n);
  auto us = substep_unitaries(cycle, tau);
  auto ancillae = realize_all(preps, tau);
  const TensorLayout joint_layout = cycle.joint_layout();

  EvolutionTrace trace;
  trace.tau = tau;
  trace.n = n;
  trace.times.push_back(0.0);
  trace.states.push_back(rho0);

  DensityMatrix rho = rho0;
  for (int k = 1; k <= n; ++k) {
    Matrix joint = joint_initial_state(rho, cycle, ancillae);
    for (const auto& u : us) joint = u * joint * u.adjoint();
    rho.mat = partial_trace(joint, joint_layout, {0});
    double drift = std::abs(rho.mat.trace() - Complex(1.0));
    if (drift > std::max(double(k) * tol::trace_drift_per_step, 1e-9))
      throw std::runtime_error("evolve: trace drift " + std::to_string(drift) +
                               " after " + std::to_string(k) + " collisions");
    trace.times.push_back(double(k) * tau);
    trace.states.push_back(rho);
  }
  return trace;
}

Matrix mean_propagator(const CycleSpec& cycle, std::size_t substep,
                       double tau_sub) {
  const TensorLayout joint = cycle.joint_layout();
  const Matrix h0 = joint_free_hamiltonian(cycle, joint);
  std::vector<double> couplings;
  for (const auto& si : cycle.substeps[substep])
    couplings.push_back(si.schedule.gbar(tau_sub));
  Matrix h = substep_hamiltonian(cycle, joint, h0, substep, couplings);
  return expm(Complex(0, -1) * tau_sub / cycle.hbar * h);
}

Matrix stepped_propagator(const CycleSpec& cycle, std::size_t substep,
                          double tau_sub, int K) {
  if (K < 2) throw std::invalid_argument("stepped_propagator: K must be >= 2");
  const TensorLayout joint = cycle.joint_layout();
  const Matrix h0 = joint_free_hamiltonian(cycle, joint);
  const double dt = tau_sub / double(K);
  Matrix u = Matrix::Identity(joint.total(), joint.total());
  for (int k = 0; k < K; ++k) {
    double t = (double(k) + 0.5) * dt;
    std::vector<double> couplings;
    for (const auto& si : cycle.substeps[substep])
      couplings.push_back(si.schedule.g(t, tau_sub));
    Matrix h = substep_hamiltonian(cycle, joint, h0, substep, couplings);
    u = expm(Complex(0, -1) * dt / cycle.hbar * h) * u;
  }
  return u;
}

GeneratorEstimate generator_estimate(
    const CycleSpec& cycle, const std::vector<PreparationFamily>& preps,
    const DensityMatrix& rho, const std::vector<double>& tau_list) {
  if (tau_list.size() < 3)
    throw std::invalid_argument("generator_estimate: need >= 3 tau points");
  for (std::size_t i = 1; i < tau_list.size(); ++i)
    if (tau_list[i] >= tau_list[i - 1])
      throw std::invalid_argument("generator_estimate: taus must decrease");

  std::vector<Matrix> diffs;
  std::vector<double> norms;
  for (double tau : tau_list) {
    Matrix d = (collide_once(rho, cycle, preps, tau).mat - rho.mat) / tau;
    norms.push_back(d.norm());
    diffs.push_back(std::move(d));
  }

  GeneratorEstimate est;
  bool growing = true;
  for (std::size_t i = 1; i < norms.size(); ++i)
    if (norms[i] <= norms[i - 1]) growing = false;
  if (growing && norms.back() > 5.0 * norms.front() && norms.back() > 1e-6) {
    est.diverged = true;
    est.rho_dot = diffs.back();
    est.residual = (diffs.back() - diffs[diffs.size() - 2]).norm();
    return est;
  }

  // entrywise polynomial-order-2 extrapolation, residual from the last two
  // sliding windows
  const int order = 2;
  const int window = order + 1;
  const int n = int(tau_list.size());
  auto window_extrapolant = [&](int j) {
    const Eigen::Index dim = rho.dim();
    Matrix out(dim, dim);
    std::vector<double> t(window), re(window), im(window);
    for (int k = 0; k < window; ++k) t[k] = tau_list[j + k];
    for (Eigen::Index r = 0; r < dim; ++r)
      for (Eigen::Index c = 0; c < dim; ++c) {
        for (int k = 0; k < window; ++k) {
          re[k] = diffs[j + k](r, c).real();
          im[k] = diffs[j + k](r, c).imag();
        }
        // Neville at tau = 0
        for (int level = 1; level < window; ++level)
          for (int i = 0; i < window - level; ++i) {
            re[i] = (t[i + level] * re[i] - t[i] * re[i + 1]) /
                    (t[i + level] - t[i]);
            im[i] = (t[i + level] * im[i] - t[i] * im[i + 1]) /
                    (t[i + level] - t[i]);
          }
        out(r, c) = Complex(re[0], im[0]);
      }
    return out;
  };

  est.rho_dot = window_extrapolant(n - window);
  est.residual = (n - window >= 1)
                     ? (est.rho_dot - window_extrapolant(n - window - 1)).norm()
                     : (est.rho_dot - diffs.back()).norm();
  return est;
}

}  // namespace qcollide
