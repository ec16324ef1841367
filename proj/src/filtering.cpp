#include "qcollide/filtering.hpp"

#include <cmath>
#include <random>

namespace qcollide {

namespace {

void validate_basis(const PointerBasis& basis, Eigen::Index dm) {
  if (basis.states.rows() != dm || basis.states.cols() != dm)
    throw std::invalid_argument("pointer basis must span the ancilla space");
  if (!is_unitary(basis.states))
    throw std::invalid_argument("pointer basis states are not orthonormal");
}

// <x| joint |x> over the ancilla factor of a [ds, dm] layout.
Matrix project_block(const Matrix& joint, Eigen::Index ds, Eigen::Index dm,
                     const Vector& x) {
  Matrix block = Matrix::Zero(ds, ds);
  for (Eigen::Index i = 0; i < ds; ++i)
    for (Eigen::Index j = 0; j < ds; ++j) {
      Complex v(0, 0);
      for (Eigen::Index a = 0; a < dm; ++a)
        for (Eigen::Index b = 0; b < dm; ++b)
          v += std::conj(x[a]) * joint(i * dm + a, j * dm + b) * x[b];
      block(i, j) = v;
    }
  return block;
}

const SubInteraction& single_interaction(const CycleSpec& cycle) {
  if (cycle.ancilla_dims.size() != 1)
    throw std::invalid_argument("filtering requires a single ancilla");
  if (cycle.p() != 1 || cycle.substeps[0].size() != 1)
    throw std::invalid_argument(
        "filtering requires a single-substep, single-interaction cycle");
  return cycle.substeps[0][0];
}

NoiseIncrement noise_increment(const Matrix& m_op, const Matrix& rho_m,
                               const Vector& x, double tau_g) {
  double pm = std::real((x.adjoint() * rho_m * x)(0, 0));
  if (pm <= 0.0)
    throw std::invalid_argument("noise increment at zero-probability outcome");
  Matrix tilde = rho_m / pm;
  Matrix comm = Complex(0, -0.5) * (m_op * tilde - tilde * m_op);
  Matrix anti = 0.5 * (m_op * tilde + tilde * m_op);
  NoiseIncrement w;
  w.re = tau_g * std::real((x.adjoint() * comm * x)(0, 0));
  w.im = tau_g * std::real((x.adjoint() * anti * x)(0, 0));
  w.dW = Complex(w.re, w.im);
  return w;
}

}  // namespace

PointerBasis conjugate_basis(const Matrix& m_op) {
  if (!is_hermitian(m_op))
    throw std::invalid_argument("conjugate_basis: operator must be Hermitian");
  Eigen::SelfAdjointEigenSolver<Matrix> es(m_op);
  const Eigen::Index d = m_op.rows();
  Matrix dft(d, d);
  const double norm = 1.0 / std::sqrt(double(d));
  for (Eigen::Index j = 0; j < d; ++j)
    for (Eigen::Index k = 0; k < d; ++k)
      dft(j, k) = norm * std::exp(Complex(0, -2.0 * M_PI * double(j) *
                                                 double(k) / double(d)));
  PointerBasis basis;
  basis.name = "conjugate";
  basis.states = es.eigenvectors() * dft;
  return basis;
}

std::pair<Matrix, double> conditional_collide(
    const DensityMatrix& rho_c, const CycleSpec& cycle,
    const std::vector<PreparationFamily>& preps, double tau,
    const PointerBasis& basis, std::size_t outcome) {
  const SubInteraction& si = single_interaction(cycle);
  (void)si;
  const Eigen::Index ds = cycle.system_dim();
  const Eigen::Index dm = cycle.ancilla_dims[0];
  validate_basis(basis, dm);
  if (outcome >= std::size_t(dm))
    throw std::invalid_argument("conditional_collide: outcome out of range");

  DensityMatrix rho_m = preps.at(0).realize(tau);
  Matrix joint = kron(rho_c.mat, rho_m.mat);
  for (const auto& u : substep_unitaries(cycle, tau))
    joint = u * joint * u.adjoint();

  Matrix block = project_block(joint, ds, dm, basis.states.col(outcome));
  double prob = block.trace().real();
  if (prob < 1e-15)
    throw std::invalid_argument(
        "conditional_collide: requested outcome has zero probability");
  return {std::move(block), prob};
}

DensityMatrix feedback_step(const DensityMatrix& rho_c, double chi_dot,
                            const FeedbackSpec& feedback, double tau,
                            double hbar) {
  if (!std::isfinite(chi_dot))
    throw std::invalid_argument("feedback_step: current must be finite");
  Matrix u = expm(Complex(0, -1) * feedback.g2 * chi_dot * tau / hbar *
                  feedback.s2);
  return DensityMatrix{u * rho_c.mat * u.adjoint(), rho_c.tolerance};
}

ConditionalTrajectory sample_trajectory(
    const DensityMatrix& rho0, const CycleSpec& cycle,
    const std::vector<PreparationFamily>& preps, double T, int n,
    std::uint64_t seed, const TrajectoryOptions& options) {
  if (n < 1) throw std::invalid_argument("sample_trajectory: n must be >= 1");
  const SubInteraction& si = single_interaction(cycle);
  const Eigen::Index ds = cycle.system_dim();
  const Eigen::Index dm = cycle.ancilla_dims[0];
  const double tau = T / double(n);
  const double g = si.schedule.gbar(tau);
  const double hbar = cycle.hbar;

  PointerBasis basis =
      options.basis ? *options.basis : conjugate_basis(si.m_op);
  validate_basis(basis, dm);

  DensityMatrix rho_m = preps.at(0).realize(tau);
  Matrix u_cycle = substep_unitaries(cycle, tau)[0];
  double gamma = tau * g * g * moment(rho_m, si.m_op, 2);

  // Input-output current available when [M0, m] = f M structurally.
  Complex io_f(0, 0);
  bool io_ok = false;
  if (basis.m_op) {
    Matrix comm = cycle.m0[0] * *basis.m_op - *basis.m_op * cycle.m0[0];
    double mm = std::real((si.m_op.adjoint() * si.m_op).trace());
    if (mm > 0.0) {
      io_f = (si.m_op.adjoint() * comm).trace() / mm;
      double scale = std::max(1.0, comm.norm());
      io_ok = (comm - io_f * si.m_op).norm() <= 1e-9 * scale;
    }
  }

  std::seed_seq sseq{std::uint32_t(seed & 0xffffffffu),
                     std::uint32_t(seed >> 32)};
  std::mt19937_64 rng(sseq);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  ConditionalTrajectory traj;
  traj.seed = seed;
  traj.tau = tau;
  traj.record.basis = basis.name;
  traj.io_available = io_ok;
  traj.times.push_back(0.0);
  traj.states.push_back(rho0);

  const TensorLayout joint_layout{ds, dm};
  DensityMatrix rho = rho0;
  for (int k = 1; k <= n; ++k) {
    Matrix joint = kron(rho.mat, rho_m.mat);
    joint = u_cycle * joint * u_cycle.adjoint();
    // conditional meter state after the interaction: the noise increment is
    // a martingale only relative to this state, not the fresh preparation
    Matrix meter_post = partial_trace(joint, joint_layout, {1});

    std::vector<Matrix> blocks;
    std::vector<double> probs;
    double total = 0.0;
    for (Eigen::Index x = 0; x < dm; ++x) {
      Matrix b = project_block(joint, ds, dm, basis.states.col(x));
      double p = std::max(0.0, b.trace().real());
      total += p;
      probs.push_back(p);
      blocks.push_back(std::move(b));
    }
    if (std::abs(total - 1.0) > 1e-9)
      throw std::runtime_error("sample_trajectory: outcome probabilities sum " +
                               std::to_string(total));

    double u = unif(rng) * total;
    std::size_t chosen = dm - 1;
    double acc = 0.0;
    for (Eigen::Index x = 0; x < dm; ++x) {
      acc += probs[x];
      if (u <= acc) {
        chosen = std::size_t(x);
        break;
      }
    }
    if (probs[chosen] <= 0.0)
      throw std::runtime_error("sample_trajectory: drew a null outcome");

    rho.mat = blocks[chosen] / probs[chosen];
    rho.mat = 0.5 * (rho.mat + rho.mat.adjoint().eval());

    NoiseIncrement w = noise_increment(si.m_op, meter_post,
                                       basis.states.col(chosen), tau * g);
    double s_mean = (si.s_op * rho.mat).trace().real();
    double chi_dot = s_mean;
    if (gamma > 0.0) chi_dot += hbar * w.re / (2.0 * gamma * tau);

    if (options.feedback)
      rho = feedback_step(rho, chi_dot, *options.feedback, tau, hbar);

    traj.record.outcomes.push_back(chosen);
    traj.record.probabilities.push_back(probs[chosen]);
    traj.increments.push_back(w);
    traj.current.push_back(chi_dot);
    if (io_ok)
      traj.io_current.push_back(
          s_mean - std::real(io_f * w.dW) / (hbar * tau));
    traj.times.push_back(double(k) * tau);
    traj.states.push_back(rho);
  }
  return traj;
}

EvolutionTrace ensemble_average(
    const std::vector<ConditionalTrajectory>& trajectories) {
  if (trajectories.empty())
    throw std::invalid_argument("ensemble_average: no trajectories");
  const auto& first = trajectories.front();
  for (const auto& t : trajectories) {
    if (t.times.size() != first.times.size() ||
        std::abs(t.tau - first.tau) > 1e-15)
      throw std::invalid_argument("ensemble_average: time grid mismatch");
  }
  EvolutionTrace out;
  out.tau = first.tau;
  out.n = int(first.times.size()) - 1;
  out.times = first.times;
  const double w = 1.0 / double(trajectories.size());
  for (std::size_t k = 0; k < first.times.size(); ++k) {
    Matrix mean = Matrix::Zero(first.states[k].dim(), first.states[k].dim());
    for (const auto& t : trajectories) mean += w * t.states[k].mat;
    out.states.push_back(DensityMatrix{std::move(mean)});
  }
  return out;
}

}  // namespace qcollide
