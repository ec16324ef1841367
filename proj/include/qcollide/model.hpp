#ifndef QCOLLIDE_MODEL_HPP
#define QCOLLIDE_MODEL_HPP

#include <optional>

#include "qcollide/builders.hpp"
#include "qcollide/operator_core.hpp"

// Declarative description of a collisional experiment and the moment/limit
// machinery that feeds the emergent master equations.
namespace qcollide {

// Polynomial in tau, coeffs[k] * tau^k.
struct Polynomial {
  std::vector<double> coeffs;
  double operator()(double tau) const {
    double v = 0.0;
    for (std::size_t k = coeffs.size(); k-- > 0;) v = v * tau + coeffs[k];
    return v;
  }
};

enum class SwitchingProfile { Constant, DeltaLike, SymmetricBump, Custom };

// Coupling strength with mean gbar(tau) = amplitude * tau^exponent.
// exponent 0 is the weak regime (fixed gbar); exponent -1 the strong regime
// (tau * gbar -> amplitude).
struct CouplingSchedule {
  double amplitude = 1.0;
  double exponent = 0.0;
  SwitchingProfile profile = SwitchingProfile::Constant;
  std::vector<double> samples;  // custom profile shape on (0,1), mean-normalized

  double gbar(double tau) const;
  // Instantaneous strength at t in (0, tau).
  double g(double t, double tau) const;
  bool weak() const { return exponent == 0.0; }
  bool strong() const { return exponent == -1.0; }
};

enum class PrepKind { Eigenstate, MomentGaussian, PureGaussian, Explicit };

// tau-parametrized ancilla state family with analytic moment formulas.
struct PreparationFamily {
  PrepKind kind = PrepKind::Explicit;
  Eigen::Index ancilla_dim = 0;

  // Eigenstate: projector onto the m_op eigenspace of `eigenvalue`.
  Matrix m_op;
  double eigenvalue = 0.0;

  // MomentGaussian: diagonal mixture on a uniform grid over [grid_lo, grid_hi]
  // with mean mu(tau) and variance var(tau).
  double grid_lo = -1.0, grid_hi = 1.0;
  Polynomial mean_poly, var_poly;

  // PureGaussian: squeezed vacuum of a truncated oscillator with length scale
  // osc_scale; position wavefunction exp(-x^2 / 2 sigma(tau)),
  // sigma(tau) = width_amp * tau^width_exp, optionally displaced to
  // <x> = mean_x(tau), <p> = mean_p(tau).
  double width_amp = 1.0, width_exp = 0.0;
  double osc_scale = 1.0;
  double hbar = 1.0;
  Polynomial mean_x_poly{{0.0}}, mean_p_poly{{0.0}};

  Matrix explicit_state;

  static PreparationFamily eigenstate(Matrix m, double value);
  static PreparationFamily moment_gaussian(Eigen::Index dim, double lo,
                                           double hi, Polynomial mean,
                                           Polynomial var);
  static PreparationFamily pure_gaussian(Eigen::Index dim, double width_amp,
                                         double width_exp, double osc_scale = 1.0,
                                         double hbar = 1.0);
  static PreparationFamily explicit_state_of(Matrix rho);

  DensityMatrix realize(double tau) const;
  // Natural coupling operator: grid diagonal for MomentGaussian, the stored
  // operator for Eigenstate. Not defined for the other kinds.
  Matrix coupling_operator() const;
};

double moment(const DensityMatrix& rho_m, const Matrix& m_op, int k);

// One simultaneous coupling term g(t) s_op (x) m_op inside a substep.
// s_op acts on the full system block, m_op on one ancilla factor.
struct SubInteraction {
  Matrix s_op;
  Matrix m_op;
  std::size_t ancilla = 0;
  CouplingSchedule schedule;
};

// One collision's structure: p equal substeps, free Hamiltonians, couplings.
struct CycleSpec {
  TensorLayout system_layout{};
  std::vector<Eigen::Index> ancilla_dims;
  Matrix s0;
  std::vector<Matrix> m0;
  std::vector<std::vector<SubInteraction>> substeps;
  double hbar = 1.0;

  std::size_t p() const { return substeps.size(); }
  Eigen::Index system_dim() const { return system_layout.total(); }
  // Full joint layout: system factors first, then ancillae in order.
  TensorLayout joint_layout() const;
  void validate() const;
};

// Single tau->0 extrapolation result.
struct Extrapolated {
  double value = 0.0;
  double residual = 0.0;
  bool diverged = false;
  bool established = true;
};

// Polynomial-order-2 Richardson extrapolation of samples(tau) to tau -> 0.
// taus must be decreasing. Sets `diverged` when the samples grow without
// bound and `established=false` when residuals fail to shrink.
Extrapolated richardson(const std::vector<double>& taus,
                        const std::vector<double>& values, int order = 2);

// Limits Xi_i, Gamma_ij, Mtilde_ij, Mtilde_i0 of the coupling/moment products.
// Indices run over the flattened interaction terms of the cycle (substep
// order, then declaration order within a substep); substep_of records each
// term's substep.
struct LimitSet {
  std::vector<Extrapolated> xi;
  std::vector<std::vector<Extrapolated>> gamma;
  std::vector<std::vector<Extrapolated>> mtilde;
  std::vector<Extrapolated> mtilde0;
  std::vector<std::size_t> substep_of;

  bool any_diverged() const;
  bool all_established() const;
};

// Finite-tau values of the same quantities, one matrix/vector per sweep point.
struct LimitSweepSample {
  double tau;
  Eigen::VectorXd xi;
  Eigen::MatrixXd gamma;
  Eigen::MatrixXd mtilde;
  Eigen::VectorXd mtilde0;
  std::vector<std::size_t> substep_of;
};

// Evaluates Xi_i = g_i <M_i>, Gamma_ij = (tau'/4) g_i g_j <{M_i,M_j}>,
// Mtilde_ij = (tau'/4 hbar) g_i g_j <i[M_i,M_j]>, Mtilde_i0 with g_0 = 1,
// at one tau, over the flattened interaction terms.
LimitSweepSample limit_sample(const CycleSpec& cycle,
                              const std::vector<PreparationFamily>& preps,
                              double tau);

LimitSet limit_set(const CycleSpec& cycle,
                   const std::vector<PreparationFamily>& preps,
                   const std::vector<double>& tau_sweep);

}  // namespace qcollide

#endif
