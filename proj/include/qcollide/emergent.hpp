#ifndef QCOLLIDE_EMERGENT_HPP
#define QCOLLIDE_EMERGENT_HPP

#include "qcollide/collision.hpp"
#include "qcollide/model.hpp"

// Analytic side: regime classification, master-equation construction, a
// deterministic integrator, and the dephasing analytics of the strong
// measurement limit.
namespace qcollide {

enum class Regime {
  ExactUnitary,
  EffectiveUnitary,
  FiniteDecoherence,
  Zeno,
  Undetermined
};

std::string to_string(Regime r);

struct ConditionCheck {
  std::string name;
  bool pass = false;
  double magnitude = 0.0;
};

struct RegimeReport {
  Regime regime = Regime::Undetermined;
  LimitSet limits;
  std::vector<ConditionCheck> certificate;
  int k_max = 0;
};

struct UnitarityWitness {
  bool pass = false;
  std::string violated;   // empty when pass
  double magnitude = 0.0; // size of the violated condition
};

// Conditions for exactly unitary system evolution: (i) the ancilla state is
// supported on a single eigenvalue subspace of m_op, (ii) that subspace is
// invariant under m0.
UnitarityWitness check_exact_unitarity(const PreparationFamily& prep,
                                       const Matrix& m_op, const Matrix& m0,
                                       double tau = 1.0);

RegimeReport classify_regime(const CycleSpec& cycle,
                             const std::vector<PreparationFamily>& preps,
                             const std::vector<double>& tau_sweep,
                             int k_max = 6);

// Effective Hamiltonian plus double-commutator dissipators and feedback
// (sandwich) terms:
//   rho_dot = -(i/hbar)[h_eff, rho]
//             - sum (rate/hbar^2) [A,[B,rho]]
//             + sum (i*rate/hbar) [A, B rho + rho B]
struct MasterEquationSpec {
  struct Dissipator {
    Matrix a, b;
    double rate = 0.0;
  };
  struct Feedback {
    Matrix a, b;
    double rate = 0.0;
  };
  Matrix h_eff;
  std::vector<Dissipator> dissipators;
  std::vector<Feedback> feedback_terms;
  double hbar = 1.0;

  Matrix apply(const Matrix& rho) const;
  // Coarse bound on the generator norm, for the integrator step control.
  double generator_norm_bound() const;
};

// Emits the continuum master equation from the extrapolated limits. Supports
// cycles whose couplings all converge (no divergence flags).
MasterEquationSpec build_master_equation(const CycleSpec& cycle,
                                         const LimitSet& limits);

// Same construction from finite-tau values, used by cross-checks.
MasterEquationSpec build_master_equation(const CycleSpec& cycle,
                                         const LimitSweepSample& sample);

// Classical RK4 with per-step Hermitian symmetrization. dt must satisfy
// dt <= 0.1 / generator_norm_bound().
EvolutionTrace integrate_master(const MasterEquationSpec& spec,
                                const DensityMatrix& rho0, double T, double dt);

// Tr(exp(-i tau_g * ds * M / hbar) rho_m): the per-collision off-diagonal
// multiplier of the strong measurement regime.
Complex zeno_factor(const PreparationFamily& prep, const Matrix& m_op,
                    double delta_s, double tau_g, double hbar = 1.0,
                    double tau = 1.0);

// Gaussian closed-form multiplier exp[-(t/tau)(1 - exp(-sigma^2 ds^2/2hbar^2))]
// with sigma taken from the realized preparation moments.
double zeno_decay_curve(const PreparationFamily& prep, const Matrix& m_op,
                        double delta_s, double t, double tau,
                        double hbar = 1.0);

}  // namespace qcollide

#endif
