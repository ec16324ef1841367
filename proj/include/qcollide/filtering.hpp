#ifndef QCOLLIDE_FILTERING_HPP
#define QCOLLIDE_FILTERING_HPP

#include <cstdint>
#include <optional>

#include "qcollide/collision.hpp"

// Conditional dynamics: per-collision projective readout of the ancilla in a
// pointer basis, noise increments, measurement current, feedback, and
// ensemble averaging back to the unconditional channel.
namespace qcollide {

// Measurement basis on the ancilla: columns of `states` are the pointer
// vectors. `m_op` (when given) is the measured ancilla observable used by the
// input-output current relation.
struct PointerBasis {
  std::string name;
  Matrix states;
  std::optional<Matrix> m_op;
};

// Default unravelling: discrete-Fourier conjugate of the eigenbasis of m_op
// (position readout when the coupling operator is momentum-like).
PointerBasis conjugate_basis(const Matrix& m_op);

struct MeasurementRecord {
  std::vector<std::size_t> outcomes;
  std::vector<double> probabilities;
  std::string basis;
};

// Complex noise increment of one collision,
//   re = tau*g <-(i/2)[M, rho_m/<rho_m>_n]>_n,
//   im = tau*g <(1/2){M, rho_m/<rho_m>_n}>_n,  dW = re + i*im.
struct NoiseIncrement {
  Complex dW;
  double re = 0.0;
  double im = 0.0;
};

struct ConditionalTrajectory {
  MeasurementRecord record;
  std::vector<DensityMatrix> states;
  std::vector<NoiseIncrement> increments;
  std::vector<double> current;     // feedback current chi-dot per collision
  std::vector<double> io_current;  // input-output form, when available
  bool io_available = false;
  std::uint64_t seed = 0;
  std::vector<double> times;
  double tau = 0.0;
};

// One conditioned collision: evolve rho_c (x) rho_m through the cycle, then
// project the ancilla onto pointer state x. Returns the unnormalized system
// block and its trace (the outcome probability). Requires a single ancilla.
std::pair<Matrix, double> conditional_collide(
    const DensityMatrix& rho_c, const CycleSpec& cycle,
    const std::vector<PreparationFamily>& preps, double tau,
    const PointerBasis& basis, std::size_t outcome);

struct FeedbackSpec {
  Matrix s2;
  double g2 = 0.0;
};

// rho <- exp(-i g2 chi_dot S2 tau / hbar) rho (dagger).
DensityMatrix feedback_step(const DensityMatrix& rho_c, double chi_dot,
                            const FeedbackSpec& feedback, double tau,
                            double hbar);

struct TrajectoryOptions {
  std::optional<PointerBasis> basis;     // default: conjugate of the coupling M
  std::optional<FeedbackSpec> feedback;  // applied after every collision
};

// n conditioned collisions at tau = T/n, outcomes drawn from the exact
// distribution; bit-reproducible from the seed. Requires a single-substep,
// single-ancilla cycle.
ConditionalTrajectory sample_trajectory(const DensityMatrix& rho0,
                                        const CycleSpec& cycle,
                                        const std::vector<PreparationFamily>& preps,
                                        double T, int n, std::uint64_t seed,
                                        const TrajectoryOptions& options = {});

// Pointwise mean state over trajectories sharing one time grid.
EvolutionTrace ensemble_average(
    const std::vector<ConditionalTrajectory>& trajectories);

}  // namespace qcollide

#endif
