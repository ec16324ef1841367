#ifndef QCOLLIDE_TOLERANCES_HPP
#define QCOLLIDE_TOLERANCES_HPP

// Central tolerance table. Every structural check and test tolerance in the
// library cites these constants rather than inlining its own magic numbers.
namespace qcollide::tol {

// Structural checks: unitarity defect, trace preservation, positivity floor.
inline constexpr double structural = 1e-10;

// Entrywise comparisons, scaled by the norm of the operands.
inline constexpr double comparison = 1e-12;

// Trace drift allowed per collision step (accumulates linearly over a run).
inline constexpr double trace_drift_per_step = 1e-12;

// Exact-unitarity predicate (eigenvalue spread, subspace invariance).
inline constexpr double unitarity_predicate = 1e-9;

// Grid-state moment accuracy (discretized Gaussian vs analytic moments).
inline constexpr double grid_moments = 1e-6;

// Population allowed in the top two levels of a truncated oscillator.
inline constexpr double oscillator_leakage = 1e-6;

// Relative accuracy of built-in switching profiles reproducing their mean.
inline constexpr double schedule_mean = 1e-8;

}  // namespace qcollide::tol

#endif
