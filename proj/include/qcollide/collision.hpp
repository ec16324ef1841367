#ifndef QCOLLIDE_COLLISION_HPP
#define QCOLLIDE_COLLISION_HPP

#include <map>
#include <string>

#include "qcollide/model.hpp"

// Exact simulation of the repeated-interaction dynamics.
namespace qcollide {

struct EvolutionTrace {
  std::vector<double> times;
  std::vector<DensityMatrix> states;  // system reduced states
  std::map<std::string, std::vector<double>> observables;
  double tau = 0.0;
  int n = 0;
};

// The joint-space substep unitaries of one collision at duration tau.
// U_i = exp(-i (tau/p) (H0 + sum_k gbar_k S_k (x) M_k) / hbar). Factor order
// is system block first, then ancillae in declaration order.
std::vector<Matrix> substep_unitaries(const CycleSpec& cycle, double tau);

// One collision: fresh ancillae realized from the preparations at this tau,
// all substeps applied in order, ancillae traced out.
DensityMatrix collide_once(const DensityMatrix& rho_s, const CycleSpec& cycle,
                           const std::vector<PreparationFamily>& preps,
                           double tau);

// n iterated collisions at tau = T/n; states recorded after every collision
// (index 0 holds the initial state).
EvolutionTrace evolve(const DensityMatrix& rho0, const CycleSpec& cycle,
                      const std::vector<PreparationFamily>& preps, double T,
                      int n);

// Piecewise-constant approximation of the time-ordered propagator of one
// substep, K slices with g(t) sampled at slice midpoints.
Matrix stepped_propagator(const CycleSpec& cycle, std::size_t substep,
                          double tau_sub, int K);

// Mean-coupling propagator of the same substep (one exponential).
Matrix mean_propagator(const CycleSpec& cycle, std::size_t substep,
                       double tau_sub);

struct GeneratorEstimate {
  Matrix rho_dot;
  double residual = 0.0;
  bool diverged = false;
};

// Richardson extrapolation of (V(tau)[rho] - rho)/tau to tau -> 0.
GeneratorEstimate generator_estimate(const CycleSpec& cycle,
                                     const std::vector<PreparationFamily>& preps,
                                     const DensityMatrix& rho,
                                     const std::vector<double>& tau_list);

}  // namespace qcollide

#endif
