#ifndef QCOLLIDE_BUILDERS_HPP
#define QCOLLIDE_BUILDERS_HPP

#include "qcollide/operator_core.hpp"

// Standard operator constructors shared by presets, preparations and the
// scenario config parser.
namespace qcollide::ops {

Matrix identity(Eigen::Index d);
Matrix pauli_x();
Matrix pauli_y();
Matrix pauli_z();
Matrix diag(const std::vector<double>& values);

// Lowering operator of a d-level truncated oscillator.
Matrix lowering(Eigen::Index d);

// Quadratures with vacuum variance <x^2> = hbar*scale/2, <p^2> = hbar/(2*scale).
Matrix position(Eigen::Index d, double scale = 1.0, double hbar = 1.0);
Matrix momentum(Eigen::Index d, double scale = 1.0, double hbar = 1.0);
Matrix number(Eigen::Index d);

// hbar*omega*(n + 1/2)
Matrix oscillator_hamiltonian(Eigen::Index d, double omega = 1.0,
                              double hbar = 1.0);

// Uniformly spaced grid diag(x_0..x_{d-1}) over [lo, hi].
Matrix grid_operator(Eigen::Index d, double lo, double hi);
std::vector<double> grid_points(Eigen::Index d, double lo, double hi);

}  // namespace qcollide::ops

#endif
