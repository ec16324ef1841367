#include "qcollide/builders.hpp"

#include <cmath>

namespace qcollide::ops {

Matrix identity(Eigen::Index d) { return Matrix::Identity(d, d); }

Matrix pauli_x() {
  Matrix m(2, 2);
  m << 0, 1, 1, 0;
  return m;
}

Matrix pauli_y() {
  Matrix m(2, 2);
  m << 0, Complex(0, -1), Complex(0, 1), 0;
  return m;
}

Matrix pauli_z() {
  Matrix m(2, 2);
  m << 1, 0, 0, -1;
  return m;
}

Matrix diag(const std::vector<double>& values) {
  Matrix m = Matrix::Zero(values.size(), values.size());
  for (std::size_t i = 0; i < values.size(); ++i) m(i, i) = values[i];
  return m;
}

Matrix lowering(Eigen::Index d) {
  Matrix a = Matrix::Zero(d, d);
  for (Eigen::Index n = 1; n < d; ++n) a(n - 1, n) = std::sqrt(double(n));
  return a;
}

Matrix position(Eigen::Index d, double scale, double hbar) {
  Matrix a = lowering(d);
  return std::sqrt(hbar * scale / 2.0) * (a + a.adjoint());
}

Matrix momentum(Eigen::Index d, double scale, double hbar) {
  Matrix a = lowering(d);
  return Complex(0, 1) * std::sqrt(hbar / (2.0 * scale)) *
         (Matrix(a.adjoint()) - a);
}

Matrix number(Eigen::Index d) {
  Matrix a = lowering(d);
  return a.adjoint() * a;
}

Matrix oscillator_hamiltonian(Eigen::Index d, double omega, double hbar) {
  return hbar * omega * (number(d) + 0.5 * Matrix::Identity(d, d));
}

std::vector<double> grid_points(Eigen::Index d, double lo, double hi) {
  std::vector<double> pts(d);
  for (Eigen::Index i = 0; i < d; ++i)
    pts[i] = lo + (hi - lo) * double(i) / double(d - 1);
  return pts;
}

Matrix grid_operator(Eigen::Index d, double lo, double hi) {
  return diag(grid_points(d, lo, hi));
}

}  // namespace qcollide::ops
