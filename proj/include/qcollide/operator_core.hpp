#ifndef QCOLLIDE_OPERATOR_CORE_HPP
#define QCOLLIDE_OPERATOR_CORE_HPP

#include <complex>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "qcollide/tolerances.hpp"

// Dense complex linear-algebra substrate: tensor products, partial traces,
// matrix exponentials and the metrics used throughout the library.
namespace qcollide {

using Complex = std::complex<double>;
using Matrix = Eigen::MatrixXcd;
using Vector = Eigen::VectorXcd;

// Factorization of a joint Hilbert space into ordered tensor factors.
struct TensorLayout {
  std::vector<Eigen::Index> dims;

  TensorLayout() = default;
  TensorLayout(std::initializer_list<Eigen::Index> d) : dims(d) {}
  explicit TensorLayout(std::vector<Eigen::Index> d) : dims(std::move(d)) {}

  Eigen::Index total() const {
    Eigen::Index n = 1;
    for (Eigen::Index d : dims) n *= d;
    return n;
  }
  std::size_t factors() const { return dims.size(); }
};

// Density matrix with its acceptance tolerance. Validation is explicit so the
// hot path can defer the O(n^3) positivity check to the invariant tests.
struct DensityMatrix {
  Matrix mat;
  double tolerance = tol::structural;

  Eigen::Index dim() const { return mat.rows(); }
};

inline bool is_hermitian(const Matrix& a, double rel_tol = tol::comparison) {
  double scale = std::max(1.0, a.norm());
  return (a - a.adjoint()).cwiseAbs().maxCoeff() <= rel_tol * scale;
}

inline bool is_unitary(const Matrix& a, double abs_tol = tol::structural) {
  Matrix d = a * a.adjoint() - Matrix::Identity(a.rows(), a.cols());
  return d.cwiseAbs().maxCoeff() <= abs_tol;
}

// Throws unless rho has unit trace, is Hermitian and positive semidefinite
// within dm.tolerance.
void validate_density(const DensityMatrix& dm);

inline DensityMatrix make_density(Matrix m, double tolerance = tol::structural) {
  DensityMatrix dm{std::move(m), tolerance};
  validate_density(dm);
  return dm;
}

// Kronecker product, (a kron b)[(i,k),(j,l)] = a(i,j) b(k,l).
Matrix kron(const Matrix& a, const Matrix& b);
Matrix kron(const std::vector<Matrix>& factors);

// Embeds op acting on one factor of the layout into the full space.
Matrix embed(const Matrix& op, const TensorLayout& layout, std::size_t factor);

// Traces out every factor not listed in keep; kept factors stay in layout
// order. Total trace is preserved.
Matrix partial_trace(const Matrix& a, const TensorLayout& layout,
                     const std::vector<std::size_t>& keep);

// Matrix exponential. Anti-Hermitian (and Hermitian) inputs go through a
// self-adjoint eigendecomposition, anything else through Pade
// scaling-and-squaring.
Matrix expm(const Matrix& a);

// 1/2 * trace norm of rho - sigma.
double trace_distance(const DensityMatrix& rho, const DensityMatrix& sigma);
double trace_distance(const Matrix& rho, const Matrix& sigma);

double purity(const DensityMatrix& rho);
inline double purity(const Matrix& rho) { return (rho * rho).trace().real(); }

// Minimum eigenvalue of a Hermitian matrix.
double min_eigenvalue(const Matrix& herm);

// Partial transpose over one factor of a bipartite (or general) layout.
Matrix partial_transpose(const Matrix& a, const TensorLayout& layout,
                         std::size_t factor);

// Entanglement negativity across the cut singling out `factor`.
double negativity(const Matrix& rho, const TensorLayout& layout,
                  std::size_t factor);

}  // namespace qcollide

#endif
