#include "qcollide/operator_core.hpp"

#include <cmath>

#include <unsupported/Eigen/MatrixFunctions>

namespace qcollide {

namespace {

// Decomposes a flat index into per-factor indices for the given layout.
void unravel(Eigen::Index idx, const TensorLayout& layout,
             std::vector<Eigen::Index>& out) {
  out.resize(layout.dims.size());
  for (std::size_t f = layout.dims.size(); f-- > 0;) {
    out[f] = idx % layout.dims[f];
    idx /= layout.dims[f];
  }
}

Eigen::Index ravel(const std::vector<Eigen::Index>& idx,
                   const TensorLayout& layout) {
  Eigen::Index flat = 0;
  for (std::size_t f = 0; f < layout.dims.size(); ++f)
    flat = flat * layout.dims[f] + idx[f];
  return flat;
}

}  // namespace

void validate_density(const DensityMatrix& dm) {
  const Matrix& rho = dm.mat;
  if (rho.rows() != rho.cols())
    throw std::invalid_argument("density matrix must be square");
  if (std::abs(rho.trace() - Complex(1.0)) > dm.tolerance)
    throw std::invalid_argument("density matrix trace deviates from 1 by " +
                                std::to_string(std::abs(rho.trace() - Complex(1.0))));
  if (!is_hermitian(rho))
    throw std::invalid_argument("density matrix is not Hermitian");
  double lambda_min = min_eigenvalue(rho);
  if (lambda_min < -dm.tolerance)
    throw std::invalid_argument("density matrix has negative eigenvalue " +
                                std::to_string(lambda_min));
}

Matrix kron(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

Matrix kron(const std::vector<Matrix>& factors) {
  if (factors.empty()) throw std::invalid_argument("kron of empty factor list");
  Matrix out = factors.front();
  for (std::size_t k = 1; k < factors.size(); ++k) out = kron(out, factors[k]);
  return out;
}

Matrix embed(const Matrix& op, const TensorLayout& layout, std::size_t factor) {
  if (factor >= layout.factors())
    throw std::invalid_argument("embed: factor index out of range");
  if (op.rows() != layout.dims[factor])
    throw std::invalid_argument("embed: operator dim does not match factor");
  std::vector<Matrix> factors;
  factors.reserve(layout.factors());
  for (std::size_t f = 0; f < layout.factors(); ++f)
    factors.push_back(f == factor
                          ? op
                          : Matrix(Matrix::Identity(layout.dims[f], layout.dims[f])));
  return kron(factors);
}

Matrix partial_trace(const Matrix& a, const TensorLayout& layout,
                     const std::vector<std::size_t>& keep) {
  if (a.rows() != a.cols() || a.rows() != layout.total())
    throw std::invalid_argument("partial_trace: layout inconsistent with operator");
  for (std::size_t f : keep)
    if (f >= layout.factors())
      throw std::invalid_argument("partial_trace: keep index out of range");

  std::vector<bool> kept(layout.factors(), false);
  for (std::size_t f : keep) kept[f] = true;

  TensorLayout keep_layout, trace_layout;
  for (std::size_t f = 0; f < layout.factors(); ++f)
    (kept[f] ? keep_layout : trace_layout).dims.push_back(layout.dims[f]);

  const Eigen::Index nk = keep_layout.total();
  const Eigen::Index nt = trace_layout.total();
  Matrix out = Matrix::Zero(nk, nk);

  std::vector<Eigen::Index> ki, kj, ti, full_i(layout.factors()),
      full_j(layout.factors());
  for (Eigen::Index i = 0; i < nk; ++i) {
    unravel(i, keep_layout, ki);
    for (Eigen::Index j = 0; j < nk; ++j) {
      unravel(j, keep_layout, kj);
      Complex sum = 0.0;
      for (Eigen::Index t = 0; t < nt; ++t) {
        unravel(t, trace_layout, ti);
        std::size_t pk = 0, pt = 0;
        for (std::size_t f = 0; f < layout.factors(); ++f) {
          if (kept[f]) {
            full_i[f] = ki[pk];
            full_j[f] = kj[pk];
            ++pk;
          } else {
            full_i[f] = ti[pt];
            full_j[f] = ti[pt];
            ++pt;
          }
        }
        sum += a(ravel(full_i, layout), ravel(full_j, layout));
      }
      out(i, j) = sum;
    }
  }
  return out;
}

Matrix expm(const Matrix& a) {
  if (!a.allFinite()) throw std::invalid_argument("expm: non-finite entries");
  const double scale = std::max(1.0, a.norm());
  const Matrix anti = a + a.adjoint();  // zero for anti-Hermitian input
  if (anti.cwiseAbs().maxCoeff() <= tol::comparison * scale) {
    // a = -i h with h Hermitian; exact via eigendecomposition of h.
    Matrix h = Complex(0, 1) * a;
    Eigen::SelfAdjointEigenSolver<Matrix> es(h);
    Vector phases = (Complex(0, -1) * es.eigenvalues().cast<Complex>()).array().exp();
    return es.eigenvectors() * phases.asDiagonal() * es.eigenvectors().adjoint();
  }
  if (is_hermitian(a)) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(a);
    Vector vals = es.eigenvalues().cast<Complex>().array().exp();
    return es.eigenvectors() * vals.asDiagonal() * es.eigenvectors().adjoint();
  }
  return a.exp();
}

double min_eigenvalue(const Matrix& herm) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(herm, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

double trace_distance(const Matrix& rho, const Matrix& sigma) {
  if (rho.rows() != sigma.rows())
    throw std::invalid_argument("trace_distance: dimension mismatch");
  Matrix diff = rho - sigma;
  diff = 0.5 * (diff + diff.adjoint());
  Eigen::SelfAdjointEigenSolver<Matrix> es(diff, Eigen::EigenvaluesOnly);
  return 0.5 * es.eigenvalues().cwiseAbs().sum();
}

double trace_distance(const DensityMatrix& rho, const DensityMatrix& sigma) {
  return trace_distance(rho.mat, sigma.mat);
}

double purity(const DensityMatrix& rho) { return purity(rho.mat); }

Matrix partial_transpose(const Matrix& a, const TensorLayout& layout,
                         std::size_t factor) {
  if (a.rows() != layout.total())
    throw std::invalid_argument("partial_transpose: layout mismatch");
  Matrix out(a.rows(), a.cols());
  std::vector<Eigen::Index> ii, jj;
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    unravel(i, layout, ii);
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      unravel(j, layout, jj);
      std::vector<Eigen::Index> ti = ii, tj = jj;
      std::swap(ti[factor], tj[factor]);
      out(ravel(ti, layout), ravel(tj, layout)) = a(i, j);
    }
  }
  return out;
}

double negativity(const Matrix& rho, const TensorLayout& layout,
                  std::size_t factor) {
  Matrix pt = partial_transpose(rho, layout, factor);
  pt = 0.5 * (pt + pt.adjoint());
  Eigen::SelfAdjointEigenSolver<Matrix> es(pt, Eigen::EigenvaluesOnly);
  double neg = 0.0;
  for (Eigen::Index k = 0; k < es.eigenvalues().size(); ++k)
    if (es.eigenvalues()[k] < 0) neg -= es.eigenvalues()[k];
  return neg;
}

}  // namespace qcollide
