#include "qcollide/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace qcollide {

namespace {

double profile_shape(const CouplingSchedule& s, double u) {
  switch (s.profile) {
    case SwitchingProfile::Constant:
      return 1.0;
    case SwitchingProfile::DeltaLike:
      return (u >= 0.45 && u < 0.55) ? 10.0 : 0.0;
    case SwitchingProfile::SymmetricBump: {
      double sn = std::sin(M_PI * u);
      return 2.0 * sn * sn;
    }
    case SwitchingProfile::Custom: {
      if (s.samples.empty())
        throw std::invalid_argument("custom schedule without samples");
      double mean =
          std::accumulate(s.samples.begin(), s.samples.end(), 0.0) /
          double(s.samples.size());
      // piecewise-constant shape over (0,1), mean-normalized
      auto n = s.samples.size();
      auto idx = std::min<std::size_t>(n - 1, std::size_t(u * double(n)));
      return s.samples[idx] / mean;
    }
  }
  return 1.0;
}

}  // namespace

double CouplingSchedule::gbar(double tau) const {
  return amplitude * std::pow(tau, exponent);
}

double CouplingSchedule::g(double t, double tau) const {
  if (t < 0.0 || t > tau)
    throw std::invalid_argument("schedule evaluated outside (0, tau)");
  return gbar(tau) * profile_shape(*this, t / tau);
}

PreparationFamily PreparationFamily::eigenstate(Matrix m, double value) {
  PreparationFamily f;
  f.kind = PrepKind::Eigenstate;
  f.ancilla_dim = m.rows();
  f.m_op = std::move(m);
  f.eigenvalue = value;
  return f;
}

PreparationFamily PreparationFamily::moment_gaussian(Eigen::Index dim,
                                                     double lo, double hi,
                                                     Polynomial mean,
                                                     Polynomial var) {
  PreparationFamily f;
  f.kind = PrepKind::MomentGaussian;
  f.ancilla_dim = dim;
  f.grid_lo = lo;
  f.grid_hi = hi;
  f.mean_poly = std::move(mean);
  f.var_poly = std::move(var);
  return f;
}

PreparationFamily PreparationFamily::pure_gaussian(Eigen::Index dim,
                                                   double width_amp,
                                                   double width_exp,
                                                   double osc_scale,
                                                   double hbar) {
  PreparationFamily f;
  f.kind = PrepKind::PureGaussian;
  f.ancilla_dim = dim;
  f.width_amp = width_amp;
  f.width_exp = width_exp;
  f.osc_scale = osc_scale;
  f.hbar = hbar;
  return f;
}

PreparationFamily PreparationFamily::explicit_state_of(Matrix rho) {
  PreparationFamily f;
  f.kind = PrepKind::Explicit;
  f.ancilla_dim = rho.rows();
  f.explicit_state = std::move(rho);
  return f;
}

Matrix PreparationFamily::coupling_operator() const {
  switch (kind) {
    case PrepKind::Eigenstate:
      return m_op;
    case PrepKind::MomentGaussian:
      return ops::grid_operator(ancilla_dim, grid_lo, grid_hi);
    default:
      throw std::logic_error(
          "coupling_operator: not defined for this preparation kind");
  }
}

DensityMatrix PreparationFamily::realize(double tau) const {
  if (tau <= 0.0) throw std::invalid_argument("realize: tau must be positive");
  switch (kind) {
    case PrepKind::Eigenstate: {
      Eigen::SelfAdjointEigenSolver<Matrix> es(m_op);
      double scale = std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff());
      Matrix proj = Matrix::Zero(ancilla_dim, ancilla_dim);
      int rank = 0;
      for (Eigen::Index k = 0; k < ancilla_dim; ++k) {
        if (std::abs(es.eigenvalues()[k] - eigenvalue) <=
            tol::unitarity_predicate * scale) {
          proj += es.eigenvectors().col(k) * es.eigenvectors().col(k).adjoint();
          ++rank;
        }
      }
      if (rank == 0)
        throw std::invalid_argument("eigenstate preparation: no eigenvalue " +
                                    std::to_string(eigenvalue));
      return make_density(proj / double(rank));
    }
    case PrepKind::MomentGaussian: {
      double mu = mean_poly(tau);
      double var = var_poly(tau);
      if (var <= 0.0)
        throw std::invalid_argument("moment_gaussian: nonpositive variance");
      double sigma = std::sqrt(var);
      double spacing = (grid_hi - grid_lo) / double(ancilla_dim - 1);
      if (sigma < spacing)
        throw std::invalid_argument(
            "moment_gaussian: width below grid resolution");
      if (sigma > (grid_hi - grid_lo) / 6.0)
        throw std::invalid_argument(
            "moment_gaussian: width exceeds grid span / 6");
      auto pts = ops::grid_points(ancilla_dim, grid_lo, grid_hi);
      Matrix rho = Matrix::Zero(ancilla_dim, ancilla_dim);
      double norm = 0.0;
      for (Eigen::Index i = 0; i < ancilla_dim; ++i) {
        double w = std::exp(-(pts[i] - mu) * (pts[i] - mu) / (2.0 * var));
        rho(i, i) = w;
        norm += w;
      }
      rho /= norm;
      return make_density(std::move(rho));
    }
    case PrepKind::PureGaussian: {
      double sigma = width_amp * std::pow(tau, width_exp);
      if (sigma <= 0.0)
        throw std::invalid_argument("pure_gaussian: nonpositive width");
      // squeezed vacuum with <x^2> = sigma/2 for x built at scale osc_scale
      double r = -0.5 * std::log(sigma / (hbar * osc_scale));
      double t = std::tanh(r);
      Vector psi = Vector::Zero(ancilla_dim);
      double c = 1.0 / std::sqrt(std::cosh(r));
      psi[0] = c;
      for (Eigen::Index n = 2; n < ancilla_dim; n += 2) {
        c *= -t * std::sqrt(double(n - 1) / double(n));
        psi[n] = c;
      }
      double x0 = mean_x_poly(tau);
      double p0 = mean_p_poly(tau);
      if (x0 != 0.0 || p0 != 0.0) {
        Complex alpha(x0 / std::sqrt(2.0 * hbar * osc_scale),
                      p0 * std::sqrt(osc_scale / (2.0 * hbar)));
        Matrix a = ops::lowering(ancilla_dim);
        psi = (expm(alpha * a.adjoint() - std::conj(alpha) * a) * psi).eval();
      }
      double top = std::norm(psi[ancilla_dim - 1]);
      if (ancilla_dim >= 2) top += std::norm(psi[ancilla_dim - 2]);
      if (top > tol::oscillator_leakage)
        throw std::invalid_argument(
            "pure_gaussian: truncation leakage above guard, population " +
            std::to_string(top));
      psi.normalize();
      return make_density(psi * psi.adjoint());
    }
    case PrepKind::Explicit:
      return make_density(explicit_state);
  }
  throw std::logic_error("unreachable");
}

double moment(const DensityMatrix& rho_m, const Matrix& m_op, int k) {
  if (rho_m.dim() != m_op.rows())
    throw std::invalid_argument("moment: dimension mismatch");
  Matrix power = Matrix::Identity(m_op.rows(), m_op.cols());
  for (int i = 0; i < k; ++i) power = power * m_op;
  return (power * rho_m.mat).trace().real();
}

TensorLayout CycleSpec::joint_layout() const {
  TensorLayout l;
  l.dims.push_back(system_dim());
  for (Eigen::Index d : ancilla_dims) l.dims.push_back(d);
  return l;
}

void CycleSpec::validate() const {
  if (substeps.empty()) throw std::invalid_argument("cycle has no substeps");
  if (s0.rows() != system_dim())
    throw std::invalid_argument("cycle: s0 dimension mismatch");
  if (m0.size() != ancilla_dims.size())
    throw std::invalid_argument("cycle: one m0 required per ancilla");
  for (std::size_t k = 0; k < ancilla_dims.size(); ++k)
    if (m0[k].rows() != ancilla_dims[k])
      throw std::invalid_argument("cycle: m0 dimension mismatch");
  for (const auto& step : substeps)
    for (const auto& si : step) {
      if (si.ancilla >= ancilla_dims.size())
        throw std::invalid_argument("cycle: interaction references bad ancilla");
      if (si.s_op.rows() != system_dim())
        throw std::invalid_argument("cycle: s_op dimension mismatch");
      if (si.m_op.rows() != ancilla_dims[si.ancilla])
        throw std::invalid_argument("cycle: m_op dimension mismatch");
      if (!is_hermitian(si.s_op) || !is_hermitian(si.m_op))
        throw std::invalid_argument("cycle: coupling operators must be Hermitian");
    }
}

namespace {

// Neville polynomial interpolation evaluated at tau = 0.
double neville_at_zero(const double* taus, const double* vals, int n) {
  std::vector<double> p(vals, vals + n);
  for (int level = 1; level < n; ++level)
    for (int i = 0; i < n - level; ++i)
      p[i] = (taus[i + level] * p[i] - taus[i] * p[i + 1]) /
             (taus[i + level] - taus[i]);
  return p[0];
}

}  // namespace

Extrapolated richardson(const std::vector<double>& taus,
                        const std::vector<double>& values, int order) {
  if (taus.size() != values.size() || taus.size() < 3)
    throw std::invalid_argument("richardson: need >= 3 sweep points");
  for (std::size_t i = 1; i < taus.size(); ++i)
    if (taus[i] >= taus[i - 1])
      throw std::invalid_argument("richardson: taus must decrease");

  Extrapolated out;

  // Divergence: magnitude keeps growing as tau shrinks.
  bool growing = true;
  for (std::size_t i = 1; i < values.size(); ++i)
    if (std::abs(values[i]) <= std::abs(values[i - 1])) growing = false;
  if (growing && std::abs(values.back()) > 5.0 * std::abs(values.front()) &&
      std::abs(values.back()) > 1e-6) {
    out.diverged = true;
    out.established = false;
    out.value = values.back();
    out.residual = std::abs(values.back() - values[values.size() - 2]);
    return out;
  }

  const int window = order + 1;
  const int n = int(taus.size());
  std::vector<double> extrap;
  for (int j = 0; j + window <= n; ++j)
    extrap.push_back(neville_at_zero(&taus[j], &values[j], window));

  out.value = extrap.back();
  if (extrap.size() == 1) {
    out.residual = std::abs(extrap[0] - values.back());
    return out;
  }
  std::vector<double> res;
  for (std::size_t j = 1; j < extrap.size(); ++j)
    res.push_back(std::abs(extrap[j] - extrap[j - 1]));
  out.residual = res.back();
  double scale = std::max(1.0, std::abs(out.value));
  for (std::size_t j = 1; j < res.size(); ++j)
    if (res[j] > 2.0 * res[j - 1] && res[j] > 1e-9 * scale)
      out.established = false;
  return out;
}

LimitSweepSample limit_sample(const CycleSpec& cycle,
                              const std::vector<PreparationFamily>& preps,
                              double tau) {
  cycle.validate();
  if (preps.size() != cycle.ancilla_dims.size())
    throw std::invalid_argument("limit_sample: one preparation per ancilla");
  const std::size_t p = cycle.p();
  const double tau_sub = tau / double(p);
  const double hbar = cycle.hbar;

  struct Term {
    double g;
    const Matrix* m;
    std::size_t ancilla;
    std::size_t substep;
  };
  std::vector<Term> terms;
  for (std::size_t step = 0; step < p; ++step)
    for (const auto& si : cycle.substeps[step])
      terms.push_back(
          {si.schedule.gbar(tau_sub), &si.m_op, si.ancilla, step});

  std::vector<DensityMatrix> states;
  for (const auto& prep : preps) states.push_back(prep.realize(tau));

  auto mean_of = [&](const Matrix& op, std::size_t anc) {
    return (op * states[anc].mat).trace().real();
  };

  const std::size_t nterms = terms.size();
  LimitSweepSample s;
  s.tau = tau;
  s.xi.resize(nterms);
  s.mtilde0.resize(nterms);
  s.gamma.resize(nterms, nterms);
  s.mtilde.resize(nterms, nterms);
  for (const auto& t : terms) s.substep_of.push_back(t.substep);
  for (std::size_t i = 0; i < nterms; ++i) {
    s.xi[i] = terms[i].g * mean_of(*terms[i].m, terms[i].ancilla);
    Matrix comm0 = Complex(0, 1) * (*terms[i].m * cycle.m0[terms[i].ancilla] -
                                    cycle.m0[terms[i].ancilla] * *terms[i].m);
    s.mtilde0[i] =
        tau_sub / (4.0 * hbar) * terms[i].g * mean_of(comm0, terms[i].ancilla);
    for (std::size_t j = 0; j < nterms; ++j) {
      double anti, comm;
      if (terms[i].ancilla == terms[j].ancilla) {
        Matrix prod_ij = *terms[i].m * *terms[j].m;
        Matrix prod_ji = *terms[j].m * *terms[i].m;
        anti = ((prod_ij + prod_ji) * states[terms[i].ancilla].mat)
                   .trace()
                   .real();
        comm = (Complex(0, 1) * (prod_ij - prod_ji) *
                states[terms[i].ancilla].mat)
                   .trace()
                   .real();
      } else {
        anti = 2.0 * mean_of(*terms[i].m, terms[i].ancilla) *
               mean_of(*terms[j].m, terms[j].ancilla);
        comm = 0.0;
      }
      double gg = terms[i].g * terms[j].g;
      s.gamma(i, j) = 0.25 * tau_sub * gg * anti;
      s.mtilde(i, j) = tau_sub / (4.0 * hbar) * gg * comm;
    }
  }
  return s;
}

bool LimitSet::any_diverged() const {
  auto d = [](const Extrapolated& e) { return e.diverged; };
  for (const auto& e : xi)
    if (d(e)) return true;
  for (const auto& e : mtilde0)
    if (d(e)) return true;
  for (const auto& row : gamma)
    for (const auto& e : row)
      if (d(e)) return true;
  for (const auto& row : mtilde)
    for (const auto& e : row)
      if (d(e)) return true;
  return false;
}

bool LimitSet::all_established() const {
  auto ok = [](const Extrapolated& e) { return e.established; };
  for (const auto& e : xi)
    if (!ok(e)) return false;
  for (const auto& e : mtilde0)
    if (!ok(e)) return false;
  for (const auto& row : gamma)
    for (const auto& e : row)
      if (!ok(e)) return false;
  for (const auto& row : mtilde)
    for (const auto& e : row)
      if (!ok(e)) return false;
  return true;
}

LimitSet limit_set(const CycleSpec& cycle,
                   const std::vector<PreparationFamily>& preps,
                   const std::vector<double>& tau_sweep) {
  if (tau_sweep.size() < 3)
    throw std::invalid_argument("limit_set: sweep needs >= 3 points");
  if (tau_sweep.front() / tau_sweep.back() < 100.0)
    throw std::invalid_argument("limit_set: sweep must span >= 2 decades");

  std::vector<LimitSweepSample> samples;
  for (double tau : tau_sweep) samples.push_back(limit_sample(cycle, preps, tau));

  const std::size_t nterms = samples.front().substep_of.size();
  auto series = [&](auto getter) {
    std::vector<double> v;
    for (const auto& s : samples) v.push_back(getter(s));
    return richardson(tau_sweep, v);
  };

  LimitSet out;
  out.substep_of = samples.front().substep_of;
  out.xi.resize(nterms);
  out.mtilde0.resize(nterms);
  out.gamma.assign(nterms, std::vector<Extrapolated>(nterms));
  out.mtilde.assign(nterms, std::vector<Extrapolated>(nterms));
  for (std::size_t i = 0; i < nterms; ++i) {
    out.xi[i] = series([&](const LimitSweepSample& s) { return s.xi[i]; });
    out.mtilde0[i] =
        series([&](const LimitSweepSample& s) { return s.mtilde0[i]; });
    for (std::size_t j = 0; j < nterms; ++j) {
      out.gamma[i][j] =
          series([&](const LimitSweepSample& s) { return s.gamma(i, j); });
      out.mtilde[i][j] =
          series([&](const LimitSweepSample& s) { return s.mtilde(i, j); });
    }
  }
  return out;
}

}  // namespace qcollide
