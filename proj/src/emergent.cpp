#include "qcollide/emergent.hpp"

#include <cmath>

namespace qcollide {

std::string to_string(Regime r) {
  switch (r) {
    case Regime::ExactUnitary: return "exact-unitary";
    case Regime::EffectiveUnitary: return "effective-unitary";
    case Regime::FiniteDecoherence: return "finite-decoherence";
    case Regime::Zeno: return "zeno";
    case Regime::Undetermined: return "undetermined";
  }
  return "undetermined";
}

UnitarityWitness check_exact_unitarity(const PreparationFamily& prep,
                                       const Matrix& m_op, const Matrix& m0,
                                       double tau) {
  DensityMatrix rho_m = prep.realize(tau);
  if (rho_m.dim() != m_op.rows() || m_op.rows() != m0.rows())
    throw std::invalid_argument("check_exact_unitarity: dimension mismatch");

  const double scale =
      std::max({1.0, m_op.norm(), m0.norm()});
  UnitarityWitness w;

  // (i) support confined to one eigenvalue subspace of m_op:
  // ||(M - <M>) rho (M - <M>)|| vanishes exactly when every support vector is
  // an eigenvector with the same eigenvalue.
  double m_mean = (m_op * rho_m.mat).trace().real();
  Matrix shifted = m_op - m_mean * Matrix::Identity(m_op.rows(), m_op.cols());
  double support_violation = (shifted * rho_m.mat * shifted).norm();
  if (support_violation > tol::unitarity_predicate * scale * scale) {
    w.pass = false;
    w.violated = "support-not-in-single-eigenspace";
    w.magnitude = support_violation;
    return w;
  }

  // (ii) that eigenspace is invariant under the free ancilla Hamiltonian:
  // ||(1 - P) m0 P|| with P the projector onto the eigenvalue-m_mean subspace.
  Eigen::SelfAdjointEigenSolver<Matrix> es(m_op);
  Matrix proj = Matrix::Zero(m_op.rows(), m_op.cols());
  double eig_scale = std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff());
  for (Eigen::Index k = 0; k < m_op.rows(); ++k)
    if (std::abs(es.eigenvalues()[k] - m_mean) <=
        tol::unitarity_predicate * eig_scale)
      proj += es.eigenvectors().col(k) * es.eigenvectors().col(k).adjoint();
  Matrix rest = Matrix::Identity(m_op.rows(), m_op.cols()) - proj;
  double leak = (rest * m0 * proj).norm();
  if (leak > tol::unitarity_predicate * scale) {
    w.pass = false;
    w.violated = "eigenspace-not-invariant-under-free-hamiltonian";
    w.magnitude = leak;
    return w;
  }

  w.pass = true;
  w.magnitude = std::max(support_violation, leak);
  return w;
}

RegimeReport classify_regime(const CycleSpec& cycle,
                             const std::vector<PreparationFamily>& preps,
                             const std::vector<double>& tau_sweep,
                             int k_max) {
  cycle.validate();
  if (k_max < 2) throw std::invalid_argument("classify_regime: k_max >= 2");
  RegimeReport report;
  report.k_max = k_max;

  // Exact unitarity first: it holds at every tau, no limit needed.
  bool exact = true;
  {
    std::size_t term = 0;
    for (const auto& step : cycle.substeps)
      for (const auto& si : step) {
        auto w = check_exact_unitarity(preps.at(si.ancilla), si.m_op,
                                       cycle.m0[si.ancilla],
                                       tau_sweep.empty() ? 1.0
                                                         : tau_sweep.front());
        report.certificate.push_back(
            {"exact-unitary/term-" + std::to_string(term) +
                 (w.pass ? "" : "/" + w.violated),
             w.pass, w.magnitude});
        exact = exact && w.pass;
        ++term;
      }
  }
  if (exact) {
    report.regime = Regime::ExactUnitary;
    return report;
  }

  report.limits = limit_set(cycle, preps, tau_sweep);
  const auto& lim = report.limits;
  const std::size_t nterms = lim.substep_of.size();
  const std::size_t p = cycle.p();

  // Per-term higher-moment contributions to the generator,
  // h_k(tau) = (tau' gbar)^k <M^k> / tau, extrapolated over the sweep.
  std::vector<const SubInteraction*> flat;
  for (const auto& step : cycle.substeps)
    for (const auto& si : step) flat.push_back(&si);

  bool any_diverged = lim.any_diverged();
  bool second_order_survives = false;
  bool higher_order_survives = false;
  bool established = lim.all_established();

  for (std::size_t t = 0; t < nterms; ++t) {
    // Gamma_tt is exactly the k = 2 contribution (up to the fixed prefactor).
    double g2 = lim.gamma[t][t].value;
    if (std::abs(g2) > 1e-9) second_order_survives = true;

    for (int k = 3; k <= k_max; ++k) {
      std::vector<double> vals;
      for (double tau : tau_sweep) {
        double tau_sub = tau / double(p);
        double g = flat[t]->schedule.gbar(tau_sub);
        DensityMatrix rho_m = preps[flat[t]->ancilla].realize(tau);
        double mk = moment(rho_m, flat[t]->m_op, k);
        vals.push_back(std::pow(tau_sub * g, k) * mk / tau);
      }
      // h_k carries tau powers up to k-1; match the extrapolation order so a
      // vanishing limit is annihilated exactly instead of leaving an
      // O(gbar^k) Neville leftover above the threshold.
      Extrapolated e = richardson(
          tau_sweep, vals, std::min(k - 1, int(tau_sweep.size()) - 2));
      bool vanished = !e.diverged && std::abs(e.value) <= 1e-9;
      report.certificate.push_back(
          {"moment-order-" + std::to_string(k) + "/term-" + std::to_string(t),
           vanished, e.diverged ? vals.back() : std::abs(e.value)});
      if (e.diverged) any_diverged = true;
      if (!vanished && !e.diverged) higher_order_survives = true;
      established = established && (e.established || e.diverged);
    }
  }

  for (std::size_t t = 0; t < nterms; ++t)
    report.certificate.push_back({"gamma-finite/term-" + std::to_string(t),
                                  !lim.gamma[t][t].diverged,
                                  lim.gamma[t][t].value});

  if (any_diverged)
    report.regime = Regime::Zeno;
  else if (!established || higher_order_survives)
    report.regime = Regime::Undetermined;
  else if (second_order_survives)
    report.regime = Regime::FiniteDecoherence;
  else
    report.regime = Regime::EffectiveUnitary;
  return report;
}

Matrix MasterEquationSpec::apply(const Matrix& rho) const {
  const Complex I(0, 1);
  Matrix out = -I / hbar * (h_eff * rho - rho * h_eff);
  for (const auto& d : dissipators) {
    Matrix inner = d.b * rho - rho * d.b;
    out -= d.rate / (hbar * hbar) * (d.a * inner - inner * d.a);
  }
  for (const auto& f : feedback_terms) {
    Matrix sym = f.b * rho + rho * f.b;
    out += I * f.rate / hbar * (f.a * sym - sym * f.a);
  }
  return out;
}

double MasterEquationSpec::generator_norm_bound() const {
  double bound = 2.0 * h_eff.norm() / hbar;
  for (const auto& d : dissipators)
    bound += 4.0 * std::abs(d.rate) * d.a.norm() * d.b.norm() / (hbar * hbar);
  for (const auto& f : feedback_terms)
    bound += 4.0 * std::abs(f.rate) * f.a.norm() * f.b.norm() / hbar;
  return bound;
}

namespace {

// Shared continuum-equation assembly; values supplied either from
// extrapolated limits or from a single finite-tau sample.
struct LimitValues {
  Eigen::VectorXd xi, mtilde0;
  Eigen::MatrixXd gamma, mtilde;
  std::vector<std::size_t> substep_of;
};

MasterEquationSpec assemble(const CycleSpec& cycle, const LimitValues& v) {
  cycle.validate();
  MasterEquationSpec spec;
  spec.hbar = cycle.hbar;
  const double p = double(cycle.p());

  std::vector<const SubInteraction*> flat;
  for (const auto& step : cycle.substeps)
    for (const auto& si : step) flat.push_back(&si);
  const std::size_t n = flat.size();
  if (v.substep_of.size() != n)
    throw std::invalid_argument("build_master_equation: limit/cycle mismatch");

  spec.h_eff = cycle.s0;
  for (std::size_t a = 0; a < n; ++a) {
    // substep index enters the free-evolution cross term with odd multiplicity
    double step1 = double(v.substep_of[a]) + 1.0;
    spec.h_eff += (v.xi[a] / p) * flat[a]->s_op;
    spec.h_eff -=
        (2.0 * (2.0 * step1 - 1.0) / p) * v.mtilde0[a] * flat[a]->s_op;

    spec.dissipators.push_back(
        {flat[a]->s_op, flat[a]->s_op, v.gamma(a, a) / p});

    for (std::size_t b = a + 1; b < n; ++b) {
      bool same_step = v.substep_of[a] == v.substep_of[b];
      if (same_step) {
        if (std::abs(v.gamma(a, b)) > 0.0) {
          spec.dissipators.push_back(
              {flat[a]->s_op, flat[b]->s_op, v.gamma(a, b) / p});
          spec.dissipators.push_back(
              {flat[b]->s_op, flat[a]->s_op, v.gamma(b, a) / p});
        }
        if (std::abs(v.mtilde(a, b)) > 0.0) {
          spec.feedback_terms.push_back(
              {flat[a]->s_op, flat[b]->s_op, v.mtilde(a, b) / p});
          spec.feedback_terms.push_back(
              {flat[b]->s_op, flat[a]->s_op, v.mtilde(b, a) / p});
        }
      } else {
        // b acts after a: the later operator sits on the outside
        if (std::abs(v.gamma(b, a)) > 0.0)
          spec.dissipators.push_back(
              {flat[b]->s_op, flat[a]->s_op, 2.0 * v.gamma(b, a) / p});
        if (std::abs(v.mtilde(a, b)) > 0.0)
          spec.feedback_terms.push_back(
              {flat[b]->s_op, flat[a]->s_op, -2.0 * v.mtilde(a, b) / p});
      }
    }
  }

  // Fold symmetric sandwich pairs into the Hamiltonian using the identity
  // [A, B rho + rho B] + [B, A rho + rho A] = [{A,B}, rho].
  for (std::size_t i = 0; i < spec.feedback_terms.size(); ++i) {
    for (std::size_t j = i + 1; j < spec.feedback_terms.size(); ++j) {
      const auto& fi = spec.feedback_terms[i];
      const auto& fj = spec.feedback_terms[j];
      double scale = std::max(1.0, fi.a.norm() + fi.b.norm());
      if (std::abs(fi.rate - fj.rate) >
          1e-12 * std::max(1.0, std::abs(fi.rate)))
        continue;
      if ((fi.a - fj.b).norm() > 1e-12 * scale) continue;
      if ((fi.b - fj.a).norm() > 1e-12 * scale) continue;
      spec.h_eff -= fi.rate * (fi.a * fi.b + fi.b * fi.a);
      spec.feedback_terms.erase(spec.feedback_terms.begin() + j);
      spec.feedback_terms.erase(spec.feedback_terms.begin() + i);
      --i;
      break;
    }
  }
  return spec;
}

}  // namespace

MasterEquationSpec build_master_equation(const CycleSpec& cycle,
                                         const LimitSet& limits) {
  if (limits.any_diverged())
    throw std::invalid_argument(
        "build_master_equation: a coupling limit diverged; no continuum "
        "master equation exists for this cycle");
  LimitValues v;
  const std::size_t n = limits.substep_of.size();
  v.substep_of = limits.substep_of;
  v.xi.resize(n);
  v.mtilde0.resize(n);
  v.gamma.resize(n, n);
  v.mtilde.resize(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    v.xi[i] = limits.xi[i].value;
    v.mtilde0[i] = limits.mtilde0[i].value;
    for (std::size_t j = 0; j < n; ++j) {
      v.gamma(i, j) = limits.gamma[i][j].value;
      v.mtilde(i, j) = limits.mtilde[i][j].value;
    }
  }
  return assemble(cycle, v);
}

MasterEquationSpec build_master_equation(const CycleSpec& cycle,
                                         const LimitSweepSample& sample) {
  LimitValues v;
  v.substep_of = sample.substep_of;
  v.xi = sample.xi;
  v.mtilde0 = sample.mtilde0;
  v.gamma = sample.gamma;
  v.mtilde = sample.mtilde;
  return assemble(cycle, v);
}

EvolutionTrace integrate_master(const MasterEquationSpec& spec,
                                const DensityMatrix& rho0, double T,
                                double dt) {
  if (dt <= 0.0 || T <= 0.0)
    throw std::invalid_argument("integrate_master: T and dt must be positive");
  double bound = spec.generator_norm_bound();
  if (dt > 0.1 / bound)
    throw std::invalid_argument(
        "integrate_master: dt exceeds stability bound 0.1/||L|| = " +
        std::to_string(0.1 / bound));

  int n = int(std::ceil(T / dt - 1e-12));
  const double h = T / double(n);

  EvolutionTrace trace;
  trace.tau = h;
  trace.n = n;
  trace.times.push_back(0.0);
  trace.states.push_back(rho0);

  Matrix rho = rho0.mat;
  for (int k = 1; k <= n; ++k) {
    Matrix k1 = spec.apply(rho);
    Matrix k2 = spec.apply(rho + 0.5 * h * k1);
    Matrix k3 = spec.apply(rho + 0.5 * h * k2);
    Matrix k4 = spec.apply(rho + h * k3);
    rho += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    rho = 0.5 * (rho + rho.adjoint().eval());
    double drift = std::abs(rho.trace() - Complex(1.0));
    if (drift > 1e-8)
      throw std::runtime_error("integrate_master: trace drift " +
                               std::to_string(drift));
    trace.times.push_back(double(k) * h);
    trace.states.push_back(DensityMatrix{rho, rho0.tolerance});
  }
  return trace;
}

Complex zeno_factor(const PreparationFamily& prep, const Matrix& m_op,
                    double delta_s, double tau_g, double hbar, double tau) {
  DensityMatrix rho_m = prep.realize(tau);
  if (rho_m.dim() != m_op.rows())
    throw std::invalid_argument("zeno_factor: dimension mismatch");
  Matrix u = expm(Complex(0, -1) * tau_g * delta_s / hbar * m_op);
  return (u * rho_m.mat).trace();
}

double zeno_decay_curve(const PreparationFamily& prep, const Matrix& m_op,
                        double delta_s, double t, double tau, double hbar) {
  DensityMatrix rho_m = prep.realize(tau);
  double m1 = moment(rho_m, m_op, 1);
  double m2 = moment(rho_m, m_op, 2);
  double var = std::max(0.0, m2 - m1 * m1);
  double per_collision =
      std::exp(-var * delta_s * delta_s / (2.0 * hbar * hbar));
  return std::exp(-(t / tau) * (1.0 - per_collision));
}

}  // namespace qcollide
