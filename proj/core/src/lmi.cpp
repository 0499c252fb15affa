#include "mafd/lmi.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <Eigen/Sparse>

#include "mafd/errors.hpp"

namespace mafd {
namespace {

bool is_symmetric(const Eigen::MatrixXd& m, double rel_tol) {
  if (m.rows() != m.cols()) return false;
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  return (m - m.transpose()).cwiseAbs().maxCoeff() <= rel_tol * scale;
}

double frob_inner(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return (a.array() * b.array()).sum();
}

// Problem with equalities eliminated: z = z0 + T xi, where T is the identity on
// variables that no equality touches and a nullspace basis on the rest.
struct Reduced {
  int dim = 0;
  Eigen::VectorXd z0;
  std::vector<int> free_slot;     // z index -> xi index, or -1 if coupled
  std::vector<int> coupled;       // z indices touched by equalities
  Eigen::MatrixXd null_basis;     // coupled.size() x r, xi indices [0, r)
  std::vector<AffineMatrix> constraints;
  bool equalities_consistent = true;
  double eq_residual = 0.0;

  Eigen::VectorXd lift(const Eigen::VectorXd& xi) const {
    Eigen::VectorXd z = z0;
    const int r = static_cast<int>(null_basis.cols());
    if (r > 0) {
      const Eigen::VectorXd part = null_basis * xi.head(r);
      for (std::size_t c = 0; c < coupled.size(); ++c) z(coupled[c]) += part(c);
    }
    for (std::size_t k = 0; k < free_slot.size(); ++k) {
      if (free_slot[k] >= 0) z(k) += xi(free_slot[k]);
    }
    return z;
  }
};

Reduced reduce(const LmiProblem& problem, double eq_tol) {
  const int nz = problem.variable_count;
  Reduced red;
  red.z0 = Eigen::VectorXd::Zero(nz);
  red.free_slot.assign(nz, -1);

  std::vector<bool> touched(nz, false);
  if (problem.eq_a.rows() > 0) {
    for (int k = 0; k < nz; ++k) {
      touched[k] = problem.eq_a.col(k).cwiseAbs().maxCoeff() > 0.0;
    }
  }
  for (int k = 0; k < nz; ++k) {
    if (touched[k]) red.coupled.push_back(k);
  }

  int r = 0;
  if (!red.coupled.empty()) {
    Eigen::MatrixXd a(problem.eq_a.rows(), red.coupled.size());
    for (std::size_t c = 0; c < red.coupled.size(); ++c) a.col(c) = problem.eq_a.col(red.coupled[c]);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const auto& s = svd.singularValues();
    const double cut = 1e-12 * std::max(1.0, s.size() > 0 ? s(0) : 0.0);
    int rank = 0;
    for (Eigen::Index i = 0; i < s.size(); ++i) {
      if (s(i) > cut) ++rank;
    }
    Eigen::VectorXd y = Eigen::VectorXd::Zero(a.cols());
    const Eigen::VectorXd utb = svd.matrixU().leftCols(rank).transpose() * problem.eq_b;
    y = svd.matrixV().leftCols(rank) * utb.cwiseQuotient(s.head(rank));
    for (std::size_t c = 0; c < red.coupled.size(); ++c) red.z0(red.coupled[c]) = y(c);
    r = static_cast<int>(a.cols()) - rank;
    red.null_basis = svd.matrixV().rightCols(r);
    red.eq_residual = (a * y - problem.eq_b).cwiseAbs().maxCoeff();
    red.equalities_consistent = red.eq_residual <= eq_tol;
  }

  int next = r;
  for (int k = 0; k < nz; ++k) {
    if (!touched[k]) red.free_slot[k] = next++;
  }
  red.dim = next;

  std::vector<int> coupled_pos(nz, -1);
  for (std::size_t c = 0; c < red.coupled.size(); ++c) coupled_pos[red.coupled[c]] = static_cast<int>(c);

  red.constraints.reserve(problem.constraints.size());
  for (const auto& con : problem.constraints) {
    AffineMatrix out;
    out.f0 = con.f0;
    std::vector<Eigen::MatrixXd> mixed(r, Eigen::MatrixXd());
    bool any_coupled = false;
    for (std::size_t k = 0; k < con.vars.size(); ++k) {
      const int var = con.vars[k];
      if (touched[var]) {
        out.f0 += red.z0(var) * con.coeffs[k];
        const int c = coupled_pos[var];
        for (int j = 0; j < r; ++j) {
          const double w = red.null_basis(c, j);
          if (w == 0.0) continue;
          if (mixed[j].size() == 0) mixed[j] = Eigen::MatrixXd::Zero(con.dim(), con.dim());
          mixed[j] += w * con.coeffs[k];
          any_coupled = true;
        }
      } else {
        out.vars.push_back(red.free_slot[var]);
        out.coeffs.push_back(con.coeffs[k]);
      }
    }
    if (any_coupled) {
      for (int j = 0; j < r; ++j) {
        if (mixed[j].size() == 0) continue;
        out.vars.push_back(j);
        out.coeffs.push_back(std::move(mixed[j]));
      }
    }
    red.constraints.push_back(std::move(out));
  }
  return red;
}

struct Evaluation {
  std::vector<double> margins;
  double min_margin = std::numeric_limits<double>::infinity();
};

Evaluation evaluate_margins(const std::vector<AffineMatrix>& cons, const Eigen::VectorXd& xi) {
  Evaluation ev;
  ev.margins.reserve(cons.size());
  for (const auto& c : cons) {
    const double m = min_eigenvalue(c.evaluate(xi));
    ev.margins.push_back(m);
    ev.min_margin = std::min(ev.min_margin, m);
  }
  return ev;
}

using SparseMatrix = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

// Alternating projections: PSD-with-floor projection of every constraint,
// then least-squares return to the affine parameterization.
struct ProjectionResult {
  Eigen::VectorXd xi;
  double best_margin = -std::numeric_limits<double>::infinity();
  int iterations = 0;
};

ProjectionResult alternating_projections(const Reduced& red, const Eigen::VectorXd& start,
                                         const SolverOptions& opt) {
  ProjectionResult res;
  res.xi = start;
  if (red.constraints.empty() || red.dim == 0) {
    res.best_margin = std::numeric_limits<double>::infinity();
    return res;
  }

  std::vector<Triplet> trip;
  Eigen::VectorXd diag = Eigen::VectorXd::Zero(red.dim);
  for (const auto& c : red.constraints) {
    const int s = static_cast<int>(c.vars.size());
    for (int a = 0; a < s; ++a) {
      for (int b = 0; b < s; ++b) {
        const double v = frob_inner(c.coeffs[a], c.coeffs[b]);
        if (v != 0.0) trip.emplace_back(c.vars[a], c.vars[b], v);
        if (a == b) diag(c.vars[a]) += v;
      }
    }
  }
  const double reg = 1e-12 * std::max(1.0, diag.maxCoeff());
  for (int k = 0; k < red.dim; ++k) trip.emplace_back(k, k, reg);
  SparseMatrix g(red.dim, red.dim);
  g.setFromTriplets(trip.begin(), trip.end());
  Eigen::SimplicialLDLT<SparseMatrix> ldlt(g);
  if (ldlt.info() != Eigen::Success) return res;

  const double floor = 2.0 * opt.margin;
  Eigen::VectorXd xi = start;
  Eigen::VectorXd rhs(red.dim);
  for (int it = 0; it < opt.projection_iterations; ++it) {
    res.iterations = it + 1;
    rhs.setZero();
    double worst = std::numeric_limits<double>::infinity();
    for (const auto& c : red.constraints) {
      const Eigen::MatrixXd f = c.evaluate(xi);
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (f + f.transpose()));
      worst = std::min(worst, es.eigenvalues()(0));
      const Eigen::VectorXd clamped = es.eigenvalues().cwiseMax(floor);
      const Eigen::MatrixXd target =
          es.eigenvectors() * clamped.asDiagonal() * es.eigenvectors().transpose();
      const Eigen::MatrixXd resid = target - c.f0;
      for (std::size_t k = 0; k < c.vars.size(); ++k) rhs(c.vars[k]) += frob_inner(c.coeffs[k], resid);
    }
    if (worst > res.best_margin) {
      res.best_margin = worst;
      res.xi = xi;
    }
    if (worst >= opt.margin) break;
    const Eigen::VectorXd ls = ldlt.solve(rhs);
    xi += opt.relaxation * (ls - xi);
  }
  const double final_margin = evaluate_margins(red.constraints, xi).min_margin;
  if (final_margin > res.best_margin) {
    res.best_margin = final_margin;
    res.xi = xi;
  }
  return res;
}

// Log-barrier ascent on t subject to F_i(xi) - t I > 0, |xi_k| < bound, t < cap.
struct BarrierResult {
  Eigen::VectorXd xi;
  double t = 0.0;
  int iterations = 0;
};

struct BarrierState {
  double value = 0.0;
  bool feasible = false;
};

BarrierState barrier_value(const Reduced& red, const Eigen::VectorXd& xi, double t, double tau,
                           double bound, double cap) {
  BarrierState st;
  if (t >= cap) return st;
  double v = -tau * t - std::log(cap - t);
  for (int k = 0; k < xi.size(); ++k) {
    const double gap = bound * bound - xi(k) * xi(k);
    if (gap <= 0.0) return st;
    v -= std::log(gap);
  }
  for (const auto& c : red.constraints) {
    Eigen::MatrixXd s = c.evaluate(xi);
    s.diagonal().array() -= t;
    Eigen::LLT<Eigen::MatrixXd> llt(0.5 * (s + s.transpose()));
    if (llt.info() != Eigen::Success) return st;
    const auto& l = llt.matrixL();
    double logdet = 0.0;
    for (int i = 0; i < s.rows(); ++i) {
      const double d = l(i, i);
      if (!(d > 0.0)) return st;
      logdet += 2.0 * std::log(d);
    }
    v -= logdet;
  }
  st.value = v;
  st.feasible = std::isfinite(v);
  return st;
}

BarrierResult barrier_ascent(const Reduced& red, const Eigen::VectorXd& start, double start_margin,
                             const SolverOptions& opt) {
  BarrierResult res;
  const int n = red.dim;
  Eigen::VectorXd xi = start;
  const double bound = std::max(opt.variable_bound, 2.0 * (xi.size() ? xi.cwiseAbs().maxCoeff() : 0.0));
  const double cap = std::max(opt.slack_cap, 10.0 * opt.margin);
  double t = std::min(start_margin, cap) - std::max(1.0, 0.1 * std::abs(start_margin));
  res.xi = xi;
  res.t = start_margin;

  double nu = 1.0 + 2.0 * n;
  for (const auto& c : red.constraints) nu += c.dim();
  double tau = nu / std::max(1.0, std::abs(t));

  for (int it = 0; it < opt.newton_iterations; ++it) {
    res.iterations = it + 1;
    // Gradient and Hessian in (xi, t); t is the last coordinate.
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(n + 1);
    std::vector<Triplet> trip;
    Eigen::VectorXd h_t = Eigen::VectorXd::Zero(n);
    double h_tt = 1.0 / ((cap - t) * (cap - t));
    grad(n) = -tau + 1.0 / (cap - t);
    bool ok = true;
    for (const auto& c : red.constraints) {
      Eigen::MatrixXd s = c.evaluate(xi);
      s.diagonal().array() -= t;
      Eigen::LLT<Eigen::MatrixXd> llt(0.5 * (s + s.transpose()));
      if (llt.info() != Eigen::Success) {
        ok = false;
        break;
      }
      const int d = c.dim();
      const int sz = static_cast<int>(c.vars.size());
      // M = L^-1 L^-T = S^-1 in congruence coordinates.
      Eigen::MatrixXd linv = llt.matrixL().solve(Eigen::MatrixXd::Identity(d, d));
      const Eigen::MatrixXd m = linv * linv.transpose();
      Eigen::MatrixXd w(d * d, sz);
      for (int k = 0; k < sz; ++k) {
        Eigen::MatrixXd gk = linv * c.coeffs[k] * linv.transpose();
        w.col(k) = Eigen::Map<const Eigen::VectorXd>(gk.data(), d * d);
        grad(c.vars[k]) -= gk.trace();
      }
      const Eigen::Map<const Eigen::VectorXd> mvec(m.data(), d * d);
      const Eigen::MatrixXd hb = w.transpose() * w;
      const Eigen::VectorXd ht = w.transpose() * mvec;
      for (int a = 0; a < sz; ++a) {
        h_t(c.vars[a]) -= ht(a);
        for (int b = 0; b < sz; ++b) trip.emplace_back(c.vars[a], c.vars[b], hb(a, b));
      }
      grad(n) += m.trace();
      h_tt += mvec.squaredNorm();
    }
    if (!ok) break;
    double hmax = h_tt;
    for (int k = 0; k < n; ++k) {
      const double gap = bound * bound - xi(k) * xi(k);
      grad(k) += 2.0 * xi(k) / gap;
      const double hk = 2.0 * (bound * bound + xi(k) * xi(k)) / (gap * gap);
      trip.emplace_back(k, k, hk);
    }
    for (int k = 0; k < n; ++k) {
      if (h_t(k) != 0.0) {
        trip.emplace_back(k, n, h_t(k));
        trip.emplace_back(n, k, h_t(k));
      }
    }
    trip.emplace_back(n, n, h_tt);
    SparseMatrix hess(n + 1, n + 1);
    hess.setFromTriplets(trip.begin(), trip.end());
    for (int k = 0; k <= n; ++k) hmax = std::max(hmax, hess.coeff(k, k));
    for (int k = 0; k <= n; ++k) hess.coeffRef(k, k) += 1e-12 * hmax;
    Eigen::SimplicialLDLT<SparseMatrix> ldlt(hess);
    if (ldlt.info() != Eigen::Success) break;
    const Eigen::VectorXd step = -ldlt.solve(grad);
    const double decrement = -grad.dot(step);

    const BarrierState here = barrier_value(red, xi, t, tau, bound, cap);
    if (!here.feasible) break;
    double alpha = 1.0;
    bool moved = false;
    for (int ls = 0; ls < 60; ++ls) {
      const Eigen::VectorXd xi_new = xi + alpha * step.head(n);
      const double t_new = t + alpha * step(n);
      const BarrierState trial = barrier_value(red, xi_new, t_new, tau, bound, cap);
      if (trial.feasible && trial.value <= here.value - 0.25 * alpha * decrement) {
        xi = xi_new;
        t = t_new;
        moved = true;
        break;
      }
      alpha *= 0.5;
    }
    if (t > res.t) {
      res.t = t;
      res.xi = xi;
    }
    if (t >= opt.margin * 1.5) break;
    if (!moved || decrement < 1e-8) {
      if (nu / tau < 1e-9 * std::max(1.0, std::abs(t))) break;
      tau *= 8.0;
    }
  }
  return res;
}

}  // namespace

Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m, double clamp) {
  if (!is_symmetric(m, 1e-10)) throw ValidationError("psd_sqrt: matrix is not symmetric");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (m + m.transpose()));
  if (es.info() != Eigen::Success) throw NumericError("psd_sqrt: eigendecomposition failed");
  Eigen::VectorXd ev = es.eigenvalues();
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    if (ev(i) < -clamp) {
      std::ostringstream os;
      os << "psd_sqrt: eigenvalue " << ev(i) << " is negative";
      throw ValidationError(os.str());
    }
    ev(i) = std::sqrt(std::max(ev(i), 0.0));
  }
  const Eigen::MatrixXd r = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
  return 0.5 * (r + r.transpose());
}

double min_eigenvalue(const Eigen::MatrixXd& m) {
  if (m.size() == 0) return std::numeric_limits<double>::infinity();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (m + m.transpose()),
                                                    Eigen::EigenvaluesOnly);
  return es.eigenvalues()(0);
}

Eigen::MatrixXd AffineMatrix::evaluate(const Eigen::VectorXd& z) const {
  Eigen::MatrixXd out = f0;
  for (std::size_t k = 0; k < vars.size(); ++k) {
    const double v = z(vars[k]);
    if (v != 0.0) out += v * coeffs[k];
  }
  return out;
}

AffineMatrix affine_from_function(int variable_count, const std::vector<int>& support,
                                  const std::function<Eigen::MatrixXd(const Eigen::VectorXd&)>& f,
                                  double drop_tol) {
  AffineMatrix out;
  Eigen::VectorXd z = Eigen::VectorXd::Zero(variable_count);
  out.f0 = f(z);
  for (int k : support) {
    if (k < 0 || k >= variable_count) throw ValidationError("affine_from_function: index out of range");
    z(k) = 1.0;
    Eigen::MatrixXd coeff = f(z) - out.f0;
    z(k) = 0.0;
    if (coeff.cwiseAbs().maxCoeff() <= drop_tol) continue;
    out.vars.push_back(k);
    out.coeffs.push_back(std::move(coeff));
  }
  return out;
}

void LmiProblem::add(AffineMatrix constraint, std::string label) {
  constraints.push_back(std::move(constraint));
  labels.resize(constraints.size() - 1);
  labels.push_back(std::move(label));
}

void LmiProblem::validate() const {
  if (variable_count < 0) throw ValidationError("LMI: negative variable count");
  for (std::size_t i = 0; i < constraints.size(); ++i) {
    const auto& c = constraints[i];
    if (c.f0.rows() != c.f0.cols() || c.f0.rows() == 0) {
      throw ValidationError("LMI: constraint " + std::to_string(i) + " is not a nonempty square matrix");
    }
    if (c.vars.size() != c.coeffs.size()) {
      throw ValidationError("LMI: constraint " + std::to_string(i) + " support/coefficients mismatch");
    }
    if (!is_symmetric(c.f0, 1e-12)) {
      throw ValidationError("LMI: constraint " + std::to_string(i) + " constant term not symmetric");
    }
    for (std::size_t k = 0; k < c.vars.size(); ++k) {
      if (c.vars[k] < 0 || c.vars[k] >= variable_count) {
        throw ValidationError("LMI: constraint " + std::to_string(i) + " references unknown variable");
      }
      if (c.coeffs[k].rows() != c.f0.rows() || c.coeffs[k].cols() != c.f0.cols() ||
          !is_symmetric(c.coeffs[k], 1e-12)) {
        throw ValidationError("LMI: constraint " + std::to_string(i) + " has a malformed coefficient");
      }
    }
  }
  if (eq_a.rows() != eq_b.size()) throw ValidationError("LMI: equality rows/rhs mismatch");
  if (eq_a.rows() > 0 && eq_a.cols() != variable_count) {
    throw ValidationError("LMI: equality matrix has wrong column count");
  }
}

std::vector<double> constraint_margins(const LmiProblem& problem, const Eigen::VectorXd& z) {
  return evaluate_margins(problem.constraints, z).margins;
}

FeasibilityReport solve_feasibility(const LmiProblem& problem, const SolverOptions& options) {
  problem.validate();
  FeasibilityReport rep;
  const Reduced red = reduce(problem, options.eq_tol);

  Eigen::VectorXd xi = Eigen::VectorXd::Zero(red.dim);
  if (options.initial.size() == problem.variable_count) {
    // Project the starting point onto the parameterization.
    const Eigen::VectorXd delta = options.initial - red.z0;
    const int r = static_cast<int>(red.null_basis.cols());
    if (r > 0) {
      Eigen::VectorXd dc(red.coupled.size());
      for (std::size_t c = 0; c < red.coupled.size(); ++c) dc(c) = delta(red.coupled[c]);
      xi.head(r) = red.null_basis.transpose() * dc;
    }
    for (int k = 0; k < problem.variable_count; ++k) {
      if (red.free_slot[k] >= 0) xi(red.free_slot[k]) = delta(k);
    }
  }

  const auto finish = [&](const Eigen::VectorXd& best_xi) {
    rep.z = red.lift(best_xi);
    const auto ev = evaluate_margins(problem.constraints, rep.z);
    rep.constraint_margins = ev.margins;
    rep.min_margin = ev.min_margin;
    rep.eq_residual =
        problem.eq_a.rows() > 0 ? (problem.eq_a * rep.z - problem.eq_b).cwiseAbs().maxCoeff() : 0.0;
    const bool ok = ev.min_margin >= options.margin && rep.eq_residual <= options.eq_tol;
    rep.status = ok ? FeasibilityStatus::kFound : FeasibilityStatus::kNotFound;
  };

  if (!red.equalities_consistent) {
    finish(xi);
    rep.status = FeasibilityStatus::kNotFound;
    rep.message = "equality constraints are inconsistent";
    return rep;
  }

  if (red.dim == 0) {
    finish(xi);
    rep.message = "variables fixed by the equality constraints";
    return rep;
  }

  const ProjectionResult ap = alternating_projections(red, xi, options);
  rep.projection_iterations = ap.iterations;
  finish(ap.xi);
  if (rep.found()) {
    rep.message = "found by alternating projections";
    return rep;
  }
  if (!options.barrier_refinement) {
    rep.message = "not found within projection budget";
    return rep;
  }

  const BarrierResult br = barrier_ascent(red, ap.xi, ap.best_margin, options);
  rep.newton_iterations = br.iterations;
  const Eigen::VectorXd best = br.t > ap.best_margin ? br.xi : ap.xi;
  finish(best);
  rep.message = rep.found() ? "found by barrier refinement" : "not found within iteration budget";
  return rep;
}

}  // namespace mafd
