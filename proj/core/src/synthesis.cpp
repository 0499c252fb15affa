#include "mafd/synthesis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "json_util.hpp"
#include "mafd/errors.hpp"

namespace mafd {
namespace {

using detail::Json;

Eigen::MatrixXd sym(const Eigen::MatrixXd& m) { return 0.5 * (m + m.transpose()); }

// Orthonormal basis of symmetric n x n matrices under the Frobenius product.
std::vector<Eigen::MatrixXd> symmetric_basis(int n) {
  std::vector<Eigen::MatrixXd> basis;
  basis.reserve(n * (n + 1) / 2);
  const double w = 1.0 / std::sqrt(2.0);
  for (int a = 0; a < n; ++a) {
    for (int b = a; b < n; ++b) {
      Eigen::MatrixXd e = Eigen::MatrixXd::Zero(n, n);
      if (a == b) {
        e(a, a) = 1.0;
      } else {
        e(a, b) = w;
        e(b, a) = w;
      }
      basis.push_back(std::move(e));
    }
  }
  return basis;
}

Eigen::MatrixXd pinv_apply(const Eigen::MatrixXd& b1, const Eigen::MatrixXd& rhs) {
  return b1.completeOrthogonalDecomposition().solve(rhs);
}

double condition_number(const Eigen::MatrixXd& m) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  const auto& s = svd.singularValues();
  if (s.size() == 0) return 1.0;
  const double lo = s(s.size() - 1);
  return lo > 0.0 ? s(0) / lo : std::numeric_limits<double>::infinity();
}

void check_modes(const std::vector<LinearMode>& modes) {
  if (modes.empty()) throw ValidationError("synthesis: no modes");
  const auto ns = modes.front().a.rows();
  const auto m = modes.front().b1.cols();
  for (const auto& md : modes) {
    if (md.a.rows() != ns || md.a.cols() != ns || md.b1.rows() != ns || md.b1.cols() != m ||
        md.b2.rows() != ns || md.c.cols() != ns || md.c.rows() != m || md.d.rows() != m ||
        md.d.cols() != md.b2.cols() || md.h.rows() != m || md.h.cols() != ns) {
      throw ValidationError("synthesis: inconsistent mode dimensions");
    }
  }
}

// Symmetric P with (I - B1 pinv(B1)) P B1 = 0 for every mode, as an
// orthonormal list of basis matrices.
std::vector<Eigen::MatrixXd> equality_basis(const std::vector<LinearMode>& modes) {
  const int ns = modes.front().state_dim();
  const int m = modes.front().input_dim();
  const auto sb = symmetric_basis(ns);
  const int nsym = static_cast<int>(sb.size());
  Eigen::MatrixXd rows(static_cast<Eigen::Index>(modes.size()) * ns * m, nsym);
  for (std::size_t j = 0; j < modes.size(); ++j) {
    const auto& b1 = modes[j].b1;
    const Eigen::MatrixXd proj =
        Eigen::MatrixXd::Identity(ns, ns) - b1 * pinv_apply(b1, Eigen::MatrixXd::Identity(ns, ns));
    for (int c = 0; c < nsym; ++c) {
      const Eigen::MatrixXd e = proj * sb[c] * b1;
      rows.block(static_cast<Eigen::Index>(j) * ns * m, c, ns * m, 1) =
          Eigen::Map<const Eigen::VectorXd>(e.data(), ns * m);
    }
  }
  Eigen::BDCSVD<Eigen::MatrixXd> svd(rows, Eigen::ComputeThinV);
  const auto& s = svd.singularValues();
  const double cut = 1e-10 * std::max(1.0, s.size() > 0 ? s(0) : 0.0);
  int rank = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (s(i) > cut) ++rank;
  }
  std::vector<Eigen::MatrixXd> basis;
  const Eigen::MatrixXd& v = svd.matrixV();
  for (int k = rank; k < nsym; ++k) {
    Eigen::MatrixXd p = Eigen::MatrixXd::Zero(ns, ns);
    for (int c = 0; c < nsym; ++c) p += v(c, k) * sb[c];
    basis.push_back(sym(p));
  }
  return basis;
}

// Left null vectors of [At B1 B2]: rows that no gain K can reach.
Eigen::MatrixXd gain_invariant_left_null(const LinearMode& mode) {
  const int ns = mode.state_dim();
  Eigen::MatrixXd stacked(ns, ns + mode.input_dim() + mode.disturbance_dim());
  stacked << mode.coupled_a(), mode.b1, mode.b2;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(stacked.transpose(), Eigen::ComputeFullV);
  const auto& s = svd.singularValues();
  const double cut = 1e-9 * std::max(1.0, s.size() > 0 ? s(0) : 0.0);
  int rank = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (s(i) > cut) ++rank;
  }
  return svd.matrixV().rightCols(ns - rank);
}

Eigen::MatrixXd combine(const std::vector<Eigen::MatrixXd>& basis, const Eigen::VectorXd& z,
                        int offset) {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(basis.front().rows(), basis.front().cols());
  for (std::size_t a = 0; a < basis.size(); ++a) out += z(offset + a) * basis[a];
  return out;
}

Eigen::MatrixXd unpack(const Eigen::VectorXd& z, int offset, int rows, int cols) {
  return Eigen::Map<const Eigen::MatrixXd>(z.data() + offset, rows, cols);
}

std::vector<int> iota(int start, int count) {
  std::vector<int> v(count);
  for (int i = 0; i < count; ++i) v[i] = start + i;
  return v;
}

Eigen::MatrixXd non_neutral_basis(const LinearMode& mode) {
  const Eigen::MatrixXd nb = structurally_neutral_directions(mode);
  const int ns = mode.state_dim();
  if (nb.cols() == 0) return Eigen::MatrixXd::Identity(ns, ns);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(nb);
  const Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(ns, ns);
  return q.rightCols(ns - nb.cols());
}

Eigen::MatrixXd deflate(const Eigen::MatrixXd& block, const Eigen::MatrixXd& z, int tail) {
  const int ns = static_cast<int>(z.rows());
  const int kept = static_cast<int>(z.cols());
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(ns + tail, kept + tail);
  w.topLeftCorner(ns, kept) = z;
  w.bottomRightCorner(tail, tail).setIdentity();
  return sym(w.transpose() * block * w);
}

const QsrBlock& qsr_for(const QsrSpec& qsr, std::uint32_t index) {
  if (index >= qsr.modes.size()) throw ValidationError("QSR spec has no entry for mode " + std::to_string(index));
  return qsr.modes[index];
}

Eigen::MatrixXd qsr_matrix(const Json& j, int channels, std::string_view what) {
  if (j.is_number()) return j.get<double>() * Eigen::MatrixXd::Identity(channels, channels);
  Eigen::MatrixXd m = detail::matrix_from_json(j, what);
  if (m.rows() != channels || m.cols() != channels) {
    throw ValidationError(std::string(what) + ": expected " + std::to_string(channels) + "x" +
                          std::to_string(channels));
  }
  return m;
}

}  // namespace

std::vector<Eigen::MatrixXd> decoupled_storage_basis(const std::vector<LinearMode>& modes,
                                                     std::vector<std::uint32_t>& skipped) {
  const int ns = modes.front().state_dim();
  const auto sb = symmetric_basis(ns);
  const int nsym = static_cast<int>(sb.size());
  std::vector<Eigen::MatrixXd> blocks;
  Eigen::Index total = 0;
  for (const auto& md : modes) {
    const Eigen::MatrixXd nv = structurally_neutral_directions(md);
    if (nv.cols() == 0) continue;
    const Eigen::MatrixXd left = gain_invariant_left_null(md);
    if (left.cols() < nv.cols()) {
      skipped.push_back(md.mode.index());
      continue;
    }
    const Eigen::MatrixXd proj = Eigen::MatrixXd::Identity(ns, ns) - left * left.transpose();
    Eigen::MatrixXd rows(ns * nv.cols(), nsym);
    for (int c = 0; c < nsym; ++c) {
      const Eigen::MatrixXd e = proj * sb[c] * nv;
      rows.col(c) = Eigen::Map<const Eigen::VectorXd>(e.data(), e.size());
    }
    total += rows.rows();
    blocks.push_back(std::move(rows));
  }
  if (total == 0) return sb;
  Eigen::MatrixXd all(total, nsym);
  Eigen::Index at = 0;
  for (const auto& b : blocks) {
    all.middleRows(at, b.rows()) = b;
    at += b.rows();
  }
  Eigen::BDCSVD<Eigen::MatrixXd> svd(all, Eigen::ComputeThinV);
  const auto& s = svd.singularValues();
  const double cut = 1e-10 * std::max(1.0, s.size() > 0 ? s(0) : 0.0);
  int rank = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (s(i) > cut) ++rank;
  }
  std::vector<Eigen::MatrixXd> basis;
  for (int k = rank; k < nsym; ++k) {
    Eigen::MatrixXd p = Eigen::MatrixXd::Zero(ns, ns);
    for (int c = 0; c < nsym; ++c) p += svd.matrixV()(c, k) * sb[c];
    basis.push_back(sym(p));
  }
  return basis;
}


QsrSpec QsrSpec::uniform(int mode_count, int channels, double q, double s, double r) {
  QsrSpec spec;
  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(channels, channels);
  spec.modes.assign(mode_count, QsrBlock{q * eye, s * eye, r * eye});
  return spec;
}

QsrSpec QsrSpec::defaults(int mode_count, int channels) {
  QsrSpec spec = uniform(mode_count, channels, -0.1, 0.5, 1.0);
  spec.auto_scale_r = true;
  return spec;
}

void QsrSpec::validate(int mode_count, int channels, double eps_q) const {
  if (static_cast<int>(modes.size()) != mode_count) {
    throw ValidationError("QSR spec covers " + std::to_string(modes.size()) + " modes, expected " +
                          std::to_string(mode_count));
  }
  if (max_doublings < 0) throw ValidationError("QSR max_doublings must be >= 0");
  for (std::size_t j = 0; j < modes.size(); ++j) {
    const auto& b = modes[j];
    const std::string tag = "QSR mode " + std::to_string(j);
    for (const auto* m : {&b.q, &b.s, &b.r}) {
      if (m->rows() != channels || m->cols() != channels) throw ValidationError(tag + ": wrong dimensions");
      if (!m->allFinite()) throw ValidationError(tag + ": non-finite entry");
    }
    const auto asym = [](const Eigen::MatrixXd& m) {
      return (m - m.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, m.cwiseAbs().maxCoeff());
    };
    if (asym(b.q) || asym(b.r)) throw ValidationError(tag + ": Q and R must be symmetric");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(b.q, Eigen::EigenvaluesOnly);
    if (es.eigenvalues().maxCoeff() > -eps_q) throw ValidationError(tag + ": Q must be negative definite");
  }
}

QsrSpec QsrSpec::with_r_scale(double factor) const {
  QsrSpec out = *this;
  for (auto& b : out.modes) b.r *= factor;
  return out;
}

QsrSpec parse_qsr(const std::string& text, int mode_count, int channels) {
  const Json doc = detail::parse_json(text, "QSR file");
  detail::require_keys(doc, {"q", "s", "r", "modes", "auto_scale_r", "max_doublings"}, "QSR file");
  QsrSpec spec = QsrSpec::defaults(mode_count, channels);
  QsrBlock base = spec.modes.front();
  if (doc.contains("q")) base.q = qsr_matrix(doc["q"], channels, "QSR q");
  if (doc.contains("s")) base.s = qsr_matrix(doc["s"], channels, "QSR s");
  if (doc.contains("r")) {
    base.r = qsr_matrix(doc["r"], channels, "QSR r");
    spec.auto_scale_r = false;
  }
  if (doc.contains("auto_scale_r")) {
    if (!doc["auto_scale_r"].is_boolean()) throw ParseError("QSR auto_scale_r must be a boolean");
    spec.auto_scale_r = doc["auto_scale_r"].get<bool>();
  }
  if (doc.contains("max_doublings")) spec.max_doublings = detail::get_int(doc, "max_doublings", "QSR file");
  spec.modes.assign(mode_count, base);
  if (doc.contains("modes")) {
    const Json& ms = doc["modes"];
    if (!ms.is_object()) throw ParseError("QSR modes must be an object keyed by mode bitmask");
    for (const auto& [key, val] : ms.items()) {
      int idx = -1;
      try {
        std::size_t used = 0;
        idx = std::stoi(key, &used);
        if (used != key.size()) idx = -1;
      } catch (const std::exception&) {
        idx = -1;
      }
      if (idx < 0 || idx >= mode_count) throw ValidationError("QSR modes: bad mode key '" + key + "'");
      detail::require_keys(val, {"q", "s", "r"}, "QSR mode entry");
      auto& b = spec.modes[idx];
      if (val.contains("q")) b.q = qsr_matrix(val["q"], channels, "QSR q");
      if (val.contains("s")) b.s = qsr_matrix(val["s"], channels, "QSR s");
      if (val.contains("r")) b.r = qsr_matrix(val["r"], channels, "QSR r");
    }
  }
  spec.validate(mode_count, channels);
  return spec;
}

QsrSpec load_qsr(const std::filesystem::path& path, int mode_count, int channels) {
  return parse_qsr(detail::read_text_file(path), mode_count, channels);
}

Eigen::MatrixXd assemble_synthesis_block(const LinearMode& mode, const QsrBlock& qsr,
                                         const Eigen::MatrixXd& p, const Eigen::MatrixXd& u) {
  const int ns = mode.state_dim();
  const int m = mode.output_dim();
  const int nw = mode.disturbance_dim();
  if (ns == 0 || m == 0) throw ValidationError("synthesis block: empty dimensions");
  if (p.rows() != ns || p.cols() != ns || u.rows() != mode.input_dim() || u.cols() != m ||
      qsr.q.rows() != m || qsr.s.rows() != m || qsr.s.cols() != nw || qsr.r.rows() != nw ||
      mode.d.cols() != nw) {
    throw ValidationError("synthesis block: dimension mismatch");
  }
  const Eigen::MatrixXd qm = psd_sqrt(-qsr.q);
  const Eigen::MatrixXd at = mode.coupled_a();
  const Eigen::MatrixXd buc = mode.b1 * u * mode.c;
  Eigen::MatrixXd out(ns + nw + m, ns + nw + m);
  const Eigen::MatrixXd m11 = -p * at - at.transpose() * p - buc - buc.transpose();
  const Eigen::MatrixXd m12 = -p * mode.b2 - mode.b1 * u * mode.d + mode.c.transpose() * qsr.s;
  const Eigen::MatrixXd m13 = -mode.c.transpose() * qm;
  const Eigen::MatrixXd m22 =
      mode.d.transpose() * qsr.s + qsr.s.transpose() * mode.d + qsr.r;
  const Eigen::MatrixXd m23 = -mode.d.transpose() * qm;
  out << m11, m12, m13, m12.transpose(), m22, m23, m13.transpose(), m23.transpose(),
      Eigen::MatrixXd::Identity(m, m);
  return sym(out);
}

Eigen::MatrixXd dissipativity_block(const Eigen::MatrixXd& p, const Eigen::MatrixXd& a,
                                    const Eigen::MatrixXd& b2, const Eigen::MatrixXd& c,
                                    const Eigen::MatrixXd& d, const QsrBlock& qsr) {
  const auto ns = a.rows();
  const auto nw = b2.cols();
  const auto m = c.rows();
  if (ns == 0 || m == 0 || p.rows() != ns || b2.rows() != ns || c.cols() != ns || d.rows() != m ||
      d.cols() != nw || qsr.q.rows() != m || qsr.s.rows() != m || qsr.s.cols() != nw ||
      qsr.r.rows() != nw) {
    throw ValidationError("dissipativity block: dimension mismatch");
  }
  const Eigen::MatrixXd qm = psd_sqrt(-qsr.q);
  const Eigen::MatrixXd m11 = -p * a - a.transpose() * p;
  const Eigen::MatrixXd m12 = c.transpose() * qsr.s - p * b2;
  const Eigen::MatrixXd m13 = -c.transpose() * qm;
  const Eigen::MatrixXd m22 = d.transpose() * qsr.s + qsr.s.transpose() * d + qsr.r;
  const Eigen::MatrixXd m23 = -d.transpose() * qm;
  Eigen::MatrixXd out(ns + nw + m, ns + nw + m);
  out << m11, m12, m13, m12.transpose(), m22, m23, m13.transpose(), m23.transpose(),
      Eigen::MatrixXd::Identity(m, m);
  return sym(out);
}

Eigen::MatrixXd dissipativity_schur(const Eigen::MatrixXd& p, const Eigen::MatrixXd& a,
                                    const Eigen::MatrixXd& b2, const Eigen::MatrixXd& c,
                                    const Eigen::MatrixXd& d, const QsrBlock& qsr) {
  const auto ns = a.rows();
  const auto nw = b2.cols();
  if (ns == 0 || c.rows() == 0) throw ValidationError("dissipativity block: dimension mismatch");
  const Eigen::MatrixXd m11 = c.transpose() * qsr.q * c - p * a - a.transpose() * p;
  const Eigen::MatrixXd m12 = c.transpose() * qsr.q * d + c.transpose() * qsr.s - p * b2;
  const Eigen::MatrixXd m22 =
      d.transpose() * qsr.q * d + d.transpose() * qsr.s + qsr.s.transpose() * d + qsr.r;
  Eigen::MatrixXd out(ns + nw, ns + nw);
  out << m11, m12, m12.transpose(), m22;
  return sym(out);
}

Eigen::MatrixXd closed_loop_a(const LinearMode& mode, const Eigen::MatrixXd& k) {
  return mode.coupled_a() + mode.b1 * k * mode.c;
}

Eigen::MatrixXd closed_loop_b2(const LinearMode& mode, const Eigen::MatrixXd& k) {
  return mode.b2 + mode.b1 * k * mode.d;
}

const ModeGains& SynthesisResult::gains(std::uint32_t index) const {
  for (const auto& g : modes) {
    if (g.index == index) return g;
  }
  throw ValidationError("no gain for mode " + std::to_string(index));
}

SynthesisResult synthesize(const std::vector<LinearMode>& modes, const QsrSpec& qsr,
                           const SynthesisOptions& options) {
  check_modes(modes);
  const int ns = modes.front().state_dim();
  const int m = modes.front().input_dim();
  const int nmodes = static_cast<int>(modes.size());
  qsr.validate(nmodes, m);
  for (const auto& md : modes) {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(md.b1);
    if (qr.rank() < m) {
      throw NumericError("B1 of mode " + std::to_string(md.mode.index()) + " is not full column rank");
    }
  }

  const auto pbasis = equality_basis(modes);
  const int nb = static_cast<int>(pbasis.size());
  if (nb == 0) {
    SynthesisResult res;
    res.qsr = qsr;
    res.message = "no symmetric P satisfies P B1 = B1 V for every mode";
    return res;
  }
  const int per_mode = m * m;
  const int nvar = nb + nmodes * per_mode;

  const auto make_problem = [&](const QsrSpec& spec) {
    LmiProblem prob;
    prob.variable_count = nvar;
    AffineMatrix pc;
    pc.f0 = Eigen::MatrixXd::Zero(ns, ns);
    for (int a = 0; a < nb; ++a) {
      pc.vars.push_back(a);
      pc.coeffs.push_back(pbasis[a]);
    }
    prob.add(std::move(pc), "P");
    for (int j = 0; j < nmodes; ++j) {
      const auto& md = modes[j];
      const auto& block = qsr_for(spec, md.mode.index());
      const int off = nb + j * per_mode;
      std::vector<int> support = iota(0, nb);
      for (int k = 0; k < per_mode; ++k) support.push_back(off + k);
      prob.add(affine_from_function(nvar, support,
                                    [&](const Eigen::VectorXd& z) {
                                      return assemble_synthesis_block(md, block, combine(pbasis, z, 0),
                                                                      unpack(z, off, m, m));
                                    }),
               "mode " + std::to_string(md.mode.index()));
    }
    return prob;
  };

  const int attempts = qsr.auto_scale_r ? qsr.max_doublings + 1 : 1;
  FeasibilityReport best;
  best.min_margin = -std::numeric_limits<double>::infinity();
  double best_scale = 1.0;
  int used = 0;
  int iterations = 0;
  // Screen the R ladder with projections only, then refine the best rung.
  SolverOptions screen = options.solver;
  screen.barrier_refinement = false;
  for (int attempt = 0; attempt < attempts; ++attempt) {
    const double scale = std::ldexp(1.0, attempt);
    const LmiProblem prob = make_problem(qsr.with_r_scale(scale));
    FeasibilityReport rep = solve_feasibility(prob, screen);
    ++used;
    iterations += rep.projection_iterations + rep.newton_iterations;
    if (rep.min_margin > best.min_margin || rep.found()) {
      best = std::move(rep);
      best_scale = scale;
    }
    if (best.found()) break;
  }
  if (!best.found() && options.solver.barrier_refinement) {
    SolverOptions refine = options.solver;
    refine.initial = best.z;
    FeasibilityReport rep = solve_feasibility(make_problem(qsr.with_r_scale(best_scale)), refine);
    iterations += rep.projection_iterations + rep.newton_iterations;
    if (rep.min_margin > best.min_margin || rep.found()) {
      best = std::move(rep);
    } else {
      best.message = rep.message;
    }
  }

  SynthesisResult res;
  res.qsr = qsr.with_r_scale(best_scale);
  res.qsr.auto_scale_r = false;
  res.method = SynthesisMethod::kDirect;
  res.r_scale = best_scale;
  res.attempts = used;
  res.solver_iterations = iterations;
  res.margin = best.min_margin;
  res.p = sym(combine(pbasis, best.z, 0));
  double worst_cond = 0.0;
  for (int j = 0; j < nmodes; ++j) {
    const auto& md = modes[j];
    ModeGains g;
    g.index = md.mode.index();
    g.u = unpack(best.z, nb + j * per_mode, m, m);
    g.v = pinv_apply(md.b1, res.p * md.b1);
    const double cond = condition_number(g.v);
    worst_cond = std::max(worst_cond, cond);
    g.k = g.v.fullPivLu().solve(g.u);
    res.eq_residual = std::max(res.eq_residual, (res.p * md.b1 - md.b1 * g.v).norm());
    res.modes.push_back(std::move(g));
  }
  res.certified = best.found();
  if (res.certified && worst_cond > options.v_condition_cap) {
    throw NumericError("V_j is numerically singular (condition " + std::to_string(worst_cond) + ")");
  }
  std::ostringstream msg;
  msg << (res.certified ? "certificate found" : "no certificate found") << " after " << used
      << " attempt(s); best margin " << best.min_margin << " at R scale " << best_scale
      << "; P subspace dimension " << nb << "; " << best.message;
  res.message = msg.str();
  return res;
}

SynthesisResult synthesize_alternating(const std::vector<LinearMode>& modes,
                                       const QsrSpec& qsr_in, const SynthesisOptions& options) {
  check_modes(modes);
  const int ns = modes.front().state_dim();
  const int m = modes.front().input_dim();
  const int nmodes = static_cast<int>(modes.size());
  qsr_in.validate(nmodes, m);
  const int tail = modes.front().disturbance_dim() + m;
  const double r_scale = qsr_in.auto_scale_r ? std::ldexp(1.0, qsr_in.max_doublings) : 1.0;
  QsrSpec qsr = qsr_in.with_r_scale(r_scale);
  qsr.auto_scale_r = false;

  std::vector<Eigen::MatrixXd> keep(nmodes);
  for (int j = 0; j < nmodes; ++j) keep[j] = non_neutral_basis(modes[j]);
  std::vector<std::uint32_t> skipped;
  const auto sb = decoupled_storage_basis(modes, skipped);
  const int nsym = static_cast<int>(sb.size());

  std::vector<Eigen::MatrixXd> gains(nmodes, Eigen::MatrixXd::Zero(m, m));
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(ns, ns);
  for (const auto& b : sb) p += b.trace() * b;

  const auto mode_block = [&](int j, const Eigen::MatrixXd& pp, const Eigen::MatrixXd& k) {
    const auto& md = modes[j];
    return deflate(dissipativity_block(pp, closed_loop_a(md, k), closed_loop_b2(md, k), md.c, md.d,
                                       qsr_for(qsr, md.mode.index())),
                   keep[j], tail);
  };
  const auto worst_margin = [&](const Eigen::MatrixXd& pp, const std::vector<Eigen::MatrixXd>& ks) {
    double w = min_eigenvalue(pp);
    for (int j = 0; j < nmodes; ++j) w = std::min(w, min_eigenvalue(mode_block(j, pp, ks[j])));
    return w;
  };

  SolverOptions p_opts = options.solver;
  p_opts.margin = std::max(options.solver.margin, options.alternating_target);
  p_opts.projection_iterations = options.alternating_projection_iterations;
  p_opts.newton_iterations = options.alternating_newton_iterations;
  SolverOptions k_opts = p_opts;

  double best = -std::numeric_limits<double>::infinity();
  Eigen::MatrixXd best_p = p;
  std::vector<Eigen::MatrixXd> best_k = gains;
  int iterations = 0;
  int rounds = 0;
  for (int round = 0; round < options.alternating_rounds; ++round) {
    ++rounds;
    LmiProblem pp;
    pp.variable_count = nsym;
    const std::vector<int> all = iota(0, nsym);
    const auto p_of = [&](const Eigen::VectorXd& z) { return combine(sb, z, 0); };
    pp.add(affine_from_function(nsym, all, [&](const Eigen::VectorXd& z) {
             return Eigen::MatrixXd(p_of(z) - Eigen::MatrixXd::Identity(ns, ns));
           }),
           "P - I");
    pp.add(affine_from_function(nsym, all, [&](const Eigen::VectorXd& z) {
             return Eigen::MatrixXd(options.storage_cap * Eigen::MatrixXd::Identity(ns, ns) - p_of(z));
           }),
           "cap I - P");
    for (int j = 0; j < nmodes; ++j) {
      pp.add(affine_from_function(nsym, all, [&](const Eigen::VectorXd& z) {
        return mode_block(j, p_of(z), gains[j]);
      }));
    }
    Eigen::VectorXd z0(nsym);
    for (int c = 0; c < nsym; ++c) z0(c) = (sb[c].array() * p.array()).sum();
    p_opts.initial = z0;
    const FeasibilityReport pr = solve_feasibility(pp, p_opts);
    iterations += pr.projection_iterations + pr.newton_iterations;
    const auto before = constraint_margins(pp, z0);
    const Eigen::MatrixXd p_new = sym(p_of(pr.z));
    if (pr.min_margin >= *std::min_element(before.begin(), before.end()) &&
        min_eigenvalue(p_new) > 0.0) {
      p = p_new;
    }

    for (int j = 0; j < nmodes; ++j) {
      LmiProblem kp;
      kp.variable_count = m * m;
      kp.add(affine_from_function(m * m, iota(0, m * m), [&](const Eigen::VectorXd& z) {
        return mode_block(j, p, unpack(z, 0, m, m));
      }));
      kp.add(affine_from_function(m * m, iota(0, m * m), [&](const Eigen::VectorXd& z) {
        Eigen::MatrixXd nb(2 * m, 2 * m);
        const Eigen::MatrixXd k = unpack(z, 0, m, m);
        const Eigen::MatrixXd eye = options.gain_norm_bound * Eigen::MatrixXd::Identity(m, m);
        nb << eye, k, k.transpose(), eye;
        return nb;
      }), "gain norm");
      k_opts.initial = Eigen::Map<const Eigen::VectorXd>(gains[j].data(), m * m);
      const FeasibilityReport kr = solve_feasibility(kp, k_opts);
      iterations += kr.projection_iterations + kr.newton_iterations;
      Eigen::MatrixXd k_new = unpack(kr.z, 0, m, m);
      const double norm = k_new.jacobiSvd().singularValues()(0);
      if (norm > options.gain_norm_bound) k_new *= options.gain_norm_bound / norm;
      if (min_eigenvalue(mode_block(j, p, k_new)) >= min_eigenvalue(mode_block(j, p, gains[j]))) {
        gains[j] = k_new;
      }
    }
    const double w = worst_margin(p, gains);
    const bool stalled = w < best + options.alternating_stall;
    if (w > best) {
      best = w;
      best_p = p;
      best_k = gains;
    }
    if (best >= p_opts.margin || stalled) break;
  }

  SynthesisResult res;
  res.qsr = qsr;
  res.r_scale = r_scale;
  res.method = SynthesisMethod::kAlternating;
  res.p = best_p;
  res.attempts = rounds;
  res.solver_iterations = iterations;
  res.certified = false;
  double undeflated = min_eigenvalue(best_p);
  for (int j = 0; j < nmodes; ++j) {
    const auto& md = modes[j];
    ModeGains g;
    g.index = md.mode.index();
    g.k = best_k[j];
    g.v = pinv_apply(md.b1, best_p * md.b1);
    g.u = g.v * g.k;
    res.eq_residual = std::max(res.eq_residual, (best_p * md.b1 - md.b1 * g.v).norm());
    undeflated = std::min(
        undeflated, min_eigenvalue(dissipativity_block(best_p, closed_loop_a(md, g.k),
                                                       closed_loop_b2(md, g.k), md.c, md.d,
                                                       qsr_for(qsr, md.mode.index()))));
    res.modes.push_back(std::move(g));
  }
  res.margin = undeflated;
  std::ostringstream msg;
  msg << "alternating method, uncertified: " << rounds << " round(s), best deflated margin " << best
      << ", undeflated margin " << undeflated << ", storage subspace dimension " << nsym;
  if (!skipped.empty()) {
    msg << ", neutral coupling kept in mode(s)";
    for (auto idx : skipped) msg << " " << idx;
  }
  res.message = msg.str();
  return res;
}

SynthesisResult synthesize_with_fallback(const std::vector<LinearMode>& modes, const QsrSpec& qsr,
                                         const SynthesisOptions& options) {
  SynthesisResult direct = synthesize(modes, qsr, options);
  if (direct.certified) return direct;
  SynthesisResult alt = synthesize_alternating(modes, qsr, options);
  alt.message = "direct: " + direct.message + "; fallback: " + alt.message;
  return alt;
}

CertificateReport verify_certificate(const SynthesisResult& result,
                                     const std::vector<LinearMode>& modes, double margin,
                                     double eq_tol, double agree_tol) {
  check_modes(modes);
  const int ns = modes.front().state_dim();
  if (result.p.rows() != ns || result.p.cols() != ns) {
    throw ValidationError("certificate: P has wrong dimensions");
  }
  CertificateReport rep;
  rep.p_min_eig = min_eigenvalue(result.p);
  rep.min_block_eig = std::numeric_limits<double>::infinity();
  const int tail = modes.front().disturbance_dim() + modes.front().output_dim();
  for (const auto& md : modes) {
    const ModeGains& g = result.gains(md.mode.index());
    if (g.k.rows() != md.input_dim() || g.k.cols() != md.output_dim()) {
      throw ValidationError("certificate: gain of mode " + std::to_string(g.index) + " has wrong dimensions");
    }
    const QsrBlock& qb = qsr_for(result.qsr, md.mode.index());
    const Eigen::MatrixXd ah = closed_loop_a(md, g.k);
    const Eigen::MatrixXd bh = closed_loop_b2(md, g.k);
    const Eigen::MatrixXd block = dissipativity_block(result.p, ah, bh, md.c, md.d, qb);
    const Eigen::MatrixXd schur = dissipativity_schur(result.p, ah, bh, md.c, md.d, qb);
    ModeCertificate mc;
    mc.index = md.mode.index();
    mc.block_min_eig = min_eigenvalue(block);
    mc.schur_min_eig = min_eigenvalue(schur);
    mc.verdicts_agree = (mc.block_min_eig > agree_tol) == (mc.schur_min_eig > agree_tol);
    mc.deflated_min_eig = min_eigenvalue(deflate(block, non_neutral_basis(md), tail));
    const bool have_uv = g.v.rows() == md.input_dim() && g.v.cols() == md.input_dim() &&
                         g.u.rows() == md.input_dim() && g.u.cols() == md.output_dim();
    mc.eq_residual = have_uv ? (result.p * md.b1 - md.b1 * g.v).norm()
                             : std::numeric_limits<double>::infinity();
    mc.gain_residual = have_uv ? (g.v * g.k - g.u).norm() : std::numeric_limits<double>::infinity();
    mc.spectral_abscissa = Eigen::EigenSolver<Eigen::MatrixXd>(ah, false).eigenvalues().real().maxCoeff();
    rep.min_block_eig = std::min(rep.min_block_eig, mc.block_min_eig);
    rep.max_eq_residual = std::max(rep.max_eq_residual, mc.eq_residual);
    rep.max_gain_residual = std::max(rep.max_gain_residual, mc.gain_residual);
    rep.all_agree = rep.all_agree && mc.verdicts_agree;
    rep.modes.push_back(mc);
  }
  rep.passed = rep.p_min_eig >= margin && rep.min_block_eig >= margin &&
               rep.max_eq_residual <= eq_tol && rep.all_agree;
  return rep;
}

std::string to_string(SynthesisMethod method) {
  return method == SynthesisMethod::kDirect ? "direct" : "alternating";
}

std::string gains_to_json(const SynthesisResult& result, int indent) {
  Json doc;
  doc["format"] = "mafd-gains";
  doc["version"] = 1;
  doc["method"] = to_string(result.method);
  doc["certified"] = result.certified;
  doc["p"] = detail::matrix_to_json(result.p);
  Json modes = Json::object();
  for (const auto& g : result.modes) {
    Json e;
    e["k"] = detail::matrix_to_json(g.k);
    if (g.u.size() > 0) e["u"] = detail::matrix_to_json(g.u);
    if (g.v.size() > 0) e["v"] = detail::matrix_to_json(g.v);
    if (g.index < result.qsr.modes.size()) {
      const auto& b = result.qsr.modes[g.index];
      e["qsr"] = {{"q", detail::matrix_to_json(b.q)},
                  {"s", detail::matrix_to_json(b.s)},
                  {"r", detail::matrix_to_json(b.r)}};
    }
    modes[std::to_string(g.index)] = std::move(e);
  }
  doc["modes"] = std::move(modes);
  doc["diagnostics"] = {{"margin", result.margin},
                        {"eq_residual", result.eq_residual},
                        {"r_scale", result.r_scale},
                        {"attempts", result.attempts},
                        {"solver_iterations", result.solver_iterations},
                        {"message", result.message}};
  return doc.dump(indent);
}

SynthesisResult parse_gains(const std::string& text) {
  const Json doc = detail::parse_json(text, "gains file");
  detail::require_keys(doc, {"format", "version", "method", "certified", "p", "modes", "diagnostics"},
                       "gains file");
  if (!doc.contains("p") || !doc.contains("modes") || !doc["modes"].is_object()) {
    throw ParseError("gains file: 'p' and 'modes' are required");
  }
  SynthesisResult res;
  res.p = detail::matrix_from_json(doc["p"], "gains p");
  if (doc.contains("certified")) res.certified = doc["certified"].get<bool>();
  if (doc.contains("method")) {
    res.method = doc["method"] == "alternating" ? SynthesisMethod::kAlternating : SynthesisMethod::kDirect;
  }
  std::uint32_t max_index = 0;
  bool have_qsr = true;
  std::vector<std::pair<std::uint32_t, QsrBlock>> blocks;
  for (const auto& [key, val] : doc["modes"].items()) {
    std::size_t used = 0;
    unsigned long idx = 0;
    try {
      idx = std::stoul(key, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != key.size()) throw ParseError("gains file: bad mode key '" + key + "'");
    detail::require_keys(val, {"k", "u", "v", "qsr"}, "gains mode entry");
    if (!val.contains("k")) throw ParseError("gains file: mode " + key + " has no 'k'");
    ModeGains g;
    g.index = static_cast<std::uint32_t>(idx);
    g.k = detail::matrix_from_json(val["k"], "gains k");
    if (val.contains("u")) g.u = detail::matrix_from_json(val["u"], "gains u");
    if (val.contains("v")) g.v = detail::matrix_from_json(val["v"], "gains v");
    if (val.contains("qsr")) {
      detail::require_keys(val["qsr"], {"q", "s", "r"}, "gains qsr");
      blocks.emplace_back(g.index, QsrBlock{detail::matrix_from_json(val["qsr"].at("q"), "qsr q"),
                                            detail::matrix_from_json(val["qsr"].at("s"), "qsr s"),
                                            detail::matrix_from_json(val["qsr"].at("r"), "qsr r")});
    } else {
      have_qsr = false;
    }
    max_index = std::max(max_index, g.index);
    res.modes.push_back(std::move(g));
  }
  std::sort(res.modes.begin(), res.modes.end(),
            [](const ModeGains& a, const ModeGains& b) { return a.index < b.index; });
  if (have_qsr && !blocks.empty()) {
    res.qsr.modes.resize(max_index + 1);
    for (auto& [idx, b] : blocks) res.qsr.modes[idx] = std::move(b);
  }
  if (doc.contains("diagnostics")) {
    const Json& d = doc["diagnostics"];
    res.margin = detail::get_number_or(d, "margin", 0.0, "diagnostics");
    res.eq_residual = detail::get_number_or(d, "eq_residual", 0.0, "diagnostics");
    res.r_scale = detail::get_number_or(d, "r_scale", 1.0, "diagnostics");
    if (d.contains("message") && d["message"].is_string()) res.message = d["message"].get<std::string>();
  }
  return res;
}

SynthesisResult load_gains(const std::filesystem::path& path) {
  return parse_gains(detail::read_text_file(path));
}

}  // namespace mafd
