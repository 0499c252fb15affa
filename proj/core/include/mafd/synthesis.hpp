#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mafd/linearization.hpp"
#include "mafd/lmi.hpp"

namespace mafd {

/// Supply-rate matrices of one mode.
struct QsrBlock {
  Eigen::MatrixXd q;
  Eigen::MatrixXd s;
  Eigen::MatrixXd r;
};

/// Per-mode supply rates, indexed by mode bitmask. When `auto_scale_r` is set,
/// synthesis multiplies every R by 2^k on its k-th retry.
struct QsrSpec {
  std::vector<QsrBlock> modes;
  bool auto_scale_r = false;
  int max_doublings = 10;

  /// Q = q I, S = s I, R = r I for every mode.
  static QsrSpec uniform(int mode_count, int channels, double q, double s, double r);
  /// Q = -0.1 I, S = 0.5 I, R = I with automatic doubling of R.
  static QsrSpec defaults(int mode_count, int channels);

  /// Throws ValidationError unless every Q, S, R is channels x channels,
  /// Q and R are symmetric and Q has largest eigenvalue <= -eps_q.
  void validate(int mode_count, int channels, double eps_q = 1e-9) const;
  QsrSpec with_r_scale(double factor) const;
};

/// Accepts {"q": x | matrix, "s": ..., "r": ..., "modes": {"<bitmask>": {...}},
/// "auto_scale_r": bool, "max_doublings": int}. Scalars mean multiples of I.
/// Unspecified entries fall back to the defaults.
QsrSpec parse_qsr(const std::string& text, int mode_count, int channels);
QsrSpec load_qsr(const std::filesystem::path& path, int mode_count, int channels);

/// The synthesis inequality of one mode (size state + 2 * channels):
///   [ -P At - At'P - B1 U C - C'U'B1'   -P B2 - B1 U D + C'S   -C'Qm ]
///   [ *                                  D'S + S'D + R          -D'Qm ]
///   [ *                                  *                       I    ]
/// with At = A + B1 H and Qm = psd_sqrt(-Q).
Eigen::MatrixXd assemble_synthesis_block(const LinearMode& mode, const QsrBlock& qsr,
                                         const Eigen::MatrixXd& p, const Eigen::MatrixXd& u);

/// Dissipativity inequality of x' = a x + b2 w, y = c x + d w in block form
///   [ -P a - a'P   C'S - P b2   -C'Qm ]
///   [ *            D'S + S'D + R -D'Qm ]
///   [ *            *              I    ]
Eigen::MatrixXd dissipativity_block(const Eigen::MatrixXd& p, const Eigen::MatrixXd& a,
                                    const Eigen::MatrixXd& b2, const Eigen::MatrixXd& c,
                                    const Eigen::MatrixXd& d, const QsrBlock& qsr);

/// The same inequality with the identity block eliminated:
///   [ C'QC - P a - a'P   C'QD + C'S - P b2 ]
///   [ *                  D'QD + D'S + S'D + R ]
Eigen::MatrixXd dissipativity_schur(const Eigen::MatrixXd& p, const Eigen::MatrixXd& a,
                                    const Eigen::MatrixXd& b2, const Eigen::MatrixXd& c,
                                    const Eigen::MatrixXd& d, const QsrBlock& qsr);

/// Closed loop under u_sec = K y: (A + B1 H + B1 K C, B2 + B1 K D).
Eigen::MatrixXd closed_loop_a(const LinearMode& mode, const Eigen::MatrixXd& k);
Eigen::MatrixXd closed_loop_b2(const LinearMode& mode, const Eigen::MatrixXd& k);

struct ModeGains {
  std::uint32_t index = 0;
  Eigen::MatrixXd u;
  Eigen::MatrixXd v;
  Eigen::MatrixXd k;
};

enum class SynthesisMethod { kDirect, kAlternating };

struct SynthesisResult {
  Eigen::MatrixXd p;
  std::vector<ModeGains> modes;
  QsrSpec qsr;
  /// True only when the direct method met every margin and equality.
  bool certified = false;
  SynthesisMethod method = SynthesisMethod::kDirect;
  double margin = 0.0;
  double eq_residual = 0.0;
  double r_scale = 1.0;
  int attempts = 0;
  int solver_iterations = 0;
  std::string message;

  const ModeGains& gains(std::uint32_t index) const;
};

struct SynthesisOptions {
  SolverOptions solver;
  double v_condition_cap = 1e8;
  /// Outer rounds of the alternating method.
  int alternating_rounds = 8;
  /// Alternating method: spectral-norm bound on every K_j and the condition
  /// cap on P (I <= P <= storage_cap I).
  double gain_norm_bound = 1.0;
  double storage_cap = 1e3;
  /// Alternating method: deflated margin sought by each sub-step before it stops.
  double alternating_target = 1.0;
  /// Alternating method: per sub-step solver budgets, and the smallest
  /// per-round gain in worst margin below which the rounds stop.
  int alternating_projection_iterations = 100;
  int alternating_newton_iterations = 40;
  double alternating_stall = 1e-3;
};

/// Solves the synthesis LMIs for all modes with one shared P. The equality
/// P B1_j = B1_j V_j is enforced exactly by restricting P to the subspace
/// where every P B1_j lies in range(B1_j); then V_j = pinv(B1_j) P B1_j.
/// Gains are K_j = V_j^-1 U_j. Throws NumericError if some B1_j is column-rank
/// deficient or a V_j exceeds the condition cap. An unsuccessful search
/// returns the best attempt with certified = false.
SynthesisResult synthesize(const std::vector<LinearMode>& modes, const QsrSpec& qsr,
                           const SynthesisOptions& options = {});

/// Symmetric basis (Frobenius orthonormal before restriction) of storage
/// matrices P with P v in the span of the gain-invariant left null vectors of
/// every mode that has neutral directions v, so x'Px never couples a neutral
/// direction to the rest of the closed loop. Modes that cannot be decoupled
/// are listed in `skipped`.
std::vector<Eigen::MatrixXd> decoupled_storage_basis(const std::vector<LinearMode>& modes,
                                                     std::vector<std::uint32_t>& skipped);

/// Uncertified fallback: alternates an LMI in P for fixed gains with per-mode
/// LMIs in K_j for fixed P, on the closed-loop dissipativity blocks restricted
/// to the complement of each mode's structurally neutral directions. P ranges
/// over decoupled_storage_basis and every K_j over the spectral-norm ball of
/// radius gain_norm_bound. With auto_scale_r the top of the doubling ladder,
/// R * 2^max_doublings, is used.
SynthesisResult synthesize_alternating(const std::vector<LinearMode>& modes, const QsrSpec& qsr,
                                       const SynthesisOptions& options = {});

/// The direct method, then the alternating method if no certificate was found.
SynthesisResult synthesize_with_fallback(const std::vector<LinearMode>& modes, const QsrSpec& qsr,
                                         const SynthesisOptions& options = {});

struct ModeCertificate {
  std::uint32_t index = 0;
  double block_min_eig = 0.0;
  double schur_min_eig = 0.0;
  bool verdicts_agree = true;
  /// Smallest eigenvalue of the block restricted to the non-neutral directions.
  double deflated_min_eig = 0.0;
  double eq_residual = 0.0;
  double gain_residual = 0.0;
  /// Largest real part of the closed-loop eigenvalues.
  double spectral_abscissa = 0.0;
};

struct CertificateReport {
  double p_min_eig = 0.0;
  double min_block_eig = 0.0;
  double max_eq_residual = 0.0;
  double max_gain_residual = 0.0;
  bool all_agree = true;
  bool passed = false;
  std::vector<ModeCertificate> modes;
};

/// Recomputes every closed-loop dissipativity block in both forms.
/// Passes iff P >= margin, every block >= margin, every equality residual
/// <= eq_tol and the two forms agree (positive definiteness judged at agree_tol).
CertificateReport verify_certificate(const SynthesisResult& result,
                                     const std::vector<LinearMode>& modes, double margin = 1e-6,
                                     double eq_tol = 1e-8, double agree_tol = 1e-9);

/// Gains document: P, per-mode K (and U, V, QSR), diagnostics.
std::string gains_to_json(const SynthesisResult& result, int indent = 2);
SynthesisResult parse_gains(const std::string& text);
SynthesisResult load_gains(const std::filesystem::path& path);

std::string to_string(SynthesisMethod method);

}  // namespace mafd
