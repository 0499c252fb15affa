#pragma once

#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace mafd {

/// Symmetric PSD square root by spectral decomposition. Eigenvalues in
/// [-clamp, 0) are treated as zero. Throws ValidationError if `m` is not
/// symmetric (relative tolerance 1e-10) or has an eigenvalue below -clamp.
Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m, double clamp = 1e-10);

/// Smallest eigenvalue of the symmetric part of `m`.
double min_eigenvalue(const Eigen::MatrixXd& m);

/// Symmetric matrix-valued affine map F(z) = f0 + sum_k z[vars[k]] * coeffs[k].
/// Only the listed variables enter; all matrices must be symmetric and equal-sized.
struct AffineMatrix {
  Eigen::MatrixXd f0;
  std::vector<int> vars;
  std::vector<Eigen::MatrixXd> coeffs;

  int dim() const { return static_cast<int>(f0.rows()); }
  Eigen::MatrixXd evaluate(const Eigen::VectorXd& z) const;
};

/// Builds an AffineMatrix by probing `f` (assumed affine) at the origin and at
/// each unit vector in `support`. Coefficients with max-abs below `drop_tol`
/// are discarded. `f` receives a full-length variable vector.
AffineMatrix affine_from_function(int variable_count, const std::vector<int>& support,
                                  const std::function<Eigen::MatrixXd(const Eigen::VectorXd&)>& f,
                                  double drop_tol = 0.0);

/// Find z with F_i(z) >= margin * I for every constraint and eq_a z = eq_b.
struct LmiProblem {
  int variable_count = 0;
  std::vector<AffineMatrix> constraints;
  Eigen::MatrixXd eq_a;
  Eigen::VectorXd eq_b;
  std::vector<std::string> labels;  // optional, one per constraint

  void add(AffineMatrix constraint, std::string label = {});
  /// Throws ValidationError on inconsistent sizes, out-of-range variable
  /// indices or asymmetric coefficients.
  void validate() const;
};

struct SolverOptions {
  double margin = 1e-6;
  double eq_tol = 1e-8;
  int projection_iterations = 400;
  double relaxation = 1.6;
  bool barrier_refinement = true;
  int newton_iterations = 200;
  /// Box |z_k| <= variable_bound used by the barrier stage.
  double variable_bound = 1e6;
  /// Upper cap on the barrier stage's common slack.
  double slack_cap = 1.0;
  /// Starting point; empty means zero.
  Eigen::VectorXd initial;
};

enum class FeasibilityStatus { kFound, kNotFound };

/// Either an assignment meeting every margin, or the best assignment found.
/// kNotFound is a budget statement, not an infeasibility proof.
struct FeasibilityReport {
  FeasibilityStatus status = FeasibilityStatus::kNotFound;
  Eigen::VectorXd z;
  double min_margin = 0.0;
  std::vector<double> constraint_margins;
  double eq_residual = 0.0;
  int projection_iterations = 0;
  int newton_iterations = 0;
  std::string message;

  bool found() const { return status == FeasibilityStatus::kFound; }
};

/// Alternating projections with over-relaxation between the shifted PSD cones
/// and the affine parameterization, followed (optionally) by a log-barrier
/// Newton ascent on the common slack t in F_i(z) - t I >= 0.
FeasibilityReport solve_feasibility(const LmiProblem& problem, const SolverOptions& options = {});

/// Smallest eigenvalues of every constraint at z.
std::vector<double> constraint_margins(const LmiProblem& problem, const Eigen::VectorXd& z);

}  // namespace mafd
