#pragma once

// Descriptor-form LMI for robust stability under the delay uncertainty,
// a small dense feasibility solver (smoothed maximum-eigenvalue descent),
// and bisection over mu.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tdstab/core.hpp"

namespace tdstab {

/// Decision matrices. Packed ordering: upper triangles (row-major) of P1,
/// S, R, Ra, then P2, P3, Y1, Y2, T column-major. Length
/// 4 n(n+1)/2 + 5 n^2.
struct LmiVariables {
  Matrix P1, P2, P3, S, Y1, Y2, T, R, Ra;

  static LmiVariables zeros(Index n);
  static Index packed_size(Index n);
  static LmiVariables unpack(const Vector& x, Index n);
  Vector pack() const;
  Index dim() const noexcept { return P1.rows(); }
};

struct AssembledLmi {
  Matrix main;  ///< 6n x 6n, required negative definite
  Matrix P1, S, Ra;  ///< required positive definite
};

/// Row alignment of the F Ra column: it couples to the derivative
/// (second) half of the state rows.
inline constexpr const char* kLmiAlignment = "derivative-row";

/// Builds
///   [ Gamma  c_u  c_F ]
///   [  *    -Ra    0  ]
///   [  *     *   -F Ra]
/// with Gamma the 4n x 4n descriptor block, c_u = [mu P2'A1; mu P3'A1; 0; 0]
/// and c_F = [0; F Ra; 0; 0].
AssembledLmi assemble_lmi(const LtiDelaySystem& sys, double mu, double f, const LmiVariables& vars);

enum class Sense { negative, positive };

/// Symmetric matrix affine in the decision vector:
/// B(x) = constant + sum_j x_j basis_j. basis holds vec(basis_j) as columns.
struct AffineBlock {
  std::string name;
  Sense sense = Sense::negative;
  Matrix constant;
  Matrix basis;

  Index size() const noexcept { return constant.rows(); }
  Matrix evaluate(const Vector& x) const;
};

struct LmiProblem {
  std::vector<AffineBlock> blocks;
  Index num_vars = 0;
  /// Optional normalization a'x = 1 (homogeneous problems are otherwise
  /// unbounded below).
  std::optional<Vector> normalization;
  double eps0 = 1e-6;
};

/// The stability LMI at (mu, f) with normalization tr(P1)+tr(S)+tr(Ra) = 1.
LmiProblem build_stability_problem(const LtiDelaySystem& sys, double mu, double f);

/// max over blocks of lambda_max(B) (negative blocks) and
/// lambda_max(eps0 I - B) (positive blocks).
double lmi_margin(const LmiProblem& problem, const Vector& x);

enum class Verdict { feasible, infeasible, inconclusive };
std::string_view to_string(Verdict v);

struct SolverOptions {
  int max_iters = 20000;       ///< quasi-Newton iterations over all stages and starts
  int starts = 5;
  std::uint64_t seed = 1;
  double feasible_below = -1e-7;
  /// Stop as soon as a strictly feasible point is found instead of
  /// driving the margin to its minimum.
  bool stop_when_feasible = false;
  double stop_margin = -1e-5;
};

struct FeasibilityCertificate {
  Verdict verdict = Verdict::inconclusive;
  double margin = 0.0;  ///< achieved t; negative means strictly feasible
  Vector x;
  int iterations = 0;
  int starts_used = 0;
  bool converged = false;
};

FeasibilityCertificate feasibility_solve(const LmiProblem& problem, const SolverOptions& opts = {},
                                         const std::optional<Vector>& warm_start = std::nullopt);

struct MarginReport {
  std::optional<double> d;  ///< 1 + p, absent for case B
  std::string p_label;
  double f_value = 0.0;
  double mu_max = 0.0;
  double tol = 0.0;
  int bisection_steps = 0;
  int inconclusive = 0;
  int solver_iterations = 0;
  double final_margin = 0.0;
  bool nominal_feasible = false;
  std::string alignment = kLmiAlignment;
};

/// Largest verified-feasible mu in [0, h], to bracket width tol_mu.
MarginReport mu_max_bisect(const LtiDelaySystem& sys, const DerivativeBound& p, double tol_mu = 1e-3,
                           const SolverOptions& opts = {});

std::string to_json(const MarginReport& report);

}  // namespace tdstab
