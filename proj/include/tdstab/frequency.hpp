#pragma once

// Frequency-domain analysis: nominal stability of the constant-delay
// system, the loop transfer G(s) = sqrt(F) s (sI - A0 - A1 e^{-hs})^{-1} mu A1,
// its H-infinity norm, and the scaled small-gain test with the margin
// k / sqrt(F(p)).

#include <limits>
#include <string>
#include <vector>

#include "tdstab/core.hpp"

namespace tdstab {

/// sI - A0 - A1 e^{-hs}
CMatrix char_matrix(Complex s, const LtiDelaySystem& sys);

struct RootEstimate {
  bool stable = false;
  Complex rightmost;            ///< refined rightmost characteristic root (Im >= 0)
  Complex discretization;       ///< unrefined estimate from the collocation spectrum
  bool newton_converged = false;
  int nodes = 0;                ///< collocation nodes used
};

struct NominalOptions {
  int initial_nodes = 20;
  int max_nodes = 320;
  double stability_tol = 1e-9;
  double node_convergence = 1e-8;
};

/// Rightmost root of det(char_matrix(s)) = 0 by Chebyshev collocation of
/// the solution operator's generator on [-h, 0], refined by Newton on the
/// quasipolynomial. The node count doubles until the estimate settles.
RootEstimate nominal_stable(const LtiDelaySystem& sys, const NominalOptions& opts = {});

/// Newton iteration on det(char_matrix(s)) = 0 from s0.
/// Returns false when it fails to converge.
bool refine_root(const LtiDelaySystem& sys, Complex& s, int max_iters = 60);

enum class ScalingKind { identity, diagonal, general };

class ScalingMatrix {
 public:
  static ScalingMatrix identity(Index n);
  static ScalingMatrix diagonal(const Vector& entries);
  static ScalingMatrix general(Matrix x);

  const Matrix& matrix() const noexcept { return x_; }
  const Matrix& inverse() const noexcept { return x_inv_; }
  ScalingKind kind() const noexcept { return kind_; }

 private:
  ScalingMatrix(Matrix x, ScalingKind kind);
  Matrix x_;
  Matrix x_inv_;
  ScalingKind kind_;
};

/// sqrt(f) (i omega) char_matrix(i omega)^{-1} mu A1.
/// Throws Error(singular) when a characteristic root sits on the axis.
CMatrix transfer_G(double omega, const LtiDelaySystem& sys, double mu, double f);

/// ||X G(i omega) X^{-1}||
double scaled_gain(double omega, const LtiDelaySystem& sys, double mu, double f, const ScalingMatrix& x);

struct FrequencySweep {
  std::vector<double> omegas;
  std::vector<double> gains;
  bool refined = false;
  double asymptote = 0.0;  ///< limit of the gain as omega -> inf
  double peak_omega = 0.0;
};

struct SweepOptions {
  int seed_points = 600;  ///< log-spaced seed grid size (>= 400)
  double rel_bracket = 1e-4;
};

struct HinfResult {
  double norm = 0.0;
  FrequencySweep sweep;
};

/// Adaptive sweep over [0, Omega_max] with golden-section refinement of
/// every local maximum, combined with the analytic omega -> inf limit.
HinfResult hinf_norm(const LtiDelaySystem& sys, double mu, double f, const ScalingMatrix& scaling,
                     const SweepOptions& opts = {});

/// 1 / ||s (sI - A0 - A1 e^{-hs})^{-1} A1||_inf; +inf when A1 = 0.
double k_margin(const LtiDelaySystem& sys, const SweepOptions& opts = {});

/// k / sqrt(F(p)): the uncertainty radius certified by the unscaled
/// small-gain test.
double freq_margin(const LtiDelaySystem& sys, const DerivativeBound& p, const SweepOptions& opts = {});
double freq_margin_from_k(double k, const DerivativeBound& p);

/// Reference multiplier from the earlier bound F = 2 for every p > 0.
inline constexpr double kPriorMultiplier = 0.70710678118654752;

enum class ScalingSearch { identity, diagonal };

struct SmallGainResult {
  bool stable = false;  ///< true certifies stability; false is inconclusive
  double best_norm = 0.0;
  ScalingMatrix scaling = ScalingMatrix::identity(1);
  int iterations = 0;
};

/// Scaled small-gain test. Diagonal search is coordinate descent over the
/// log of the diagonal entries (the first is pinned to 1).
SmallGainResult small_gain_check(const LtiDelaySystem& sys, const DelayUncertainty& unc, ScalingSearch search,
                                 const SweepOptions& opts = {});

std::string sweep_csv(const FrequencySweep& sweep);

}  // namespace tdstab
