#pragma once

// The L2-gain bound of the delay integral operator
//   (Delta y)(t) = int_{t-h-eta(t)}^{t-h} y(s) ds,   y = 0 on (-inf, 0],
// which satisfies ||Delta y||^2 <= mu^2 F(p) ||y||^2, together with the
// worst-case signal constructions and the randomized and kernel-based
// numeric oracles for that bound.

#include <cstdint>
#include <optional>
#include <string>
#include <utility>

#include "tdstab/core.hpp"
#include "tdstab/trajectory.hpp"

namespace tdstab {

/// F(p) as an exact rational: 1 on [-1, 0), (2p+1)/(p+1) on [0, 1),
/// (7p-1)/(4p) on [1, inf).
Rational f_of_p_exact(const Rational& p);

/// F(p) on the extended half-line; F(inf) = 7/4. Uses the exact branch
/// formulas when p is a short decimal.
double f_of_p(const DerivativeBound& p);
double f_of_p(double p);

/// Exact F for bounds that carry a rational (always for p = inf).
std::optional<Rational> f_of_p_rational(const DerivativeBound& p);

/// z(t) = int_{t-h-eta(t)}^{t-h} y(s) ds on y's grid, integrating the
/// piecewise-linear interpolant of y exactly (y = 0 before its first
/// sample and after its last).
Signal delta_apply(const Signal& y, const DelayTrajectory& traj, double h);

/// ||Delta y||^2 / ||y||^2, reported as 0 for the zero signal.
double gain_ratio(const Signal& y, const DelayTrajectory& traj, double h);

struct SignalPair {
  Signal y;
  DelayTrajectory traj;
};

/// Step y = 1 on [0, theta] against the constant delay eta = mu. The grid
/// extends past theta far enough to hold the whole response for nominal
/// delays up to tail_h.
SignalPair remark1_pair(double theta, double mu, double dt, double tail_h = 0.0);

/// Triangle y (slope +1 on [0, mu], -1 on [mu, 2 mu]) against eta = -mu
/// switching to +mu at t = h + mu. Admissible for case B only; attains
/// ||Delta y||^2 = (3/2) mu^2 ||y||^2.
SignalPair remark3_pair(double mu, double h, double dt);

struct Counterexample {
  std::uint64_t trial;
  std::string generator;
  double ratio;
  double signal_norm_sq;
};

struct BoundReport {
  DerivativeBound p = DerivativeBound::unbounded();
  double f_value = 0.0;
  double mu = 0.0;
  double gain_ratio_observed = 0.0;  ///< sup over trials of ||Delta y||^2 / ||y||^2
  double bound_value = 0.0;          ///< mu^2 F(p)
  double tolerance = 0.0;            ///< relative quadrature allowance 5 dt / mu
  std::uint64_t trials = 0;
  std::uint64_t seed = 0;
  std::optional<Counterexample> counterexample;
};

struct EmpiricalGainOptions {
  double dt = 2e-3;
  double active_span = 8.0;    ///< support length of the random test signals, in units of mu
  bool seed_extremal = true;   ///< trial 0 uses the known extremal pair of the class
};

/// Randomized check of the operator bound over admissible (y, eta) pairs.
/// Trials are independent and seeded from (seed, trial index).
BoundReport empirical_gain(double h, const DelayUncertainty& unc, std::uint64_t trials, std::uint64_t seed,
                           const EmpiricalGainOptions& opts = {});

/// phi(t, s) = 1 iff s lies between t - h - eta(t) and t - h (closed).
bool kernel_indicator(double t, double s, const DelayTrajectory& traj, double h);

/// Row integrals of the two Gram kernels of Delta, restricted to t in
/// [0, horizon] and s >= 0. Either supremum bounds ||Delta||^2 (Schur
/// test on a symmetric nonnegative kernel).
///
/// kernel_K is the area of D(t) = {(t', s) : phi(t', s) = 1, phi(t, s) = 1},
///   K(t) = int phi(t, s) L(s) ds,  L(s) = |{t' : phi(t', s) = 1}|,
/// which never exceeds (7/4) mu^2 for any admissible eta.
///
/// kernel_K_adjoint is int phi(t, s) |eta(t)| dt, the row integral of
/// k(s1, s2) = int phi(t, s1) phi(t, s2) dt. It can reach 2 mu^2.
class KernelOracle {
 public:
  KernelOracle(const DelayTrajectory& traj, double h, double quad_dt = 1e-3);

  double K(double t) const;
  double K_adjoint(double s) const;
  double L(double s) const;

  /// max of K(t) over t in [0, horizon] with spacing step.
  double sup_K(double step) const;
  double sup_K_adjoint(double step) const;

 private:
  double cumulative_L(double s) const;

  const DelayTrajectory* traj_;
  double h_;
  double dq_;
  double s_lo_;
  Vector l_;        // L at cell midpoints s_lo_ + (k + 1/2) dq_
  Vector l_cum_;    // prefix integrals of L at cell edges
};

double kernel_K(double t, const DelayTrajectory& traj, double h, double quad_dt = 1e-3);
double kernel_K_adjoint(double s, const DelayTrajectory& traj, double h, double quad_dt = 1e-3);

std::string to_json(const BoundReport& report);

}  // namespace tdstab
