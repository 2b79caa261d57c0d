#pragma once

// Fixed-step integration of x'(t) = A0 x(t) + A1 x(t - h - eta(t)) for a
// concrete delay trajectory, and a Monte Carlo decay probe over mu.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "tdstab/core.hpp"
#include "tdstab/trajectory.hpp"

namespace tdstab {

struct DdeRun {
  Signal trajectory_out;  ///< x on [t_start, t_start + T] (truncated at blow-up)
  Vector tau;             ///< tau at each output sample
  double dt = 0.0;
  double T = 0.0;
  double decay_estimate = 0.0;  ///< least-squares slope of log||x|| over the last half
  bool diverged = false;
  double blowup_time = 0.0;
  std::string diagnostic;
};

/// Classical RK4 with 4-point Lagrange interpolation of the stored past at
/// t - tau(t). Interpolation stencils never straddle t_start, where the
/// history and the solution meet with a derivative jump.
///
/// The run covers [t_start, t_start + T]; history must cover
/// [t_start - h - mu, t_start] (mu = traj.declared_mu()) and is resampled
/// onto the run grid. Requires dt <= h / 20.
DdeRun dde_integrate(const LtiDelaySystem& sys, const DelayTrajectory& traj, const Signal& history, double dt,
                     double T, double t_start = 0.0);

/// Same with the history given as a function of t <= t_start.
using HistoryFn = std::function<Vector(double)>;
DdeRun dde_integrate(const LtiDelaySystem& sys, const DelayTrajectory& traj, const HistoryFn& history, double dt,
                     double T, double t_start = 0.0);

/// Least-squares slope of log||x(t)|| over samples with t >= from.
double decay_slope(const Signal& x, double from);

/// Random smooth history on [-h - mu, 0], nonzero at 0.
Signal random_history(std::mt19937_64& rng, Index dim, double h, double mu);

struct ProbePoint {
  double mu = 0.0;
  int trials = 0;
  int decayed = 0;
  int diverged = 0;
  double worst_rate = 0.0;
};

struct ProbeOptions {
  double dt = 0.0;  ///< 0 picks h / 100
  double T = 0.0;   ///< 0 picks 50 h
};

/// For each mu, integrates trials_per_mu random admissible (trajectory,
/// history) pairs of the uncertainty's class. Decay in every trial is
/// evidence only; a divergent run is a counterexample at that mu.
std::vector<ProbePoint> margin_probe(const LtiDelaySystem& sys, const DelayUncertainty& unc,
                                     const std::vector<double>& mu_grid, int trials_per_mu, std::uint64_t seed,
                                     const ProbeOptions& opts = {});

/// "t,x1,...,xn,tau"
std::string run_csv(const DdeRun& run);
std::string probe_json(const std::vector<ProbePoint>& points);

}  // namespace tdstab
