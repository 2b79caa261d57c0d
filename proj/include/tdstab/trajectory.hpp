#pragma once

// Piecewise-analytic delay perturbations eta(t) and the generators that
// produce admissible ones for each delay class, plus the band-limited test
// signals shared by the operator oracle and the simulator.

#include <random>
#include <string>
#include <variant>
#include <vector>

#include "tdstab/core.hpp"

namespace tdstab {

struct ConstantShape {
  double value;
};

/// eta(t) = start + slope * (t - begin)
struct LinearShape {
  double start;
  double slope;
};

/// eta(t) = offset + amplitude * sin(omega * t + phase)
struct SineShape {
  double offset;
  double amplitude;
  double omega;
  double phase;
};

using SegmentShape = std::variant<ConstantShape, LinearShape, SineShape>;

struct TrajectorySegment {
  double begin;
  double end;
  SegmentShape shape;
};

class DelayTrajectory {
 public:
  /// Segments must be contiguous and cover [0, horizon]. eta is right
  /// continuous at breakpoints and is held constant outside the horizon.
  DelayTrajectory(std::vector<TrajectorySegment> segments, double horizon, double declared_mu,
                  DelayCase declared_case, DerivativeBound declared_p, std::string generator);

  double eta(double t) const;
  /// Analytic derivative inside the segment containing t (right derivative
  /// at breakpoints, zero outside the horizon).
  double slope(double t) const;
  double tau(double t, double h) const { return h + eta(t); }

  double horizon() const noexcept { return horizon_; }
  double declared_mu() const noexcept { return declared_mu_; }
  DelayCase declared_case() const noexcept { return declared_case_; }
  const DerivativeBound& declared_p() const noexcept { return declared_p_; }
  const std::string& generator() const noexcept { return generator_; }
  const std::vector<TrajectorySegment>& segments() const noexcept { return segments_; }

  /// Copy shifted right by delta: the result at t equals this at t - delta.
  DelayTrajectory shifted(double delta) const;

 private:
  const TrajectorySegment& segment_at(double t) const;

  std::vector<TrajectorySegment> segments_;
  double horizon_;
  double declared_mu_;
  DelayCase declared_case_;
  DerivativeBound declared_p_;
  std::string generator_;
};

struct AdmissibilityReport {
  bool admissible = true;
  double max_abs_eta = 0.0;
  double max_slope = 0.0;
  std::string reason;
};

/// Checks |eta| <= mu on a grid of spacing grid_dt and, for cases A and C,
/// that one-sided difference quotients and analytic slopes do not exceed
/// 1 + p + slope_tol. Only the upper slope is bounded.
AdmissibilityReport check_admissible(const DelayTrajectory& traj, double grid_dt, double slope_tol = 1e-9);

// Generators. Each returns a trajectory declared with the given uncertainty.

DelayTrajectory constant_trajectory(double value, double horizon, const DelayUncertainty& unc);

/// eta = amplitude * sin(omega t + phase); for cases A and C the caller
/// must keep amplitude * omega <= 1 + p.
DelayTrajectory sine_trajectory(double amplitude, double omega, double phase, double horizon,
                                const DelayUncertainty& unc);

/// Triangle wave between -mu and +mu rising with up_slope and falling with
/// -down_slope, starting at eta(0) = start moving in the given direction.
DelayTrajectory sawtooth_trajectory(double up_slope, double down_slope, double start, bool rising,
                                    double horizon, const DelayUncertainty& unc);

/// Piecewise-constant eta switching at the given instants (case B only).
DelayTrajectory switching_trajectory(const std::vector<double>& switch_times, const std::vector<double>& levels,
                                     double horizon, const DelayUncertainty& unc);

/// Draws one admissible trajectory of the uncertainty's class: constant,
/// sinusoid, sawtooth and (case B) switching shapes.
DelayTrajectory random_trajectory(const DelayUncertainty& unc, double horizon, std::mt19937_64& rng);

/// Per-trial generator seeded deterministically from (seed, index).
std::mt19937_64 trial_rng(std::uint64_t seed, std::uint64_t index);

struct BandLimitedOptions {
  int max_tones = 8;
  double ramp = 0.0;  ///< onset/offset ramp length; 0 picks 10% of the active span
};

/// Sum of up to eight randomly weighted sinusoids with frequencies at most
/// 1/(4 dt) cycles per unit time, windowed so it vanishes at active_begin
/// and after active_end. Samples are on [t0, t0 + (count-1) dt].
Signal band_limited_signal(std::mt19937_64& rng, Index dim, double dt, Index count, double t0,
                           double active_begin, double active_end, const BandLimitedOptions& opts = {});

}  // namespace tdstab
