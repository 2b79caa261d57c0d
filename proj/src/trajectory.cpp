#include "tdstab/trajectory.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace tdstab {

namespace {

double shape_value(const TrajectorySegment& seg, double t) {
  return std::visit(
      [&](const auto& s) -> double {
        using S = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<S, ConstantShape>) {
          return s.value;
        } else if constexpr (std::is_same_v<S, LinearShape>) {
          return s.start + s.slope * (t - seg.begin);
        } else {
          return s.offset + s.amplitude * std::sin(s.omega * t + s.phase);
        }
      },
      seg.shape);
}

double shape_slope(const TrajectorySegment& seg, double t) {
  return std::visit(
      [&](const auto& s) -> double {
        using S = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<S, ConstantShape>) {
          return 0.0;
        } else if constexpr (std::is_same_v<S, LinearShape>) {
          return s.slope;
        } else {
          return s.amplitude * s.omega * std::cos(s.omega * t + s.phase);
        }
      },
      seg.shape);
}

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

double log_uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::exp(uniform(rng, std::log(lo), std::log(hi)));
}

bool coin(std::mt19937_64& rng) { return std::bernoulli_distribution(0.5)(rng); }

}  // namespace

DelayTrajectory::DelayTrajectory(std::vector<TrajectorySegment> segments, double horizon, double declared_mu,
                                 DelayCase declared_case, DerivativeBound declared_p, std::string generator)
    : segments_(std::move(segments)),
      horizon_(horizon),
      declared_mu_(declared_mu),
      declared_case_(declared_case),
      declared_p_(std::move(declared_p)),
      generator_(std::move(generator)) {
  if (!(horizon_ > 0.0)) throw Error(ErrorKind::invalid_input, "trajectory horizon must be positive");
  if (segments_.empty()) throw Error(ErrorKind::invalid_input, "trajectory needs at least one segment");
  if (std::abs(segments_.front().begin) > 1e-12) {
    throw Error(ErrorKind::invalid_input, "trajectory must start at t = 0");
  }
  for (std::size_t i = 0; i < segments_.size(); ++i) {
    const auto& s = segments_[i];
    if (!(s.end > s.begin)) throw Error(ErrorKind::invalid_input, "trajectory segment has non-positive length");
    if (i + 1 < segments_.size() && std::abs(segments_[i + 1].begin - s.end) > 1e-12) {
      throw Error(ErrorKind::invalid_input, "trajectory segments must be contiguous");
    }
  }
  if (segments_.back().end < horizon_ - 1e-9) {
    throw Error(ErrorKind::invalid_input, "trajectory segments do not cover the horizon");
  }
  check_case_consistency(declared_case_, declared_p_);
}

const TrajectorySegment& DelayTrajectory::segment_at(double t) const {
  auto it = std::upper_bound(segments_.begin(), segments_.end(), t,
                             [](double v, const TrajectorySegment& s) { return v < s.begin; });
  if (it == segments_.begin()) return segments_.front();
  return *(it - 1);
}

double DelayTrajectory::eta(double t) const {
  const double clamped = std::clamp(t, 0.0, horizon_);
  const auto& seg = segment_at(clamped);
  return shape_value(seg, std::min(clamped, seg.end));
}

double DelayTrajectory::slope(double t) const {
  if (t < 0.0 || t > horizon_) return 0.0;
  const auto& seg = segment_at(t);
  return shape_slope(seg, std::min(t, seg.end));
}

DelayTrajectory DelayTrajectory::shifted(double delta) const {
  if (!(delta >= 0.0)) throw Error(ErrorKind::invalid_input, "shift must be nonnegative");
  if (delta == 0.0) return *this;
  std::vector<TrajectorySegment> out;
  out.push_back({0.0, delta, ConstantShape{eta(0.0)}});
  for (const auto& s : segments_) {
    SegmentShape shape = s.shape;
    if (auto* sine = std::get_if<SineShape>(&shape)) sine->phase -= sine->omega * delta;
    out.push_back({s.begin + delta, s.end + delta, shape});
  }
  return DelayTrajectory(std::move(out), horizon_ + delta, declared_mu_, declared_case_, declared_p_,
                         generator_ + "+shift");
}

AdmissibilityReport check_admissible(const DelayTrajectory& traj, double grid_dt, double slope_tol) {
  AdmissibilityReport rep;
  const double mu = traj.declared_mu();
  const bool slope_bounded = traj.declared_case() != DelayCase::B;
  const double d = slope_bounded ? traj.declared_p().slope_limit() : 0.0;
  const auto steps = static_cast<Index>(std::ceil(traj.horizon() / grid_dt));
  double prev = traj.eta(0.0);
  for (Index i = 0; i <= steps; ++i) {
    const double t = std::min(static_cast<double>(i) * grid_dt, traj.horizon());
    const double e = traj.eta(t);
    rep.max_abs_eta = std::max(rep.max_abs_eta, std::abs(e));
    if (i > 0) {
      const double dt = t - std::min(static_cast<double>(i - 1) * grid_dt, traj.horizon());
      if (dt > 0.0) rep.max_slope = std::max(rep.max_slope, (e - prev) / dt);
    }
    rep.max_slope = std::max(rep.max_slope, traj.slope(t));
    prev = e;
  }
  if (rep.max_abs_eta > mu * (1.0 + 1e-12) + 1e-15) {
    rep.admissible = false;
    rep.reason = "|eta| exceeds mu";
  } else if (slope_bounded && rep.max_slope > d + slope_tol) {
    rep.admissible = false;
    rep.reason = "eta slope exceeds 1 + p";
  }
  return rep;
}

DelayTrajectory constant_trajectory(double value, double horizon, const DelayUncertainty& unc) {
  return DelayTrajectory({{0.0, horizon, ConstantShape{value}}}, horizon, unc.mu(), unc.kind(), unc.p(), "constant");
}

DelayTrajectory sine_trajectory(double amplitude, double omega, double phase, double horizon,
                                const DelayUncertainty& unc) {
  return DelayTrajectory({{0.0, horizon, SineShape{0.0, amplitude, omega, phase}}}, horizon, unc.mu(), unc.kind(),
                         unc.p(), "sine");
}

DelayTrajectory sawtooth_trajectory(double up_slope, double down_slope, double start, bool rising, double horizon,
                                    const DelayUncertainty& unc) {
  const double mu = unc.mu();
  if (mu == 0.0) return constant_trajectory(0.0, horizon, unc);
  if (!(down_slope > 0.0) || up_slope < 0.0) {
    throw Error(ErrorKind::invalid_input, "sawtooth slopes must be positive");
  }
  std::vector<TrajectorySegment> segs;
  double t = 0.0;
  double level = std::clamp(start, -mu, mu);
  if (up_slope == 0.0) rising = false;
  while (t < horizon) {
    const double target = rising ? mu : -mu;
    const double rate = rising ? up_slope : -down_slope;
    const double span = (target - level) / rate;
    if (span <= 0.0) {
      if (!rising && up_slope == 0.0) break;
      rising = !rising;
      continue;
    }
    const double end = std::min(t + span, horizon);
    segs.push_back({t, end, LinearShape{level, rate}});
    level = std::clamp(level + rate * (end - t), -mu, mu);
    t = end;
    if (!rising && up_slope == 0.0) break;
    rising = !rising;
  }
  if (t < horizon) segs.push_back({t, horizon, ConstantShape{level}});
  return DelayTrajectory(std::move(segs), horizon, mu, unc.kind(), unc.p(), "sawtooth");
}

DelayTrajectory switching_trajectory(const std::vector<double>& switch_times, const std::vector<double>& levels,
                                     double horizon, const DelayUncertainty& unc) {
  if (levels.size() != switch_times.size() + 1) {
    throw Error(ErrorKind::invalid_input, "switching trajectory needs one more level than switch times");
  }
  std::vector<TrajectorySegment> segs;
  double t = 0.0;
  for (std::size_t i = 0; i < levels.size(); ++i) {
    const double end = i < switch_times.size() ? std::min(switch_times[i], horizon) : horizon;
    if (end > t) {
      segs.push_back({t, end, ConstantShape{levels[i]}});
      t = end;
    }
    if (t >= horizon) break;
  }
  return DelayTrajectory(std::move(segs), horizon, unc.mu(), unc.kind(), unc.p(), "switching");
}

DelayTrajectory random_trajectory(const DelayUncertainty& unc, double horizon, std::mt19937_64& rng) {
  const double mu = unc.mu();
  if (mu == 0.0) return constant_trajectory(0.0, horizon, unc);
  const bool fast = unc.kind() == DelayCase::B;
  const double d = fast ? 0.0 : unc.p().slope_limit();
  const int kinds = fast ? 4 : 3;
  const int kind = std::uniform_int_distribution<int>(0, kinds - 1)(rng);

  switch (kind) {
    case 0: {
      const double v = coin(rng) ? (coin(rng) ? mu : -mu) : uniform(rng, -mu, mu);
      return constant_trajectory(v, horizon, unc);
    }
    case 1: {
      const double amp = coin(rng) ? mu : uniform(rng, 0.1 * mu, mu);
      double omega = 0.0;
      if (fast) {
        omega = log_uniform(rng, 0.05, 200.0) / mu;
      } else {
        if (d == 0.0) return constant_trajectory(coin(rng) ? mu : -mu, horizon, unc);
        omega = (coin(rng) ? 1.0 : uniform(rng, 0.05, 1.0)) * d / amp;
      }
      return sine_trajectory(amp, omega, uniform(rng, 0.0, 2.0 * std::numbers::pi), horizon, unc);
    }
    case 2: {
      double up = 0.0;
      double down = 0.0;
      if (fast) {
        up = log_uniform(rng, 0.1, 200.0);
        down = log_uniform(rng, 0.1, 200.0);
      } else {
        up = coin(rng) ? d : uniform(rng, 0.0, d);
        // Down-slopes are unconstrained by the class; capped at 10 d for sanity.
        const double cap = 10.0 * std::max(d, 0.1);
        down = coin(rng) ? cap : uniform(rng, 0.05 * cap, cap);
      }
      return sawtooth_trajectory(up, down, uniform(rng, -mu, mu), coin(rng), horizon, unc);
    }
    default: {
      std::vector<double> times;
      std::vector<double> levels;
      const double mean_gap = log_uniform(rng, 0.05, 4.0) * mu;
      std::exponential_distribution<double> gap(1.0 / mean_gap);
      const bool extreme = coin(rng);
      auto level = [&] { return extreme ? (coin(rng) ? mu : -mu) : uniform(rng, -mu, mu); };
      levels.push_back(level());
      for (double t = gap(rng); t < horizon && times.size() < 4096; t += gap(rng)) {
        times.push_back(t);
        levels.push_back(level());
      }
      return switching_trajectory(times, levels, horizon, unc);
    }
  }
}

std::mt19937_64 trial_rng(std::uint64_t seed, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32), 0x7d5u};
  return std::mt19937_64(seq);
}

Signal band_limited_signal(std::mt19937_64& rng, Index dim, double dt, Index count, double t0, double active_begin,
                           double active_end, const BandLimitedOptions& opts) {
  if (!(active_end > active_begin)) throw Error(ErrorKind::invalid_input, "empty active window");
  const double span = active_end - active_begin;
  const double ramp = opts.ramp > 0.0 ? std::min(opts.ramp, 0.5 * span) : 0.1 * span;
  const double f_hi = 1.0 / (4.0 * dt);
  const double f_lo = std::min(0.25 / span, 0.5 * f_hi);

  struct Tone {
    double amp, omega, phase;
  };
  std::vector<std::vector<Tone>> tones(static_cast<std::size_t>(dim));
  for (auto& comp : tones) {
    const int k = std::uniform_int_distribution<int>(1, std::max(1, opts.max_tones))(rng);
    for (int i = 0; i < k; ++i) {
      const double amp = uniform(rng, 0.1, 1.0) * (coin(rng) ? 1.0 : -1.0);
      const double f = log_uniform(rng, f_lo, f_hi);
      comp.push_back({amp, 2.0 * std::numbers::pi * f, uniform(rng, 0.0, 2.0 * std::numbers::pi)});
    }
  }

  Matrix samples = Matrix::Zero(dim, count);
  for (Index i = 0; i < count; ++i) {
    const double t = t0 + static_cast<double>(i) * dt;
    if (t <= active_begin || t >= active_end) continue;
    double w = 1.0;
    const double from_start = t - active_begin;
    const double to_end = active_end - t;
    if (from_start < ramp) w = std::pow(std::sin(0.5 * std::numbers::pi * from_start / ramp), 2);
    if (to_end < ramp) w = std::min(w, std::pow(std::sin(0.5 * std::numbers::pi * to_end / ramp), 2));
    for (Index c = 0; c < dim; ++c) {
      double v = 0.0;
      for (const auto& tone : tones[static_cast<std::size_t>(c)]) v += tone.amp * std::sin(tone.omega * t + tone.phase);
      samples(c, i) = w * v;
    }
  }
  return Signal(dt, std::move(samples), t0);
}

}  // namespace tdstab
