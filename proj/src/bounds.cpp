#include "tdstab/bounds.hpp"

#include <algorithm>
#include <cmath>

#include "json.hpp"

namespace tdstab {

Rational f_of_p_exact(const Rational& p) {
  if (p < Rational(-1)) throw Error(ErrorKind::domain, "F(p) is defined for p >= -1");
  if (p < Rational(0)) return Rational(1);
  if (p < Rational(1)) return (Rational(2) * p + Rational(1)) / (p + Rational(1));
  return (Rational(7) * p - Rational(1)) / (Rational(4) * p);
}

std::optional<Rational> f_of_p_rational(const DerivativeBound& p) {
  if (p.is_unbounded()) return Rational(7, 4);
  if (auto exact = p.exact()) return f_of_p_exact(*exact);
  return std::nullopt;
}

double f_of_p(double p) {
  if (std::isnan(p) || p < -1.0) throw Error(ErrorKind::domain, "F(p) is defined for p >= -1");
  if (p < 0.0) return 1.0;
  if (p < 1.0) return (2.0 * p + 1.0) / (p + 1.0);
  if (std::isinf(p)) return 1.75;
  return (7.0 * p - 1.0) / (4.0 * p);
}

double f_of_p(const DerivativeBound& p) {
  if (auto exact = f_of_p_rational(p)) return boost::rational_cast<double>(*exact);
  return f_of_p(p.value());
}

namespace {

// Exact running integral of the piecewise-linear interpolant of y.
class RunningIntegral {
 public:
  explicit RunningIntegral(const Signal& y) : y_(y), cum_(y.dim(), y.size()) {
    cum_.col(0).setZero();
    for (Index k = 1; k < y.size(); ++k) {
      cum_.col(k) = cum_.col(k - 1) + 0.5 * y.dt() * (y.at(k - 1) + y.at(k));
    }
    lo_ = std::max(y.t0(), 0.0);
    base_ = raw(lo_);
  }

  // int_{max(t0, 0)}^{a} y
  Vector operator()(double a) const { return raw(std::clamp(a, lo_, y_.end_time())) - base_; }

 private:
  Vector raw(double a) const {
    const double dt = y_.dt();
    const double rel = (a - y_.t0()) / dt;
    auto k = static_cast<Index>(std::floor(rel));
    k = std::clamp<Index>(k, 0, y_.size() - 2);
    const double delta = a - y_.time(k);
    return cum_.col(k) + y_.at(k) * delta + (y_.at(k + 1) - y_.at(k)) * (delta * delta / (2.0 * dt));
  }

  const Signal& y_;
  Matrix cum_;
  double lo_ = 0.0;
  Vector base_;
};

}  // namespace

Signal delta_apply(const Signal& y, const DelayTrajectory& traj, double h) {
  if (traj.horizon() < y.end_time() - 1e-9 * std::max(1.0, y.end_time())) {
    throw Error(ErrorKind::invalid_input, "trajectory horizon does not cover the signal grid");
  }
  const RunningIntegral integral(y);
  Matrix z(y.dim(), y.size());
  for (Index i = 0; i < y.size(); ++i) {
    const double t = y.time(i);
    const double upper = t - h;
    const double lower = upper - traj.eta(t);
    z.col(i) = integral(upper) - integral(lower);
  }
  return Signal(y.dt(), std::move(z), y.t0());
}

double gain_ratio(const Signal& y, const DelayTrajectory& traj, double h) {
  const double ny = l2_norm_sq(y);
  if (ny == 0.0) return 0.0;
  return l2_norm_sq(delta_apply(y, traj, h)) / ny;
}

namespace {

Index grid_count(double end, double dt) { return static_cast<Index>(std::ceil(end / dt - 1e-9)) + 1; }

}  // namespace

SignalPair remark1_pair(double theta, double mu, double dt, double tail_h) {
  if (!(mu > 0.0) || !(theta > mu)) throw Error(ErrorKind::invalid_input, "remark1_pair needs theta > mu > 0");
  if (!(dt > 0.0)) throw Error(ErrorKind::invalid_input, "dt must be positive");
  const double end = theta + std::max(tail_h, mu) + 2.0 * mu + 4.0 * dt;
  const Index count = grid_count(end, dt);
  Vector v = Vector::Zero(count);
  for (Index i = 0; i < count; ++i) {
    if (static_cast<double>(i) * dt <= theta * (1.0 + 1e-12)) v(i) = 1.0;
  }
  Signal y = Signal::scalar(dt, v);
  const double horizon = y.end_time();
  // Constant eta = mu is admissible for every class; declare it as case C, p = 0.
  DelayTrajectory traj({{0.0, horizon, ConstantShape{mu}}}, horizon, mu, DelayCase::C,
                       DerivativeBound::finite(0.0), "remark1-constant");
  return {std::move(y), std::move(traj)};
}

SignalPair remark3_pair(double mu, double h, double dt) {
  if (!(mu > 0.0)) throw Error(ErrorKind::invalid_input, "remark3_pair needs mu > 0");
  if (h < mu) throw Error(ErrorKind::invalid_input, "remark3_pair needs h >= mu");
  if (!(dt > 0.0)) throw Error(ErrorKind::invalid_input, "dt must be positive");
  const double end = h + 4.0 * mu + 4.0 * dt;
  const Index count = grid_count(end, dt);
  Vector v = Vector::Zero(count);
  for (Index i = 0; i < count; ++i) {
    const double t = static_cast<double>(i) * dt;
    if (t <= mu) {
      v(i) = t;
    } else if (t <= 2.0 * mu) {
      v(i) = 2.0 * mu - t;
    }
  }
  Signal y = Signal::scalar(dt, v);
  const double horizon = y.end_time();
  const double jump = h + mu;
  DelayTrajectory traj({{0.0, jump, ConstantShape{-mu}}, {jump, horizon, ConstantShape{mu}}}, horizon, mu,
                       DelayCase::B, DerivativeBound::unbounded(), "remark3-switch");
  return {std::move(y), std::move(traj)};
}

BoundReport empirical_gain(double h, const DelayUncertainty& unc, std::uint64_t trials, std::uint64_t seed,
                           const EmpiricalGainOptions& opts) {
  if (trials < 1) throw Error(ErrorKind::invalid_input, "empirical_gain needs at least one trial");
  BoundReport rep;
  rep.p = unc.p();
  rep.f_value = f_of_p(unc.p());
  rep.mu = unc.mu();
  rep.bound_value = unc.mu() * unc.mu() * rep.f_value;
  rep.trials = trials;
  rep.seed = seed;
  const double mu = unc.mu();
  if (mu == 0.0) return rep;
  rep.tolerance = 5.0 * opts.dt / mu;

  const double active = std::max(opts.active_span * mu, 40.0 * opts.dt);
  const double end = active + h + 2.0 * mu + 4.0 * opts.dt;
  const Index count = grid_count(end, opts.dt);

  for (std::uint64_t trial = 0; trial < trials; ++trial) {
    double ratio = 0.0;
    double norm = 0.0;
    std::string generator;
    if (trial == 0 && opts.seed_extremal) {
      SignalPair pair = unc.kind() == DelayCase::B ? remark3_pair(mu, h, opts.dt)
                                                   : remark1_pair(active, mu, opts.dt, h);
      norm = l2_norm_sq(pair.y);
      ratio = gain_ratio(pair.y, pair.traj, h);
      generator = pair.traj.generator();
    } else {
      auto rng = trial_rng(seed, trial);
      const DelayTrajectory traj = random_trajectory(unc, (static_cast<double>(count) - 1.0) * opts.dt, rng);
      const Index dim = std::uniform_int_distribution<Index>(1, 2)(rng);
      const Signal y = band_limited_signal(rng, dim, opts.dt, count, 0.0, 0.0, active);
      norm = l2_norm_sq(y);
      ratio = gain_ratio(y, traj, h);
      generator = traj.generator();
    }
    rep.gain_ratio_observed = std::max(rep.gain_ratio_observed, ratio);
    if (ratio > rep.bound_value * (1.0 + rep.tolerance)) {
      if (!rep.counterexample || ratio > rep.counterexample->ratio) {
        rep.counterexample = Counterexample{trial, generator, ratio, norm};
      }
    }
  }
  return rep;
}

bool kernel_indicator(double t, double s, const DelayTrajectory& traj, double h) {
  return (t - h - s) * (t - h - traj.eta(t) - s) <= 0.0;
}

KernelOracle::KernelOracle(const DelayTrajectory& traj, double h, double quad_dt)
    : traj_(&traj), h_(h), dq_(quad_dt), s_lo_(0.0) {
  if (!(quad_dt > 0.0)) throw Error(ErrorKind::invalid_input, "quadrature step must be positive");
  const double mu = traj.declared_mu();
  const double s_hi = std::max(traj.horizon() - h + mu, s_lo_ + 2.0 * dq_);
  const auto cells = static_cast<Index>(std::ceil((s_hi - s_lo_) / dq_));
  l_ = Vector::Zero(cells);
  Vector diff = Vector::Zero(cells + 1);

  // L(s) = |{t' in [0, T] : phi(t', s) = 1}|: each t' cell of width dq adds
  // dq over its s-interval, with fractional coverage of the end cells.
  const auto t_cells = static_cast<Index>(std::ceil(traj.horizon() / dq_));
  for (Index j = 0; j < t_cells; ++j) {
    const double t0 = static_cast<double>(j) * dq_;
    const double w = std::min(dq_, traj.horizon() - t0);
    const double t = t0 + 0.5 * w;
    const double e = traj.eta(t);
    double a = std::min(t - h, t - h - e);
    double b = std::max(t - h, t - h - e);
    a = std::max(a, s_lo_);
    b = std::min(b, s_lo_ + static_cast<double>(cells) * dq_);
    if (b <= a) continue;
    const auto ka = std::min<Index>(static_cast<Index>(std::floor((a - s_lo_) / dq_)), cells - 1);
    const auto kb = std::min<Index>(static_cast<Index>(std::floor((b - s_lo_) / dq_)), cells - 1);
    if (ka == kb) {
      l_(ka) += w * (b - a) / dq_;
      continue;
    }
    l_(ka) += w * (s_lo_ + static_cast<double>(ka + 1) * dq_ - a) / dq_;
    l_(kb) += w * (b - (s_lo_ + static_cast<double>(kb) * dq_)) / dq_;
    diff(ka + 1) += w;
    diff(kb) -= w;
  }
  double run = 0.0;
  for (Index k = 0; k < cells; ++k) {
    run += diff(k);
    l_(k) += run;
  }
  l_cum_ = Vector::Zero(cells + 1);
  for (Index k = 0; k < cells; ++k) l_cum_(k + 1) = l_cum_(k) + l_(k) * dq_;
}

double KernelOracle::cumulative_L(double s) const {
  const auto cells = l_.size();
  const double rel = (s - s_lo_) / dq_;
  if (rel <= 0.0) return 0.0;
  if (rel >= static_cast<double>(cells)) return l_cum_(cells);
  const auto k = static_cast<Index>(std::floor(rel));
  return l_cum_(k) + l_(k) * (s - (s_lo_ + static_cast<double>(k) * dq_));
}

double KernelOracle::L(double s) const {
  const double rel = (s - s_lo_) / dq_;
  if (rel < 0.0 || rel >= static_cast<double>(l_.size())) return 0.0;
  return l_(static_cast<Index>(std::floor(rel)));
}

double KernelOracle::K(double t) const {
  if (t < 0.0 || t > traj_->horizon()) return 0.0;
  const double e = traj_->eta(t);
  const double a = std::min(t - h_, t - h_ - e);
  const double b = std::max(t - h_, t - h_ - e);
  return cumulative_L(b) - cumulative_L(a);
}

double KernelOracle::K_adjoint(double s) const {
  if (s < 0.0) return 0.0;
  const double mu = traj_->declared_mu();
  const double lo = std::max(0.0, s + h_ - mu);
  const double hi = std::min(traj_->horizon(), s + h_ + mu);
  if (hi <= lo) return 0.0;
  const auto n = static_cast<Index>(std::ceil((hi - lo) / dq_));
  const double step = (hi - lo) / static_cast<double>(n);
  double acc = 0.0;
  for (Index j = 0; j < n; ++j) {
    const double t = lo + (static_cast<double>(j) + 0.5) * step;
    if (kernel_indicator(t, s, *traj_, h_)) acc += std::abs(traj_->eta(t));
  }
  return acc * step;
}

double KernelOracle::sup_K(double step) const {
  double best = 0.0;
  const auto n = static_cast<Index>(std::ceil(traj_->horizon() / step));
  for (Index i = 0; i <= n; ++i) best = std::max(best, K(std::min(static_cast<double>(i) * step, traj_->horizon())));
  return best;
}

double KernelOracle::sup_K_adjoint(double step) const {
  double best = 0.0;
  const double s_hi = traj_->horizon() - h_ + traj_->declared_mu();
  const auto n = static_cast<Index>(std::ceil(std::max(s_hi, 0.0) / step));
  for (Index i = 0; i <= n; ++i) best = std::max(best, K_adjoint(static_cast<double>(i) * step));
  return best;
}

double kernel_K(double t, const DelayTrajectory& traj, double h, double quad_dt) {
  return KernelOracle(traj, h, quad_dt).K(t);
}

double kernel_K_adjoint(double s, const DelayTrajectory& traj, double h, double quad_dt) {
  return KernelOracle(traj, h, quad_dt).K_adjoint(s);
}

std::string to_json(const BoundReport& report) {
  nlohmann::ordered_json j;
  if (report.p.is_unbounded()) {
    j["p"] = "inf";
  } else {
    j["p"] = report.p.value();
  }
  j["F"] = report.f_value;
  j["mu"] = report.mu;
  j["bound"] = report.bound_value;
  j["observed_sup"] = report.gain_ratio_observed;
  j["tolerance"] = report.tolerance;
  j["trials"] = report.trials;
  j["seed"] = report.seed;
  if (report.counterexample) {
    j["counterexample"] = {{"trial", report.counterexample->trial},
                           {"trajectory", report.counterexample->generator},
                           {"ratio", report.counterexample->ratio},
                           {"signal_norm_sq", report.counterexample->signal_norm_sq}};
  } else {
    j["counterexample"] = nullptr;
  }
  return j.dump(2);
}

}  // namespace tdstab
