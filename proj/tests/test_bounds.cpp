#include <cmath>

#include "doctest.h"
#include "tdstab/bounds.hpp"

using namespace tdstab;

namespace {

// Exact integral of the piecewise-linear interpolant of y over [a, b],
// summed cell by cell (y = 0 outside its grid).
double pl_integral(const Vector& y, double dt, double a, double b) {
  double sign = 1.0;
  if (a > b) {
    std::swap(a, b);
    sign = -1.0;
  }
  double acc = 0.0;
  for (Index k = 0; k + 1 < y.size(); ++k) {
    const double c0 = static_cast<double>(k) * dt;
    const double c1 = c0 + dt;
    const double lo = std::max(a, c0);
    const double hi = std::min(b, c1);
    if (hi <= lo) continue;
    auto val = [&](double s) { return y(k) + (y(k + 1) - y(k)) * (s - c0) / dt; };
    acc += 0.5 * (val(lo) + val(hi)) * (hi - lo);
  }
  return sign * acc;
}

double delta_norm_sq(const SignalPair& sp, double h) { return l2_norm_sq(delta_apply(sp.y, sp.traj, h)); }

}  // namespace

TEST_CASE("F(p) exact values") {
  CHECK(f_of_p_exact(Rational(0)) == Rational(1));
  CHECK(f_of_p_exact(Rational(-1, 2)) == Rational(1));
  CHECK(f_of_p_exact(Rational(-1)) == Rational(1));
  CHECK(f_of_p_exact(Rational(1, 10)) == Rational(12, 11));
  CHECK(f_of_p_exact(Rational(1, 2)) == Rational(4, 3));
  CHECK(f_of_p_exact(Rational(1)) == Rational(3, 2));
  CHECK(f_of_p_exact(Rational(3)) == Rational(5, 3));
  CHECK(*f_of_p_rational(DerivativeBound::unbounded()) == Rational(7, 4));
  CHECK(f_of_p(DerivativeBound::unbounded()) == 1.75);
  CHECK(f_of_p(0.1) == doctest::Approx(1.0909).epsilon(1e-4));
  CHECK_THROWS_AS(f_of_p(-1.5), Error);
  CHECK_THROWS_AS(f_of_p_exact(Rational(-3, 2)), Error);

  // both branch formulas meet at p = 1
  const Rational one(1);
  CHECK((2 * one + 1) / (one + 1) == (7 * one - 1) / (4 * one));
}

TEST_CASE("F(p) is nondecreasing, continuous and inside [1, 7/4)") {
  double prev = f_of_p(0.0);
  CHECK(prev == 1.0);
  for (int k = -60; k <= 60; ++k) {
    const double p = std::pow(10.0, k / 10.0);
    const double f = f_of_p(p);
    CHECK(f >= prev);
    CHECK(f > 1.0);
    CHECK(f < 1.75);
    prev = f;
  }
  for (double eps : {1e-3, 1e-6, 1e-9}) CHECK(std::abs(f_of_p(1.0 - eps) - f_of_p(1.0 + eps)) < 10.0 * eps);
}

TEST_CASE("delta of the zero signal is zero") {
  const DelayUncertainty unc = DelayUncertainty::fast(0.5, 1.0);
  const DelayTrajectory traj = sine_trajectory(0.5, 2.0, 0.3, 5.0, unc);
  const Signal z = delta_apply(Signal::zeros(0.01, 2, 401), traj, 1.0);
  CHECK(z.samples().cwiseAbs().maxCoeff() == 0.0);
  CHECK(gain_ratio(Signal::zeros(0.01, 1, 10), traj, 1.0) == 0.0);
}

TEST_CASE("delta matches a brute-force cell sum") {
  const double h = 0.3;
  const double dt = 0.02;
  for (std::uint64_t trial = 0; trial < 6; ++trial) {
    auto rng = trial_rng(21, trial);
    const DelayUncertainty unc = trial % 2 == 0
                                     ? DelayUncertainty::fast(0.25, h)
                                     : DelayUncertainty(0.25, DelayCase::C, DerivativeBound::finite(0.5), h);
    const DelayTrajectory traj = random_trajectory(unc, 4.0, rng);
    const Signal y = band_limited_signal(rng, 1, dt, 180, 0.0, 0.0, 2.5);
    const Signal z = delta_apply(y, traj, h);
    const Vector yv = y.samples().row(0).transpose();
    double worst = 0.0;
    double scale = 0.0;
    for (Index i = 0; i < y.size(); ++i) {
      const double t = y.time(i);
      const double ref = pl_integral(yv, dt, t - h - traj.eta(t), t - h);
      worst = std::max(worst, std::abs(z.samples()(0, i) - ref));
      scale = std::max(scale, std::abs(ref));
    }
    CHECK(worst <= 1e-10 * std::max(scale, 1e-300));
  }
  CHECK_THROWS_AS(delta_apply(Signal::zeros(0.01, 1, 1000),
                              constant_trajectory(0.1, 2.0, DelayUncertainty::fast(0.1, 1.0)), 1.0),
                  Error);
}

TEST_CASE("step signal against a constant delay") {
  const double mu = 1.0;
  const double h = 1.0;
  // ||y||^2 = theta and ||u||^2 = (theta - mu) + (2/3) mu for F = 1.
  for (double theta : {5.0, 10.0}) {
    const SignalPair sp = remark1_pair(theta, mu, 1e-3, h);
    // trapezoid over the jump adds dt/2
    CHECK(std::abs(l2_norm_sq(sp.y) - theta) <= 0.5e-3 + 1e-9);
    const double u = delta_norm_sq(sp, h) / (mu * mu);
    CHECK(u == doctest::Approx(theta - mu + 2.0 / 3.0 * mu).epsilon(5e-3));
  }
  const SignalPair big = remark1_pair(100.0, mu, 1e-3, h);
  const double ratio = delta_norm_sq(big, h) / l2_norm_sq(big.y);
  CHECK(ratio == doctest::Approx(1.0).epsilon(0.02));
  CHECK(ratio < 1.0);
  CHECK_THROWS_AS(remark1_pair(1.0, 1.0, 1e-3), Error);
  CHECK(check_admissible(big.traj, 1e-2).admissible);
}

TEST_CASE("triangle signal against a switching delay reaches 3/2") {
  const SignalPair one = remark3_pair(1.0, 1.0, 1e-4);
  CHECK(l2_norm_sq(one.y) == doctest::Approx(2.0 / 3.0).epsilon(1e-4));
  const double z = delta_norm_sq(one, 1.0);
  CHECK(z == doctest::Approx(1.0).epsilon(5e-3));
  CHECK(z / 1.5 == doctest::Approx(2.0 / 3.0).epsilon(5e-3));

  const SignalPair two = remark3_pair(2.0, 2.0, 1e-4);
  CHECK(delta_norm_sq(two, 2.0) / l2_norm_sq(two.y) == doctest::Approx(6.0).epsilon(5e-3));
  CHECK_THROWS_AS(remark3_pair(1.0, 0.5, 1e-3), Error);
  CHECK(two.traj.declared_case() == DelayCase::B);
}

TEST_CASE("randomized gain stays below mu^2 F(p)") {
  const double h = 1.0;
  SUBCASE("case C, p = 0") {
    const DelayUncertainty unc(1.0, DelayCase::C, DerivativeBound::finite(0.0), h);
    const BoundReport r = empirical_gain(h, unc, 200, 7);
    CHECK_FALSE(r.counterexample.has_value());
    CHECK(r.gain_ratio_observed <= 1.0 * (1.0 + r.tolerance));
    CHECK(r.bound_value == 1.0);
  }
  SUBCASE("case B") {
    const BoundReport r = empirical_gain(h, DelayUncertainty::fast(1.0, h), 200, 7);
    CHECK_FALSE(r.counterexample.has_value());
    CHECK(r.gain_ratio_observed >= 1.5 * (1.0 - 5e-3));
    CHECK(r.gain_ratio_observed <= 1.75 * (1.0 + r.tolerance));
  }
  SUBCASE("determinism") {
    const DelayUncertainty unc(0.5, DelayCase::C, DerivativeBound::finite(2.0), h);
    const BoundReport a = empirical_gain(h, unc, 30, 99);
    const BoundReport b = empirical_gain(h, unc, 30, 99);
    CHECK(a.gain_ratio_observed == b.gain_ratio_observed);
    CHECK(to_json(a) == to_json(b));
  }
}

TEST_CASE("bound report JSON") {
  const BoundReport r = empirical_gain(1.0, DelayUncertainty::fast(0.5, 1.0), 3, 1);
  const std::string j = to_json(r);
  for (const char* key : {"\"p\"", "\"F\"", "\"bound\"", "\"observed_sup\"", "\"trials\"", "\"seed\"",
                          "\"counterexample\""}) {
    CHECK(j.find(key) != std::string::npos);
  }
  CHECK(j.find("\"inf\"") != std::string::npos);
}

TEST_CASE("kernel row integrals: closed forms") {
  const double h = 1.0;
  const DelayUncertainty unc = DelayUncertainty::fast(1.0, h);
  const DelayTrajectory zero = constant_trajectory(0.0, 6.0, unc);
  const KernelOracle kz(zero, h);
  for (double s : {0.5, 1.5, 3.0}) {
    CHECK(kz.K(s) == 0.0);
    CHECK(kz.K_adjoint(s) == 0.0);
  }
  // constant eta = mu: both row integrals equal mu^2 away from the edges
  const DelayTrajectory flat = constant_trajectory(1.0, 8.0, unc);
  const KernelOracle kf(flat, h);
  for (double x : {3.0, 4.0, 5.5}) {
    CHECK(kf.K(x) == doctest::Approx(1.0).epsilon(1e-3));
    CHECK(kf.K_adjoint(x - 1.5) == doctest::Approx(1.0).epsilon(1e-3));
  }
  CHECK(kernel_K(4.0, flat, h) == doctest::Approx(kf.K(4.0)));
}

TEST_CASE("kernel row integrals agree with 2-D brute force") {
  const double h = 1.0;
  const double mu = 0.5;
  const DelayUncertainty unc = DelayUncertainty::fast(mu, h);
  const DelayTrajectory traj = sawtooth_trajectory(2.0, 5.0, 0.1, true, 4.0, unc);
  const KernelOracle k(traj, h, 2e-4);
  const double step = 1e-3;
  for (double t : {1.9, 2.4, 3.1}) {
    // K(t) = area of {(t', s) : phi(t, s) = phi(t', s) = 1}
    double area = 0.0;
    for (double s = -2.0 + 0.5 * step; s < 4.0; s += step) {
      if (s < 0.0 || !kernel_indicator(t, s, traj, h)) continue;
      for (double tp = 0.5 * step; tp < 4.0; tp += step) {
        if (kernel_indicator(tp, s, traj, h)) area += step * step;
      }
    }
    CHECK(k.K(t) == doctest::Approx(area).epsilon(1e-3 + 2.0 * step / mu));
  }
  for (double s : {0.9, 1.6, 2.2}) {
    // adjoint: integral over s1 of k(s1, s) = int phi(t, s1) phi(t, s) dt
    double acc = 0.0;
    for (double tt = 0.5 * step; tt < 4.0; tt += step) {
      if (!kernel_indicator(tt, s, traj, h)) continue;
      for (double s1 = -2.0 + 0.5 * step; s1 < 4.0; s1 += step) {
        if (s1 >= 0.0 && kernel_indicator(tt, s1, traj, h)) acc += step * step;
      }
    }
    CHECK(k.K_adjoint(s) == doctest::Approx(acc).epsilon(1e-3 + 2.0 * step / mu));
  }
}

TEST_CASE("kernel suprema on the switching trajectory") {
  const double h = 1.0;
  const SignalPair sp = remark3_pair(1.0, h, 1e-3);
  const KernelOracle k(sp.traj, h, 5e-4);
  const double sup = k.sup_K(5e-3);
  CHECK(sup >= 1.5 * 0.99);
  CHECK(sup <= 1.75 * 1.01);
  // the adjoint row integral exceeds 7/4 here; both still bound ||Delta||^2
  CHECK(k.sup_K_adjoint(5e-3) > 1.75);
  CHECK(k.sup_K_adjoint(5e-3) >= delta_norm_sq(sp, h) / l2_norm_sq(sp.y));
}
