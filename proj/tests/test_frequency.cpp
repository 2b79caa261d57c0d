#include <cmath>
#include <numbers>

#include "doctest.h"
#include "tdstab/bounds.hpp"
#include "tdstab/frequency.hpp"

using namespace tdstab;

namespace {

LtiDelaySystem example() {
  Matrix a0(2, 2), a1(2, 2);
  a0 << 0.0, 1.0, -1.0, -2.0;
  a1 << 0.0, 0.0, -1.0, 1.0;
  return LtiDelaySystem(a0, a1, 1.0);
}

LtiDelaySystem scalar(double a0, double a1, double h) {
  return LtiDelaySystem(Matrix::Constant(1, 1, a0), Matrix::Constant(1, 1, a1), h);
}

}  // namespace

TEST_CASE("characteristic matrix") {
  const LtiDelaySystem sys = example();
  const CMatrix m0 = char_matrix(Complex(0.0, 0.0), sys);
  CHECK((m0.real() + sys.a0() + sys.a1()).norm() == doctest::Approx(0.0));
  const Complex s(0.3, 2.0);
  const CMatrix m = char_matrix(s, sys);
  const CMatrix ref = s * CMatrix::Identity(2, 2) - sys.a0().cast<Complex>() -
                      std::exp(-s) * sys.a1().cast<Complex>();
  CHECK((m - ref).norm() < 1e-14);
}

TEST_CASE("nominal stability by collocation and Newton") {
  SUBCASE("x' = -x(t - 0.1)") {
    const RootEstimate r = nominal_stable(scalar(0.0, -1.0, 0.1));
    CHECK(r.stable);
    CHECK(r.newton_converged);
    CHECK(std::abs(r.rightmost + std::exp(-0.1 * r.rightmost)) < 1e-10);
  }
  SUBCASE("x' = -x(t - 2) is unstable") {
    const RootEstimate r = nominal_stable(scalar(0.0, -1.0, 2.0));
    CHECK_FALSE(r.stable);
    CHECK(std::abs(r.rightmost + std::exp(-2.0 * r.rightmost)) < 1e-10);
    CHECK(r.rightmost.real() > 0.0);
  }
  SUBCASE("pure ODE x' = x") {
    const RootEstimate r = nominal_stable(scalar(1.0, 0.0, 1.0));
    CHECK_FALSE(r.stable);
    CHECK(r.rightmost.real() == doctest::Approx(1.0));
  }
  SUBCASE("example plant at h = 1") {
    const LtiDelaySystem sys = example();
    const RootEstimate r = nominal_stable(sys);
    CHECK(r.stable);
    CHECK(std::abs(char_matrix(r.rightmost, sys).determinant()) < 1e-10);
    CHECK(r.rightmost.real() == doctest::Approx(-0.10957).epsilon(1e-3));
    CHECK(std::abs(r.rightmost.imag()) == doctest::Approx(0.89197).epsilon(1e-3));
  }
}

TEST_CASE("transfer function limits and singularity") {
  const LtiDelaySystem sys = example();
  CHECK(transfer_G(0.0, sys, 0.3, 1.5).norm() == 0.0);
  const double mu = 0.3;
  const double f = 1.5;
  const double far = spectral_norm(transfer_G(1e7, sys, mu, f));
  CHECK(far == doctest::Approx(std::sqrt(f) * mu * std::sqrt(2.0)).epsilon(1e-5));

  // x' = -x(t - pi/2) has roots at +-i
  const LtiDelaySystem marginal = scalar(0.0, -1.0, std::numbers::pi / 2.0);
  try {
    transfer_G(1.0, marginal, 0.1, 1.0);
    FAIL("expected a singular-matrix error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::singular);
  }
}

TEST_CASE("H-infinity norm of the example plant") {
  const LtiDelaySystem sys = example();
  const double k = k_margin(sys);
  CHECK(k == doctest::Approx(0.27380).epsilon(2e-4));
  const HinfResult r = hinf_norm(sys, 1.0, 1.0, ScalingMatrix::identity(2));
  CHECK(r.sweep.peak_omega == doctest::Approx(0.906).epsilon(5e-3));
  CHECK(r.sweep.asymptote == doctest::Approx(std::sqrt(2.0)));
  CHECK(r.sweep.omegas.size() == r.sweep.gains.size());

  // homogeneity in mu and sqrt(F)
  const double base = r.norm;
  CHECK(hinf_norm(sys, 0.25, 1.0, ScalingMatrix::identity(2)).norm == doctest::Approx(0.25 * base).epsilon(1e-9));
  CHECK(hinf_norm(sys, 1.0, 1.75, ScalingMatrix::identity(2)).norm ==
        doctest::Approx(std::sqrt(1.75) * base).epsilon(1e-9));

  // seed grid doubling
  SweepOptions dense;
  dense.seed_points = 1200;
  CHECK(std::abs(hinf_norm(sys, 1.0, 1.0, ScalingMatrix::identity(2), dense).norm - base) <= 1e-4 * base);
}

TEST_CASE("margin scales inversely with a time rescaling") {
  const LtiDelaySystem sys = example();
  const double k = k_margin(sys);
  for (double alpha : {0.5, 2.0, 3.0}) {
    const LtiDelaySystem fast(alpha * sys.a0(), alpha * sys.a1(), sys.h() / alpha);
    CHECK(k_margin(fast) == doctest::Approx(k / alpha).epsilon(1e-4));
  }
}

TEST_CASE("similarity scaling") {
  // a scalar system is invariant under any scaling
  const LtiDelaySystem s1 = scalar(-2.0, 0.7, 0.5);
  const double a = hinf_norm(s1, 0.4, 1.3, ScalingMatrix::identity(1)).norm;
  const double b = hinf_norm(s1, 0.4, 1.3, ScalingMatrix::diagonal(Vector::Constant(1, 5.0))).norm;
  CHECK(a == doctest::Approx(b).epsilon(1e-12));

  // a general similarity changes G to X G X^-1 pointwise
  const LtiDelaySystem sys = example();
  Matrix x(2, 2);
  x << 2.0, 0.5, -0.3, 1.0;
  const ScalingMatrix sx = ScalingMatrix::general(x);
  const CMatrix g = transfer_G(0.8, sys, 0.3, 1.2);
  const CMatrix gx = x.cast<Complex>() * g * x.inverse().cast<Complex>();
  CHECK(scaled_gain(0.8, sys, 0.3, 1.2, sx) == doctest::Approx(spectral_norm(gx)).epsilon(1e-12));
  CHECK_THROWS_AS(ScalingMatrix::general(Matrix::Zero(2, 2)), Error);
}

TEST_CASE("frequency-domain margins and small gain") {
  const LtiDelaySystem sys = example();
  const double k = k_margin(sys);
  CHECK(freq_margin(sys, DerivativeBound::unbounded()) == doctest::Approx(k / std::sqrt(1.75)));
  CHECK(freq_margin(sys, DerivativeBound::finite(0.0)) == doctest::Approx(k));
  CHECK(freq_margin_from_k(k, DerivativeBound::finite(-0.5)) == doctest::Approx(k));

  const SmallGainResult ok = small_gain_check(sys, DelayUncertainty::fast(0.2, 1.0), ScalingSearch::identity);
  CHECK(ok.stable);
  CHECK(ok.best_norm == doctest::Approx(0.2 * std::sqrt(1.75) / k).epsilon(1e-6));
  const SmallGainResult no = small_gain_check(sys, DelayUncertainty::fast(0.3, 1.0), ScalingSearch::identity);
  CHECK_FALSE(no.stable);

  const SmallGainResult diag = small_gain_check(sys, DelayUncertainty::fast(0.3, 1.0), ScalingSearch::diagonal);
  CHECK(diag.best_norm <= no.best_norm + 1e-12);

  const SmallGainResult none = small_gain_check(sys, DelayUncertainty::fast(0.0, 1.0), ScalingSearch::identity);
  CHECK(none.stable);
  CHECK(none.best_norm == 0.0);
}

TEST_CASE("no delayed term") {
  const LtiDelaySystem sys(-Matrix::Identity(2, 2), Matrix::Zero(2, 2), 1.0);
  CHECK(std::isinf(k_margin(sys)));
  CHECK(hinf_norm(sys, 0.5, 1.75, ScalingMatrix::identity(2)).norm == 0.0);
}

TEST_CASE("sweep CSV") {
  const HinfResult r = hinf_norm(example(), 0.2, 1.0, ScalingMatrix::identity(2));
  const std::string csv = sweep_csv(r.sweep);
  CHECK(csv.rfind("omega,gain\n", 0) == 0);
  CHECK(static_cast<std::size_t>(std::count(csv.begin(), csv.end(), '\n')) == r.sweep.omegas.size() + 1);
}
