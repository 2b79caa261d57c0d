#include "doctest.h"
#include "tdstab/core.hpp"
#include "tdstab/trajectory.hpp"

using namespace tdstab;

namespace {

const char* kExampleDoc = R"({"A0": [[0, 1], [-1, -2]], "A1": [[0, 0], [-1, 1]], "h": 1, "mu": 0.2, "case": "C", "p": 0})";

ErrorKind parse_error_kind(const std::string& doc) {
  try {
    parse_system(doc);
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected parse_system to throw");
  return ErrorKind::invalid_input;
}

}  // namespace

TEST_CASE("derivative bound keeps infinity explicit") {
  const auto inf = DerivativeBound::unbounded();
  CHECK(inf.is_unbounded());
  CHECK_THROWS_AS(inf.value(), Error);
  CHECK(inf.to_string() == "inf");

  const auto p = DerivativeBound::finite(0.1);
  REQUIRE(p.exact());
  CHECK(*p.exact() == Rational(1, 10));
  CHECK(p.slope_limit() == doctest::Approx(1.1));
  CHECK(p.to_string() == "0.1");
  CHECK_FALSE(DerivativeBound::finite(1.0 / 3.0).exact().has_value());
}

TEST_CASE("uncertainty invariants") {
  CHECK_NOTHROW(DelayUncertainty(0.5, DelayCase::C, DerivativeBound::finite(0.0), 1.0));
  CHECK_NOTHROW(DelayUncertainty(0.5, DelayCase::A, DerivativeBound::finite(-1.0), 1.0));
  CHECK_NOTHROW(DelayUncertainty::fast(1.0, 1.0));

  auto kind_of = [](auto&& fn) {
    try {
      fn();
    } catch (const Error& e) {
      return e.kind();
    }
    return ErrorKind::divergence;  // sentinel: nothing thrown
  };
  CHECK(kind_of([] { DelayUncertainty(1.5, DelayCase::C, DerivativeBound::finite(0.0), 1.0); }) ==
        ErrorKind::mu_exceeds_h);
  CHECK(kind_of([] { DelayUncertainty(-0.1, DelayCase::B, DerivativeBound::unbounded(), 1.0); }) ==
        ErrorKind::invalid_input);
  CHECK(kind_of([] { DelayUncertainty(0.1, DelayCase::A, DerivativeBound::finite(0.5), 1.0); }) ==
        ErrorKind::p_out_of_range);
  CHECK(kind_of([] { DelayUncertainty(0.1, DelayCase::C, DerivativeBound::finite(-0.5), 1.0); }) ==
        ErrorKind::p_out_of_range);
  CHECK(kind_of([] { DelayUncertainty(0.1, DelayCase::B, DerivativeBound::finite(2.0), 1.0); }) ==
        ErrorKind::p_out_of_range);
  CHECK(kind_of([] { DelayUncertainty(0.1, DelayCase::C, DerivativeBound::unbounded(), 1.0); }) ==
        ErrorKind::p_out_of_range);

  CHECK(case_for(DerivativeBound::finite(-0.3)) == DelayCase::A);
  CHECK(case_for(DerivativeBound::finite(0.0)) == DelayCase::C);
  CHECK(case_for(DerivativeBound::unbounded()) == DelayCase::B);
}

TEST_CASE("system validation") {
  CHECK_THROWS_AS(LtiDelaySystem(Matrix::Zero(2, 2), Matrix::Zero(2, 2), 0.0), Error);
  CHECK_THROWS_AS(LtiDelaySystem(Matrix::Zero(2, 2), Matrix::Zero(3, 3), 1.0), Error);
  CHECK_THROWS_AS(LtiDelaySystem(Matrix::Zero(2, 3), Matrix::Zero(2, 3), 1.0), Error);
  const LtiDelaySystem sys(Matrix::Identity(3, 3), Matrix::Zero(3, 3), 2.0);
  CHECK(sys.dim() == 3);
  CHECK(sys.h() == 2.0);
}

TEST_CASE("signal construction and L2 norm") {
  CHECK_THROWS_AS(Signal(0.1, Matrix::Zero(1, 1)), Error);
  CHECK_THROWS_AS(Signal(0.0, Matrix::Zero(1, 4)), Error);
  CHECK_THROWS_AS(Signal(0.1, Matrix(0, 0)), Error);

  CHECK(l2_norm_sq(Signal::zeros(0.01, 3, 57)) == 0.0);

  // y = 1 on [0, 5]: integral of y^2 is 5.
  const double dt = 1e-3;
  const Signal step = Signal::scalar(dt, Vector::Ones(5001));
  CHECK(l2_norm_sq(step) == doctest::Approx(5.0).epsilon(1e-12));

  // Triangle peaking at 1 over [0, 2]: 2/3.
  const double dtt = 1e-4;
  Vector tri(20001);
  for (Index i = 0; i < tri.size(); ++i) {
    const double t = static_cast<double>(i) * dtt;
    tri(i) = t <= 1.0 ? t : 2.0 - t;
  }
  CHECK(l2_norm_sq(Signal::scalar(dtt, tri)) == doctest::Approx(2.0 / 3.0).epsilon(1e-6));

  // sign flip and quadratic scaling
  auto rng = trial_rng(3, 0);
  const Signal s = band_limited_signal(rng, 2, 0.01, 400, 0.0, 0.0, 3.5);
  const double base = l2_norm_sq(s);
  CHECK(base > 0.0);
  CHECK(l2_norm_sq(s.scaled(-1.0)) == doctest::Approx(base).epsilon(1e-12));
  CHECK(l2_norm_sq(s.scaled(3.7)) == doctest::Approx(3.7 * 3.7 * base).epsilon(1e-12));
}

TEST_CASE("spectral norm") {
  Matrix m = Matrix::Zero(2, 2);
  m(0, 0) = 3.0;
  m(1, 1) = -4.0;
  CHECK(spectral_norm(m) == doctest::Approx(4.0));
  CMatrix c = CMatrix::Zero(1, 1);
  c(0, 0) = Complex(3.0, 4.0);
  CHECK(spectral_norm(c) == doctest::Approx(5.0));
}

TEST_CASE("system document parsing") {
  const SystemDocument doc = parse_system(kExampleDoc);
  CHECK(doc.system.dim() == 2);
  CHECK(doc.system.a0()(1, 1) == -2.0);
  CHECK(doc.system.a1()(1, 0) == -1.0);
  CHECK(doc.uncertainty.kind() == DelayCase::C);
  CHECK(doc.uncertainty.mu() == 0.2);
  CHECK(doc.uncertainty.p().value() == 0.0);

  const SystemDocument fast =
      parse_system(R"({"A0": [[-1]], "A1": [[0.5]], "h": 2, "mu": 1, "case": "B"})");
  CHECK(fast.uncertainty.p().is_unbounded());

  CHECK(parse_error_kind(R"({"A0": [[-1]], "A1": [[0]], "h": 1, "mu": 1.5, "case": "B"})") ==
        ErrorKind::mu_exceeds_h);
  CHECK(parse_error_kind(R"({"A0": [[-1]], "A1": [[0]], "h": 1, "mu": 0.1, "case": "A", "p": 0.5})") ==
        ErrorKind::p_out_of_range);
  CHECK(parse_error_kind(R"({"A0": [[-1]], "A1": [[0]], "h": 1, "mu": 0.1, "case": "B", "p": 0.5})") ==
        ErrorKind::schema);
  CHECK(parse_error_kind(R"({"A0": [[-1]], "A1": [[0]], "h": 1, "mu": 0.1, "case": "C"})") == ErrorKind::schema);
  CHECK(parse_error_kind(R"({"A0": [[-1, 0]], "A1": [[0]], "h": 1, "mu": 0.1, "case": "B"})") ==
        ErrorKind::dimension_mismatch);
  CHECK(parse_error_kind(R"({"A0": [[-1]], "A1": [[0, 1], [1, 0]], "h": 1, "mu": 0.1, "case": "B"})") ==
        ErrorKind::dimension_mismatch);
  CHECK(parse_error_kind(R"({"A0": [[-1]], "h": 1, "mu": 0.1, "case": "B"})") == ErrorKind::schema);
  CHECK(parse_error_kind("not json") == ErrorKind::schema);
}

TEST_CASE("serialize then parse is the identity") {
  auto rng = trial_rng(11, 0);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int rep = 0; rep < 20; ++rep) {
    const Index n = 1 + rep % 3;
    Matrix a0(n, n), a1(n, n);
    for (Index i = 0; i < n * n; ++i) {
      a0.data()[i] = g(rng) * 1e3 / 7.0;
      a1.data()[i] = g(rng) / 3.0;
    }
    const LtiDelaySystem sys(a0, a1, 0.7 + rep);
    const DelayUncertainty unc = rep % 2 == 0 ? DelayUncertainty::fast(0.31, sys.h())
                                              : DelayUncertainty(0.31, DelayCase::C, DerivativeBound::finite(0.1), sys.h());
    const SystemDocument back = parse_system(serialize_system(sys, unc));
    CHECK(back.system.a0() == a0);
    CHECK(back.system.a1() == a1);
    CHECK(back.system.h() == sys.h());
    CHECK(back.uncertainty.mu() == unc.mu());
    CHECK(back.uncertainty.kind() == unc.kind());
    CHECK(back.uncertainty.p() == unc.p());
  }
}

TEST_CASE("trajectory admissibility") {
  const DelayUncertainty unc(0.5, DelayCase::C, DerivativeBound::finite(0.5), 1.0);
  const DelayTrajectory ok = sine_trajectory(0.5, 3.0, 0.0, 10.0, unc);
  CHECK(check_admissible(ok, 1e-3).admissible);
  const DelayTrajectory steep = sine_trajectory(0.5, 4.0, 0.0, 10.0, unc);
  CHECK_FALSE(check_admissible(steep, 1e-3).admissible);

  // downward slopes are unconstrained
  const DelayTrajectory saw = sawtooth_trajectory(1.5, 15.0, -0.5, true, 10.0, unc);
  CHECK(check_admissible(saw, 1e-3).admissible);
  CHECK(saw.eta(-3.0) == saw.eta(0.0));

  const DelayTrajectory shifted = ok.shifted(0.25);
  CHECK(shifted.eta(1.25) == doctest::Approx(ok.eta(1.0)));

  for (std::uint64_t i = 0; i < 40; ++i) {
    auto rng = trial_rng(5, i);
    for (const auto& u : {unc, DelayUncertainty::fast(0.5, 1.0),
                          DelayUncertainty(0.5, DelayCase::A, DerivativeBound::finite(-0.5), 1.0)}) {
      const DelayTrajectory t = random_trajectory(u, 8.0, rng);
      const auto rep = check_admissible(t, 1e-3);
      CHECK_MESSAGE(rep.admissible, t.generator() << ": " << rep.reason);
    }
  }
}
