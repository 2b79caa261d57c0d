#pragma once

// Domain types shared by every module: the delayed plant, the delay
// uncertainty description, sampled signals and their L2 norm, and the
// system document format.

#include <complex>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

#include <Eigen/Dense>
#include <boost/rational.hpp>

namespace tdstab {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using CMatrix = Eigen::MatrixXcd;
using Complex = std::complex<double>;
using Index = Eigen::Index;
using Rational = boost::rational<std::int64_t>;

enum class ErrorKind {
  invalid_input,
  schema,
  mu_exceeds_h,
  dimension_mismatch,
  p_out_of_range,
  domain,
  singular,
  divergence,
};

std::string_view to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Delay classes by the upper bound d = 1 + p on the delay derivative.
/// A: -1 <= p < 0, C: p >= 0, B: no derivative constraint.
enum class DelayCase { A, B, C };

std::string_view to_string(DelayCase c);
DelayCase delay_case_from_string(std::string_view s);

/// The derivative parameter p on the extended half-line [-1, +inf].
///
/// The unbounded state is an explicit flag so that arithmetic on p = +inf
/// cannot happen by accident; value() throws for it. Finite values built
/// from short decimals keep an exact rational alongside the double.
class DerivativeBound {
 public:
  static DerivativeBound unbounded() { return DerivativeBound{}; }
  static DerivativeBound finite(double p);
  static DerivativeBound finite(Rational p);

  bool is_unbounded() const noexcept { return unbounded_; }
  double value() const;
  std::optional<Rational> exact() const;

  /// d = 1 + p, the admissible upper slope of eta.
  double slope_limit() const { return 1.0 + value(); }

  std::string to_string() const;

  friend bool operator==(const DerivativeBound&, const DerivativeBound&) = default;

 private:
  DerivativeBound() = default;
  bool unbounded_ = true;
  double value_ = 0.0;
  std::optional<Rational> exact_;
};

/// Recovers an exact rational for doubles that are short decimals (0.1 ->
/// 1/10). Returns nullopt when no representation with <= 12 decimals
/// round-trips.
std::optional<Rational> rational_from_double(double x);

/// x'(t) = A0 x(t) + A1 x(t - tau(t)) with tau(t) = h + eta(t).
class LtiDelaySystem {
 public:
  LtiDelaySystem(Matrix a0, Matrix a1, double h);

  const Matrix& a0() const noexcept { return a0_; }
  const Matrix& a1() const noexcept { return a1_; }
  double h() const noexcept { return h_; }
  Index dim() const noexcept { return a0_.rows(); }

 private:
  Matrix a0_;
  Matrix a1_;
  double h_;
};

/// |eta(t)| <= mu <= h together with the delay class and its p.
class DelayUncertainty {
 public:
  DelayUncertainty(double mu, DelayCase kind, DerivativeBound p, double h);

  /// Case B shorthand.
  static DelayUncertainty fast(double mu, double h) {
    return DelayUncertainty(mu, DelayCase::B, DerivativeBound::unbounded(), h);
  }

  double mu() const noexcept { return mu_; }
  DelayCase kind() const noexcept { return kind_; }
  const DerivativeBound& p() const noexcept { return p_; }

  /// Same class and p with a different radius.
  DelayUncertainty with_mu(double mu, double h) const { return DelayUncertainty(mu, kind_, p_, h); }

 private:
  double mu_;
  DelayCase kind_;
  DerivativeBound p_;
};

/// Throws Error(p_out_of_range) unless (kind, p) are consistent.
void check_case_consistency(DelayCase kind, const DerivativeBound& p);

/// Infers the class from p: p < 0 -> A, finite p >= 0 -> C, unbounded -> B.
DelayCase case_for(const DerivativeBound& p);

/// Uniformly sampled vector signal. Column i of samples() is the value at
/// t0 + i * dt.
class Signal {
 public:
  Signal(double dt, Matrix samples, double t0 = 0.0);

  static Signal scalar(double dt, const Vector& values, double t0 = 0.0);
  static Signal zeros(double dt, Index dim, Index count, double t0 = 0.0);

  double dt() const noexcept { return dt_; }
  double t0() const noexcept { return t0_; }
  Index size() const noexcept { return samples_.cols(); }
  Index dim() const noexcept { return samples_.rows(); }
  double time(Index i) const noexcept { return t0_ + static_cast<double>(i) * dt_; }
  double end_time() const noexcept { return time(size() - 1); }

  const Matrix& samples() const noexcept { return samples_; }
  Eigen::Ref<const Vector> at(Index i) const { return samples_.col(i); }

  Signal scaled(double c) const { return Signal(dt_, samples_ * c, t0_); }

 private:
  double dt_;
  double t0_;
  Matrix samples_;
};

/// Trapezoidal approximation of the integral of ||s(t)||^2 over the grid.
double l2_norm_sq(const Signal& s);

/// Largest singular value.
double spectral_norm(const Matrix& m);
double spectral_norm(const CMatrix& m);

struct SystemDocument {
  LtiDelaySystem system;
  DelayUncertainty uncertainty;
};

/// Parses and validates the JSON system document
/// { "A0": [[...]], "A1": [[...]], "h": real, "mu": real, "case": "A"|"B"|"C", "p": real }.
SystemDocument parse_system(std::string_view document);
std::string serialize_system(const LtiDelaySystem& sys, const DelayUncertainty& unc);

}  // namespace tdstab
