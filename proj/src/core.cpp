#include "tdstab/core.hpp"

#include <charconv>
#include <cmath>
#include <limits>
#include <sstream>

#include "json.hpp"

namespace tdstab {

using json = nlohmann::json;

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::invalid_input: return "invalid-input";
    case ErrorKind::schema: return "schema";
    case ErrorKind::mu_exceeds_h: return "mu-exceeds-h";
    case ErrorKind::dimension_mismatch: return "dimension-mismatch";
    case ErrorKind::p_out_of_range: return "p-out-of-range";
    case ErrorKind::domain: return "domain";
    case ErrorKind::singular: return "singular";
    case ErrorKind::divergence: return "divergence";
  }
  return "unknown";
}

std::string_view to_string(DelayCase c) {
  switch (c) {
    case DelayCase::A: return "A";
    case DelayCase::B: return "B";
    case DelayCase::C: return "C";
  }
  return "?";
}

DelayCase delay_case_from_string(std::string_view s) {
  if (s == "A" || s == "a") return DelayCase::A;
  if (s == "B" || s == "b") return DelayCase::B;
  if (s == "C" || s == "c") return DelayCase::C;
  throw Error(ErrorKind::schema, "unknown delay case '" + std::string(s) + "'");
}

std::optional<Rational> rational_from_double(double x) {
  if (!std::isfinite(x)) return std::nullopt;
  std::int64_t scale = 1;
  for (int digits = 0; digits <= 12; ++digits) {
    const double scaled = x * static_cast<double>(scale);
    if (std::abs(scaled) > 9.0e15) return std::nullopt;
    const double rounded = std::round(scaled);
    if (rounded / static_cast<double>(scale) == x) {
      return Rational(static_cast<std::int64_t>(rounded), scale);
    }
    scale *= 10;
  }
  return std::nullopt;
}

DerivativeBound DerivativeBound::finite(double p) {
  if (!std::isfinite(p)) {
    throw Error(ErrorKind::domain, "finite derivative bound requested with non-finite p");
  }
  DerivativeBound b;
  b.unbounded_ = false;
  b.value_ = p;
  b.exact_ = rational_from_double(p);
  return b;
}

DerivativeBound DerivativeBound::finite(Rational p) {
  DerivativeBound b;
  b.unbounded_ = false;
  b.value_ = boost::rational_cast<double>(p);
  b.exact_ = p;
  return b;
}

double DerivativeBound::value() const {
  if (unbounded_) throw Error(ErrorKind::domain, "p is unbounded (case B)");
  return value_;
}

std::optional<Rational> DerivativeBound::exact() const {
  if (unbounded_) return std::nullopt;
  return exact_;
}

std::string DerivativeBound::to_string() const {
  if (unbounded_) return "inf";
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, value_);
  return std::string(buf, res.ptr);
}

DelayCase case_for(const DerivativeBound& p) {
  if (p.is_unbounded()) return DelayCase::B;
  return p.value() < 0.0 ? DelayCase::A : DelayCase::C;
}

void check_case_consistency(DelayCase kind, const DerivativeBound& p) {
  switch (kind) {
    case DelayCase::A:
      if (p.is_unbounded() || p.value() < -1.0 || p.value() >= 0.0) {
        throw Error(ErrorKind::p_out_of_range, "p out of range for case A (need -1 <= p < 0)");
      }
      return;
    case DelayCase::C:
      if (p.is_unbounded() || p.value() < 0.0) {
        throw Error(ErrorKind::p_out_of_range, "p out of range for case C (need p >= 0)");
      }
      return;
    case DelayCase::B:
      if (!p.is_unbounded()) {
        throw Error(ErrorKind::p_out_of_range, "p out of range for case B (p must be unbounded)");
      }
      return;
  }
}

LtiDelaySystem::LtiDelaySystem(Matrix a0, Matrix a1, double h)
    : a0_(std::move(a0)), a1_(std::move(a1)), h_(h) {
  if (!(h_ > 0.0) || !std::isfinite(h_)) {
    throw Error(ErrorKind::invalid_input, "nominal delay h must be positive and finite");
  }
  if (a0_.rows() < 1 || a0_.rows() != a0_.cols() || a1_.rows() != a1_.cols() ||
      a0_.rows() != a1_.rows()) {
    throw Error(ErrorKind::dimension_mismatch, "A0 and A1 must be square with the same dimension");
  }
  if (!a0_.allFinite() || !a1_.allFinite()) {
    throw Error(ErrorKind::invalid_input, "system matrices must be finite");
  }
}

DelayUncertainty::DelayUncertainty(double mu, DelayCase kind, DerivativeBound p, double h)
    : mu_(mu), kind_(kind), p_(std::move(p)) {
  if (!(mu_ >= 0.0) || !std::isfinite(mu_)) {
    throw Error(ErrorKind::invalid_input, "mu must be nonnegative and finite");
  }
  if (mu_ > h) throw Error(ErrorKind::mu_exceeds_h, "mu exceeds h");
  check_case_consistency(kind_, p_);
}

Signal::Signal(double dt, Matrix samples, double t0) : dt_(dt), t0_(t0), samples_(std::move(samples)) {
  if (samples_.size() == 0) throw Error(ErrorKind::invalid_input, "empty signal");
  if (samples_.cols() < 2) throw Error(ErrorKind::invalid_input, "signal needs at least 2 samples");
  if (!(dt_ > 0.0) || !std::isfinite(dt_)) throw Error(ErrorKind::invalid_input, "signal dt must be positive");
}

Signal Signal::scalar(double dt, const Vector& values, double t0) {
  return Signal(dt, Matrix(values.transpose()), t0);
}

Signal Signal::zeros(double dt, Index dim, Index count, double t0) {
  return Signal(dt, Matrix::Zero(dim, count), t0);
}

double l2_norm_sq(const Signal& s) {
  const Vector sq = s.samples().colwise().squaredNorm().transpose();
  const Index n = sq.size();
  const double inner = sq.sum() - 0.5 * (sq(0) + sq(n - 1));
  return inner * s.dt();
}

double spectral_norm(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  Eigen::JacobiSVD<Matrix> svd(m);
  return svd.singularValues()(0);
}

double spectral_norm(const CMatrix& m) {
  if (m.size() == 0) return 0.0;
  Eigen::JacobiSVD<CMatrix> svd(m);
  return svd.singularValues()(0);
}

namespace {

Matrix matrix_from_json(const json& j, const char* name) {
  if (!j.is_array() || j.empty()) {
    throw Error(ErrorKind::schema, std::string(name) + " must be a non-empty array of rows");
  }
  const auto rows = static_cast<Index>(j.size());
  Index cols = -1;
  for (const auto& row : j) {
    if (!row.is_array() || row.empty()) {
      throw Error(ErrorKind::schema, std::string(name) + " rows must be non-empty arrays");
    }
    if (cols < 0) cols = static_cast<Index>(row.size());
    if (static_cast<Index>(row.size()) != cols) {
      throw Error(ErrorKind::dimension_mismatch, std::string(name) + " has ragged rows");
    }
  }
  Matrix m(rows, cols);
  for (Index r = 0; r < rows; ++r) {
    for (Index c = 0; c < cols; ++c) {
      const auto& v = j[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
      if (!v.is_number()) throw Error(ErrorKind::schema, std::string(name) + " entries must be numbers");
      m(r, c) = v.get<double>();
    }
  }
  if (rows != cols) throw Error(ErrorKind::dimension_mismatch, std::string(name) + " must be square");
  return m;
}

json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

double number_field(const json& doc, const char* key) {
  if (!doc.contains(key)) throw Error(ErrorKind::schema, std::string("missing field '") + key + "'");
  if (!doc[key].is_number()) throw Error(ErrorKind::schema, std::string("field '") + key + "' must be a number");
  return doc[key].get<double>();
}

}  // namespace

SystemDocument parse_system(std::string_view document) {
  json doc;
  try {
    doc = json::parse(document);
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::schema, std::string("malformed JSON: ") + e.what());
  }
  if (!doc.is_object()) throw Error(ErrorKind::schema, "system document must be a JSON object");
  for (const char* key : {"A0", "A1", "h", "mu", "case"}) {
    if (!doc.contains(key)) throw Error(ErrorKind::schema, std::string("missing field '") + key + "'");
  }
  Matrix a0 = matrix_from_json(doc["A0"], "A0");
  Matrix a1 = matrix_from_json(doc["A1"], "A1");
  const double h = number_field(doc, "h");
  const double mu = number_field(doc, "mu");
  if (!doc["case"].is_string()) throw Error(ErrorKind::schema, "field 'case' must be \"A\", \"B\" or \"C\"");
  const auto case_name = doc["case"].get<std::string>();
  if (case_name != "A" && case_name != "B" && case_name != "C") {
    throw Error(ErrorKind::schema, "field 'case' must be \"A\", \"B\" or \"C\"");
  }
  const DelayCase kind = delay_case_from_string(case_name);

  DerivativeBound p = DerivativeBound::unbounded();
  if (kind == DelayCase::B) {
    if (doc.contains("p")) throw Error(ErrorKind::schema, "field 'p' is forbidden for case B");
  } else {
    if (!doc.contains("p")) throw Error(ErrorKind::schema, "field 'p' is required for cases A and C");
    const auto& pj = doc["p"];
    if (pj.is_string() && pj.get<std::string>() == "inf") {
      throw Error(ErrorKind::p_out_of_range, "p out of range for case (\"inf\" is case B)");
    }
    if (!pj.is_number()) throw Error(ErrorKind::schema, "field 'p' must be a number or \"inf\"");
    p = DerivativeBound::finite(pj.get<double>());
  }

  LtiDelaySystem sys(std::move(a0), std::move(a1), h);
  check_case_consistency(kind, p);
  DelayUncertainty unc(mu, kind, p, sys.h());
  return SystemDocument{std::move(sys), std::move(unc)};
}

std::string serialize_system(const LtiDelaySystem& sys, const DelayUncertainty& unc) {
  json doc;
  doc["A0"] = matrix_to_json(sys.a0());
  doc["A1"] = matrix_to_json(sys.a1());
  doc["h"] = sys.h();
  doc["mu"] = unc.mu();
  doc["case"] = std::string(to_string(unc.kind()));
  if (unc.kind() != DelayCase::B) doc["p"] = unc.p().value();
  return doc.dump(2);
}

}  // namespace tdstab
