#include "tdstab/lmi.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "json.hpp"
#include "tdstab/bounds.hpp"

namespace tdstab {

namespace {

Index tri_size(Index n) { return n * (n + 1) / 2; }

void pack_sym(const Matrix& m, Vector& x, Index& k) {
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = i; j < m.cols(); ++j) x(k++) = m(i, j);
}

Matrix unpack_sym(const Vector& x, Index& k, Index n) {
  Matrix m(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = i; j < n; ++j) {
      m(i, j) = x(k);
      m(j, i) = x(k);
      ++k;
    }
  return m;
}

void pack_full(const Matrix& m, Vector& x, Index& k) {
  for (Index j = 0; j < m.cols(); ++j)
    for (Index i = 0; i < m.rows(); ++i) x(k++) = m(i, j);
}

Matrix unpack_full(const Vector& x, Index& k, Index n) {
  Matrix m(n, n);
  for (Index j = 0; j < n; ++j)
    for (Index i = 0; i < n; ++i) m(i, j) = x(k++);
  return m;
}

Matrix symmetrized(const Matrix& m) {
  const double resid = (m - m.transpose()).cwiseAbs().maxCoeff();
  if (resid > 1e-12 * std::max(1.0, m.cwiseAbs().maxCoeff())) {
    throw Error(ErrorKind::domain, "assembled LMI block is not symmetric");
  }
  return 0.5 * (m + m.transpose());
}

}  // namespace

LmiVariables LmiVariables::zeros(Index n) {
  const Matrix z = Matrix::Zero(n, n);
  return LmiVariables{z, z, z, z, z, z, z, z, z};
}

Index LmiVariables::packed_size(Index n) { return 4 * tri_size(n) + 5 * n * n; }

Vector LmiVariables::pack() const {
  const Index n = dim();
  Vector x(packed_size(n));
  Index k = 0;
  pack_sym(P1, x, k);
  pack_sym(S, x, k);
  pack_sym(R, x, k);
  pack_sym(Ra, x, k);
  pack_full(P2, x, k);
  pack_full(P3, x, k);
  pack_full(Y1, x, k);
  pack_full(Y2, x, k);
  pack_full(T, x, k);
  return x;
}

LmiVariables LmiVariables::unpack(const Vector& x, Index n) {
  if (x.size() != packed_size(n)) throw Error(ErrorKind::dimension_mismatch, "decision vector has wrong length");
  LmiVariables v;
  Index k = 0;
  v.P1 = unpack_sym(x, k, n);
  v.S = unpack_sym(x, k, n);
  v.R = unpack_sym(x, k, n);
  v.Ra = unpack_sym(x, k, n);
  v.P2 = unpack_full(x, k, n);
  v.P3 = unpack_full(x, k, n);
  v.Y1 = unpack_full(x, k, n);
  v.Y2 = unpack_full(x, k, n);
  v.T = unpack_full(x, k, n);
  return v;
}

AssembledLmi assemble_lmi(const LtiDelaySystem& sys, double mu, double f, const LmiVariables& v) {
  const Index n = sys.dim();
  if (v.dim() != n || v.P2.rows() != n || v.T.rows() != n || v.Ra.rows() != n) {
    throw Error(ErrorKind::dimension_mismatch, "LMI variables do not match the system dimension");
  }
  const double h = sys.h();
  const Matrix I = Matrix::Identity(n, n);
  const Matrix Z = Matrix::Zero(n, n);

  Matrix P(2 * n, 2 * n);
  P << v.P1, Z, v.P2, v.P3;
  Matrix E(2 * n, 2 * n);  // [0 I; A0 -I]
  E << Z, I, sys.a0(), -I;
  Matrix Yc = Matrix::Zero(2 * n, 2 * n);
  Yc.topRows(n) << v.Y1, v.Y2;
  Matrix Yt(2 * n, n);  // Y' with Y = [Y1 Y2]
  Yt << v.Y1.transpose(), v.Y2.transpose();

  Matrix psi = P.transpose() * E + E.transpose() * P + Yc + Yc.transpose();
  psi.topLeftCorner(n, n) += v.S;
  psi.bottomRightCorner(n, n) += h * v.R;

  Matrix a1col(2 * n, n);
  a1col << Z, sys.a1();
  Matrix c2 = P.transpose() * a1col - Yt;
  c2.topRows(n) += v.T;
  const Matrix c3 = h * Yt;

  Matrix m = Matrix::Zero(6 * n, 6 * n);
  m.block(0, 0, 2 * n, 2 * n) = psi;
  m.block(0, 2 * n, 2 * n, n) = c2;
  m.block(2 * n, 0, n, 2 * n) = c2.transpose();
  m.block(0, 3 * n, 2 * n, n) = c3;
  m.block(3 * n, 0, n, 2 * n) = c3.transpose();
  m.block(2 * n, 2 * n, n, n) = -v.S - v.T - v.T.transpose();
  m.block(2 * n, 3 * n, n, n) = h * v.T.transpose();
  m.block(3 * n, 2 * n, n, n) = h * v.T;
  m.block(3 * n, 3 * n, n, n) = -h * v.R;

  Matrix cu(2 * n, n);
  cu << mu * v.P2.transpose() * sys.a1(), mu * v.P3.transpose() * sys.a1();
  m.block(0, 4 * n, 2 * n, n) = cu;
  m.block(4 * n, 0, n, 2 * n) = cu.transpose();
  m.block(4 * n, 4 * n, n, n) = -v.Ra;

  m.block(n, 5 * n, n, n) = f * v.Ra;
  m.block(5 * n, n, n, n) = f * v.Ra.transpose();
  m.block(5 * n, 5 * n, n, n) = -f * v.Ra;

  return AssembledLmi{symmetrized(m), symmetrized(v.P1), symmetrized(v.S), symmetrized(v.Ra)};
}

Matrix AffineBlock::evaluate(const Vector& x) const {
  const Index d = size();
  Vector flat = basis * x;
  Matrix m = constant + Eigen::Map<const Matrix>(flat.data(), d, d);
  return 0.5 * (m + m.transpose());
}

LmiProblem build_stability_problem(const LtiDelaySystem& sys, double mu, double f) {
  const Index n = sys.dim();
  const Index m = LmiVariables::packed_size(n);
  LmiProblem prob;
  prob.num_vars = m;
  const AssembledLmi base = assemble_lmi(sys, mu, f, LmiVariables::zeros(n));
  auto make = [&](std::string name, Sense sense, const Matrix& c) {
    AffineBlock b;
    b.name = std::move(name);
    b.sense = sense;
    b.constant = c;
    b.basis.resize(c.size(), m);
    return b;
  };
  prob.blocks.push_back(make("main", Sense::negative, base.main));
  prob.blocks.push_back(make("P1", Sense::positive, base.P1));
  prob.blocks.push_back(make("S", Sense::positive, base.S));
  prob.blocks.push_back(make("Ra", Sense::positive, base.Ra));
  for (Index j = 0; j < m; ++j) {
    Vector e = Vector::Zero(m);
    e(j) = 1.0;
    const AssembledLmi a = assemble_lmi(sys, mu, f, LmiVariables::unpack(e, n));
    const Matrix* parts[] = {&a.main, &a.P1, &a.S, &a.Ra};
    for (std::size_t k = 0; k < 4; ++k) {
      const Matrix diff = *parts[k] - prob.blocks[k].constant;
      prob.blocks[k].basis.col(j) = Eigen::Map<const Vector>(diff.data(), diff.size());
    }
  }
  LmiVariables unit = LmiVariables::zeros(n);
  unit.P1 = unit.S = unit.Ra = Matrix::Identity(n, n);
  prob.normalization = unit.pack();
  return prob;
}

double lmi_margin(const LmiProblem& problem, const Vector& x) {
  double t = -std::numeric_limits<double>::infinity();
  for (const auto& b : problem.blocks) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(b.evaluate(x), Eigen::EigenvaluesOnly);
    const auto& ev = es.eigenvalues();
    t = std::max(t, b.sense == Sense::negative ? ev(ev.size() - 1) : problem.eps0 - ev(0));
  }
  return t;
}

std::string_view to_string(Verdict v) {
  switch (v) {
    case Verdict::feasible: return "feasible";
    case Verdict::infeasible: return "infeasible";
    case Verdict::inconclusive: return "inconclusive";
  }
  return "?";
}

namespace {

// Log-sum-exp smoothing of the largest eigenvalue over all blocks, in the
// reduced coordinates x = x0 + N z.
class SmoothedMax {
 public:
  explicit SmoothedMax(const LmiProblem& prob) : prob_(prob) {
    const Index m = prob.num_vars;
    if (prob.normalization) {
      const Vector& a = *prob.normalization;
      x0_ = a / a.squaredNorm();
      Eigen::JacobiSVD<Matrix> svd(Matrix(a.transpose()), Eigen::ComputeFullV);
      n_ = svd.matrixV().rightCols(m - 1);
    } else {
      x0_ = Vector::Zero(m);
      n_ = Matrix::Identity(m, m);
    }
  }

  Index reduced_dim() const { return n_.cols(); }
  Vector to_x(const Vector& z) const { return x0_ + n_ * z; }

  Vector to_z(Vector x) const {
    if (prob_.normalization) {
      const double s = prob_.normalization->dot(x);
      if (s > 0.0) x /= s;
    }
    return n_.transpose() * (x - x0_);
  }

  double value(const Vector& z, double beta, Vector* grad) const {
    const Vector x = to_x(z);
    struct Part {
      Vector terms;
      Matrix vecs;
      double sign;
    };
    std::vector<Part> parts;
    parts.reserve(prob_.blocks.size());
    double top = -std::numeric_limits<double>::infinity();
    for (const auto& b : prob_.blocks) {
      Eigen::SelfAdjointEigenSolver<Matrix> es(b.evaluate(x));
      Part p;
      if (b.sense == Sense::negative) {
        p.terms = es.eigenvalues();
        p.sign = 1.0;
      } else {
        p.terms = (prob_.eps0 - es.eigenvalues().array()).matrix();
        p.sign = -1.0;
      }
      p.vecs = es.eigenvectors();
      top = std::max(top, p.terms.maxCoeff());
      parts.push_back(std::move(p));
    }
    double sum = 0.0;
    for (auto& p : parts) {
      p.terms = (beta * (p.terms.array() - top)).exp().matrix();
      sum += p.terms.sum();
    }
    if (grad) {
      Vector gx = Vector::Zero(prob_.num_vars);
      for (std::size_t k = 0; k < parts.size(); ++k) {
        const auto& p = parts[k];
        const Matrix w = p.vecs * (p.terms / sum).asDiagonal() * p.vecs.transpose();
        gx += p.sign * (prob_.blocks[k].basis.transpose() * Eigen::Map<const Vector>(w.data(), w.size()));
      }
      *grad = n_.transpose() * gx;
    }
    return top + std::log(sum) / beta;
  }

  double margin(const Vector& z) const { return lmi_margin(prob_, to_x(z)); }

 private:
  const LmiProblem& prob_;
  Vector x0_;
  Matrix n_;
};

struct StageResult {
  int iterations = 0;
  bool converged = false;
};

StageResult bfgs_stage(const SmoothedMax& obj, Vector& z, double beta, int max_iters) {
  const Index d = z.size();
  StageResult out;
  Vector g;
  double fz = obj.value(z, beta, &g);
  Matrix H = Matrix::Identity(d, d);
  bool scaled = false;
  int flat = 0;
  for (int it = 0; it < max_iters; ++it) {
    out.iterations = it + 1;
    if (g.norm() < 1e-11) {
      out.converged = true;
      return out;
    }
    Vector dir = -H * g;
    double slope = g.dot(dir);
    if (!(slope < 0.0)) {
      H.setIdentity();
      dir = -g;
      slope = -g.squaredNorm();
    }
    double alpha = 1.0;
    Vector zn;
    Vector gn;
    double fn = 0.0;
    bool ok = false;
    while (alpha > 1e-16) {
      zn = z + alpha * dir;
      fn = obj.value(zn, beta, &gn);
      if (std::isfinite(fn) && fn <= fz + 1e-4 * alpha * slope) {
        ok = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!ok) {
      out.converged = true;  // no descent at machine precision
      return out;
    }
    const Vector s = zn - z;
    const Vector y = gn - g;
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      if (!scaled) {
        H *= sy / y.squaredNorm();
        scaled = true;
      }
      const double rho = 1.0 / sy;
      const Vector hy = H * y;
      H += (rho * rho * y.dot(hy) + rho) * (s * s.transpose()) - rho * (hy * s.transpose() + s * hy.transpose());
    }
    flat = (fz - fn <= 1e-15 * (1.0 + std::abs(fz))) ? flat + 1 : 0;
    z = zn;
    g = gn;
    fz = fn;
    if (flat >= 5) {
      out.converged = true;
      return out;
    }
  }
  return out;
}

}  // namespace

FeasibilityCertificate feasibility_solve(const LmiProblem& problem, const SolverOptions& opts,
                                         const std::optional<Vector>& warm_start) {
  const SmoothedMax obj(problem);
  const Index d = obj.reduced_dim();
  std::mt19937_64 rng(opts.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);

  static constexpr double kBetas[] = {1e1, 1e2, 1e3, 1e4, 1e5, 1e6, 1e7};
  constexpr int kStageIters = 600;

  FeasibilityCertificate best;
  best.margin = std::numeric_limits<double>::infinity();
  bool all_converged = true;
  int total = 0;
  const Vector base = warm_start ? obj.to_z(*warm_start) : Vector::Zero(d);

  for (int start = 0; start < std::max(opts.starts, 1); ++start) {
    Vector z = base;
    if (start > 0) {
      Vector noise(d);
      for (Index i = 0; i < d; ++i) noise(i) = gauss(rng);
      z += (0.3 / std::sqrt(static_cast<double>(d))) * noise * static_cast<double>(start);
    }
    bool converged = true;
    double margin = obj.margin(z);
    for (double beta : kBetas) {
      if (opts.stop_when_feasible && margin < opts.stop_margin) break;
      if (total >= opts.max_iters) {
        converged = false;
        break;
      }
      const StageResult st = bfgs_stage(obj, z, beta, std::min(kStageIters, opts.max_iters - total));
      total += st.iterations;
      converged = st.converged;
      margin = obj.margin(z);
    }
    all_converged = all_converged && converged;
    best.starts_used = start + 1;
    if (margin < best.margin) {
      best.margin = margin;
      best.x = obj.to_x(z);
      best.converged = converged;
    }
    if (best.margin < opts.feasible_below) break;
  }
  best.iterations = total;
  if (best.margin < opts.feasible_below) {
    best.verdict = Verdict::feasible;
  } else {
    best.verdict = all_converged ? Verdict::infeasible : Verdict::inconclusive;
  }
  return best;
}

MarginReport mu_max_bisect(const LtiDelaySystem& sys, const DerivativeBound& p, double tol_mu,
                           const SolverOptions& opts) {
  MarginReport rep;
  rep.f_value = f_of_p(p);
  rep.tol = tol_mu;
  rep.p_label = p.to_string();
  if (!p.is_unbounded()) rep.d = p.slope_limit();

  SolverOptions so = opts;
  so.stop_when_feasible = true;
  auto solve = [&](double mu, const std::optional<Vector>& warm, int step) {
    so.seed = opts.seed + static_cast<std::uint64_t>(step);
    FeasibilityCertificate c = feasibility_solve(build_stability_problem(sys, mu, rep.f_value), so, warm);
    rep.solver_iterations += c.iterations;
    if (c.verdict == Verdict::inconclusive) ++rep.inconclusive;
    return c;
  };

  FeasibilityCertificate nominal = solve(0.0, std::nullopt, 0);
  if (nominal.verdict != Verdict::feasible) {
    rep.final_margin = nominal.margin;
    return rep;
  }
  rep.nominal_feasible = true;
  Vector warm = nominal.x;
  rep.final_margin = nominal.margin;

  const double h = sys.h();
  FeasibilityCertificate top = solve(h, warm, 1);
  rep.bisection_steps = 1;
  if (top.verdict == Verdict::feasible) {
    rep.mu_max = h;
    rep.final_margin = top.margin;
    return rep;
  }
  double lo = 0.0;
  double hi = h;
  while (hi - lo > tol_mu) {
    const double mid = 0.5 * (lo + hi);
    ++rep.bisection_steps;
    FeasibilityCertificate c = solve(mid, warm, rep.bisection_steps);
    if (c.verdict == Verdict::feasible) {
      lo = mid;
      warm = c.x;
      rep.final_margin = c.margin;
    } else {
      hi = mid;
    }
  }
  rep.mu_max = lo;
  return rep;
}

std::string to_json(const MarginReport& r) {
  nlohmann::ordered_json j;
  j["method"] = "lmi";
  j["d"] = r.d ? nlohmann::ordered_json(*r.d) : nlohmann::ordered_json(nullptr);
  j["p"] = r.p_label;
  j["F"] = r.f_value;
  j["mu_max"] = r.mu_max;
  j["tol"] = r.tol;
  j["bisection_steps"] = r.bisection_steps;
  j["inconclusive"] = r.inconclusive;
  j["nominal_feasible"] = r.nominal_feasible;
  j["alignment"] = r.alignment;
  j["solver"] = {{"iterations", r.solver_iterations}, {"final_margin", r.final_margin}};
  return j.dump(2);
}

}  // namespace tdstab
