#include "tdstab/frequency.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "tdstab/bounds.hpp"

namespace tdstab {

CMatrix char_matrix(Complex s, const LtiDelaySystem& sys) {
  const Index n = sys.dim();
  CMatrix m = s * CMatrix::Identity(n, n);
  m -= sys.a0().cast<Complex>();
  m -= std::exp(-sys.h() * s) * sys.a1().cast<Complex>();
  return m;
}

bool refine_root(const LtiDelaySystem& sys, Complex& s, int max_iters) {
  const Index n = sys.dim();
  for (int it = 0; it < max_iters; ++it) {
    const CMatrix m = char_matrix(s, sys);
    const CMatrix dm = CMatrix::Identity(n, n) + (sys.h() * std::exp(-sys.h() * s)) * sys.a1().cast<Complex>();
    Eigen::PartialPivLU<CMatrix> lu(m);
    // d/ds log det M = tr(M^{-1} M')
    const Complex tr = lu.solve(dm).trace();
    if (!std::isfinite(tr.real()) || !std::isfinite(tr.imag()) || std::abs(tr) == 0.0) {
      // Exactly singular: s is already a root.
      return std::abs(lu.determinant()) == 0.0 || !std::isfinite(std::abs(tr));
    }
    const Complex step = 1.0 / tr;
    s -= step;
    if (!std::isfinite(s.real()) || !std::isfinite(s.imag())) return false;
    if (std::abs(step) < 1e-13 * (1.0 + std::abs(s))) return true;
  }
  return false;
}

namespace {

// Chebyshev differentiation matrix on x_j = cos(pi j / N).
Matrix cheb_diff(int nn, Vector& x) {
  const Index n = nn;
  x.resize(n + 1);
  for (Index j = 0; j <= n; ++j) x(j) = std::cos(std::numbers::pi * static_cast<double>(j) / static_cast<double>(n));
  Vector c(n + 1);
  for (Index j = 0; j <= n; ++j) c(j) = ((j == 0 || j == n) ? 2.0 : 1.0) * ((j % 2 == 0) ? 1.0 : -1.0);
  Matrix d = Matrix::Zero(n + 1, n + 1);
  for (Index i = 0; i <= n; ++i) {
    for (Index j = 0; j <= n; ++j) {
      if (i != j) d(i, j) = (c(i) / c(j)) / (x(i) - x(j));
    }
    d(i, i) = -d.row(i).sum();
  }
  return d;
}

std::vector<Complex> collocation_spectrum(const LtiDelaySystem& sys, int nodes) {
  const Index n = sys.dim();
  Vector x;
  const Matrix d = cheb_diff(nodes, x) * (2.0 / sys.h());
  const Index blocks = nodes + 1;
  Matrix gen = Matrix::Zero(blocks * n, blocks * n);
  gen.block(0, 0, n, n) = sys.a0();
  gen.block(0, (blocks - 1) * n, n, n) += sys.a1();
  for (Index i = 1; i < blocks; ++i) {
    for (Index j = 0; j < blocks; ++j) {
      gen.block(i * n, j * n, n, n) = d(i, j) * Matrix::Identity(n, n);
    }
  }
  Eigen::EigenSolver<Matrix> es(gen, false);
  std::vector<Complex> ev(es.eigenvalues().data(), es.eigenvalues().data() + es.eigenvalues().size());
  std::sort(ev.begin(), ev.end(), [](Complex a, Complex b) { return a.real() > b.real(); });
  return ev;
}

struct Rightmost {
  Complex raw;
  Complex refined;
  bool converged = false;
};

Rightmost rightmost_at(const LtiDelaySystem& sys, int nodes) {
  const auto ev = collocation_spectrum(sys, nodes);
  Rightmost out;
  out.raw = ev.front();
  bool any = false;
  int tried = 0;
  for (const Complex& e : ev) {
    if (e.imag() < 0.0) continue;
    if (tried++ >= 8) break;
    Complex s = e;
    if (!refine_root(sys, s)) continue;
    if (s.imag() < 0.0) s = std::conj(s);
    if (!any || s.real() > out.refined.real()) out.refined = s;
    any = true;
  }
  out.converged = any;
  if (!any) out.refined = out.raw;
  if (out.raw.imag() < 0.0) out.raw = std::conj(out.raw);
  return out;
}

}  // namespace

RootEstimate nominal_stable(const LtiDelaySystem& sys, const NominalOptions& opts) {
  int nodes = std::max(opts.initial_nodes, 4);
  Rightmost prev = rightmost_at(sys, nodes);
  RootEstimate est;
  while (true) {
    const int next_nodes = nodes * 2;
    if (next_nodes > opts.max_nodes) break;
    Rightmost next = rightmost_at(sys, next_nodes);
    const double moved = std::abs(next.refined - prev.refined);
    prev = next;
    nodes = next_nodes;
    if (moved < opts.node_convergence) break;
  }
  est.rightmost = prev.refined;
  est.discretization = prev.raw;
  est.newton_converged = prev.converged;
  est.nodes = nodes;
  est.stable = est.rightmost.real() < -opts.stability_tol;
  return est;
}

ScalingMatrix::ScalingMatrix(Matrix x, ScalingKind kind) : x_(std::move(x)), kind_(kind) {
  if (x_.rows() != x_.cols() || x_.rows() < 1) throw Error(ErrorKind::dimension_mismatch, "scaling must be square");
  Eigen::JacobiSVD<Matrix> svd(x_);
  const auto& sv = svd.singularValues();
  const double cond = sv(0) / sv(sv.size() - 1);
  if (!(sv(sv.size() - 1) > 0.0) || !std::isfinite(cond) || cond > 1e14) {
    throw Error(ErrorKind::singular, "scaling matrix is singular or ill-conditioned");
  }
  x_inv_ = x_.inverse();
}

ScalingMatrix ScalingMatrix::identity(Index n) { return ScalingMatrix(Matrix::Identity(n, n), ScalingKind::identity); }

ScalingMatrix ScalingMatrix::diagonal(const Vector& entries) {
  return ScalingMatrix(Matrix(entries.asDiagonal()), ScalingKind::diagonal);
}

ScalingMatrix ScalingMatrix::general(Matrix x) { return ScalingMatrix(std::move(x), ScalingKind::general); }

CMatrix transfer_G(double omega, const LtiDelaySystem& sys, double mu, double f) {
  const Index n = sys.dim();
  if (omega == 0.0) return CMatrix::Zero(n, n);
  const Complex s(0.0, omega);
  const CMatrix m = char_matrix(s, sys);
  Eigen::JacobiSVD<CMatrix> svd(m);
  const auto& sv = svd.singularValues();
  if (!(sv(sv.size() - 1) > 1e-12 * std::max(sv(0), 1.0))) {
    std::ostringstream os;
    os.precision(17);
    os << "characteristic matrix is singular at omega = " << omega << " (root on the imaginary axis)";
    throw Error(ErrorKind::singular, os.str());
  }
  const CMatrix rhs = (std::sqrt(f) * mu) * sys.a1().cast<Complex>();
  return s * Eigen::PartialPivLU<CMatrix>(m).solve(rhs);
}

double scaled_gain(double omega, const LtiDelaySystem& sys, double mu, double f, const ScalingMatrix& x) {
  const CMatrix g = transfer_G(omega, sys, mu, f);
  if (x.kind() == ScalingKind::identity) return spectral_norm(g);
  const CMatrix gx = x.matrix().cast<Complex>() * g * x.inverse().cast<Complex>();
  return spectral_norm(gx);
}

namespace {

constexpr double kGolden = 0.61803398874989485;

}  // namespace

HinfResult hinf_norm(const LtiDelaySystem& sys, double mu, double f, const ScalingMatrix& scaling,
                     const SweepOptions& opts) {
  HinfResult res;
  auto& sw = res.sweep;
  const Matrix a1x = scaling.matrix() * sys.a1() * scaling.inverse();
  sw.asymptote = std::sqrt(f) * mu * spectral_norm(a1x);

  const double omega_max = 100.0 * (spectral_norm(sys.a0()) + spectral_norm(sys.a1()) + 1.0 / sys.h());
  const int seeds = std::max(opts.seed_points, 400);
  std::vector<double> grid{0.0};
  const double lo = omega_max * 1e-7;
  for (int i = 0; i < seeds; ++i) {
    grid.push_back(lo * std::pow(omega_max / lo, static_cast<double>(i) / static_cast<double>(seeds - 1)));
  }
  // Linear layer resolving the e^{-i h omega} ripple; density follows the
  // seed count so that grid refinement studies refine both layers.
  const double spacing = std::numbers::pi / (4.0 * sys.h()) * (600.0 / static_cast<double>(seeds));
  const double lin_end = std::min(omega_max, 64.0 * 2.0 * std::numbers::pi / sys.h());
  for (double w = spacing; w < lin_end; w += spacing) grid.push_back(w);
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());

  if (mu == 0.0 || f == 0.0 || sys.a1().isZero(0.0)) {
    sw.omegas = grid;
    sw.gains.assign(grid.size(), 0.0);
    res.norm = 0.0;
    return res;
  }

  auto gain = [&](double w) { return scaled_gain(w, sys, mu, f, scaling); };
  std::vector<double> gains(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) gains[i] = gain(grid[i]);

  std::vector<std::pair<double, double>> extra;
  std::vector<std::size_t> peaks;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const bool left = i == 0 || gains[i] >= gains[i - 1];
    const bool right = i + 1 == grid.size() || gains[i] >= gains[i + 1];
    if (left && right) peaks.push_back(i);
  }
  std::sort(peaks.begin(), peaks.end(), [&](std::size_t a, std::size_t b) { return gains[a] > gains[b]; });
  if (peaks.size() > 25) peaks.resize(25);

  double best = *std::max_element(gains.begin(), gains.end());
  double best_omega = grid[static_cast<std::size_t>(std::max_element(gains.begin(), gains.end()) - gains.begin())];
  for (std::size_t idx : peaks) {
    double a = grid[idx == 0 ? 0 : idx - 1];
    double b = grid[std::min(idx + 1, grid.size() - 1)];
    if (b <= a) continue;
    double x1 = b - kGolden * (b - a);
    double x2 = a + kGolden * (b - a);
    double f1 = gain(x1);
    double f2 = gain(x2);
    extra.emplace_back(x1, f1);
    extra.emplace_back(x2, f2);
    while ((b - a) > opts.rel_bracket * std::max(0.5 * (a + b), 1e-12)) {
      if (f1 >= f2) {
        b = x2;
        x2 = x1;
        f2 = f1;
        x1 = b - kGolden * (b - a);
        f1 = gain(x1);
        extra.emplace_back(x1, f1);
      } else {
        a = x1;
        x1 = x2;
        f1 = f2;
        x2 = a + kGolden * (b - a);
        f2 = gain(x2);
        extra.emplace_back(x2, f2);
      }
    }
    const double peak = std::max(f1, f2);
    if (peak > best) {
      best = peak;
      best_omega = f1 >= f2 ? x1 : x2;
    }
  }
  sw.refined = !peaks.empty();

  std::vector<std::pair<double, double>> all;
  all.reserve(grid.size() + extra.size());
  for (std::size_t i = 0; i < grid.size(); ++i) all.emplace_back(grid[i], gains[i]);
  all.insert(all.end(), extra.begin(), extra.end());
  std::sort(all.begin(), all.end());
  all.erase(std::unique(all.begin(), all.end(), [](const auto& a, const auto& b) { return a.first == b.first; }),
            all.end());
  for (const auto& [w, g] : all) {
    sw.omegas.push_back(w);
    sw.gains.push_back(g);
  }
  sw.peak_omega = best_omega;
  if (sw.asymptote > best) {
    best = sw.asymptote;
    sw.peak_omega = std::numeric_limits<double>::infinity();
  }
  res.norm = best;
  return res;
}

double k_margin(const LtiDelaySystem& sys, const SweepOptions& opts) {
  if (sys.a1().isZero(0.0)) return std::numeric_limits<double>::infinity();
  const double norm = hinf_norm(sys, 1.0, 1.0, ScalingMatrix::identity(sys.dim()), opts).norm;
  return 1.0 / norm;
}

double freq_margin_from_k(double k, const DerivativeBound& p) { return k / std::sqrt(f_of_p(p)); }

double freq_margin(const LtiDelaySystem& sys, const DerivativeBound& p, const SweepOptions& opts) {
  return freq_margin_from_k(k_margin(sys, opts), p);
}

SmallGainResult small_gain_check(const LtiDelaySystem& sys, const DelayUncertainty& unc, ScalingSearch search,
                                 const SweepOptions& opts) {
  const Index n = sys.dim();
  const double f = f_of_p(unc.p());
  SmallGainResult res;
  res.scaling = ScalingMatrix::identity(n);
  res.best_norm = hinf_norm(sys, unc.mu(), f, res.scaling, opts).norm;
  if (search == ScalingSearch::diagonal && n > 1 && unc.mu() > 0.0) {
    Vector logd = Vector::Zero(n);
    auto eval = [&](const Vector& v) {
      return hinf_norm(sys, unc.mu(), f, ScalingMatrix::diagonal(v.array().exp().matrix()), opts).norm;
    };
    double best = res.best_norm;
    for (int outer = 0; outer < 50; ++outer) {
      const double start = best;
      for (Index i = 1; i < n; ++i) {
        Vector trial = logd;
        double center = logd(i);
        for (int k = -4; k <= 4; ++k) {
          if (k == 0) continue;
          trial(i) = logd(i) + static_cast<double>(k);
          const double v = eval(trial);
          if (v < best) {
            best = v;
            center = trial(i);
          }
        }
        double a = center - 1.0;
        double b = center + 1.0;
        double x1 = b - kGolden * (b - a);
        double x2 = a + kGolden * (b - a);
        trial(i) = x1;
        double f1 = eval(trial);
        trial(i) = x2;
        double f2 = eval(trial);
        while (b - a > 1e-3) {
          if (f1 <= f2) {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - kGolden * (b - a);
            trial(i) = x1;
            f1 = eval(trial);
          } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + kGolden * (b - a);
            trial(i) = x2;
            f2 = eval(trial);
          }
        }
        logd(i) = center;
        if (std::min(f1, f2) < best) {
          best = std::min(f1, f2);
          logd(i) = f1 <= f2 ? x1 : x2;
        }
      }
      res.iterations = outer + 1;
      if (start - best < 1e-4 * std::max(start, 1e-12)) break;
    }
    if (best < res.best_norm) {
      res.best_norm = best;
      res.scaling = ScalingMatrix::diagonal(logd.array().exp().matrix());
    }
  }
  res.stable = res.best_norm < 1.0;
  return res;
}

std::string sweep_csv(const FrequencySweep& sweep) {
  std::ostringstream os;
  os.precision(17);
  os << "omega,gain\n";
  for (std::size_t i = 0; i < sweep.omegas.size(); ++i) os << sweep.omegas[i] << ',' << sweep.gains[i] << '\n';
  return os.str();
}

}  // namespace tdstab
