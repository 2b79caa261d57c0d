#include "tdstab/sim.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "json.hpp"

namespace tdstab {

namespace {

constexpr double kBlowup = 1e12;

// Lagrange interpolation through values at integer nodes lo..hi (grid
// spacing 1) evaluated at position u.
template <class Get>
Vector lagrange(Index lo, Index hi, double u, Index dim, Get get) {
  Vector out = Vector::Zero(dim);
  for (Index j = lo; j <= hi; ++j) {
    double w = 1.0;
    for (Index m = lo; m <= hi; ++m) {
      if (m != j) w *= (u - static_cast<double>(m)) / static_cast<double>(j - m);
    }
    out += w * get(j);
  }
  return out;
}

// Picks up to four consecutive nodes from [lo, hi] around u.
std::pair<Index, Index> stencil(double u, Index lo, Index hi) {
  Index a = static_cast<Index>(std::floor(u)) - 1;
  a = std::min(a, hi - 3);
  a = std::max(a, lo);
  return {a, std::min(a + 3, hi)};
}

// Samples a signal at time t by 4-point Lagrange on its own grid.
Vector sample_signal(const Signal& s, double t) {
  const double u = (t - s.t0()) / s.dt();
  const auto [a, b] = stencil(u, 0, s.size() - 1);
  return lagrange(a, b, u, s.dim(), [&](Index j) { return Vector(s.at(j)); });
}

}  // namespace

double decay_slope(const Signal& x, double from) {
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  double count = 0.0;
  for (Index i = 0; i < x.size(); ++i) {
    const double t = x.time(i);
    if (t < from) continue;
    const double y = std::log(std::max(x.at(i).norm(), 1e-300));
    sx += t;
    sy += y;
    sxx += t * t;
    sxy += t * y;
    count += 1.0;
  }
  const double den = count * sxx - sx * sx;
  if (count < 2.0 || den <= 0.0) return 0.0;
  return (count * sxy - sx * sy) / den;
}

DdeRun dde_integrate(const LtiDelaySystem& sys, const DelayTrajectory& traj, const Signal& history, double dt,
                     double T, double t_start) {
  const double h = sys.h();
  const double tol = 1e-9 * std::max(1.0, h);
  if (history.t0() > t_start - h - traj.declared_mu() + tol || history.end_time() < t_start - tol) {
    throw Error(ErrorKind::invalid_input, "history must cover [t_start-h-mu, t_start]");
  }
  if (history.dim() != sys.dim()) throw Error(ErrorKind::dimension_mismatch, "history dimension differs from the system");
  const double lo = history.t0();
  const double hi = history.end_time();
  return dde_integrate(
      sys, traj, [&](double t) { return sample_signal(history, std::clamp(t, lo, hi)); }, dt, T,
      t_start);
}

DdeRun dde_integrate(const LtiDelaySystem& sys, const DelayTrajectory& traj, const HistoryFn& history, double dt,
                     double T, double t_start) {
  const double h = sys.h();
  const double mu = traj.declared_mu();
  const Index n = sys.dim();
  if (!(dt > 0.0) || dt > h / 20.0 * (1.0 + 1e-12)) {
    throw Error(ErrorKind::invalid_input, "dt must be positive and at most h/20");
  }
  if (!(T > 0.0)) throw Error(ErrorKind::invalid_input, "horizon T must be positive");
  const double tol = 1e-9 * std::max(1.0, h);
  if (traj.horizon() < t_start + T - tol) throw Error(ErrorKind::invalid_input, "delay trajectory shorter than T");

  const Index steps = static_cast<Index>(std::llround(T / dt));
  const Index back = static_cast<Index>(std::ceil((h + mu) / dt - 1e-9));
  // Buffer column k holds x at t_start + (k - back) dt.
  Matrix buf(n, back + steps + 1);
  for (Index k = 0; k <= back; ++k) {
    const Vector v = history(t_start + static_cast<double>(k - back) * dt);
    if (v.size() != n) throw Error(ErrorKind::dimension_mismatch, "history dimension differs from the system");
    buf.col(k) = v;
  }

  Index last = back;  // newest computed column
  auto delayed = [&](double t) -> Vector {
    const double s = t - traj.tau(t, h) - t_start;
    const double u = s / dt + static_cast<double>(back);
    const bool future_side = s >= 0.0;
    const Index lo = future_side ? back : 0;
    const Index hi = future_side ? last : back;
    const auto [a, b] = stencil(u, lo, hi);
    return lagrange(a, b, u, n, [&](Index j) { return Vector(buf.col(j)); });
  };
  auto rhs = [&](double t, const Vector& x) -> Vector { return sys.a0() * x + sys.a1() * delayed(t); };

  DdeRun run{Signal::zeros(dt, n, 2), Vector(), dt, T, 0.0, false, 0.0, {}};
  Index done = 0;
  for (Index k = 0; k < steps; ++k) {
    const double t = t_start + static_cast<double>(k) * dt;
    const Vector x = buf.col(back + k);
    const Vector k1 = rhs(t, x);
    const Vector k2 = rhs(t + 0.5 * dt, x + 0.5 * dt * k1);
    const Vector k3 = rhs(t + 0.5 * dt, x + 0.5 * dt * k2);
    const Vector k4 = rhs(t + dt, x + dt * k3);
    const Vector xn = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    buf.col(back + k + 1) = xn;
    last = back + k + 1;
    done = k + 1;
    if (!xn.allFinite() || xn.norm() > kBlowup) {
      run.diverged = true;
      run.blowup_time = t + dt;
      std::ostringstream os;
      os << "state norm exceeded 1e12 at t = " << run.blowup_time;
      run.diagnostic = os.str();
      break;
    }
  }
  const Index count = std::max<Index>(done + 1, 2);
  Matrix out = buf.block(0, back, n, std::min(count, buf.cols() - back));
  if (out.cols() < 2) out = Matrix::Zero(n, 2);
  run.trajectory_out = Signal(dt, out, t_start);
  run.tau.resize(run.trajectory_out.size());
  for (Index i = 0; i < run.tau.size(); ++i) run.tau(i) = traj.tau(run.trajectory_out.time(i), h);
  run.decay_estimate = decay_slope(run.trajectory_out, 0.5 * (t_start + run.trajectory_out.end_time()));
  return run;
}

Signal random_history(std::mt19937_64& rng, Index dim, double h, double mu) {
  // Coarse tones (at most 2/h cycles per unit time) over a window that
  // extends past both ends so the history is nonzero on all of [-h-mu, 0].
  const double dtc = h / 8.0;
  const double t0 = -h - mu - 3.0 * dtc;
  const Index count = static_cast<Index>(std::ceil((3.0 * dtc - t0) / dtc)) + 1;
  Signal s = band_limited_signal(rng, dim, dtc, count, t0, t0 - 2.0 * h, 2.0 * h + 3.0 * dtc);
  if (s.samples().col(count - 1).norm() < 1e-3) {
    Matrix m = s.samples();
    m.array() += 0.5;
    return Signal(dtc, m, t0);
  }
  return s;
}

std::vector<ProbePoint> margin_probe(const LtiDelaySystem& sys, const DelayUncertainty& unc,
                                     const std::vector<double>& mu_grid, int trials_per_mu, std::uint64_t seed,
                                     const ProbeOptions& opts) {
  const double h = sys.h();
  const double dt = opts.dt > 0.0 ? opts.dt : h / 100.0;
  const double T = opts.T > 0.0 ? opts.T : 50.0 * h;
  std::vector<ProbePoint> out;
  std::uint64_t index = 0;
  for (double mu : mu_grid) {
    const DelayUncertainty u = unc.with_mu(mu, h);
    ProbePoint pt;
    pt.mu = mu;
    pt.worst_rate = -std::numeric_limits<double>::infinity();
    for (int k = 0; k < trials_per_mu; ++k) {
      auto rng = trial_rng(seed, index++);
      const DelayTrajectory traj = random_trajectory(u, T, rng);
      const Signal hist = random_history(rng, sys.dim(), h, mu);
      const DdeRun run = dde_integrate(sys, traj, hist, dt, T);
      ++pt.trials;
      if (run.diverged) {
        ++pt.diverged;
        pt.worst_rate = std::numeric_limits<double>::infinity();
      } else {
        if (run.decay_estimate < 0.0) ++pt.decayed;
        pt.worst_rate = std::max(pt.worst_rate, run.decay_estimate);
      }
    }
    out.push_back(pt);
  }
  return out;
}

std::string run_csv(const DdeRun& run) {
  std::ostringstream os;
  os.precision(12);
  const auto& x = run.trajectory_out;
  os << 't';
  for (Index i = 0; i < x.dim(); ++i) os << ",x" << (i + 1);
  os << ",tau\n";
  for (Index k = 0; k < x.size(); ++k) {
    os << x.time(k);
    for (Index i = 0; i < x.dim(); ++i) os << ',' << x.samples()(i, k);
    os << ',' << run.tau(k) << '\n';
  }
  return os.str();
}

std::string probe_json(const std::vector<ProbePoint>& points) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& p : points) {
    nlohmann::ordered_json j;
    j["mu"] = p.mu;
    j["trials"] = p.trials;
    j["decayed"] = p.decayed;
    j["diverged"] = p.diverged;
    if (std::isfinite(p.worst_rate)) {
      j["worst_rate"] = p.worst_rate;
    } else {
      j["worst_rate"] = nullptr;
    }
    arr.push_back(std::move(j));
  }
  return arr.dump(2);
}

}  // namespace tdstab
