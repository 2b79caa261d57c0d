#include "tdstab/cli.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <utility>
#include <vector>

#include "json.hpp"
#include "tdstab/bounds.hpp"
#include "tdstab/frequency.hpp"
#include "tdstab/lmi.hpp"
#include "tdstab/sim.hpp"
#include "tdstab/trajectory.hpp"

namespace tdstab {

using ojson = nlohmann::ordered_json;

LtiDelaySystem example_system() {
  Matrix a0(2, 2), a1(2, 2);
  a0 << 0.0, 1.0, -1.0, -2.0;
  a1 << 0.0, 0.0, -1.0, 1.0;
  return LtiDelaySystem(a0, a1, 1.0);
}

void write_atomic(const std::string& path, const std::string& content) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  const fs::path tmp = fs::path(path + ".tmp");
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw Error(ErrorKind::invalid_input, "cannot write " + tmp.string());
    os << content;
    if (!os.flush()) throw Error(ErrorKind::invalid_input, "cannot write " + tmp.string());
  }
  fs::rename(tmp, target);
}

namespace {

struct Resolved {
  DelayCase kind = DelayCase::B;
  DerivativeBound p = DerivativeBound::unbounded();
};

std::string read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorKind::invalid_input, "cannot read system document '" + path + "'");
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

std::optional<SystemDocument> load_document(const CommandConfig& cfg) {
  if (!cfg.system_path) return std::nullopt;
  return parse_system(read_file(*cfg.system_path));
}

DerivativeBound bound_from_double(double p) { return DerivativeBound::finite(p); }

// Flag-level overrides, checked against the type invariants before any
// computation.
std::optional<Resolved> resolve_class(const CommandConfig& cfg, const std::optional<SystemDocument>& doc) {
  if (cfg.p && cfg.d) {
    if (std::abs(*cfg.d - 1.0 - *cfg.p) > 1e-12) throw Error(ErrorKind::invalid_input, "--p and --d disagree");
  }
  std::optional<DerivativeBound> p;
  if (cfg.p) p = bound_from_double(*cfg.p);
  if (cfg.d && !p) {
    if (auto dr = rational_from_double(*cfg.d)) {
      p = DerivativeBound::finite(*dr - Rational(1));
    } else {
      p = bound_from_double(*cfg.d - 1.0);
    }
  }
  if (cfg.delay_case) {
    const DelayCase kind = delay_case_from_string(*cfg.delay_case);
    if (kind == DelayCase::B) {
      if (p) throw Error(ErrorKind::p_out_of_range, "--case B forbids --p and --d");
      return Resolved{kind, DerivativeBound::unbounded()};
    }
    if (!p) {
      throw Error(ErrorKind::p_out_of_range, std::string("--case ") + std::string(to_string(kind)) + " requires --p");
    }
    check_case_consistency(kind, *p);
    return Resolved{kind, *p};
  }
  if (p) {
    if (p->value() < -1.0) throw Error(ErrorKind::p_out_of_range, "p must be >= -1");
    return Resolved{case_for(*p), *p};
  }
  if (doc) return Resolved{doc->uncertainty.kind(), doc->uncertainty.p()};
  return std::nullopt;
}

ojson opt_json(const std::optional<double>& v) { return v ? ojson(*v) : ojson(nullptr); }

ojson config_json(const CommandConfig& c) {
  ojson j;
  j["subcommand"] = c.subcommand;
  j["target"] = c.target;
  j["system"] = c.system_path ? ojson(*c.system_path) : ojson(nullptr);
  j["method"] = c.method;
  j["case"] = c.delay_case ? ojson(*c.delay_case) : ojson(nullptr);
  j["p"] = opt_json(c.p);
  j["d"] = opt_json(c.d);
  j["mu"] = opt_json(c.mu);
  j["trials"] = c.trials;
  j["seed"] = c.seed;
  j["dt"] = opt_json(c.dt);
  j["T"] = opt_json(c.T);
  j["out"] = c.out;
  j["tol_mu"] = c.tol_mu;
  j["delay"] = c.delay;
  return j;
}

ojson report_header(const CommandConfig& cfg) {
  ojson j;
  j["tool"] = "tdstab";
  j["version"] = kVersion;
  j["command"] = cfg.subcommand + (cfg.target.empty() ? "" : " " + cfg.target);
  j["config"] = config_json(cfg);
  j["seed"] = cfg.seed;
  return j;
}

ojson p_json(const DerivativeBound& p) {
  return p.is_unbounded() ? ojson("inf") : ojson(p.value());
}

ojson nominal_json(const RootEstimate& r) {
  ojson j;
  j["stable"] = r.stable;
  j["rightmost_re"] = r.rightmost.real();
  j["rightmost_im"] = r.rightmost.imag();
  j["newton_converged"] = r.newton_converged;
  j["collocation_nodes"] = r.nodes;
  return j;
}

ojson margin_json(const MarginReport& r) { return ojson::parse(to_json(r)); }

std::string path_in(const CommandConfig& cfg, const std::string& name) {
  return (std::filesystem::path(cfg.out) / name).string();
}

std::string fmt(double v, int prec = 10) {
  std::ostringstream os;
  os << std::setprecision(prec) << v;
  return os.str();
}

std::string fixed(double v, int decimals) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(decimals) << v;
  return os.str();
}

std::string d_label(const DerivativeBound& p) {
  if (p.is_unbounded()) return "inf";
  if (auto e = p.exact()) return fmt(boost::rational_cast<double>(*e + Rational(1)), 12);
  return fmt(1.0 + p.value(), 12);
}

double resolve_mu(const CommandConfig& cfg, const std::optional<SystemDocument>& doc, double fallback) {
  if (cfg.mu) return *cfg.mu;
  if (doc) return doc->uncertainty.mu();
  return fallback;
}

// --- analyze / margin -----------------------------------------------------

int cmd_margin(const CommandConfig& cfg, std::ostream& log, bool analyze) {
  const auto doc = load_document(cfg);
  if (!doc) throw Error(ErrorKind::invalid_input, cfg.subcommand + " requires --system");
  const LtiDelaySystem& sys = doc->system;
  const Resolved cls = *resolve_class(cfg, doc);
  const double mu = resolve_mu(cfg, doc, 0.0);
  DelayUncertainty(mu, cls.kind, cls.p, sys.h());  // validates mu <= h

  const std::string method = analyze ? "both" : cfg.method;
  if (method != "freq" && method != "lmi" && method != "both") {
    throw Error(ErrorKind::invalid_input, "--method must be freq, lmi or both");
  }

  ojson rep = report_header(cfg);
  rep["tolerances"] = {{"tol_mu", cfg.tol_mu}, {"lmi_feasible_below", -1e-7}, {"lmi_eps0", 1e-6},
                       {"nominal_tol", NominalOptions{}.stability_tol}};
  rep["n"] = sys.dim();
  rep["h"] = sys.h();
  rep["case"] = std::string(to_string(cls.kind));
  rep["p"] = p_json(cls.p);
  const double f = f_of_p(cls.p);
  rep["F"] = f;
  if (auto fr = f_of_p_rational(cls.p)) {
    rep["F_exact"] = std::to_string(fr->numerator()) + "/" + std::to_string(fr->denominator());
  }

  const RootEstimate nominal = nominal_stable(sys);
  rep["nominal"] = nominal_json(nominal);
  const std::string file = path_in(cfg, analyze ? "analyze.json" : "margin.json");
  if (!nominal.stable) {
    rep["status"] = "nominal-unstable";
    write_atomic(file, rep.dump(2) + "\n");
    log << "nominal system is not asymptotically stable (rightmost root " << nominal.rightmost << ")\n";
    return kExitNominalUnstable;
  }

  int code = kExitOk;
  if (method == "freq" || method == "both") {
    const double k = k_margin(sys);
    const double m = std::min(freq_margin_from_k(k, cls.p), sys.h());
    rep["freq"] = {{"method", "freq"}, {"k", std::isfinite(k) ? ojson(k) : ojson("inf")}, {"mu_max", m},
                   {"multiplier", 1.0 / std::sqrt(f)}};
    log << "freq: k = " << fmt(k, 6) << ", mu_max = " << fmt(m, 6) << '\n';
    if (analyze) rep["freq"]["certifies_mu"] = mu < m;
  }
  if (method == "lmi" || method == "both") {
    const MarginReport r = mu_max_bisect(sys, cls.p, cfg.tol_mu, SolverOptions{.seed = cfg.seed});
    rep["lmi"] = margin_json(r);
    log << "lmi: mu_max = " << fmt(r.mu_max, 6) << " (" << r.bisection_steps << " steps, " << r.inconclusive
        << " inconclusive)\n";
    if (analyze) rep["lmi"]["certifies_mu"] = mu <= r.mu_max && r.nominal_feasible;
    if (!r.nominal_feasible) code = kExitInconclusive;
  }
  if (analyze) rep["mu"] = mu;
  rep["status"] = code == kExitOk ? "ok" : "inconclusive";
  write_atomic(file, rep.dump(2) + "\n");
  return code;
}

// --- verify-bound --------------------------------------------------------

int cmd_verify_bound(const CommandConfig& cfg, std::ostream& log) {
  const auto doc = load_document(cfg);
  const auto cls = resolve_class(cfg, doc);
  if (!cls) throw Error(ErrorKind::invalid_input, "verify-bound needs --p, --d or --case B");
  const double mu = resolve_mu(cfg, doc, 1.0);
  const double h = doc ? doc->system.h() : std::max(1.0, mu);
  const DelayUncertainty unc(mu, cls->kind, cls->p, h);
  if (mu <= 0.0) throw Error(ErrorKind::invalid_input, "verify-bound needs mu > 0");

  EmpiricalGainOptions go;
  if (cfg.dt) go.dt = *cfg.dt;
  const BoundReport br = empirical_gain(h, unc, cfg.trials, cfg.seed, go);

  // Kernel row-integral check over a subset of the trajectories.
  const std::uint64_t kernel_trials = std::min<std::uint64_t>(cfg.trials, 50);
  const double horizon = 6.0 * mu + h;
  double sup_k = 0.0;
  for (std::uint64_t i = 0; i < kernel_trials; ++i) {
    auto rng = trial_rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL, i);
    const DelayTrajectory traj = random_trajectory(unc, horizon, rng);
    const KernelOracle k(traj, h, std::min(1e-3, mu / 200.0));
    sup_k = std::max(sup_k, k.sup_K(mu / 100.0));
  }

  ojson rep = report_header(cfg);
  rep["tolerances"] = {{"dt", go.dt}, {"relative", br.tolerance}};
  rep["bound"] = ojson::parse(to_json(br));
  rep["kernel"] = {{"trajectories", kernel_trials},
                   {"sup_K", sup_k},
                   {"F_mu2", br.bound_value},
                   {"ratio", br.bound_value > 0.0 ? sup_k / br.bound_value : 0.0}};
  write_atomic(path_in(cfg, "verify_bound.json"), rep.dump(2) + "\n");
  log << "observed sup ratio " << fmt(br.gain_ratio_observed, 8) << " vs bound " << fmt(br.bound_value, 8)
      << " over " << br.trials << " trials\n";
  if (br.counterexample) {
    log << "counterexample at trial " << br.counterexample->trial << " (" << br.counterexample->generator << ")\n";
    return kExitCounterexample;
  }
  return kExitOk;
}

// --- simulate ------------------------------------------------------------

DelayTrajectory make_trajectory(const std::string& gen, const DelayUncertainty& unc, double h, double T,
                                std::uint64_t seed) {
  const double mu = unc.mu();
  const bool fast = unc.kind() == DelayCase::B;
  const double d = fast ? 0.0 : unc.p().slope_limit();
  if (gen == "random") {
    auto rng = trial_rng(seed, 1);
    return random_trajectory(unc, T, rng);
  }
  if (gen == "constant" || mu == 0.0) return constant_trajectory(mu, T, unc);
  if (gen == "sine") {
    const double omega = fast ? 2.0 * 3.14159265358979323846 / h : d / mu;
    if (!(omega > 0.0)) throw Error(ErrorKind::invalid_input, "sine delay needs 1 + p > 0");
    return sine_trajectory(mu, omega, 0.0, T, unc);
  }
  if (gen == "sawtooth") {
    const double up = fast ? 4.0 : d;
    const double down = fast ? 4.0 : 10.0 * std::max(d, 0.1);
    if (!(up > 0.0)) throw Error(ErrorKind::invalid_input, "sawtooth delay needs 1 + p > 0");
    return sawtooth_trajectory(up, down, -mu, true, T, unc);
  }
  if (gen == "switching") {
    if (!fast) throw Error(ErrorKind::invalid_input, "switching delay is admissible only for case B");
    std::vector<double> times;
    std::vector<double> levels{mu};
    for (double t = h; t < T; t += h) {
      times.push_back(t);
      levels.push_back(-levels.back());
    }
    return switching_trajectory(times, levels, T, unc);
  }
  throw Error(ErrorKind::invalid_input, "unknown delay generator '" + gen + "'");
}

int cmd_simulate(const CommandConfig& cfg, std::ostream& log) {
  const auto doc = load_document(cfg);
  if (!doc) throw Error(ErrorKind::invalid_input, "simulate requires --system");
  const LtiDelaySystem& sys = doc->system;
  const Resolved cls = *resolve_class(cfg, doc);
  const double h = sys.h();
  const DelayUncertainty unc(resolve_mu(cfg, doc, 0.0), cls.kind, cls.p, h);
  const double T = cfg.T.value_or(50.0 * h);
  const double dt = cfg.dt.value_or(h / 100.0);
  const DelayTrajectory traj = make_trajectory(cfg.delay, unc, h, T, cfg.seed);
  auto rng = trial_rng(cfg.seed, 0);
  const Signal hist = random_history(rng, sys.dim(), h, unc.mu());
  const DdeRun run = dde_integrate(sys, traj, hist, dt, T);

  ojson rep = report_header(cfg);
  rep["tolerances"] = {{"dt", dt}, {"T", T}, {"blowup_norm", 1e12}};
  rep["mu"] = unc.mu();
  rep["case"] = std::string(to_string(cls.kind));
  rep["p"] = p_json(cls.p);
  rep["generator"] = traj.generator();
  rep["decay_estimate"] = run.decay_estimate;
  rep["diverged"] = run.diverged;
  rep["blowup_time"] = run.diverged ? ojson(run.blowup_time) : ojson(nullptr);
  rep["diagnostic"] = run.diagnostic;
  rep["note"] = "decay is evidence, not proof; divergence is a counterexample at this mu";
  write_atomic(path_in(cfg, "simulate.csv"), run_csv(run));
  write_atomic(path_in(cfg, "simulate.json"), rep.dump(2) + "\n");
  log << "decay estimate " << fmt(run.decay_estimate, 6) << (run.diverged ? " (diverged)" : "") << '\n';
  return kExitOk;
}

// --- reproduce -----------------------------------------------------------

struct TableRow {
  DerivativeBound p;
  double expected;
};

int reproduce_table1(const CommandConfig& cfg, std::ostream& log) {
  const auto doc = load_document(cfg);
  const LtiDelaySystem sys = doc ? doc->system : example_system();
  const std::vector<TableRow> rows{{DerivativeBound::finite(Rational(0)), 0.384},
                                   {DerivativeBound::finite(Rational(1, 10)), 0.367},
                                   {DerivativeBound::finite(Rational(1, 2)), 0.331},
                                   {DerivativeBound::finite(Rational(1)), 0.313},
                                   {DerivativeBound::unbounded(), 0.289}};
  std::ostringstream csv;
  csv << "d,mu_max,paper_value,abs_error\n";
  ojson rep = report_header(cfg);
  rep["tolerances"] = {{"tol_mu", cfg.tol_mu}};
  rep["alignment"] = kLmiAlignment;
  rep["rows"] = ojson::array();
  int code = kExitOk;
  for (const auto& row : rows) {
    const MarginReport r = mu_max_bisect(sys, row.p, cfg.tol_mu, SolverOptions{.seed = cfg.seed});
    if (!r.nominal_feasible) code = kExitInconclusive;
    csv << d_label(row.p) << ',' << fixed(r.mu_max, 4) << ',' << fixed(row.expected, 3) << ','
        << fixed(std::abs(r.mu_max - row.expected), 4) << '\n';
    rep["rows"].push_back(margin_json(r));
  }
  write_atomic(path_in(cfg, "table1.csv"), csv.str());
  write_atomic(path_in(cfg, "table1.json"), rep.dump(2) + "\n");
  log << csv.str();
  return code;
}

int reproduce_remark2(const CommandConfig& cfg, std::ostream& log) {
  const std::vector<TableRow> rows{{DerivativeBound::finite(Rational(1, 10)), 0.9574},
                                   {DerivativeBound::finite(Rational(1, 2)), 0.8660},
                                   {DerivativeBound::finite(Rational(1)), 0.8165},
                                   {DerivativeBound::unbounded(), 0.7559}};
  std::ostringstream csv;
  csv << "p,F,F_exact,multiplier,expected_multiplier,abs_error\n";
  for (const auto& row : rows) {
    const Rational f = *f_of_p_rational(row.p);
    const double fv = boost::rational_cast<double>(f);
    const double m = 1.0 / std::sqrt(fv);
    csv << row.p.to_string() << ',' << fixed(fv, 4) << ',' << f.numerator() << '/' << f.denominator() << ','
        << fixed(m, 4) << ',' << fixed(row.expected, 4) << ',' << fmt(std::abs(m - row.expected), 3) << '\n';
  }
  write_atomic(path_in(cfg, "remark2.csv"), csv.str());
  log << csv.str();
  return kExitOk;
}

int reproduce_remark1(const CommandConfig& cfg, std::ostream& log) {
  const double mu = 1.0;
  const double h = 1.0;
  const double dt = cfg.dt.value_or(1e-3);
  std::ostringstream csv;
  csv << "theta,norm_y_sq,norm_u_sq,ratio,closed_form,abs_error\n";
  for (double theta : {5.0, 10.0, 20.0, 50.0, 100.0}) {
    const SignalPair sp = remark1_pair(theta, mu, dt, h);
    const Signal u = delta_apply(sp.y, sp.traj, h);
    const double ny = l2_norm_sq(sp.y);
    const double nu = l2_norm_sq(u);
    const double closed = (theta - mu / 3.0) / theta;
    csv << fmt(theta) << ',' << fmt(ny) << ',' << fmt(nu) << ',' << fmt(nu / ny) << ',' << fmt(closed) << ','
        << fmt(std::abs(nu / ny - closed), 3) << '\n';
  }
  write_atomic(path_in(cfg, "remark1.csv"), csv.str());
  log << csv.str();
  return kExitOk;
}

int reproduce_remark3(const CommandConfig& cfg, std::ostream& log) {
  const double h = 1.0;
  const double dt = cfg.dt.value_or(1e-4);
  std::ostringstream csv;
  csv << "mu,norm_y_sq,norm_u_sq,gain_over_mu2,expected,abs_error\n";
  for (double mu : {0.25, 0.5, 1.0}) {
    const SignalPair sp = remark3_pair(mu, h, dt);
    const Signal u = delta_apply(sp.y, sp.traj, h);
    const double ny = l2_norm_sq(sp.y);
    const double nu = l2_norm_sq(u);
    const double g = nu / (mu * mu * ny);
    csv << fmt(mu) << ',' << fmt(ny) << ',' << fmt(nu) << ',' << fmt(g) << ",1.5," << fmt(std::abs(g - 1.5), 3)
        << '\n';
  }
  write_atomic(path_in(cfg, "remark3.csv"), csv.str());
  log << csv.str();
  return kExitOk;
}

int cmd_reproduce(const CommandConfig& cfg, std::ostream& log) {
  if (cfg.target == "table1") return reproduce_table1(cfg, log);
  if (cfg.target == "remark1") return reproduce_remark1(cfg, log);
  if (cfg.target == "remark2") return reproduce_remark2(cfg, log);
  if (cfg.target == "remark3") return reproduce_remark3(cfg, log);
  throw Error(ErrorKind::invalid_input, "reproduce target must be table1, remark1, remark2 or remark3");
}

}  // namespace

int run(const CommandConfig& config, std::ostream& log) {
  try {
    if (config.tol_mu <= 0.0) throw Error(ErrorKind::invalid_input, "--tol-mu must be positive");
    if (config.dt && !(*config.dt > 0.0)) throw Error(ErrorKind::invalid_input, "--dt must be positive");
    if (config.T && !(*config.T > 0.0)) throw Error(ErrorKind::invalid_input, "--T must be positive");
    if (config.subcommand == "analyze") return cmd_margin(config, log, true);
    if (config.subcommand == "margin") return cmd_margin(config, log, false);
    if (config.subcommand == "verify-bound") return cmd_verify_bound(config, log);
    if (config.subcommand == "simulate") return cmd_simulate(config, log);
    if (config.subcommand == "reproduce") return cmd_reproduce(config, log);
    throw Error(ErrorKind::invalid_input, "unknown subcommand '" + config.subcommand + "'");
  } catch (const Error& e) {
    log << "error [" << to_string(e.kind()) << "]: " << e.what() << '\n';
    return kExitInvalid;
  } catch (const std::filesystem::filesystem_error& e) {
    log << "error [io]: " << e.what() << '\n';
    return kExitInvalid;
  }
}

}  // namespace tdstab
