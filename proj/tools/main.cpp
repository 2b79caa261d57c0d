#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "tdstab/cli.hpp"

namespace {

void add_common(CLI::App* sub, tdstab::CommandConfig& cfg) {
  sub->add_option("--system", cfg.system_path, "system document (JSON)");
  sub->add_option("--case", cfg.delay_case, "delay class A, B or C")->check(CLI::IsMember({"A", "B", "C"}));
  sub->add_option("--p", cfg.p, "derivative parameter p");
  sub->add_option("--d", cfg.d, "derivative bound d = 1 + p");
  sub->add_option("--mu", cfg.mu, "uncertainty radius");
  sub->add_option("--seed", cfg.seed, "random seed");
  sub->add_option("--out", cfg.out, "output directory");
  sub->add_option("--tol-mu", cfg.tol_mu, "bisection tolerance on mu");
  sub->add_option("--dt", cfg.dt, "time step");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Robust stability margins for systems with uncertain time-varying delay"};
  app.set_version_flag("--version", tdstab::kVersion);
  app.require_subcommand(1);
  tdstab::CommandConfig cfg;

  auto* analyze = app.add_subcommand("analyze", "nominal check, F(p) and both margins");
  add_common(analyze, cfg);

  auto* margin = app.add_subcommand("margin", "mu_max by the frequency test, the LMI, or both");
  add_common(margin, cfg);
  margin->add_option("--method", cfg.method, "freq, lmi or both")->check(CLI::IsMember({"freq", "lmi", "both"}));

  auto* verify = app.add_subcommand("verify-bound", "randomized and kernel checks of the operator bound");
  add_common(verify, cfg);
  verify->add_option("--trials", cfg.trials, "number of random (eta, y) pairs");

  auto* simulate = app.add_subcommand("simulate", "integrate under one delay trajectory");
  add_common(simulate, cfg);
  simulate->add_option("--delay", cfg.delay, "constant, sine, sawtooth, switching or random");
  simulate->add_option("--T", cfg.T, "horizon");

  auto* reproduce = app.add_subcommand("reproduce", "regenerate reference tables");
  add_common(reproduce, cfg);
  reproduce->add_option("target", cfg.target, "table1, remark1, remark2 or remark3")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : tdstab::kExitInvalid;
  }
  cfg.subcommand = app.get_subcommands().front()->get_name();
  return tdstab::run(cfg, std::cout);
}
