// khlab: run experiments from config files and evaluate profile functions.

#include "khlab/lab.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>

namespace {

using namespace khlab;

int profile_command(const std::string& name, const std::vector<double>& args, int n, int k,
                    const std::vector<double>& a, std::optional<double> R0_opt) {
  const auto spec = a.empty() ? SymSpec::isotropic(n, k) : SymSpec::make(n, k, a);
  const double R0 = R0_opt.value_or(default_R0(spec));
  auto need = [&](std::size_t m, const char* usage) {
    require(args.size() == m, ErrorKind::invalid_argument, std::string("usage: profile ") + name + " " + usage);
  };
  double v = 0.0;
  if (name == "ubar") {
    need(2, "<s> <alpha>");
    v = ubar(args[0], args[1], spec, R0);
  } else if (name == "mu") {
    need(1, "<alpha>");
    v = mu(args[0], spec, R0);
  } else if (name == "radial") {
    need(3, "<rho> <r> <alpha>");
    v = radial_solution(args[0], args[1], args[2], spec);
  } else if (name == "psi") {
    require(args.size() == static_cast<std::size_t>(n) + 1, ErrorKind::invalid_argument,
            "usage: profile psi <x_1> ... <x_n> <c>");
    v = psi(lab::detail::to_point({args.begin(), args.end() - 1}), spec, args.back());
  } else {
    throw Error(ErrorKind::invalid_argument, "unknown profile '" + name + "' (ubar, mu, radial, psi)");
  }
  std::printf("%.17g\n", v);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"k-Hessian exterior problem lab"};
  app.require_subcommand(1);

  std::string run_cfg, sweep_cfg, out_dir;
  auto* run = app.add_subcommand("run", "solve and analyse one configured problem");
  run->add_option("config", run_cfg, "config file")->required()->check(CLI::ExistingFile);
  run->add_option("-o,--output", out_dir, "output directory (overrides experiment.output)");
  auto* sweep = app.add_subcommand("sweep", "run the configured parameter sweep");
  sweep->add_option("config", sweep_cfg, "config file")->required()->check(CLI::ExistingFile);
  sweep->add_option("-o,--output", out_dir, "output directory (overrides experiment.output)");

  std::string pname;
  std::vector<double> pargs, pa;
  int pn = 3, pk = 1;
  std::optional<double> pR0;
  auto* prof = app.add_subcommand("profile", "evaluate ubar, mu, radial or psi");
  prof->add_option("name", pname, "ubar | mu | radial | psi")->required();
  prof->add_option("args", pargs, "numeric arguments");
  prof->add_option("--n", pn, "dimension");
  prof->add_option("--k", pk, "Hessian order");
  prof->add_option("--a", pa, "diagonal of A (default: isotropic)")->delimiter(',');
  prof->add_option("--R0", pR0, "normalization radius (default 100 max a_i)");
  prof->allow_extras(false);
  // negative numbers are positional values here, not flags
  prof->positionals_at_end(false);

  auto* defaults = app.add_subcommand("print-defaults", "print every config key with its default");

  CLI11_PARSE(app, argc, argv);

  if (*run) return lab::run_file(run_cfg, lab::Mode::run, out_dir);
  if (*sweep) return lab::run_file(sweep_cfg, lab::Mode::sweep, out_dir);
  if (*defaults) {
    std::cout << defaults_text();
    return 0;
  }
  try {
    return profile_command(pname, pargs, pn, pk, pa, pR0);
  } catch (const Error& e) {
    std::cerr << lab::json{{"error", to_string(e.kind())}, {"message", e.what()}}.dump() << "\n";
    return 2;
  }
}
