#pragma once

// Command-line front end. Exit codes: 0 success, 1 hypothesis failure,
// 2 configuration or usage error.

#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "hustat/bounds.hpp"
#include "hustat/config.hpp"
#include "hustat/experiments.hpp"

namespace hustat {

inline constexpr int kExitOk = 0;
inline constexpr int kExitHypothesis = 1;
inline constexpr int kExitConfig = 2;

namespace detail {

/// Flag values shared by the subcommands; an option counts as set only when
/// given on the command line.
struct CliFlags {
  std::string config;
  std::uint64_t seed = 1;
  std::string out = ".";
  unsigned threads = 0;
  std::string theorem = "T2";
  double p = 1.5;
  double delta = 1.0;
  double eta = 0.1;
  std::vector<long> n;
  long q = 1;
  double r = 2.0;
  std::string x_grid;
  std::string tail;
};

/// Experiment defaults of each subcommand before the config file is read.
inline ExperimentConfig subcommand_defaults(const std::string& name) {
  ExperimentConfig c;
  if (name == "fclt" || name == "simulate") {
    c.values = {-1.0, 1.0};
    c.kernel = "sum_product";
    c.n_values = {1500};
    c.replications = 800;
  } else if (name == "slln") {
    c.kernel = "centered_product";
    c.n_values = {250, 500, 1000, 2000, 4000};
    c.replications = 1000;
  } else if (name == "bound") {
    c.kernel = "centered_product";
    c.n_values = {128, 512};
    c.replications = 2000;
  } else {
    c.kernel = "centered_product";
  }
  return c;
}

}  // namespace detail

inline int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Hilbert-valued U-statistics of dependent data: blocking bounds, rate planning and Monte-Carlo checks",
               "hustat"};
  app.require_subcommand(1, 1);
  app.option_defaults()->always_capture_default();
  detail::CliFlags f;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", f.config, "Experiment config file (TOML-style sections)");
    sub->add_option("--seed", f.seed, "Base seed (unsigned 64-bit)");
    sub->add_option("--out", f.out, "Output directory for CSV/JSON reports");
    sub->add_option("--threads", f.threads, "Worker threads (0 = all cores)");
  };
  auto add_rates = [&](CLI::App* sub) {
    sub->add_option("--theorem", f.theorem, "Theorem: T2, T3, T4, T5 or FCLT");
    sub->add_option("--p", f.p, "Exponent p in (1,2)");
    sub->add_option("--delta", f.delta, "Moment excess delta");
    sub->add_option("--eta", f.eta, "Slack eta");
  };

  auto* simulate = app.add_subcommand("simulate", "Simulate one path and write the U-statistic prefixes");
  add_common(simulate);
  simulate->add_option("--n", f.n, "Sample sizes (the largest is simulated)");

  auto* fclt = app.add_subcommand("fclt", "Functional CLT check against the Gaussian limit");
  add_common(fclt);
  fclt->add_option("--n", f.n, "Sample size");

  auto* slln = app.add_subcommand("slln", "Strong-law decay of the normalized U-statistic");
  add_common(slln);
  add_rates(slln);
  slln->add_option("--n", f.n, "Increasing sample-size grid");

  auto* bound = app.add_subcommand("bound", "Deviation bound against the empirical tail of max ||U_n||");
  add_common(bound);
  bound->add_option("--n", f.n, "Sample sizes N");
  bound->add_option("--q", f.q, "Block length (0 = optimize per x)");
  bound->add_option("--r", f.r, "Moment order r >= 2");
  bound->add_option("--x-grid", f.x_grid, "Deviation levels a:b:steps (default: median..max, 16 points)");

  auto* decompose = app.add_subcommand("decompose", "Index-family cardinalities and blocking terms as CSV");
  add_common(decompose);
  decompose->add_option("--n", f.n, "Sample size n");
  decompose->add_option("--q", f.q, "Block length q");

  auto* plan = app.add_subcommand("plan", "Exponents of the block/truncation schedule as JSON");
  add_rates(plan);

  auto* hyp = app.add_subcommand("hypothesis", "Check the mixing condition of a theorem");
  add_common(hyp);
  add_rates(hyp);
  hyp->add_option("--tail", f.tail, "Tail model geometric:LAMBDA[:C] or polynomial:S[:C] (default: from the model)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, err, err);
    err << app.help();
    return kExitConfig;
  }

  CLI::App* sub = app.get_subcommands().front();
  const std::string name = sub->get_name();
  auto given = [&](const std::string& flag) { return sub->get_option_no_throw(flag) && sub->count(flag) > 0; };

  try {
    if (name == "plan") {
      const auto rp = rate_plan(parse_theorem(f.theorem), f.p, f.delta, f.eta);
      Json j;
      j["theorem"] = to_string(rp.theorem);
      j["p"] = rp.p;
      j["delta"] = rp.delta;
      j["eta"] = rp.eta;
      j["gamma"] = rp.gamma;
      j["a"] = rp.a ? Json(*rp.a) : Json(nullptr);
      j["b"] = rp.b ? Json(*rp.b) : Json(nullptr);
      j["normalization"] = rp.normalization;
      j["series_exponent"] = rp.series_exponent ? Json(*rp.series_exponent) : Json(nullptr);
      if (f.delta > 0.0) j["gamma_prime"] = gamma_prime(f.p, f.delta);
      out << j.dump() << "\n";
      return kExitOk;
    }

    ExperimentConfig cfg = detail::subcommand_defaults(name);
    if (!f.config.empty()) apply_config(ConfigFile::load(f.config), cfg);
    if (given("--seed")) cfg.seed = f.seed;
    if (given("--out")) cfg.out_dir = f.out;
    if (given("--threads")) cfg.threads = f.threads;
    if (given("--n")) cfg.n_values = f.n;
    if (given("--theorem")) cfg.theorem = f.theorem;
    if (given("--p")) cfg.p = f.p;
    if (given("--delta")) cfg.delta = f.delta;
    if (given("--eta")) cfg.eta = f.eta;
    if (given("--q")) cfg.q = f.q;
    if (given("--r")) cfg.r = f.r;
    if (given("--x-grid")) cfg.x_grid = f.x_grid;
    if (!cfg.x_grid.empty()) parse_grid(cfg.x_grid);

    if (name == "decompose") {
      const long q = cfg.q > 0 ? cfg.q : 1;
      out << decompose_csv(cfg, cfg.n_values.back(), q);
      return kExitOk;
    }

    if (name == "hypothesis") {
      const Theorem th = parse_theorem(given("--theorem") || cfg.theorem.empty() ? f.theorem : cfg.theorem);
      const TailModel tail = f.tail.empty() ? detail::chain_tail(build_chain(cfg)) : parse_tail_model(f.tail);
      const auto res = hypothesis_check(tail, th, cfg.p, cfg.delta, cfg.eta);
      Json j;
      j["theorem"] = to_string(th);
      j["pass"] = res.pass;
      j["condition"] = res.condition;
      j["exponent"] = res.exponent;
      j["margin"] = std::isfinite(res.margin) ? Json(res.margin) : Json("inf");
      out << j.dump() << "\n";
      if (!res.pass) {
        err << "hypothesis check failed: " << res.condition << "\n";
        return kExitHypothesis;
      }
      return kExitOk;
    }

    ExperimentReport report;
    if (name == "simulate") report = run_simulate(cfg);
    else if (name == "fclt") report = run_fclt(cfg);
    else if (name == "slln") report = run_slln(cfg);
    else report = run_bound_check(cfg);
    const auto [csv_path, json_path] = report.write(cfg.out_dir);
    out << report.summary.dump(2) << "\n";
    err << "wrote " << csv_path << " and " << json_path << "\n";
    return kExitOk;
  } catch (const HypothesisError& e) {
    err << "hypothesis failure: " << e.what() << "\n";
    return kExitHypothesis;
  } catch (const std::exception& e) {
    err << "configuration error: " << e.what() << "\n";
    return kExitConfig;
  }
}

}  // namespace hustat
