// Acceptance checks, one PASS/FAIL line per criterion.
//   acceptance                 run all criteria
//   acceptance --criterion N   run criterion N only

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "hustat/hustat.hpp"

using namespace hustat;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double elapsed_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Matrix random_stochastic(int s, Rng& rng) {
  Matrix p(s, s);
  for (int i = 0; i < s; ++i) {
    double total = 0.0;
    for (int j = 0; j < s; ++j) {
      p(i, j) = 0.05 + uniform01(rng);
      total += p(i, j);
    }
    p.row(i) /= total;
  }
  return p;
}

std::shared_ptr<KernelTable> random_table(int states, Eigen::Index d, bool symmetric, Rng& rng) {
  auto t = std::make_shared<KernelTable>(states, d);
  std::normal_distribution<double> normal;
  for (int x = 0; x < states; ++x)
    for (int y = 0; y < states; ++y)
      for (Eigen::Index c = 0; c < d; ++c) {
        if (symmetric && y < x) {
          t->value(x, y)(c) = t->value(y, x)(c);
        } else {
          t->value(x, y)(c) = normal(rng);
        }
      }
  return t;
}

// ============================================================================
// 1. Partition exactness
// ============================================================================

Outcome criterion1() {
  const auto t0 = std::chrono::steady_clock::now();
  long cases = 0, failures = 0;
  for (long q = 1; q <= 8; ++q)
    for (long n = 2 * q + 1; n <= 40; ++n) {
      ++cases;
      const auto part = partition_indices(n, q);
      std::set<std::pair<long, long>> all;
      bool disjoint = true;
      for (int a = 1; a <= 5; ++a)
        for (const auto& p : part.families[static_cast<std::size_t>(a - 1)])
          disjoint = all.insert({p.i, p.j}).second && disjoint;
      std::set<std::pair<long, long>> expected;
      for (long i = 1; i <= n; ++i)
        for (long j = i + 1; j <= n; ++j) expected.insert({i, j});
      if (!disjoint || all != expected || part.total() != expected.size()) ++failures;
    }
  const double secs = elapsed_since(t0);
  return {failures == 0 && secs < 5.0, std::to_string(cases) + " (n,q) cases, " + std::to_string(failures) +
                                           " failures, " + fmt("%.2f", secs) + " s (limit 5 s)"};
}

// ============================================================================
// 2. Blocking inequality
// ============================================================================

Outcome criterion2() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(20240002);
  const long N = 24;
  double worst = kInf;
  long violations = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const long q = 1 + trial % 3;
    const double a = 0.05 + 0.9 * uniform01(rng), b = 0.05 + 0.9 * uniform01(rng);
    const auto chain = FiniteChain::two_state(a, b);
    const Eigen::Index d = 1 + static_cast<Eigen::Index>(trial % 3);
    const auto h = table_kernel("random", random_table(2, d, trial % 2 == 0, rng));
    const auto [lo, hi] = required_index_range(N, q);
    const auto path = chain.simulate_indexed(lo, hi, rng);
    const auto terms = block_terms(h, path, N, q);
    worst = std::min(worst, terms.slack());
    if (terms.slack() < -1e-9) ++violations;
  }
  const double secs = elapsed_since(t0);
  return {violations == 0 && secs < 30.0, "1000 trials, min slack " + fmt("%.3e", worst) + ", " +
                                              std::to_string(violations) + " below -1e-9, " + fmt("%.2f", secs) +
                                              " s (limit 30 s)"};
}

// ============================================================================
// 3. Hoeffding identity
// ============================================================================

Outcome criterion3() {
  Rng rng(20240003);
  double worst_rel = 0.0, worst_sym = 0.0, worst_defect = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const int states = 2 + trial % 4;
    const Eigen::Index d = 1 + trial % 4;
    const bool symmetric = trial % 2 == 0;
    const auto h = table_kernel("random", random_table(states, d, symmetric, rng));
    std::vector<double> w(static_cast<std::size_t>(states));
    double total = 0.0;
    for (double& x : w) total += (x = 0.1 + uniform01(rng));
    for (double& x : w) x /= total;
    w.back() = 1.0;
    for (std::size_t i = 0; i + 1 < w.size(); ++i) w.back() -= w[i];
    const auto law = state_law(w);
    const std::size_t n = 2 + static_cast<std::size_t>(uniform01(rng) * 49.0);
    std::vector<StateIndex> seq(n);
    for (auto& x : seq) x = sample_categorical(w, rng);
    const auto check = hoeffding_split_check(h, MarginalLaw<StateIndex>(law), std::span<const StateIndex>(seq));
    worst_rel = std::max(worst_rel, check.max_rel);
    if (check.symmetric_checked) worst_sym = std::max(worst_sym, check.symmetric_max_abs);
    const auto h2 = degenerate(h, MarginalLaw<StateIndex>(law));
    worst_defect = std::max(worst_defect, degeneracy_defect(h2, law));
  }
  const bool pass = worst_rel <= 1e-10 && worst_sym <= 1e-10 && worst_defect <= 1e-10;
  return {pass, "200 kernels, max rel gap " + fmt("%.2e", worst_rel) + ", symmetric form gap " +
                    fmt("%.2e", worst_sym) + ", h2 defect " + fmt("%.2e", worst_defect) + " (tol 1e-10)"};
}

// ============================================================================
// 4. Mixing oracles
// ============================================================================

using SetPartition = std::vector<std::vector<int>>;

void all_partitions(int s, int next, SetPartition& cur, std::vector<SetPartition>& out) {
  if (next == s) {
    out.push_back(cur);
    return;
  }
  for (std::size_t b = 0; b < cur.size(); ++b) {
    cur[b].push_back(next);
    all_partitions(s, next + 1, cur, out);
    cur[b].pop_back();
  }
  cur.push_back({next});
  all_partitions(s, next + 1, cur, out);
  cur.pop_back();
}

double brute_force_beta(const Matrix& joint) {
  const int s = static_cast<int>(joint.rows());
  std::vector<SetPartition> parts;
  SetPartition cur;
  all_partitions(s, 0, cur, parts);
  const Eigen::VectorXd px = joint.rowwise().sum(), py = joint.colwise().sum().transpose();
  double best = 0.0;
  for (const auto& A : parts)
    for (const auto& B : parts) {
      double total = 0.0;
      for (const auto& a : A)
        for (const auto& b : B) {
          double pab = 0.0, pa = 0.0, pb = 0.0;
          for (int i : a) pa += px(i);
          for (int j : b) pb += py(j);
          for (int i : a)
            for (int j : b) pab += joint(i, j);
          total += std::abs(pab - pa * pb);
        }
      best = std::max(best, 0.5 * total);
    }
  return best;
}

Outcome criterion4() {
  Rng rng(20240004);
  double worst = 0.0;
  long cases = 0, alpha_violations = 0;
  auto check = [&](const Matrix& p, const Eigen::VectorXd& pi) {
    Matrix pk = p;
    for (long k = 1; k <= 6; ++k) {
      const double beta = beta_pair_exact(p, pi, k);
      const double brute = brute_force_beta(pi.asDiagonal() * pk);
      worst = std::max(worst, std::abs(beta - brute));
      if (alpha_pair_exact(p, pi, k) > beta + 1e-15) ++alpha_violations;
      ++cases;
      pk = pk * p;
    }
  };
  for (int s = 1; s <= 4; ++s)
    for (int rep = 0; rep < 40; ++rep) {
      const Matrix p = random_stochastic(s, rng);
      check(p, FiniteChain::stationary_law(p));
    }
  for (int s = 2; s <= 4; ++s) {
    Matrix cycle = Matrix::Zero(s, s);
    for (int i = 0; i < s; ++i) cycle(i, (i + 1) % s) = 1.0;
    check(cycle, Eigen::VectorXd::Constant(s, 1.0 / s));
    Eigen::VectorXd w = Eigen::VectorXd::Constant(s, 1.0 / s);
    check(Matrix(Eigen::VectorXd::Ones(s) * w.transpose()), w);
  }
  const double b1 = FiniteChain::two_state(0.25, 0.25).beta(1);
  const bool pass = worst <= 1e-12 && alpha_violations == 0 && b1 == 0.25;
  return {pass, std::to_string(cases) + " (chain,k) cases, max |beta - brute force| " + fmt("%.2e", worst) +
                    ", alpha > beta in " + std::to_string(alpha_violations) + ", beta(1) = " + fmt("%.17g", b1)};
}

// ============================================================================
// 5. Berbee coupling
// ============================================================================

Outcome criterion5() {
  const auto chain = FiniteChain::two_state(0.25, 0.25);
  const Matrix joint = chain.stationary().asDiagonal() * chain.transition();
  const BerbeeCoupler coupler(joint);
  auto rng = derive_rng(20240005, kStreamCoupling, 0);
  const long draws = 100000;
  long mismatch = 0, ystar0 = 0, x0ystar0 = 0;
  for (long i = 0; i < draws; ++i) {
    const auto d = coupler.draw(rng);
    mismatch += d.y != d.y_star;
    ystar0 += d.y_star == 0;
    x0ystar0 += d.x == 0 && d.y_star == 0;
  }
  const double n = static_cast<double>(draws);
  auto z = [&](double count, double p) { return (count / n - p) / std::sqrt(p * (1.0 - p) / n); };
  const double z_mis = z(mismatch, 0.25), z_marg = z(ystar0, 0.5), z_ind = z(x0ystar0, 0.25);
  const bool pass = std::abs(z_mis) <= 3.0 && std::abs(z_marg) <= 3.0 && std::abs(z_ind) <= 3.0;
  return {pass, "P(Y != Y*) = " + fmt("%.4f", mismatch / n) + " (z " + fmt("%.2f", z_mis) + "), P(Y*=0) z " +
                    fmt("%.2f", z_marg) + ", P(X=0,Y*=0) z " + fmt("%.2f", z_ind) + " (limit 3)"};
}

// ============================================================================
// 6. Long-run covariance closed form
// ============================================================================

Outcome criterion6() {
  const auto chain = FiniteChain::two_state(0.25, 0.25);
  const auto g = gamma_operator(chain, std::vector<HPoint>{HPoint::Constant(1, -1.0), HPoint::Constant(1, 1.0)});
  const double v = g.gamma.matrix()(0, 0);
  return {std::abs(v - 3.0) <= 1e-10,
          "Gamma = " + fmt("%.15f", v) + " with K = " + std::to_string(g.lags) + " (target 3, tol 1e-10)"};
}

// ============================================================================
// 7. Functional CLT
// ============================================================================

Outcome criterion7() {
  const auto t0 = std::chrono::steady_clock::now();
  ExperimentConfig c;
  c.model = "two_state";
  c.a = c.b = 0.25;
  c.values = {-1.0, 1.0};
  c.kernel = "sum_product";
  c.n_values = {1500};
  c.replications = 800;
  c.reference_paths = 2000;
  c.seed = 20240007;
  const auto report = run_fclt(c);
  const double secs = elapsed_since(t0);
  const auto& s = report.summary;
  const double ks1 = s["ks_projection"].get<double>(), ks2 = s["ks_sup_limit"].get<double>();
  const bool pass = ks1 <= 0.07 && ks2 <= 0.10 && secs <= 600.0;
  return {pass, "KS(t=1 projection) " + fmt("%.4f", ks1) + " (limit 0.07), KS(sup functional) " + fmt("%.4f", ks2) +
                    " (limit 0.10), variance ratio " + fmt("%.3f", s["variance_ratio"].get<double>()) +
                    "; sup||W(t)|| reference KS " + fmt("%.4f", s["ks_sup_brownian"].get<double>()) + ", " +
                    fmt("%.1f", secs) + " s"};
}

// ============================================================================
// 8. Strong-law decay
// ============================================================================

Outcome criterion8() {
  const auto t0 = std::chrono::steady_clock::now();
  ExperimentConfig c;
  c.kernel = "centered_product";
  c.mode = "degenerate";
  c.p = 1.5;
  c.delta = 1.0;
  c.eta = 0.1;
  c.n_values = {250, 500, 1000, 2000, 4000};
  c.replications = 1000;
  c.seed = 20240008;

  ExperimentConfig iid = c;
  iid.model = "iid";
  iid.weights = {0.5, 0.5};
  const auto r_iid = run_slln(iid);

  ExperimentConfig chain = c;
  chain.model = "two_state";
  chain.a = chain.b = 0.25;
  const auto r_chain = run_slln(chain);
  const double secs = elapsed_since(t0);

  const double slope = r_iid.summary["rms_slope"].get<double>();
  const double ms_slope = r_iid.summary["mean_square_slope"].get<double>();
  const double ratio = r_chain.summary["median_decay_ratio"].get<double>();
  const double oracle = r_iid.summary["oracle_rms_slope"].get<double>();
  const bool pass = std::abs(slope + 2.0 / 3.0) <= 0.15 && ratio < 0.25 && secs <= 300.0;
  return {pass, "i.i.d. RMS slope " + fmt("%.4f", slope) + " (target -2/3 +- 0.15), chain median ratio " +
                    fmt("%.4f", ratio) + " (limit 0.25); exact-moment RMS slope " + fmt("%.4f", oracle) +
                    ", mean-square slope " + fmt("%.4f", ms_slope) + " vs -2/3, " + fmt("%.1f", secs) + " s"};
}

// ============================================================================
// 9. Rate planner
// ============================================================================

Outcome criterion9() {
  double worst = 0.0;
  const auto t3 = rate_plan(Theorem::T3, 1.5, 0.25, 0.0);
  const auto t5 = rate_plan(Theorem::T5, 1.5, 0.25, 0.0);
  worst = std::max({std::abs(*t3.a - 11.0 / 18.0), std::abs(*t3.b - 4.0 / 9.0), std::abs(*t5.a - 2.0 / 9.0),
                    std::abs(*t5.b - 9.0 / 8.0), std::abs(gamma_prime(1.5, 1.0) - 1.0)});
  long violations = 0, points = 0;
  for (int i = 0; i < 20; ++i)
    for (int j = 0; j < 20; ++j) {
      const double p = 1.0 + (i + 0.5) / 20.0;
      const double delta = (2.0 - p) * (j + 0.5) / 20.0;
      ++points;
      try {
        const auto plan = rate_plan(Theorem::T3, p, delta, 0.0);
        if (!(*plan.a < 1.0 / p)) ++violations;
      } catch (const std::exception&) {
        ++violations;
      }
    }
  return {worst <= 1e-12 && violations == 0, "closed-form max error " + fmt("%.2e", worst) + " (tol 1e-12), " +
                                                 std::to_string(points) + " grid points, " +
                                                 std::to_string(violations) + " violations of a < 1/p"};
}

// ============================================================================
// 10. Bound domination
// ============================================================================

Outcome criterion10() {
  const auto t0 = std::chrono::steady_clock::now();
  ExperimentConfig c;
  c.model = "two_state";
  c.a = c.b = 0.25;
  c.kernel = "centered_product";
  c.n_values = {128, 512};
  c.replications = 2000;
  c.calibration_n = 256;
  c.r = 2.0;
  c.seed = 20240010;
  const auto report = run_bound_check(c);
  const double secs = elapsed_since(t0);
  bool pass = secs <= 600.0;
  std::string detail = "C_2 = " + fmt("%.4f", report.summary["C_r"].get<double>());
  for (const auto& e : report.summary["per_N"]) {
    const double rate = e["domination_rate"].get<double>();
    pass = pass && rate == 1.0 && e["counted_points"].get<long>() == 16;
    detail += ", N=" + std::to_string(e["N"].get<long>()) + " domination " + fmt("%.3f", rate);
  }
  return {pass, detail + ", " + fmt("%.1f", secs) + " s"};
}

// ============================================================================
// 11. Determinism
// ============================================================================

Outcome criterion11() {
  ExperimentConfig base;
  base.seed = 777;
  base.replications = 40;
  std::vector<std::pair<std::string, std::function<ExperimentReport(unsigned)>>> runs;
  runs.emplace_back("simulate", [&](unsigned t) {
    auto c = base;
    c.threads = t;
    c.n_values = {200};
    return run_simulate(c);
  });
  runs.emplace_back("fclt", [&](unsigned t) {
    auto c = base;
    c.threads = t;
    c.values = {-1.0, 1.0};
    c.n_values = {200};
    c.reference_paths = 100;
    return run_fclt(c);
  });
  runs.emplace_back("slln", [&](unsigned t) {
    auto c = base;
    c.threads = t;
    c.kernel = "centered_product";
    c.n_values = {50, 100, 200};
    return run_slln(c);
  });
  runs.emplace_back("bound", [&](unsigned t) {
    auto c = base;
    c.threads = t;
    c.kernel = "centered_product";
    c.n_values = {64};
    c.calibration_n = 64;
    return run_bound_check(c);
  });
  std::string failed;
  for (const auto& [name, run] : runs) {
    const auto a = run(1), b = run(1), c = run(3);
    if (a.csv() != b.csv() || a.json() != b.json() || a.csv() != c.csv() || a.json() != c.json()) failed += " " + name;
  }
  return {failed.empty(), failed.empty() ? "simulate, fclt, slln, bound: CSV and JSON byte-identical across reruns "
                                           "and thread counts"
                                         : "differing outputs:" + failed};
}

const std::vector<std::pair<std::string, std::function<Outcome()>>>& criteria() {
  static const std::vector<std::pair<std::string, std::function<Outcome()>>> list{
      {"partition exactness", criterion1},  {"blocking inequality", criterion2},
      {"Hoeffding identity", criterion3},   {"mixing oracles", criterion4},
      {"Berbee coupling", criterion5},      {"Gamma closed form", criterion6},
      {"FCLT desk scale", criterion7},      {"SLLN decay", criterion8},
      {"rate planner", criterion9},         {"bound domination", criterion10},
      {"determinism", criterion11}};
  return list;
}

}  // namespace

int main(int argc, char** argv) {
  int only = 0;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--criterion" && i + 1 < argc) {
      only = std::atoi(argv[++i]);
    } else {
      std::cerr << "usage: acceptance [--criterion N]\n";
      return 2;
    }
  }
  const auto& list = criteria();
  if (only < 0 || only > static_cast<int>(list.size())) {
    std::cerr << "criterion must be in 1.." << list.size() << "\n";
    return 2;
  }
  int failures = 0;
  for (std::size_t i = 0; i < list.size(); ++i) {
    if (only != 0 && static_cast<int>(i + 1) != only) continue;
    Outcome o;
    try {
      o = list[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::cout << (o.pass ? "PASS" : "FAIL") << "  criterion " << (i + 1) << " (" << list[i].first << "): " << o.detail
              << std::endl;
    failures += o.pass ? 0 : 1;
  }
  return failures == 0 ? 0 : 1;
}
