#pragma once

// Monte-Carlo harness: long-run covariance operator, functional CLT, strong
// law decay rates and domination of the deviation bound, with reproducible
// CSV/JSON reports.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "hustat/blocking.hpp"
#include "hustat/bounds.hpp"
#include "hustat/config.hpp"
#include "hustat/hilbert.hpp"
#include "hustat/kernels.hpp"
#include "hustat/processes.hpp"
#include "hustat/rng.hpp"
#include "hustat/stats.hpp"
#include "hustat/ustat.hpp"

namespace hustat {

using Json = nlohmann::ordered_json;

/// A model or kernel violates the hypotheses of the theorem being checked.
struct HypothesisError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// RNG stream ids.
inline constexpr std::uint64_t kStreamReplication = 0;
inline constexpr std::uint64_t kStreamReference = 1;
inline constexpr std::uint64_t kStreamCoupling = 2;
inline constexpr std::uint64_t kStreamCalibration = 3;

// -----------------------------------------------------------------------------
// Configuration
// -----------------------------------------------------------------------------

struct ExperimentConfig {
  // [model]
  std::string model = "two_state";  // two_state | iid | markov
  double a = 0.25;                  // two_state: P(0 -> 1)
  double b = 0.25;                  // two_state: P(1 -> 0)
  std::vector<double> weights;      // iid
  std::vector<std::vector<double>> transition;  // markov
  std::vector<double> values;       // scalar value of each state; default 0, 1, ...
  // [kernel]
  std::string kernel = "sum_product";
  // [run]
  std::vector<long> n_values{1500};
  long replications = 800;
  std::uint64_t seed = 1;
  unsigned threads = 0;
  std::string out_dir = ".";
  // [rates]
  std::string theorem;  // empty: T2 (nondegenerate) or T4 (degenerate)
  std::string mode = "degenerate";
  double p = 1.5;
  double delta = 1.0;
  double eta = 0.1;
  // [bound]
  double r = 2.0;
  double C_r = 0.0;  // 0: calibrate
  long q = 0;        // 0: optimize per x
  long calibration_n = 256;
  long calibration_reps = 0;  // 0: same as replications
  std::string x_grid;         // "a:b:steps"; empty: median..max, 16 points
  // [fclt]
  long reference_paths = 2000;
  long grid_points = 32;

  void validate() const {
    if (n_values.empty()) throw ConfigError("n values must not be empty");
    for (std::size_t i = 0; i < n_values.size(); ++i) {
      if (n_values[i] < 3) throw ConfigError("n values must be >= 3");
      if (i > 0 && n_values[i] <= n_values[i - 1]) throw ConfigError("n values must be increasing");
    }
    if (replications < 1) throw ConfigError("replication count must be >= 1");
    if (reference_paths < 1 || grid_points < 1) throw ConfigError("reference_paths and grid_points must be >= 1");
    if (mode != "degenerate" && mode != "nondegenerate") throw ConfigError("mode must be degenerate or nondegenerate");
    if (calibration_n < 3) throw ConfigError("calibration_n must be >= 3");
  }

  /// Canonical echo; excludes output location and thread count, which do not
  /// affect results.
  Json to_json() const {
    Json j;
    j["model"] = model;
    j["a"] = a;
    j["b"] = b;
    j["weights"] = weights;
    j["transition"] = transition;
    j["values"] = values;
    j["kernel"] = kernel;
    j["n"] = n_values;
    j["replications"] = replications;
    j["seed"] = seed;
    j["theorem"] = theorem;
    j["mode"] = mode;
    j["p"] = p;
    j["delta"] = delta;
    j["eta"] = eta;
    j["r"] = r;
    j["C_r"] = C_r;
    j["q"] = q;
    j["calibration_n"] = calibration_n;
    j["calibration_reps"] = calibration_reps;
    j["x_grid"] = x_grid;
    j["reference_paths"] = reference_paths;
    j["grid_points"] = grid_points;
    return j;
  }

  /// FNV-1a of the canonical echo without the seed.
  std::uint64_t hash() const {
    Json j = to_json();
    j.erase("seed");
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : j.dump()) {
      h ^= c;
      h *= 1099511628211ULL;
    }
    return h;
  }
};

inline const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys{
      "model.kind", "model.a", "model.b", "model.weights", "model.transition", "model.values",
      "kernel.id", "run.n", "run.replications", "run.seed", "run.threads", "run.out",
      "rates.theorem", "rates.mode", "rates.p", "rates.delta", "rates.eta",
      "bound.r", "bound.C_r", "bound.q", "bound.calibration_n", "bound.calibration_reps", "bound.x_grid",
      "fclt.reference_paths", "fclt.grid_points"};
  return keys;
}

/// "r00,r01;r10,r11" -> rows.
inline std::vector<std::vector<double>> parse_matrix_rows(const std::string& text) {
  std::vector<std::vector<double>> rows;
  std::stringstream ss(text);
  std::string row;
  while (std::getline(ss, row, ';')) {
    std::vector<double> r;
    std::stringstream rs(row);
    std::string cell;
    while (std::getline(rs, cell, ',')) {
      try {
        r.push_back(std::stod(cell));
      } catch (const std::logic_error&) {
        throw ConfigError("bad matrix entry '" + cell + "'");
      }
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

inline void apply_config(const ConfigFile& f, ExperimentConfig& c) {
  const auto unknown = f.unknown_keys(config_keys());
  if (!unknown.empty()) throw ConfigError("unknown config key '" + unknown.front() + "'");
  if (auto v = f.get_string("model.kind")) c.model = *v;
  if (auto v = f.get_double("model.a")) c.a = *v;
  if (auto v = f.get_double("model.b")) c.b = *v;
  if (auto v = f.get_doubles("model.weights")) c.weights = *v;
  if (auto v = f.get_string("model.transition")) c.transition = parse_matrix_rows(*v);
  if (auto v = f.get_doubles("model.values")) c.values = *v;
  if (auto v = f.get_string("kernel.id")) c.kernel = *v;
  if (auto v = f.get_longs("run.n")) c.n_values = *v;
  if (auto v = f.get_long("run.replications")) c.replications = *v;
  if (auto v = f.get_u64("run.seed")) c.seed = *v;
  if (auto v = f.get_long("run.threads")) c.threads = static_cast<unsigned>(std::max(0L, *v));
  if (auto v = f.get_string("run.out")) c.out_dir = *v;
  if (auto v = f.get_string("rates.theorem")) c.theorem = *v;
  if (auto v = f.get_string("rates.mode")) c.mode = *v;
  if (auto v = f.get_double("rates.p")) c.p = *v;
  if (auto v = f.get_double("rates.delta")) c.delta = *v;
  if (auto v = f.get_double("rates.eta")) c.eta = *v;
  if (auto v = f.get_double("bound.r")) c.r = *v;
  if (auto v = f.get_double("bound.C_r")) c.C_r = *v;
  if (auto v = f.get_long("bound.q")) c.q = *v;
  if (auto v = f.get_long("bound.calibration_n")) c.calibration_n = *v;
  if (auto v = f.get_long("bound.calibration_reps")) c.calibration_reps = *v;
  if (auto v = f.get_string("bound.x_grid")) c.x_grid = *v;
  if (auto v = f.get_long("fclt.reference_paths")) c.reference_paths = *v;
  if (auto v = f.get_long("fclt.grid_points")) c.grid_points = *v;
}

/// "a:b:steps" -> steps equally spaced points from a to b.
inline std::vector<double> parse_grid(const std::string& text) {
  std::vector<double> parts;
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ':')) {
    try {
      parts.push_back(std::stod(tok));
    } catch (const std::logic_error&) {
      throw ConfigError("grid '" + text + "': bad number '" + tok + "'");
    }
  }
  if (parts.size() != 3) throw ConfigError("grid '" + text + "': expected a:b:steps");
  const auto steps = static_cast<long>(parts[2]);
  if (steps < 1 || static_cast<double>(steps) != parts[2] || !(parts[1] >= parts[0]))
    throw ConfigError("grid '" + text + "': need a <= b and a positive integer step count");
  std::vector<double> grid;
  for (long i = 0; i < steps; ++i)
    grid.push_back(steps == 1 ? parts[0] : parts[0] + (parts[1] - parts[0]) * static_cast<double>(i) / (steps - 1));
  return grid;
}

// -----------------------------------------------------------------------------
// Models and kernels from configuration
// -----------------------------------------------------------------------------

inline FiniteChain build_chain(const ExperimentConfig& c) {
  FiniteChain chain = [&] {
    if (c.model == "two_state") return FiniteChain::two_state(c.a, c.b);
    if (c.model == "iid") {
      if (c.weights.empty()) throw ConfigError("iid model needs weights");
      return FiniteChain::iid(Eigen::Map<const Eigen::VectorXd>(c.weights.data(), static_cast<Eigen::Index>(c.weights.size())));
    }
    if (c.model == "markov") {
      const auto s = static_cast<Eigen::Index>(c.transition.size());
      if (s == 0) throw ConfigError("markov model needs a transition matrix");
      Matrix p(s, s);
      for (Eigen::Index i = 0; i < s; ++i) {
        if (static_cast<Eigen::Index>(c.transition[static_cast<std::size_t>(i)].size()) != s)
          throw ConfigError("transition matrix must be square");
        for (Eigen::Index j = 0; j < s; ++j) p(i, j) = c.transition[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
      }
      return FiniteChain::markov(p);
    }
    throw ConfigError("unknown model '" + c.model + "' (expected two_state, iid or markov)");
  }();
  if (c.values.empty()) return chain;
  if (static_cast<int>(c.values.size()) != chain.states()) throw ConfigError("values needs one entry per state");
  Matrix emb(chain.states(), 1);
  for (int i = 0; i < chain.states(); ++i) emb(i, 0) = c.values[static_cast<std::size_t>(i)];
  if (chain.is_iid()) return FiniteChain::iid(chain.stationary(), emb);
  return FiniteChain::markov(chain.transition(), chain.stationary(), emb);
}

/// Kernels on the chain's states, tabulated through the state embedding:
/// product xy, centered_product (x-mu)(y-mu) (degenerate), sum_product
/// x + y + xy, gini |x-y|, dot <x,y>, spatial_sign, zero, or table:PATH.
inline Kernel<StateIndex> build_kernel(const std::string& id, const FiniteChain& chain) {
  const auto values = chain.scalar_embedding();
  if (id.rfind("table:", 0) == 0) {
    auto k = load_table_kernel_file(id.substr(6));
    if (k.table()->states() != chain.states()) throw ConfigError("table kernel state count differs from the model");
    return k;
  }
  if (id == "zero") return on_states(constant_kernel<double>(HPoint::Zero(1)), values);
  if (id == "centered_product") {
    double mu = 0.0;
    for (int s = 0; s < chain.states(); ++s) mu += chain.stationary()(s) * values[static_cast<std::size_t>(s)];
    std::vector<double> centered = values;
    for (double& v : centered) v -= mu;
    auto k = on_states(product_kernel(), centered);
    return Kernel<StateIndex>("centered_product", k.dim(), k.symmetric(),
                              [k](const StateIndex& x, const StateIndex& y, Eigen::Ref<HPoint> out) { k.eval_into(x, y, out); },
                              k.shared_table());
  }
  if (id == "sum_product") {
    Kernel<double> sp("sum_product", 1, true,
                      [](const double& x, const double& y, Eigen::Ref<HPoint> out) { out(0) = x + y + x * y; });
    return on_states(sp, values);
  }
  switch (parse_kernel_name(id)) {
    case KernelName::product: return on_states(product_kernel(), values);
    case KernelName::gini: return on_states(gini_kernel(), values);
    case KernelName::dot: return on_states(dot_kernel(chain.embedding().cols()), chain.vector_embedding());
    case KernelName::spatial_sign:
      return on_states(spatial_sign_kernel(chain.embedding().cols()), chain.vector_embedding());
    default: throw ConfigError("kernel '" + id + "' needs table:PATH");
  }
}

// -----------------------------------------------------------------------------
// Exact moments on finite chains
// -----------------------------------------------------------------------------

/// E h(X_i, X_{i+l}) for l = 1..max_lag (index l-1).
inline std::vector<HPoint> lag_means(const FiniteChain& chain, const Kernel<StateIndex>& h, long max_lag) {
  const int s = chain.states();
  const auto& pi = chain.stationary();
  std::vector<HPoint> out;
  Matrix pk = chain.transition();
  HPoint buf(h.dim());
  std::vector<HPoint> table;
  for (int x = 0; x < s; ++x)
    for (int y = 0; y < s; ++y) table.push_back(h(x, y));
  for (long l = 1; l <= max_lag; ++l) {
    HPoint m = HPoint::Zero(h.dim());
    for (int x = 0; x < s; ++x)
      for (int y = 0; y < s; ++y) m += pi(x) * pk(x, y) * table[static_cast<std::size_t>(x * s + y)];
    out.push_back(std::move(m));
    pk = pk * chain.transition();
  }
  return out;
}

/// E U_k(h) for k = 0..n, from E U_k = E U_{k-1} + sum_{l=1}^{k-1} E h(X_0, X_l).
inline std::vector<HPoint> exact_prefix_means(const FiniteChain& chain, const Kernel<StateIndex>& h, long n) {
  const auto m = lag_means(chain, h, std::max(1L, n - 1));
  std::vector<HPoint> eu(static_cast<std::size_t>(n + 1), HPoint::Zero(h.dim()));
  HPoint cum = HPoint::Zero(h.dim());
  for (long k = 2; k <= n; ++k) {
    cum += m[static_cast<std::size_t>(k - 2)];
    eu[static_cast<std::size_t>(k)] = eu[static_cast<std::size_t>(k - 1)] + cum;
  }
  return eu;
}

/// sup_{j >= 2} E||h(X_1, X_j)||, over lags up to max_lag and the independent limit.
inline double sup_pair_mean_norm(const FiniteChain& chain, const Kernel<StateIndex>& h, long max_lag) {
  const int s = chain.states();
  const auto& pi = chain.stationary();
  Matrix norms(s, s);
  for (int x = 0; x < s; ++x)
    for (int y = 0; y < s; ++y) norms(x, y) = h(x, y).norm();
  double best = 0.0;
  for (int x = 0; x < s; ++x)
    for (int y = 0; y < s; ++y) best += pi(x) * pi(y) * norms(x, y);
  Matrix pk = chain.transition();
  for (long l = 1; l <= max_lag; ++l) {
    double m = 0.0;
    for (int x = 0; x < s; ++x)
      for (int y = 0; y < s; ++y) m += pi(x) * pk(x, y) * norms(x, y);
    best = std::max(best, m);
    pk = pk * chain.transition();
  }
  return best;
}

// -----------------------------------------------------------------------------
// Long-run covariance operator
// -----------------------------------------------------------------------------

struct GammaResult {
  CovOperator gamma;
  long lags = 0;            // K actually used
  double tail_bound = 0.0;  // bound on the omitted part of the series
};

/// Gamma = C_0 + sum_{k=1}^K (C_k + C_k^T), C_k = E[h1(X_0) h1(X_k)^T], exact
/// through pi and P^k. With K <= 0 the cutoff is chosen so that the bound
/// 4 max||h1||^2 sum_{k>K} beta(k), with the beta tail extrapolated
/// geometrically, drops below 1e-10.
inline GammaResult gamma_operator(const FiniteChain& chain, const std::vector<HPoint>& h1, long K = 0) {
  const int s = chain.states();
  if (static_cast<int>(h1.size()) != s) throw std::invalid_argument("gamma_operator: h1 needs one value per state");
  const auto d = h1.front().size();
  const auto& pi = chain.stationary();
  Matrix H(s, d);
  double max_norm = 0.0;
  for (int x = 0; x < s; ++x) {
    H.row(x) = h1[static_cast<std::size_t>(x)].transpose();
    max_norm = std::max(max_norm, h1[static_cast<std::size_t>(x)].norm());
  }
  const Matrix D = pi.asDiagonal();
  Matrix gamma = H.transpose() * D * H;
  const bool automatic = K <= 0;
  const long cap = automatic ? 1000000 : K;
  Matrix pk = chain.transition();
  double prev_beta = 1.0, tail = 0.0;
  long k = 1;
  for (; k <= cap; ++k) {
    const Matrix ck = H.transpose() * D * pk * H;
    gamma += ck + ck.transpose();
    if (automatic) {
      double beta = 0.0;
      for (int i = 0; i < s; ++i)
        for (int j = 0; j < s; ++j) beta += pi(i) * std::abs(pk(i, j) - pi(j));
      beta *= 0.5;
      const double ratio = beta / prev_beta;
      tail = beta == 0.0 ? 0.0 : (ratio < 1.0 ? 4.0 * max_norm * max_norm * beta * ratio / (1.0 - ratio) : kInf);
      if (tail < 1e-10) break;
      prev_beta = beta;
    }
    pk = pk * chain.transition();
  }
  if (automatic && k > cap) throw std::invalid_argument("gamma_operator: series does not converge (chain not mixing)");
  return GammaResult{CovOperator(gamma, true), std::min(k, cap), automatic ? tail : 0.0};
}

inline GammaResult gamma_operator(const FiniteChain& chain, const UnaryMap<StateIndex>& h1, long K = 0) {
  std::vector<HPoint> v;
  for (int x = 0; x < chain.states(); ++x) v.push_back(h1(x));
  return gamma_operator(chain, v, K);
}

// -----------------------------------------------------------------------------
// Reports
// -----------------------------------------------------------------------------

struct ReportRow {
  long replication = 0;
  long n = 0;
  std::string metric;
  double value = 0.0;
};

struct ExperimentReport {
  std::string experiment;
  Json config;
  std::uint64_t config_hash = 0;
  std::uint64_t seed = 0;
  std::vector<ReportRow> rows;
  Json summary = Json::object();

  std::string csv() const {
    std::string out = "replication,n,metric,value\n";
    char buf[64];
    for (const auto& r : rows) {
      std::snprintf(buf, sizeof buf, "%.17g", r.value);
      out += std::to_string(r.replication) + "," + std::to_string(r.n) + "," + r.metric + "," + buf + "\n";
    }
    return out;
  }

  std::string json() const {
    Json j;
    j["experiment"] = experiment;
    j["seed"] = seed;
    j["config_hash"] = hex(config_hash);
    j["config"] = config;
    j["summary"] = summary;
    return j.dump(2) + "\n";
  }

  std::string file_stem() const { return experiment + "_" + hex(config_hash) + "_seed" + std::to_string(seed); }

  /// Writes <stem>.csv and <stem>.json into `dir`; returns the two paths.
  std::pair<std::string, std::string> write(const std::string& dir) const {
    std::filesystem::create_directories(dir);
    const auto base = std::filesystem::path(dir) / file_stem();
    const std::string csv_path = base.string() + ".csv", json_path = base.string() + ".json";
    std::ofstream(csv_path, std::ios::binary) << csv();
    std::ofstream(json_path, std::ios::binary) << json();
    return {csv_path, json_path};
  }

  static std::string hex(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
  }
};

namespace detail {

inline ExperimentReport start_report(const std::string& name, const ExperimentConfig& c) {
  ExperimentReport r;
  r.experiment = name;
  r.config = c.to_json();
  r.config_hash = c.hash();
  r.seed = c.seed;
  return r;
}

inline void append_rows(ExperimentReport& r, std::vector<std::vector<ReportRow>>& per_rep) {
  for (auto& v : per_rep)
    for (auto& row : v) r.rows.push_back(std::move(row));
}

inline TailModel chain_tail(const FiniteChain& chain) {
  if (chain.is_iid()) return GeometricTail{0.0, 0.5};
  const double rate = chain.spectral_gap_rate();
  if (rate >= 1.0 - 1e-12) return PolynomialTail{1.0, 0.0};
  return GeometricTail{1.0, std::max(rate, 1e-300)};
}

}  // namespace detail

// -----------------------------------------------------------------------------
// Simulation
// -----------------------------------------------------------------------------

/// One path of U_k, k = 2..n (coordinates and norm) for the largest n.
inline ExperimentReport run_simulate(const ExperimentConfig& c) {
  c.validate();
  const auto chain = build_chain(c);
  const auto h = build_kernel(c.kernel, chain);
  const long n = c.n_values.back();
  auto rng = derive_rng(c.seed, kStreamReplication, 0);
  const auto seq = chain.simulate(static_cast<std::size_t>(n), rng);
  const auto path = u_stat_prefixes(h, std::span<const StateIndex>(seq));
  auto report = detail::start_report("simulate", c);
  double max_norm = 0.0;
  for (long k = 2; k <= n; ++k) {
    const HPoint u = path.at(static_cast<std::size_t>(k));
    for (Eigen::Index i = 0; i < u.size(); ++i) report.rows.push_back({0, k, "U_" + std::to_string(i), u(i)});
    report.rows.push_back({0, k, "norm", u.norm()});
    max_norm = std::max(max_norm, u.norm());
  }
  report.summary["n"] = n;
  report.summary["final_norm"] = path.at(static_cast<std::size_t>(n)).norm();
  report.summary["max_norm"] = max_norm;
  return report;
}

// -----------------------------------------------------------------------------
// Functional CLT
// -----------------------------------------------------------------------------

/// Checks (C.1)-(C.3) for a finite chain; throws HypothesisError naming the
/// violated condition.
inline Json fclt_conditions(const FiniteChain& chain, const Kernel<StateIndex>& h, const UnaryMap<StateIndex>& h1) {
  Json j;
  const auto c2 = hypothesis_check(detail::chain_tail(chain), Theorem::FCLT, 1.5, 1.0, 0.1);
  j["C2"] = c2.pass;
  if (!c2.pass) throw HypothesisError("condition (C.2) violated: " + c2.condition);
  std::vector<double> norms, probs;
  for (int x = 0; x < chain.states(); ++x) {
    norms.push_back(h1(x).norm());
    probs.push_back(chain.stationary()(x));
  }
  const auto prof = chain.mixing_profile(200);
  const double c1 = c1_integral(prof.alpha, QuantileFunction::of_finite_law(norms, probs), 200);
  if (!std::isfinite(c1)) throw HypothesisError("condition (C.1) violated: alpha-quantile series diverges");
  j["C1_partial_sum"] = c1;
  const double c3 = sup_pair_mean_norm(chain, h, 200);
  if (!std::isfinite(c3)) throw HypothesisError("condition (C.3) violated: sup_j E||h(X_1,X_j)|| is infinite");
  j["C3_sup_mean_norm"] = c3;
  return j;
}

/// Scaled centered polygonal process n^{-3/2}(U(t) - E U(t)) on the grid
/// t = i/G, compared with its Gaussian limit. The projection at t = 1 is
/// compared with N(0, <Gamma u, u>), u the leading eigenvector of Gamma. The
/// linear part of U_[nt] is ([nt]-1) sum_{i<=[nt]} h1(X_i), so the limit
/// process is t W_Gamma(t); the sup-norm functional is compared with that
/// limit, and with sup ||W_Gamma(t)|| for reference.
inline ExperimentReport run_fclt(const ExperimentConfig& c) {
  c.validate();
  const auto chain = build_chain(c);
  const auto h = build_kernel(c.kernel, chain);
  if (!h.symmetric()) throw HypothesisError("FCLT requires a symmetric kernel");
  const auto comp = hoeffding_components(h, MarginalLaw<StateIndex>(chain.marginal_law()));
  auto report = detail::start_report("fclt", c);
  report.summary["conditions"] = fclt_conditions(chain, h, comp.h10);

  const auto g = gamma_operator(chain, comp.h10);
  const long n = c.n_values.back();
  const long G = c.grid_points;
  const auto eu = exact_prefix_means(chain, h, n);
  const double scale = std::pow(static_cast<double>(n), -1.5);
  const auto d = h.dim();

  Eigen::SelfAdjointEigenSolver<Matrix> es(g.gamma.matrix());
  const HPoint u = es.eigenvectors().col(d - 1);
  const double guu = g.gamma.quadratic(u);

  std::vector<double> grid(static_cast<std::size_t>(G + 1));
  for (long i = 0; i <= G; ++i) grid[static_cast<std::size_t>(i)] = static_cast<double>(i) / static_cast<double>(G);

  const auto reps = static_cast<std::size_t>(c.replications);
  std::vector<double> proj(reps), sups(reps);
  std::vector<std::vector<ReportRow>> rows(reps);
  parallel_for(reps, c.threads, [&](std::size_t rep) {
    auto rng = derive_rng(c.seed, kStreamReplication, rep);
    const auto seq = chain.simulate(static_cast<std::size_t>(n), rng);
    const auto path = u_stat_prefixes(h, std::span<const StateIndex>(seq));
    double sup = 0.0;
    HPoint z1;
    for (long i = 1; i <= G; ++i) {
      const double nt = static_cast<double>(n) * grid[static_cast<std::size_t>(i)];
      const auto k = std::min(static_cast<std::size_t>(std::floor(nt)), static_cast<std::size_t>(n));
      const double frac = nt - static_cast<double>(k);
      HPoint mean_t = eu[k];
      if (k < static_cast<std::size_t>(n) && frac > 0.0) mean_t += frac * (eu[k + 1] - eu[k]);
      const HPoint z = scale * (path.polygonal(grid[static_cast<std::size_t>(i)]) - mean_t);
      sup = std::max(sup, z.norm());
      if (i == G) z1 = z;
    }
    proj[rep] = z1.dot(u);
    sups[rep] = sup;
    rows[rep] = {{static_cast<long>(rep), n, "proj_t1", proj[rep]}, {static_cast<long>(rep), n, "sup_norm", sup}};
  });
  detail::append_rows(report, rows);

  const auto refs = static_cast<std::size_t>(c.reference_paths);
  std::vector<double> ref_limit(refs), ref_brownian(refs);
  parallel_for(refs, c.threads, [&](std::size_t j) {
    auto rng = derive_rng(c.seed, kStreamReference, j);
    const auto w = sample_brownian_path(g.gamma, grid, rng);
    double a = 0.0, b = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
      a = std::max(a, grid[i] * w[i].norm());
      b = std::max(b, w[i].norm());
    }
    ref_limit[j] = a;
    ref_brownian[j] = b;
  });

  Json& s = report.summary;
  s["n"] = n;
  s["replications"] = c.replications;
  s["gamma"] = std::vector<double>(g.gamma.matrix().data(), g.gamma.matrix().data() + g.gamma.matrix().size());
  s["gamma_lags"] = g.lags;
  s["gamma_tail_bound"] = g.tail_bound;
  s["gamma_clipped_mass"] = g.gamma.clipped_mass();
  s["gamma_uu"] = guu;
  s["sup_norm_q95"] = quantile(sups, 0.95);
  if (guu > 1e-14) {
    std::vector<double> standardized(proj);
    for (double& v : standardized) v /= std::sqrt(guu);
    s["ks_projection"] = ks_standard_normal(standardized);
    s["variance_ratio"] = reps > 1 ? variance(proj) / guu : 1.0;
    s["ks_sup_limit"] = ks_two_sample(sups, ref_limit);
    s["ks_sup_brownian"] = ks_two_sample(sups, ref_brownian);
  } else {
    s["ks_projection"] = nullptr;
    s["variance_ratio"] = nullptr;
    s["ks_sup_limit"] = nullptr;
    s["ks_sup_brownian"] = nullptr;
  }
  return report;
}

// -----------------------------------------------------------------------------
// Strong laws
// -----------------------------------------------------------------------------

/// s_n = n^{-(1+1/p)}||U_n|| (nondegenerate) or n^{-2/p}||U_n|| (degenerate)
/// along the n grid, with RMS, mean-square, median and 90% quantile per n,
/// their log-log slopes and decay ratios s_{n_max}/s_{n_min}.
inline ExperimentReport run_slln(const ExperimentConfig& c) {
  c.validate();
  const auto chain = build_chain(c);
  const auto h = build_kernel(c.kernel, chain);
  const bool degenerate = c.mode == "degenerate";
  const auto law = chain.marginal_law();
  const double defect = degeneracy_defect(h, law);
  if (degenerate && defect > 1e-10)
    throw HypothesisError("degenerate mode: E[h(X,X')|X] does not vanish (defect " + std::to_string(defect) + ")");
  const Theorem th = c.theorem.empty() ? (degenerate ? Theorem::T4 : Theorem::T2) : parse_theorem(c.theorem);
  const auto hyp = hypothesis_check(detail::chain_tail(chain), th, c.p, c.delta, c.eta);
  if (!hyp.pass) throw HypothesisError("mixing condition violated: " + hyp.condition);

  const double expo = degenerate ? 2.0 / c.p : 1.0 + 1.0 / c.p;
  const long n_max = c.n_values.back();
  const auto reps = static_cast<std::size_t>(c.replications);
  const std::size_t m = c.n_values.size();
  std::vector<std::vector<double>> s(m, std::vector<double>(reps));
  std::vector<std::vector<ReportRow>> rows(reps);
  parallel_for(reps, c.threads, [&](std::size_t rep) {
    auto rng = derive_rng(c.seed, kStreamReplication, rep);
    const auto seq = chain.simulate(static_cast<std::size_t>(n_max), rng);
    const auto path = u_stat_prefixes(h, std::span<const StateIndex>(seq));
    for (std::size_t i = 0; i < m; ++i) {
      const long n = c.n_values[i];
      const double v = std::pow(static_cast<double>(n), -expo) * path.at(static_cast<std::size_t>(n)).norm();
      s[i][rep] = v;
      rows[rep].push_back({static_cast<long>(rep), n, "s_n", v});
    }
  });
  auto report = detail::start_report("slln", c);
  detail::append_rows(report, rows);

  std::vector<double> ns, rms, ms, med, q90;
  for (std::size_t i = 0; i < m; ++i) {
    double sq = 0.0;
    for (double v : s[i]) sq += v * v;
    sq /= static_cast<double>(reps);
    ns.push_back(static_cast<double>(c.n_values[i]));
    ms.push_back(sq);
    rms.push_back(std::sqrt(sq));
    med.push_back(quantile(s[i], 0.5));
    q90.push_back(quantile(s[i], 0.9));
  }
  int inversions = 0;
  for (std::size_t i = 1; i < m; ++i) inversions += med[i] > med[i - 1] ? 1 : 0;

  Json& j = report.summary;
  j["mode"] = c.mode;
  j["theorem"] = to_string(th);
  j["normalization_exponent"] = expo;
  j["mixing_condition"] = hyp.condition;
  j["degeneracy_defect"] = defect;
  j["n"] = c.n_values;
  j["rms"] = rms;
  j["mean_square"] = ms;
  j["median"] = med;
  j["q90"] = q90;
  j["median_inversions"] = inversions;
  const bool positive = std::all_of(rms.begin(), rms.end(), [](double v) { return v > 0.0; }) &&
                        std::all_of(med.begin(), med.end(), [](double v) { return v > 0.0; });
  if (m >= 2 && positive) {
    j["rms_slope"] = log_log_slope(ns, rms);
    j["mean_square_slope"] = log_log_slope(ns, ms);
    j["median_slope"] = log_log_slope(ns, med);
    j["median_decay_ratio"] = med.back() / med.front();
    j["q90_decay_ratio"] = q90.back() / q90.front();
  } else {
    j["rms_slope"] = nullptr;
    j["mean_square_slope"] = nullptr;
    j["median_slope"] = nullptr;
    j["median_decay_ratio"] = nullptr;
    j["q90_decay_ratio"] = nullptr;
  }
  if (degenerate && chain.is_iid()) {
    // E||U_n||^2 = binom(n,2) E||h(X,X')||^2 for degenerate h on i.i.d. data.
    const double eh2 = kernel_moment(h, law, 2.0);
    std::vector<double> oracle;
    for (double n : ns) oracle.push_back(std::sqrt(std::pow(n, -2.0 * expo) * 0.5 * n * (n - 1.0) * eh2));
    j["oracle_rms"] = oracle;
    if (m >= 2 && eh2 > 0.0) j["oracle_rms_slope"] = log_log_slope(ns, oracle);
  }
  return report;
}

// -----------------------------------------------------------------------------
// Bound domination
// -----------------------------------------------------------------------------

struct BoundCurve {
  std::vector<double> x, tail, bound;
  std::vector<long> q;
  std::vector<bool> saturated;
};

namespace detail {

/// Bound at each x for a given C_r, with q fixed or optimized.
inline void evaluate_bound(const FiniteChain& chain, BoundInputs in, long fixed_q, BoundCurve& curve) {
  const auto qs = fixed_q > 0 ? std::vector<long>{fixed_q} : feasible_q_range(in.N);
  curve.bound.clear();
  curve.q.clear();
  for (double x : curve.x) {
    in.x = x;
    const auto best = optimize_q(in, qs, [&](long q) { return chain.is_iid() ? 0.0 : chain.beta(q); });
    curve.bound.push_back(best.value.total);
    curve.q.push_back(best.q);
  }
}

inline bool dominates(const BoundCurve& c, std::size_t i) { return c.bound[i] >= c.tail[i]; }

/// Points entering the domination rate: unsaturated tails, or saturated ones
/// already dominated.
inline bool counted(const BoundCurve& c, std::size_t i) { return !c.saturated[i] || dominates(c, i); }

}  // namespace detail

/// Empirical tail of max_{2<=n<=N}||U_n|| against the deviation bound for each
/// N in the config, with C_r from the config or calibrated on the i.i.d. model
/// sharing the chain's marginal law.
inline ExperimentReport run_bound_check(const ExperimentConfig& c) {
  c.validate();
  const auto chain = build_chain(c);
  const auto h = build_kernel(c.kernel, chain);
  const auto law = chain.marginal_law();
  if (degeneracy_defect(h, law) > 1e-10) throw HypothesisError("bound check requires a degenerate kernel");
  auto report = detail::start_report("bound", c);
  Json& s = report.summary;

  double C = c.C_r;
  if (C <= 0.0) {
    const auto iid = FiniteChain::iid(chain.stationary(), chain.embedding());
    const long reps = c.calibration_reps > 0 ? c.calibration_reps : c.replications;
    const auto cal = calibrate_Cr(iid, h, c.r, c.calibration_n, reps, c.seed, c.threads);
    C = cal.c;
    s["calibration"] = {{"N", c.calibration_n}, {"replications", reps}, {"c_raw", cal.c_raw}, {"C_r", cal.c},
                        {"mean_max_r", cal.mean_max_r}, {"moment_r", cal.moment_r}};
  }
  if (!(C > 0.0)) throw HypothesisError("calibrated C_r is zero (kernel vanishes)");
  s["C_r"] = C;

  const double m_le = kernel_moment(h, law, c.r);
  Json per_n = Json::array();
  for (long N : c.n_values) {
    const auto reps = static_cast<std::size_t>(c.replications);
    std::vector<double> maxima(reps);
    const auto base = derive_seed(c.seed, kStreamReplication, static_cast<std::uint64_t>(N));
    parallel_for(reps, c.threads, [&](std::size_t rep) {
      auto rng = derive_rng(base, kStreamReplication, rep);
      const auto seq = chain.simulate(static_cast<std::size_t>(N), rng);
      maxima[rep] = max_prefix_norm(h, std::span<const StateIndex>(seq));
    });
    for (std::size_t rep = 0; rep < reps; ++rep) report.rows.push_back({static_cast<long>(rep), N, "max_norm", maxima[rep]});

    BoundCurve curve;
    if (c.x_grid.empty()) {
      const double lo = quantile(maxima, 0.5), hi = *std::max_element(maxima.begin(), maxima.end());
      for (int i = 0; i < 16; ++i) curve.x.push_back(lo + (hi - lo) * i / 15.0);
    } else {
      curve.x = parse_grid(c.x_grid);
    }
    for (double& x : curve.x) x = std::max(x, 1e-12);
    for (double x : curve.x) {
      const auto above = std::count_if(maxima.begin(), maxima.end(), [x](double v) { return v > x; });
      curve.tail.push_back(static_cast<double>(above) / static_cast<double>(reps));
      curve.saturated.push_back(above == static_cast<long>(reps));
    }

    BoundInputs in;
    in.r = c.r;
    in.N = N;
    in.m_le = m_le;
    in.sup_mean_norm = sup_pair_mean_norm(chain, h, N);
    in.C_r = C;
    detail::evaluate_bound(chain, in, c.q, curve);

    std::size_t counted = 0, dominated = 0;
    for (std::size_t i = 0; i < curve.x.size(); ++i) {
      if (!detail::counted(curve, i)) continue;
      ++counted;
      dominated += detail::dominates(curve, i) ? 1 : 0;
    }

    // Smallest C_r dominating every unsaturated point, by bisection.
    auto all_dominated = [&](double cr) {
      BoundCurve trial = curve;
      BoundInputs t = in;
      t.C_r = cr;
      detail::evaluate_bound(chain, t, c.q, trial);
      for (std::size_t i = 0; i < trial.x.size(); ++i)
        if (!trial.saturated[i] && !detail::dominates(trial, i)) return false;
      return true;
    };
    double lo = 0.0, hi = C;
    std::optional<double> minimal;
    for (int i = 0; i < 60 && !all_dominated(hi); ++i) hi *= 2.0;
    if (all_dominated(hi)) {
      if (all_dominated(1e-300)) {
        hi = 0.0;
      } else {
        for (int i = 0; i < 60; ++i) {
          const double mid = 0.5 * (lo + hi);
          (all_dominated(mid) ? hi : lo) = mid;
        }
      }
      minimal = hi;
    }

    Json entry;
    entry["N"] = N;
    entry["x"] = curve.x;
    entry["empirical_tail"] = curve.tail;
    entry["bound"] = curve.bound;
    entry["q"] = curve.q;
    std::vector<int> sat;
    for (bool b : curve.saturated) sat.push_back(b ? 1 : 0);
    entry["saturated"] = sat;
    entry["median_max"] = quantile(maxima, 0.5);
    entry["counted_points"] = counted;
    entry["domination_rate"] = counted ? static_cast<double>(dominated) / static_cast<double>(counted) : 1.0;
    entry["minimal_C_r"] = minimal ? Json(*minimal) : Json(nullptr);
    entry["sup_mean_norm"] = in.sup_mean_norm;
    per_n.push_back(entry);
  }
  s["moment_r"] = m_le;
  s["per_N"] = per_n;
  return report;
}

// -----------------------------------------------------------------------------
// Blocking decomposition dump
// -----------------------------------------------------------------------------

/// Family cardinalities for (n, q) and both sides of the blocking inequality on
/// one simulated path, as CSV lines "kind,name,value".
inline std::string decompose_csv(const ExperimentConfig& c, long n, long q) {
  const auto part = partition_indices(n, q);
  std::ostringstream out;
  out << "kind,name,value\n";
  for (int a = 1; a <= 5; ++a) out << "family," << a << "," << part.cardinality(a) << "\n";
  out << "family,total," << part.total() << "\n";
  const auto chain = build_chain(c);
  const auto h = build_kernel(c.kernel, chain);
  const auto [lo, hi] = required_index_range(n, q);
  auto rng = derive_rng(c.seed, kStreamReplication, 0);
  const auto path = chain.simulate_indexed(lo, hi, rng);
  const auto t = block_terms(h, path, n, q);
  char buf[64];
  auto put = [&](const std::string& name, double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    out << "term," << name << "," << buf << "\n";
  };
  for (int i = 0; i < 4; ++i) put("M" + std::to_string(i + 1), t.M[static_cast<std::size_t>(i)]);
  for (int i = 0; i < 5; ++i) put("R" + std::to_string(i + 1), t.R[static_cast<std::size_t>(i)]);
  put("lhs", t.lhs);
  put("rhs", t.rhs());
  put("slack", t.slack());
  return out.str();
}

}  // namespace hustat
