#pragma once

// Deviation inequality for max_n ||U_n(h)|| of a degenerate kernel, choice of
// the block length q, exponent schedules of the strong laws, and checks of the
// mixing hypotheses against closed-form tail models.

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "hustat/kernels.hpp"
#include "hustat/processes.hpp"
#include "hustat/rng.hpp"
#include "hustat/ustat.hpp"

namespace hustat {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

// -----------------------------------------------------------------------------
// Deviation bound
// -----------------------------------------------------------------------------

/// Inputs of the four-term bound. H = ||h(X_1, X_1')||.
struct BoundInputs {
  double r = 2.0;
  long q = 1;
  long N = 3;
  double x = 1.0;
  double R = kInf;
  double m_le = 0.0;           // E[H^r 1{H <= R}]
  double m_gt = 0.0;           // E[H 1{H > R}]
  double sup_mean_norm = 0.0;  // sup_{j>=2} E||h(X_1, X_j)||
  double beta_q = 0.0;         // beta(q)
  double C_r = 1.0;

  void validate() const {
    if (!(r >= 2.0)) throw std::invalid_argument("bound: r must be >= 2");
    if (q < 1 || N <= 2 * q) throw std::invalid_argument("bound: requires N > 2q >= 2");
    if (!(x > 0.0)) throw std::invalid_argument("bound: x must be positive");
    if (!(R > 0.0)) throw std::invalid_argument("bound: R must be positive");
    if (!(m_le >= 0.0) || !(m_gt >= 0.0) || !(sup_mean_norm >= 0.0))
      throw std::invalid_argument("bound: moments must be nonnegative");
    if (!(beta_q >= 0.0 && beta_q <= 1.0)) throw std::invalid_argument("bound: beta(q) must lie in [0,1]");
    if (!(C_r > 0.0)) throw std::invalid_argument("bound: C_r must be positive");
  }
};

struct BoundValue {
  double total = 0.0;
  std::array<double, 4> terms{};  // moment-r, truncated tail, L1 remainder, mixing
};

/// C x^{-r} q^r N^r m_le + C x^{-1} N^2 m_gt + C x^{-1} q N sup E||h|| + 4 N beta(q).
/// With R = infinity the second term vanishes.
inline BoundValue deviation_bound(const BoundInputs& in) {
  in.validate();
  const double q = static_cast<double>(in.q), n = static_cast<double>(in.N);
  BoundValue b;
  b.terms[0] = in.C_r * std::pow(q * n / in.x, in.r) * in.m_le;
  b.terms[1] = std::isinf(in.R) ? 0.0 : in.C_r * n * n * in.m_gt / in.x;
  b.terms[2] = in.C_r * q * n * in.sup_mean_norm / in.x;
  b.terms[3] = 4.0 * n * in.beta_q;
  b.total = b.terms[0] + b.terms[1] + b.terms[2] + b.terms[3];
  return b;
}

struct QChoice {
  long q = 0;
  BoundValue value;
};

/// argmin over q_range of the bound, ties toward smaller q; candidates with
/// 2q >= N are skipped.
inline QChoice optimize_q(BoundInputs in, std::span<const long> q_range, const std::function<double(long)>& beta) {
  std::optional<QChoice> best;
  for (long q : q_range) {
    if (q < 1 || 2 * q >= in.N) continue;
    in.q = q;
    in.beta_q = beta(q);
    const auto v = deviation_bound(in);
    if (!best || v.total < best->value.total || (v.total == best->value.total && q < best->q)) best = QChoice{q, v};
  }
  if (!best) throw std::invalid_argument("optimize_q: no feasible q (need 1 <= q and 2q < N)");
  return *best;
}

inline QChoice optimize_q(const BoundInputs& in, std::span<const long> q_range, const MixingProfile& profile) {
  return optimize_q(in, q_range, [&](long q) { return profile.beta_at(q); });
}

/// 1, 2, ..., max feasible q for N.
inline std::vector<long> feasible_q_range(long N) {
  std::vector<long> qs;
  for (long q = 1; 2 * q < N; ++q) qs.push_back(q);
  return qs;
}

// -----------------------------------------------------------------------------
// Rate planner
// -----------------------------------------------------------------------------

enum class Theorem { T2, T3, T4, T5, FCLT };

inline Theorem parse_theorem(std::string_view s) {
  if (s == "T2") return Theorem::T2;
  if (s == "T3") return Theorem::T3;
  if (s == "T4") return Theorem::T4;
  if (s == "T5") return Theorem::T5;
  if (s == "FCLT") return Theorem::FCLT;
  throw std::invalid_argument("unknown theorem '" + std::string(s) + "' (expected T2, T3, T4, T5 or FCLT)");
}

inline std::string to_string(Theorem t) {
  switch (t) {
    case Theorem::T2: return "T2";
    case Theorem::T3: return "T3";
    case Theorem::T4: return "T4";
    case Theorem::T5: return "T5";
    default: return "FCLT";
  }
}

/// max{p - 1 + eta, p - 2 + p(p-1)/delta}.
inline double gamma_nondegenerate_finite_var(double p, double delta, double eta) {
  return std::max(p - 1.0 + eta, p - 2.0 + p * (p - 1.0) / delta);
}

/// max{p - 2 + p(p-1)/delta, (p(p-1) + (p-1)delta) / (p(p-1) + (p+1)delta)}.
inline double gamma_nondegenerate_infinite_var(double p, double delta) {
  return std::max(p - 2.0 + p * (p - 1.0) / delta,
                  (p * (p - 1.0) + (p - 1.0) * delta) / (p * (p - 1.0) + (p + 1.0) * delta));
}

/// Exponent of the earlier sufficient condition, max{p - 2 + p(p-1)/delta, 1}.
inline double gamma_prime(double p, double delta) {
  return std::max(p - 2.0 + p * (p - 1.0) / delta, 1.0);
}

struct RatePlan {
  Theorem theorem = Theorem::T2;
  double p = 1.5;
  double delta = 0.0;
  double eta = 0.0;
  double gamma = 0.0;                // weight exponent in sum_k k^gamma beta(k) < infinity
  std::optional<double> a;           // block length q = floor(2^{M a})
  std::optional<double> b;           // truncation level R = 2^{M b}
  double normalization = 0.0;        // U_n is divided by n^normalization
  std::optional<double> series_exponent;  // 1/a - 1
};

inline RatePlan rate_plan(Theorem th, double p, double delta, double eta) {
  if (!(p > 1.0 && p < 2.0)) throw std::invalid_argument("rate_plan: p must lie in (1,2)");
  if (!(delta >= 0.0) || !(eta >= 0.0)) throw std::invalid_argument("rate_plan: delta and eta must be nonnegative");
  RatePlan plan;
  plan.theorem = th;
  plan.p = p;
  plan.delta = delta;
  plan.eta = eta;
  auto need_eta = [&] {
    if (!(eta > 0.0)) throw std::invalid_argument("rate_plan: " + to_string(th) + " needs eta > 0");
  };
  auto need_delta = [&] {
    if (!(delta > 0.0)) throw std::invalid_argument("rate_plan: " + to_string(th) + " needs delta > 0");
  };
  switch (th) {
    case Theorem::T2:
      need_eta();
      need_delta();
      if (p + delta < 2.0) throw std::invalid_argument("rate_plan: T2 requires p + delta >= 2");
      plan.gamma = gamma_nondegenerate_finite_var(p, delta, eta);
      plan.a = 1.0 / (p + eta);
      plan.normalization = 1.0 + 1.0 / p;
      break;
    case Theorem::T3:
      need_delta();
      if (p + delta >= 2.0) throw std::invalid_argument("rate_plan: T3 requires p + delta < 2");
      plan.gamma = gamma_nondegenerate_infinite_var(p, delta);
      plan.b = (p - 1.0) / (p * (p + delta - 1.0));
      plan.a = (p * (p - 1.0) + delta * (p + 1.0)) / (2.0 * p * (p + delta - 1.0));
      if (!(*plan.a < 1.0 / p)) throw std::logic_error("rate_plan: T3 schedule violates a < 1/p");
      plan.normalization = 1.0 + 1.0 / p;
      break;
    case Theorem::T4:
      need_eta();
      if (p + delta < 2.0) throw std::invalid_argument("rate_plan: T4 requires p + delta >= 2");
      plan.gamma = 2.0 * (p - 1.0) / (2.0 - p) + eta;
      plan.a = 1.0 / (eta + p / (2.0 - p));
      plan.normalization = 2.0 / p;
      break;
    case Theorem::T5:
      need_delta();
      if (p + delta >= 2.0) throw std::invalid_argument("rate_plan: T5 requires p + delta < 2");
      plan.gamma = p - 1.0 + p * (p - 1.0) / delta;
      plan.a = delta / (p * (p + delta - 1.0));
      plan.b = p * (p + delta - 1.0) / (2.0 * (p - 1.0));
      plan.normalization = 2.0 / p;
      break;
    case Theorem::FCLT:
      need_eta();
      // q = floor(eta sqrt(N)); the mixing requirement is n^2 beta(n) -> 0.
      plan.gamma = 2.0;
      plan.a = 0.5;
      plan.normalization = 1.5;
      break;
  }
  if (plan.a && th != Theorem::FCLT) plan.series_exponent = 1.0 / *plan.a - 1.0;
  return plan;
}

// -----------------------------------------------------------------------------
// Mixing hypotheses
// -----------------------------------------------------------------------------

struct GeometricTail {
  double c = 1.0;
  double lambda = 0.5;  // beta(k) = c lambda^k
};
struct PolynomialTail {
  double C = 1.0;
  double s = 2.0;  // beta(k) = C k^{-s}
};
using TailModel = std::variant<GeometricTail, PolynomialTail>;

/// "geometric:LAMBDA[:C]" or "polynomial:S[:C]".
inline TailModel parse_tail_model(std::string_view spec) {
  const auto colon = spec.find(':');
  const std::string kind(spec.substr(0, colon));
  std::vector<double> params;
  if (colon != std::string_view::npos) {
    std::string rest(spec.substr(colon + 1));
    std::size_t pos = 0;
    while (pos <= rest.size()) {
      const auto next = rest.find(':', pos);
      const auto token = rest.substr(pos, next == std::string::npos ? std::string::npos : next - pos);
      try {
        params.push_back(std::stod(token));
      } catch (const std::logic_error&) {
        throw std::invalid_argument("tail model: bad parameter '" + token + "'");
      }
      if (next == std::string::npos) break;
      pos = next + 1;
    }
  }
  if (kind == "geometric") {
    if (params.empty() || !(params[0] > 0.0 && params[0] < 1.0))
      throw std::invalid_argument("geometric tail needs 0 < lambda < 1");
    return GeometricTail{params.size() > 1 ? params[1] : 1.0, params[0]};
  }
  if (kind == "polynomial") {
    if (params.empty() || !(params[0] > 0.0)) throw std::invalid_argument("polynomial tail needs s > 0");
    return PolynomialTail{params.size() > 1 ? params[1] : 1.0, params[0]};
  }
  throw std::invalid_argument("unknown tail model '" + kind + "' (expected geometric or polynomial)");
}

struct HypothesisResult {
  bool pass = false;
  double margin = 0.0;  // s - (gamma + 1) for polynomial tails, +inf for geometric
  double exponent = 0.0;
  std::string condition;
};

/// Mixing condition of the named theorem: sum_k k^gamma beta(k) < infinity for
/// T2-T5 (the beta(k) factor is read into the T2 display), n^2 beta(n) -> 0 for
/// FCLT.
inline HypothesisResult hypothesis_check(const TailModel& tail, Theorem th, double p, double delta, double eta) {
  HypothesisResult res;
  if (th == Theorem::FCLT) {
    res.condition = "(C.2) lim n^2 beta(n) = 0";
    res.exponent = 2.0;
  } else {
    res.exponent = rate_plan(th, p, delta, eta).gamma;
    res.condition = "sum_k k^" + std::to_string(res.exponent) + " beta(k) < infinity (" + to_string(th) + ")";
  }
  if (std::holds_alternative<GeometricTail>(tail)) {
    res.pass = true;
    res.margin = kInf;
    return res;
  }
  const double s = std::get<PolynomialTail>(tail).s;
  res.margin = th == Theorem::FCLT ? s - 2.0 : s - (res.exponent + 1.0);
  res.pass = res.margin > 0.0;
  return res;
}

/// Classification of a positive series from its partial sums at geometrically
/// spaced checkpoints: convergent when the increments shrink geometrically.
struct SeriesVerdict {
  bool convergent = false;
  std::vector<double> partial_sums;
};

inline SeriesVerdict classify_series(const std::function<double(long)>& term, long first,
                                     std::span<const long> checkpoints, double shrink = 0.9) {
  SeriesVerdict v;
  double sum = 0.0;
  long k = first;
  for (long cp : checkpoints) {
    for (; k <= cp; ++k) sum += term(k);
    v.partial_sums.push_back(sum);
  }
  if (v.partial_sums.size() < 3) throw std::invalid_argument("classify_series: need at least three checkpoints");
  const auto n = v.partial_sums.size();
  const double inc1 = v.partial_sums[n - 2] - v.partial_sums[n - 3];
  const double inc2 = v.partial_sums[n - 1] - v.partial_sums[n - 2];
  v.convergent = inc2 <= shrink * inc1;
  return v;
}

// -----------------------------------------------------------------------------
// Condition (C.1)
// -----------------------------------------------------------------------------

/// Upper-tail quantile function Q_Y(u) = inf{t >= 0 : P(Y > t) <= u} on [0,1),
/// either piecewise constant (exact integrals) or a general nonincreasing
/// function (adaptive Simpson).
class QuantileFunction {
 public:
  /// Q = values[i] on [breaks[i], breaks[i+1]); breaks start at 0.
  static QuantileFunction piecewise(std::vector<double> breaks, std::vector<double> values) {
    if (breaks.empty() || breaks.size() != values.size() + 1 || breaks.front() != 0.0)
      throw std::invalid_argument("quantile: breaks must start at 0 and bracket every value");
    for (std::size_t i = 1; i < breaks.size(); ++i)
      if (breaks[i] < breaks[i - 1]) throw std::invalid_argument("quantile: breaks must be nondecreasing");
    for (std::size_t i = 1; i < values.size(); ++i)
      if (values[i] > values[i - 1]) throw std::invalid_argument("quantile function must be nonincreasing");
    QuantileFunction q;
    q.breaks_ = std::move(breaks);
    q.values_ = std::move(values);
    return q;
  }

  /// Quantile function of a finite nonnegative law.
  static QuantileFunction of_finite_law(std::vector<double> values, std::vector<double> probs) {
    if (values.size() != probs.size() || values.empty())
      throw std::invalid_argument("quantile: values and probabilities must match");
    std::vector<std::size_t> order(values.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return values[a] > values[b]; });
    std::vector<double> breaks{0.0}, vals;
    double c = 0.0;
    for (auto i : order) {
      if (values[i] < 0.0) throw std::invalid_argument("quantile: values must be nonnegative");
      if (probs[i] <= 0.0) continue;
      c += probs[i];
      vals.push_back(values[i]);
      breaks.push_back(std::min(1.0, c));
    }
    return piecewise(std::move(breaks), std::move(vals));
  }

  static QuantileFunction function(std::function<double(double)> fn) {
    for (int i = 1; i <= 1000; ++i) {
      const double u0 = (i - 1) / 1000.0, u1 = i / 1000.0 * (1.0 - 1e-12);
      if (fn(u1) > fn(u0) * (1.0 + 1e-12) + 1e-300) throw std::invalid_argument("quantile function must be nonincreasing");
    }
    QuantileFunction q;
    q.fn_ = std::move(fn);
    return q;
  }

  double operator()(double u) const {
    if (fn_) return fn_(u);
    for (std::size_t i = 0; i < values_.size(); ++i)
      if (u < breaks_[i + 1]) return values_[i];
    return 0.0;
  }

  /// int_0^upper Q(u)^2 du.
  double integral_squared(double upper, double rel_tol = 1e-8) const {
    if (upper <= 0.0) return 0.0;
    if (!fn_) {
      double total = 0.0;
      for (std::size_t i = 0; i < values_.size(); ++i) {
        const double lo = breaks_[i], hi = std::min(breaks_[i + 1], upper);
        if (hi > lo) total += values_[i] * values_[i] * (hi - lo);
        if (breaks_[i + 1] >= upper) break;
      }
      return total;
    }
    auto f = [this](double u) {
      const double v = fn_(u);
      return v * v;
    };
    const double fa = f(0.0), fm = f(0.5 * upper), fb = f(upper);
    const double whole = upper / 6.0 * (fa + 4.0 * fm + fb);
    return simpson(f, 0.0, upper, fa, fm, fb, whole, rel_tol * std::max(std::abs(whole), 1e-300), 60);
  }

 private:
  template <class F>
  static double simpson(const F& f, double a, double b, double fa, double fm, double fb, double whole, double tol,
                        int depth) {
    const double m = 0.5 * (a + b);
    const double lm = f(0.5 * (a + m)), rm = f(0.5 * (m + b));
    const double left = (m - a) / 6.0 * (fa + 4.0 * lm + fm);
    const double right = (b - m) / 6.0 * (fm + 4.0 * rm + fb);
    const double diff = left + right - whole;
    if (depth <= 0 || std::abs(diff) <= 15.0 * tol) return left + right + diff / 15.0;
    return simpson(f, a, m, fa, lm, fm, left, 0.5 * tol, depth - 1) +
           simpson(f, m, b, fm, rm, fb, right, 0.5 * tol, depth - 1);
  }

  std::vector<double> breaks_;
  std::vector<double> values_;
  std::function<double(double)> fn_;
};

/// sum_{k=1}^{K} int_0^{alpha(k)} Q^2(u) du, with alpha[k-1] = alpha(k).
inline double c1_integral(std::span<const double> alpha, const QuantileFunction& q, long K) {
  if (K < 0 || static_cast<std::size_t>(K) > alpha.size())
    throw std::invalid_argument("c1_integral: K exceeds the number of alpha values");
  double total = 0.0;
  for (long k = 0; k < K; ++k) {
    const double a = alpha[static_cast<std::size_t>(k)];
    if (!(a >= 0.0 && a <= 0.25 + 1e-15)) throw std::invalid_argument("c1_integral: alpha values must lie in [0,1/4]");
    total += q.integral_squared(a);
  }
  return total;
}

// -----------------------------------------------------------------------------
// C_r surrogate
// -----------------------------------------------------------------------------

struct Calibration {
  double c = 0.0;      // inflated by the safety factor
  double c_raw = 0.0;  // mean(max^r) / (N^r E[H^r])
  double mean_max_r = 0.0;
  double moment_r = 0.0;  // E[H^r]
  double safety = 2.0;
};

/// E[||h(X, X')||^r] under the product of a finite law with itself.
inline double kernel_moment(const Kernel<StateIndex>& h, const FiniteLaw<StateIndex>& law, double r) {
  double m = 0.0;
  HPoint buf(h.dim());
  for (std::size_t i = 0; i < law.support.size(); ++i)
    for (std::size_t j = 0; j < law.support.size(); ++j) {
      h.eval_into(law.support[i], law.support[j], buf);
      m += law.weights[i] * law.weights[j] * std::pow(buf.norm(), r);
    }
  return m;
}

/// Smallest c with mean(max_{n<=N} ||U_n||^r) <= c N^r E[H^r] (q = 1) over
/// i.i.d. replications, times a safety factor 2.
inline Calibration calibrate_Cr(const FiniteChain& model, const Kernel<StateIndex>& h, double r, long N, long reps,
                                std::uint64_t seed, unsigned threads = 0) {
  if (!model.is_iid()) throw std::invalid_argument("calibrate_Cr: model must be i.i.d.");
  if (N < 3 || reps < 1 || !(r >= 2.0)) throw std::invalid_argument("calibrate_Cr: requires N >= 3, reps >= 1, r >= 2");
  const auto law = model.marginal_law();
  if (degeneracy_defect(h, law) > 1e-10) throw std::invalid_argument("calibrate_Cr: kernel is not degenerate");
  Calibration cal;
  cal.moment_r = kernel_moment(h, law, r);
  std::vector<double> maxima(static_cast<std::size_t>(reps));
  parallel_for(maxima.size(), threads, [&](std::size_t i) {
    Rng rng = derive_rng(seed, 3, i);
    const auto seq = model.simulate(static_cast<std::size_t>(N), rng);
    maxima[i] = std::pow(max_prefix_norm(h, std::span<const StateIndex>(seq)), r);
  });
  double sum = 0.0;
  for (double m : maxima) sum += m;
  cal.mean_max_r = sum / static_cast<double>(reps);
  cal.c_raw = cal.moment_r > 0.0 ? cal.mean_max_r / (std::pow(static_cast<double>(N), r) * cal.moment_r) : 0.0;
  cal.c = cal.safety * cal.c_raw;
  return cal;
}

}  // namespace hustat
