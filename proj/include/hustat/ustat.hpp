#pragma once

// U-statistics of order two: full sum, prefix family, polygonal process and a
// check of the Hoeffding split.

#include <algorithm>
#include <cmath>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

#include "hustat/hilbert.hpp"
#include "hustat/kernels.hpp"

namespace hustat {

namespace detail {

/// acc += sum_{i < k} h(seq[i], seq[k]) (0-based k).
template <class S>
void add_column(const Kernel<S>& h, std::span<const S> seq, std::size_t k, HPoint& acc, HPoint& buf) {
  if constexpr (std::is_same_v<S, StateIndex>) {
    if (const auto* t = h.table()) {
      const auto d = h.dim();
      const StateIndex y = seq[k];
      if (d == 1) {
        double s = 0.0;
        for (std::size_t i = 0; i < k; ++i) s += *t->at(seq[i], y);
        acc(0) += s;
      } else {
        for (std::size_t i = 0; i < k; ++i) {
          const double* v = t->at(seq[i], y);
          for (Eigen::Index c = 0; c < d; ++c) acc(c) += v[c];
        }
      }
      return;
    }
  }
  for (std::size_t i = 0; i < k; ++i) {
    h.eval_into(seq[i], seq[k], buf);
    acc += buf;
  }
}

/// Streams U_k = U_{k-1} + sum_{i<k} h(X_i, X_k). For table kernels on few
/// states the column sum is taken from state counts, O(states * d) per step.
template <class S>
class PrefixAccumulator {
 public:
  explicit PrefixAccumulator(const Kernel<S>& h) : h_(h), acc_(HPoint::Zero(h.dim())), buf_(h.dim()) {
    if constexpr (std::is_same_v<S, StateIndex>) {
      if (h.table() && h.table()->states() <= kCountedStates)
        counts_.assign(static_cast<std::size_t>(h.table()->states()), 0.0);
    }
  }

  /// Feeds seq[k] given seq[0..k-1] were fed before.
  const HPoint& push(std::span<const S> seq, std::size_t k) {
    if constexpr (std::is_same_v<S, StateIndex>) {
      if (!counts_.empty()) {
        const auto* t = h_.table();
        const StateIndex y = seq[k];
        for (std::size_t s = 0; s < counts_.size(); ++s)
          if (counts_[s] != 0.0) acc_ += counts_[s] * t->value(static_cast<int>(s), y);
        counts_[static_cast<std::size_t>(y)] += 1.0;
        return acc_;
      }
    }
    add_column(h_, seq, k, acc_, buf_);
    return acc_;
  }

 private:
  static constexpr int kCountedStates = 64;
  const Kernel<S>& h_;
  HPoint acc_, buf_;
  std::vector<double> counts_;
};

}  // namespace detail

/// sum_{1 <= i < j <= n} h(X_i, X_j).
template <class S>
HPoint u_statistic(const Kernel<S>& h, std::span<const S> seq) {
  if (seq.size() < 2) throw std::invalid_argument("u_statistic: need at least two observations");
  HPoint total = HPoint::Zero(h.dim());
  HPoint buf(h.dim());
  for (std::size_t j = 1; j < seq.size(); ++j) detail::add_column(h, seq, j, total, buf);
  return total;
}

/// U_k(h) for k = 2..n.
class UStatPath {
 public:
  UStatPath(std::vector<HPoint> values, Eigen::Index dim, std::string kernel_id = {},
            std::string sequence_id = {})
      : values_(std::move(values)), dim_(dim), kernel_id_(std::move(kernel_id)),
        sequence_id_(std::move(sequence_id)) {}

  /// Sample size n.
  std::size_t n() const { return values_.size() + 1; }
  Eigen::Index dim() const { return dim_; }
  const std::string& kernel_id() const { return kernel_id_; }
  const std::string& sequence_id() const { return sequence_id_; }

  /// U_k for 0 <= k <= n; U_0 = U_1 = 0.
  HPoint at(std::size_t k) const {
    if (k > n()) throw std::out_of_range("UStatPath: k exceeds n");
    if (k < 2) return HPoint::Zero(dim_);
    return values_[k - 2];
  }

  const std::vector<HPoint>& values() const { return values_; }

  /// Polygonal interpolation through (k/n, U_k).
  HPoint polygonal(double t) const {
    if (!(t >= 0.0 && t <= 1.0)) throw std::invalid_argument("polygonal process: t outside [0,1]");
    const double nt = static_cast<double>(n()) * t;
    auto k = static_cast<std::size_t>(std::floor(nt));
    k = std::min(k, n());
    const double frac = nt - static_cast<double>(k);
    if (k == n() || frac == 0.0) return at(k);
    return at(k) + frac * (at(k + 1) - at(k));
  }

  void write_csv(std::ostream& out) const {
    out << "k";
    for (Eigen::Index c = 0; c < dim_; ++c) out << ",coord_" << (c + 1);
    out << '\n';
    out.precision(17);
    for (std::size_t k = 2; k <= n(); ++k) {
      out << k;
      const auto& v = values_[k - 2];
      for (Eigen::Index c = 0; c < dim_; ++c) out << ',' << v(c);
      out << '\n';
    }
  }

 private:
  std::vector<HPoint> values_;
  Eigen::Index dim_;
  std::string kernel_id_;
  std::string sequence_id_;
};

/// All prefixes U_k = U_{k-1} + sum_{i<k} h(X_i, X_k) in one pass.
template <class S>
UStatPath u_stat_prefixes(const Kernel<S>& h, std::span<const S> seq, std::string sequence_id = {}) {
  if (seq.size() < 2) throw std::invalid_argument("u_stat_prefixes: need at least two observations");
  std::vector<HPoint> values;
  values.reserve(seq.size() - 1);
  detail::PrefixAccumulator<S> acc(h);
  acc.push(seq, 0);
  for (std::size_t k = 1; k < seq.size(); ++k) values.push_back(acc.push(seq, k));
  return UStatPath(std::move(values), h.dim(), h.name(), std::move(sequence_id));
}

/// max_{2 <= n <= N} ||U_n(h)|| over the first N observations.
template <class S>
double max_prefix_norm(const Kernel<S>& h, std::span<const S> seq) {
  if (seq.size() < 2) throw std::invalid_argument("max_prefix_norm: need at least two observations");
  detail::PrefixAccumulator<S> acc(h);
  acc.push(seq, 0);
  double best = 0.0;
  for (std::size_t k = 1; k < seq.size(); ++k) best = std::max(best, acc.push(seq, k).norm());
  return best;
}

/// Polygonal process evaluated from its defining double sum:
/// sum_{i<j<=[nt]} h(X_i,X_j) + (nt - [nt]) sum_{i<=[nt]} h(X_i, X_{[nt]+1}).
template <class S>
HPoint polygonal_process(const UStatPath& path, std::span<const S> seq, const Kernel<S>& h, double t) {
  if (!(t >= 0.0 && t <= 1.0)) throw std::invalid_argument("polygonal process: t outside [0,1]");
  if (seq.size() != path.n()) throw std::invalid_argument("polygonal process: sequence length differs from path");
  const double nt = static_cast<double>(path.n()) * t;
  const auto k = std::min(static_cast<std::size_t>(std::floor(nt)), path.n());
  HPoint value = path.at(k);
  const double frac = nt - static_cast<double>(k);
  if (k < path.n() && frac > 0.0) {
    HPoint inc = HPoint::Zero(h.dim());
    HPoint buf(h.dim());
    for (std::size_t i = 0; i < k; ++i) {
      h.eval_into(seq[i], seq[k], buf);
      inc += buf;
    }
    value += frac * inc;
  }
  return value;
}

struct SplitCheck {
  double max_abs = 0.0;            // general decomposition
  double max_rel = 0.0;            // relative to max(1, ||U_n||)
  double symmetric_max_abs = 0.0;  // (n-1) sum_k h10(X_k) + U_n(h2) form, symmetric h only
  bool symmetric_checked = false;
};

/// Compares U_n(h) with
///   sum_i (n-i)(h10(X_i) - E h10) + sum_j (j-1)(h01(X_j) - E h01) + U_n(h2)
///   + binom(n,2) E h + sum_i (n-i) E h10 + sum_j (j-1) E h01
/// for every n = 2..len(seq), both sides accumulated independently. For a
/// symmetric kernel both linear sums merge into (n-1) sum_k h10(X_k).
template <class S>
SplitCheck hoeffding_split_check(const Kernel<S>& h, const MarginalLaw<S>& law, std::span<const S> seq) {
  if (!std::holds_alternative<FiniteLaw<S>>(law))
    throw std::invalid_argument("hoeffding_split_check: requires an exact (finite-support) law");
  if (seq.size() < 2) throw std::invalid_argument("hoeffding_split_check: need at least two observations");
  const auto comp = hoeffding_components(h, law);
  const auto& fl = std::get<FiniteLaw<S>>(law);
  const auto d = h.dim();

  HPoint e10 = HPoint::Zero(d), e01 = HPoint::Zero(d);
  for (std::size_t s = 0; s < fl.support.size(); ++s) {
    e10 += fl.weights[s] * comp.h10(fl.support[s]);
    e01 += fl.weights[s] * comp.h01(fl.support[s]);
  }

  const std::size_t n_max = seq.size();
  std::vector<HPoint> f10, f01;
  for (const auto& x : seq) {
    f10.push_back(comp.h10(x));
    f01.push_back(comp.h01(x));
  }

  SplitCheck out;
  out.symmetric_checked = h.symmetric();
  HPoint u = HPoint::Zero(d), u2 = HPoint::Zero(d), buf(d);
  // Running sums for the linear parts: A_n = sum_{i<=n} h10(X_i), B_n = sum_{i<=n} i h10(X_i),
  // C_n = sum_{j<=n} (j-1) h01(X_j).
  HPoint a = f10[0], b = f10[0], c = HPoint::Zero(d);
  for (std::size_t j = 1; j < n_max; ++j) {
    for (std::size_t i = 0; i < j; ++i) {
      h.eval_into(seq[i], seq[j], buf);
      u += buf;
      comp.h2.eval_into(seq[i], seq[j], buf);
      u2 += buf;
    }
    const double n = static_cast<double>(j + 1);
    c += static_cast<double>(j) * (f01[j] - e01);
    // sum_{i=1}^{n-1} (n-i)(h10(X_i) - E h10) uses terms i <= n-1 = j.
    const HPoint lin10 = n * (a - static_cast<double>(j) * e10) - (b - 0.5 * n * (n - 1.0) * e10);
    const double pairs = 0.5 * n * (n - 1.0);
    const HPoint deterministic = pairs * comp.mean + pairs * e10 + pairs * e01;
    const HPoint rhs = lin10 + c + u2 + deterministic;
    const double abs = (u - rhs).norm();
    out.max_abs = std::max(out.max_abs, abs);
    out.max_rel = std::max(out.max_rel, abs / std::max(1.0, u.norm()));

    a += f10[j];
    b += n * f10[j];
    if (out.symmetric_checked) {
      HPoint sum_all = HPoint::Zero(d);
      for (std::size_t k = 0; k <= j; ++k) sum_all += f10[k] - e10;
      const HPoint sym = (n - 1.0) * sum_all + u2 + pairs * (comp.mean + e10 + e01);
      out.symmetric_max_abs = std::max(out.symmetric_max_abs, (u - sym).norm());
    }
  }
  return out;
}

}  // namespace hustat
