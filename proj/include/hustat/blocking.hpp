#pragma once

// Blocking decomposition of max_n ||U_n(h)||: index partition into five
// families, block kernels h_{l,l'}, the M and R terms bounding the maximum,
// and the coupled M* terms built from independent block copies.
//
// Index conventions (all 1-based, period 2q): a pair (i, j), i < j, is written
// (2qu + l, 2qv + l') with l, l' in 1..2q. Blocks carry q + 1 consecutive
// observations V_{k,u} = (X_{2qu+k}, ..., X_{2qu+k+q}); the last entry of block
// u and the first entry of block u + 1 are q apart, so consecutive blocks of a
// family are separated by a beta(q) gap. The extra entry is needed by the two
// block families whose offset difference equals q.

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <map>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "hustat/hilbert.hpp"
#include "hustat/kernels.hpp"
#include "hustat/processes.hpp"
#include "hustat/rng.hpp"
#include "hustat/ustat.hpp"

namespace hustat {

// -----------------------------------------------------------------------------
// Index partition
// -----------------------------------------------------------------------------

struct PairIndex {
  long i, j;   // observation indices, i < j
  long u, v;   // block numbers
  long l, lp;  // offsets in 1..2q
  auto operator<=>(const PairIndex&) const = default;
};

/// Family (1..4) of an offset pair (l, l') for pairs in distinct blocks.
inline int offset_family(long q, long l, long lp) {
  const long d = l - lp;
  if (d >= 0 && d <= q - 1) return 1;
  if (-d >= 1 && -d <= q - 1) return 2;
  if (d >= q && d <= 2 * q - 1) return 3;
  if (-d >= q && -d <= 2 * q - 1) return 4;
  throw std::invalid_argument("offset pair outside 1..2q");
}

struct IndexPartition {
  long n = 0;
  long q = 0;
  std::array<std::vector<PairIndex>, 5> families;  // families[a-1] = I_{n,a}

  std::size_t cardinality(int a) const { return families.at(static_cast<std::size_t>(a - 1)).size(); }
  std::size_t total() const {
    std::size_t t = 0;
    for (const auto& f : families) t += f.size();
    return t;
  }
};

/// The five families I_{n,1..5}, each generated from its own membership rule.
inline IndexPartition partition_indices(long n, long q) {
  if (q < 1 || n <= 2 * q) throw std::invalid_argument("partition_indices: requires n > 2q >= 2");
  IndexPartition part;
  part.n = n;
  part.q = q;
  const long period = 2 * q;
  for (long l = 1; l <= period; ++l) {
    for (long lp = 1; lp <= period; ++lp) {
      if (lp > n) continue;
      const long top = (n - lp) / period;
      const int fam = offset_family(q, l, lp);
      for (long v = 0; v <= top; ++v) {
        for (long u = 0; u < v; ++u)
          part.families[static_cast<std::size_t>(fam - 1)].push_back({period * u + l, period * v + lp, u, v, l, lp});
        if (l < lp) part.families[4].push_back({period * v + l, period * v + lp, v, v, l, lp});
      }
    }
  }
  return part;
}

// -----------------------------------------------------------------------------
// Block kernels
// -----------------------------------------------------------------------------

/// Where h_{l,l'} reads its two arguments: x from component `x_component` of
/// the first block, y from component `y_component` of the second block (both
/// 1-based), blocks taken from the family with base offset `base`.
struct BlockKernelSpec {
  int family;
  long base;
  long x_component;
  long y_component;
  long width;
};

inline BlockKernelSpec block_kernel_spec(long q, long l, long lp) {
  if (q < 1 || l < 1 || lp < 1 || l > 2 * q || lp > 2 * q)
    throw std::invalid_argument("block kernel: offsets must lie in 1..2q");
  const int fam = offset_family(q, l, lp);
  BlockKernelSpec s{fam, 0, 1, 1, q + 1};
  switch (fam) {
    case 1:  // h(x_{l-l'+1}, y_1), blocks V_{l',.}
      s.base = lp;
      s.x_component = l - lp + 1;
      break;
    case 2:  // h(x_1, y_{l'-l+1}), blocks V_{l,.}
      s.base = l;
      s.y_component = lp - l + 1;
      break;
    case 3:  // h(x_1, y_{l'-l+2q+1}), blocks V_{l-2q,.}
      s.base = l - 2 * q;
      s.y_component = lp - l + 2 * q + 1;
      break;
    default:  // h(x_{l-l'+2q+1}, y_1), blocks V_{l',.}
      s.base = lp;
      s.x_component = l - lp + 2 * q + 1;
      break;
  }
  if (s.x_component < 1 || s.x_component > s.width || s.y_component < 1 || s.y_component > s.width)
    throw std::logic_error("block kernel: component index outside the block");
  return s;
}

/// Component indices of h_{l,l'} exactly as printed in the four-case display,
/// with a flag telling whether both lie in 1..q.
struct DisplayIndices {
  long x_component;
  long y_component;
  bool in_range;
};

inline DisplayIndices display_block_indices(long q, long l, long lp) {
  DisplayIndices d{1, 1, true};
  switch (offset_family(q, l, lp)) {
    case 1: d.x_component = l - lp + 1; break;
    case 2: d.y_component = lp + 1; break;
    case 3: d.y_component = lp - l + 2 * q + 1; break;
    default: d.x_component = lp - l + 2 * q + 1; break;
  }
  d.in_range = d.x_component >= 1 && d.x_component <= q && d.y_component >= 1 && d.y_component <= q;
  return d;
}

template <class S>
class BlockKernel {
 public:
  BlockKernel(Kernel<S> h, BlockKernelSpec spec) : h_(std::move(h)), spec_(spec) {}

  const BlockKernelSpec& spec() const { return spec_; }

  void eval_into(std::span<const S> x, std::span<const S> y, Eigen::Ref<HPoint> out) const {
    if (static_cast<long>(x.size()) < spec_.x_component || static_cast<long>(y.size()) < spec_.y_component)
      throw std::invalid_argument("block kernel: block too short");
    h_.eval_into(x[static_cast<std::size_t>(spec_.x_component - 1)],
                 y[static_cast<std::size_t>(spec_.y_component - 1)], out);
  }

  HPoint operator()(std::span<const S> x, std::span<const S> y) const {
    HPoint out(h_.dim());
    eval_into(x, y, out);
    return out;
  }

 private:
  Kernel<S> h_;
  BlockKernelSpec spec_;
};

template <class S>
BlockKernel<S> block_kernel(const Kernel<S>& h, long q, long l, long lp) {
  return BlockKernel<S>(h, block_kernel_spec(q, l, lp));
}

// -----------------------------------------------------------------------------
// M and R terms
// -----------------------------------------------------------------------------

/// Observation indices needed to evaluate every term for (N, q).
inline std::pair<long, long> required_index_range(long N, long q) {
  const long top = N / (2 * q);
  return {1 - q, 2 * q * top + 3 * q};
}

/// Base offsets of the block families used by the M terms.
inline std::vector<long> block_bases(long q) {
  std::set<long> bases;
  for (long l = 1; l <= 2 * q; ++l)
    for (long lp = 1; lp <= 2 * q; ++lp) bases.insert(block_kernel_spec(q, l, lp).base);
  return {bases.begin(), bases.end()};
}

template <class S>
using BlockSet = std::map<long, std::vector<std::vector<S>>>;

/// Real blocks V_{k,u}, u = 0..top, for every base k.
template <class S>
BlockSet<S> real_blocks(const IndexedPath<S>& path, long q, long top) {
  BlockSet<S> blocks;
  for (long k : block_bases(q)) blocks[k] = block_vectors(path, q, k, top + 1, q + 1);
  return blocks;
}

namespace detail {

/// max_{0<=m<=top} || sum_{0<=u<v<=m} h_{l,l'}(V_u, V_v) ||.
template <class S>
double block_ustat_max(const BlockKernel<S>& bk, const std::vector<std::vector<S>>& blocks, long top,
                       Eigen::Index dim) {
  HPoint acc = HPoint::Zero(dim), buf(dim);
  double best = 0.0;
  for (long v = 1; v <= top; ++v) {
    const auto& yb = blocks[static_cast<std::size_t>(v)];
    for (long u = 0; u < v; ++u) {
      bk.eval_into(blocks[static_cast<std::size_t>(u)], yb, buf);
      acc += buf;
    }
    best = std::max(best, acc.norm());
  }
  return best;
}

/// max_{0<=m<=top} || sum_{v=from}^{m} h(X_{xi(v)}, X_{yi(v)}) ||.
template <class S, class XI, class YI>
double partial_sum_max(const Kernel<S>& h, const IndexedPath<S>& path, long from, long top, XI xi, YI yi) {
  HPoint acc = HPoint::Zero(h.dim()), buf(h.dim());
  double best = 0.0;
  for (long v = from; v <= top; ++v) {
    h.eval_into(path.at(xi(v)), path.at(yi(v)), buf);
    acc += buf;
    best = std::max(best, acc.norm());
  }
  return best;
}

}  // namespace detail

/// M_{N,q,1..4} from a set of blocks (real or coupled).
template <class S>
std::array<double, 4> m_terms(const Kernel<S>& h, const BlockSet<S>& blocks, long N, long q) {
  const long top = N / (2 * q);
  std::array<double, 4> m{};
  for (long l = 1; l <= 2 * q; ++l)
    for (long lp = 1; lp <= 2 * q; ++lp) {
      const auto bk = block_kernel(h, q, l, lp);
      const auto it = blocks.find(bk.spec().base);
      if (it == blocks.end() || static_cast<long>(it->second.size()) <= top)
        throw std::invalid_argument("m_terms: missing blocks for base " + std::to_string(bk.spec().base));
      m[static_cast<std::size_t>(bk.spec().family - 1)] += detail::block_ustat_max(bk, it->second, top, h.dim());
    }
  return m;
}

/// R_{N,q,1..5}. R_2 pairs X_{l-2q} (the block preceding offset l) with
/// X_{2qv+l'}, and R_4 sums over v = 1..m, which is what the telescoping of
/// the family-3 and family-4 double sums produces; R_5 is the diagonal u = v.
template <class S>
std::array<double, 5> r_terms(const Kernel<S>& h, const IndexedPath<S>& path, long N, long q) {
  const long top = N / (2 * q);
  const long period = 2 * q;
  std::array<double, 5> r{};
  for (long l = 1; l <= period; ++l)
    for (long lp = 1; lp <= period; ++lp) {
      const long d = l - lp;
      if (d >= q) {
        r[0] += detail::partial_sum_max(h, path, 1, top, [&](long v) { return period * (v - 1) + l; },
                                        [&](long v) { return period * v + lp; });
        r[1] += detail::partial_sum_max(h, path, 1, top, [&](long) { return l - period; },
                                        [&](long v) { return period * v + lp; });
      } else if (-d >= q) {
        r[2] += detail::partial_sum_max(h, path, 1, top, [&](long) { return l; },
                                        [&](long v) { return period * v + lp; });
        r[3] += detail::partial_sum_max(h, path, 1, top, [&](long v) { return period * v + l; },
                                        [&](long v) { return period * v + lp; });
      }
      if (l < lp)
        r[4] += detail::partial_sum_max(h, path, 0, top, [&](long u) { return period * u + l; },
                                        [&](long u) { return period * u + lp; });
    }
  return r;
}

struct BlockTerms {
  std::array<double, 4> M{};
  std::array<double, 5> R{};
  double lhs = 0.0;  // max_{2<=n<=N} ||U_n||

  double rhs() const {
    double s = 0.0;
    for (double x : M) s += x;
    for (double x : R) s += x;
    return s;
  }
  double slack() const { return rhs() - lhs; }
};

/// Evaluates both sides of max_{2<=n<=N} ||U_n|| <= sum M + sum R by direct
/// summation. `path` must cover required_index_range(N, q).
template <class S>
BlockTerms block_terms(const Kernel<S>& h, const IndexedPath<S>& path, long N, long q) {
  if (q < 1 || N <= 2 * q) throw std::invalid_argument("block_terms: requires N > 2q >= 2");
  const auto [lo, hi] = required_index_range(N, q);
  if (!path.contains(lo) || !path.contains(hi))
    throw std::invalid_argument("block_terms: sequence must cover indices " + std::to_string(lo) + ".." +
                                std::to_string(hi));
  BlockTerms t;
  t.M = m_terms(h, real_blocks(path, q, N / (2 * q)), N, q);
  t.R = r_terms(h, path, N, q);
  t.lhs = max_prefix_norm(h, path.one_based(static_cast<std::size_t>(N)));
  return t;
}

/// U_n(h) reassembled from the block decomposition: block-kernel double sums
/// of families 1-4, the telescoping corrections of families 3-4, and the
/// diagonal family 5. Equals the direct double sum exactly in exact arithmetic.
template <class S>
HPoint blocked_u_statistic(const Kernel<S>& h, const IndexedPath<S>& path, long n, long q) {
  if (q < 1 || n < 2) throw std::invalid_argument("blocked_u_statistic: requires n >= 2, q >= 1");
  const long period = 2 * q;
  const auto d = h.dim();
  HPoint total = HPoint::Zero(d), buf(d);
  auto add = [&](long i, long j, double sign) {
    h.eval_into(path.at(i), path.at(j), buf);
    total += sign * buf;
  };
  for (long l = 1; l <= period; ++l)
    for (long lp = 1; lp <= period; ++lp) {
      if (n < lp) continue;
      const long m = (n - lp) / period;
      if (l < lp)
        for (long u = 0; u <= m; ++u) add(period * u + l, period * u + lp, 1.0);
      const auto bk = block_kernel(h, q, l, lp);
      const auto& s = bk.spec();
      if (m >= 1) {
        const auto blocks = block_vectors(path, q, s.base, m + 1, s.width);
        for (long v = 1; v <= m; ++v)
          for (long u = 0; u < v; ++u) {
            bk.eval_into(blocks[static_cast<std::size_t>(u)], blocks[static_cast<std::size_t>(v)], buf);
            total += buf;
          }
      }
      for (long v = 1; v <= m; ++v) {
        if (s.family == 3) {
          add(period * (v - 1) + l, period * v + lp, 1.0);
          add(l - period, period * v + lp, -1.0);
        } else if (s.family == 4) {
          add(l, period * v + lp, 1.0);
          add(period * v + l, period * v + lp, -1.0);
        }
      }
    }
  return total;
}

// -----------------------------------------------------------------------------
// Coupled blocks
// -----------------------------------------------------------------------------

struct CoupledFamily {
  std::vector<std::vector<StateIndex>> blocks;
  long mismatches = 0;
};

/// Independent copies V*_{k,u} of the real blocks V_{k,u}, u = 0..top, of a
/// stationary finite chain, built sequentially in u: given the past blocks,
/// V_{k,u} depends only on the last state of V_{k,u-1}, q steps before its
/// first state, so a maximal coupling of the first state's conditional law
/// P^q(s, .) with the stationary law (and a fresh continuation on mismatch)
/// realizes the Berbee coupling with P(V* != V) = beta(q) per block.
inline CoupledFamily coupled_blocks(const FiniteChain& chain, const IndexedPath<StateIndex>& path, long q,
                                    long base, long top, Rng& rng) {
  CoupledFamily fam;
  const auto real = block_vectors(path, q, base, top + 1, q + 1);
  const Matrix pq = chain.transition_power(q);
  const auto& pi = chain.stationary();
  const std::vector<double> target(pi.data(), pi.data() + pi.size());
  std::vector<double> cond(target.size());
  fam.blocks.reserve(real.size());
  fam.blocks.push_back(real[0]);
  for (std::size_t u = 1; u < real.size(); ++u) {
    const StateIndex s = real[u - 1].back();
    for (std::size_t j = 0; j < cond.size(); ++j) cond[j] = pq(s, static_cast<Eigen::Index>(j));
    const StateIndex z = real[u].front();
    const StateIndex z_star = maximal_couple(cond, target, z, rng);
    if (z_star == z) {
      fam.blocks.push_back(real[u]);
      continue;
    }
    ++fam.mismatches;
    std::vector<StateIndex> copy(real[u].size());
    copy[0] = z_star;
    for (std::size_t a = 1; a < copy.size(); ++a) copy[a] = chain.step(copy[a - 1], rng);
    fam.blocks.push_back(std::move(copy));
  }
  return fam;
}

struct CoupledBlockTerms {
  std::array<double, 4> M{};
  std::array<double, 4> M_star{};
  long mismatches = 0;  // blocks with V* != V, over all families
  long blocks = 0;      // coupled blocks u >= 1, over all families
  long families = 0;
  bool any_mismatch() const { return mismatches > 0; }
};

/// M and M* on one stationary sample of `chain` with independent coupled block
/// families. `path` must cover required_index_range(N, q).
inline CoupledBlockTerms coupled_block_terms(const FiniteChain& chain, const Kernel<StateIndex>& h,
                                             const IndexedPath<StateIndex>& path, long N, long q, Rng& rng) {
  if (q < 1 || N <= 2 * q) throw std::invalid_argument("coupled_block_terms: requires N > 2q >= 2");
  const long top = N / (2 * q);
  CoupledBlockTerms out;
  BlockSet<StateIndex> real = real_blocks(path, q, top), star;
  for (long k : block_bases(q)) {
    auto fam = coupled_blocks(chain, path, q, k, top, rng);
    out.mismatches += fam.mismatches;
    out.blocks += top;
    ++out.families;
    star[k] = std::move(fam.blocks);
  }
  out.M = m_terms(h, real, N, q);
  out.M_star = m_terms(h, star, N, q);
  return out;
}

inline CoupledBlockTerms coupled_block_terms(const ProcessModel& model, const Kernel<StateIndex>& h, long N,
                                             long q, Rng& rng) {
  const auto* chain = std::get_if<FiniteChain>(&model);
  if (!chain) throw std::invalid_argument("coupled_block_terms: exact coupling needs a finite-state model");
  if (q < 1 || N <= 2 * q) throw std::invalid_argument("coupled_block_terms: requires N > 2q >= 2");
  const auto [lo, hi] = required_index_range(N, q);
  const auto path = chain->simulate_indexed(lo, hi, rng);
  return coupled_block_terms(*chain, h, path, N, q, rng);
}

}  // namespace hustat
