#pragma once

// Kernel catalog and kernel transforms: Hoeffding components, degeneration
// and truncation. Kernels are evaluable maps h: S x S -> R^d. Kernels on a
// finite state space {0, ..., S-1} may carry an explicit table, which every
// transform below preserves so that identities can be checked exactly.

#include <cmath>
#include <fstream>
#include <functional>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <type_traits>
#include <utility>
#include <variant>
#include <vector>

#include "hustat/hilbert.hpp"
#include "hustat/rng.hpp"

namespace hustat {

using StateIndex = int;

/// Dense table of a kernel on {0..states-1}^2, row-major in (x, y), each entry
/// a d-vector.
class KernelTable {
 public:
  KernelTable(int states, Eigen::Index dim)
      : states_(states), dim_(dim), data_(static_cast<std::size_t>(states) * states * dim, 0.0) {
    if (states <= 0 || dim <= 0) throw std::invalid_argument("KernelTable: empty table");
  }

  int states() const { return states_; }
  Eigen::Index dim() const { return dim_; }

  const double* at(int x, int y) const { return data_.data() + offset(x, y); }
  double* at(int x, int y) { return data_.data() + offset(x, y); }

  Eigen::Map<const HPoint> value(int x, int y) const { return Eigen::Map<const HPoint>(at(x, y), dim_); }
  Eigen::Map<HPoint> value(int x, int y) { return Eigen::Map<HPoint>(at(x, y), dim_); }

  bool is_symmetric(double tol = 0.0) const {
    for (int x = 0; x < states_; ++x)
      for (int y = x + 1; y < states_; ++y)
        if ((value(x, y) - value(y, x)).cwiseAbs().maxCoeff() > tol) return false;
    return true;
  }

 private:
  std::size_t offset(int x, int y) const {
    if (x < 0 || y < 0 || x >= states_ || y >= states_)
      throw std::out_of_range("KernelTable: state outside table");
    return (static_cast<std::size_t>(x) * states_ + y) * dim_;
  }

  int states_;
  Eigen::Index dim_;
  std::vector<double> data_;
};

template <class S>
class Kernel {
 public:
  using EvalFn = std::function<void(const S&, const S&, Eigen::Ref<HPoint>)>;

  Kernel(std::string name, Eigen::Index dim, bool symmetric, EvalFn fn,
         std::shared_ptr<const KernelTable> table = nullptr)
      : name_(std::move(name)), dim_(dim), symmetric_(symmetric), fn_(std::move(fn)),
        table_(std::move(table)) {
    if (dim_ <= 0) throw std::invalid_argument("Kernel: dimension must be positive");
    if (!fn_) throw std::invalid_argument("Kernel: empty evaluation function");
  }

  const std::string& name() const { return name_; }
  Eigen::Index dim() const { return dim_; }
  bool symmetric() const { return symmetric_; }
  const KernelTable* table() const { return table_.get(); }
  std::shared_ptr<const KernelTable> shared_table() const { return table_; }

  void eval_into(const S& x, const S& y, Eigen::Ref<HPoint> out) const {
    if constexpr (std::is_same_v<S, StateIndex>) {
      if (table_) {
        out = table_->value(x, y);
        return;
      }
    }
    fn_(x, y, out);
  }

  HPoint operator()(const S& x, const S& y) const {
    HPoint out(dim_);
    eval_into(x, y, out);
    return out;
  }

 private:
  std::string name_;
  Eigen::Index dim_;
  bool symmetric_;
  EvalFn fn_;
  std::shared_ptr<const KernelTable> table_;
};

/// Unary map S -> R^d (Hoeffding projections, h_1).
template <class S>
class UnaryMap {
 public:
  using Fn = std::function<HPoint(const S&)>;
  UnaryMap(Eigen::Index dim, Fn fn) : dim_(dim), fn_(std::move(fn)) {}
  Eigen::Index dim() const { return dim_; }
  HPoint operator()(const S& x) const { return fn_(x); }

 private:
  Eigen::Index dim_;
  Fn fn_;
};

// -----------------------------------------------------------------------------
// Table construction
// -----------------------------------------------------------------------------

inline Kernel<StateIndex> table_kernel(std::string name, std::shared_ptr<const KernelTable> table) {
  if (!table) throw std::invalid_argument("table_kernel: null table");
  const bool symmetric = table->is_symmetric();
  const auto dim = table->dim();
  auto t = table;
  return Kernel<StateIndex>(
      std::move(name), dim, symmetric,
      [t](const StateIndex& x, const StateIndex& y, Eigen::Ref<HPoint> out) { out = t->value(x, y); },
      std::move(table));
}

/// Tabulates `fn` on {0..states-1}^2.
template <class Fn>
std::shared_ptr<KernelTable> tabulate(int states, Eigen::Index dim, Fn&& fn) {
  auto table = std::make_shared<KernelTable>(states, dim);
  HPoint buf(dim);
  for (int x = 0; x < states; ++x)
    for (int y = 0; y < states; ++y) {
      fn(x, y, buf);
      table->value(x, y) = buf;
    }
  return table;
}

/// Restricts a kernel on S to finitely many states via `embedding[s]`, and
/// tabulates the result.
template <class S>
Kernel<StateIndex> on_states(const Kernel<S>& h, const std::vector<S>& embedding) {
  const int states = static_cast<int>(embedding.size());
  auto table = tabulate(states, h.dim(), [&](int x, int y, Eigen::Ref<HPoint> out) {
    h.eval_into(embedding[x], embedding[y], out);
  });
  return Kernel<StateIndex>(h.name(), h.dim(), h.symmetric() || table->is_symmetric(),
                            [table](const StateIndex& x, const StateIndex& y, Eigen::Ref<HPoint> out) {
                              out = table->value(x, y);
                            },
                            table);
}

// -----------------------------------------------------------------------------
// Catalog
// -----------------------------------------------------------------------------

enum class KernelName { spatial_sign, product, gini, dot, custom_table };

inline KernelName parse_kernel_name(std::string_view name) {
  if (name == "spatial_sign") return KernelName::spatial_sign;
  if (name == "product") return KernelName::product;
  if (name == "gini") return KernelName::gini;
  if (name == "dot") return KernelName::dot;
  if (name == "custom_table") return KernelName::custom_table;
  throw std::invalid_argument("unknown kernel name '" + std::string(name) + "'");
}

/// (x - y) / ||x - y|| for x != y, 0 for x = y.
inline Kernel<HPoint> spatial_sign_kernel(Eigen::Index d) {
  return Kernel<HPoint>("spatial_sign", d, false,
                        [d](const HPoint& x, const HPoint& y, Eigen::Ref<HPoint> out) {
                          if (x.size() != d || y.size() != d)
                            throw std::invalid_argument("spatial_sign: dimension mismatch");
                          out = x - y;
                          const double n = out.norm();
                          if (n == 0.0)
                            out.setZero();
                          else
                            out /= n;
                        });
}

inline Kernel<double> product_kernel() {
  return Kernel<double>("product", 1, true,
                        [](const double& x, const double& y, Eigen::Ref<HPoint> out) { out(0) = x * y; });
}

/// Gini mean-difference kernel |x - y|.
inline Kernel<double> gini_kernel() {
  return Kernel<double>("gini", 1, true, [](const double& x, const double& y, Eigen::Ref<HPoint> out) {
    out(0) = std::abs(x - y);
  });
}

inline Kernel<HPoint> dot_kernel(Eigen::Index m) {
  return Kernel<HPoint>("dot", 1, true, [m](const HPoint& x, const HPoint& y, Eigen::Ref<HPoint> out) {
    if (x.size() != m || y.size() != m) throw std::invalid_argument("dot: dimension mismatch");
    out(0) = x.dot(y);
  });
}

template <class S>
Kernel<S> constant_kernel(HPoint c) {
  const auto d = c.size();
  return Kernel<S>("constant", d, true,
                   [c = std::move(c)](const S&, const S&, Eigen::Ref<HPoint> out) { out = c; });
}

/// Parses a kernel table from CSV rows `state_i,state_j,coord_1,...,coord_d`.
/// A first line that does not start with a digit or sign is treated as a header.
inline Kernel<StateIndex> load_table_kernel(std::istream& in, std::string name = "custom_table") {
  struct Row {
    int i, j;
    std::vector<double> coords;
  };
  std::vector<Row> rows;
  std::string line;
  bool first = true;
  int max_state = -1;
  std::size_t dim = 0;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    const auto c = line[line.find_first_not_of(" \t")];
    if (first && !(std::isdigit(static_cast<unsigned char>(c)) || c == '-' || c == '+')) {
      first = false;
      continue;
    }
    first = false;
    std::stringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() < 3)
      throw std::invalid_argument("kernel table line " + std::to_string(line_no) + ": need at least 3 columns");
    Row row{};
    try {
      row.i = std::stoi(cells[0]);
      row.j = std::stoi(cells[1]);
      for (std::size_t k = 2; k < cells.size(); ++k) row.coords.push_back(std::stod(cells[k]));
    } catch (const std::logic_error&) {
      throw std::invalid_argument("kernel table line " + std::to_string(line_no) + ": not numeric");
    }
    if (row.i < 0 || row.j < 0)
      throw std::invalid_argument("kernel table line " + std::to_string(line_no) + ": negative state");
    if (dim == 0) dim = row.coords.size();
    if (row.coords.size() != dim)
      throw std::invalid_argument("kernel table line " + std::to_string(line_no) + ": inconsistent dimension");
    max_state = std::max({max_state, row.i, row.j});
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw std::invalid_argument("kernel table: no rows");
  const int states = max_state + 1;
  auto table = std::make_shared<KernelTable>(states, static_cast<Eigen::Index>(dim));
  std::vector<char> seen(static_cast<std::size_t>(states) * states, 0);
  for (const auto& r : rows) {
    auto& flag = seen[static_cast<std::size_t>(r.i) * states + r.j];
    if (flag) throw std::invalid_argument("kernel table: duplicate entry for a state pair");
    flag = 1;
    for (std::size_t k = 0; k < dim; ++k) table->at(r.i, r.j)[k] = r.coords[k];
  }
  for (char f : seen)
    if (!f) throw std::invalid_argument("kernel table: missing state pair");
  return table_kernel(std::move(name), std::move(table));
}

inline Kernel<StateIndex> load_table_kernel_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open kernel table '" + path + "'");
  return load_table_kernel(in);
}

// -----------------------------------------------------------------------------
// Marginal laws
// -----------------------------------------------------------------------------

template <class S>
struct FiniteLaw {
  std::vector<S> support;
  std::vector<double> weights;

  FiniteLaw(std::vector<S> s, std::vector<double> w) : support(std::move(s)), weights(std::move(w)) {
    if (support.empty() || support.size() != weights.size())
      throw std::invalid_argument("FiniteLaw: support and weights must be non-empty and of equal size");
    double total = 0.0;
    for (double x : weights) {
      if (!(x >= 0.0)) throw std::invalid_argument("FiniteLaw: negative weight");
      total += x;
    }
    if (std::abs(total - 1.0) > 1e-12) throw std::invalid_argument("FiniteLaw: weights must sum to 1");
  }
};

/// Uniform law on states {0..states-1} with the given weights.
inline FiniteLaw<StateIndex> state_law(const std::vector<double>& weights) {
  std::vector<StateIndex> support(weights.size());
  for (std::size_t i = 0; i < weights.size(); ++i) support[i] = static_cast<StateIndex>(i);
  return FiniteLaw<StateIndex>(std::move(support), weights);
}

/// Law known only through a sampler; expectations use `budget` draws from a
/// stream seeded with `seed`.
template <class S>
struct SampledLaw {
  std::function<S(Rng&)> sampler;
  std::size_t budget = 0;
  std::uint64_t seed = 0;
};

template <class S>
using MarginalLaw = std::variant<FiniteLaw<S>, SampledLaw<S>>;

namespace detail {

template <class S>
struct Atoms {
  std::vector<S> points;
  std::vector<double> weights;
  bool exact = true;
};

template <class S>
Atoms<S> atoms_of(const MarginalLaw<S>& law) {
  if (const auto* f = std::get_if<FiniteLaw<S>>(&law)) return {f->support, f->weights, true};
  const auto& s = std::get<SampledLaw<S>>(law);
  if (s.budget == 0) throw std::invalid_argument("Monte-Carlo expectation requires a positive sample budget");
  if (!s.sampler) throw std::invalid_argument("Monte-Carlo expectation requires a sampler");
  Rng rng(s.seed);
  Atoms<S> a;
  a.exact = false;
  a.points.reserve(s.budget);
  for (std::size_t i = 0; i < s.budget; ++i) a.points.push_back(s.sampler(rng));
  a.weights.assign(s.budget, 1.0 / static_cast<double>(s.budget));
  return a;
}

}  // namespace detail

// -----------------------------------------------------------------------------
// Hoeffding decomposition
// -----------------------------------------------------------------------------

template <class S>
struct HoeffdingComponents {
  UnaryMap<S> h10;  // E[h(x, X')] - mean
  UnaryMap<S> h01;  // E[h(X, y)] - mean
  Kernel<S> h2;     // h - h10 - h01 - mean
  HPoint mean;      // E[h(X, X')]
  double mean_std_error = 0.0;  // 0 for exact laws
  bool exact = true;
};

/// Splits h into mean, first-order projections and degenerate remainder under
/// `law`. With a sampled law the expectations are taken under the empirical
/// law of the drawn atoms, so the reconstruction identity stays exact.
template <class S>
HoeffdingComponents<S> hoeffding_components(const Kernel<S>& h, const MarginalLaw<S>& law) {
  auto atoms = std::make_shared<const detail::Atoms<S>>(detail::atoms_of(law));
  const auto d = h.dim();
  const std::size_t m = atoms->points.size();

  // Row and column means over the atoms, and the grand mean.
  HPoint mean = HPoint::Zero(d);
  HPoint buf(d);
  std::vector<HPoint> row_means;  // E[h(a_i, X')] for atoms
  row_means.reserve(m);
  for (std::size_t i = 0; i < m; ++i) {
    HPoint r = HPoint::Zero(d);
    for (std::size_t j = 0; j < m; ++j) {
      h.eval_into(atoms->points[i], atoms->points[j], buf);
      r += atoms->weights[j] * buf;
    }
    mean += atoms->weights[i] * r;
    row_means.push_back(std::move(r));
  }

  double mean_se = 0.0;
  if (!atoms->exact && m > 1) {
    // Standard error of the grand mean from the row means (norm of the
    // coordinatewise standard errors).
    double var = 0.0;
    for (std::size_t i = 0; i < m; ++i) var += (row_means[i] - mean).squaredNorm();
    mean_se = std::sqrt(var / static_cast<double>(m - 1) / static_cast<double>(m));
  }

  auto first = [atoms, h, mean, d](const S& x) {
    HPoint acc = HPoint::Zero(d);
    HPoint b(d);
    for (std::size_t j = 0; j < atoms->points.size(); ++j) {
      h.eval_into(x, atoms->points[j], b);
      acc += atoms->weights[j] * b;
    }
    return HPoint(acc - mean);
  };
  auto second = [atoms, h, mean, d](const S& y) {
    HPoint acc = HPoint::Zero(d);
    HPoint b(d);
    for (std::size_t i = 0; i < atoms->points.size(); ++i) {
      h.eval_into(atoms->points[i], y, b);
      acc += atoms->weights[i] * b;
    }
    return HPoint(acc - mean);
  };

  UnaryMap<S> h10(d, first);
  UnaryMap<S> h01(d, second);

  std::shared_ptr<KernelTable> table;
  if constexpr (std::is_same_v<S, StateIndex>) {
    if (const auto* t = h.table()) {
      // Tabulate the projections over the full state space, then h2.
      const int states = t->states();
      std::vector<HPoint> r(states), c(states);
      for (int s = 0; s < states; ++s) {
        r[s] = first(s);
        c[s] = second(s);
      }
      table = tabulate(states, d, [&](int x, int y, Eigen::Ref<HPoint> out) {
        out = t->value(x, y) - r[x] - c[y] - mean;
      });
      auto rt = std::make_shared<const std::vector<HPoint>>(std::move(r));
      auto ct = std::make_shared<const std::vector<HPoint>>(std::move(c));
      h10 = UnaryMap<S>(d, [rt, first](const S& x) {
        return (x >= 0 && x < static_cast<int>(rt->size())) ? (*rt)[x] : first(x);
      });
      h01 = UnaryMap<S>(d, [ct, second](const S& y) {
        return (y >= 0 && y < static_cast<int>(ct->size())) ? (*ct)[y] : second(y);
      });
    }
  }

  auto eval2 = [h, f = h10, g = h01, mean](const S& x, const S& y, Eigen::Ref<HPoint> out) {
    h.eval_into(x, y, out);
    out -= f(x);
    out -= g(y);
    out -= mean;
  };
  Kernel<S> h2(h.name() + "_deg", d, h.symmetric(), eval2, table);
  return HoeffdingComponents<S>{h10, h01, h2, mean, mean_se, atoms->exact};
}

/// h^deg(x,y) = h(x,y) - E h(X,y) - E h(x,X) + E h(X,X'); coincides with the
/// remainder h2 of the Hoeffding split. Reads E[h(X_1, y)] where the printed
/// display writes the unary h_1 with two arguments.
template <class S>
Kernel<S> degenerate(const Kernel<S>& h, const MarginalLaw<S>& law) {
  return hoeffding_components(h, law).h2;
}

/// h_1(x) = E[h(x, X_1)] - E[h(X_1, X_1')].
template <class S>
UnaryMap<S> h1_component(const Kernel<S>& h, const MarginalLaw<S>& law) {
  return hoeffding_components(h, law).h10;
}

template <class S>
struct TruncatedPair {
  Kernel<S> le;  // h 1{||h|| <= R}
  Kernel<S> gt;  // h 1{||h|| > R}
};

template <class S>
TruncatedPair<S> truncate(const Kernel<S>& h, double radius) {
  if (!(radius > 0.0)) throw std::invalid_argument("truncate: R must be positive");
  auto le = [h, radius](const S& x, const S& y, Eigen::Ref<HPoint> out) {
    h.eval_into(x, y, out);
    if (out.norm() > radius) out.setZero();
  };
  auto gt = [h, radius](const S& x, const S& y, Eigen::Ref<HPoint> out) {
    h.eval_into(x, y, out);
    if (out.norm() <= radius) out.setZero();
  };
  std::shared_ptr<KernelTable> tle, tgt;
  if constexpr (std::is_same_v<S, StateIndex>) {
    if (const auto* t = h.table()) {
      tle = tabulate(t->states(), h.dim(), le);
      tgt = tabulate(t->states(), h.dim(), gt);
    }
  }
  return {Kernel<S>(h.name() + "_le", h.dim(), h.symmetric(), le, tle),
          Kernel<S>(h.name() + "_gt", h.dim(), h.symmetric(), gt, tgt)};
}

/// Largest norm of the conditional means of `h` given either argument, over
/// the support of a finite law. Zero (up to rounding) iff h is degenerate.
template <class S>
double degeneracy_defect(const Kernel<S>& h, const FiniteLaw<S>& law) {
  double worst = 0.0;
  HPoint row(h.dim()), col(h.dim()), buf(h.dim());
  for (const auto& x : law.support) {
    row.setZero();
    col.setZero();
    for (std::size_t j = 0; j < law.support.size(); ++j) {
      h.eval_into(x, law.support[j], buf);
      row += law.weights[j] * buf;
      h.eval_into(law.support[j], x, buf);
      col += law.weights[j] * buf;
    }
    worst = std::max({worst, row.norm(), col.norm()});
  }
  return worst;
}

}  // namespace hustat
