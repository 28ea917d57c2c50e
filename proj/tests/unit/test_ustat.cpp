#include <gtest/gtest.h>

#include <memory>

#include "hustat/processes.hpp"
#include "hustat/ustat.hpp"

using namespace hustat;

namespace {

/// Scalar product kernel on doubles that counts its evaluations.
Kernel<double> counting_product(std::shared_ptr<long> count) {
  return Kernel<double>("counting", 1, true, [count](const double& x, const double& y, Eigen::Ref<HPoint> out) {
    ++*count;
    out(0) = x * y;
  });
}

double brute_u(const std::vector<double>& x, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) s += x[i] * x[j];
  return s;
}

}  // namespace

// ============================================================================
// u_statistic and prefixes
// ============================================================================

TEST(UStatistic, SmallExample) {
  const std::vector<double> x{1.0, 2.0, 3.0};
  EXPECT_EQ(u_statistic(product_kernel(), std::span<const double>(x))(0), 11.0);
  EXPECT_THROW(u_statistic(product_kernel(), std::span<const double>(x.data(), 1)), std::invalid_argument);
}

TEST(UStatistic, PrefixesMatchBruteForce) {
  Rng rng(4);
  std::normal_distribution<double> normal;
  std::vector<double> x(60);
  for (double& v : x) v = normal(rng);
  const auto path = u_stat_prefixes(product_kernel(), std::span<const double>(x));
  EXPECT_EQ(path.n(), 60u);
  EXPECT_EQ(path.at(0)(0), 0.0);
  EXPECT_EQ(path.at(1)(0), 0.0);
  for (std::size_t k = 2; k <= 60; ++k) EXPECT_NEAR(path.at(k)(0), brute_u(x, k), 1e-10);
}

TEST(UStatistic, QuadraticEvaluationCount) {
  auto count = std::make_shared<long>(0);
  std::vector<double> x(40, 1.0);
  const auto path = u_stat_prefixes(counting_product(count), std::span<const double>(x));
  EXPECT_EQ(*count, 40 * 39 / 2);
  EXPECT_EQ(path.at(40)(0), 780.0);
}

TEST(UStatistic, TableFastPathAgreesWithGeneric) {
  const std::vector<double> values{-1.0, 0.5, 2.0};
  const auto table = on_states(product_kernel(), values);
  const auto chain = FiniteChain::iid(Eigen::Vector3d(0.3, 0.3, 0.4));
  Rng rng(8);
  const auto seq = chain.simulate(300, rng);
  std::vector<double> embedded;
  for (int s : seq) embedded.push_back(values[static_cast<std::size_t>(s)]);
  const auto a = u_stat_prefixes(table, std::span<const StateIndex>(seq));
  const auto b = u_stat_prefixes(product_kernel(), std::span<const double>(embedded));
  for (std::size_t k = 2; k <= 300; ++k) EXPECT_NEAR(a.at(k)(0), b.at(k)(0), 1e-9);
  EXPECT_NEAR(max_prefix_norm(table, std::span<const StateIndex>(seq)),
              max_prefix_norm(product_kernel(), std::span<const double>(embedded)), 1e-9);
}

TEST(UStatistic, ZeroKernel) {
  const std::vector<double> x{1.0, 2.0, 3.0, 4.0};
  EXPECT_EQ(max_prefix_norm(constant_kernel<double>(HPoint::Zero(2)), std::span<const double>(x)), 0.0);
}

TEST(UStatPath, CsvLayout) {
  const std::vector<double> x{1.0, 2.0, 3.0};
  std::ostringstream out;
  u_stat_prefixes(product_kernel(), std::span<const double>(x)).write_csv(out);
  EXPECT_EQ(out.str().substr(0, out.str().find('\n')), "k,coord_1");
}

// ============================================================================
// Polygonal process
// ============================================================================

TEST(Polygonal, GridValuesAndInterpolation) {
  const std::vector<double> x{1.0, -2.0, 0.5, 3.0, 1.5};
  const auto path = u_stat_prefixes(product_kernel(), std::span<const double>(x));
  const auto h = product_kernel();
  for (std::size_t k = 0; k <= 5; ++k) {
    const double t = static_cast<double>(k) / 5.0;
    EXPECT_NEAR(polygonal_process(path, std::span<const double>(x), h, t)(0), path.at(k)(0), 1e-12);
    EXPECT_NEAR(path.polygonal(t)(0), path.at(k)(0), 1e-12);
  }
  // Midpoints lie on the chord between neighbouring grid values.
  for (std::size_t k = 0; k < 5; ++k) {
    const double t = (static_cast<double>(k) + 0.3) / 5.0;
    const double expected = 0.7 * path.at(k)(0) + 0.3 * path.at(k + 1)(0);
    EXPECT_NEAR(polygonal_process(path, std::span<const double>(x), h, t)(0), expected, 1e-12);
    EXPECT_NEAR(path.polygonal(t)(0), expected, 1e-12);
  }
  EXPECT_THROW(path.polygonal(1.5), std::invalid_argument);
}

// ============================================================================
// Hoeffding split check
// ============================================================================

TEST(HoeffdingSplit, RandomTablesAgree) {
  Rng rng(12);
  std::normal_distribution<double> normal;
  for (int trial = 0; trial < 20; ++trial) {
    const bool symmetric = trial % 2 == 0;
    auto t = tabulate(3, 2, [&](int x, int y, Eigen::Ref<HPoint> out) {
      out(0) = normal(rng);
      out(1) = normal(rng);
      (void)x;
      (void)y;
    });
    if (symmetric)
      for (int x = 0; x < 3; ++x)
        for (int y = 0; y < x; ++y) t->value(x, y) = HPoint(t->value(y, x));
    const auto h = table_kernel("r", t);
    const auto law = state_law({0.2, 0.5, 0.3});
    std::vector<StateIndex> seq(30);
    for (auto& s : seq) s = sample_categorical(law.weights, rng);
    const auto c = hoeffding_split_check(h, MarginalLaw<StateIndex>(law), std::span<const StateIndex>(seq));
    EXPECT_LT(c.max_rel, 1e-10);
    EXPECT_EQ(c.symmetric_checked, symmetric);
    if (symmetric) EXPECT_LT(c.symmetric_max_abs, 1e-10);
  }
}

TEST(HoeffdingSplit, RequiresFiniteLaw) {
  const auto h = on_states(product_kernel(), std::vector<double>{0.0, 1.0});
  SampledLaw<StateIndex> law{[](Rng& rng) { return static_cast<StateIndex>(rng() % 2); }, 10, 1};
  const std::vector<StateIndex> seq{0, 1, 1};
  EXPECT_THROW(hoeffding_split_check(h, MarginalLaw<StateIndex>(law), std::span<const StateIndex>(seq)),
               std::invalid_argument);
}
