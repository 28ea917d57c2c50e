#include <gtest/gtest.h>

#include <sstream>

#include "hustat/kernels.hpp"

using namespace hustat;

namespace {

Kernel<StateIndex> sum_table_kernel() {
  // h(x, y) = x + 2y on states {0, 1, 2}.
  return table_kernel("sum", tabulate(3, 1, [](int x, int y, Eigen::Ref<HPoint> out) { out(0) = x + 2.0 * y; }));
}

}  // namespace

// ============================================================================
// Catalog
// ============================================================================

TEST(Catalog, SpatialSignIsUnitOrZero) {
  const auto h = spatial_sign_kernel(2);
  HPoint x(2), y(2);
  x << 3.0, 4.0;
  y << 0.0, 0.0;
  EXPECT_NEAR(h(x, y).norm(), 1.0, 1e-15);
  EXPECT_NEAR(h(x, y)(0), 0.6, 1e-15);
  EXPECT_EQ(h(x, x).norm(), 0.0);
}

TEST(Catalog, ScalarKernels) {
  EXPECT_EQ(product_kernel()(2.0, 3.0)(0), 6.0);
  EXPECT_EQ(gini_kernel()(2.0, 5.0)(0), 3.0);
  HPoint a(2), b(2);
  a << 1.0, 2.0;
  b << 3.0, 4.0;
  EXPECT_EQ(dot_kernel(2)(a, b)(0), 11.0);
}

TEST(Catalog, ParseKernelName) {
  EXPECT_EQ(parse_kernel_name("spatial_sign"), KernelName::spatial_sign);
  EXPECT_EQ(parse_kernel_name("gini"), KernelName::gini);
  EXPECT_THROW(parse_kernel_name("nope"), std::invalid_argument);
}

TEST(Catalog, TableKernelSymmetryFlag) {
  EXPECT_FALSE(sum_table_kernel().symmetric());
  const auto sym = on_states(product_kernel(), std::vector<double>{-1.0, 1.0});
  EXPECT_TRUE(sym.symmetric());
  EXPECT_EQ(sym(0, 1)(0), -1.0);
}

TEST(Catalog, LoadTableKernel) {
  std::istringstream in("x,y,c1\n0,0,1\n0,1,2\n1,0,3\n1,1,4\n");
  const auto h = load_table_kernel(in);
  EXPECT_EQ(h(1, 0)(0), 3.0);
  std::istringstream missing("0,0,1\n0,1,2\n1,1,4\n");
  EXPECT_THROW(load_table_kernel(missing), std::invalid_argument);
  std::istringstream dup("0,0,1\n0,0,2\n0,1,2\n1,0,3\n1,1,4\n");
  EXPECT_THROW(load_table_kernel(dup), std::invalid_argument);
}

// ============================================================================
// Hoeffding components
// ============================================================================

TEST(Hoeffding, ReconstructionIsExact) {
  const auto h = sum_table_kernel();
  const MarginalLaw<StateIndex> law = state_law({0.2, 0.3, 0.5});
  const auto c = hoeffding_components(h, law);
  for (int x = 0; x < 3; ++x)
    for (int y = 0; y < 3; ++y) {
      const HPoint rebuilt = c.h10(x) + c.h01(y) + c.h2(x, y) + c.mean;
      EXPECT_NEAR((rebuilt - h(x, y)).norm(), 0.0, 1e-14);
    }
  // E h = E X + 2 E X with E X = 1.3.
  EXPECT_NEAR(c.mean(0), 3.9, 1e-14);
  EXPECT_TRUE(c.exact);
}

TEST(Hoeffding, DegenerateRemainderHasZeroConditionalMeans) {
  const auto h = sum_table_kernel();
  const auto fl = state_law({0.2, 0.3, 0.5});
  const auto h2 = degenerate(h, MarginalLaw<StateIndex>(fl));
  EXPECT_LT(degeneracy_defect(h2, fl), 1e-14);
  // An additive kernel has no second-order part.
  for (int x = 0; x < 3; ++x)
    for (int y = 0; y < 3; ++y) EXPECT_NEAR(h2(x, y).norm(), 0.0, 1e-14);
}

TEST(Hoeffding, SampledLawKeepsIdentityExact) {
  const auto h = on_states(product_kernel(), std::vector<double>{0.0, 1.0, 5.0});
  SampledLaw<StateIndex> sampled{[](Rng& rng) { return static_cast<StateIndex>(rng() % 3); }, 500, 42};
  const auto c = hoeffding_components(h, MarginalLaw<StateIndex>(sampled));
  EXPECT_FALSE(c.exact);
  for (int x = 0; x < 3; ++x)
    for (int y = 0; y < 3; ++y)
      EXPECT_NEAR((c.h10(x) + c.h01(y) + c.h2(x, y) + c.mean - h(x, y)).norm(), 0.0, 1e-12);
  SampledLaw<StateIndex> empty{[](Rng&) { return 0; }, 0, 1};
  EXPECT_THROW(hoeffding_components(h, MarginalLaw<StateIndex>(empty)), std::invalid_argument);
}

TEST(Hoeffding, H1ComponentOfSignedProduct) {
  // h(x,y) = x + y + xy on {-1, 1}: h1(x) = x.
  Kernel<double> sp("sp", 1, true, [](const double& x, const double& y, Eigen::Ref<HPoint> o) { o(0) = x + y + x * y; });
  const auto h = on_states(sp, std::vector<double>{-1.0, 1.0});
  const auto h1 = h1_component(h, MarginalLaw<StateIndex>(state_law({0.5, 0.5})));
  EXPECT_NEAR(h1(0)(0), -1.0, 1e-15);
  EXPECT_NEAR(h1(1)(0), 1.0, 1e-15);
}

TEST(FiniteLaw, RejectsBadWeights) {
  EXPECT_THROW(state_law({0.5, 0.6}), std::invalid_argument);
  EXPECT_THROW(state_law({1.5, -0.5}), std::invalid_argument);
  EXPECT_THROW(state_law({}), std::invalid_argument);
}

// ============================================================================
// Truncation
// ============================================================================

TEST(Truncate, SplitsAtRadius) {
  const auto h = sum_table_kernel();
  const auto t = truncate(h, 2.5);
  for (int x = 0; x < 3; ++x)
    for (int y = 0; y < 3; ++y) {
      const double v = h(x, y)(0);
      EXPECT_EQ(t.le(x, y)(0) + t.gt(x, y)(0), v);
      EXPECT_EQ(t.le(x, y)(0), std::abs(v) <= 2.5 ? v : 0.0);
    }
  EXPECT_THROW(truncate(h, 0.0), std::invalid_argument);
}

TEST(Truncate, InfiniteRadiusKeepsKernel) {
  const auto h = sum_table_kernel();
  const auto t = truncate(h, std::numeric_limits<double>::infinity());
  EXPECT_EQ(t.le(2, 2)(0), 6.0);
  EXPECT_EQ(t.gt(2, 2)(0), 0.0);
}
