#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "kmfg/errors.hpp"
#include "kmfg/grid.hpp"
#include "kmfg/model.hpp"

namespace kmfg {
namespace {

TEST(BuildGrid, SpacingsFromDefinitions) {
  const GridSpec g = build_grid(1, 4, 4, 4, 1.0, 2.0);
  EXPECT_DOUBLE_EQ(g.dx, 0.25);
  EXPECT_DOUBLE_EQ(g.dv, 1.0);
  EXPECT_DOUBLE_EQ(g.dt, 0.25);
}

TEST(BuildGrid, CellCentredVelocities) {
  const GridSpec g = build_grid(1, 2, 2, 2, 1.0, 1.0);
  EXPECT_DOUBLE_EQ(g.v_node(0), -0.5);
  EXPECT_DOUBLE_EQ(g.v_node(1), 0.5);
}

TEST(BuildGrid, TwoDimensionalCounts) {
  const GridSpec g = build_grid(2, 8, 8, 16, 2.0, 3.0);
  EXPECT_DOUBLE_EQ(g.dt, 0.125);
  EXPECT_EQ(g.cells_per_slice(), 4096u);
  EXPECT_DOUBLE_EQ(g.cell_volume(), std::pow(1.0 / 8, 2) * std::pow(6.0 / 8, 2));
}

TEST(BuildGrid, RejectsBadArguments) {
  EXPECT_THROW(build_grid(1, 1, 4, 4, 1.0, 1.0), ConfigError);
  EXPECT_THROW(build_grid(1, 4, 1, 4, 1.0, 1.0), ConfigError);
  EXPECT_THROW(build_grid(1, 4, 4, 1, 1.0, 1.0), ConfigError);
  EXPECT_THROW(build_grid(1, 4, 4, 4, 0.0, 1.0), ConfigError);
  EXPECT_THROW(build_grid(1, 4, 4, 4, 1.0, -1.0), ConfigError);
  EXPECT_THROW(build_grid(3, 4, 4, 4, 1.0, 1.0), ConfigError);
}

TEST(ScalarField, LayoutSizes) {
  const GridSpec g = build_grid(2, 3, 4, 5, 1.0, 1.0);
  EXPECT_EQ(ScalarField(g, TimeLayout::kNodes).size(), 6u * 9 * 16);
  EXPECT_EQ(ScalarField(g, TimeLayout::kIntervals).size(), 5u * 9 * 16);
  VectorField w(g, 1.0);
  EXPECT_EQ(w.dims(), 2);
  w.apply_zero_flux();
  for (int a = 0; a < 2; ++a) {
    for (std::size_t iv = 0; iv < g.cells_v(); ++iv) {
      const double expected = g.on_v_boundary(iv, a) ? 0.0 : 1.0;
      EXPECT_EQ(w[a](0, 0, iv), expected);
    }
  }
}

TEST(IntegrateSlice, ConstantAndZero) {
  const GridSpec g = build_grid(1, 4, 4, 2, 1.0, 2.0);
  EXPECT_DOUBLE_EQ(integrate_slice(ScalarField(g, TimeLayout::kNodes, 1.0), 0), 4.0);
  EXPECT_EQ(integrate_slice(ScalarField(g, TimeLayout::kNodes), 1), 0.0);
  EXPECT_THROW(integrate_slice(ScalarField(g, TimeLayout::kNodes), 3), std::out_of_range);
}

TEST(IntegrateSlice, NormalisedInitialDensity) {
  const GridSpec g = build_grid(1, 16, 16, 4, 1.0, 2.0);
  const InitialDensity m0 = build_initial_density(g, DensitySpec{});
  ScalarField f(g, TimeLayout::kNodes);
  std::copy(m0.values.begin(), m0.values.end(), f.slice(0).begin());
  EXPECT_NEAR(integrate_slice(f, 0), 1.0, 1e-12);
}

TEST(IntegrateSlice, Linear) {
  const GridSpec g = build_grid(2, 4, 6, 2, 1.0, 1.5);
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n01;
  ScalarField a(g, TimeLayout::kNodes), b(g, TimeLayout::kNodes), c(g, TimeLayout::kNodes);
  for (std::size_t i = 0; i < a.size(); ++i) {
    a.values()[i] = n01(rng);
    b.values()[i] = n01(rng);
    c.values()[i] = 2.5 * a.values()[i] - 0.75 * b.values()[i];
  }
  const double lhs = integrate_slice(c, 1);
  const double rhs = 2.5 * integrate_slice(a, 1) - 0.75 * integrate_slice(b, 1);
  EXPECT_NEAR(lhs, rhs, 1e-13 * (1.0 + std::abs(rhs)));
}

ScalarField random_field(const GridSpec& g, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  ScalarField f(g, TimeLayout::kNodes);
  for (double& x : f.values()) x = u(rng);
  return f;
}

TEST(ShiftField, ZeroShiftIsIdentity) {
  const GridSpec g = build_grid(2, 4, 4, 2, 1.0, 1.0);
  const ScalarField f = random_field(g, 5);
  const double delta[2] = {0.0, 0.0};
  const auto s = shift_field(f, 1, delta, 1.0, 1.0);
  for (std::size_t c = 0; c < s.size(); ++c) EXPECT_EQ(s[c], f.slice(1)[c]);
}

TEST(ShiftField, LatticeShiftInXIsAPermutation) {
  const GridSpec g = build_grid(1, 8, 6, 2, 1.0, 1.0);
  const ScalarField f = random_field(g, 6);
  const double delta[1] = {g.dx};
  const auto s = shift_field(f, 0, delta, 3.0, 0.0);
  for (int ix = 0; ix < g.nx; ++ix) {
    for (int iv = 0; iv < g.nv; ++iv) {
      EXPECT_EQ(s[ix * g.nv + iv], f(0, (ix + 3) % g.nx, iv));
    }
  }
}

double gaussian(double v) { return std::exp(-v * v / (2 * 0.5 * 0.5)); }

TEST(ShiftField, HalfCellVelocityShiftOfGaussian) {
  // Interpolation error of a half-cell shift is O(dv^2): halving dv divides
  // it by about four.
  std::vector<double> errors;
  for (int nv : {32, 64}) {
    const GridSpec g = build_grid(1, 2, nv, 2, 1.0, 3.0);
    ScalarField f(g, TimeLayout::kNodes);
    for (int ix = 0; ix < g.nx; ++ix)
      for (int iv = 0; iv < g.nv; ++iv) f(0, ix, iv) = gaussian(g.v_node(iv));
    const double delta[1] = {0.5 * g.dv};
    const auto s = shift_field(f, 0, delta, 0.0, 1.0);
    double err = 0.0;
    for (int iv = 0; iv < g.nv; ++iv) {
      err = std::max(err, std::abs(s[iv] - gaussian(g.v_node(iv) + 0.5 * g.dv)));
    }
    errors.push_back(err);
  }
  EXPECT_LT(errors[0], 2e-2);
  EXPECT_GT(errors[0] / errors[1], 3.5);
}

TEST(ShiftField, OutsideTheBoxReadsZero) {
  const GridSpec g = build_grid(1, 2, 4, 2, 1.0, 1.0);
  const ScalarField f(g, TimeLayout::kNodes, 1.0);
  const double delta[1] = {2.0};
  const auto s = shift_field(f, 0, delta, 0.0, 1.0);
  for (double x : s) EXPECT_EQ(x, 0.0);
}

TEST(ShiftField, RoundTripIsSecondOrder) {
  std::vector<double> errors;
  for (int n : {32, 64}) {
    const GridSpec g = build_grid(1, n, n, 2, 1.0, 3.0);
    ScalarField f(g, TimeLayout::kNodes);
    for (int ix = 0; ix < n; ++ix)
      for (int iv = 0; iv < n; ++iv)
        f(0, ix, iv) = (1.0 + 0.5 * std::cos(2 * M_PI * g.x_node(ix))) * gaussian(g.v_node(iv));
    const auto fwd = shift_slice(g, f.slice(0), std::vector<double>{0.3 * g.dx},
                                 std::vector<double>{0.3 * g.dv});
    const auto back = shift_slice(g, fwd, std::vector<double>{-0.3 * g.dx},
                                  std::vector<double>{-0.3 * g.dv});
    double err = 0.0;
    for (std::size_t c = 0; c < back.size(); ++c) {
      err = std::max(err, std::abs(back[c] - f.slice(0)[c]));
    }
    errors.push_back(err);
  }
  EXPECT_LT(errors[0], 5e-2);
  EXPECT_GT(errors[0] / errors[1], 3.0);
}

TEST(RequireSameGrid, Mismatch) {
  EXPECT_THROW(require_same_grid(build_grid(1, 4, 4, 4, 1.0, 1.0),
                                 build_grid(1, 4, 4, 5, 1.0, 1.0)),
               GridMismatch);
}

}  // namespace
}  // namespace kmfg
