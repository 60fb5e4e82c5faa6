#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "kmfg/errors.hpp"
#include "kmfg/grid.hpp"
#include "kmfg/model.hpp"

namespace kmfg {
namespace {

Model quadratic() { return Model(ModelSpec{}); }

Model powers(double q, double s, double c_F, double c_G) {
  ModelSpec spec;
  spec.q = q;
  spec.s = s;
  spec.c_F = c_F;
  spec.c_G = c_G;
  return Model(spec);
}

TEST(Couplings, QuadraticValues) {
  const Model m = quadratic();
  EXPECT_DOUBLE_EQ(m.running_cost(3.0), 4.5);
  EXPECT_DOUBLE_EQ(m.running_coupling(3.0), 3.0);
  EXPECT_EQ(m.running_cost(0.0), 0.0);
  EXPECT_EQ(m.running_coupling(0.0), 0.0);
  EXPECT_EQ(m.running_cost(-1.0), kInfeasible);
  EXPECT_DOUBLE_EQ(m.terminal_cost(1.0), 0.5);
  EXPECT_DOUBLE_EQ(m.terminal_coupling(1.0), 1.0);
}

TEST(Conjugates, ClosedForms) {
  const Model m = quadratic();
  EXPECT_DOUBLE_EQ(m.running_conjugate(2.0), 2.0);
  EXPECT_EQ(m.running_conjugate(-5.0), 0.0);
  EXPECT_EQ(m.terminal_conjugate(-1.0), 0.0);
  EXPECT_EQ(m.terminal_conjugate(0.0), 0.0);
}

TEST(Conjugates, MatchNumericSupremum) {
  const Model m = powers(3.0, 2.0, 2.0, 0.5);
  const double fstar = fenchel_conjugate_numeric(
      [&](double x) { return m.running_cost(x); }, 1.0, 0.0, 20.0);
  EXPECT_NEAR(m.running_conjugate(1.0), fstar, 1e-6);
  const double gstar = fenchel_conjugate_numeric(
      [&](double x) { return m.terminal_cost(x); }, 1.0, 0.0, 20.0);
  EXPECT_NEAR(m.terminal_conjugate(1.0), gstar, 1e-6);
}

TEST(Conjugates, ArgmaxIsInverseSlope) {
  const Model m = powers(2.5, 1.5, 1.3, 0.7);
  for (double beta : {0.1, 1.0, 4.0}) {
    EXPECT_NEAR(m.running_coupling(m.running_conjugate_argmax(beta)), beta, 1e-12 * beta);
    EXPECT_NEAR(m.terminal_coupling(m.terminal_conjugate_argmax(beta)), beta, 1e-12 * beta);
  }
  EXPECT_EQ(m.running_conjugate_argmax(-1.0), 0.0);
}

TEST(Conjugates, VanishingCouplingIsAnIndicator) {
  const Model m = powers(2.0, 2.0, 0.0, 0.0);
  EXPECT_EQ(m.running_conjugate(-1.0), 0.0);
  EXPECT_EQ(m.running_conjugate(0.5), kInfeasible);
  EXPECT_EQ(m.terminal_conjugate(0.5), kInfeasible);
}

TEST(Hamiltonian, QuadraticPair) {
  const Model m = quadratic();
  const double p[1] = {1.5};
  EXPECT_DOUBLE_EQ(m.hamiltonian(p), 1.125);
  EXPECT_DOUBLE_EQ(m.lagrangian(p), 1.125);
  double g[1];
  m.hamiltonian_gradient(p, g);
  EXPECT_DOUBLE_EQ(g[0], 1.5);
}

TEST(Hamiltonian, ValueAtZeroIsMinusConstant) {
  ModelSpec spec;
  spec.C_H = 0.7;
  const Model m(spec);
  const double p[2] = {0.0, 0.0};
  EXPECT_DOUBLE_EQ(m.hamiltonian(p), -0.7);
  EXPECT_DOUBLE_EQ(m.hamiltonian_at_zero(), -0.7);
}

TEST(Hamiltonian, CubicLagrangianMatchesNumericConjugate) {
  ModelSpec spec;
  spec.r = 3.0;
  spec.c_H = 1.4;
  const Model m(spec);
  const double alpha[1] = {1.0};
  // H is even; the supremum over p is attained at p > 0 for alpha > 0.
  const double numeric = fenchel_conjugate_numeric(
      [&](double p) { return m.hamiltonian_of_norm(std::abs(p)); }, 1.0, -10.0, 10.0);
  EXPECT_NEAR(m.lagrangian(alpha), numeric, 1e-6);
}

TEST(Hamiltonian, FenchelYoung) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> box(-4.0, 4.0);
  for (double r : {1.5, 2.0, 3.0}) {
    ModelSpec spec;
    spec.r = r;
    spec.c_H = 0.8;
    spec.C_H = 0.2;
    const Model m(spec);
    for (int i = 0; i < 10000; ++i) {
      const double p[2] = {box(rng), box(rng)};
      const double a[2] = {box(rng), box(rng)};
      EXPECT_GE(m.hamiltonian(p) + m.lagrangian(a) - p[0] * a[0] - p[1] * a[1], -1e-12);
      double g[2];
      m.hamiltonian_gradient(p, g);
      const double eq = m.hamiltonian(p) + m.lagrangian(g) - p[0] * g[0] - p[1] * g[1];
      EXPECT_NEAR(eq, 0.0, 1e-10 * (1.0 + std::abs(m.hamiltonian(p))));
    }
  }
}

TEST(Perspective, Conventions) {
  const Model m = quadratic();
  const double zero[1] = {0.0};
  const double one[1] = {1.0};
  EXPECT_EQ(m.perspective(0.0, zero), 0.0);
  EXPECT_EQ(m.perspective(0.0, one), kInfeasible);
  EXPECT_EQ(m.perspective(-1.0, zero), kInfeasible);
  EXPECT_DOUBLE_EQ(m.perspective(2.0, one), 0.25);  // |w|^2 / (2m)
}

TEST(ModelSpec, RejectsInvalidExponents) {
  auto make = [](auto edit) {
    ModelSpec spec;
    edit(spec);
    return Model(spec);
  };
  EXPECT_THROW(make([](ModelSpec& s) { s.q = 1.0; }), ConfigError);
  EXPECT_THROW(make([](ModelSpec& s) { s.s = 3.0; }), ConfigError);  // s > q
  EXPECT_THROW(make([](ModelSpec& s) { s.r = 0.5; }), ConfigError);
  EXPECT_THROW(make([](ModelSpec& s) { s.c_H = 0.0; }), ConfigError);
  EXPECT_THROW(make([](ModelSpec& s) { s.C_H = -1.0; }), ConfigError);
  EXPECT_THROW(make([](ModelSpec& s) { s.c_F = -1.0; }), ConfigError);
}

TEST(FenchelNumeric, Examples) {
  EXPECT_NEAR(fenchel_conjugate_numeric([](double m) { return 0.5 * m * m; }, 3.0, 0.0, 10.0),
              4.5, 1e-8);
  EXPECT_NEAR(fenchel_conjugate_numeric([](double m) { return m; }, 0.5, 0.0, 10.0), 0.0,
              1e-12);
  const Model m = powers(2.5, 2.0, 1.0, 1.0);
  EXPECT_NEAR(fenchel_conjugate_numeric([&](double x) { return m.running_cost(x); }, 1.3,
                                        0.0, 10.0),
              m.running_conjugate(1.3), 1e-6);
}

TEST(FenchelNumeric, NonFiniteSampleIsAModelError) {
  EXPECT_THROW(fenchel_conjugate_numeric([](double) { return NAN; }, 1.0, 0.0, 1.0),
               ModelError);
}

TEST(FenchelNumeric, Biconjugation) {
  const Model m = powers(2.0, 2.0, 1.0, 1.0);
  auto conj = [&](double beta) {
    return fenchel_conjugate_numeric([&](double x) { return m.running_cost(x); }, beta,
                                     0.0, 30.0);
  };
  for (double x = 0.0; x <= 10.0; x += 1.25) {
    EXPECT_NEAR(fenchel_conjugate_numeric(conj, x, -5.0, 15.0), m.running_cost(x), 1e-5);
  }
}

TEST(Couplings, SlopeIsDerivative) {
  const Model m = powers(3.5, 1.8, 1.7, 0.4);
  for (double x = 0.1; x <= 10.0; x += 0.3) {
    const double h = 1e-5 * x;
    const double fd = (m.running_cost(x + h) - m.running_cost(x - h)) / (2 * h);
    EXPECT_NEAR(fd, m.running_coupling(x), 1e-6 * m.running_coupling(x));
    const double gd = (m.terminal_cost(x + h) - m.terminal_cost(x - h)) / (2 * h);
    EXPECT_NEAR(gd, m.terminal_coupling(x), 1e-6 * m.terminal_coupling(x));
  }
}

TEST(Couplings, ConjugatesAreMonotone) {
  const Model m = powers(2.5, 2.0, 0.6, 1.4);
  double pf = 0.0, pg = 0.0;
  for (double b = -3.0; b <= 3.0; b += 0.01) {
    const double f = m.running_conjugate(b);
    const double g = m.terminal_conjugate(b);
    EXPECT_GE(f, pf);
    EXPECT_GE(g, pg);
    if (b <= 0.0) {
      EXPECT_EQ(f, 0.0);
      EXPECT_EQ(g, 0.0);
    }
    pf = f;
    pg = g;
  }
}

TEST(Couplings, SpatiallyVaryingCoefficient) {
  ModelSpec spec;
  spec.c_F_field = {1.0, 2.0, 4.0};
  const Model m(spec);
  EXPECT_DOUBLE_EQ(m.running_cost(1.0, 2), 2.0);
  EXPECT_DOUBLE_EQ(m.running_coupling(1.0, 1), 2.0);
}

TEST(InitialDensity, UniformTimesGaussianHasUnitMass) {
  const GridSpec g = build_grid(1, 16, 32, 2, 1.0, 2.0);
  DensitySpec spec;
  spec.x_profile = DensitySpec::XProfile::kUniform;
  const InitialDensity m0 = build_initial_density(g, spec);
  double mass = 0.0;
  for (double x : m0.values) {
    EXPECT_GE(x, 0.0);
    mass += x;
  }
  EXPECT_NEAR(mass * g.cell_volume(), 1.0, 1e-12);
}

TEST(InitialDensity, TwoBumpsHaveUnitMass) {
  const GridSpec g = build_grid(2, 16, 8, 2, 1.0, 2.5);
  DensitySpec spec;
  spec.x_profile = DensitySpec::XProfile::kBumps;
  spec.x_centers = {0.25, 0.75};
  spec.x_width = 0.1;
  const InitialDensity m0 = build_initial_density(g, spec);
  double mass = 0.0;
  for (double x : m0.values) mass += x;
  EXPECT_NEAR(mass * g.cell_volume(), 1.0, 1e-12);
}

TEST(InitialDensity, FirstMomentOfCentredGaussian) {
  const GridSpec g = build_grid(1, 4, 128, 2, 1.0, 2.5);
  DensitySpec spec;
  spec.x_profile = DensitySpec::XProfile::kUniform;
  spec.v_sigma = 0.5;
  const InitialDensity m0 = build_initial_density(g, spec);
  double moment = 0.0;
  for (int ix = 0; ix < g.nx; ++ix)
    for (int iv = 0; iv < g.nv; ++iv) moment += std::abs(g.v_node(iv)) * m0.values[ix * g.nv + iv];
  moment *= g.cell_volume();
  EXPECT_NEAR(moment, 0.5 * std::sqrt(2.0 / M_PI), 5e-4);
}

TEST(InitialDensity, RejectsHeavyTail) {
  const GridSpec g = build_grid(1, 8, 8, 2, 1.0, 1.0);
  DensitySpec spec;
  spec.v_sigma = 1.0;
  EXPECT_THROW(build_initial_density(g, spec), ConfigError);
  spec.v_sigma = -0.1;
  EXPECT_THROW(build_initial_density(g, spec), ConfigError);
}

TEST(GrowthBounds, PowerLawDefaults) {
  const GrowthBoundReport r = check_growth_bounds(quadratic(), 1000, 1);
  EXPECT_TRUE(r.all_ok());
  EXPECT_DOUBLE_EQ(r.c_hamiltonian, 1.0);
}

TEST(GrowthBounds, ConstantIsMaxOfCoefficientAndInverse) {
  ModelSpec spec;
  spec.c_H = 0.25;
  const GrowthBoundReport r = check_growth_bounds(Model(spec), 1000, 2);
  EXPECT_TRUE(r.all_ok());
  EXPECT_DOUBLE_EQ(r.c_hamiltonian, 4.0);
}

TEST(GrowthBounds, LowerBoundTightWithoutConstant) {
  const GrowthBoundReport r = check_growth_bounds(quadratic(), 500, 3);
  EXPECT_NEAR(r.hamiltonian_lower_slack, 0.0, 1e-12);
}

TEST(GrowthBounds, RandomisedCoefficients) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> coef(0.1, 5.0), expo(1.2, 4.0);
  for (int trial = 0; trial < 10; ++trial) {
    ModelSpec spec;
    spec.q = expo(rng);
    spec.s = 1.1 + (spec.q - 1.1) * 0.5;
    spec.r = expo(rng);
    spec.c_F = coef(rng);
    spec.c_G = coef(rng);
    spec.c_H = coef(rng);
    spec.C_H = coef(rng);
    EXPECT_TRUE(check_growth_bounds(Model(spec), 1000, trial).all_ok());
  }
}

}  // namespace
}  // namespace kmfg
