#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "kmfg/diagnostics.hpp"
#include "kmfg/errors.hpp"
#include "kmfg/solver.hpp"
#include "kmfg/transport.hpp"

namespace kmfg {
namespace {

GridSpec probe_grid() { return build_grid(1, 12, 12, 12, 1.0, 2.0); }

class Converged : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    SolverConfig cfg;
    cfg.tol_gap = 1e-7;
    cfg.tol_feas = 1e-8;
    cfg.max_iter = 100000;
    run_ = new SolveResult(pdhg_solve(model(), probe_grid(), cfg));
  }
  static void TearDownTestSuite() {
    delete run_;
    run_ = nullptr;
  }
  static Model model() { return Model{ModelSpec{}}; }
  static SolveResult* run_;
};
SolveResult* Converged::run_ = nullptr;

TEST_F(Converged, EnergyEqualityHolds) {
  ASSERT_TRUE(run_->record.converged);
  EXPECT_LT(energy_equality_residual(run_->flow, run_->value, model()), 1e-5);
}

TEST_F(Converged, EnergyEqualityDetectsCorruptedDensity) {
  FlowState bad = run_->flow;
  for (double& x : bad.m.slice(5)) x *= 1.5;
  EXPECT_GT(energy_equality_residual(bad, run_->value, model()), 1e-3);
}

TEST_F(Converged, CouplingResidualsSmall) {
  const CouplingResiduals c = coupling_residuals(run_->flow, run_->value, model());
  EXPECT_LT(c.running, 1e-5);
  EXPECT_LT(c.terminal, 1e-5);
  EXPECT_LT(c.flux, 1e-5);
}

TEST_F(Converged, CouplingResidualsDetectCorruption) {
  ValueState bad = run_->value;
  for (double& x : bad.beta.values()) x += 0.1;
  for (double& x : bad.beta_T) x -= 0.1;
  const CouplingResiduals c = coupling_residuals(run_->flow, bad, model());
  EXPECT_GT(c.running, 0.05);
  EXPECT_GT(c.terminal, 0.05);
  FlowState shifted = run_->flow;
  for (double& x : shifted.w[0].values()) x += 0.1;
  EXPECT_GT(coupling_residuals(shifted, run_->value, model()).flux, 0.01);
}

TEST_F(Converged, FenchelYoungNonNegativeAndSmallOnSupport) {
  const FenchelYoungReport fy = fenchel_young_residuals(run_->flow, run_->value, model());
  EXPECT_GE(fy.minimum, -1e-12);
  EXPECT_LT(fy.running_mean, 1e-6);
  EXPECT_LT(fy.terminal_mean, 1e-6);
}

TEST_F(Converged, TruncationAtMedianIsASubsolution) {
  std::vector<double> u = run_->value.u.values();
  std::nth_element(u.begin(), u.begin() + u.size() / 2, u.end());
  const SubsolutionReport r = truncation_check(run_->value, u[u.size() / 2], model());
  EXPECT_GT(r.cells, r.kink_cells);
  EXPECT_LE(r.violation_fraction, 0.01);
  EXPECT_EQ(r.terminal_violations, 0u);
}

TEST_F(Converged, TruncationBelowMinimumIsTheSolutionItself) {
  const auto& u = run_->value.u.values();
  const double low = *std::min_element(u.begin(), u.end()) - 1.0;
  const SubsolutionReport r = truncation_check(run_->value, low, model());
  EXPECT_EQ(r.kink_cells, 0u);
  EXPECT_EQ(r.violations, 0u);
}

TEST_F(Converged, TruncationDetectsLoweredCost) {
  ValueState bad = run_->value;
  // Far beyond the discretisation tolerance, which scales with |Du|.
  for (double& x : bad.beta.values()) x -= 20.0;
  for (double& x : bad.beta_T) x -= 20.0;
  const auto& u = run_->value.u.values();
  const double low = *std::min_element(u.begin(), u.end()) - 1.0;
  const SubsolutionReport r = truncation_check(bad, low, model());
  EXPECT_GT(r.violation_fraction, 0.5);
  EXPECT_GT(r.terminal_violations, 0u);
}

TEST_F(Converged, MaximumOfSolutionWithItself) {
  const SubsolutionReport r = maximum_check(run_->value.u, run_->value.u, run_->value.beta,
                                            run_->value.beta_T, model());
  EXPECT_EQ(r.violations, 0u);
  EXPECT_EQ(r.terminal_violations, 0u);
}

TEST_F(Converged, MaximumWithLowerShiftIgnoresTheLowerOne) {
  ScalarField lower = run_->value.u;
  for (double& x : lower.values()) x -= 5.0;
  const SubsolutionReport r =
      maximum_check(run_->value.u, lower, run_->value.beta, run_->value.beta_T, model());
  EXPECT_EQ(r.kink_cells, 0u);
  EXPECT_EQ(r.violations, 0u);
}

TEST_F(Converged, UniquenessAgainstItselfIsZero) {
  const UniquenessReport r =
      uniqueness_probe(run_->flow, run_->value, run_->flow, run_->value);
  EXPECT_EQ(r.density_l1, 0.0);
  EXPECT_EQ(r.value_l1, 0.0);
}

TEST_F(Converged, UniquenessSeesAConstantShift) {
  ValueState shifted = run_->value;
  for (double& x : shifted.u.values()) x += 0.25;
  const UniquenessReport r =
      uniqueness_probe(run_->flow, run_->value, run_->flow, shifted, 0.0);
  // Over all cells: 0.25 times the phase-space-time volume T |box|.
  const GridSpec g = probe_grid();
  const double volume = (g.nt + 1) * g.dt * 1.0 * 2 * g.v_max;
  EXPECT_NEAR(r.value_l1, 0.25 * volume, 1e-10);
}

TEST_F(Converged, RegularityLhsVanishesAtZeroShift) {
  RegularityProbe probe;
  EXPECT_NEAR(regularity_lhs(run_->flow, run_->value, probe, 0.0, model()), 0.0, 1e-14);
}

TEST_F(Converged, RegularityLhsGrowsWithShift) {
  for (auto preset : {CutoffPreset::kKinetic, CutoffPreset::kSpatial}) {
    RegularityProbe probe;
    probe.preset = preset;
    probe.ladder = {0.25, 0.5, 1.0};
    const RegularityResult r = regularity_quotient(run_->flow, run_->value, probe, model());
    ASSERT_EQ(r.lhs.size(), probe.ladder.size());
    for (std::size_t i = 1; i < r.lhs.size(); ++i) EXPECT_GT(r.lhs[i], r.lhs[i - 1]);
    EXPECT_GT(r.slope, 0.5);
    EXPECT_GE(r.ratio_spread, 1.0);
  }
}

TEST_F(Converged, RegularityRejectsShiftOutsideBox) {
  RegularityProbe probe;
  probe.preset = CutoffPreset::kSpatial;
  probe.t0 = 0.2;
  EXPECT_THROW(regularity_lhs(run_->flow, run_->value, probe, 2 * probe_grid().dv, model()),
               ConfigError);
}

TEST(RegularityProbe, CutoffShapes) {
  RegularityProbe k;
  EXPECT_EQ(k.eta(0.1), 0.0);
  EXPECT_EQ(k.zeta(0.1), 0.0);
  EXPECT_NEAR(k.eta(k.t0), k.t0, 1e-12);
  EXPECT_NEAR(k.zeta(k.t0), 1.0, 1e-12);
  EXPECT_NEAR(k.eta(0.9), 0.9, 1e-12);
  // eta is the integral of zeta.
  const int n = 20000;
  double integral = 0.0;
  for (int i = 0; i < n; ++i) integral += k.zeta((i + 0.5) * k.t0 / n) * k.t0 / n;
  EXPECT_NEAR(integral, k.eta(k.t0), 1e-6);

  RegularityProbe s;
  s.preset = CutoffPreset::kSpatial;
  EXPECT_EQ(s.eta(0.2), 0.0);
  EXPECT_NEAR(s.eta(s.t0), 1.0, 1e-12);
  EXPECT_NEAR(s.zeta(0.9), 0.0, 1e-12);
  integral = 0.0;
  for (int i = 0; i < n; ++i) integral += s.zeta((i + 0.5) * s.t0 / n) * s.t0 / n;
  EXPECT_NEAR(integral, 1.0, 1e-6);
}

TEST(MassDrift, Examples) {
  const GridSpec g = build_grid(1, 4, 4, 3, 1.0, 1.0);
  ScalarField m(g, TimeLayout::kNodes, 1.0);
  EXPECT_EQ(mass_drift(m), 0.0);
  m(2, 0, 0) += 1.0;
  EXPECT_NEAR(mass_drift(m), g.cell_volume(), 1e-15);
}

TEST(LogLogSlope, ExactPowerLaws) {
  const std::vector<double> x{0.1, 0.2, 0.4, 0.8};
  std::vector<double> y;
  for (double v : x) y.push_back(3.0 * v * v);
  EXPECT_NEAR(log_log_slope(x, y), 2.0, 1e-12);
  y.clear();
  for (double v : x) y.push_back(0.5 / v);
  EXPECT_NEAR(log_log_slope(x, y), -1.0, 1e-12);
}

TEST(BumpKernel, NormalisedAndSymmetric) {
  const double h = 0.01;
  const auto k = bump_kernel(0.1, h);
  double sum = 0.0;
  for (double x : k) {
    EXPECT_GE(x, 0.0);
    sum += x * h;
  }
  EXPECT_NEAR(sum, 1.0, 1e-12);
  for (std::size_t i = 0; i < k.size(); ++i) EXPECT_NEAR(k[i], k[k.size() - 1 - i], 1e-14);
}

TEST(Commutator, PathsAgreeAndLawsHold) {
  const GridSpec g = build_grid(1, 128, 128, 2, 1.0, 1.0);
  ScalarField m(g, TimeLayout::kNodes);
  for (int k = 0; k < m.slices(); ++k)
    for (int i = 0; i < g.nx; ++i)
      for (int j = 0; j < g.nv; ++j) {
        const double x = g.x_node(i) - 0.5, v = g.v_node(j);
        m(k, i, j) = std::exp(-x * x / (2 * 0.008 * 0.008) - v * v / (2 * 0.02 * 0.02));
      }
  const CommutatorTable t = commutator_decay(m, {0.1, 0.2, 0.4}, {0.05, 0.1, 0.2});
  EXPECT_EQ(t.entries.size(), 9u);
  EXPECT_LT(t.max_path_difference, 1e-10);
  EXPECT_NEAR(t.epsilon_slope, 1.0, 0.2);
  EXPECT_NEAR(t.delta_slope, -1.0, 0.2);
}

TEST(Commutator, VanishesOnVelocityIndependentDensity) {
  // chi_eps *_v commutes with v . Dx up to the box edge; away from it a
  // constant-in-v field is a fixed point of the mollifier.
  const GridSpec g = build_grid(1, 32, 32, 2, 1.0, 1.0);
  ScalarField m(g, TimeLayout::kNodes, 1.0);
  const CommutatorTable t = commutator_decay(m, {0.2}, {0.1});
  EXPECT_LT(t.entries[0].norm_definition, 1e-12);
}

TEST(Commutator, RejectsOversizedMollifiers) {
  const GridSpec g = build_grid(1, 16, 16, 2, 1.0, 1.0);
  const ScalarField m(g, TimeLayout::kNodes, 1.0);
  EXPECT_THROW(commutator_decay(m, {1.5}, {0.1}), ConfigError);
  EXPECT_THROW(commutator_decay(m, {0.2}, {0.6}), ConfigError);
}

TEST(VelocityAveraging, ConstantWeightIsDensity) {
  const GridSpec g = build_grid(1, 4, 8, 2, 1.0, 1.0);
  const ScalarField u(g, TimeLayout::kNodes, 3.0);
  const auto rho = velocity_average(u, std::vector<double>(g.nv, 1.0));
  ASSERT_EQ(rho.size(), 3u * 4);
  for (double x : rho) EXPECT_NEAR(x, 3.0 * 2.0, 1e-13);
  EXPECT_THROW(velocity_average(u, {1.0}), std::invalid_argument);
}

TEST(VelocityAveraging, TranslationModulusOfACosine) {
  // omega(h) = sum_k dt int |cos(2 pi (x + h)) - cos(2 pi x)| dx
  //          = (nt + 1) dt (4 / pi) |sin(pi h)|.
  const GridSpec g = build_grid(1, 256, 4, 2, 1.0, 1.0);
  ScalarField u(g, TimeLayout::kNodes);
  for (int k = 0; k <= g.nt; ++k)
    for (int i = 0; i < g.nx; ++i)
      for (int j = 0; j < g.nv; ++j) u(k, i, j) = std::cos(2 * M_PI * g.x_node(i));
  std::vector<double> phi(g.nv, 0.5);  // unit average over [-1, 1]
  const auto rho = velocity_average(u, phi);
  EXPECT_EQ(translation_modulus(g, u.slices(), rho, 0.0), 0.0);
  for (double h : {g.dx, 4 * g.dx, 0.25}) {
    const double exact = (g.nt + 1) * g.dt * 4.0 / M_PI * std::sin(M_PI * h);
    EXPECT_NEAR(translation_modulus(g, u.slices(), rho, h), exact, 1e-3 * exact);
  }
}

TEST_F(Converged, VelocityAverageModulusDecreasesWithShift) {
  const GridSpec g = probe_grid();
  std::vector<double> phi(g.nv);
  for (int j = 0; j < g.nv; ++j) phi[j] = std::exp(-g.v_node(j) * g.v_node(j));
  const auto rho = velocity_average(run_->value.u, phi);
  double prev = 0.0;
  for (int s : {1, 2, 3}) {
    const double w = translation_modulus(g, run_->value.u.slices(), rho, s * g.dx);
    EXPECT_GT(w, prev);
    prev = w;
  }
}

}  // namespace
}  // namespace kmfg
