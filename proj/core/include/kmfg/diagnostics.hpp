#pragma once

#include <vector>

#include "kmfg/grid.hpp"
#include "kmfg/model.hpp"
#include "kmfg/solver.hpp"

namespace kmfg {

/// |LHS - RHS| / (1 + |RHS|) for the discrete energy balance
///   sum m0 u_0 - sum g(m_T) m_T
///     = sum dt [f(m) m + (D_pH(Dv u) . Dv u - H(Dv u)) m],
/// interval k paired with m^{k+1}; all sums carry the cell volume.
double energy_equality_residual(const FlowState& flow, const ValueState& value,
                                const Model& model);

/// Largest |mass(t_k) - mass(t_0)| over the time nodes.
double mass_drift(const ScalarField& m);

struct FenchelYoungReport {
  /// F(m^{k+1}) + F*(beta^k) - beta^k m^{k+1} per interval cell.
  ScalarField running;
  /// G(m_T) + G*(beta_T) - beta_T m_T per cell.
  std::vector<double> terminal;
  double running_mean = 0.0;   // mass-weighted
  double terminal_mean = 0.0;  // mass-weighted by m_T
  double minimum = 0.0;
};

FenchelYoungReport fenchel_young_residuals(const FlowState& flow,
                                           const ValueState& value,
                                           const Model& model);

/// Mass-weighted L1 residuals of the optimality relations on {m > floor}:
/// beta - f(m), beta_T - g(m_T) and w + m D_pH(Dv u).
struct CouplingResiduals {
  double running = 0.0;
  double terminal = 0.0;
  double flux = 0.0;
};

CouplingResiduals coupling_residuals(const FlowState& flow,
                                     const ValueState& value,
                                     const Model& model,
                                     double mass_floor = 1e-6);

enum class CutoffPreset { kKinetic, kSpatial };

/// Kinetic shift (x + eta(t) delta, v + zeta(t) delta) with zeta = eta'.
/// Both presets vanish on [0, t0/2]. kKinetic ends with zeta = 1 and
/// eta(t) = t after t0; kSpatial ends with eta = 1, zeta = 0 after t0.
struct RegularityProbe {
  CutoffPreset preset = CutoffPreset::kKinetic;
  /// The spatial preset peaks at zeta = 3 / t0, so t0 >= 0.75 keeps a shift
  /// of 2 dv inside the default box.
  double t0 = 0.75;
  /// Unit shift direction (d components; empty means the first axis).
  std::vector<double> direction;
  /// Shift magnitudes in units of dv.
  std::vector<double> ladder{0.25, 0.5, 1.0, 2.0};

  double eta(double t) const;
  double zeta(double t) const;
};

struct RegularityResult {
  std::vector<double> delta;
  std::vector<double> lhs;
  std::vector<double> ratio;  // lhs / delta^2
  double slope = 0.0;         // least-squares slope of log lhs vs log delta
  double ratio_spread = 0.0;  // max ratio / min ratio
};

/// Left-hand side of the second-order difference-quotient estimate with unit
/// constants, for one shift magnitude:
///   sum dt |Dv u^{-delta} - Dv u^{delta}|^2 m
///   + 1/2 sum dt min{(m^delta)^{q-2}, m^{q-2}} |m^delta - m|^2
///   + 1/2 sum min{(m_T^delta)^{s-2}, m_T^{s-2}} |m_T^delta - m_T|^2.
/// Throws ConfigError when a shift leaves half the torus or half the box.
double regularity_lhs(const FlowState& flow, const ValueState& value,
                      const RegularityProbe& probe, double delta,
                      const Model& model);

RegularityResult regularity_quotient(const FlowState& flow,
                                     const ValueState& value,
                                     const RegularityProbe& probe,
                                     const Model& model);

struct CommutatorEntry {
  double epsilon = 0.0;
  double delta_x = 0.0;
  double norm_definition = 0.0;  // L1 of the commutator, direct path
  double norm_identity = 0.0;    // L1 of (v chi) * Dx g
  double max_path_difference = 0.0;
};

struct CommutatorTable {
  std::vector<CommutatorEntry> entries;
  /// Fitted exponents of the norm in epsilon (per delta_x, averaged) and in
  /// delta_x (per epsilon, averaged).
  double epsilon_slope = 0.0;
  double delta_slope = 0.0;
  double max_path_difference = 0.0;  // relative to the largest norm
};

/// Normalised compact bump exp(-1 / (1 - (z/width)^2)) sampled on n nodes of
/// spacing h centred at offset 0, i.e. z = (i - centre) h.
std::vector<double> bump_kernel(double width, double spacing);

/// [v . Dx, chi_eps *_v] applied to g = psi_delta *_x m for every pair of
/// the ladders, by definition and through (v chi_eps) *_v Dx g. L1 norms sum
/// over node slices with weight dt. Throws ConfigError when eps >= v_max or
/// delta_x >= 1/2.
CommutatorTable commutator_decay(const ScalarField& m,
                                 const std::vector<double>& epsilons,
                                 const std::vector<double>& deltas);

/// rho(k, x) = sum_v u(k, x, v) phi(v) dv^d; phi has one value per v cell.
std::vector<double> velocity_average(const ScalarField& u,
                                     const std::vector<double>& phi);

/// omega(h) = sum_k dt sum_x dx^d |rho(x + h e_1) - rho(x)| with periodic
/// linear interpolation, for an average laid out like velocity_average.
double translation_modulus(const GridSpec& grid, int slices,
                           const std::vector<double>& rho, double h);

struct SubsolutionReport {
  std::size_t cells = 0;           // interval cells checked
  std::size_t kink_cells = 0;      // excluded by the dilated kink set
  std::size_t violations = 0;      // off the kink set
  double violation_fraction = 0.0; // violations / cells
  double max_excess = 0.0;         // largest excess off the kink set
  std::size_t terminal_violations = 0;
};

/// Checks that u_l = (u - l)_+ satisfies
///   -dt u_l - v . Dx u_l + H(Dv u_l) 1{u > l} <= beta 1{u > l} + tol
/// cellwise, tol = 10 (dx + dv + dt) times a local Lipschitz estimate of u,
/// and (u_T - l)_+ <= (beta_T - l)_+. The kink is excluded: nodes whose t,
/// x or v neighbours lie on the other side of {u = l}, dilated by one cell.
SubsolutionReport truncation_check(const ValueState& value, double level,
                                   const Model& model);

/// Same check for max(u1, u2) against a shared (beta, beta_T), excluding the
/// dilated straddle set of {u1 = u2}.
SubsolutionReport maximum_check(const ScalarField& u1, const ScalarField& u2,
                                const ScalarField& beta,
                                const std::vector<double>& beta_T,
                                const Model& model);

struct UniquenessReport {
  double density_l1 = 0.0;  // sum dt vol |m1 - m2| over nodes
  double value_l1 = 0.0;    // same for u on {m1 > floor}
};

UniquenessReport uniqueness_probe(const FlowState& a, const ValueState& ua,
                                  const FlowState& b, const ValueState& ub,
                                  double mass_floor = 1e-3);

/// Least-squares slope of log(y) against log(x).
double log_log_slope(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace kmfg
