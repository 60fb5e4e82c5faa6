#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "kmfg/grid.hpp"
#include "kmfg/model.hpp"
#include "kmfg/prox.hpp"
#include "kmfg/transport.hpp"

namespace kmfg {

/// Density on time nodes (slice 0 pinned to m0) and flux on intervals.
struct FlowState {
  ScalarField m;
  VectorField w;
};

/// Value function on time nodes with the running and terminal dual
/// densities. beta is defined from u so that the discrete HJ relation holds
/// with equality; beta_T = u_T.
struct ValueState {
  ScalarField u;
  ScalarField beta;
  std::vector<double> beta_T;
};

enum class InitMode { kFreeStreaming, kRandom };

struct SolverConfig {
  /// Primal / dual steps. Zero selects tau = ratio c / |K|, sigma = c /
  /// (ratio |K|) with c^2 = 0.99.
  double tau = 0.0;
  double sigma = 0.0;
  double step_ratio = 1.0;
  double theta = 1.0;
  int max_iter = 20000;
  double tol_gap = 1e-4;
  double tol_feas = 1e-5;
  double prox_tol = 1e-12;
  /// Objectives, gap and stopping test are evaluated every log_every steps.
  int log_every = 10;
  InitMode init = InitMode::kFreeStreaming;
  std::uint64_t seed = 1;
  /// Record elapsed seconds per row; off keeps the record reproducible.
  bool record_wall_clock = false;
};

struct ConvergenceRow {
  int iter = 0;
  double primal = 0.0;
  double dual = 0.0;  // -A
  double gap = 0.0;
  double feas = 0.0;
  double energy_residual = 0.0;
  double seconds = 0.0;
};

struct ConvergenceRecord {
  std::vector<ConvergenceRow> rows;
  bool converged = false;
  int iterations = 0;
};

struct SolveResult {
  FlowState flow;
  ValueState value;
  ConvergenceRecord record;
  double op_norm = 0.0;
  double tau = 0.0;
  double sigma = 0.0;
  double wall_seconds = 0.0;
};

struct OpNormOptions {
  double tolerance = 1e-6;
  int max_iterations = 10000;
  std::uint64_t seed = 7;
};

/// Power iteration on K^T K (the pinned m0 column included, which can only
/// enlarge the norm). Returns sqrt(lambda_max) * 1.01. Throws NumericalError
/// without stagnation after max_iterations.
double estimate_op_norm(const GridSpec& grid, const OpNormOptions& options = {});

/// Node value function from the interval multipliers of K: copies slices
/// 0..nt-1 and fills u_T by minimising the terminal infimal convolution
/// dt F*((S - a)/dt) + G*(a), S = u^{nt-1} + dt (-v . Dx u + H(Dv u))^{nt-1}.
ScalarField complete_value(const ScalarField& multipliers, const Model& model);

ValueState recover_value_state(const ScalarField& u, const Model& model);

/// sum over t_1..t_nt of (F(m) + m L(-w/m)) vol dt + sum G(m_T) vol; the
/// running cost of interval k is charged to m^{k+1}. +inf when infeasible.
double evaluate_B(const FlowState& flow, const Model& model);

/// sum F*(beta) vol dt - sum u_0 m0 vol + sum G*(beta_T) vol, with m0 read
/// from slice 0 of m0_flow.m. F* of a vanishing coupling is the indicator of
/// beta <= 0; positive beta below kConjugateSlack is treated as round-off.
double evaluate_A(const ValueState& value, const FlowState& m0_flow,
                  const Model& model);

inline constexpr double kConjugateSlack = 1e-10;

double duality_gap(double a_val, double b_val);

/// Weighted L1 norm of K(m, w) with m^0 as stored.
double feasibility(const FlowState& flow);

SolveResult pdhg_solve(const Model& model, const GridSpec& grid,
                       const SolverConfig& config,
                       const SolveResult* warm_start = nullptr);

}  // namespace kmfg
