#pragma once

#include <array>
#include <cstddef>
#include <span>

#include "kmfg/model.hpp"
#include "kmfg/prox.hpp"
#include "kmfg/solver.hpp"

namespace kmfg {

struct OracleConfig {
  /// Largest admissible nx^d nv^d nt.
  std::size_t max_cells = 4096;
  int max_newton_per_stage = 100;
  /// Barrier weight schedule: start, reduction factor, final value.
  double mu_start = 1e-4;
  double mu_factor = 0.1;
  double mu_final = 1e-12;
  /// Newton decrement target (squared, relative to 1 + |objective|).
  double tolerance = 1e-16;
};

struct OracleResult {
  FlowState flow;
  double objective = 0.0;     // exact B at the returned flow
  double stationarity = 0.0;  // norm of the null-space projected gradient
  double feasibility = 0.0;   // weighted L1 of K(m, w)
  int newton_steps = 0;
};

/// Independent minimiser of the discrete primal problem for r = 2: Newton's
/// method on the barrier-regularised objective over the affine constraint
/// set (Schur complement of the KKT system, dense Cholesky), with a
/// fraction-to-boundary rule keeping m > 0 and a decreasing barrier weight.
/// Throws ConfigError above the size cap or for r != 2, NumericalError if
/// the factorisation fails or the Newton budget is exhausted.
OracleResult oracle_solve(const Model& model, const GridSpec& grid,
                          const OracleConfig& config = {});

struct OracleProxOptions {
  int grid_points = 41;
  int restarts = 4;
  int max_evaluations = 20000;
};

/// Brute-force minimiser of prox_perspective_objective: dense grid search
/// followed by Nelder-Mead restarts; the origin is always a candidate.
ProxPoint oracle_prox(const Model& model, double m_hat,
                      std::span<const double> w_hat, double tau,
                      std::size_t cell = 0, double terminal_weight = 0.0,
                      const OracleProxOptions& options = {});

}  // namespace kmfg
