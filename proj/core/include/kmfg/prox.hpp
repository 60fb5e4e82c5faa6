#pragma once

#include <array>
#include <cstddef>
#include <span>

#include "kmfg/model.hpp"

namespace kmfg {

struct ProxPoint {
  double m = 0.0;
  std::array<double, 2> w{};
  int iterations = 0;
};

struct ProxOptions {
  /// Root tolerance on the envelope derivative, relative to its scale.
  double tolerance = 1e-12;
  int max_iterations = 200;
};

/// Minimiser over m >= 0 and w of
///
///   F(m) + terminal_weight G(m) + m L(-w/m)
///     + (|m - m_hat|^2 + |w - w_hat|^2) / (2 tau).
///
/// w is eliminated in closed form (r = 2) or by an inner 1-D solve (other r,
/// slower), leaving a convex scalar problem in m solved by safeguarded
/// Newton / bisection. Returns (0, 0) when the derivative at m = 0+ is
/// non-negative. Throws NumericalError (naming cell and inputs) if the root
/// finder fails.
ProxPoint prox_perspective(const Model& model, double m_hat,
                           std::span<const double> w_hat, double tau,
                           std::size_t cell = 0, double terminal_weight = 0.0,
                           const ProxOptions& options = {});

/// argmin_{m >= 0} G(m) + (m - m_hat)^2 / (2 tau).
double prox_terminal(const Model& model, double m_hat, double tau,
                     std::size_t cell = 0);

/// Value of the objective minimised by prox_perspective (+inf if infeasible).
double prox_perspective_objective(const Model& model, double m_hat,
                                  std::span<const double> w_hat, double tau,
                                  double m, std::span<const double> w,
                                  std::size_t cell = 0,
                                  double terminal_weight = 0.0);

}  // namespace kmfg
