#pragma once

#include <utility>
#include <vector>

#include "kmfg/grid.hpp"
#include "kmfg/model.hpp"

namespace kmfg {

/// Discrete kinetic continuity operator
///
///   K(m, w)_k = (m^{k+1} - m^k) / dt + v . Dx m^{k+1} + Div_v w^k,
///
/// k = 0..nt-1, with centred periodic Dx, centred Div_v reading zero outside
/// the velocity box. m lives on time nodes, w and the residual on intervals.
/// Fields are paired with the uniform weight dt dx^d dv^d, so the adjoint is
/// the plain transpose.
class ContinuityOperator {
 public:
  explicit ContinuityOperator(const GridSpec& grid);

  const GridSpec& grid() const { return grid_; }
  const Stencil& stencil() const { return stencil_; }

  void apply(const ScalarField& m, const VectorField& w,
             ScalarField& out) const;

  /// Exact transpose: out_m = K_m^T y (nodes), out_w = K_w^T y (intervals).
  /// In the interior out_m = -dt y - v . Dx y and out_w = -Dv y.
  void adjoint(const ScalarField& y, ScalarField& out_m,
               VectorField& out_w) const;

  /// Hamilton-Jacobi transport of a node field:
  /// out^k = -(u^{k+1} - u^k) / dt - v . Dx u^k on intervals.
  void hj_transport(const ScalarField& u, ScalarField& out) const;

  /// Centred velocity gradient of u^k for k = 0..nt-1 (intervals). Component
  /// a is zero on the outermost layers of axis a, matching the zero-flux
  /// constraint on w.
  void velocity_gradient(const ScalarField& u, VectorField& out) const;

 private:
  GridSpec grid_;
  Stencil stencil_;
};

ScalarField apply_K(const ScalarField& m, const VectorField& w);
std::pair<ScalarField, VectorField> apply_K_adjoint(const ScalarField& y);
ScalarField hj_transport(const ScalarField& u);
VectorField velocity_gradient(const ScalarField& u);

/// Weighted inner product sum(a * b) dt dx^d dv^d.
double pair(const ScalarField& a, const ScalarField& b);
double pair(const VectorField& a, const VectorField& b);

/// integrate_slice of m (resp. |v| m) for every slice.
std::vector<double> mass_per_slice(const ScalarField& m);
std::vector<double> first_v_moment(const ScalarField& m);

/// Discrete solution of K(m, 0) = 0 from m0: each implicit step is solved
/// exactly in the Fourier basis of the torus. The step symbol
/// 1/dt + i v . sin(theta)/dx never vanishes, so every dt > 0 is admissible.
ScalarField free_streaming(const InitialDensity& m0);

/// Continuum free streaming m0(x - v t, v) sampled on the time nodes.
ScalarField free_streaming_continuum(const InitialDensity& m0);

/// Reachable set on the node grid: all of t > 0, and {m0 > 1e-14} at t = 0.
std::vector<char> reachable_mask(const InitialDensity& m0);

}  // namespace kmfg
