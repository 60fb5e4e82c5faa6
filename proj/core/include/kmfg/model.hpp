#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "kmfg/grid.hpp"

namespace kmfg {

/// +infinity marks infeasible objective contributions (negative densities,
/// transport without mass). It propagates through sums unchanged.
inline constexpr double kInfeasible = std::numeric_limits<double>::infinity();

/// Shape of the initial density: a positional profile on the torus times a
/// Gaussian in each velocity component, normalised on the grid.
struct DensitySpec {
  enum class XProfile { kUniform, kCosine, kBumps };

  XProfile x_profile = XProfile::kCosine;
  /// kCosine: 1 + amplitude cos(2 pi (x - centre)), amplitude in [0, 1).
  double x_amplitude = 0.5;
  /// kCosine uses the first centre; kBumps places one compact bump at each.
  std::vector<double> x_centers{0.5};
  /// kBumps: support radius of each bump (torus units).
  double x_width = 0.15;
  double v_center = 0.0;
  double v_sigma = 0.5;
  /// Largest admissible Gaussian mass outside the velocity box.
  double tail_tol = 1e-4;

  /// Unnormalised density at one phase-space point.
  double evaluate(std::span<const double> x, std::span<const double> v) const;
};

std::string to_string(DensitySpec::XProfile p);
DensitySpec::XProfile parse_x_profile(const std::string& name);

/// Power-law data: running cost c_F m^q / q, terminal cost c_G m^s / s,
/// Hamiltonian c_H |p|^r / r - C_H. Coefficient fields, when non-empty, hold
/// one positive value per (x, v) cell of a slice and override the scalars.
struct ModelSpec {
  double q = 2.0;
  double s = 2.0;
  double r = 2.0;
  double c_F = 1.0;
  double c_G = 1.0;
  double c_H = 1.0;
  double C_H = 0.0;
  std::vector<double> c_F_field;
  std::vector<double> c_G_field;
  DensitySpec m0;
};

/// Validated model data with closed-form couplings and conjugates.
class Model {
 public:
  explicit Model(ModelSpec spec);

  const ModelSpec& spec() const { return spec_; }

  double running_coefficient(std::size_t cell) const {
    return spec_.c_F_field.empty() ? spec_.c_F : spec_.c_F_field[cell];
  }
  double terminal_coefficient(std::size_t cell) const {
    return spec_.c_G_field.empty() ? spec_.c_G : spec_.c_G_field[cell];
  }

  // Running coupling: cost c m^q / q (+inf for m < 0) and derivative.
  double running_cost(double m, std::size_t cell = 0) const;
  double running_coupling(double m, std::size_t cell = 0) const;
  double running_coupling_slope(double m, std::size_t cell = 0) const;
  /// sup_{m >= 0} { beta m - running_cost(m) }.
  double running_conjugate(double beta, std::size_t cell = 0) const;
  /// Maximiser of the conjugate, i.e. the inverse coupling at beta_+.
  double running_conjugate_argmax(double beta, std::size_t cell = 0) const;

  double terminal_cost(double m, std::size_t cell = 0) const;
  double terminal_coupling(double m, std::size_t cell = 0) const;
  double terminal_coupling_slope(double m, std::size_t cell = 0) const;
  double terminal_conjugate(double u, std::size_t cell = 0) const;
  double terminal_conjugate_argmax(double u, std::size_t cell = 0) const;

  /// H as a function of |p|; the Hamiltonian is isotropic.
  double hamiltonian_of_norm(double p_norm) const;
  double hamiltonian(std::span<const double> p) const;
  void hamiltonian_gradient(std::span<const double> p,
                            std::span<double> out) const;
  double hamiltonian_at_zero() const { return -spec_.C_H; }

  /// L(alpha) = sup_p { alpha . p - H(p) }.
  double lagrangian_of_norm(double a_norm) const;
  double lagrangian(std::span<const double> alpha) const;
  /// Coefficient k of L(alpha) = k |alpha|^{r'} / r' + C_H.
  double lagrangian_coefficient() const { return lagrangian_coeff_; }
  double r_conjugate() const { return r_prime_; }

  /// m L(-w/m) with the conventions 0 at m = w = 0 and +inf for m = 0,
  /// w != 0 or m < 0.
  double perspective(double m, std::span<const double> w) const;

  bool quadratic_hamiltonian() const { return spec_.r == 2.0; }

 private:
  static double power_cost(double c, double e, double m);
  static double power_conjugate(double c, double e, double beta);

  ModelSpec spec_;
  double r_prime_;
  double lagrangian_coeff_;
};

struct ConjugateOptions {
  int samples = 2001;
  double tolerance = 1e-12;
};

/// Numerical Fenchel conjugate sup_{x in [lo, hi]} { y x - phi(x) } of a
/// convex phi: mixed geometric/uniform sampling, then golden-section
/// refinement of the best bracket. Throws ModelError on non-finite samples.
double fenchel_conjugate_numeric(const std::function<double(double)>& phi,
                                 double y, double lo, double hi,
                                 const ConjugateOptions& options = {});

/// Normalised initial density on slice 0 of a grid.
struct InitialDensity {
  GridSpec grid;
  DensitySpec spec;
  std::vector<double> values;  // one slice, ScalarField layout
  double normalization = 1.0;  // unnormalised grid mass divided out

  /// Continuum density at (x, v) with the same normalisation as `values`.
  double evaluate(std::span<const double> x, std::span<const double> v) const;
};

/// Gaussian velocity mass lying outside [-v_max, v_max]^d.
double velocity_tail_mass(const DensitySpec& spec, const GridSpec& grid);

/// Samples and normalises m0. Throws ConfigError if widths are not positive
/// or the velocity tail outside the box exceeds spec.tail_tol.
InitialDensity build_initial_density(const GridSpec& grid,
                                     const DensitySpec& spec);

struct GrowthBoundReport {
  /// Smallest constant for which each two-sided growth bound holds
  /// analytically (with C_F = C_G = 0 for the pure power law).
  double c_hamiltonian = 0.0;
  double c_running = 0.0;
  double c_terminal = 0.0;
  /// Largest constant actually needed on the sample set.
  double sampled_c_hamiltonian = 0.0;
  double sampled_c_running = 0.0;
  double sampled_c_terminal = 0.0;
  bool hamiltonian_ok = false;
  bool running_ok = false;
  bool terminal_ok = false;
  /// min over samples of H - lower bound (0 when the lower bound is tight).
  double hamiltonian_lower_slack = 0.0;
  int samples = 0;

  bool all_ok() const { return hamiltonian_ok && running_ok && terminal_ok; }
};

/// Verifies the two-sided growth bounds on the Hamiltonian and both
/// couplings on `samples` random points of |p|, m in [0, sample_radius].
GrowthBoundReport check_growth_bounds(const Model& model, int samples,
                                      std::uint64_t seed,
                                      double sample_radius = 10.0);

}  // namespace kmfg
