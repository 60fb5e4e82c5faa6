#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

namespace kmfg {

/// Phase-space lattice over [0,T] x T^d x [-v_max, v_max]^d.
///
/// Positions live on the unit torus with nx cells per axis (periodic index
/// arithmetic). Velocities are cell-centred nodes v_j = -v_max + (j+1/2) dv,
/// never wrapped. Time has nt steps: nodes k = 0..nt and intervals
/// k = 0..nt-1.
struct GridSpec {
  int d = 1;
  int nx = 0;
  int nv = 0;
  int nt = 0;
  double T = 0.0;
  double v_max = 0.0;
  double dx = 0.0;
  double dv = 0.0;
  double dt = 0.0;

  std::size_t cells_x() const;  // nx^d
  std::size_t cells_v() const;  // nv^d
  std::size_t cells_per_slice() const { return cells_x() * cells_v(); }
  double cell_volume() const;   // dx^d dv^d

  double x_node(int i) const { return (i + 0.5) * dx; }
  double v_node(int j) const { return -v_max + (j + 0.5) * dv; }
  double t_node(int k) const { return k * dt; }

  /// Per-axis coordinate of a flat position / velocity index.
  int x_coord(std::size_t ix, int axis) const;
  int v_coord(std::size_t iv, int axis) const;

  /// Velocity component `axis` of flat velocity index iv.
  double velocity(std::size_t iv, int axis) const {
    return v_node(v_coord(iv, axis));
  }

  /// True when iv sits on the first or last velocity layer of `axis`.
  bool on_v_boundary(std::size_t iv, int axis) const {
    const int j = v_coord(iv, axis);
    return j == 0 || j == nv - 1;
  }

  friend bool operator==(const GridSpec&, const GridSpec&) = default;
};

/// Validates and derives spacings. Throws ConfigError.
GridSpec build_grid(int d, int nx, int nv, int nt, double T, double v_max);

enum class TimeLayout { kNodes, kIntervals };

/// Real values per (time slice, x cell, v cell), time-major, then
/// lexicographic in the flat x index, then the flat v index.
class ScalarField {
 public:
  ScalarField() = default;
  ScalarField(const GridSpec& grid, TimeLayout layout, double fill = 0.0);

  const GridSpec& grid() const { return grid_; }
  TimeLayout layout() const { return layout_; }
  int slices() const;

  std::size_t size() const { return values_.size(); }
  std::size_t index(int k, std::size_t ix, std::size_t iv) const {
    return (static_cast<std::size_t>(k) * grid_.cells_x() + ix) *
               grid_.cells_v() +
           iv;
  }

  double& operator()(int k, std::size_t ix, std::size_t iv) {
    return values_[index(k, ix, iv)];
  }
  double operator()(int k, std::size_t ix, std::size_t iv) const {
    return values_[index(k, ix, iv)];
  }

  std::span<double> slice(int k);
  std::span<const double> slice(int k) const;

  std::vector<double>& values() { return values_; }
  const std::vector<double>& values() const { return values_; }

  bool all_finite() const;

 private:
  GridSpec grid_;
  TimeLayout layout_ = TimeLayout::kNodes;
  std::vector<double> values_;
};

/// d interval-in-time components sharing one grid.
struct VectorField {
  std::vector<ScalarField> components;

  VectorField() = default;
  explicit VectorField(const GridSpec& grid, double fill = 0.0);

  const GridSpec& grid() const { return components.front().grid(); }
  int dims() const { return static_cast<int>(components.size()); }
  ScalarField& operator[](int a) { return components[a]; }
  const ScalarField& operator[](int a) const { return components[a]; }

  /// Zeroes component a on the outermost velocity layers of axis a.
  void apply_zero_flux();
};

/// Neighbour tables for the periodic x stencil and the bounded v stencil.
/// Velocity neighbours outside the box are reported as kOutside.
class Stencil {
 public:
  static constexpr std::size_t kOutside = static_cast<std::size_t>(-1);

  explicit Stencil(const GridSpec& grid);

  std::size_t x_plus(int axis, std::size_t ix) const {
    return x_plus_[axis][ix];
  }
  std::size_t x_minus(int axis, std::size_t ix) const {
    return x_minus_[axis][ix];
  }
  std::size_t v_plus(int axis, std::size_t iv) const {
    return v_plus_[axis][iv];
  }
  std::size_t v_minus(int axis, std::size_t iv) const {
    return v_minus_[axis][iv];
  }
  double velocity(int axis, std::size_t iv) const { return vel_[axis][iv]; }
  bool v_boundary(int axis, std::size_t iv) const {
    return v_boundary_[axis][iv] != 0;
  }

 private:
  std::array<std::vector<std::size_t>, 2> x_plus_, x_minus_;
  std::array<std::vector<std::size_t>, 2> v_plus_, v_minus_;
  std::array<std::vector<double>, 2> vel_;
  std::array<std::vector<char>, 2> v_boundary_;
};

void require_same_grid(const GridSpec& a, const GridSpec& b);

/// Sum over cells of slice k times dx^d dv^d.
double integrate_slice(const ScalarField& f, int k);

/// Values f(k, x + a_x delta, v + a_v delta) on every cell of slice k, by
/// multilinear interpolation. x wraps; velocities outside the box read 0.
std::vector<double> shift_field(const ScalarField& f, int k,
                                std::span<const double> delta, double a_x,
                                double a_v);

/// Same as shift_field on a raw slice laid out like a ScalarField slice.
std::vector<double> shift_slice(const GridSpec& grid,
                                std::span<const double> slice,
                                std::span<const double> x_shift,
                                std::span<const double> v_shift);

}  // namespace kmfg
