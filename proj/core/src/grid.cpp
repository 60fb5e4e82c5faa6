#include "kmfg/grid.hpp"

#include <cmath>
#include <string>

#include "kmfg/errors.hpp"

namespace kmfg {

namespace {

std::size_t ipow(int base, int exp) {
  std::size_t r = 1;
  for (int i = 0; i < exp; ++i) r *= static_cast<std::size_t>(base);
  return r;
}

// Snaps interpolation fractions that are round-off away from a lattice point.
double snap_fraction(double frac) {
  if (frac < 1e-12) return 0.0;
  if (frac > 1.0 - 1e-12) return 1.0;
  return frac;
}

}  // namespace

std::size_t GridSpec::cells_x() const { return ipow(nx, d); }
std::size_t GridSpec::cells_v() const { return ipow(nv, d); }

double GridSpec::cell_volume() const {
  return std::pow(dx, d) * std::pow(dv, d);
}

int GridSpec::x_coord(std::size_t ix, int axis) const {
  return static_cast<int>((ix / ipow(nx, d - 1 - axis)) % nx);
}

int GridSpec::v_coord(std::size_t iv, int axis) const {
  return static_cast<int>((iv / ipow(nv, d - 1 - axis)) % nv);
}

GridSpec build_grid(int d, int nx, int nv, int nt, double T, double v_max) {
  if (d != 1 && d != 2) {
    throw ConfigError("grid.d must be 1 or 2, got " + std::to_string(d));
  }
  if (nx < 2) throw ConfigError("grid.nx must be >= 2");
  if (nv < 2) throw ConfigError("grid.nv must be >= 2");
  if (nt < 2) throw ConfigError("grid.nt must be >= 2");
  if (!(T > 0.0) || !std::isfinite(T)) throw ConfigError("grid.T must be > 0");
  if (!(v_max > 0.0) || !std::isfinite(v_max)) {
    throw ConfigError("grid.v_max must be > 0");
  }
  GridSpec g;
  g.d = d;
  g.nx = nx;
  g.nv = nv;
  g.nt = nt;
  g.T = T;
  g.v_max = v_max;
  g.dx = 1.0 / nx;
  g.dv = 2.0 * v_max / nv;
  g.dt = T / nt;
  return g;
}

ScalarField::ScalarField(const GridSpec& grid, TimeLayout layout, double fill)
    : grid_(grid), layout_(layout) {
  values_.assign(static_cast<std::size_t>(slices()) * grid.cells_per_slice(),
                 fill);
}

int ScalarField::slices() const {
  return layout_ == TimeLayout::kNodes ? grid_.nt + 1 : grid_.nt;
}

std::span<double> ScalarField::slice(int k) {
  const std::size_t n = grid_.cells_per_slice();
  return {values_.data() + static_cast<std::size_t>(k) * n, n};
}

std::span<const double> ScalarField::slice(int k) const {
  const std::size_t n = grid_.cells_per_slice();
  return {values_.data() + static_cast<std::size_t>(k) * n, n};
}

bool ScalarField::all_finite() const {
  for (double v : values_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

VectorField::VectorField(const GridSpec& grid, double fill) {
  components.reserve(grid.d);
  for (int a = 0; a < grid.d; ++a) {
    components.emplace_back(grid, TimeLayout::kIntervals, fill);
  }
}

void VectorField::apply_zero_flux() {
  const GridSpec& g = grid();
  const std::size_t nxc = g.cells_x();
  const std::size_t nvc = g.cells_v();
  for (int a = 0; a < dims(); ++a) {
    ScalarField& c = components[a];
    for (int k = 0; k < c.slices(); ++k) {
      for (std::size_t ix = 0; ix < nxc; ++ix) {
        for (std::size_t iv = 0; iv < nvc; ++iv) {
          if (g.on_v_boundary(iv, a)) c(k, ix, iv) = 0.0;
        }
      }
    }
  }
}

Stencil::Stencil(const GridSpec& g) {
  const std::size_t nxc = g.cells_x();
  const std::size_t nvc = g.cells_v();
  for (int a = 0; a < g.d; ++a) {
    const std::size_t sx = ipow(g.nx, g.d - 1 - a);
    const std::size_t sv = ipow(g.nv, g.d - 1 - a);
    x_plus_[a].resize(nxc);
    x_minus_[a].resize(nxc);
    for (std::size_t ix = 0; ix < nxc; ++ix) {
      const int i = g.x_coord(ix, a);
      x_plus_[a][ix] = (i == g.nx - 1) ? ix - (g.nx - 1) * sx : ix + sx;
      x_minus_[a][ix] = (i == 0) ? ix + (g.nx - 1) * sx : ix - sx;
    }
    v_plus_[a].resize(nvc);
    v_minus_[a].resize(nvc);
    vel_[a].resize(nvc);
    v_boundary_[a].resize(nvc);
    for (std::size_t iv = 0; iv < nvc; ++iv) {
      const int j = g.v_coord(iv, a);
      v_plus_[a][iv] = (j == g.nv - 1) ? kOutside : iv + sv;
      v_minus_[a][iv] = (j == 0) ? kOutside : iv - sv;
      vel_[a][iv] = g.v_node(j);
      v_boundary_[a][iv] = (j == 0 || j == g.nv - 1) ? 1 : 0;
    }
  }
}

void require_same_grid(const GridSpec& a, const GridSpec& b) {
  if (!(a == b)) throw GridMismatch("fields live on different grids");
}

double integrate_slice(const ScalarField& f, int k) {
  if (k < 0 || k >= f.slices()) {
    throw std::out_of_range("integrate_slice: time index " +
                            std::to_string(k) + " out of range");
  }
  double sum = 0.0;
  for (double v : f.slice(k)) sum += v;
  return sum * f.grid().cell_volume();
}

std::vector<double> shift_slice(const GridSpec& g,
                                std::span<const double> slice,
                                std::span<const double> x_shift,
                                std::span<const double> v_shift) {
  const int d = g.d;
  const int dims = 2 * d;
  const std::size_t nxc = g.cells_x();
  const std::size_t nvc = g.cells_v();
  std::vector<double> out(slice.size(), 0.0);

  // Per-axis base offset and fraction: position i + s_a maps to
  // floor(i + s_a) plus a fractional weight, identical for every cell.
  std::array<long, 4> base{};
  std::array<double, 4> frac{};
  for (int a = 0; a < d; ++a) {
    const double sx = x_shift[a] / g.dx;
    const double fx = std::floor(sx);
    base[a] = static_cast<long>(fx);
    frac[a] = snap_fraction(sx - fx);
    const double sv = v_shift[a] / g.dv;
    const double fv = std::floor(sv);
    base[d + a] = static_cast<long>(fv);
    frac[d + a] = snap_fraction(sv - fv);
  }

  std::array<int, 4> coord{};
  for (std::size_t ix = 0; ix < nxc; ++ix) {
    for (int a = 0; a < d; ++a) coord[a] = g.x_coord(ix, a);
    for (std::size_t iv = 0; iv < nvc; ++iv) {
      for (int a = 0; a < d; ++a) coord[d + a] = g.v_coord(iv, a);
      double acc = 0.0;
      for (int corner = 0; corner < (1 << dims); ++corner) {
        double w = 1.0;
        std::size_t jx = 0;
        std::size_t jv = 0;
        bool outside = false;
        for (int a = 0; a < dims; ++a) {
          const int bit = (corner >> a) & 1;
          const double wa = bit ? frac[a] : 1.0 - frac[a];
          if (wa == 0.0) {
            w = 0.0;
            break;
          }
          w *= wa;
          long c = coord[a] + base[a] + bit;
          if (a < d) {
            c %= g.nx;
            if (c < 0) c += g.nx;
            jx = jx * g.nx + static_cast<std::size_t>(c);
          } else {
            if (c < 0 || c >= g.nv) {
              outside = true;
              break;
            }
            jv = jv * g.nv + static_cast<std::size_t>(c);
          }
        }
        if (w == 0.0 || outside) continue;
        acc += w * slice[jx * nvc + jv];
      }
      out[ix * nvc + iv] = acc;
    }
  }
  return out;
}

std::vector<double> shift_field(const ScalarField& f, int k,
                                std::span<const double> delta, double a_x,
                                double a_v) {
  const GridSpec& g = f.grid();
  if (static_cast<int>(delta.size()) != g.d) {
    throw std::invalid_argument("shift_field: delta must have d components");
  }
  std::array<double, 2> xs{}, vs{};
  for (int a = 0; a < g.d; ++a) {
    xs[a] = a_x * delta[a];
    vs[a] = a_v * delta[a];
  }
  return shift_slice(g, f.slice(k), std::span<const double>(xs.data(), g.d),
                     std::span<const double>(vs.data(), g.d));
}

}  // namespace kmfg
