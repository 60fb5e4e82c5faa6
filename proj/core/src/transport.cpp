#include "kmfg/transport.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>
#include <string>

#include "kmfg/errors.hpp"

namespace kmfg {

namespace {

using Complex = std::complex<double>;

void require_layout(const ScalarField& f, TimeLayout layout, const char* what) {
  if (f.layout() != layout) {
    throw std::invalid_argument(std::string(what) + ": wrong time layout");
  }
}

// In-place DFT along every x axis of a slice of nx^d complex values.
// sign = -1 forward, +1 inverse (unnormalised).
void dft_torus(std::vector<Complex>& data, const GridSpec& g,
               const std::vector<Complex>& roots, int sign) {
  const int nx = g.nx;
  std::vector<Complex> line(nx), out(nx);
  const std::size_t n = data.size();
  for (int axis = 0; axis < g.d; ++axis) {
    const std::size_t stride = axis == g.d - 1 ? 1 : static_cast<std::size_t>(nx);
    for (std::size_t start = 0; start < n; ++start) {
      if (g.x_coord(start, axis) != 0) continue;
      for (int i = 0; i < nx; ++i) line[i] = data[start + i * stride];
      for (int f = 0; f < nx; ++f) {
        Complex acc = 0.0;
        for (int i = 0; i < nx; ++i) {
          const Complex r = roots[(static_cast<long>(f) * i) % nx];
          acc += line[i] * (sign < 0 ? r : std::conj(r));
        }
        out[f] = acc;
      }
      for (int i = 0; i < nx; ++i) data[start + i * stride] = out[i];
    }
  }
}

}  // namespace

ContinuityOperator::ContinuityOperator(const GridSpec& grid)
    : grid_(grid), stencil_(grid) {}

void ContinuityOperator::apply(const ScalarField& m, const VectorField& w,
                               ScalarField& out) const {
  require_same_grid(m.grid(), grid_);
  require_same_grid(w.grid(), grid_);
  require_layout(m, TimeLayout::kNodes, "apply_K(m)");
  if (out.size() == 0) out = ScalarField(grid_, TimeLayout::kIntervals);
  const int d = grid_.d;
  const std::size_t nxc = grid_.cells_x();
  const std::size_t nvc = grid_.cells_v();
  const double inv_dt = 1.0 / grid_.dt;
  const double inv_2dx = 0.5 / grid_.dx;
  const double inv_2dv = 0.5 / grid_.dv;
  const Stencil& st = stencil_;
  for (int k = 0; k < grid_.nt; ++k) {
    const double* m0 = m.slice(k).data();
    const double* m1 = m.slice(k + 1).data();
    double* r = out.slice(k).data();
    for (std::size_t ix = 0; ix < nxc; ++ix) {
      for (std::size_t iv = 0; iv < nvc; ++iv) {
        const std::size_t c = ix * nvc + iv;
        double acc = (m1[c] - m0[c]) * inv_dt;
        for (int a = 0; a < d; ++a) {
          const double dm = m1[st.x_plus(a, ix) * nvc + iv] -
                            m1[st.x_minus(a, ix) * nvc + iv];
          acc += st.velocity(a, iv) * dm * inv_2dx;
        }
        for (int a = 0; a < d; ++a) {
          const double* wa = w[a].slice(k).data();
          const std::size_t vp = st.v_plus(a, iv);
          const std::size_t vm = st.v_minus(a, iv);
          const double hi = vp == Stencil::kOutside ? 0.0 : wa[ix * nvc + vp];
          const double lo = vm == Stencil::kOutside ? 0.0 : wa[ix * nvc + vm];
          acc += (hi - lo) * inv_2dv;
        }
        r[c] = acc;
      }
    }
  }
}

void ContinuityOperator::adjoint(const ScalarField& y, ScalarField& out_m,
                                 VectorField& out_w) const {
  require_same_grid(y.grid(), grid_);
  require_layout(y, TimeLayout::kIntervals, "apply_K_adjoint(y)");
  if (out_m.size() == 0) out_m = ScalarField(grid_, TimeLayout::kNodes);
  if (out_w.components.empty()) out_w = VectorField(grid_);
  const int d = grid_.d;
  const int nt = grid_.nt;
  const std::size_t nxc = grid_.cells_x();
  const std::size_t nvc = grid_.cells_v();
  const double inv_dt = 1.0 / grid_.dt;
  const double inv_2dx = 0.5 / grid_.dx;
  const double inv_2dv = 0.5 / grid_.dv;
  const Stencil& st = stencil_;

  for (int j = 0; j <= nt; ++j) {
    double* om = out_m.slice(j).data();
    const double* prev = j >= 1 ? y.slice(j - 1).data() : nullptr;
    const double* curr = j < nt ? y.slice(j).data() : nullptr;
    for (std::size_t ix = 0; ix < nxc; ++ix) {
      for (std::size_t iv = 0; iv < nvc; ++iv) {
        const std::size_t c = ix * nvc + iv;
        double acc = 0.0;
        if (prev != nullptr) {
          acc += prev[c] * inv_dt;
          for (int a = 0; a < d; ++a) {
            const double dy = prev[st.x_plus(a, ix) * nvc + iv] -
                              prev[st.x_minus(a, ix) * nvc + iv];
            acc -= st.velocity(a, iv) * dy * inv_2dx;
          }
        }
        if (curr != nullptr) acc -= curr[c] * inv_dt;
        om[c] = acc;
      }
    }
  }
  for (int k = 0; k < nt; ++k) {
    const double* yk = y.slice(k).data();
    for (int a = 0; a < d; ++a) {
      double* ow = out_w[a].slice(k).data();
      for (std::size_t ix = 0; ix < nxc; ++ix) {
        for (std::size_t iv = 0; iv < nvc; ++iv) {
          const std::size_t vp = st.v_plus(a, iv);
          const std::size_t vm = st.v_minus(a, iv);
          const double hi = vp == Stencil::kOutside ? 0.0 : yk[ix * nvc + vp];
          const double lo = vm == Stencil::kOutside ? 0.0 : yk[ix * nvc + vm];
          ow[ix * nvc + iv] = -(hi - lo) * inv_2dv;
        }
      }
    }
  }
}

void ContinuityOperator::hj_transport(const ScalarField& u,
                                      ScalarField& out) const {
  require_same_grid(u.grid(), grid_);
  require_layout(u, TimeLayout::kNodes, "hj_transport(u)");
  if (out.size() == 0) out = ScalarField(grid_, TimeLayout::kIntervals);
  const std::size_t nxc = grid_.cells_x();
  const std::size_t nvc = grid_.cells_v();
  const double inv_dt = 1.0 / grid_.dt;
  const double inv_2dx = 0.5 / grid_.dx;
  const Stencil& st = stencil_;
  for (int k = 0; k < grid_.nt; ++k) {
    const double* u0 = u.slice(k).data();
    const double* u1 = u.slice(k + 1).data();
    double* o = out.slice(k).data();
    for (std::size_t ix = 0; ix < nxc; ++ix) {
      for (std::size_t iv = 0; iv < nvc; ++iv) {
        const std::size_t c = ix * nvc + iv;
        double acc = -(u1[c] - u0[c]) * inv_dt;
        for (int a = 0; a < grid_.d; ++a) {
          const double du = u0[st.x_plus(a, ix) * nvc + iv] -
                            u0[st.x_minus(a, ix) * nvc + iv];
          acc -= st.velocity(a, iv) * du * inv_2dx;
        }
        o[c] = acc;
      }
    }
  }
}

void ContinuityOperator::velocity_gradient(const ScalarField& u,
                                           VectorField& out) const {
  require_same_grid(u.grid(), grid_);
  require_layout(u, TimeLayout::kNodes, "velocity_gradient(u)");
  if (out.components.empty()) out = VectorField(grid_);
  const std::size_t nxc = grid_.cells_x();
  const std::size_t nvc = grid_.cells_v();
  const double inv_2dv = 0.5 / grid_.dv;
  const Stencil& st = stencil_;
  for (int k = 0; k < grid_.nt; ++k) {
    const double* uk = u.slice(k).data();
    for (int a = 0; a < grid_.d; ++a) {
      double* o = out[a].slice(k).data();
      for (std::size_t ix = 0; ix < nxc; ++ix) {
        for (std::size_t iv = 0; iv < nvc; ++iv) {
          if (st.v_boundary(a, iv)) {
            o[ix * nvc + iv] = 0.0;
            continue;
          }
          o[ix * nvc + iv] = (uk[ix * nvc + st.v_plus(a, iv)] -
                              uk[ix * nvc + st.v_minus(a, iv)]) *
                             inv_2dv;
        }
      }
    }
  }
}

ScalarField apply_K(const ScalarField& m, const VectorField& w) {
  ContinuityOperator op(m.grid());
  ScalarField out;
  op.apply(m, w, out);
  return out;
}

std::pair<ScalarField, VectorField> apply_K_adjoint(const ScalarField& y) {
  ContinuityOperator op(y.grid());
  ScalarField om;
  VectorField ow;
  op.adjoint(y, om, ow);
  return {std::move(om), std::move(ow)};
}

ScalarField hj_transport(const ScalarField& u) {
  ContinuityOperator op(u.grid());
  ScalarField out;
  op.hj_transport(u, out);
  return out;
}

VectorField velocity_gradient(const ScalarField& u) {
  ContinuityOperator op(u.grid());
  VectorField out;
  op.velocity_gradient(u, out);
  return out;
}

double pair(const ScalarField& a, const ScalarField& b) {
  require_same_grid(a.grid(), b.grid());
  if (a.size() != b.size()) throw GridMismatch("pair: layout mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a.values()[i] * b.values()[i];
  const GridSpec& g = a.grid();
  return s * g.dt * g.cell_volume();
}

double pair(const VectorField& a, const VectorField& b) {
  double s = 0.0;
  for (int c = 0; c < a.dims(); ++c) s += pair(a[c], b[c]);
  return s;
}

std::vector<double> mass_per_slice(const ScalarField& m) {
  std::vector<double> out(m.slices());
  for (int k = 0; k < m.slices(); ++k) out[k] = integrate_slice(m, k);
  return out;
}

std::vector<double> first_v_moment(const ScalarField& m) {
  const GridSpec& g = m.grid();
  const std::size_t nxc = g.cells_x();
  const std::size_t nvc = g.cells_v();
  std::vector<double> speed(nvc);
  for (std::size_t iv = 0; iv < nvc; ++iv) {
    double s = 0.0;
    for (int a = 0; a < g.d; ++a) s += g.velocity(iv, a) * g.velocity(iv, a);
    speed[iv] = std::sqrt(s);
  }
  std::vector<double> out(m.slices());
  for (int k = 0; k < m.slices(); ++k) {
    const auto sl = m.slice(k);
    double acc = 0.0;
    for (std::size_t ix = 0; ix < nxc; ++ix) {
      for (std::size_t iv = 0; iv < nvc; ++iv) acc += speed[iv] * sl[ix * nvc + iv];
    }
    out[k] = acc * g.cell_volume();
  }
  return out;
}

ScalarField free_streaming(const InitialDensity& m0) {
  const GridSpec& g = m0.grid;
  const std::size_t nxc = g.cells_x();
  const std::size_t nvc = g.cells_v();
  ScalarField m(g, TimeLayout::kNodes);
  std::copy(m0.values.begin(), m0.values.end(), m.slice(0).begin());

  std::vector<Complex> roots(g.nx);
  for (int i = 0; i < g.nx; ++i) {
    roots[i] = std::polar(1.0, -2.0 * std::numbers::pi * i / g.nx);
  }
  std::vector<double> sin_theta(g.nx);
  for (int n = 0; n < g.nx; ++n) {
    sin_theta[n] = std::sin(2.0 * std::numbers::pi * n / g.nx);
  }

  std::vector<Complex> spec(nxc), work(nxc), symbol(nxc);
  for (std::size_t iv = 0; iv < nvc; ++iv) {
    for (std::size_t ix = 0; ix < nxc; ++ix) {
      double im = 0.0;
      for (int a = 0; a < g.d; ++a) {
        im += g.velocity(iv, a) * sin_theta[g.x_coord(ix, a)] / g.dx;
      }
      symbol[ix] = Complex(1.0 / g.dt, im);
      if (std::abs(symbol[ix]) * g.dt < 1e-12) {
        throw NumericalError("free_streaming: singular implicit step");
      }
    }
    for (std::size_t ix = 0; ix < nxc; ++ix) spec[ix] = m0.values[ix * nvc + iv];
    dft_torus(spec, g, roots, -1);
    const double norm = 1.0 / static_cast<double>(nxc);
    for (int k = 1; k <= g.nt; ++k) {
      for (std::size_t ix = 0; ix < nxc; ++ix) spec[ix] /= symbol[ix] * g.dt;
      work = spec;
      dft_torus(work, g, roots, +1);
      auto sl = m.slice(k);
      for (std::size_t ix = 0; ix < nxc; ++ix) {
        sl[ix * nvc + iv] = work[ix].real() * norm;
      }
    }
  }
  return m;
}

ScalarField free_streaming_continuum(const InitialDensity& m0) {
  const GridSpec& g = m0.grid;
  const std::size_t nxc = g.cells_x();
  const std::size_t nvc = g.cells_v();
  ScalarField m(g, TimeLayout::kNodes);
  std::array<double, 2> x{}, v{};
  const std::size_t d = static_cast<std::size_t>(g.d);
  for (int k = 0; k <= g.nt; ++k) {
    const double t = g.t_node(k);
    for (std::size_t ix = 0; ix < nxc; ++ix) {
      for (std::size_t iv = 0; iv < nvc; ++iv) {
        for (int a = 0; a < g.d; ++a) {
          v[a] = g.velocity(iv, a);
          x[a] = g.x_node(g.x_coord(ix, a)) - v[a] * t;
        }
        m(k, ix, iv) = m0.evaluate({x.data(), d}, {v.data(), d});
      }
    }
  }
  return m;
}

std::vector<char> reachable_mask(const InitialDensity& m0) {
  const GridSpec& g = m0.grid;
  const std::size_t n = g.cells_per_slice();
  std::vector<char> mask(static_cast<std::size_t>(g.nt + 1) * n, 1);
  for (std::size_t c = 0; c < n; ++c) mask[c] = m0.values[c] > 1e-14 ? 1 : 0;
  return mask;
}

}  // namespace kmfg
