#include "kmfg/diagnostics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "kmfg/errors.hpp"
#include "kmfg/transport.hpp"

namespace kmfg {

namespace {

using Vec2 = std::array<double, 2>;

std::span<const double> head(const Vec2& v, int d) {
  return {v.data(), static_cast<std::size_t>(d)};
}

double smoothstep(double s) { return s * s * (3.0 - 2.0 * s); }

// min{a^{e-2}, b^{e-2}} with the vanishing-density conventions.
double power_weight(double a, double b, double e) {
  const double tiny = 1e-12;
  const bool za = a <= tiny;
  const bool zb = b <= tiny;
  if (e == 2.0) return 1.0;
  if (za && zb) return 0.0;
  if (e < 2.0) {
    if (za) return std::pow(b, e - 2.0);
    if (zb) return std::pow(a, e - 2.0);
  }
  return std::min(std::pow(std::max(a, 0.0), e - 2.0),
                  std::pow(std::max(b, 0.0), e - 2.0));
}

// Periodic convolution of a slice along x axis `axis` with a kernel given on
// offsets -n..n (kernel[n] at offset 0): out(x) = sum_i k(i) in(x - i dx) dx.
void convolve_x(const GridSpec& g, const Stencil& st, int axis,
                const std::vector<double>& kernel, double spacing,
                const std::vector<double>& in, std::vector<double>& out) {
  const std::size_t nxc = g.cells_x();
  const std::size_t nvc = g.cells_v();
  const int n = static_cast<int>(kernel.size() / 2);
  out.assign(in.size(), 0.0);
  for (std::size_t ix = 0; ix < nxc; ++ix) {
    // Walk back and forward along the axis from ix.
    std::size_t fwd = ix, back = ix;
    for (std::size_t iv = 0; iv < nvc; ++iv) {
      out[ix * nvc + iv] += kernel[n] * in[ix * nvc + iv] * spacing;
    }
    for (int i = 1; i <= n; ++i) {
      back = st.x_minus(axis, back);  // x - i dx pairs with offset +i
      fwd = st.x_plus(axis, fwd);     // x + i dx pairs with offset -i
      const double kp = kernel[n + i] * spacing;
      const double km = kernel[n - i] * spacing;
      for (std::size_t iv = 0; iv < nvc; ++iv) {
        out[ix * nvc + iv] += kp * in[back * nvc + iv] + km * in[fwd * nvc + iv];
      }
    }
  }
}

// Convolution along v axis `axis` with zero extension outside the box.
void convolve_v(const GridSpec& g, const Stencil& st, int axis,
                const std::vector<double>& kernel, double spacing,
                const std::vector<double>& in, std::vector<double>& out) {
  const std::size_t nxc = g.cells_x();
  const std::size_t nvc = g.cells_v();
  const int n = static_cast<int>(kernel.size() / 2);
  out.assign(in.size(), 0.0);
  for (std::size_t iv = 0; iv < nvc; ++iv) {
    std::size_t back = iv, fwd = iv;
    for (std::size_t ix = 0; ix < nxc; ++ix) {
      out[ix * nvc + iv] += kernel[n] * in[ix * nvc + iv] * spacing;
    }
    for (int i = 1; i <= n; ++i) {
      if (back != Stencil::kOutside) back = st.v_minus(axis, back);
      if (fwd != Stencil::kOutside) fwd = st.v_plus(axis, fwd);
      const double kp = kernel[n + i] * spacing;
      const double km = kernel[n - i] * spacing;
      for (std::size_t ix = 0; ix < nxc; ++ix) {
        double acc = 0.0;
        if (back != Stencil::kOutside) acc += kp * in[ix * nvc + back];
        if (fwd != Stencil::kOutside) acc += km * in[ix * nvc + fwd];
        out[ix * nvc + iv] += acc;
      }
    }
  }
}

// Centred periodic derivative along x axis `axis`.
void x_derivative(const GridSpec& g, const Stencil& st, int axis,
                  const std::vector<double>& in, std::vector<double>& out) {
  const std::size_t nxc = g.cells_x();
  const std::size_t nvc = g.cells_v();
  out.resize(in.size());
  for (std::size_t ix = 0; ix < nxc; ++ix) {
    const std::size_t p = st.x_plus(axis, ix);
    const std::size_t m = st.x_minus(axis, ix);
    for (std::size_t iv = 0; iv < nvc; ++iv) {
      out[ix * nvc + iv] = (in[p * nvc + iv] - in[m * nvc + iv]) / (2.0 * g.dx);
    }
  }
}

double l1(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += std::abs(x);
  return s;
}

// One-cell dilation of a node mask in t, x and v.
std::vector<char> dilate(const GridSpec& g, const Stencil& st,
                         const std::vector<char>& mask) {
  const std::size_t nxc = g.cells_x();
  const std::size_t nvc = g.cells_v();
  const std::size_t n = nxc * nvc;
  std::vector<char> out(mask);
  for (int k = 0; k <= g.nt; ++k) {
    for (std::size_t ix = 0; ix < nxc; ++ix) {
      for (std::size_t iv = 0; iv < nvc; ++iv) {
        const std::size_t c = ix * nvc + iv;
        if (!mask[k * n + c]) continue;
        auto mark = [&](int kk, std::size_t cc) {
          if (kk >= 0 && kk <= g.nt) out[kk * n + cc] = 1;
        };
        mark(k - 1, c);
        mark(k + 1, c);
        for (int a = 0; a < g.d; ++a) {
          mark(k, st.x_plus(a, ix) * nvc + iv);
          mark(k, st.x_minus(a, ix) * nvc + iv);
          if (st.v_plus(a, iv) != Stencil::kOutside) {
            mark(k, ix * nvc + st.v_plus(a, iv));
          }
          if (st.v_minus(a, iv) != Stencil::kOutside) {
            mark(k, ix * nvc + st.v_minus(a, iv));
          }
        }
      }
    }
  }
  return out;
}

// Nodes with a stencil neighbour (t, x or v) on the other side of an
// interface; `upper` marks one side.
std::vector<char> straddle_set(const GridSpec& g, const Stencil& st,
                               const std::vector<char>& upper) {
  std::vector<char> lower(upper.size());
  for (std::size_t i = 0; i < upper.size(); ++i) lower[i] = !upper[i];
  const std::vector<char> near_upper = dilate(g, st, upper);
  const std::vector<char> near_lower = dilate(g, st, lower);
  std::vector<char> out(upper.size());
  for (std::size_t i = 0; i < upper.size(); ++i) {
    out[i] = upper[i] ? near_lower[i] : near_upper[i];
  }
  return out;
}

// Per node cell: |du/dt| + sum |v_a Dx_a u| + sum |Dv_a u| with one-sided
// differences at the time and velocity ends, then maximised over the
// one-cell neighbourhood.
std::vector<double> local_lipschitz(const ScalarField& u) {
  const GridSpec& g = u.grid();
  const Stencil st(g);
  const std::size_t nxc = g.cells_x();
  const std::size_t nvc = g.cells_v();
  const std::size_t n = nxc * nvc;
  std::vector<double> lip(u.size(), 0.0);
  for (int k = 0; k <= g.nt; ++k) {
    const int kp = std::min(k + 1, g.nt);
    const int km = std::max(k - 1, 0);
    for (std::size_t ix = 0; ix < nxc; ++ix) {
      for (std::size_t iv = 0; iv < nvc; ++iv) {
        double s = std::abs(u(kp, ix, iv) - u(km, ix, iv)) / ((kp - km) * g.dt);
        for (int a = 0; a < g.d; ++a) {
          s += std::abs(st.velocity(a, iv)) *
               std::abs(u(k, st.x_plus(a, ix), iv) - u(k, st.x_minus(a, ix), iv)) /
               (2.0 * g.dx);
          const std::size_t vp = st.v_plus(a, iv);
          const std::size_t vm = st.v_minus(a, iv);
          const std::size_t hi = vp == Stencil::kOutside ? iv : vp;
          const std::size_t lo = vm == Stencil::kOutside ? iv : vm;
          const int span = (hi != iv) + (lo != iv);
          s += std::abs(u(k, ix, hi) - u(k, ix, lo)) / (span * g.dv);
        }
        lip[k * n + ix * nvc + iv] = s;
      }
    }
  }
  std::vector<double> out(lip);
  for (int k = 0; k <= g.nt; ++k) {
    for (std::size_t ix = 0; ix < nxc; ++ix) {
      for (std::size_t iv = 0; iv < nvc; ++iv) {
        double& o = out[k * n + ix * nvc + iv];
        if (k > 0) o = std::max(o, lip[(k - 1) * n + ix * nvc + iv]);
        if (k < g.nt) o = std::max(o, lip[(k + 1) * n + ix * nvc + iv]);
        for (int a = 0; a < g.d; ++a) {
          o = std::max(o, lip[k * n + st.x_plus(a, ix) * nvc + iv]);
          o = std::max(o, lip[k * n + st.x_minus(a, ix) * nvc + iv]);
          if (st.v_plus(a, iv) != Stencil::kOutside) {
            o = std::max(o, lip[k * n + ix * nvc + st.v_plus(a, iv)]);
          }
          if (st.v_minus(a, iv) != Stencil::kOutside) {
            o = std::max(o, lip[k * n + ix * nvc + st.v_minus(a, iv)]);
          }
        }
      }
    }
  }
  return out;
}

// HJ left-hand side -dt u - v . Dx u + H(Dv u) * indicator on intervals,
// checked against rhs; cells whose nodes touch `excluded` are skipped.
SubsolutionReport check_subsolution(const ScalarField& u,
                                    const std::vector<char>& active,
                                    const ScalarField& rhs,
                                    const std::vector<char>& excluded,
                                    const Model& model) {
  const GridSpec& g = u.grid();
  ContinuityOperator op(g);
  ScalarField lhs;
  op.hj_transport(u, lhs);
  VectorField grad;
  op.velocity_gradient(u, grad);
  const std::vector<double> lip = local_lipschitz(u);
  const double allowance = 10.0 * (g.dx + g.dv + g.dt);
  const std::size_t n = g.cells_per_slice();
  SubsolutionReport rep;
  Vec2 p{};
  for (int k = 0; k < g.nt; ++k) {
    for (std::size_t c = 0; c < n; ++c) {
      ++rep.cells;
      const std::size_t node = static_cast<std::size_t>(k) * n + c;
      if (excluded[node] || excluded[node + n]) {
        ++rep.kink_cells;
        continue;
      }
      double value = lhs.slice(k)[c];
      if (active[node]) {
        for (int a = 0; a < g.d; ++a) p[a] = grad[a].slice(k)[c];
        value += model.hamiltonian(head(p, g.d));
      }
      const double excess = value - rhs.slice(k)[c];
      const double tol = allowance * std::max(lip[node], lip[node + n]) + 1e-10;
      if (excess > tol) {
        ++rep.violations;
        rep.max_excess = std::max(rep.max_excess, excess);
      }
    }
  }
  rep.violation_fraction =
      rep.cells > 0 ? static_cast<double>(rep.violations) / rep.cells : 0.0;
  return rep;
}

}  // namespace

double energy_equality_residual(const FlowState& flow, const ValueState& value,
                                const Model& model) {
  const GridSpec& g = flow.m.grid();
  require_same_grid(g, value.u.grid());
  const std::size_t n = g.cells_per_slice();
  const VectorField grad = velocity_gradient(value.u);
  double lhs = 0.0;
  const auto u0 = value.u.slice(0);
  const auto m0 = flow.m.slice(0);
  const auto mT = flow.m.slice(g.nt);
  for (std::size_t c = 0; c < n; ++c) {
    lhs += m0[c] * u0[c] - model.terminal_coupling(mT[c], c) * mT[c];
  }
  double rhs = 0.0;
  Vec2 p{}, dp{};
  for (int k = 0; k < g.nt; ++k) {
    const auto m = flow.m.slice(k + 1);
    for (std::size_t c = 0; c < n; ++c) {
      for (int a = 0; a < g.d; ++a) p[a] = grad[a].slice(k)[c];
      model.hamiltonian_gradient(head(p, g.d), {dp.data(), static_cast<std::size_t>(g.d)});
      double dot = 0.0;
      for (int a = 0; a < g.d; ++a) dot += dp[a] * p[a];
      rhs += (model.running_coupling(m[c], c) + dot -
              model.hamiltonian(head(p, g.d))) *
             m[c];
    }
  }
  lhs *= g.cell_volume();
  rhs *= g.dt * g.cell_volume();
  return std::abs(lhs - rhs) / (1.0 + std::abs(rhs));
}

double mass_drift(const ScalarField& m) {
  const std::vector<double> mass = mass_per_slice(m);
  double drift = 0.0;
  for (double x : mass) drift = std::max(drift, std::abs(x - mass.front()));
  return drift;
}

FenchelYoungReport fenchel_young_residuals(const FlowState& flow,
                                           const ValueState& value,
                                           const Model& model) {
  const GridSpec& g = flow.m.grid();
  const std::size_t n = g.cells_per_slice();
  FenchelYoungReport rep;
  rep.running = ScalarField(g, TimeLayout::kIntervals);
  rep.terminal.resize(n);
  rep.minimum = kInfeasible;
  double wsum = 0.0, msum = 0.0;
  for (int k = 0; k < g.nt; ++k) {
    const auto m = flow.m.slice(k + 1);
    const auto b = value.beta.slice(k);
    auto r = rep.running.slice(k);
    for (std::size_t c = 0; c < n; ++c) {
      r[c] = model.running_cost(m[c], c) + model.running_conjugate(b[c], c) -
             b[c] * m[c];
      rep.minimum = std::min(rep.minimum, r[c]);
      wsum += r[c] * m[c];
      msum += m[c];
    }
  }
  rep.running_mean = msum > 0.0 ? wsum / msum : 0.0;
  wsum = msum = 0.0;
  const auto mT = flow.m.slice(g.nt);
  for (std::size_t c = 0; c < n; ++c) {
    const double bt = value.beta_T[c];
    rep.terminal[c] = model.terminal_cost(mT[c], c) +
                      model.terminal_conjugate(bt, c) - bt * mT[c];
    rep.minimum = std::min(rep.minimum, rep.terminal[c]);
    wsum += rep.terminal[c] * mT[c];
    msum += mT[c];
  }
  rep.terminal_mean = msum > 0.0 ? wsum / msum : 0.0;
  return rep;
}

CouplingResiduals coupling_residuals(const FlowState& flow,
                                     const ValueState& value,
                                     const Model& model, double mass_floor) {
  const GridSpec& g = flow.m.grid();
  const std::size_t n = g.cells_per_slice();
  const VectorField grad = velocity_gradient(value.u);
  CouplingResiduals out;
  double run = 0.0, flux = 0.0, msum = 0.0;
  Vec2 p{}, dp{};
  for (int k = 0; k < g.nt; ++k) {
    const auto m = flow.m.slice(k + 1);
    const auto b = value.beta.slice(k);
    for (std::size_t c = 0; c < n; ++c) {
      if (!(m[c] > mass_floor)) continue;
      run += std::abs(b[c] - model.running_coupling(m[c], c)) * m[c];
      for (int a = 0; a < g.d; ++a) p[a] = grad[a].slice(k)[c];
      model.hamiltonian_gradient(head(p, g.d), {dp.data(), static_cast<std::size_t>(g.d)});
      for (int a = 0; a < g.d; ++a) {
        flux += std::abs(flow.w[a].slice(k)[c] + m[c] * dp[a]);
      }
      msum += m[c];
    }
  }
  if (msum > 0.0) {
    out.running = run / msum;
    out.flux = flux / msum;
  }
  double term = 0.0, tsum = 0.0;
  const auto mT = flow.m.slice(g.nt);
  for (std::size_t c = 0; c < n; ++c) {
    if (!(mT[c] > mass_floor)) continue;
    term += std::abs(value.beta_T[c] - model.terminal_coupling(mT[c], c)) * mT[c];
    tsum += mT[c];
  }
  if (tsum > 0.0) out.terminal = term / tsum;
  return out;
}

double RegularityProbe::eta(double t) const {
  const double h = 0.5 * t0;
  if (t <= h) return 0.0;
  if (preset == CutoffPreset::kKinetic) {
    if (t >= t0) return t;
    const double s = (t - h) / h;
    return h * (s * s * s - 0.5 * s * s * s * s +
                3.0 * (0.5 * s - std::sin(2.0 * std::numbers::pi * s) /
                                     (4.0 * std::numbers::pi)));
  }
  if (t >= t0) return 1.0;
  return smoothstep((t - h) / h);
}

double RegularityProbe::zeta(double t) const {
  const double h = 0.5 * t0;
  if (t <= h) return 0.0;
  if (preset == CutoffPreset::kKinetic) {
    if (t >= t0) return 1.0;
    const double s = (t - h) / h;
    const double bump = std::sin(std::numbers::pi * s);
    return smoothstep(s) + 3.0 * bump * bump;
  }
  if (t >= t0) return 0.0;
  const double s = (t - h) / h;
  return 6.0 * s * (1.0 - s) / h;
}

double regularity_lhs(const FlowState& flow, const ValueState& value,
                      const RegularityProbe& probe, double delta,
                      const Model& model) {
  const GridSpec& g = flow.m.grid();
  require_same_grid(g, value.u.grid());
  if (!(probe.t0 > 0.0 && probe.t0 < g.T)) {
    throw ConfigError("probe.t0 must lie in (0, T)");
  }
  Vec2 dir{1.0, 0.0};
  if (!probe.direction.empty()) {
    if (static_cast<int>(probe.direction.size()) != g.d) {
      throw ConfigError("probe direction must have d components");
    }
    double nrm = 0.0;
    for (double x : probe.direction) nrm += x * x;
    nrm = std::sqrt(nrm);
    if (!(nrm > 0.0)) throw ConfigError("probe direction must be non-zero");
    for (int a = 0; a < g.d; ++a) dir[a] = probe.direction[a] / nrm;
  }
  if (delta == 0.0) return 0.0;

  auto shifts = [&](double t, double sign, Vec2& xs, Vec2& vs) {
    const double e = probe.eta(t) * delta;
    const double z = probe.zeta(t) * delta;
    if (std::abs(e) > 0.5 + 1e-12 || std::abs(z) > g.v_max + 1e-12) {
      throw ConfigError("regularity shift leaves the interpolation region");
    }
    for (int a = 0; a < g.d; ++a) {
      xs[a] = sign * e * dir[a];
      vs[a] = sign * z * dir[a];
    }
  };

  const std::size_t n = g.cells_per_slice();
  const VectorField grad = velocity_gradient(value.u);
  const double q = model.spec().q;
  const double s = model.spec().s;
  Vec2 xs{}, vs{}, xm{}, vm{};
  double u_term = 0.0;
  for (int k = 0; k < g.nt; ++k) {
    shifts(g.t_node(k), 1.0, xs, vs);
    shifts(g.t_node(k), -1.0, xm, vm);
    const auto m = flow.m.slice(k + 1);
    for (int a = 0; a < g.d; ++a) {
      const auto plus = shift_slice(g, grad[a].slice(k), head(xs, g.d), head(vs, g.d));
      const auto minus = shift_slice(g, grad[a].slice(k), head(xm, g.d), head(vm, g.d));
      for (std::size_t c = 0; c < n; ++c) {
        const double diff = minus[c] - plus[c];
        u_term += diff * diff * m[c];
      }
    }
  }
  double m_term = 0.0;
  for (int j = 1; j <= g.nt; ++j) {
    shifts(g.t_node(j), 1.0, xs, vs);
    const auto m = flow.m.slice(j);
    const auto md = shift_slice(g, m, head(xs, g.d), head(vs, g.d));
    for (std::size_t c = 0; c < n; ++c) {
      const double diff = md[c] - m[c];
      m_term += power_weight(md[c], m[c], q) * diff * diff;
    }
  }
  double t_term = 0.0;
  {
    shifts(g.T, 1.0, xs, vs);
    const auto m = flow.m.slice(g.nt);
    const auto md = shift_slice(g, m, head(xs, g.d), head(vs, g.d));
    for (std::size_t c = 0; c < n; ++c) {
      const double diff = md[c] - m[c];
      t_term += power_weight(md[c], m[c], s) * diff * diff;
    }
  }
  const double vol = g.cell_volume();
  return vol * (g.dt * u_term + 0.5 * g.dt * m_term + 0.5 * t_term);
}

RegularityResult regularity_quotient(const FlowState& flow,
                                     const ValueState& value,
                                     const RegularityProbe& probe,
                                     const Model& model) {
  const GridSpec& g = flow.m.grid();
  RegularityResult out;
  for (double f : probe.ladder) {
    const double delta = f * g.dv;
    const double lhs = regularity_lhs(flow, value, probe, delta, model);
    out.delta.push_back(delta);
    out.lhs.push_back(lhs);
    out.ratio.push_back(delta != 0.0 ? lhs / (delta * delta) : 0.0);
  }
  if (out.delta.size() >= 2) {
    out.slope = log_log_slope(out.delta, out.lhs);
    const auto [lo, hi] = std::minmax_element(out.ratio.begin(), out.ratio.end());
    out.ratio_spread = *lo > 0.0 ? *hi / *lo : kInfeasible;
  }
  return out;
}

std::vector<double> bump_kernel(double width, double spacing) {
  if (!(width > 0.0) || !(spacing > 0.0)) {
    throw std::invalid_argument("bump_kernel: width and spacing must be > 0");
  }
  const int n = static_cast<int>(std::ceil(width / spacing));
  std::vector<double> k(2 * n + 1, 0.0);
  double sum = 0.0;
  for (int i = -n; i <= n; ++i) {
    const double z = i * spacing / width;
    const double v = std::abs(z) < 1.0 ? std::exp(-1.0 / (1.0 - z * z)) : 0.0;
    k[i + n] = v;
    sum += v;
  }
  if (sum == 0.0) {
    k.assign(1, 1.0 / spacing);
    return k;
  }
  for (double& v : k) v /= sum * spacing;
  return k;
}

CommutatorTable commutator_decay(const ScalarField& m,
                                 const std::vector<double>& epsilons,
                                 const std::vector<double>& deltas) {
  const GridSpec& g = m.grid();
  const Stencil st(g);
  const int d = g.d;
  const std::size_t nvc = g.cells_v();
  const std::size_t n = g.cells_per_slice();
  for (double e : epsilons) {
    if (!(e > 0.0) || e >= g.v_max) {
      throw ConfigError("commutator: epsilon must lie in (0, v_max)");
    }
  }
  for (double dx : deltas) {
    if (!(dx > 0.0) || dx >= 0.5) {
      throw ConfigError("commutator: delta_x must lie in (0, 1/2)");
    }
  }
  CommutatorTable table;
  std::vector<double> a, b, tmp, conv, deriv, def, idn, term;
  double largest = 0.0;
  for (double delta_x : deltas) {
    const std::vector<double> psi = bump_kernel(delta_x, g.dx);
    for (double eps : epsilons) {
      const std::vector<double> chi = bump_kernel(eps, g.dv);
      std::vector<double> vchi(chi.size());
      const int half = static_cast<int>(chi.size() / 2);
      for (int i = 0; i < static_cast<int>(chi.size()); ++i) {
        vchi[i] = (i - half) * g.dv * chi[i];
      }
      CommutatorEntry entry;
      entry.epsilon = eps;
      entry.delta_x = delta_x;
      for (int k = 0; k < m.slices(); ++k) {
        // g = psi *_x m
        std::vector<double> gx(m.slice(k).begin(), m.slice(k).end());
        for (int ax = 0; ax < d; ++ax) {
          convolve_x(g, st, ax, psi, g.dx, gx, tmp);
          gx.swap(tmp);
        }
        auto chi_conv = [&](std::vector<double> f, int odd_axis) {
          for (int ax = 0; ax < d; ++ax) {
            convolve_v(g, st, ax, ax == odd_axis ? vchi : chi, g.dv, f, tmp);
            f.swap(tmp);
          }
          return f;
        };
        def.assign(n, 0.0);
        idn.assign(n, 0.0);
        const std::vector<double> cg = chi_conv(gx, -1);
        for (int ax = 0; ax < d; ++ax) {
          x_derivative(g, st, ax, cg, a);          // Dx (chi * g)
          x_derivative(g, st, ax, gx, deriv);      // Dx g
          b.resize(n);
          for (std::size_t c = 0; c < n; ++c) {
            b[c] = st.velocity(ax, c % nvc) * deriv[c];
          }
          conv = chi_conv(b, -1);                  // chi * (v Dx g)
          term = chi_conv(deriv, ax);              // (v chi) * Dx g
          for (std::size_t c = 0; c < n; ++c) {
            def[c] += st.velocity(ax, c % nvc) * a[c] - conv[c];
            idn[c] += term[c];
          }
        }
        const double w = g.dt * g.cell_volume();
        entry.norm_definition += l1(def) * w;
        entry.norm_identity += l1(idn) * w;
        for (std::size_t c = 0; c < n; ++c) {
          entry.max_path_difference =
              std::max(entry.max_path_difference, std::abs(def[c] - idn[c]));
          largest = std::max(largest, std::abs(def[c]));
        }
      }
      table.max_path_difference =
          std::max(table.max_path_difference, entry.max_path_difference);
      table.entries.push_back(entry);
    }
  }
  if (largest > 0.0) table.max_path_difference /= largest;

  // Exponent fits: average the per-row slopes.
  const std::size_t ne = epsilons.size();
  const std::size_t nd = deltas.size();
  auto norm_at = [&](std::size_t id, std::size_t ie) {
    return table.entries[id * ne + ie].norm_definition;
  };
  if (ne >= 2) {
    double s = 0.0;
    for (std::size_t id = 0; id < nd; ++id) {
      std::vector<double> y(ne);
      for (std::size_t ie = 0; ie < ne; ++ie) y[ie] = norm_at(id, ie);
      s += log_log_slope(epsilons, y);
    }
    table.epsilon_slope = s / nd;
  }
  if (nd >= 2) {
    double s = 0.0;
    for (std::size_t ie = 0; ie < ne; ++ie) {
      std::vector<double> y(nd);
      for (std::size_t id = 0; id < nd; ++id) y[id] = norm_at(id, ie);
      s += log_log_slope(deltas, y);
    }
    table.delta_slope = s / ne;
  }
  return table;
}

std::vector<double> velocity_average(const ScalarField& u,
                                     const std::vector<double>& phi) {
  const GridSpec& g = u.grid();
  const std::size_t nxc = g.cells_x();
  const std::size_t nvc = g.cells_v();
  if (phi.size() != nvc) {
    throw std::invalid_argument("velocity_average: phi needs one value per v cell");
  }
  const double dvd = std::pow(g.dv, g.d);
  std::vector<double> rho(static_cast<std::size_t>(u.slices()) * nxc, 0.0);
  for (int k = 0; k < u.slices(); ++k) {
    const auto sl = u.slice(k);
    for (std::size_t ix = 0; ix < nxc; ++ix) {
      double acc = 0.0;
      for (std::size_t iv = 0; iv < nvc; ++iv) acc += sl[ix * nvc + iv] * phi[iv];
      rho[k * nxc + ix] = acc * dvd;
    }
  }
  return rho;
}

double translation_modulus(const GridSpec& g, int slices,
                           const std::vector<double>& rho, double h) {
  const std::size_t nxc = g.cells_x();
  if (rho.size() != static_cast<std::size_t>(slices) * nxc) {
    throw std::invalid_argument("translation_modulus: size mismatch");
  }
  const double s = h / g.dx;
  const double fl = std::floor(s);
  const double frac = s - fl;
  const long base = static_cast<long>(fl);
  const std::size_t stride = g.d == 2 ? static_cast<std::size_t>(g.nx) : 1;
  auto shifted = [&](std::size_t ix, long off) {
    const long i0 = g.x_coord(ix, 0);
    long j = (i0 + off) % g.nx;
    if (j < 0) j += g.nx;
    return ix - static_cast<std::size_t>(i0) * stride +
           static_cast<std::size_t>(j) * stride;
  };
  double acc = 0.0;
  for (int k = 0; k < slices; ++k) {
    const double* r = rho.data() + k * nxc;
    for (std::size_t ix = 0; ix < nxc; ++ix) {
      const double v = (1.0 - frac) * r[shifted(ix, base)] +
                       frac * r[shifted(ix, base + 1)];
      acc += std::abs(v - r[ix]);
    }
  }
  return acc * g.dt * std::pow(g.dx, g.d);
}

SubsolutionReport truncation_check(const ValueState& value, double level,
                                   const Model& model) {
  const ScalarField& u = value.u;
  const GridSpec& g = u.grid();
  const Stencil st(g);
  ScalarField ul(g, TimeLayout::kNodes);
  std::vector<char> active(u.size());
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double x = u.values()[i];
    ul.values()[i] = std::max(x - level, 0.0);
    active[i] = x > level;
  }
  const std::vector<char> kink = straddle_set(g, st, active);
  ScalarField rhs(g, TimeLayout::kIntervals);
  const std::size_t n = g.cells_per_slice();
  for (int k = 0; k < g.nt; ++k) {
    for (std::size_t c = 0; c < n; ++c) {
      if (active[k * n + c]) rhs.slice(k)[c] = value.beta.slice(k)[c];
    }
  }
  SubsolutionReport rep =
      check_subsolution(ul, active, rhs, dilate(g, st, kink), model);
  const auto uT = u.slice(g.nt);
  for (std::size_t c = 0; c < n; ++c) {
    const double lhs = std::max(uT[c] - level, 0.0);
    const double bound = std::max(value.beta_T[c] - level, 0.0);
    if (lhs > bound + 1e-12 * (1.0 + std::abs(bound))) ++rep.terminal_violations;
  }
  return rep;
}

SubsolutionReport maximum_check(const ScalarField& u1, const ScalarField& u2,
                                const ScalarField& beta,
                                const std::vector<double>& beta_T,
                                const Model& model) {
  const GridSpec& g = u1.grid();
  require_same_grid(g, u2.grid());
  require_same_grid(g, beta.grid());
  const Stencil st(g);
  ScalarField u(g, TimeLayout::kNodes);
  for (std::size_t i = 0; i < u.size(); ++i) {
    u.values()[i] = std::max(u1.values()[i], u2.values()[i]);
  }
  std::vector<char> active(u.size(), 1), first(u.size());
  for (std::size_t i = 0; i < u.size(); ++i) {
    first[i] = u1.values()[i] >= u2.values()[i];
  }
  const std::vector<char> kink = straddle_set(g, st, first);
  SubsolutionReport rep =
      check_subsolution(u, active, beta, dilate(g, st, kink), model);
  const auto uT = u.slice(g.nt);
  for (std::size_t c = 0; c < uT.size(); ++c) {
    if (uT[c] > beta_T[c] + 1e-12 * (1.0 + std::abs(beta_T[c]))) {
      ++rep.terminal_violations;
    }
  }
  return rep;
}

UniquenessReport uniqueness_probe(const FlowState& a, const ValueState& ua,
                                  const FlowState& b, const ValueState& ub,
                                  double mass_floor) {
  const GridSpec& g = a.m.grid();
  require_same_grid(g, b.m.grid());
  UniquenessReport rep;
  for (std::size_t i = 0; i < a.m.size(); ++i) {
    rep.density_l1 += std::abs(a.m.values()[i] - b.m.values()[i]);
    if (a.m.values()[i] > mass_floor) {
      rep.value_l1 += std::abs(ua.u.values()[i] - ub.u.values()[i]);
    }
  }
  const double w = g.dt * g.cell_volume();
  rep.density_l1 *= w;
  rep.value_l1 *= w;
  return rep;
}

double log_log_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw std::invalid_argument("log_log_slope: need two or more points");
  }
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  const double n = static_cast<double>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double lx = std::log(x[i]);
    const double ly = std::log(y[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace kmfg
