#include "kmfg/solver.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>
#include <sstream>

#include "kmfg/diagnostics.hpp"
#include "kmfg/errors.hpp"

namespace kmfg {

namespace {

double sum_squares(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return s;
}

double conjugate_or_slack(double value, double arg) {
  if (std::isinf(value) && arg <= kConjugateSlack) return 0.0;
  return value;
}

// argmin_a dt F*((S - a)/dt) + G*(a) for one cell.
double terminal_split(const Model& model, double S, double dt,
                      std::size_t cell) {
  if (S <= 0.0) return 0.0;
  const double c_f = model.running_coefficient(cell);
  const double c_g = model.terminal_coefficient(cell);
  if (c_g == 0.0) return 0.0;
  if (c_f == 0.0) return S;
  const ModelSpec& spec = model.spec();
  if (spec.q == 2.0 && spec.s == 2.0) return c_g * S / (c_g + dt * c_f);
  double lo = 0.0, hi = S;
  for (int i = 0; i < 200 && hi - lo > 1e-16 * S; ++i) {
    const double a = 0.5 * (lo + hi);
    const double h = model.terminal_conjugate_argmax(a, cell) -
                     model.running_conjugate_argmax((S - a) / dt, cell);
    if (h > 0.0) {
      hi = a;
    } else {
      lo = a;
    }
  }
  return 0.5 * (lo + hi);
}

void hamiltonian_of_gradient(const Model& model, const VectorField& grad,
                             int k, std::vector<double>& out) {
  const GridSpec& g = grad.grid();
  const std::size_t n = g.cells_per_slice();
  out.resize(n);
  std::array<double, 2> p{};
  for (std::size_t c = 0; c < n; ++c) {
    for (int a = 0; a < g.d; ++a) p[a] = grad[a].slice(k)[c];
    out[c] = model.hamiltonian({p.data(), static_cast<std::size_t>(g.d)});
  }
}

}  // namespace

double estimate_op_norm(const GridSpec& grid, const OpNormOptions& options) {
  ContinuityOperator op(grid);
  std::mt19937_64 rng(options.seed);
  std::normal_distribution<double> normal;
  ScalarField m(grid, TimeLayout::kNodes);
  VectorField w(grid);
  for (double& x : m.values()) x = normal(rng);
  for (auto& c : w.components) {
    for (double& x : c.values()) x = normal(rng);
  }
  ScalarField r, am;
  VectorField aw;
  double lambda = 0.0;
  for (int it = 0; it < options.max_iterations; ++it) {
    double norm2 = sum_squares(m.values());
    for (const auto& c : w.components) norm2 += sum_squares(c.values());
    const double inv = 1.0 / std::sqrt(norm2);
    for (double& x : m.values()) x *= inv;
    for (auto& c : w.components) {
      for (double& x : c.values()) x *= inv;
    }
    op.apply(m, w, r);
    const double next = sum_squares(r.values());
    op.adjoint(r, am, aw);
    m = am;
    w = aw;
    if (it > 0 && std::abs(next - lambda) <= options.tolerance * next) {
      return std::sqrt(next) * 1.01;
    }
    lambda = next;
  }
  throw NumericalError("estimate_op_norm: power iteration did not stagnate");
}

ScalarField complete_value(const ScalarField& multipliers, const Model& model) {
  if (multipliers.layout() != TimeLayout::kIntervals) {
    throw std::invalid_argument("complete_value: multipliers live on intervals");
  }
  const GridSpec& g = multipliers.grid();
  ScalarField u(g, TimeLayout::kNodes);
  std::copy(multipliers.values().begin(), multipliers.values().end(),
            u.values().begin());
  ContinuityOperator op(g);
  const Stencil& st = op.stencil();
  const std::size_t nxc = g.cells_x();
  const std::size_t nvc = g.cells_v();
  const auto last = u.slice(g.nt - 1);
  auto terminal = u.slice(g.nt);
  std::array<double, 2> p{};
  const std::span<const double> pspan(p.data(), static_cast<std::size_t>(g.d));
  for (std::size_t ix = 0; ix < nxc; ++ix) {
    for (std::size_t iv = 0; iv < nvc; ++iv) {
      const std::size_t c = ix * nvc + iv;
      double transport = 0.0;
      for (int a = 0; a < g.d; ++a) {
        transport -= st.velocity(a, iv) *
                     (last[st.x_plus(a, ix) * nvc + iv] -
                      last[st.x_minus(a, ix) * nvc + iv]) /
                     (2.0 * g.dx);
        p[a] = st.v_boundary(a, iv)
                   ? 0.0
                   : (last[ix * nvc + st.v_plus(a, iv)] -
                      last[ix * nvc + st.v_minus(a, iv)]) /
                         (2.0 * g.dv);
      }
      const double S =
          last[c] + g.dt * (transport + model.hamiltonian(pspan));
      terminal[c] = terminal_split(model, S, g.dt, c);
    }
  }
  return u;
}

ValueState recover_value_state(const ScalarField& u, const Model& model) {
  ContinuityOperator op(u.grid());
  ValueState out;
  out.u = u;
  op.hj_transport(u, out.beta);
  VectorField grad;
  op.velocity_gradient(u, grad);
  std::vector<double> h;
  for (int k = 0; k < u.grid().nt; ++k) {
    hamiltonian_of_gradient(model, grad, k, h);
    auto b = out.beta.slice(k);
    for (std::size_t c = 0; c < b.size(); ++c) b[c] += h[c];
  }
  const auto t = u.slice(u.grid().nt);
  out.beta_T.assign(t.begin(), t.end());
  return out;
}

double evaluate_B(const FlowState& flow, const Model& model) {
  const GridSpec& g = flow.m.grid();
  require_same_grid(g, flow.w.grid());
  const std::size_t nvc = g.cells_v();
  const std::size_t n = g.cells_per_slice();
  std::array<double, 2> w{};
  const std::span<const double> wspan(w.data(), static_cast<std::size_t>(g.d));
  double running = 0.0;
  for (int j = 1; j <= g.nt; ++j) {
    const auto m = flow.m.slice(j);
    for (std::size_t c = 0; c < n; ++c) {
      for (int a = 0; a < g.d; ++a) {
        w[a] = flow.w[a].slice(j - 1)[c];
        if (w[a] != 0.0 && g.on_v_boundary(c % nvc, a)) return kInfeasible;
      }
      running += model.running_cost(m[c], c) + model.perspective(m[c], wspan);
    }
  }
  double terminal = 0.0;
  const auto mT = flow.m.slice(g.nt);
  for (std::size_t c = 0; c < n; ++c) terminal += model.terminal_cost(mT[c], c);
  const double total = (running * g.dt + terminal) * g.cell_volume();
  return std::isnan(total) ? kInfeasible : total;
}

double evaluate_A(const ValueState& value, const FlowState& m0_flow,
                  const Model& model) {
  const GridSpec& g = value.u.grid();
  require_same_grid(g, m0_flow.m.grid());
  const std::size_t n = g.cells_per_slice();
  double running = 0.0;
  for (int k = 0; k < g.nt; ++k) {
    const auto b = value.beta.slice(k);
    for (std::size_t c = 0; c < n; ++c) {
      running += conjugate_or_slack(model.running_conjugate(b[c], c), b[c]);
    }
  }
  double trace = 0.0;
  const auto u0 = value.u.slice(0);
  const auto m0 = m0_flow.m.slice(0);
  for (std::size_t c = 0; c < n; ++c) trace += u0[c] * m0[c];
  double terminal = 0.0;
  for (std::size_t c = 0; c < n; ++c) {
    const double bt = value.beta_T[c];
    terminal += conjugate_or_slack(model.terminal_conjugate(bt, c), bt);
  }
  return (running * g.dt - trace + terminal) * g.cell_volume();
}

double duality_gap(double a_val, double b_val) {
  return (a_val + b_val) / std::max(1.0, std::abs(b_val));
}

double feasibility(const FlowState& flow) {
  const ScalarField r = apply_K(flow.m, flow.w);
  double s = 0.0;
  for (double x : r.values()) s += std::abs(x);
  const GridSpec& g = flow.m.grid();
  return s * g.dt * g.cell_volume();
}

SolveResult pdhg_solve(const Model& model, const GridSpec& grid,
                       const SolverConfig& config,
                       const SolveResult* warm_start) {
  if (config.tau < 0.0 || config.sigma < 0.0 || !(config.step_ratio > 0.0)) {
    throw ConfigError("solver steps must be positive");
  }
  if (config.max_iter < 1 || config.log_every < 1) {
    throw ConfigError("solver.max_iter and solver.log_every must be >= 1");
  }
  const auto start = std::chrono::steady_clock::now();
  const InitialDensity m0 = build_initial_density(grid, model.spec().m0);
  ContinuityOperator op(grid);
  const Stencil& st = op.stencil();
  const int d = grid.d;
  const int nt = grid.nt;
  const std::size_t nvc = grid.cells_v();
  const std::size_t n = grid.cells_per_slice();

  SolveResult res;
  res.op_norm = estimate_op_norm(grid);
  const double c = std::sqrt(0.99);
  res.tau = config.tau > 0.0 ? config.tau : config.step_ratio * c / res.op_norm;
  res.sigma =
      config.sigma > 0.0 ? config.sigma : c / (config.step_ratio * res.op_norm);
  if (res.tau * res.sigma * res.op_norm * res.op_norm > 0.99 * 1.0000001) {
    throw ConfigError("solver.tau * solver.sigma * |K|^2 must be <= 0.99");
  }
  const double tau = res.tau;
  const double sigma = res.sigma;

  FlowState x;
  ScalarField U(grid, TimeLayout::kIntervals);
  if (warm_start != nullptr) {
    require_same_grid(warm_start->flow.m.grid(), grid);
    x = warm_start->flow;
    std::copy_n(warm_start->value.u.values().begin(), U.size(),
                U.values().begin());
  } else {
    x.m = free_streaming(m0);
    x.w = VectorField(grid);
    if (config.init == InitMode::kRandom) {
      std::mt19937_64 rng(config.seed);
      std::uniform_real_distribution<double> uni(0.5, 1.5);
      std::normal_distribution<double> normal(0.0, 0.1);
      for (int k = 1; k <= nt; ++k) {
        for (double& v : x.m.slice(k)) v = std::max(0.0, v * uni(rng));
      }
      for (auto& comp : x.w.components) {
        for (double& v : comp.values()) v = normal(rng);
      }
      x.w.apply_zero_flux();
      for (double& v : U.values()) v = normal(rng);
    }
  }
  std::copy(m0.values.begin(), m0.values.end(), x.m.slice(0).begin());

  FlowState bar = x;
  ScalarField Km, residual;
  VectorField Kw;
  ProxOptions popt;
  popt.tolerance = config.prox_tol;
  std::array<double, 2> w_hat{};
  const std::span<const double> wspan(w_hat.data(), static_cast<std::size_t>(d));

  auto log_row = [&](int iter) {
    ConvergenceRow row;
    row.iter = iter;
    const ValueState value = recover_value_state(complete_value(U, model), model);
    row.primal = evaluate_B(x, model);
    const double a = evaluate_A(value, x, model);
    row.dual = -a;
    row.gap = duality_gap(a, row.primal);
    row.feas = feasibility(x);
    row.energy_residual = energy_equality_residual(x, value, model);
    if (config.record_wall_clock) {
      row.seconds = std::chrono::duration<double>(
                        std::chrono::steady_clock::now() - start)
                        .count();
    }
    return row;
  };

  auto& rows = res.record.rows;
  int iter = 0;
  for (iter = 1; iter <= config.max_iter; ++iter) {
    op.adjoint(U, Km, Kw);
    for (int j = 1; j <= nt; ++j) {
      auto m = x.m.slice(j);
      auto mb = bar.m.slice(j);
      const auto km = Km.slice(j);
      const double omega = j == nt ? 1.0 / grid.dt : 0.0;
      for (std::size_t cell = 0; cell < n; ++cell) {
        const std::size_t iv = cell % nvc;
        for (int a = 0; a < d; ++a) {
          w_hat[a] = st.v_boundary(a, iv)
                         ? 0.0
                         : x.w[a].slice(j - 1)[cell] +
                               tau * Kw[a].slice(j - 1)[cell];
        }
        const double m_hat = m[cell] + tau * km[cell];
        const ProxPoint p =
            prox_perspective(model, m_hat, wspan, tau, cell, omega, popt);
        mb[cell] = p.m + config.theta * (p.m - m[cell]);
        m[cell] = p.m;
        for (int a = 0; a < d; ++a) {
          double& wc = x.w[a].slice(j - 1)[cell];
          bar.w[a].slice(j - 1)[cell] = p.w[a] + config.theta * (p.w[a] - wc);
          wc = p.w[a];
        }
      }
    }
    op.apply(bar.m, bar.w, residual);
    for (std::size_t i = 0; i < U.size(); ++i) {
      U.values()[i] -= sigma * residual.values()[i];
    }

    const bool last = iter == config.max_iter;
    if (iter % config.log_every != 0 && !last) continue;
    const ConvergenceRow row = log_row(iter);
    if (std::isnan(row.primal) || std::isnan(row.dual) ||
        !U.all_finite() || !x.m.all_finite()) {
      std::ostringstream os;
      os << "pdhg_solve diverged at iteration " << iter
         << ": non-finite iterate";
      throw NumericalError(os.str());
    }
    rows.push_back(row);
    if (std::abs(row.gap) <= config.tol_gap && row.feas <= config.tol_feas) {
      res.record.converged = true;
      break;
    }
    if (iter >= 2000) {
      double ref = 0.0;
      for (const auto& r : rows) {
        if (r.iter > iter - 2000 && r.iter <= iter - 1000) {
          ref = std::max(ref, std::abs(r.gap));
        }
      }
      if (std::abs(row.gap) > 10.0 * std::max(ref, config.tol_gap)) {
        std::ostringstream os;
        os.precision(6);
        os << "pdhg_solve diverged at iteration " << iter << ": gap "
           << row.gap << " grew tenfold over 1000 iterations (was " << ref
           << ")";
        throw NumericalError(os.str());
      }
    }
  }
  res.record.iterations = std::min(iter, config.max_iter);
  res.flow = std::move(x);
  res.value = recover_value_state(complete_value(U, model), model);
  res.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count();
  return res;
}

}  // namespace kmfg
