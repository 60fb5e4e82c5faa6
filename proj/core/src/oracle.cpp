#include "kmfg/oracle.hpp"

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "kmfg/errors.hpp"
#include "kmfg/transport.hpp"

namespace kmfg {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using SparseMatrix = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

// Variable layout of the primal problem: m^1..m^nt per cell, then the free
// (non-boundary) flux components per interval cell.
struct Layout {
  GridSpec grid;
  std::size_t cells = 0;
  std::size_t n_m = 0;
  std::vector<long> w_index;  // (k * cells + c) * d + a -> variable or -1
  std::size_t n_vars = 0;

  explicit Layout(const GridSpec& g) : grid(g), cells(g.cells_per_slice()) {
    n_m = static_cast<std::size_t>(g.nt) * cells;
    w_index.assign(n_m * g.d, -1);
    long next = static_cast<long>(n_m);
    const std::size_t nvc = g.cells_v();
    for (int k = 0; k < g.nt; ++k) {
      for (std::size_t c = 0; c < cells; ++c) {
        for (int a = 0; a < g.d; ++a) {
          if (!g.on_v_boundary(c % nvc, a)) {
            w_index[(k * cells + c) * g.d + a] = next++;
          }
        }
      }
    }
    n_vars = static_cast<std::size_t>(next);
  }

  std::size_t m_var(int j, std::size_t c) const {
    return static_cast<std::size_t>(j - 1) * cells + c;
  }
  long w_var(int k, std::size_t c, int a) const {
    return w_index[(k * cells + c) * grid.d + a];
  }
};

void build_constraints(const Layout& L, const std::vector<double>& m0,
                       SparseMatrix& A, VectorXd& b) {
  const GridSpec& g = L.grid;
  const Stencil st(g);
  const std::size_t nxc = g.cells_x();
  const std::size_t nvc = g.cells_v();
  std::vector<Triplet> trips;
  b = VectorXd::Zero(static_cast<long>(L.n_m));
  for (int k = 0; k < g.nt; ++k) {
    for (std::size_t ix = 0; ix < nxc; ++ix) {
      for (std::size_t iv = 0; iv < nvc; ++iv) {
        const std::size_t c = ix * nvc + iv;
        const long row = static_cast<long>(k * L.cells + c);
        trips.emplace_back(row, L.m_var(k + 1, c), 1.0 / g.dt);
        if (k >= 1) {
          trips.emplace_back(row, L.m_var(k, c), -1.0 / g.dt);
        } else {
          b[row] = m0[c] / g.dt;
        }
        for (int a = 0; a < g.d; ++a) {
          const double coef = st.velocity(a, iv) / (2.0 * g.dx);
          trips.emplace_back(row, L.m_var(k + 1, st.x_plus(a, ix) * nvc + iv), coef);
          trips.emplace_back(row, L.m_var(k + 1, st.x_minus(a, ix) * nvc + iv), -coef);
          const std::size_t vp = st.v_plus(a, iv);
          const std::size_t vm = st.v_minus(a, iv);
          if (vp != Stencil::kOutside) {
            const long col = L.w_var(k, ix * nvc + vp, a);
            if (col >= 0) trips.emplace_back(row, col, 0.5 / g.dv);
          }
          if (vm != Stencil::kOutside) {
            const long col = L.w_var(k, ix * nvc + vm, a);
            if (col >= 0) trips.emplace_back(row, col, -0.5 / g.dv);
          }
        }
      }
    }
  }
  A.resize(static_cast<long>(L.n_m), static_cast<long>(L.n_vars));
  A.setFromTriplets(trips.begin(), trips.end());
}

struct Evaluation {
  double value = 0.0;
  VectorXd grad;
  SparseMatrix hess_inv;
  SparseMatrix hess;
};

// Barrier-regularised objective with per-cell (m, w) Hessian blocks.
class Objective {
 public:
  Objective(const Model& model, const Layout& layout)
      : model_(model), L_(layout) {}

  double value(const VectorXd& x, double mu) const {
    const GridSpec& g = L_.grid;
    const double vol = g.cell_volume();
    const double c_h = model_.spec().c_H;
    const double big_c = model_.spec().C_H;
    double total = 0.0;
    for (int j = 1; j <= g.nt; ++j) {
      for (std::size_t c = 0; c < L_.cells; ++c) {
        const double m = x[static_cast<long>(L_.m_var(j, c))];
        if (!(m > 0.0)) return kInfeasible;
        double w2 = 0.0;
        for (int a = 0; a < g.d; ++a) {
          const long iw = L_.w_var(j - 1, c, a);
          if (iw >= 0) w2 += x[iw] * x[iw];
        }
        double cell = model_.running_cost(m, c) + w2 / (2.0 * c_h * m) +
                      big_c * m - mu * std::log(m);
        total += g.dt * vol * cell;
        if (j == g.nt) total += vol * model_.terminal_cost(m, c);
      }
    }
    return total;
  }

  Evaluation evaluate(const VectorXd& x, double mu) const {
    const GridSpec& g = L_.grid;
    const double vol = g.cell_volume();
    const double c_h = model_.spec().c_H;
    const double big_c = model_.spec().C_H;
    Evaluation ev;
    ev.value = value(x, mu);
    ev.grad = VectorXd::Zero(x.size());
    std::vector<Triplet> hinv, hess;
    for (int j = 1; j <= g.nt; ++j) {
      for (std::size_t c = 0; c < L_.cells; ++c) {
        const long im = static_cast<long>(L_.m_var(j, c));
        const double m = x[im];
        std::array<long, 3> idx{im, -1, -1};
        std::array<double, 3> wv{};
        int nb = 1;
        double w2 = 0.0;
        for (int a = 0; a < g.d; ++a) {
          const long iw = L_.w_var(j - 1, c, a);
          if (iw >= 0) {
            idx[nb] = iw;
            wv[nb] = x[iw];
            w2 += x[iw] * x[iw];
            ++nb;
          }
        }
        const double wt = g.dt * vol;
        Eigen::Matrix3d H = Eigen::Matrix3d::Zero();
        double gm = model_.running_coupling(m, c) - w2 / (2.0 * c_h * m * m) +
                    big_c - mu / m;
        double hmm = model_.running_coupling_slope(m, c) +
                     w2 / (c_h * m * m * m) + mu / (m * m);
        if (j == g.nt) {
          gm += model_.terminal_coupling(m, c) / g.dt;
          hmm += model_.terminal_coupling_slope(m, c) / g.dt;
        }
        ev.grad[im] += wt * gm;
        H(0, 0) = wt * hmm;
        for (int i = 1; i < nb; ++i) {
          ev.grad[idx[i]] += wt * wv[i] / (c_h * m);
          H(i, i) = wt / (c_h * m);
          H(0, i) = H(i, 0) = -wt * wv[i] / (c_h * m * m);
        }
        const MatrixXd block = H.topLeftCorner(nb, nb);
        const MatrixXd inv = block.inverse();
        for (int r = 0; r < nb; ++r) {
          for (int s = 0; s < nb; ++s) {
            hinv.emplace_back(idx[r], idx[s], inv(r, s));
            hess.emplace_back(idx[r], idx[s], block(r, s));
          }
        }
      }
    }
    const long n = x.size();
    ev.hess_inv.resize(n, n);
    ev.hess_inv.setFromTriplets(hinv.begin(), hinv.end());
    ev.hess.resize(n, n);
    ev.hess.setFromTriplets(hess.begin(), hess.end());
    return ev;
  }

 private:
  const Model& model_;
  const Layout& L_;
};

FlowState unpack(const Layout& L, const VectorXd& x,
                 const std::vector<double>& m0) {
  const GridSpec& g = L.grid;
  FlowState f;
  f.m = ScalarField(g, TimeLayout::kNodes);
  f.w = VectorField(g);
  std::copy(m0.begin(), m0.end(), f.m.slice(0).begin());
  for (int j = 1; j <= g.nt; ++j) {
    for (std::size_t c = 0; c < L.cells; ++c) {
      f.m.slice(j)[c] = x[static_cast<long>(L.m_var(j, c))];
    }
  }
  for (int k = 0; k < g.nt; ++k) {
    for (std::size_t c = 0; c < L.cells; ++c) {
      for (int a = 0; a < g.d; ++a) {
        const long iw = L.w_var(k, c, a);
        if (iw >= 0) f.w[a].slice(k)[c] = x[iw];
      }
    }
  }
  return f;
}

}  // namespace

OracleResult oracle_solve(const Model& model, const GridSpec& grid,
                          const OracleConfig& config) {
  if (!model.quadratic_hamiltonian()) {
    throw ConfigError("oracle_solve supports r = 2 only");
  }
  if (grid.cells_per_slice() * static_cast<std::size_t>(grid.nt) >
      config.max_cells) {
    throw ConfigError("oracle grid exceeds the cell cap");
  }
  const InitialDensity m0 = build_initial_density(grid, model.spec().m0);
  const Layout L(grid);
  SparseMatrix A;
  VectorXd b;
  build_constraints(L, m0.values, A, b);
  const SparseMatrix At = A.transpose();

  // Start from free streaming lifted to stay positive.
  VectorXd x = VectorXd::Zero(static_cast<long>(L.n_vars));
  {
    const ScalarField fs = free_streaming(m0);
    double peak = 0.0;
    for (double v : m0.values) peak = std::max(peak, v);
    for (int j = 1; j <= grid.nt; ++j) {
      for (std::size_t c = 0; c < L.cells; ++c) {
        x[static_cast<long>(L.m_var(j, c))] =
            std::max(fs.slice(j)[c], 1e-3 * peak);
      }
    }
  }

  const Objective obj(model, L);
  OracleResult res;
  double last_stationarity = kInfeasible;
  for (double mu = config.mu_start;; mu *= config.mu_factor) {
    const bool final_stage = mu <= config.mu_final * (1.0 + 1e-9);
    bool done = false;
    for (int it = 0; it < config.max_newton_per_stage; ++it) {
      ++res.newton_steps;
      const Evaluation ev = obj.evaluate(x, mu);
      const VectorXd r = A * x - b;
      const MatrixXd S = MatrixXd(A * ev.hess_inv * At);
      const Eigen::LLT<MatrixXd> llt(S);
      if (llt.info() != Eigen::Success) {
        throw NumericalError("oracle_solve: KKT Schur complement factorisation failed");
      }
      const VectorXd nu = llt.solve(r - A * (ev.hess_inv * ev.grad));
      const VectorXd d = -(ev.hess_inv * (ev.grad + At * nu));
      const double decrement = d.dot(ev.hess * d);
      last_stationarity = (ev.grad + At * nu).norm();
      const bool feasible = r.lpNorm<Eigen::Infinity>() <= 1e-12 * (1.0 + b.lpNorm<Eigen::Infinity>());
      if (feasible && 0.5 * decrement <= config.tolerance * (1.0 + std::abs(ev.value))) {
        done = true;
        break;
      }
      double alpha = 1.0;
      for (int j = 1; j <= grid.nt; ++j) {
        for (std::size_t c = 0; c < L.cells; ++c) {
          const long i = static_cast<long>(L.m_var(j, c));
          if (d[i] < 0.0) alpha = std::min(alpha, -0.99 * x[i] / d[i]);
        }
      }
      if (feasible) {
        const double slope = ev.grad.dot(d);
        int halvings = 0;
        while (obj.value(x + alpha * d, mu) > ev.value + 0.25 * alpha * slope) {
          alpha *= 0.5;
          if (++halvings > 60) break;
        }
        if (halvings > 60) {
          done = true;  // no further decrease representable
          break;
        }
      }
      x += alpha * d;
    }
    if (!done) {
      throw NumericalError("oracle_solve: Newton budget exhausted");
    }
    if (final_stage) break;
  }

  res.flow = unpack(L, x, m0.values);
  res.objective = evaluate_B(res.flow, model);
  res.stationarity = last_stationarity;
  res.feasibility = feasibility(res.flow);
  return res;
}

namespace {

// Nelder-Mead on R^n; returns the best vertex.
std::vector<double> nelder_mead(const std::function<double(const std::vector<double>&)>& f,
                                std::vector<double> start, double scale,
                                int max_evaluations, int& evaluations) {
  const std::size_t n = start.size();
  std::vector<std::vector<double>> pts(n + 1, start);
  for (std::size_t i = 0; i < n; ++i) pts[i + 1][i] += scale;
  std::vector<double> vals(n + 1);
  for (std::size_t i = 0; i <= n; ++i) vals[i] = f(pts[i]);
  evaluations += static_cast<int>(n + 1);
  std::vector<std::size_t> order(n + 1);
  while (evaluations < max_evaluations) {
    for (std::size_t i = 0; i <= n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return vals[a] < vals[b]; });
    const std::size_t best = order[0], worst = order[n], second = order[n - 1];
    double spread = 0.0;
    for (std::size_t i = 0; i <= n; ++i) {
      for (std::size_t k = 0; k < n; ++k) {
        spread = std::max(spread, std::abs(pts[i][k] - pts[best][k]));
      }
    }
    if (spread < 1e-13) break;
    std::vector<double> centroid(n, 0.0);
    for (std::size_t i = 0; i <= n; ++i) {
      if (i == worst) continue;
      for (std::size_t k = 0; k < n; ++k) centroid[k] += pts[i][k] / n;
    }
    auto along = [&](double t) {
      std::vector<double> p(n);
      for (std::size_t k = 0; k < n; ++k) {
        p[k] = centroid[k] + t * (pts[worst][k] - centroid[k]);
      }
      return p;
    };
    const auto xr = along(-1.0);
    const double fr = f(xr);
    ++evaluations;
    if (fr < vals[best]) {
      const auto xe = along(-2.0);
      const double fe = f(xe);
      ++evaluations;
      if (fe < fr) {
        pts[worst] = xe;
        vals[worst] = fe;
      } else {
        pts[worst] = xr;
        vals[worst] = fr;
      }
      continue;
    }
    if (fr < vals[second]) {
      pts[worst] = xr;
      vals[worst] = fr;
      continue;
    }
    const auto xc = fr < vals[worst] ? along(-0.5) : along(0.5);
    const double fc = f(xc);
    ++evaluations;
    if (fc < std::min(fr, vals[worst])) {
      pts[worst] = xc;
      vals[worst] = fc;
      continue;
    }
    for (std::size_t i = 0; i <= n; ++i) {
      if (i == best) continue;
      for (std::size_t k = 0; k < n; ++k) {
        pts[i][k] = pts[best][k] + 0.5 * (pts[i][k] - pts[best][k]);
      }
      vals[i] = f(pts[i]);
      ++evaluations;
    }
  }
  const auto it = std::min_element(vals.begin(), vals.end());
  return pts[static_cast<std::size_t>(it - vals.begin())];
}

}  // namespace

ProxPoint oracle_prox(const Model& model, double m_hat,
                      std::span<const double> w_hat, double tau,
                      std::size_t cell, double terminal_weight,
                      const OracleProxOptions& options) {
  const std::size_t d = w_hat.size();
  auto objective = [&](const std::vector<double>& p) {
    const double v = prox_perspective_objective(
        model, m_hat, w_hat, tau, p[0], {p.data() + 1, d}, cell,
        terminal_weight);
    return std::isnan(v) ? kInfeasible : v;
  };
  double wn = 0.0;
  for (double x : w_hat) wn = std::max(wn, std::abs(x));
  const double m_top = 2.0 * std::max(1.0, std::abs(m_hat)) + wn * wn;
  const double w_top = 2.0 * wn + 1.0;

  // Dense grid search over [0, m_top] x [-w_top, w_top]^d.
  const int gp = options.grid_points;
  std::vector<double> best(d + 1, 0.0), p(d + 1);
  double best_val = objective(best);
  std::vector<int> counter(d + 1, 0);
  while (true) {
    p[0] = m_top * counter[0] / (gp - 1);
    for (std::size_t a = 0; a < d; ++a) {
      p[a + 1] = -w_top + 2.0 * w_top * counter[a + 1] / (gp - 1);
    }
    const double v = objective(p);
    if (v < best_val) {
      best_val = v;
      best = p;
    }
    std::size_t pos = 0;
    while (pos <= d && ++counter[pos] == gp) counter[pos++] = 0;
    if (pos > d) break;
  }

  int evaluations = 0;
  double scale = m_top / (gp - 1);
  for (int r = 0; r < options.restarts; ++r) {
    int used = 0;
    const auto cand =
        nelder_mead(objective, best, scale, options.max_evaluations, used);
    evaluations += used;
    const double v = objective(cand);
    if (v <= best_val) {
      best_val = v;
      best = cand;
    }
    scale *= 0.1;
  }
  ProxPoint out;
  out.m = best[0];
  for (std::size_t a = 0; a < d; ++a) out.w[a] = best[a + 1];
  if (objective(std::vector<double>(d + 1, 0.0)) <= best_val) {
    out = ProxPoint{};
  }
  out.iterations = evaluations;
  return out;
}

}  // namespace kmfg
