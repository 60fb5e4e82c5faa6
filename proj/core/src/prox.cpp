#include "kmfg/prox.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "kmfg/errors.hpp"

namespace kmfg {

namespace {

double norm(std::span<const double> w) {
  double s = 0.0;
  for (double x : w) s += x * x;
  return std::sqrt(s);
}

[[noreturn]] void fail(const char* what, std::size_t cell, double m_hat,
                       double w_norm, double tau) {
  std::ostringstream os;
  os.precision(17);
  os << what << " did not converge at cell " << cell << " (m_hat=" << m_hat
     << ", |w_hat|=" << w_norm << ", tau=" << tau << ")";
  throw NumericalError(os.str());
}

// Root of an increasing function on [lo, hi] with deriv(lo) < 0 <= deriv(hi).
// Newton steps that leave the bracket fall back to bisection.
template <class Deriv, class Second>
double monotone_root(Deriv deriv, Second second, double lo, double hi,
                     double scale, const ProxOptions& opt, int& iterations,
                     bool& converged) {
  double x = 0.5 * (lo + hi);
  converged = false;
  for (iterations = 0; iterations < opt.max_iterations; ++iterations) {
    const double g = deriv(x);
    if (std::abs(g) <= opt.tolerance * scale) {
      converged = true;
      return x;
    }
    if (g > 0.0) {
      hi = x;
    } else {
      lo = x;
    }
    if (hi - lo <= 1e-15 * std::max(1.0, std::abs(hi))) {
      converged = true;
      return 0.5 * (lo + hi);
    }
    const double h = second(x);
    double next = (h > 0.0 && std::isfinite(h)) ? x - g / h : lo - 1.0;
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    x = next;
  }
  return x;
}

ProxPoint prox_quadratic(const Model& model, double m_hat,
                         std::span<const double> w_hat, double tau,
                         std::size_t cell, double omega,
                         const ProxOptions& opt) {
  const double c_h = model.spec().c_H;
  const double big_c = model.spec().C_H;
  double w2 = 0.0;
  for (double x : w_hat) w2 += x * x;

  auto deriv = [&](double m) {
    const double den = c_h * m + tau;
    double g = model.running_coupling(m, cell) + big_c -
               0.5 * c_h * w2 / (den * den) + (m - m_hat) / tau;
    if (omega != 0.0) g += omega * model.terminal_coupling(m, cell);
    return g;
  };
  auto second = [&](double m) {
    const double den = c_h * m + tau;
    double h = model.running_coupling_slope(m, cell) +
               c_h * c_h * w2 / (den * den * den) + 1.0 / tau;
    if (omega != 0.0) h += omega * model.terminal_coupling_slope(m, cell);
    return h;
  };

  ProxPoint out;
  if (deriv(0.0) >= 0.0) return out;
  const double hi = std::max(0.0, m_hat) + 0.5 * c_h * w2 / tau + 1e-300;
  const double scale =
      1.0 + std::abs(m_hat) / tau + 0.5 * c_h * w2 / (tau * tau) + big_c;
  bool ok = false;
  out.m = monotone_root(deriv, second, 0.0, hi, scale, opt, out.iterations, ok);
  if (!ok) fail("prox_perspective", cell, m_hat, std::sqrt(w2), tau);
  const double factor = c_h * out.m / (c_h * out.m + tau);
  for (std::size_t a = 0; a < w_hat.size(); ++a) out.w[a] = factor * w_hat[a];
  return out;
}

// General r: for fixed m the optimal w is parallel to w_hat with speed
// sigma = |w| / m solving k sigma^{r'-1} + (m sigma - |w_hat|) / tau = 0.
ProxPoint prox_general(const Model& model, double m_hat,
                       std::span<const double> w_hat, double tau,
                       std::size_t cell, double omega, const ProxOptions& opt) {
  const double k = model.lagrangian_coefficient();
  const double rp = model.r_conjugate();
  const double r = model.spec().r;
  const double big_c = model.spec().C_H;
  const double wn = norm(w_hat);
  const double sigma0 = wn > 0.0 ? std::pow(wn / (tau * k), 1.0 / (rp - 1.0)) : 0.0;

  auto speed = [&](double m) {
    if (wn == 0.0) return 0.0;
    auto eq = [&](double s) { return k * std::pow(s, rp - 1.0) + (m * s - wn) / tau; };
    double lo = 0.0, hi = sigma0;
    for (int i = 0; i < 200 && hi - lo > 1e-15 * std::max(1.0, hi); ++i) {
      const double mid = 0.5 * (lo + hi);
      if (eq(mid) > 0.0) {
        hi = mid;
      } else {
        lo = mid;
      }
    }
    return 0.5 * (lo + hi);
  };
  auto deriv = [&](double m) {
    const double s = speed(m);
    double g = model.running_coupling(m, cell) + big_c -
               (k / r) * std::pow(s, rp) + (m - m_hat) / tau;
    if (omega != 0.0) g += omega * model.terminal_coupling(m, cell);
    return g;
  };
  auto no_second = [](double) { return 0.0; };

  ProxPoint out;
  if (deriv(0.0) >= 0.0) return out;
  const double hi =
      std::max(0.0, m_hat) + tau * (k / r) * std::pow(sigma0, rp) + 1e-300;
  const double scale = 1.0 + std::abs(m_hat) / tau + (k / r) * std::pow(sigma0, rp);
  ProxOptions bis = opt;
  bis.max_iterations = std::max(opt.max_iterations, 400);
  bool ok = false;
  out.m = monotone_root(deriv, no_second, 0.0, hi, scale, bis, out.iterations, ok);
  if (!ok) fail("prox_perspective", cell, m_hat, wn, tau);
  if (wn > 0.0) {
    const double s = speed(out.m) * out.m / wn;
    for (std::size_t a = 0; a < w_hat.size(); ++a) out.w[a] = s * w_hat[a];
  }
  return out;
}

}  // namespace

ProxPoint prox_perspective(const Model& model, double m_hat,
                           std::span<const double> w_hat, double tau,
                           std::size_t cell, double terminal_weight,
                           const ProxOptions& options) {
  if (!(tau > 0.0)) throw std::invalid_argument("prox_perspective: tau <= 0");
  if (w_hat.size() > 2) throw std::invalid_argument("prox_perspective: d > 2");
  if (model.quadratic_hamiltonian()) {
    return prox_quadratic(model, m_hat, w_hat, tau, cell, terminal_weight,
                          options);
  }
  return prox_general(model, m_hat, w_hat, tau, cell, terminal_weight, options);
}

double prox_terminal(const Model& model, double m_hat, double tau,
                     std::size_t cell) {
  if (!(tau > 0.0)) throw std::invalid_argument("prox_terminal: tau <= 0");
  if (m_hat <= 0.0) return 0.0;
  const double c = model.terminal_coefficient(cell);
  if (model.spec().s == 2.0) return m_hat / (1.0 + tau * c);
  auto deriv = [&](double m) {
    return model.terminal_coupling(m, cell) + (m - m_hat) / tau;
  };
  auto second = [&](double m) {
    return model.terminal_coupling_slope(m, cell) + 1.0 / tau;
  };
  ProxOptions opt;
  opt.max_iterations = 400;
  int iterations = 0;
  bool ok = false;
  const double m = monotone_root(deriv, second, 0.0, m_hat, 1.0 + m_hat / tau,
                                 opt, iterations, ok);
  if (!ok) fail("prox_terminal", cell, m_hat, 0.0, tau);
  return m;
}

double prox_perspective_objective(const Model& model, double m_hat,
                                  std::span<const double> w_hat, double tau,
                                  double m, std::span<const double> w,
                                  std::size_t cell, double terminal_weight) {
  double dist = (m - m_hat) * (m - m_hat);
  for (std::size_t a = 0; a < w.size(); ++a) {
    dist += (w[a] - w_hat[a]) * (w[a] - w_hat[a]);
  }
  double value = model.running_cost(m, cell) + model.perspective(m, w);
  if (terminal_weight != 0.0) value += terminal_weight * model.terminal_cost(m, cell);
  return value + dist / (2.0 * tau);
}

}  // namespace kmfg
