#include "kmfg/model.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <random>

#include "kmfg/errors.hpp"

namespace kmfg {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Compactly supported C-infinity bump on [-1, 1], value 1 at the origin.
double compact_bump(double r) {
  if (std::abs(r) >= 1.0) return 0.0;
  return std::exp(1.0 - 1.0 / (1.0 - r * r));
}

double torus_distance(double a, double b) {
  double d = std::abs(a - b);
  d -= std::floor(d);
  return std::min(d, 1.0 - d);
}

double gaussian_upper_tail(double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); }

double norm(std::span<const double> p) {
  double s = 0.0;
  for (double x : p) s += x * x;
  return std::sqrt(s);
}

}  // namespace

double DensitySpec::evaluate(std::span<const double> x,
                             std::span<const double> v) const {
  double px = 1.0;
  for (double xa : x) {
    switch (x_profile) {
      case XProfile::kUniform:
        break;
      case XProfile::kCosine:
        px *= 1.0 + x_amplitude * std::cos(kTwoPi * (xa - x_centers.front()));
        break;
      case XProfile::kBumps: {
        double s = 0.0;
        for (double c : x_centers) s += compact_bump(torus_distance(xa, c) / x_width);
        px *= s;
        break;
      }
    }
  }
  double pv = 1.0;
  for (double va : v) {
    const double z = (va - v_center) / v_sigma;
    pv *= std::exp(-0.5 * z * z);
  }
  return px * pv;
}

std::string to_string(DensitySpec::XProfile p) {
  switch (p) {
    case DensitySpec::XProfile::kUniform:
      return "uniform";
    case DensitySpec::XProfile::kCosine:
      return "cosine";
    case DensitySpec::XProfile::kBumps:
      return "bumps";
  }
  return "cosine";
}

DensitySpec::XProfile parse_x_profile(const std::string& name) {
  if (name == "uniform") return DensitySpec::XProfile::kUniform;
  if (name == "cosine") return DensitySpec::XProfile::kCosine;
  if (name == "bumps") return DensitySpec::XProfile::kBumps;
  throw ConfigError("unknown x profile '" + name +
                    "' (expected uniform, cosine or bumps)");
}

Model::Model(ModelSpec spec) : spec_(std::move(spec)) {
  if (!(spec_.q > 1.0)) throw ConfigError("model.q must be > 1");
  if (!(spec_.s > 1.0) || spec_.s > spec_.q) {
    throw ConfigError("model.s must satisfy 1 < s <= q");
  }
  if (!(spec_.r > 1.0)) throw ConfigError("model.r must be > 1");
  if (!(spec_.c_F >= 0.0)) throw ConfigError("model.c_F must be >= 0");
  if (!(spec_.c_G >= 0.0)) throw ConfigError("model.c_G must be >= 0");
  if (!(spec_.c_H > 0.0)) throw ConfigError("model.c_H must be > 0");
  if (!(spec_.C_H >= 0.0)) throw ConfigError("model.C_H must be >= 0");
  for (double c : spec_.c_F_field) {
    if (!(c > 0.0)) throw ConfigError("c_F field entries must be positive");
  }
  for (double c : spec_.c_G_field) {
    if (!(c > 0.0)) throw ConfigError("c_G field entries must be positive");
  }
  r_prime_ = spec_.r / (spec_.r - 1.0);
  lagrangian_coeff_ = std::pow(spec_.c_H, -1.0 / (spec_.r - 1.0));
}

double Model::power_cost(double c, double e, double m) {
  if (m < 0.0) return kInfeasible;
  if (m == 0.0) return 0.0;
  return c * std::pow(m, e) / e;
}

// sup_{m >= 0} beta m - c m^e / e = c^{-1/(e-1)} beta_+^{e'} / e'.
double Model::power_conjugate(double c, double e, double beta) {
  if (beta <= 0.0) return 0.0;
  if (c == 0.0) return kInfeasible;
  const double ep = e / (e - 1.0);
  return std::pow(c, -1.0 / (e - 1.0)) * std::pow(beta, ep) / ep;
}

double Model::running_cost(double m, std::size_t cell) const {
  return power_cost(running_coefficient(cell), spec_.q, m);
}

double Model::running_coupling(double m, std::size_t cell) const {
  if (m <= 0.0) return 0.0;
  return running_coefficient(cell) * std::pow(m, spec_.q - 1.0);
}

double Model::running_coupling_slope(double m, std::size_t cell) const {
  const double c = running_coefficient(cell);
  if (c == 0.0) return 0.0;
  if (m <= 0.0) return spec_.q < 2.0 ? kInfeasible : (spec_.q == 2.0 ? c : 0.0);
  return c * (spec_.q - 1.0) * std::pow(m, spec_.q - 2.0);
}

double Model::running_conjugate(double beta, std::size_t cell) const {
  return power_conjugate(running_coefficient(cell), spec_.q, beta);
}

double Model::running_conjugate_argmax(double beta, std::size_t cell) const {
  if (beta <= 0.0) return 0.0;
  const double c = running_coefficient(cell);
  if (c == 0.0) return kInfeasible;
  return std::pow(beta / c, 1.0 / (spec_.q - 1.0));
}

double Model::terminal_cost(double m, std::size_t cell) const {
  return power_cost(terminal_coefficient(cell), spec_.s, m);
}

double Model::terminal_coupling(double m, std::size_t cell) const {
  if (m <= 0.0) return 0.0;
  return terminal_coefficient(cell) * std::pow(m, spec_.s - 1.0);
}

double Model::terminal_coupling_slope(double m, std::size_t cell) const {
  const double c = terminal_coefficient(cell);
  if (c == 0.0) return 0.0;
  if (m <= 0.0) return spec_.s < 2.0 ? kInfeasible : (spec_.s == 2.0 ? c : 0.0);
  return c * (spec_.s - 1.0) * std::pow(m, spec_.s - 2.0);
}

double Model::terminal_conjugate(double u, std::size_t cell) const {
  return power_conjugate(terminal_coefficient(cell), spec_.s, u);
}

double Model::terminal_conjugate_argmax(double u, std::size_t cell) const {
  if (u <= 0.0) return 0.0;
  const double c = terminal_coefficient(cell);
  if (c == 0.0) return kInfeasible;
  return std::pow(u / c, 1.0 / (spec_.s - 1.0));
}

double Model::hamiltonian_of_norm(double p_norm) const {
  if (p_norm == 0.0) return -spec_.C_H;
  return spec_.c_H * std::pow(p_norm, spec_.r) / spec_.r - spec_.C_H;
}

double Model::hamiltonian(std::span<const double> p) const {
  if (spec_.r == 2.0) {
    double s = 0.0;
    for (double x : p) s += x * x;
    return 0.5 * spec_.c_H * s - spec_.C_H;
  }
  return hamiltonian_of_norm(norm(p));
}

void Model::hamiltonian_gradient(std::span<const double> p,
                                 std::span<double> out) const {
  if (spec_.r == 2.0) {
    for (std::size_t a = 0; a < p.size(); ++a) out[a] = spec_.c_H * p[a];
    return;
  }
  const double n = norm(p);
  const double scale = n == 0.0 ? 0.0 : spec_.c_H * std::pow(n, spec_.r - 2.0);
  for (std::size_t a = 0; a < p.size(); ++a) out[a] = scale * p[a];
}

double Model::lagrangian_of_norm(double a_norm) const {
  if (a_norm == 0.0) return spec_.C_H;
  return lagrangian_coeff_ * std::pow(a_norm, r_prime_) / r_prime_ + spec_.C_H;
}

double Model::lagrangian(std::span<const double> alpha) const {
  return lagrangian_of_norm(norm(alpha));
}

double Model::perspective(double m, std::span<const double> w) const {
  const double wn = norm(w);
  if (m < 0.0) return kInfeasible;
  if (m == 0.0) return wn == 0.0 ? 0.0 : kInfeasible;
  if (wn == 0.0) return spec_.C_H * m;
  // m L(w/m) = k |w|^{r'} m^{1-r'} / r' + C_H m
  return lagrangian_coeff_ * std::pow(wn, r_prime_) *
             std::pow(m, 1.0 - r_prime_) / r_prime_ +
         spec_.C_H * m;
}

double fenchel_conjugate_numeric(const std::function<double(double)>& phi,
                                 double y, double lo, double hi,
                                 const ConjugateOptions& options) {
  if (!(hi > lo)) throw ModelError("conjugate search box is empty");
  auto objective = [&](double x) {
    const double v = phi(x);
    if (!std::isfinite(v)) {
      throw ModelError("non-finite sample of convex function at x = " +
                       std::to_string(x));
    }
    return y * x - v;
  };

  // Half of the samples are geometric towards lo (kinks and power laws near
  // the boundary), half uniform across the box.
  const int n = std::max(options.samples, 8);
  std::vector<double> xs;
  xs.reserve(n + 1);
  const double width = hi - lo;
  const int n_geo = n / 2;
  for (int i = 0; i <= n_geo; ++i) {
    xs.push_back(lo + width * std::pow(1e-12, 1.0 - static_cast<double>(i) / n_geo));
  }
  for (int i = 0; i <= n - n_geo; ++i) {
    xs.push_back(lo + width * static_cast<double>(i) / (n - n_geo));
  }
  xs.push_back(lo);
  std::sort(xs.begin(), xs.end());
  xs.erase(std::unique(xs.begin(), xs.end()), xs.end());

  std::size_t best = 0;
  double best_val = -kInfeasible;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double v = objective(xs[i]);
    if (v > best_val) {
      best_val = v;
      best = i;
    }
  }

  // Concave objective: the maximiser lies between the best sample's
  // neighbours.
  double a = xs[best == 0 ? 0 : best - 1];
  double b = xs[std::min(best + 1, xs.size() - 1)];
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - inv_phi * (b - a);
  double d = a + inv_phi * (b - a);
  double fc = objective(c);
  double fd = objective(d);
  for (int it = 0; it < 200 && (b - a) > options.tolerance * (1.0 + std::abs(a));
       ++it) {
    if (fc > fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - inv_phi * (b - a);
      fc = objective(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + inv_phi * (b - a);
      fd = objective(d);
    }
  }
  return std::max({best_val, fc, fd, objective(a), objective(b)});
}

double InitialDensity::evaluate(std::span<const double> x,
                                std::span<const double> v) const {
  return spec.evaluate(x, v) / normalization;
}

double velocity_tail_mass(const DensitySpec& spec, const GridSpec& grid) {
  const double lo = (-grid.v_max - spec.v_center) / spec.v_sigma;
  const double hi = (grid.v_max - spec.v_center) / spec.v_sigma;
  const double outside_1d = gaussian_upper_tail(-lo) + gaussian_upper_tail(hi);
  return 1.0 - std::pow(1.0 - outside_1d, grid.d);
}

InitialDensity build_initial_density(const GridSpec& grid,
                                     const DensitySpec& spec) {
  if (!(spec.v_sigma > 0.0)) throw ConfigError("m0.v_sigma must be > 0");
  if (spec.x_profile == DensitySpec::XProfile::kBumps) {
    if (!(spec.x_width > 0.0) || spec.x_width > 0.5) {
      throw ConfigError("m0.x_width must lie in (0, 0.5]");
    }
    if (spec.x_centers.empty()) throw ConfigError("m0.x_centers is empty");
  }
  if (spec.x_profile == DensitySpec::XProfile::kCosine) {
    if (!(spec.x_amplitude >= 0.0 && spec.x_amplitude < 1.0)) {
      throw ConfigError("m0.x_amplitude must lie in [0, 1)");
    }
    if (spec.x_centers.empty()) throw ConfigError("m0.x_centers is empty");
  }
  const double tail = velocity_tail_mass(spec, grid);
  if (tail > spec.tail_tol) {
    throw ConfigError("initial density loses " + std::to_string(tail) +
                      " of its velocity mass outside the box; raise "
                      "grid.v_max (tolerance m0.tail_tol = " +
                      std::to_string(spec.tail_tol) + ")");
  }

  InitialDensity out;
  out.grid = grid;
  out.spec = spec;
  const std::size_t nxc = grid.cells_x();
  const std::size_t nvc = grid.cells_v();
  out.values.resize(nxc * nvc);
  std::array<double, 2> x{}, v{};
  double sum = 0.0;
  for (std::size_t ix = 0; ix < nxc; ++ix) {
    for (int a = 0; a < grid.d; ++a) x[a] = grid.x_node(grid.x_coord(ix, a));
    for (std::size_t iv = 0; iv < nvc; ++iv) {
      for (int a = 0; a < grid.d; ++a) v[a] = grid.v_node(grid.v_coord(iv, a));
      const double val = spec.evaluate({x.data(), static_cast<std::size_t>(grid.d)},
                                       {v.data(), static_cast<std::size_t>(grid.d)});
      out.values[ix * nvc + iv] = val;
      sum += val;
    }
  }
  const double mass = sum * grid.cell_volume();
  if (!(mass > 0.0)) throw ConfigError("initial density has zero grid mass");
  out.normalization = mass;
  for (double& val : out.values) val /= mass;
  return out;
}

GrowthBoundReport check_growth_bounds(const Model& model, int samples,
                                      std::uint64_t seed,
                                      double sample_radius) {
  const ModelSpec& s = model.spec();
  GrowthBoundReport rep;
  rep.samples = samples;

  auto extreme = [](double scalar, const std::vector<double>& field,
                    bool want_max) {
    if (field.empty()) return scalar;
    return want_max ? *std::max_element(field.begin(), field.end())
                    : *std::min_element(field.begin(), field.end());
  };
  const double cf_max = extreme(s.c_F, s.c_F_field, true);
  const double cf_min = extreme(s.c_F, s.c_F_field, false);
  const double cg_max = extreme(s.c_G, s.c_G_field, true);
  const double cg_min = extreme(s.c_G, s.c_G_field, false);

  rep.c_hamiltonian = std::max(s.c_H, 1.0 / s.c_H);
  rep.c_running = cf_min > 0.0 ? std::max(cf_max, 1.0 / cf_min) : kInfeasible;
  rep.c_terminal =
      cg_min > 0.0 ? std::max(cg_max / s.s, s.s / cg_min) : kInfeasible;

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const std::size_t n_cells =
      std::max(s.c_F_field.size(), s.c_G_field.size());
  const double rel = 1e-12;

  rep.hamiltonian_ok = rep.running_ok = rep.terminal_ok = true;
  rep.hamiltonian_lower_slack = kInfeasible;
  for (int i = 0; i < samples; ++i) {
    const double p = sample_radius * unit(rng);
    const double m = sample_radius * unit(rng);
    const std::size_t cell =
        n_cells == 0 ? 0 : static_cast<std::size_t>(unit(rng) * n_cells) % n_cells;

    // Hamiltonian: |p|^r / (c r) - C_H <= H <= c |p|^r / r + C_H.
    const double h = model.hamiltonian_of_norm(p);
    const double pr = std::pow(p, s.r);
    const double c = rep.c_hamiltonian;
    const double lower = pr / (c * s.r) - s.C_H;
    const double upper = c * pr / s.r + s.C_H;
    const double scale = 1.0 + std::abs(h);
    if (h < lower - rel * scale || h > upper + rel * scale) {
      rep.hamiltonian_ok = false;
    }
    rep.hamiltonian_lower_slack = std::min(rep.hamiltonian_lower_slack, h - lower);
    if (pr > 0.0) {
      rep.sampled_c_hamiltonian =
          std::max({rep.sampled_c_hamiltonian, s.r * (h - s.C_H) / pr,
                    pr / (s.r * (h + s.C_H))});
    }

    // Running cost: m^q / (c q) <= F <= c m^q / q.
    const double f = model.running_cost(m, cell);
    const double mq = std::pow(m, s.q);
    if (std::isfinite(rep.c_running)) {
      const double fl = mq / (rep.c_running * s.q);
      const double fu = rep.c_running * mq / s.q;
      if (f < fl - rel * (1.0 + f) || f > fu + rel * (1.0 + f)) {
        rep.running_ok = false;
      }
    } else {
      rep.running_ok = false;
    }
    if (mq > 0.0 && f > 0.0) {
      rep.sampled_c_running = std::max(
          {rep.sampled_c_running, s.q * f / mq, mq / (s.q * f)});
    }

    // Terminal cost: m^s / c <= G <= c m^s.
    const double g = model.terminal_cost(m, cell);
    const double ms = std::pow(m, s.s);
    if (std::isfinite(rep.c_terminal)) {
      const double gl = ms / rep.c_terminal;
      const double gu = rep.c_terminal * ms;
      if (g < gl - rel * (1.0 + g) || g > gu + rel * (1.0 + g)) {
        rep.terminal_ok = false;
      }
    } else {
      rep.terminal_ok = false;
    }
    if (ms > 0.0 && g > 0.0) {
      rep.sampled_c_terminal =
          std::max({rep.sampled_c_terminal, g / ms, ms / g});
    }
  }
  return rep;
}

}  // namespace kmfg
