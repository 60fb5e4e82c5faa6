#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "kmfg/diagnostics.hpp"
#include "kmfg/grid.hpp"
#include "kmfg/model.hpp"
#include "kmfg/solver.hpp"

namespace kmfg {

/// Everything a batch run needs. Defaults are the desk instance: d = 1,
/// nx = nv = nt = 16, T = 1, v_max = 2, quadratic data with unit
/// coefficients.
struct RunConfig {
  int d = 1;
  int nx = 16;
  int nv = 16;
  int nt = 16;
  double T = 1.0;
  double v_max = 2.0;

  ModelSpec model;
  SolverConfig solver;

  /// Regularity probe onset and ladder (units of dv).
  double probe_t0 = 0.75;
  std::vector<double> probe_ladder{0.25, 0.5, 1.0, 2.0};
  /// Commutator ladders (absolute widths).
  std::vector<double> probe_epsilons{0.1, 0.2, 0.4};
  std::vector<double> probe_deltas{0.05, 0.1, 0.2};
  /// Translation-modulus ladder for velocity averages (torus units).
  std::vector<double> probe_shifts{0.0625, 0.125, 0.25};

  std::string run_name = "run";
  std::string output_dir = "kmfg_out";
  /// Directory of a previous run, read by `verify`.
  std::string input_dir;
  std::uint64_t seed = 1;

  GridSpec grid() const;
};

/// Parses `key = value` lines; '#' starts a comment, blank lines are
/// ignored, lists are comma separated. Unknown keys, malformed numbers and
/// out-of-range values raise ConfigError tagged "line L, column C" (range
/// errors name the key).
RunConfig parse_config(const std::string& text);

/// Every key with its resolved value, numbers printed with 17 significant
/// digits, so parse_config(format_config(c)) reproduces c exactly.
std::string format_config(const RunConfig& config);

/// Names of all recognised keys, in format order.
std::vector<std::string> config_keys();

/// Decimal rendering with 17 significant digits, used by every artifact.
std::string format_double(double v);

/// Strict decimal parse of a whole string; throws std::invalid_argument.
double parse_double(const std::string& text);

}  // namespace kmfg
