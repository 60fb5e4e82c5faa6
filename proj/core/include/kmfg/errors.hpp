#pragma once

#include <stdexcept>
#include <string>

namespace kmfg {

/// Invalid grid, model or run parameters. Maps to CLI exit status 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Evaluation of model data failed (non-finite samples, bad domain).
class ModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Iterative method failed: divergence, non-convergence, singular system.
/// Maps to CLI exit status 1.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Two fields or states were built on different grids.
class GridMismatch : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace kmfg
