#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "kmfg/config.hpp"
#include "kmfg/grid.hpp"
#include "kmfg/solver.hpp"

namespace kmfg {

inline constexpr const char* kVersion = "0.1.0";

enum class Command { kSolve, kVerify, kOracle, kSweep };

Command parse_command(const std::string& name);

/// Process exit statuses.
inline constexpr int kExitOk = 0;
inline constexpr int kExitNumerical = 1;
inline constexpr int kExitUsage = 2;

struct DiagnosticRow {
  std::string name;
  std::string param;
  double value = 0.0;
};

/// Runs one subcommand and writes its artifacts into config.output_dir via a
/// sibling temporary directory that is renamed into place on success.
/// Errors are reported on `err` and mapped to exit statuses: ConfigError and
/// grid mismatches give 2, numerical and model failures give 1. A solve that
/// stops at max_iter still writes its artifacts and returns 1.
int run(Command command, const RunConfig& config, std::ostream& err);

// CSV artifacts. Every number is written with 17 significant digits.
void write_field_csv(const std::filesystem::path& path, const ScalarField& f);
/// Reads a field written by write_field_csv; coordinates must match the
/// grid (GridMismatch otherwise).
ScalarField read_field_csv(const std::filesystem::path& path,
                           const GridSpec& grid, TimeLayout layout);
void write_convergence_csv(const std::filesystem::path& path,
                           const ConvergenceRecord& record);
std::vector<ConvergenceRow> read_convergence_csv(
    const std::filesystem::path& path);
void write_diagnostics_csv(const std::filesystem::path& path,
                           const std::vector<DiagnosticRow>& rows);
std::vector<DiagnosticRow> read_diagnostics_csv(
    const std::filesystem::path& path);

/// Diagnostics common to solve and verify: objectives, gap, feasibility,
/// mass drift, energy equality, coupling and Fenchel-Young residuals.
std::vector<DiagnosticRow> solution_diagnostics(const FlowState& flow,
                                                const ValueState& value,
                                                const Model& model);

}  // namespace kmfg
