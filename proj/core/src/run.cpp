#include "kmfg/run.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <ostream>
#include <sstream>

#include "kmfg/diagnostics.hpp"
#include "kmfg/errors.hpp"
#include "kmfg/oracle.hpp"
#include "kmfg/transport.hpp"

namespace kmfg {

namespace fs = std::filesystem;

namespace {

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(line);
  while (std::getline(in, item, ',')) out.push_back(item);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string field_header(const GridSpec& g) {
  std::string h = "t";
  if (g.d == 1) return h + ",x,v,value";
  return h + ",x1,x2,v1,v2,value";
}

double slice_time(const GridSpec& g, TimeLayout layout, int k) {
  return layout == TimeLayout::kNodes ? g.t_node(k) : (k + 0.5) * g.dt;
}

std::vector<double> read_text_rows(const fs::path& path, std::string& header,
                                   std::size_t columns) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + path.string());
  std::getline(in, header);
  std::vector<double> values;
  std::string line;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto cells = split(line);
    if (cells.size() != columns) {
      throw ConfigError(path.string() + " line " + std::to_string(line_no) +
                        ": expected " + std::to_string(columns) + " columns");
    }
    for (const auto& c : cells) {
      try {
        values.push_back(parse_double(c));
      } catch (const std::invalid_argument&) {
        throw ConfigError(path.string() + " line " + std::to_string(line_no) +
                          ": bad number '" + c + "'");
      }
    }
  }
  return values;
}

// Output directory staged next to the target and renamed into place.
class StagedOutput {
 public:
  explicit StagedOutput(fs::path target)
      : target_(std::move(target)), stage_(target_.string() + ".partial") {
    fs::remove_all(stage_);
    fs::create_directories(stage_);
  }
  ~StagedOutput() {
    std::error_code ec;
    if (!committed_) fs::remove_all(stage_, ec);
  }
  StagedOutput(const StagedOutput&) = delete;
  StagedOutput& operator=(const StagedOutput&) = delete;

  fs::path file(const std::string& name) const { return stage_ / name; }

  void commit() {
    if (fs::exists(target_)) {
      const bool previous_run = fs::exists(target_ / "manifest.txt");
      if (!previous_run && !fs::is_empty(target_)) {
        throw ConfigError("output directory " + target_.string() +
                          " exists and is not a previous run");
      }
      fs::remove_all(target_);
    }
    fs::rename(stage_, target_);
    committed_ = true;
  }

 private:
  fs::path target_;
  fs::path stage_;
  bool committed_ = false;
};

void write_manifest(const fs::path& path, const RunConfig& cfg,
                    Command command, double wall_seconds,
                    const std::vector<std::string>& notes) {
  auto out = open_out(path);
  static const char* names[] = {"solve", "verify", "oracle", "sweep"};
  out << "# kmfg run manifest\n";
  out << "# version = " << kVersion << "\n";
  out << "# command = " << names[static_cast<int>(command)] << "\n";
  out << "# wall_seconds = " << format_double(wall_seconds) << "\n";
  for (const auto& n : notes) out << "# " << n << "\n";
  out << format_config(cfg);
}

void write_flow(const StagedOutput& stage, const FlowState& flow) {
  write_field_csv(stage.file("fields_m.csv"), flow.m);
  for (int a = 0; a < flow.w.dims(); ++a) {
    write_field_csv(stage.file("fields_w" + std::to_string(a + 1) + ".csv"),
                    flow.w[a]);
  }
}

std::string ladder_param(double x) { return format_double(x); }

void append_probe_rows(const FlowState& flow, const ValueState& value,
                       const Model& model, const RunConfig& cfg,
                       std::vector<DiagnosticRow>& rows) {
  const GridSpec& g = flow.m.grid();
  for (auto preset : {CutoffPreset::kKinetic, CutoffPreset::kSpatial}) {
    const std::string tag = preset == CutoffPreset::kKinetic ? "kinetic" : "spatial";
    RegularityProbe probe;
    probe.preset = preset;
    probe.t0 = cfg.probe_t0;
    probe.ladder = cfg.probe_ladder;
    const RegularityResult r = regularity_quotient(flow, value, probe, model);
    for (std::size_t i = 0; i < r.delta.size(); ++i) {
      rows.push_back({"regularity_lhs_" + tag, ladder_param(r.delta[i]), r.lhs[i]});
      rows.push_back({"regularity_ratio_" + tag, ladder_param(r.delta[i]), r.ratio[i]});
    }
    rows.push_back({"regularity_slope_" + tag, "", r.slope});
    rows.push_back({"regularity_spread_" + tag, "", r.ratio_spread});
  }

  const CommutatorTable table =
      commutator_decay(flow.m, cfg.probe_epsilons, cfg.probe_deltas);
  for (const auto& e : table.entries) {
    const std::string p = "eps=" + format_double(e.epsilon) +
                          ";delta_x=" + format_double(e.delta_x);
    rows.push_back({"commutator_norm", p, e.norm_definition});
  }
  rows.push_back({"commutator_epsilon_slope", "", table.epsilon_slope});
  rows.push_back({"commutator_delta_slope", "", table.delta_slope});
  rows.push_back({"commutator_path_difference", "", table.max_path_difference});

  const std::vector<double> phi(g.cells_v(), 1.0);
  const std::vector<double> rho = velocity_average(value.u, phi);
  for (double h : cfg.probe_shifts) {
    rows.push_back({"velocity_average_modulus", ladder_param(h),
                    translation_modulus(g, value.u.slices(), rho, h)});
  }

  std::vector<double> sorted = value.u.values();
  std::nth_element(sorted.begin(), sorted.begin() + sorted.size() / 2, sorted.end());
  const double level = sorted[sorted.size() / 2];
  const SubsolutionReport t = truncation_check(value, level, model);
  rows.push_back({"truncation_violation_fraction", ladder_param(level), t.violation_fraction});
  rows.push_back({"truncation_terminal_violations", ladder_param(level),
                  static_cast<double>(t.terminal_violations)});
}

}  // namespace

Command parse_command(const std::string& name) {
  if (name == "solve") return Command::kSolve;
  if (name == "verify") return Command::kVerify;
  if (name == "oracle") return Command::kOracle;
  if (name == "sweep") return Command::kSweep;
  throw ConfigError("unknown subcommand '" + name +
                    "' (expected solve, verify, oracle or sweep)");
}

void write_field_csv(const fs::path& path, const ScalarField& f) {
  const GridSpec& g = f.grid();
  auto out = open_out(path);
  out << field_header(g) << "\n";
  const std::size_t nxc = g.cells_x();
  const std::size_t nvc = g.cells_v();
  std::string line;
  for (int k = 0; k < f.slices(); ++k) {
    const std::string t = format_double(slice_time(g, f.layout(), k));
    for (std::size_t ix = 0; ix < nxc; ++ix) {
      std::string xs;
      for (int a = 0; a < g.d; ++a) xs += "," + format_double(g.x_node(g.x_coord(ix, a)));
      for (std::size_t iv = 0; iv < nvc; ++iv) {
        line = t + xs;
        for (int a = 0; a < g.d; ++a) line += "," + format_double(g.velocity(iv, a));
        line += "," + format_double(f(k, ix, iv)) + "\n";
        out << line;
      }
    }
  }
}

ScalarField read_field_csv(const fs::path& path, const GridSpec& grid,
                           TimeLayout layout) {
  const std::size_t cols = 2 + 2 * static_cast<std::size_t>(grid.d);
  std::string header;
  const std::vector<double> v = read_text_rows(path, header, cols);
  if (header != field_header(grid)) {
    throw GridMismatch(path.string() + ": header '" + header + "' does not match the grid");
  }
  ScalarField f(grid, layout);
  if (v.size() != f.size() * cols) {
    throw GridMismatch(path.string() + ": row count does not match the grid");
  }
  const std::size_t nxc = grid.cells_x();
  const std::size_t nvc = grid.cells_v();
  auto close = [](double a, double b) { return std::abs(a - b) <= 1e-12 * (1.0 + std::abs(b)); };
  std::size_t row = 0;
  for (int k = 0; k < f.slices(); ++k) {
    for (std::size_t ix = 0; ix < nxc; ++ix) {
      for (std::size_t iv = 0; iv < nvc; ++iv, ++row) {
        const double* r = v.data() + row * cols;
        bool ok = close(r[0], slice_time(grid, layout, k));
        for (int a = 0; a < grid.d; ++a) {
          ok = ok && close(r[1 + a], grid.x_node(grid.x_coord(ix, a)));
          ok = ok && close(r[1 + grid.d + a], grid.velocity(iv, a));
        }
        if (!ok) {
          throw GridMismatch(path.string() + ": coordinates of row " +
                             std::to_string(row + 2) + " do not match the grid");
        }
        f(k, ix, iv) = r[cols - 1];
      }
    }
  }
  return f;
}

void write_convergence_csv(const fs::path& path, const ConvergenceRecord& record) {
  auto out = open_out(path);
  out << "iter,primal,dual,gap,feas,energy_residual,seconds\n";
  for (const auto& r : record.rows) {
    out << r.iter << "," << format_double(r.primal) << "," << format_double(r.dual)
        << "," << format_double(r.gap) << "," << format_double(r.feas) << ","
        << format_double(r.energy_residual) << "," << format_double(r.seconds) << "\n";
  }
}

std::vector<ConvergenceRow> read_convergence_csv(const fs::path& path) {
  std::string header;
  const std::vector<double> v = read_text_rows(path, header, 7);
  if (header != "iter,primal,dual,gap,feas,energy_residual,seconds") {
    throw ConfigError(path.string() + ": unexpected header '" + header + "'");
  }
  std::vector<ConvergenceRow> rows;
  for (std::size_t i = 0; i + 7 <= v.size(); i += 7) {
    rows.push_back({static_cast<int>(v[i]), v[i + 1], v[i + 2], v[i + 3],
                    v[i + 4], v[i + 5], v[i + 6]});
  }
  return rows;
}

void write_diagnostics_csv(const fs::path& path,
                           const std::vector<DiagnosticRow>& rows) {
  auto out = open_out(path);
  out << "name,param,value\n";
  for (const auto& r : rows) {
    out << r.name << "," << r.param << "," << format_double(r.value) << "\n";
  }
}

std::vector<DiagnosticRow> read_diagnostics_csv(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + path.string());
  std::string line;
  std::getline(in, line);
  if (line != "name,param,value") {
    throw ConfigError(path.string() + ": unexpected header '" + line + "'");
  }
  std::vector<DiagnosticRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split(line);
    if (cells.size() != 3) throw ConfigError(path.string() + ": malformed row '" + line + "'");
    try {
      rows.push_back({cells[0], cells[1], parse_double(cells[2])});
    } catch (const std::invalid_argument&) {
      throw ConfigError(path.string() + ": bad number '" + cells[2] + "'");
    }
  }
  return rows;
}

std::vector<DiagnosticRow> solution_diagnostics(const FlowState& flow,
                                                const ValueState& value,
                                                const Model& model) {
  std::vector<DiagnosticRow> rows;
  const double b = evaluate_B(flow, model);
  const double a = evaluate_A(value, flow, model);
  rows.push_back({"primal_objective", "", b});
  rows.push_back({"dual_objective", "", -a});
  rows.push_back({"duality_gap", "", duality_gap(a, b)});
  rows.push_back({"feasibility", "", feasibility(flow)});
  rows.push_back({"mass_drift", "", mass_drift(flow.m)});
  rows.push_back({"energy_equality", "", energy_equality_residual(flow, value, model)});
  const CouplingResiduals c = coupling_residuals(flow, value, model);
  rows.push_back({"coupling_running", "", c.running});
  rows.push_back({"coupling_terminal", "", c.terminal});
  rows.push_back({"coupling_flux", "", c.flux});
  const FenchelYoungReport fy = fenchel_young_residuals(flow, value, model);
  rows.push_back({"fenchel_young_running", "", fy.running_mean});
  rows.push_back({"fenchel_young_terminal", "", fy.terminal_mean});
  rows.push_back({"fenchel_young_min", "", fy.minimum});
  return rows;
}

int run(Command command, const RunConfig& cfg, std::ostream& err) {
  try {
    const GridSpec grid = cfg.grid();
    const Model model(cfg.model);
    build_initial_density(grid, cfg.model.m0);  // validates m0 before any work
    StagedOutput stage(cfg.output_dir);
    std::vector<std::string> notes;
    int status = kExitOk;
    const auto start = std::chrono::steady_clock::now();

    switch (command) {
      case Command::kSolve:
      case Command::kSweep: {
        const SolveResult res = pdhg_solve(model, grid, cfg.solver);
        notes.push_back("op_norm = " + format_double(res.op_norm));
        write_convergence_csv(stage.file("convergence.csv"), res.record);
        write_flow(stage, res.flow);
        write_field_csv(stage.file("fields_u.csv"), res.value.u);
        auto rows = solution_diagnostics(res.flow, res.value, model);
        rows.push_back({"iterations", "", static_cast<double>(res.record.iterations)});
        rows.push_back({"converged", "", res.record.converged ? 1.0 : 0.0});
        rows.push_back({"tau", "", res.tau});
        rows.push_back({"sigma", "", res.sigma});
        if (command == Command::kSweep) append_probe_rows(res.flow, res.value, model, cfg, rows);
        write_diagnostics_csv(stage.file("diagnostics.csv"), rows);
        if (!res.record.converged) {
          err << "kmfg: solver stopped at max_iter without reaching tolerance\n";
          status = kExitNumerical;
        }
        break;
      }
      case Command::kVerify: {
        if (cfg.input_dir.empty()) throw ConfigError("verify needs run.input_dir");
        const fs::path in(cfg.input_dir);
        std::ifstream mf(in / "manifest.txt", std::ios::binary);
        if (!mf) throw ConfigError("no manifest.txt in " + in.string());
        std::stringstream text;
        text << mf.rdbuf();
        const RunConfig stored = parse_config(text.str());
        const GridSpec g = stored.grid();
        const Model stored_model(stored.model);
        FlowState flow;
        flow.m = read_field_csv(in / "fields_m.csv", g, TimeLayout::kNodes);
        flow.w = VectorField(g);
        for (int a = 0; a < g.d; ++a) {
          flow.w[a] = read_field_csv(in / ("fields_w" + std::to_string(a + 1) + ".csv"),
                                     g, TimeLayout::kIntervals);
        }
        const ScalarField u = read_field_csv(in / "fields_u.csv", g, TimeLayout::kNodes);
        const ValueState value = recover_value_state(u, stored_model);
        auto rows = solution_diagnostics(flow, value, stored_model);
        append_probe_rows(flow, value, stored_model, stored, rows);
        write_diagnostics_csv(stage.file("diagnostics.csv"), rows);
        notes.push_back("input_dir = " + in.string());
        break;
      }
      case Command::kOracle: {
        const OracleResult res = oracle_solve(model, grid);
        write_flow(stage, res.flow);
        std::vector<DiagnosticRow> rows{
            {"oracle_objective", "", res.objective},
            {"oracle_stationarity", "", res.stationarity},
            {"feasibility", "", res.feasibility},
            {"mass_drift", "", mass_drift(res.flow.m)},
            {"newton_steps", "", static_cast<double>(res.newton_steps)}};
        write_diagnostics_csv(stage.file("diagnostics.csv"), rows);
        break;
      }
    }
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    write_manifest(stage.file("manifest.txt"), cfg, command, wall, notes);
    stage.commit();
    return status;
  } catch (const ConfigError& e) {
    err << "kmfg: configuration error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const GridMismatch& e) {
    err << "kmfg: grid mismatch: " << e.what() << "\n";
    return kExitUsage;
  } catch (const NumericalError& e) {
    err << "kmfg: numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const ModelError& e) {
    err << "kmfg: model error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    err << "kmfg: " << e.what() << "\n";
    return kExitNumerical;
  }
}

}  // namespace kmfg
