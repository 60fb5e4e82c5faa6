// Command-line front end: kmfg <solve|verify|oracle|sweep> [config] [options]
#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

#include "kmfg/config.hpp"
#include "kmfg/errors.hpp"
#include "kmfg/run.hpp"

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw kmfg::ConfigError("cannot read config file " + path);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Kinetic mean field game solver"};
  app.set_version_flag("--version", kmfg::kVersion);
  std::string command;
  std::string config_path;
  std::vector<std::string> overrides;
  std::string output;
  std::string input;
  app.add_option("command", command, "solve, verify, oracle or sweep")->required();
  app.add_option("config", config_path, "key = value configuration file");
  app.add_option("--set", overrides, "override one key, e.g. --set grid.nx=32");
  app.add_option("-o,--output", output, "output directory (run.output_dir)");
  app.add_option("-i,--input", input, "previous run directory for verify (run.input_dir)");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kmfg::kExitUsage;
  }

  try {
    const kmfg::Command cmd = kmfg::parse_command(command);
    std::string text = config_path.empty() ? std::string() : slurp(config_path);
    for (const auto& o : overrides) text += "\n" + o;
    if (!output.empty()) text += "\nrun.output_dir = " + output;
    if (!input.empty()) text += "\nrun.input_dir = " + input;
    const kmfg::RunConfig cfg = kmfg::parse_config(text);
    return kmfg::run(cmd, cfg, std::cerr);
  } catch (const kmfg::ConfigError& e) {
    std::cerr << "kmfg: configuration error: " << e.what() << "\n";
    return kmfg::kExitUsage;
  }
}
