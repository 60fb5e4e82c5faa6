#include "kmfg/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "kmfg/errors.hpp"

namespace kmfg {

namespace {

struct Where {
  int line = 0;
  int column = 0;
};

[[noreturn]] void fail(const Where& at, const std::string& what) {
  throw ConfigError("line " + std::to_string(at.line) + ", column " +
                    std::to_string(at.column) + ": " + what);
}

std::string trim(const std::string& s, std::size_t& offset) {
  std::size_t b = 0;
  while (b < s.size() && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r')) ++b;
  std::size_t e = s.size();
  while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r')) --e;
  offset = b;
  return s.substr(b, e - b);
}

double number(const std::string& key, const std::string& v, const Where& at) {
  try {
    return parse_double(v);
  } catch (const std::invalid_argument&) {
    fail(at, key + ": expected a decimal number, got '" + v + "'");
  }
}

long integer(const std::string& key, const std::string& v, const Where& at) {
  long out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) {
    fail(at, key + ": expected an integer, got '" + v + "'");
  }
  return out;
}

std::vector<double> number_list(const std::string& key, const std::string& v,
                                 const Where& at) {
  std::vector<double> out;
  std::size_t start = 0;
  while (start <= v.size()) {
    const std::size_t comma = v.find(',', start);
    const std::string item = v.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
    std::size_t off = 0;
    const std::string t = trim(item, off);
    if (t.empty()) fail(at, key + ": empty list entry");
    out.push_back(number(key, t, at));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

bool boolean(const std::string& key, const std::string& v, const Where& at) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  fail(at, key + ": expected true or false, got '" + v + "'");
}

std::string join(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i > 0) out += ", ";
    out += format_double(v[i]);
  }
  return out;
}

void require(bool ok, const std::string& key, const char* rule,
             const Where& at) {
  if (!ok) fail(at, key + " " + rule);
}

struct Key {
  std::string name;
  std::function<void(RunConfig&, const std::string&, const Where&)> set;
  std::function<std::string(const RunConfig&)> get;
};

// Key helpers: integer / real fields with a range predicate.
template <class Get>
Key int_key(std::string name, Get field, long lo, const char* rule,
            long hi = std::numeric_limits<int>::max()) {
  return {name,
          [=](RunConfig& c, const std::string& v, const Where& at) {
            const long x = integer(name, v, at);
            require(x >= lo && x <= hi, name, rule, at);
            field(c) = static_cast<int>(x);
          },
          [=](const RunConfig& c) { return std::to_string(field(const_cast<RunConfig&>(c))); }};
}

template <class Get, class Pred>
Key real_key(std::string name, Get field, Pred ok, const char* rule) {
  return {name,
          [=](RunConfig& c, const std::string& v, const Where& at) {
            const double x = number(name, v, at);
            require(std::isfinite(x) && ok(x), name, rule, at);
            field(c) = x;
          },
          [=](const RunConfig& c) { return format_double(field(const_cast<RunConfig&>(c))); }};
}

template <class Get, class Pred>
Key list_key(std::string name, Get field, Pred ok, const char* rule) {
  return {name,
          [=](RunConfig& c, const std::string& v, const Where& at) {
            const auto xs = number_list(name, v, at);
            for (double x : xs) require(std::isfinite(x) && ok(x), name, rule, at);
            field(c) = xs;
          },
          [=](const RunConfig& c) { return join(field(const_cast<RunConfig&>(c))); }};
}

const std::vector<Key>& keys() {
  static const std::vector<Key> table = [] {
    auto positive = [](double x) { return x > 0.0; };
    auto non_negative = [](double x) { return x >= 0.0; };
    auto above_one = [](double x) { return x > 1.0; };
    std::vector<Key> k;
    k.push_back(int_key("grid.d", [](RunConfig& c) -> int& { return c.d; }, 1, "must be 1 or 2", 2));
    k.push_back(int_key("grid.nx", [](RunConfig& c) -> int& { return c.nx; }, 2, "must be >= 2"));
    k.push_back(int_key("grid.nv", [](RunConfig& c) -> int& { return c.nv; }, 2, "must be >= 2"));
    k.push_back(int_key("grid.nt", [](RunConfig& c) -> int& { return c.nt; }, 2, "must be >= 2"));
    k.push_back(real_key("grid.T", [](RunConfig& c) -> double& { return c.T; }, positive, "must be > 0"));
    k.push_back(real_key("grid.v_max", [](RunConfig& c) -> double& { return c.v_max; }, positive, "must be > 0"));

    k.push_back(real_key("model.q", [](RunConfig& c) -> double& { return c.model.q; }, above_one, "must be > 1"));
    k.push_back(real_key("model.s", [](RunConfig& c) -> double& { return c.model.s; }, above_one, "must be > 1"));
    k.push_back(real_key("model.r", [](RunConfig& c) -> double& { return c.model.r; }, above_one, "must be > 1"));
    k.push_back(real_key("model.c_F", [](RunConfig& c) -> double& { return c.model.c_F; }, non_negative, "must be >= 0"));
    k.push_back(real_key("model.c_G", [](RunConfig& c) -> double& { return c.model.c_G; }, non_negative, "must be >= 0"));
    k.push_back(real_key("model.c_H", [](RunConfig& c) -> double& { return c.model.c_H; }, positive, "must be > 0"));
    k.push_back(real_key("model.C_H", [](RunConfig& c) -> double& { return c.model.C_H; }, non_negative, "must be >= 0"));

    k.push_back({"m0.profile",
                 [](RunConfig& c, const std::string& v, const Where& at) {
                   try {
                     c.model.m0.x_profile = parse_x_profile(v);
                   } catch (const ConfigError& e) {
                     fail(at, std::string("m0.profile: ") + e.what());
                   }
                 },
                 [](const RunConfig& c) { return to_string(c.model.m0.x_profile); }});
    k.push_back(real_key("m0.amplitude", [](RunConfig& c) -> double& { return c.model.m0.x_amplitude; },
                         [](double x) { return x >= 0.0 && x < 1.0; }, "must lie in [0, 1)"));
    k.push_back(list_key("m0.centers", [](RunConfig& c) -> std::vector<double>& { return c.model.m0.x_centers; },
                         [](double) { return true; }, "must be finite"));
    k.push_back(real_key("m0.width", [](RunConfig& c) -> double& { return c.model.m0.x_width; }, positive, "must be > 0"));
    k.push_back(real_key("m0.v_center", [](RunConfig& c) -> double& { return c.model.m0.v_center; },
                         [](double) { return true; }, "must be finite"));
    k.push_back(real_key("m0.v_sigma", [](RunConfig& c) -> double& { return c.model.m0.v_sigma; }, positive, "must be > 0"));
    k.push_back(real_key("m0.tail_tol", [](RunConfig& c) -> double& { return c.model.m0.tail_tol; }, positive, "must be > 0"));

    k.push_back(real_key("solver.tau", [](RunConfig& c) -> double& { return c.solver.tau; }, non_negative,
                         "must be >= 0 (0 selects the automatic step)"));
    k.push_back(real_key("solver.sigma", [](RunConfig& c) -> double& { return c.solver.sigma; }, non_negative,
                         "must be >= 0 (0 selects the automatic step)"));
    k.push_back(real_key("solver.step_ratio", [](RunConfig& c) -> double& { return c.solver.step_ratio; }, positive, "must be > 0"));
    k.push_back(real_key("solver.theta", [](RunConfig& c) -> double& { return c.solver.theta; },
                         [](double x) { return x >= 0.0 && x <= 1.0; }, "must lie in [0, 1]"));
    k.push_back(int_key("solver.max_iter", [](RunConfig& c) -> int& { return c.solver.max_iter; }, 1, "must be >= 1"));
    k.push_back(real_key("solver.tol_gap", [](RunConfig& c) -> double& { return c.solver.tol_gap; }, positive, "must be > 0"));
    k.push_back(real_key("solver.tol_feas", [](RunConfig& c) -> double& { return c.solver.tol_feas; }, positive, "must be > 0"));
    k.push_back(real_key("solver.prox_tol", [](RunConfig& c) -> double& { return c.solver.prox_tol; }, positive, "must be > 0"));
    k.push_back(int_key("solver.log_every", [](RunConfig& c) -> int& { return c.solver.log_every; }, 1, "must be >= 1"));
    k.push_back({"solver.init",
                 [](RunConfig& c, const std::string& v, const Where& at) {
                   if (v == "free_streaming") {
                     c.solver.init = InitMode::kFreeStreaming;
                   } else if (v == "random") {
                     c.solver.init = InitMode::kRandom;
                   } else {
                     fail(at, "solver.init must be free_streaming or random, got '" + v + "'");
                   }
                 },
                 [](const RunConfig& c) {
                   return std::string(c.solver.init == InitMode::kRandom ? "random" : "free_streaming");
                 }});
    k.push_back({"solver.wall_clock",
                 [](RunConfig& c, const std::string& v, const Where& at) {
                   c.solver.record_wall_clock = boolean("solver.wall_clock", v, at);
                 },
                 [](const RunConfig& c) { return std::string(c.solver.record_wall_clock ? "true" : "false"); }});

    k.push_back(real_key("probe.t0", [](RunConfig& c) -> double& { return c.probe_t0; }, positive, "must be > 0"));
    k.push_back(list_key("probe.ladder", [](RunConfig& c) -> std::vector<double>& { return c.probe_ladder; },
                         positive, "entries must be > 0"));
    k.push_back(list_key("probe.epsilons", [](RunConfig& c) -> std::vector<double>& { return c.probe_epsilons; },
                         positive, "entries must be > 0"));
    k.push_back(list_key("probe.deltas", [](RunConfig& c) -> std::vector<double>& { return c.probe_deltas; },
                         positive, "entries must be > 0"));
    k.push_back(list_key("probe.shifts", [](RunConfig& c) -> std::vector<double>& { return c.probe_shifts; },
                         positive, "entries must be > 0"));

    auto text_key = [](std::string name, std::string RunConfig::*field, bool allow_empty) {
      return Key{name,
                 [=](RunConfig& c, const std::string& v, const Where& at) {
                   if (v.empty() && !allow_empty) fail(at, name + " must not be empty");
                   c.*field = v;
                 },
                 [=](const RunConfig& c) { return c.*field; }};
    };
    k.push_back(text_key("run.name", &RunConfig::run_name, false));
    k.push_back(text_key("run.output_dir", &RunConfig::output_dir, false));
    k.push_back(text_key("run.input_dir", &RunConfig::input_dir, true));
    k.push_back({"run.seed",
                 [](RunConfig& c, const std::string& v, const Where& at) {
                   std::uint64_t x = 0;
                   const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
                   if (ec != std::errc() || p != v.data() + v.size()) {
                     fail(at, "run.seed: expected a non-negative integer, got '" + v + "'");
                   }
                   c.seed = x;
                   c.solver.seed = x;
                 },
                 [](const RunConfig& c) { return std::to_string(c.seed); }});
    return k;
  }();
  return table;
}

}  // namespace

GridSpec RunConfig::grid() const { return build_grid(d, nx, nv, nt, T, v_max); }

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(const std::string& text) {
  double out = 0.0;
  const char* b = text.data();
  const char* e = b + text.size();
  if (b != e && *b == '+') ++b;
  const auto [p, ec] = std::from_chars(b, e, out);
  if (b == e || ec != std::errc() || p != e) {
    throw std::invalid_argument("not a decimal number: '" + text + "'");
  }
  return out;
}

RunConfig parse_config(const std::string& text) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::size_t hash = raw.find('#');
    const std::string line = hash == std::string::npos ? raw : raw.substr(0, hash);
    std::size_t key_off = 0;
    if (trim(line, key_off).empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      fail({line_no, static_cast<int>(key_off) + 1}, "expected 'key = value'");
    }
    const std::string key = trim(line.substr(0, eq), key_off);
    std::size_t val_off = 0;
    const std::string value = trim(line.substr(eq + 1), val_off);
    const Where key_at{line_no, static_cast<int>(key_off) + 1};
    const Where val_at{line_no, static_cast<int>(eq + 1 + val_off) + 1};
    if (key.empty()) fail(key_at, "missing key before '='");
    const Key* match = nullptr;
    for (const Key& k : keys()) {
      if (k.name == key) match = &k;
    }
    if (match == nullptr) fail(key_at, "unknown key '" + key + "'");
    match->set(cfg, value, val_at);
  }
  return cfg;
}

std::string format_config(const RunConfig& config) {
  std::string out;
  for (const Key& k : keys()) out += k.name + " = " + k.get(config) + "\n";
  return out;
}

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const Key& k : keys()) out.push_back(k.name);
  return out;
}

}  // namespace kmfg
