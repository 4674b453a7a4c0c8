#include "batchstep/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "batchstep/errors.hpp"

namespace batchstep {

namespace {

const std::set<std::string, std::less<>>& known_keys() {
  static const std::set<std::string, std::less<>> keys = [] {
    std::set<std::string, std::less<>> k = {
        "problem.name", "problem.n", "problem.d", "problem.lambda", "problem.seed",
        "problem.x0", "problem.center_scale",
        "optimizer.kind", "optimizer.alpha", "optimizer.alpha_schedule", "optimizer.beta",
        "optimizer.beta_cap", "optimizer.beta_schedule", "optimizer.gamma", "optimizer.delta",
        "optimizer.zeta", "optimizer.h0", "optimizer.bound_lo", "optimizer.bound_hi",
        "optimizer.estimator", "optimizer.divergence_guard",
        "run.steps", "run.batch_size", "run.seed",
        "sweep.batch_sizes", "sweep.trials", "sweep.max_steps", "sweep.epsilon", "sweep.seed",
        "sweep.workers",
        "validate.K_list", "validate.g_mode",
        "predict.grid_points"};
    const char* theory[] = {"d",     "D",  "L",       "n",       "alpha",  "beta", "b",
                            "gamma", "H",  "h0star",  "epsilon", "regime", "g_mode", "G",
                            "A",     "B",  "C"};
    for (const char* t : theory) {
      k.insert(fmt::format("theory.{}", t));
      for (const char* block : {"sgd", "nm", "adam"}) k.insert(fmt::format("theory.{}.{}", block, t));
    }
    return k;
  }();
  return keys;
}

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

double to_double(std::string_view key, std::string_view text) {
  text = trim(text);
  double value = 0.0;
  const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || end != text.data() + text.size() || text.empty()) {
    throw ConfigError(fmt::format("{}: '{}' is not a number", key, text));
  }
  return value;
}

std::uint64_t to_u64(std::string_view key, std::string_view text) {
  text = trim(text);
  std::uint64_t value = 0;
  const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || end != text.data() + text.size() || text.empty()) {
    throw ConfigError(fmt::format("{}: '{}' is not a nonnegative integer", key, text));
  }
  return value;
}

std::vector<std::string_view> split_list(std::string_view text) {
  text = trim(text);
  if (!text.empty() && text.front() == '[' && text.back() == ']') {
    text = trim(text.substr(1, text.size() - 2));
  }
  std::vector<std::string_view> parts;
  while (!text.empty()) {
    const auto comma = text.find(',');
    parts.push_back(trim(text.substr(0, comma)));
    if (comma == std::string_view::npos) break;
    text = text.substr(comma + 1);
  }
  return parts;
}

}  // namespace

bool Config::known_key(std::string_view key) { return known_keys().count(key) > 0; }

Config Config::parse(std::string_view text, std::string_view source) {
  Config cfg;
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);

    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError(fmt::format("{}:{}: expected key = value", source, line_no));
    }
    const std::string_view key = trim(line.substr(0, eq));
    const std::string_view value = trim(line.substr(eq + 1));
    if (!known_key(key)) {
      throw ConfigError(fmt::format("{}:{}: unknown key '{}'", source, line_no, key));
    }
    if (cfg.entries_.count(key)) {
      throw ConfigError(fmt::format("{}:{}: duplicate key '{}'", source, line_no, key));
    }
    cfg.entries_.emplace(std::string(key), std::string(value));
  }
  return cfg;
}

Config Config::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot read config '{}'", path.string()));
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse(buffer.str(), path.string());
}

bool Config::has(std::string_view key) const { return entries_.count(key) > 0; }

void Config::set(std::string_view key, std::string value) {
  if (!known_key(key)) throw ConfigError(fmt::format("unknown key '{}'", key));
  entries_.insert_or_assign(std::string(key), std::move(value));
}

const std::string& Config::get_string(std::string_view key) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) throw ConfigError(fmt::format("missing required key '{}'", key));
  return it->second;
}

double Config::get_double(std::string_view key) const {
  return to_double(key, get_string(key));
}

std::size_t Config::get_size(std::string_view key) const {
  return static_cast<std::size_t>(to_u64(key, get_string(key)));
}

std::uint64_t Config::get_u64(std::string_view key) const { return to_u64(key, get_string(key)); }

std::vector<double> Config::get_doubles(std::string_view key) const {
  std::vector<double> out;
  for (std::string_view part : split_list(get_string(key))) out.push_back(to_double(key, part));
  if (out.empty()) throw ConfigError(fmt::format("{}: empty list", key));
  return out;
}

std::vector<std::size_t> Config::get_sizes(std::string_view key) const {
  std::vector<std::size_t> out;
  for (std::string_view part : split_list(get_string(key))) {
    out.push_back(static_cast<std::size_t>(to_u64(key, part)));
  }
  if (out.empty()) throw ConfigError(fmt::format("{}: empty list", key));
  return out;
}

std::string Config::get_string_or(std::string_view key, std::string fallback) const {
  return has(key) ? get_string(key) : fallback;
}

double Config::get_double_or(std::string_view key, double fallback) const {
  return has(key) ? get_double(key) : fallback;
}

std::size_t Config::get_size_or(std::string_view key, std::size_t fallback) const {
  return has(key) ? get_size(key) : fallback;
}

std::uint64_t Config::get_u64_or(std::string_view key, std::uint64_t fallback) const {
  return has(key) ? get_u64(key) : fallback;
}

FiniteSumProblem problem_from_config(const Config& cfg) {
  ProblemParams params;
  params.n = cfg.get_size_or("problem.n", params.n);
  params.d = cfg.get_size_or("problem.d", params.d);
  params.lambda = cfg.get_double_or("problem.lambda", params.lambda);
  params.center_scale = cfg.get_double_or("problem.center_scale", params.center_scale);
  params.seed = cfg.get_u64_or("problem.seed", params.seed);
  return builtin_problem(cfg.get_string("problem.name"), params);
}

Vector x0_from_config(const Config& cfg, std::size_t d) {
  const auto dim = static_cast<Eigen::Index>(d);
  if (!cfg.has("problem.x0")) return Vector::Constant(dim, 1.0);
  const std::vector<double> values = cfg.get_doubles("problem.x0");
  if (values.size() == 1) return Vector::Constant(dim, values[0]);
  if (values.size() != d) {
    throw ConfigError(fmt::format("problem.x0 has {} entries, expected 1 or {}", values.size(), d));
  }
  return Eigen::Map<const Vector>(values.data(), dim);
}

RunSpec run_spec_from_config(const Config& cfg, const FiniteSumProblem& problem) {
  RunSpec spec;
  spec.kind = parse_optimizer_kind(cfg.get_string("optimizer.kind"));
  HyperParams& hp = spec.hp;
  hp.alpha = cfg.get_double_or("optimizer.alpha", hp.alpha);
  if (cfg.has("optimizer.alpha_schedule")) {
    hp.alpha_schedule = parse_alpha_schedule(cfg.get_string("optimizer.alpha_schedule"));
  }
  hp.beta = cfg.get_double_or("optimizer.beta", hp.beta);
  hp.beta_cap = cfg.get_double_or("optimizer.beta_cap", hp.beta_cap);
  if (cfg.has("optimizer.beta_schedule")) {
    hp.beta_schedule = parse_beta_schedule(cfg.get_string("optimizer.beta_schedule"));
  }
  hp.gamma = cfg.get_double_or("optimizer.gamma", hp.gamma);
  hp.delta = cfg.get_double_or("optimizer.delta", hp.delta);
  hp.zeta = cfg.get_double_or("optimizer.zeta", hp.zeta);
  if (cfg.has("optimizer.h0")) {
    const std::vector<double> h0 = cfg.get_doubles("optimizer.h0");
    const auto dim = static_cast<Eigen::Index>(problem.d());
    hp.h0 = h0.size() == 1 ? Vector::Constant(dim, h0[0])
                           : Vector(Eigen::Map<const Vector>(h0.data(), static_cast<Eigen::Index>(h0.size())));
  }
  hp.bound_lo = cfg.get_double_or("optimizer.bound_lo", hp.bound_lo);
  hp.bound_hi = cfg.get_double_or("optimizer.bound_hi", hp.bound_hi);
  if (cfg.has("optimizer.estimator")) {
    hp.estimator = parse_estimator(cfg.get_string("optimizer.estimator"));
  }
  hp.divergence_guard = cfg.get_double_or("optimizer.divergence_guard", hp.divergence_guard);
  constrain_for(spec.kind, hp).validate(problem.d());

  spec.x0 = x0_from_config(cfg, problem.d());
  spec.batch_size = cfg.get_size_or("run.batch_size", 1);
  return spec;
}

TheoryConstants theory_from_config(const Config& cfg, std::string_view prefix) {
  auto key_for = [&](std::string_view name) {
    std::string own = fmt::format("{}.{}", prefix, name);
    if (cfg.has(own) || prefix == "theory") return own;
    return fmt::format("theory.{}", name);
  };
  auto num = [&](std::string_view name) { return cfg.get_double(key_for(name)); };
  auto num_or = [&](std::string_view name, double fallback) {
    return cfg.get_double_or(key_for(name), fallback);
  };

  TheoryConstants tc;
  tc.d = cfg.get_size(key_for("d"));
  tc.n = cfg.get_size(key_for("n"));
  tc.D = num("D");
  tc.L = num("L");
  tc.alpha = num("alpha");
  tc.beta = num_or("beta", 0.0);
  tc.b = num_or("b", 0.0);
  tc.gamma = num_or("gamma", 0.0);
  tc.H = num_or("H", 1.0);
  tc.h0star = num_or("h0star", 1.0);
  tc.epsilon = num("epsilon");

  const std::string mode = cfg.get_string_or(key_for("g_mode"), "g1");
  if (mode == "g1") {
    tc.G = g_from_g1(tc.L, tc.n, tc.d, tc.D);
  } else if (mode == "explicit") {
    tc.G = num("G");
  } else {
    throw ConfigError(fmt::format("{}: expected g1 or explicit, got '{}'", key_for("g_mode"), mode));
  }
  return tc;
}

}  // namespace batchstep
