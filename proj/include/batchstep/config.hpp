#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "batchstep/harness.hpp"
#include "batchstep/problems.hpp"
#include "batchstep/theory.hpp"

namespace batchstep {

// Flat `key = value` document. `#` starts a comment anywhere on a line.
// Keys are validated against the known set at parse time; a repeated key or an
// unknown key is a ConfigError naming the line.
class Config {
 public:
  static Config parse(std::string_view text, std::string_view source = "<config>");
  static Config load(const std::filesystem::path& path);

  bool has(std::string_view key) const;
  void set(std::string_view key, std::string value);

  const std::string& get_string(std::string_view key) const;
  double get_double(std::string_view key) const;
  std::size_t get_size(std::string_view key) const;
  std::uint64_t get_u64(std::string_view key) const;
  std::vector<double> get_doubles(std::string_view key) const;
  std::vector<std::size_t> get_sizes(std::string_view key) const;

  std::string get_string_or(std::string_view key, std::string fallback) const;
  double get_double_or(std::string_view key, double fallback) const;
  std::size_t get_size_or(std::string_view key, std::size_t fallback) const;
  std::uint64_t get_u64_or(std::string_view key, std::uint64_t fallback) const;

  const std::map<std::string, std::string, std::less<>>& entries() const { return entries_; }

  static bool known_key(std::string_view key);

 private:
  std::map<std::string, std::string, std::less<>> entries_;
};

FiniteSumProblem problem_from_config(const Config& cfg);

// problem.x0 is a scalar (broadcast) or a list of d values; default 1.0.
Vector x0_from_config(const Config& cfg, std::size_t d);

// optimizer.* plus x0; batch_size from run.batch_size when present.
RunSpec run_spec_from_config(const Config& cfg, const FiniteSumProblem& problem);

// Reads `<prefix>.key`, falling back to `theory.key` for block prefixes such as
// "theory.sgd". g_mode = g1 derives G = L n sqrt(d D); explicit reads G.
TheoryConstants theory_from_config(const Config& cfg, std::string_view prefix = "theory");

}  // namespace batchstep
