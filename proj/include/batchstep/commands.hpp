#pragma once

#include <cstdint>
#include <exception>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "batchstep/config.hpp"

namespace batchstep {

// Ordered key=value lines. Keys appear in the order they were added, which is
// fixed per command, so identical inputs give byte-identical documents.
class ReportDocument {
 public:
  void add(std::string key, std::string value);
  void add(std::string key, double value);
  void add(std::string key, std::size_t value);
  void add(std::string key, bool value);

  const std::vector<std::pair<std::string, std::string>>& lines() const { return lines_; }
  std::optional<std::string> find(std::string_view key) const;
  std::string text() const;

 private:
  std::vector<std::pair<std::string, std::string>> lines_;
};

// 17 significant digits; NaN prints as NA.
std::string format_number(double value);

enum ExitCode : int {
  kExitOk = 0,
  kExitConfig = 1,
  kExitInfeasibleBeta = 2,
  kExitDivergence = 3,
  kExitMonitorFailure = 4,
};

struct CommandOptions {
  std::filesystem::path out_dir = "out";
  std::size_t workers = 0;  // 0: config value or hardware concurrency
};

struct CommandResult {
  ReportDocument report;
  int exit_code = kExitOk;
};

CommandResult cmd_predict(const Config& cfg, const CommandOptions& opts);
CommandResult cmd_run(const Config& cfg, const CommandOptions& opts);
CommandResult cmd_sweep(const Config& cfg, const CommandOptions& opts);
CommandResult cmd_validate(const Config& cfg, const CommandOptions& opts);
CommandResult cmd_compare(const Config& cfg, const CommandOptions& opts);

// Dispatches by name, writes <out_dir>/report.txt, and maps library errors to
// the exit-code contract (the report then carries a single error line).
CommandResult run_command(std::string_view name, const Config& cfg, const CommandOptions& opts);

int exit_code_for(const std::exception& e);

}  // namespace batchstep
