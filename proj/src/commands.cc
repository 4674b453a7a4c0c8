#include "batchstep/commands.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include <fmt/format.h>

#include "batchstep/errors.hpp"

namespace batchstep {

void ReportDocument::add(std::string key, std::string value) {
  lines_.emplace_back(std::move(key), std::move(value));
}

void ReportDocument::add(std::string key, double value) {
  add(std::move(key), format_number(value));
}

void ReportDocument::add(std::string key, std::size_t value) {
  add(std::move(key), fmt::format("{}", value));
}

void ReportDocument::add(std::string key, bool value) {
  add(std::move(key), std::string(value ? "true" : "false"));
}

std::optional<std::string> ReportDocument::find(std::string_view key) const {
  for (const auto& [k, v] : lines_) {
    if (k == key) return v;
  }
  return std::nullopt;
}

std::string ReportDocument::text() const {
  std::string out;
  for (const auto& [k, v] : lines_) out += fmt::format("{}={}\n", k, v);
  return out;
}

std::string format_number(double value) {
  if (std::isnan(value)) return "NA";
  return fmt::format("{:.17g}", value);
}

namespace {

std::ofstream open_output(const std::filesystem::path& dir, const std::string& name) {
  std::filesystem::create_directories(dir);
  std::ofstream out(dir / name, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError(fmt::format("cannot write {}", (dir / name).string()));
  return out;
}

std::size_t workers_for(const Config& cfg, const CommandOptions& opts) {
  if (opts.workers != 0) return opts.workers;
  return cfg.get_size_or("sweep.workers", 0);
}

void add_estimates(ReportDocument& report, const std::string& prefix,
                   const EstimatedConstants& est) {
  report.add(prefix + "D_hat", est.D_hat);
  report.add(prefix + "G_hat", est.G_hat);
  report.add(prefix + "G_g1", est.G_g1);
  report.add(prefix + "H_hat_proxy", est.H_hat);
  report.add(prefix + "h0star", est.h0star);
  report.add(prefix + "L", est.L);
  report.add(prefix + "L_source", std::string(est.L_analytic ? "analytic" : "estimated"));
}

}  // namespace

CommandResult cmd_predict(const Config& cfg, const CommandOptions& opts) {
  const Regime regime = parse_regime(cfg.get_string("theory.regime"));
  const double epsilon = cfg.get_double("theory.epsilon");
  CommandResult result;
  ReportDocument& report = result.report;
  report.add("command", std::string("predict"));
  report.add("regime", std::string(to_string(regime)));

  RegimeConstants rc;
  bool feasible = true;
  if (cfg.has("theory.A")) {
    rc.regime = regime;
    rc.A = cfg.get_double("theory.A");
    rc.B = cfg.get_double("theory.B");
    rc.C = cfg.get_double_or("theory.C", 0.0);
    if (!(rc.A > 0.0 && rc.B > 0.0 && rc.C >= 0.0)) {
      throw ConfigError("explicit constants need A > 0, B > 0, C >= 0");
    }
    report.add("constants", std::string("explicit"));
    feasible = regime == Regime::diminishing_geometric || epsilon * epsilon > rc.C;
  } else {
    const TheoryConstants tc = theory_from_config(cfg);
    tc.validate();
    rc = regime_constants(tc, regime);
    report.add("constants", cfg.get_string_or("theory.g_mode", "g1"));
    report.add("G", tc.G);
    feasible = regime == Regime::diminishing_geometric ? true : beta_feasible(tc);
  }
  report.add("A", rc.A);
  report.add("B", rc.B);
  report.add("C", rc.C);
  report.add("epsilon", epsilon);
  report.add("beta_feasible", feasible);

  const bool computable = regime == Regime::diminishing_geometric || epsilon * epsilon > rc.C;
  if (!computable) {
    report.add("s_star", std::string("NA"));
    report.add("k_star", std::string("NA"));
    result.exit_code = kExitInfeasibleBeta;
    return result;
  }
  if (regime == Regime::constant_rate) {
    report.add("domain_lower_bound", domain_lower_bound(rc, epsilon));
  }
  const OptimalBatch best = optimal_batch(rc, epsilon);
  report.add("s_star", best.s_star);
  report.add("k_star", best.k_star);
  report.add("k_star_steps", static_cast<std::size_t>(std::ceil(best.k_star)));

  // The constant-regime curve has a pole at s*/2, so its grid starts above it.
  const std::size_t points = std::max<std::size_t>(2, cfg.get_size_or("predict.grid_points", 41));
  const double lo = regime == Regime::constant_rate ? 0.6 * best.s_star : best.s_star / 10.0;
  const double hi = 10.0 * best.s_star;
  auto out = open_output(opts.out_dir, "curve.csv");
  out << "s,k_eps\n";
  for (std::size_t i = 0; i < points; ++i) {
    const double t = static_cast<double>(i) / static_cast<double>(points - 1);
    const double s = lo * std::pow(hi / lo, t);
    out << format_number(s) << ',' << format_number(k_eps(rc, epsilon, s)) << '\n';
  }
  report.add("curve_csv", (opts.out_dir / "curve.csv").string());
  if (!feasible) result.exit_code = kExitInfeasibleBeta;
  return result;
}

CommandResult cmd_run(const Config& cfg, const CommandOptions& opts) {
  const FiniteSumProblem problem = problem_from_config(cfg);
  RunSpec spec = run_spec_from_config(cfg, problem);
  spec.batch_size = cfg.get_size("run.batch_size");
  const std::size_t steps = cfg.get_size("run.steps");
  const std::uint64_t seed = cfg.get_u64("run.seed");

  const TrialLog log = run_trial(problem, spec, steps, seed, true);

  auto out = open_output(opts.out_dir, "run.csv");
  out << "step,grad_norm_sq,min_so_far,m_norm_sq,d_hnorm_sq,alpha_k,beta_k,h_min,h_max\n";
  double best = std::numeric_limits<double>::infinity();
  for (const StepLog& row : log.steps) {
    best = std::min(best, row.grad_norm_sq);
    out << row.k << ',' << format_number(row.grad_norm_sq) << ',' << format_number(best) << ','
        << format_number(row.m_norm_sq) << ',' << format_number(row.d_hnorm_sq) << ','
        << format_number(row.alpha_k) << ',' << format_number(row.beta_k) << ','
        << format_number(row.h_min) << ',' << format_number(row.h_max) << '\n';
  }
  out.flush();

  CommandResult result;
  ReportDocument& report = result.report;
  report.add("command", std::string("run"));
  report.add("problem", problem.name());
  report.add("optimizer", std::string(to_string(spec.kind)));
  report.add("batch_size", spec.batch_size);
  report.add("seed", static_cast<std::size_t>(seed));
  report.add("steps_requested", steps);
  report.add("steps_completed", log.steps.size());
  report.add("final_min_so_far", log.steps.empty() ? std::nan("") : best);
  report.add("h_monotone", log.h_monotone);
  report.add("max_binds", log.max_binds);
  if (!log.steps.empty()) add_estimates(report, "estimate.", estimate_constants(problem, {log}));
  report.add("diverged", log.diverged);
  report.add("run_csv", (opts.out_dir / "run.csv").string());
  if (log.diverged) result.exit_code = kExitDivergence;
  return result;
}

namespace {

std::string describe_segments(const std::vector<Segment>& segments) {
  if (segments.empty()) return "none";
  std::string out;
  for (const Segment& seg : segments) {
    if (!out.empty()) out += ';';
    out += fmt::format("{}-{}:{}", seg.from_s, seg.to_s, to_string(seg.direction));
  }
  return out;
}

}  // namespace

CommandResult cmd_sweep(const Config& cfg, const CommandOptions& opts) {
  const FiniteSumProblem problem = problem_from_config(cfg);
  const RunSpec spec = run_spec_from_config(cfg, problem);
  const std::vector<std::size_t> grid = cfg.get_sizes("sweep.batch_sizes");
  const std::size_t trials = cfg.get_size_or("sweep.trials", 20);
  const std::size_t max_steps = cfg.get_size("sweep.max_steps");
  const double epsilon = cfg.get_double("sweep.epsilon");
  const std::uint64_t seed = cfg.get_u64("sweep.seed");
  std::optional<TheoryConstants> tc;
  if (cfg.has("theory.D")) tc = theory_from_config(cfg);

  const SweepResult sr =
      sweep(problem, spec, grid, epsilon, trials, max_steps, seed, tc, workers_for(cfg, opts));

  auto out = open_output(opts.out_dir, "sweep.csv");
  out << "batch_size,empirical_k_eps,predicted_k_eps,reached,trials\n";
  for (const SweepRow& row : sr.rows) {
    const bool reached = row.measured.status == KEpsStatus::reached;
    out << row.batch_size << ',' << (reached ? fmt::format("{}", row.measured.k_eps) : "NA")
        << ',' << format_number(row.predicted) << ',' << (reached ? "true" : "false") << ','
        << sr.trials << '\n';
  }
  out.flush();

  CommandResult result;
  ReportDocument& report = result.report;
  report.add("command", std::string("sweep"));
  report.add("problem", problem.name());
  report.add("optimizer", std::string(to_string(spec.kind)));
  report.add("epsilon", epsilon);
  report.add("trials", trials);
  report.add("max_steps", max_steps);
  report.add("seed", static_cast<std::size_t>(seed));
  for (const SweepRow& row : sr.rows) {
    if (row.measured.status == KEpsStatus::invalid) {
      report.add(fmt::format("invalid.s{}", row.batch_size), row.measured.error);
    }
  }
  report.add("argmin", sr.argmin ? fmt::format("{}", *sr.argmin) : std::string("NA"));
  report.add("segments", describe_segments(sr.segments));
  try {
    const ShapeVerdict verdict = u_shape(sr);
    report.add("u_shape", std::string(to_string(verdict.kind)));
    report.add("u_shape_argmin",
               verdict.argmin ? fmt::format("{}", *verdict.argmin) : std::string("NA"));
  } catch (const InsufficientData&) {
    report.add("u_shape", std::string("insufficient_data"));
  }
  report.add("sweep_csv", (opts.out_dir / "sweep.csv").string());
  return result;
}

CommandResult cmd_validate(const Config& cfg, const CommandOptions& opts) {
  const FiniteSumProblem problem = problem_from_config(cfg);
  const RunSpec base = run_spec_from_config(cfg, problem);
  const std::vector<std::size_t> K_list = cfg.get_sizes("validate.K_list");
  const std::string g_mode = cfg.get_string_or("validate.g_mode", "g2");
  if (g_mode != "g1" && g_mode != "g2") {
    throw ConfigError(fmt::format("validate.g_mode: expected g1 or g2, got '{}'", g_mode));
  }
  const std::vector<std::size_t> sizes = cfg.has("sweep.batch_sizes")
                                             ? cfg.get_sizes("sweep.batch_sizes")
                                             : std::vector<std::size_t>{cfg.get_size("run.batch_size")};
  const std::size_t trials = cfg.get_size_or("sweep.trials", 20);
  const std::size_t steps = cfg.get_size("sweep.max_steps");
  const std::uint64_t seed = cfg.get_u64("sweep.seed");
  const double epsilon = cfg.get_double_or("sweep.epsilon", 1.0);
  const HyperParams hp = constrain_for(base.kind, base.hp);
  const std::optional<Regime> regime = regime_for(hp);
  if (!regime) throw ConfigError("no bound covers constant alpha with geometric beta");

  CommandResult result;
  ReportDocument& report = result.report;
  report.add("command", std::string("validate"));
  report.add("problem", problem.name());
  report.add("optimizer", std::string(to_string(base.kind)));
  report.add("regime", std::string(to_string(*regime)));
  report.add("g_mode", g_mode);
  report.add("trials", trials);
  report.add("steps", steps);
  report.add("seed", static_cast<std::size_t>(seed));

  bool all_pass = true;
  for (std::size_t s : sizes) {
    RunSpec spec = base;
    spec.batch_size = s;
    const TrialSet ts =
        run_trials(problem, spec, trials, steps, seed, workers_for(cfg, opts), true);
    const EstimatedConstants est = estimate_constants(problem, ts.logs);
    TheoryConstants tc = theory_from_estimates(problem, est, spec, epsilon, g_mode == "g1");
    // Explicit theory.* values replace the corresponding estimates.
    tc.D = cfg.get_double_or("theory.D", tc.D);
    tc.L = cfg.get_double_or("theory.L", tc.L);
    tc.H = cfg.get_double_or("theory.H", tc.H);
    tc.h0star = cfg.get_double_or("theory.h0star", tc.h0star);
    tc.G = cfg.get_double_or("theory.G", tc.G);

    const std::string tag = fmt::format("s{}", s);
    add_estimates(report, fmt::format("estimate.{}.", tag), est);
    report.add(fmt::format("audit.h_monotone.{}", tag), ts.h_monotone);

    const MonitorReport lemma = check_lemma_bounds(ts, est, hp.gamma);
    const MonitorReport theorem = check_upper_bound(ts, tc, *regime, K_list, s);
    for (const MonitorCheck& check : lemma.checks) {
      report.add(fmt::format("verdict.{}.{}", check.name, tag),
                 std::string(check.pass() ? "pass" : "fail"));
      report.add(fmt::format("margin.{}.{}", check.name, tag), check.worst_margin);
    }
    for (const MonitorCheck& check : theorem.checks) {
      report.add(fmt::format("verdict.theorem.{}.{}", tag, check.name),
                 std::string(check.pass() ? "pass" : "fail"));
      report.add(fmt::format("margin.theorem.{}.{}", tag, check.name), check.worst_margin);
    }
    all_pass = all_pass && lemma.pass() && theorem.pass() && ts.h_monotone;
  }
  report.add("all_pass", all_pass);
  if (!all_pass) result.exit_code = kExitMonitorFailure;
  return result;
}

CommandResult cmd_compare(const Config& cfg, const CommandOptions&) {
  const Regime regime = parse_regime(cfg.get_string("theory.regime"));
  TheoryConstants sgd = theory_from_config(cfg, "theory.sgd");
  TheoryConstants nm = theory_from_config(cfg, "theory.nm");
  TheoryConstants adam = theory_from_config(cfg, "theory.adam");
  const std::string mode = cfg.get_string_or("theory.g_mode", "g1");
  if (mode == "g1") {
    // One shared G over the largest D, as the comparison assumes.
    const double D = std::max({sgd.D, nm.D, adam.D});
    sgd.G = nm.G = adam.G = g_from_g1(adam.L, adam.n, adam.d, D);
  }
  const ComparisonReport cr = compare(sgd, nm, adam, regime);

  CommandResult result;
  ReportDocument& report = result.report;
  report.add("command", std::string("compare"));
  report.add("regime", std::string(to_string(regime)));
  report.add("g_mode", mode);
  report.add("G", cr.G);
  const std::pair<const char*, const ComparisonEntry*> entries[] = {
      {"sgd", &cr.sgd}, {"nm", &cr.nm}, {"adam", &cr.adam}};
  for (const auto& [name, entry] : entries) {
    report.add(fmt::format("{}.feasible", name), entry->feasible);
    report.add(fmt::format("{}.s_star", name), entry->best.s_star);
    report.add(fmt::format("{}.k_star", name), entry->best.k_star);
  }
  for (const Condition& c : cr.conditions) {
    if (c.threshold) report.add(fmt::format("cond.{}.threshold", c.key), *c.threshold);
    report.add(fmt::format("cond.{}", c.key),
               c.holds ? std::string(*c.holds ? "true" : "false") : std::string("NA"));
  }
  for (const Ordering& o : cr.orderings) {
    report.add(fmt::format("order.{}", o.key), o.holds);
    report.add(fmt::format("order.{}.equal", o.key), o.equal);
  }
  for (const Implication& imp : cr.implications) {
    std::string premises;
    for (const std::string& p : imp.premises) premises += (premises.empty() ? "" : "+") + p;
    if (premises.empty()) premises = "feasibility";
    const char* state = !imp.premises_hold ? "premises_unmet"
                        : imp.consistent   ? "consistent"
                                           : "inconsistent";
    report.add(fmt::format("claim.{}.from.{}", imp.conclusion, premises), std::string(state));
  }
  return result;
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const InfeasibleBeta*>(&e)) return kExitInfeasibleBeta;
  if (dynamic_cast<const DivergenceDetected*>(&e)) return kExitDivergence;
  return kExitConfig;
}

CommandResult run_command(std::string_view name, const Config& cfg, const CommandOptions& opts) {
  CommandResult result;
  try {
    if (name == "predict") {
      result = cmd_predict(cfg, opts);
    } else if (name == "run") {
      result = cmd_run(cfg, opts);
    } else if (name == "sweep") {
      result = cmd_sweep(cfg, opts);
    } else if (name == "validate") {
      result = cmd_validate(cfg, opts);
    } else if (name == "compare") {
      result = cmd_compare(cfg, opts);
    } else {
      throw ConfigError(fmt::format("unknown subcommand '{}'", name));
    }
  } catch (const Error& e) {
    result = CommandResult{};
    result.report.add("command", std::string(name));
    result.report.add("error", std::string(e.what()));
    result.exit_code = exit_code_for(e);
  }
  auto out = open_output(opts.out_dir, "report.txt");
  out << result.report.text();
  return result;
}

}  // namespace batchstep
