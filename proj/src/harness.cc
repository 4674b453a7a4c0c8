#include "batchstep/harness.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <thread>

#include <fmt/format.h>

#include "batchstep/errors.hpp"

namespace batchstep {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct TrialRunner {
  OptimizerState state;
  EpochSampler sampler;
  HyperParams hp;

  TrialRunner(const FiniteSumProblem& problem, const RunSpec& spec, std::uint64_t seed)
      : state(OptimizerState::initial(spec.x0, constrain_for(spec.kind, spec.hp),
                                      strategy_for(spec.kind))),
        sampler(problem.n(), spec.batch_size, seed),
        hp(constrain_for(spec.kind, spec.hp)) {}
};

void check_spec(const FiniteSumProblem& problem, const RunSpec& spec) {
  if (static_cast<std::size_t>(spec.x0.size()) != problem.d()) {
    throw InvalidHyperParams(
        fmt::format("x0 has {} entries, problem has d = {}", spec.x0.size(), problem.d()));
  }
}

double mean_of(const std::vector<double>& values) {
  double total = 0.0;
  for (double v : values) total += v;
  return total / static_cast<double>(values.size());
}

double stderr_of(const std::vector<double>& values, double mean) {
  if (values.size() < 2) return 0.0;
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  const double var = ss / static_cast<double>(values.size() - 1);
  return std::sqrt(var / static_cast<double>(values.size()));
}

}  // namespace

void parallel_for(std::size_t count, std::size_t workers,
                  const std::function<void(std::size_t)>& fn) {
  if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
  workers = std::min(workers, count);
  std::vector<std::exception_ptr> errors(count);
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  } else {
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t i = w; i < count; i += workers) {
          try {
            fn(i);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        }
      });
    }
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

TrialLog run_trial(const FiniteSumProblem& problem, const RunSpec& spec, std::size_t steps,
                   std::uint64_t seed, bool keep_iterates) {
  check_spec(problem, spec);
  TrialRunner runner(problem, spec, seed);
  TrialLog log;
  log.seed = seed;
  log.batch_size = spec.batch_size;
  log.h0 = runner.state.h;
  log.steps.reserve(steps);
  if (keep_iterates) {
    log.iterates.reserve(steps + 1);
    log.iterates.push_back(runner.state.x);
  }
  for (std::size_t k = 0; k < steps; ++k) {
    try {
      const IndexSet batch = runner.sampler.next_batch();
      log.steps.push_back(step(problem, runner.state, runner.hp, batch));
    } catch (const DivergenceDetected& e) {
      log.diverged = true;
      log.error = e.what();
      break;
    } catch (const NonFiniteInput& e) {
      log.diverged = true;
      log.error = e.what();
      break;
    }
    log.h_monotone = log.h_monotone && log.steps.back().h_monotone;
    if (keep_iterates) log.iterates.push_back(runner.state.x);
  }
  log.max_binds = runner.state.max_binds;
  return log;
}

TrialSet run_trials(const FiniteSumProblem& problem, const RunSpec& spec, std::size_t trials,
                    std::size_t max_steps, std::uint64_t seed_base, std::size_t workers,
                    bool keep_iterates) {
  if (trials < 1) throw InvalidHyperParams("trials must be at least 1");
  check_spec(problem, spec);
  TrialSet ts;
  ts.trials = trials;
  ts.max_steps = max_steps;
  ts.batch_size = spec.batch_size;
  ts.logs.resize(trials);
  for (std::size_t t = 0; t < trials; ++t) ts.seeds.push_back(seed_base + t);

  parallel_for(trials, workers, [&](std::size_t t) {
    ts.logs[t] = run_trial(problem, spec, max_steps, ts.seeds[t], keep_iterates);
  });
  for (const TrialLog& log : ts.logs) {
    if (log.diverged) {
      throw DivergenceDetected(fmt::format("trial seed {}: {}", log.seed, log.error));
    }
    ts.h_monotone = ts.h_monotone && log.h_monotone;
  }

  // Summed in trial-index order after collection, whatever the worker count.
  std::vector<double> column(trials);
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < max_steps; ++k) {
    for (std::size_t t = 0; t < trials; ++t) column[t] = ts.logs[t].steps[k].grad_norm_sq;
    const double mean = mean_of(column);
    ts.mean_grad_norm_sq.push_back(mean);
    ts.stderr_grad_norm_sq.push_back(stderr_of(column, mean));
    best = std::min(best, mean);
    ts.running_min.push_back(best);

    for (std::size_t t = 0; t < trials; ++t) column[t] = ts.logs[t].steps[k].m_norm_sq;
    ts.mean_m_norm_sq.push_back(mean_of(column));
    for (std::size_t t = 0; t < trials; ++t) column[t] = ts.logs[t].steps[k].d_hnorm_sq;
    ts.mean_d_hnorm_sq.push_back(mean_of(column));
  }
  return ts;
}

std::string_view to_string(KEpsStatus status) {
  switch (status) {
    case KEpsStatus::reached: return "reached";
    case KEpsStatus::not_reached: return "not_reached";
    case KEpsStatus::invalid: return "invalid";
  }
  return "unknown";
}

KEpsMeasurement measure_k_eps(const FiniteSumProblem& problem, const RunSpec& spec,
                              double epsilon, std::size_t trials, std::size_t max_steps,
                              std::uint64_t seed_base, std::size_t workers) {
  if (trials < 1) throw InvalidHyperParams("trials must be at least 1");
  if (!(epsilon > 0.0)) throw InvalidHyperParams("epsilon must be positive");
  check_spec(problem, spec);

  KEpsMeasurement out;
  out.max_steps = max_steps;
  out.best_mean = std::numeric_limits<double>::infinity();
  const double target = epsilon * epsilon;

  std::vector<TrialRunner> runners;
  runners.reserve(trials);
  for (std::size_t t = 0; t < trials; ++t) runners.emplace_back(problem, spec, seed_base + t);

  // Trials advance in lock-step chunks so the run can stop soon after the
  // first crossing; the chunk boundaries do not affect any trajectory.
  std::size_t done = 0;
  std::size_t chunk = 16;
  std::vector<std::vector<double>> values(trials);
  std::vector<std::string> failures(trials);
  std::vector<double> column(trials);
  while (done < max_steps) {
    const std::size_t len = std::min(chunk, max_steps - done);
    parallel_for(trials, workers, [&](std::size_t t) {
      values[t].assign(len, kNaN);
      for (std::size_t c = 0; c < len; ++c) {
        try {
          const IndexSet batch = runners[t].sampler.next_batch();
          values[t][c] = step(problem, runners[t].state, runners[t].hp, batch).grad_norm_sq;
        } catch (const DivergenceDetected& e) {
          failures[t] = e.what();
          return;
        } catch (const NonFiniteInput& e) {
          failures[t] = e.what();
          return;
        }
      }
    });
    for (std::size_t t = 0; t < trials; ++t) {
      if (!failures[t].empty()) {
        out.status = KEpsStatus::invalid;
        out.error = fmt::format("trial seed {}: {}", seed_base + t, failures[t]);
        return out;
      }
    }
    for (std::size_t c = 0; c < len; ++c) {
      for (std::size_t t = 0; t < trials; ++t) column[t] = values[t][c];
      const double mean = mean_of(column);
      out.best_mean = std::min(out.best_mean, mean);
      if (out.best_mean <= target) {
        out.status = KEpsStatus::reached;
        out.k_eps = done + c + 1;
        out.mean_at_crossing = mean;
        out.stderr_at_crossing = stderr_of(column, mean);
        return out;
      }
    }
    done += len;
    chunk = std::min<std::size_t>(chunk * 2, 512);
  }
  out.status = KEpsStatus::not_reached;
  return out;
}

EstimatedConstants estimate_constants(const FiniteSumProblem& problem,
                                      const std::vector<TrialLog>& logs) {
  EstimatedConstants est;
  est.h0star = std::numeric_limits<double>::infinity();
  bool any_step = false;
  for (const TrialLog& log : logs) {
    if (log.h0.size() > 0) {
      est.h0star = std::min(est.h0star, log.h0.minCoeff());
      est.H_hat = std::max(est.H_hat, log.h0.maxCoeff());
    }
    for (const StepLog& row : log.steps) {
      any_step = true;
      est.G_hat = std::max(est.G_hat, row.batch_grad_sum_norm);
      est.H_hat = std::max(est.H_hat, row.h_max);
    }
    // D is measured against the proof's comparison point x_m - grad f(x_m),
    // m = argmin_k ||grad f(x_k)||^2 over the logged iterates x_1..x_K.
    if (log.steps.empty() || log.iterates.size() < log.steps.size() + 1) continue;
    std::size_t m = 0;
    for (std::size_t k = 1; k < log.steps.size(); ++k) {
      if (log.steps[k].grad_norm_sq < log.steps[m].grad_norm_sq) m = k;
    }
    const Vector& xm = log.iterates[m + 1];
    const Vector anchor = xm - problem.gradient(xm);
    for (std::size_t k = 1; k < log.iterates.size(); ++k) {
      est.D_hat = std::max(est.D_hat, (log.iterates[k] - anchor).cwiseAbs2().maxCoeff());
    }
  }
  if (!any_step) throw EmptyLogs("no logged steps to estimate constants from");

  if (problem.lipschitz_bound()) {
    est.L = *problem.lipschitz_bound();
    est.L_analytic = true;
  } else {
    // Secant ratios along consecutive iterate pairs, a lower estimate of L.
    for (const TrialLog& log : logs) {
      const std::size_t pairs = log.iterates.size() > 1 ? log.iterates.size() - 1 : 0;
      const std::size_t stride = std::max<std::size_t>(1, pairs / 64);
      for (std::size_t k = 0; k < pairs; k += stride) {
        const Vector& x = log.iterates[k];
        const Vector& y = log.iterates[k + 1];
        const double dist = (x - y).norm();
        if (!(dist > 0.0)) continue;
        for (std::size_t i = 0; i < problem.n(); ++i) {
          const double num =
              (problem.component_gradient(i, x) - problem.component_gradient(i, y)).norm();
          est.L = std::max(est.L, num / dist);
        }
      }
    }
  }
  est.G_g1 = g_from_g1(est.L, problem.n(), problem.d(), est.D_hat);
  return est;
}

TheoryConstants theory_from_estimates(const FiniteSumProblem& problem,
                                      const EstimatedConstants& est, const RunSpec& spec,
                                      double epsilon, bool use_g1) {
  const HyperParams hp = constrain_for(spec.kind, spec.hp);
  TheoryConstants tc;
  tc.d = problem.d();
  tc.n = problem.n();
  tc.D = est.D_hat;
  tc.L = est.L;
  tc.G = use_g1 ? est.G_g1 : est.G_hat;
  tc.H = est.H_hat;
  tc.h0star = est.h0star;
  tc.b = hp.beta_cap;
  tc.alpha = hp.alpha;
  tc.beta = hp.beta;
  tc.gamma = hp.gamma;
  tc.epsilon = epsilon;
  return tc;
}

bool MonitorReport::pass() const {
  return !checks.empty() &&
         std::all_of(checks.begin(), checks.end(), [](const MonitorCheck& c) { return c.pass(); });
}

namespace {

MonitorCheck check_series(std::string name, const std::vector<double>& values, double bound) {
  MonitorCheck check;
  check.name = std::move(name);
  check.worst_margin = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < values.size(); ++k) {
    ++check.checked;
    const double margin = bound - values[k];
    if (margin < check.worst_margin) {
      check.worst_margin = margin;
      check.worst_k = k + 1;
    }
    if (!(values[k] <= bound)) check.violations.push_back({k + 1, values[k], bound});
  }
  return check;
}

}  // namespace

MonitorReport check_lemma_bounds(const TrialSet& ts, const EstimatedConstants& est,
                                 double gamma) {
  const double s = static_cast<double>(ts.batch_size);
  const double g2 = est.G_hat * est.G_hat;
  const double gt = 1.0 - gamma;
  MonitorReport report;
  report.checks.push_back(check_series("lemma_m", ts.mean_m_norm_sq, g2 / (s * s)));
  report.checks.push_back(
      check_series("lemma_d", ts.mean_d_hnorm_sq, g2 / (gt * gt * est.h0star * s * s)));
  return report;
}

MonitorReport check_upper_bound(const TrialSet& ts, const TheoryConstants& tc, Regime regime,
                                const std::vector<std::size_t>& K_list, std::size_t s) {
  MonitorReport report;
  for (std::size_t K : K_list) {
    MonitorCheck check;
    check.name = fmt::format("K{}", K);
    check.checked = 1;
    check.worst_k = K;
    if (K == 0 || K > ts.running_min.size()) {
      check.worst_margin = kNaN;
      check.violations.push_back({K, kNaN, kNaN});
    } else {
      const double bound =
          upper_bound(tc, regime, static_cast<double>(K), static_cast<double>(s));
      const double value = ts.running_min[K - 1];
      check.worst_margin = bound - value;
      if (!(value <= bound)) check.violations.push_back({K, value, bound});
    }
    report.checks.push_back(std::move(check));
  }
  return report;
}

std::optional<Regime> regime_for(const HyperParams& hp) {
  if (hp.alpha_schedule == AlphaSchedule::constant) {
    if (hp.beta_schedule == BetaSchedule::constant) return Regime::constant_rate;
    return std::nullopt;
  }
  if (hp.beta_schedule == BetaSchedule::constant) return Regime::diminishing_rate;
  return Regime::diminishing_geometric;
}

std::string_view to_string(Direction direction) {
  switch (direction) {
    case Direction::decreasing: return "decreasing";
    case Direction::increasing: return "increasing";
    case Direction::flat: return "flat";
  }
  return "unknown";
}

std::string_view to_string(ShapeKind kind) {
  switch (kind) {
    case ShapeKind::u_shaped: return "u_shaped";
    case ShapeKind::monotone_decreasing: return "monotone_decreasing";
    case ShapeKind::monotone_increasing: return "monotone_increasing";
    case ShapeKind::irregular: return "irregular";
    case ShapeKind::inconclusive: return "inconclusive";
  }
  return "unknown";
}

namespace {

std::optional<std::size_t> first_argmin(const std::vector<double>& values) {
  if (values.empty()) return std::nullopt;
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] < values[best]) best = i;
  }
  return best;
}

std::vector<Segment> monotone_segments(const std::vector<std::size_t>& sizes,
                                       const std::vector<double>& values) {
  std::vector<Segment> segments;
  for (std::size_t i = 1; i < values.size(); ++i) {
    const Direction dir = values[i] < values[i - 1]   ? Direction::decreasing
                          : values[i] > values[i - 1] ? Direction::increasing
                                                      : Direction::flat;
    if (!segments.empty()) {
      Segment& last = segments.back();
      if (last.direction == Direction::flat && dir != Direction::flat) last.direction = dir;
      if (dir == Direction::flat || dir == last.direction) {
        last.to_s = sizes[i];
        continue;
      }
    }
    segments.push_back({sizes[i - 1], sizes[i], dir});
  }
  return segments;
}

}  // namespace

SweepResult sweep(const FiniteSumProblem& problem, const RunSpec& spec,
                  const std::vector<std::size_t>& batch_grid, double epsilon, std::size_t trials,
                  std::size_t max_steps, std::uint64_t seed_base,
                  const std::optional<TheoryConstants>& tc, std::size_t workers) {
  if (!std::is_sorted(batch_grid.begin(), batch_grid.end())) {
    throw InvalidBatchSize("batch grid must be sorted ascending");
  }
  for (std::size_t s : batch_grid) {
    if (s < 1 || s > problem.n()) {
      throw InvalidBatchSize(fmt::format("batch size {} outside [1, {}]", s, problem.n()));
    }
  }
  const std::optional<Regime> regime = regime_for(constrain_for(spec.kind, spec.hp));

  SweepResult result;
  result.epsilon = epsilon;
  result.trials = trials;
  result.max_steps = max_steps;
  for (std::size_t s : batch_grid) {
    RunSpec cell = spec;
    cell.batch_size = s;
    SweepRow row;
    row.batch_size = s;
    row.measured = measure_k_eps(problem, cell, epsilon, trials, max_steps, seed_base, workers);
    row.predicted = kNaN;
    if (tc && regime) {
      try {
        row.predicted = k_eps(regime_constants(*tc, *regime), epsilon, static_cast<double>(s));
      } catch (const Error&) {
        // outside the formula's domain; left as NA
      }
    }
    result.rows.push_back(std::move(row));
  }

  std::vector<std::size_t> sizes;
  std::vector<double> values;
  for (const SweepRow& row : result.rows) {
    if (row.measured.status != KEpsStatus::reached) continue;
    sizes.push_back(row.batch_size);
    values.push_back(static_cast<double>(row.measured.k_eps));
  }
  if (auto idx = first_argmin(values)) result.argmin = sizes[*idx];
  result.segments = monotone_segments(sizes, values);
  return result;
}

ShapeVerdict u_shape(const std::vector<std::size_t>& batch_sizes,
                     const std::vector<double>& values) {
  if (batch_sizes.size() != values.size()) {
    throw InsufficientData("batch sizes and values differ in length");
  }
  if (values.size() < 3) {
    throw InsufficientData(fmt::format("{} reached rows, need at least 3", values.size()));
  }
  const std::size_t m = *first_argmin(values);
  bool down = true;
  for (std::size_t i = 1; i <= m; ++i) down = down && values[i] <= values[i - 1];
  bool up = true;
  for (std::size_t i = m + 1; i < values.size(); ++i) up = up && values[i] >= values[i - 1];

  ShapeVerdict verdict;
  verdict.argmin = batch_sizes[m];
  if (!down || !up) {
    verdict.kind = ShapeKind::irregular;
  } else if (m == values.size() - 1) {
    verdict.kind = ShapeKind::monotone_decreasing;
  } else if (m == 0) {
    verdict.kind = ShapeKind::monotone_increasing;
  } else {
    verdict.kind = ShapeKind::u_shaped;
  }
  return verdict;
}

ShapeVerdict u_shape(const SweepResult& result) {
  if (result.rows.size() < 3) {
    throw InsufficientData(fmt::format("{} rows, need at least 3", result.rows.size()));
  }
  std::vector<std::size_t> sizes;
  std::vector<double> values;
  for (const SweepRow& row : result.rows) {
    if (row.measured.status != KEpsStatus::reached) continue;
    sizes.push_back(row.batch_size);
    values.push_back(static_cast<double>(row.measured.k_eps));
  }
  if (2 * (result.rows.size() - values.size()) > result.rows.size()) {
    return {ShapeKind::inconclusive, std::nullopt};
  }
  return u_shape(sizes, values);
}

double stationary_level(const FiniteSumProblem& problem, const RunSpec& spec, std::size_t trials,
                        std::size_t steps, std::uint64_t seed_base, double tail_fraction,
                        std::size_t workers) {
  if (steps == 0 || !(tail_fraction > 0.0 && tail_fraction <= 1.0)) {
    throw InvalidHyperParams("stationary_level needs steps > 0 and tail_fraction in (0, 1]");
  }
  const TrialSet ts = run_trials(problem, spec, trials, steps, seed_base, workers);
  const auto tail = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::ceil(tail_fraction * static_cast<double>(steps))));
  double total = 0.0;
  for (std::size_t k = steps - tail; k < steps; ++k) total += ts.mean_grad_norm_sq[k];
  return total / static_cast<double>(tail);
}

}  // namespace batchstep
