#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "batchstep/optimizer.hpp"
#include "batchstep/problems.hpp"
#include "batchstep/theory.hpp"

namespace batchstep {

// Runs fn(0), ..., fn(count-1) on up to `workers` threads (0 means hardware
// concurrency). Rethrows the exception of the lowest failing index.
void parallel_for(std::size_t count, std::size_t workers,
                  const std::function<void(std::size_t)>& fn);

// What a single trial needs besides its seed.
struct RunSpec {
  OptimizerKind kind = OptimizerKind::sgd;
  HyperParams hp;  // constrain_for(kind, hp) is applied by the harness
  Vector x0;
  std::size_t batch_size = 1;
};

struct TrialLog {
  std::uint64_t seed = 0;
  std::size_t batch_size = 0;
  std::vector<StepLog> steps;    // row k-1 describes step k
  std::vector<Vector> iterates;  // x_0, ..., x_K; empty unless requested
  Vector h0;                     // diagonal of H_0 as actually used
  bool h_monotone = true;
  std::size_t max_binds = 0;
  bool diverged = false;
  std::string error;
};

// Never throws DivergenceDetected: a diverging trial stops early with
// diverged = true and the rows logged so far.
TrialLog run_trial(const FiniteSumProblem& problem, const RunSpec& spec, std::size_t steps,
                   std::uint64_t seed, bool keep_iterates);

struct TrialSet {
  std::size_t trials = 0;
  std::size_t max_steps = 0;
  std::size_t batch_size = 0;
  std::vector<std::uint64_t> seeds;
  // Index k-1 holds the trial mean at iterate x_k.
  std::vector<double> mean_grad_norm_sq;
  std::vector<double> running_min;
  std::vector<double> stderr_grad_norm_sq;
  std::vector<double> mean_m_norm_sq;
  std::vector<double> mean_d_hnorm_sq;
  std::vector<TrialLog> logs;
  bool h_monotone = true;
};

// Trial t uses seed seed_base + t. Throws DivergenceDetected if any trial
// diverged (the lowest such index is reported).
TrialSet run_trials(const FiniteSumProblem& problem, const RunSpec& spec, std::size_t trials,
                    std::size_t max_steps, std::uint64_t seed_base, std::size_t workers = 1,
                    bool keep_iterates = false);

enum class KEpsStatus { reached, not_reached, invalid };
std::string_view to_string(KEpsStatus status);

struct KEpsMeasurement {
  KEpsStatus status = KEpsStatus::not_reached;
  std::size_t k_eps = 0;      // first K with min_{k<=K} mean ||grad f(x_k)||^2 <= eps^2
  std::size_t max_steps = 0;
  double mean_at_crossing = 0.0;
  double stderr_at_crossing = 0.0;
  double best_mean = 0.0;     // running min at the last executed step
  std::string error;          // set when invalid
};

KEpsMeasurement measure_k_eps(const FiniteSumProblem& problem, const RunSpec& spec,
                              double epsilon, std::size_t trials, std::size_t max_steps,
                              std::uint64_t seed_base, std::size_t workers = 1);

struct EstimatedConstants {
  double D_hat = 0.0;
  double G_hat = 0.0;
  double H_hat = 0.0;  // pathwise proxy for sup_k E[h_{k,i}]
  double h0star = 0.0;
  double L = 0.0;
  bool L_analytic = false;
  double G_g1 = 0.0;   // L n sqrt(d D_hat)
};

// Logs need iterates for D_hat (and for L when the problem has no analytic
// bound). Throws EmptyLogs when there is no logged step at all.
EstimatedConstants estimate_constants(const FiniteSumProblem& problem,
                                      const std::vector<TrialLog>& logs);

// Theory constants assembled from the estimates and the (constrained)
// hyperparameters of spec; G_hat feeds G unless use_g1.
TheoryConstants theory_from_estimates(const FiniteSumProblem& problem,
                                      const EstimatedConstants& est, const RunSpec& spec,
                                      double epsilon, bool use_g1);

struct MonitorViolation {
  std::size_t k = 0;
  double value = 0.0;
  double bound = 0.0;
};

struct MonitorCheck {
  std::string name;
  std::size_t checked = 0;
  double worst_margin = 0.0;  // min over k of bound - value
  std::size_t worst_k = 0;
  std::vector<MonitorViolation> violations;
  bool pass() const { return checked > 0 && violations.empty(); }
};

struct MonitorReport {
  std::vector<MonitorCheck> checks;
  bool pass() const;
};

// mean ||m_k||^2 <= G^2/s^2 and mean ||d_k||_H^2 <= G^2/((1-gamma)^2 h0* s^2) at every k.
MonitorReport check_lemma_bounds(const TrialSet& ts, const EstimatedConstants& est,
                                 double gamma);

// One check per K: min_{k<=K} mean ||grad f(x_k)||^2 <= upper_bound(tc, regime, K, s).
MonitorReport check_upper_bound(const TrialSet& ts, const TheoryConstants& tc, Regime regime,
                                const std::vector<std::size_t>& K_list, std::size_t s);

// Regime implied by the schedules, if any theorem covers them.
std::optional<Regime> regime_for(const HyperParams& hp);

enum class Direction { decreasing, increasing, flat };
std::string_view to_string(Direction direction);

struct Segment {
  std::size_t from_s = 0;
  std::size_t to_s = 0;
  Direction direction = Direction::flat;
};

struct SweepRow {
  std::size_t batch_size = 0;
  KEpsMeasurement measured;
  double predicted = 0.0;  // NaN when no prediction applies
};

struct SweepResult {
  double epsilon = 0.0;
  std::size_t trials = 0;
  std::size_t max_steps = 0;
  std::vector<SweepRow> rows;
  std::optional<std::size_t> argmin;  // over reached rows, ties toward smaller s
  std::vector<Segment> segments;
};

// Every cell uses the same seed_base, so cells differ only through s.
SweepResult sweep(const FiniteSumProblem& problem, const RunSpec& spec,
                  const std::vector<std::size_t>& batch_grid, double epsilon, std::size_t trials,
                  std::size_t max_steps, std::uint64_t seed_base,
                  const std::optional<TheoryConstants>& tc, std::size_t workers = 1);

enum class ShapeKind { u_shaped, monotone_decreasing, monotone_increasing, irregular, inconclusive };
std::string_view to_string(ShapeKind kind);

struct ShapeVerdict {
  ShapeKind kind = ShapeKind::irregular;
  std::optional<std::size_t> argmin;
};

// Throws InsufficientData with fewer than three rows, or fewer than three
// reached rows once the > 50% not-reached case has been labelled inconclusive.
ShapeVerdict u_shape(const SweepResult& result);
ShapeVerdict u_shape(const std::vector<std::size_t>& batch_sizes,
                     const std::vector<double>& values);

// Mean of the trial-mean ||grad f(x_k)||^2 over the last tail_fraction of a
// run: the noise floor a given configuration settles at.
double stationary_level(const FiniteSumProblem& problem, const RunSpec& spec, std::size_t trials,
                        std::size_t steps, std::uint64_t seed_base, double tail_fraction,
                        std::size_t workers = 1);

}  // namespace batchstep
