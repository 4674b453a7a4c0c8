#include <atomic>
#include <cmath>
#include <stdexcept>

#include <gtest/gtest.h>

#include "batchstep/errors.hpp"
#include "batchstep/harness.hpp"

using namespace batchstep;

namespace {

FiniteSumProblem half_square_1d() {
  ProblemParams params;
  params.n = 1;
  params.d = 1;
  params.centers = std::vector<Vector>{Vector::Zero(1)};
  return builtin_problem("quadratic_sum", params);
}

RunSpec sgd_spec(double alpha, Vector x0, std::size_t s) {
  RunSpec spec;
  spec.kind = OptimizerKind::sgd;
  spec.hp.alpha = alpha;
  spec.x0 = std::move(x0);
  spec.batch_size = s;
  return spec;
}

FiniteSumProblem sine_problem(std::size_t n, std::size_t d) {
  ProblemParams params;
  params.n = n;
  params.d = d;
  params.lambda = 0.5;
  params.seed = 1;
  return builtin_problem("sine_quadratic", params);
}

SweepRow reached_row(std::size_t s, std::size_t k) {
  SweepRow row;
  row.batch_size = s;
  row.measured.status = KEpsStatus::reached;
  row.measured.k_eps = k;
  return row;
}

}  // namespace

TEST(ParallelFor, VisitsEveryIndexOnce) {
  std::vector<std::atomic<int>> hits(100);
  parallel_for(100, 4, [&](std::size_t i) { hits[i]++; });
  for (const auto& h : hits) EXPECT_EQ(h.load(), 1);
}

TEST(ParallelFor, RethrowsLowestFailingIndex) {
  try {
    parallel_for(50, 3, [](std::size_t i) {
      if (i == 7 || i == 31) throw std::runtime_error(std::to_string(i));
    });
    FAIL() << "expected a throw";
  } catch (const std::runtime_error& e) {
    EXPECT_STREQ(e.what(), "7");
  }
}

TEST(MeasureKEps, DeterministicHalving) {
  const FiniteSumProblem p = half_square_1d();
  const RunSpec spec = sgd_spec(0.5, Vector::Ones(1), 1);
  const KEpsMeasurement m = measure_k_eps(p, spec, 0.1, 1, 10, 0);
  EXPECT_EQ(m.status, KEpsStatus::reached);
  EXPECT_EQ(m.k_eps, 4u);
  EXPECT_EQ(m.mean_at_crossing, 0.00390625);
}

TEST(MeasureKEps, FirstIterateAlreadyBelow) {
  const FiniteSumProblem p = half_square_1d();
  const KEpsMeasurement m = measure_k_eps(p, sgd_spec(0.5, Vector::Ones(1), 1), 1.0, 3, 10, 0);
  EXPECT_EQ(m.k_eps, 1u);
}

TEST(MeasureKEps, BudgetExhausted) {
  const FiniteSumProblem p = half_square_1d();
  const KEpsMeasurement m = measure_k_eps(p, sgd_spec(0.5, Vector::Ones(1), 1), 1e-9, 1, 10, 0);
  EXPECT_EQ(m.status, KEpsStatus::not_reached);
  EXPECT_EQ(m.max_steps, 10u);
  EXPECT_NEAR(m.best_mean, std::pow(0.25, 10), 1e-20);
}

TEST(MeasureKEps, DivergenceMarksInvalid) {
  RunSpec spec = sgd_spec(1.0, Vector::Ones(1), 1);
  FiniteSumProblem repel("repel", 1, 1, [](std::size_t, const Vector& x) { return -0.5 * x.squaredNorm(); },
                         [](std::size_t, const Vector& x) -> Vector { return -x; });
  spec.hp.divergence_guard = 1e3;
  const KEpsMeasurement m = measure_k_eps(repel, spec, 1e-3, 4, 100, 0);
  EXPECT_EQ(m.status, KEpsStatus::invalid);
  EXPECT_FALSE(m.error.empty());
  EXPECT_THROW(run_trials(repel, spec, 2, 100, 0), DivergenceDetected);
  const TrialLog log = run_trial(repel, spec, 100, 0, false);
  EXPECT_TRUE(log.diverged);
  EXPECT_EQ(log.steps.size(), 9u);  // 2^10 > 1000
}

TEST(MeasureKEps, DeterministicAndWorkerIndependent) {
  const FiniteSumProblem p = sine_problem(32, 5);
  RunSpec spec;
  spec.kind = OptimizerKind::amsgrad;
  spec.hp.alpha = 0.05;
  spec.hp.beta = spec.hp.beta_cap = 0.5;
  spec.hp.gamma = 0.5;
  spec.x0 = Vector::Constant(5, 2.0);
  spec.batch_size = 4;
  const KEpsMeasurement a = measure_k_eps(p, spec, 0.5, 12, 2000, 99, 1);
  const KEpsMeasurement b = measure_k_eps(p, spec, 0.5, 12, 2000, 99, 1);
  const KEpsMeasurement c = measure_k_eps(p, spec, 0.5, 12, 2000, 99, 4);
  EXPECT_EQ(a.status, KEpsStatus::reached);
  EXPECT_EQ(a.k_eps, b.k_eps);
  EXPECT_EQ(a.mean_at_crossing, b.mean_at_crossing);
  EXPECT_EQ(a.k_eps, c.k_eps);
  EXPECT_EQ(a.mean_at_crossing, c.mean_at_crossing);
  EXPECT_EQ(a.stderr_at_crossing, c.stderr_at_crossing);

  const TrialSet one = run_trials(p, spec, 9, 300, 5, 1);
  const TrialSet many = run_trials(p, spec, 9, 300, 5, 3);
  EXPECT_EQ(one.mean_grad_norm_sq, many.mean_grad_norm_sq);
  EXPECT_EQ(one.mean_m_norm_sq, many.mean_m_norm_sq);
}

TEST(TrialSet, RunningMinAndSeeds) {
  const FiniteSumProblem p = sine_problem(16, 3);
  RunSpec spec = sgd_spec(0.2, Vector::Constant(3, 1.5), 2);
  const TrialSet ts = run_trials(p, spec, 5, 200, 40);
  ASSERT_EQ(ts.seeds.size(), 5u);
  for (std::size_t t = 0; t < 5; ++t) EXPECT_EQ(ts.seeds[t], 40 + t);
  ASSERT_EQ(ts.running_min.size(), 200u);
  double mean0 = 0.0;
  for (const TrialLog& log : ts.logs) mean0 += log.steps[0].grad_norm_sq;
  EXPECT_NEAR(ts.mean_grad_norm_sq[0], mean0 / 5.0, 1e-15);
  for (std::size_t k = 1; k < 200; ++k) {
    EXPECT_LE(ts.running_min[k], ts.running_min[k - 1]);
    EXPECT_LE(ts.running_min[k], ts.mean_grad_norm_sq[k]);
  }
  EXPECT_TRUE(ts.h_monotone);
}

TEST(EstimateConstants, IdentityStrategyHasUnitH) {
  const FiniteSumProblem p = sine_problem(8, 2);
  const TrialSet ts = run_trials(p, sgd_spec(0.1, Vector::Ones(2), 2), 2, 20, 0, 1, true);
  const EstimatedConstants est = estimate_constants(p, ts.logs);
  EXPECT_EQ(est.H_hat, 1.0);
  EXPECT_EQ(est.h0star, 1.0);
  EXPECT_TRUE(est.L_analytic);
  EXPECT_EQ(est.L, 1.5);
  EXPECT_NEAR(est.G_g1, 1.5 * 8.0 * std::sqrt(2.0 * est.D_hat), 1e-12);
}

TEST(EstimateConstants, SingleStepGradientSum) {
  const Vector g = (Vector(2) << 3.2, 0.0).finished();
  FiniteSumProblem p("linear", 1, 2, [g](std::size_t, const Vector& x) { return g.dot(x); },
                     [g](std::size_t, const Vector&) -> Vector { return g; });
  const TrialLog log = run_trial(p, sgd_spec(0.1, Vector::Zero(2), 1), 1, 0, true);
  const EstimatedConstants est = estimate_constants(p, {log});
  EXPECT_EQ(est.G_hat, 3.2);
  EXPECT_FALSE(est.L_analytic);
  EXPECT_EQ(est.L, 0.0);  // constant gradient: every secant ratio is zero
}

TEST(EstimateConstants, ZeroCentredQuadratic) {
  ProblemParams params;
  params.n = 4;
  params.d = 1;
  params.centers = std::vector<Vector>(4, Vector::Zero(1));
  const FiniteSumProblem p = builtin_problem("quadratic_sum", params);
  const TrialSet ts = run_trials(p, sgd_spec(0.1, Vector::Constant(1, 0.9), 2), 3, 30, 0, 1, true);
  const EstimatedConstants est = estimate_constants(p, ts.logs);
  EXPECT_EQ(est.L, 1.0);
  EXPECT_LE(est.G_hat, 2.0 * 1.0);
  EXPECT_NEAR(est.G_hat, 2.0 * 0.9, 1e-15);  // at x_0
  // anchor x_m - grad f(x_m) = 0, so D is the largest x_k^2 with k >= 1
  EXPECT_NEAR(est.D_hat, 0.81 * 0.81, 1e-15);
}

TEST(EstimateConstants, EmptyLogs) {
  const FiniteSumProblem p = half_square_1d();
  EXPECT_THROW(estimate_constants(p, {}), EmptyLogs);
  EXPECT_THROW(estimate_constants(p, {TrialLog{}}), EmptyLogs);
}

TEST(EstimateConstants, AdaptiveHIncludesInitial) {
  const FiniteSumProblem p = sine_problem(16, 3);
  RunSpec spec = sgd_spec(0.05, Vector::Ones(3), 4);
  spec.kind = OptimizerKind::amsgrad;
  spec.hp.h0 = Vector::Constant(3, 0.25);
  const TrialSet ts = run_trials(p, spec, 4, 50, 0, 1, true);
  const EstimatedConstants est = estimate_constants(p, ts.logs);
  EXPECT_EQ(est.h0star, 0.25);
  EXPECT_GE(est.H_hat, est.h0star);
}

TEST(LemmaBounds, FullBatchPlainGradient) {
  const FiniteSumProblem p = sine_problem(8, 4);
  const TrialSet ts = run_trials(p, sgd_spec(0.1, Vector::Constant(4, 2.0), 8), 1, 100, 0, 1, true);
  const EstimatedConstants est = estimate_constants(p, ts.logs);
  const MonitorReport r = check_lemma_bounds(ts, est, 0.0);
  EXPECT_TRUE(r.pass());
  ASSERT_EQ(r.checks.size(), 2u);
  EXPECT_EQ(r.checks[0].name, "lemma_m");
  EXPECT_EQ(r.checks[0].checked, 100u);
}

TEST(LemmaBounds, SingleStep) {
  const FiniteSumProblem p = sine_problem(4, 2);
  const TrialSet ts = run_trials(p, sgd_spec(0.1, Vector::Ones(2), 1), 1, 1, 0, 1, true);
  EXPECT_TRUE(check_lemma_bounds(ts, estimate_constants(p, ts.logs), 0.0).pass());
}

TEST(LemmaBounds, AmsgradMonteCarlo) {
  const FiniteSumProblem p = sine_problem(64, 10);
  RunSpec spec = sgd_spec(0.05, Vector::Constant(10, 1.0), 4);
  spec.kind = OptimizerKind::amsgrad;
  spec.hp.beta = spec.hp.beta_cap = 0.5;
  spec.hp.gamma = 0.5;
  const TrialSet ts = run_trials(p, spec, 20, 300, 0, 0, true);
  EXPECT_TRUE(check_lemma_bounds(ts, estimate_constants(p, ts.logs), 0.5).pass());
}

TEST(UpperBoundMonitor, SineQuadraticHolds) {
  const FiniteSumProblem p = sine_problem(64, 10);
  const RunSpec spec = sgd_spec(0.05, Vector::Constant(10, 1.0), 4);
  const TrialSet ts = run_trials(p, spec, 20, 1000, 0, 0, true);
  const EstimatedConstants est = estimate_constants(p, ts.logs);
  const TheoryConstants tc = theory_from_estimates(p, est, spec, 1.0, false);
  const MonitorReport r = check_upper_bound(ts, tc, Regime::constant_rate, {1, 100, 1000}, 4);
  ASSERT_EQ(r.checks.size(), 3u);
  EXPECT_EQ(r.checks[1].name, "K100");
  EXPECT_TRUE(r.pass());

  // shrinking the constants far below the estimates must trip the monitor
  TheoryConstants tight = tc;
  tight.D = 1e-12;
  tight.G = 1e-6;
  EXPECT_FALSE(check_upper_bound(ts, tight, Regime::constant_rate, {1000}, 4).pass());
  // K beyond the logged horizon cannot be certified
  EXPECT_FALSE(check_upper_bound(ts, tc, Regime::constant_rate, {1001}, 4).pass());
}

TEST(RegimeFor, Schedules) {
  HyperParams hp;
  EXPECT_EQ(regime_for(hp), Regime::constant_rate);
  hp.alpha_schedule = AlphaSchedule::inv_sqrt;
  EXPECT_EQ(regime_for(hp), Regime::diminishing_rate);
  hp.beta_schedule = BetaSchedule::geometric;
  EXPECT_EQ(regime_for(hp), Regime::diminishing_geometric);
  hp.alpha_schedule = AlphaSchedule::constant;
  EXPECT_FALSE(regime_for(hp));
}

TEST(Sweep, PredictedColumnFollowsFormula) {
  const FiniteSumProblem p = sine_problem(8, 2);
  TheoryConstants tc;
  tc.d = 1;
  tc.n = 1;
  tc.D = 2.0;  // A = dDH / (2 alpha) = 1
  tc.G = std::sqrt(2.0);  // B = G^2 alpha / 2 = 1
  tc.alpha = 1.0;
  tc.epsilon = 1.0;
  const SweepResult r = sweep(p, sgd_spec(0.1, Vector::Ones(2), 1), {1, 2, 3, 4}, 1.0, 2, 50, 0, tc);
  ASSERT_EQ(r.rows.size(), 4u);
  EXPECT_TRUE(std::isnan(r.rows[0].predicted));  // at the pole s = 1
  EXPECT_NEAR(r.rows[1].predicted, 4.0, 1e-14);
  EXPECT_NEAR(r.rows[2].predicted, 4.5, 1e-14);
  EXPECT_NEAR(r.rows[3].predicted, 16.0 / 3.0, 1e-14);
  const SweepResult no_tc = sweep(p, sgd_spec(0.1, Vector::Ones(2), 1), {2}, 1.0, 2, 50, 0, {});
  EXPECT_TRUE(std::isnan(no_tc.rows[0].predicted));
}

TEST(Sweep, SingleCell) {
  const FiniteSumProblem p = sine_problem(8, 2);
  const SweepResult r = sweep(p, sgd_spec(0.1, Vector::Ones(2), 1), {4}, 1.0, 2, 50, 0, {});
  ASSERT_TRUE(r.argmin);
  EXPECT_EQ(*r.argmin, 4u);
  EXPECT_TRUE(r.segments.empty());
  EXPECT_THROW(u_shape(r), InsufficientData);
}

TEST(Sweep, RejectsBadGrid) {
  const FiniteSumProblem p = sine_problem(8, 2);
  EXPECT_THROW(sweep(p, sgd_spec(0.1, Vector::Ones(2), 1), {4, 2}, 1.0, 1, 5, 0, {}),
               InvalidBatchSize);
  EXPECT_THROW(sweep(p, sgd_spec(0.1, Vector::Ones(2), 1), {9}, 1.0, 1, 5, 0, {}),
               InvalidBatchSize);
}

TEST(UShape, Examples) {
  ShapeVerdict v = u_shape({1, 2, 3}, {4.5, 4.0, 4.5});
  EXPECT_EQ(v.kind, ShapeKind::u_shaped);
  EXPECT_EQ(v.argmin, 2u);
  EXPECT_EQ(u_shape({1, 2, 3}, {5, 4, 3}).kind, ShapeKind::monotone_decreasing);
  EXPECT_EQ(u_shape({1, 2, 3}, {3, 4, 5}).kind, ShapeKind::monotone_increasing);
  EXPECT_EQ(u_shape({1, 2, 3}, {3, 5, 4}).kind, ShapeKind::irregular);
  // ties go to the smaller s
  v = u_shape({1, 2, 4, 8}, {9, 4, 4, 6});
  EXPECT_EQ(v.kind, ShapeKind::u_shaped);
  EXPECT_EQ(v.argmin, 2u);
  EXPECT_THROW(u_shape({1, 2}, {1.0, 2.0}), InsufficientData);
}

TEST(UShape, CensoredSweeps) {
  SweepResult r;
  r.rows = {reached_row(1, 10), SweepRow{}, SweepRow{}};
  r.rows[1].batch_size = 2;
  r.rows[2].batch_size = 4;
  EXPECT_EQ(u_shape(r).kind, ShapeKind::inconclusive);
  r.rows = {reached_row(1, 10), reached_row(2, 6), SweepRow{}, reached_row(8, 7)};
  r.rows[2].batch_size = 4;
  const ShapeVerdict v = u_shape(r);
  EXPECT_EQ(v.kind, ShapeKind::u_shaped);
  EXPECT_EQ(v.argmin, 2u);
  r.rows = {reached_row(1, 10), SweepRow{}, reached_row(8, 7)};
  EXPECT_THROW(u_shape(r), InsufficientData);
}

TEST(StationaryLevel, PlainGradientDescentSettlesAtZero) {
  const FiniteSumProblem p = half_square_1d();
  EXPECT_LT(stationary_level(p, sgd_spec(0.5, Vector::Ones(1), 1), 2, 60, 0, 0.5), 1e-15);
  EXPECT_THROW(stationary_level(p, sgd_spec(0.5, Vector::Ones(1), 1), 2, 60, 0, 0.0),
               InvalidHyperParams);
}
