#pragma once

#include <cstddef>
#include <string_view>

#include "batchstep/problems.hpp"

namespace batchstep {

// Diagonal preconditioner families. identity covers SGD and N-Momentum.
enum class Strategy { identity, amsgrad, amsbound, adabelief };

// User-facing optimizer names; each maps onto a strategy plus constraints on
// the hyperparameters (sgd: beta = b = gamma = 0; nmomentum: gamma = 0).
enum class OptimizerKind { sgd, nmomentum, amsgrad, amsbound, adabelief };

enum class AlphaSchedule { constant, inv_sqrt };
enum class BetaSchedule { constant, geometric };

// How the batch gradient enters the momentum update.
//   mean:     g = (1/s) sum_{i in S} grad f_i(x)
//   s_scaled: g = mean / s, so that E[g] = grad f / s
enum class Estimator { mean, s_scaled };

OptimizerKind parse_optimizer_kind(std::string_view name);
AlphaSchedule parse_alpha_schedule(std::string_view name);
BetaSchedule parse_beta_schedule(std::string_view name);
Estimator parse_estimator(std::string_view name);
std::string_view to_string(OptimizerKind kind);
std::string_view to_string(Strategy strategy);
std::string_view to_string(AlphaSchedule schedule);
std::string_view to_string(BetaSchedule schedule);
std::string_view to_string(Estimator estimator);

Strategy strategy_for(OptimizerKind kind);

struct HyperParams {
  double alpha = 1e-3;
  AlphaSchedule alpha_schedule = AlphaSchedule::constant;
  double beta = 0.0;
  double beta_cap = 0.0;  // b, with beta <= b < 1
  BetaSchedule beta_schedule = BetaSchedule::constant;
  double gamma = 0.0;     // bias-correction base
  double delta = 0.9;     // second-moment decay
  double zeta = 0.9;      // AdaBelief bias-correction base
  Vector h0;              // diagonal of H_0; empty means all ones
  double bound_lo = 0.1;  // AMSBound clip bounds l <= u
  double bound_hi = 10.0;
  Estimator estimator = Estimator::mean;
  double divergence_guard = 1e8;

  // Throws InvalidHyperParams (or InvalidBounds for l > u).
  void validate(std::size_t d) const;
};

// Applies the hyperparameter constraints of `kind`: sgd zeroes beta, b and gamma;
// nmomentum zeroes gamma; the adaptive kinds pass through.
HyperParams constrain_for(OptimizerKind kind, HyperParams hp);

struct OptimizerState {
  std::size_t k = 0;  // number of completed steps
  Strategy strategy = Strategy::identity;
  Vector x;
  Vector m;       // m_{k-1}; zero before the first step
  Vector h;       // diagonal of the current H
  Vector v;       // AMSGrad/AMSBound EMA of g*g
  Vector v_hat;   // running max of v, seeded with h0*h0
  Vector s_acc;   // AdaBelief EMA of (g - m)^2
  Vector s_hat;   // running max of the bias-corrected s_acc, seeded with h0*h0
  std::size_t max_binds = 0;  // AdaBelief coordinates where the running max held

  // State before the first step. H_0 is h0 for amsgrad/adabelief, the clipped
  // image 1/Clip(1/h0, l, u) for amsbound, and the identity for SGD-type runs.
  static OptimizerState initial(const Vector& x0, const HyperParams& hp, Strategy strategy);
};

// Quantities monitored per step. Row k describes the update x_{k-1} -> x_k:
// m, d and the batch-gradient sum belong to that update, grad_norm_sq is
// ||grad f(x_k)||^2 at the new iterate.
struct StepLog {
  std::size_t k = 0;
  double grad_norm_sq = 0.0;
  double m_norm_sq = 0.0;
  double d_hnorm_sq = 0.0;            // sum_i h_i d_i^2
  double batch_grad_sum_norm = 0.0;   // sum_{i in S} ||grad f_i(x_{k-1})||
  double alpha_k = 0.0;
  double beta_k = 0.0;
  double h_min = 0.0;
  double h_max = 0.0;
  bool h_monotone = true;             // h_new >= h_old coordinatewise, exactly
};

// l if x < l, x on [l, u], u if x > u. Throws InvalidBounds when l > u.
double clip(double x, double l, double u);

// k >= 1. constant -> alpha, inv_sqrt -> alpha / sqrt(k).
double schedule_alpha(const HyperParams& hp, std::size_t k);
// k >= 1. constant -> beta, geometric -> beta^k.
double schedule_beta(const HyperParams& hp, std::size_t k);

// Advances h (and the strategy's accumulators) from the batch gradient g.
// Expects state.m to already hold m_k for the current step.
void update_h(OptimizerState& state, const HyperParams& hp, const Vector& g);

// One iteration of the unified optimizer on the given batch. Mutates state and
// returns the monitored quantities. Throws NonFiniteInput for a non-finite
// gradient and DivergenceDetected when ||x|| exceeds hp.divergence_guard.
StepLog step(const FiniteSumProblem& problem, OptimizerState& state, const HyperParams& hp,
             const IndexSet& batch);

}  // namespace batchstep
