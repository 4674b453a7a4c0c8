#include "batchstep/optimizer.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "batchstep/errors.hpp"

namespace batchstep {

OptimizerKind parse_optimizer_kind(std::string_view name) {
  if (name == "sgd") return OptimizerKind::sgd;
  if (name == "nmomentum") return OptimizerKind::nmomentum;
  if (name == "amsgrad") return OptimizerKind::amsgrad;
  if (name == "amsbound") return OptimizerKind::amsbound;
  if (name == "adabelief") return OptimizerKind::adabelief;
  throw InvalidHyperParams(fmt::format("unknown optimizer kind '{}'", name));
}

AlphaSchedule parse_alpha_schedule(std::string_view name) {
  if (name == "constant") return AlphaSchedule::constant;
  if (name == "inv_sqrt") return AlphaSchedule::inv_sqrt;
  throw InvalidHyperParams(fmt::format("unknown alpha schedule '{}'", name));
}

BetaSchedule parse_beta_schedule(std::string_view name) {
  if (name == "constant") return BetaSchedule::constant;
  if (name == "geometric") return BetaSchedule::geometric;
  throw InvalidHyperParams(fmt::format("unknown beta schedule '{}'", name));
}

Estimator parse_estimator(std::string_view name) {
  if (name == "mean") return Estimator::mean;
  if (name == "s_scaled") return Estimator::s_scaled;
  throw InvalidHyperParams(fmt::format("unknown estimator '{}'", name));
}

std::string_view to_string(OptimizerKind kind) {
  switch (kind) {
    case OptimizerKind::sgd: return "sgd";
    case OptimizerKind::nmomentum: return "nmomentum";
    case OptimizerKind::amsgrad: return "amsgrad";
    case OptimizerKind::amsbound: return "amsbound";
    case OptimizerKind::adabelief: return "adabelief";
  }
  return "unknown";
}

std::string_view to_string(Strategy strategy) {
  switch (strategy) {
    case Strategy::identity: return "identity";
    case Strategy::amsgrad: return "amsgrad";
    case Strategy::amsbound: return "amsbound";
    case Strategy::adabelief: return "adabelief";
  }
  return "unknown";
}

std::string_view to_string(AlphaSchedule schedule) {
  return schedule == AlphaSchedule::constant ? "constant" : "inv_sqrt";
}

std::string_view to_string(BetaSchedule schedule) {
  return schedule == BetaSchedule::constant ? "constant" : "geometric";
}

std::string_view to_string(Estimator estimator) {
  return estimator == Estimator::mean ? "mean" : "s_scaled";
}

Strategy strategy_for(OptimizerKind kind) {
  switch (kind) {
    case OptimizerKind::sgd:
    case OptimizerKind::nmomentum: return Strategy::identity;
    case OptimizerKind::amsgrad: return Strategy::amsgrad;
    case OptimizerKind::amsbound: return Strategy::amsbound;
    case OptimizerKind::adabelief: return Strategy::adabelief;
  }
  return Strategy::identity;
}

void HyperParams::validate(std::size_t d) const {
  auto in_unit = [](double v) { return v >= 0.0 && v < 1.0; };
  if (!(alpha > 0.0 && alpha <= 1.0)) {
    throw InvalidHyperParams(fmt::format("alpha = {} outside (0, 1]", alpha));
  }
  if (!in_unit(beta_cap)) throw InvalidHyperParams("beta_cap outside [0, 1)");
  if (!(beta >= 0.0 && beta <= beta_cap)) {
    throw InvalidHyperParams(fmt::format("beta = {} outside [0, b = {}]", beta, beta_cap));
  }
  if (!in_unit(gamma)) throw InvalidHyperParams("gamma outside [0, 1)");
  if (!in_unit(delta)) throw InvalidHyperParams("delta outside [0, 1)");
  if (!in_unit(zeta)) throw InvalidHyperParams("zeta outside [0, 1)");
  if (h0.size() != 0) {
    if (static_cast<std::size_t>(h0.size()) != d) {
      throw InvalidHyperParams(fmt::format("h0 has {} entries, expected {}", h0.size(), d));
    }
    if (!(h0.array() > 0.0).all() || !h0.allFinite()) {
      throw InvalidHyperParams("h0 must be strictly positive");
    }
  }
  if (bound_lo > bound_hi) {
    throw InvalidBounds(fmt::format("bound_lo = {} > bound_hi = {}", bound_lo, bound_hi));
  }
  if (!(bound_lo > 0.0)) throw InvalidHyperParams("bound_lo must be positive");
  if (!(divergence_guard > 0.0)) throw InvalidHyperParams("divergence_guard must be positive");
}

HyperParams constrain_for(OptimizerKind kind, HyperParams hp) {
  switch (kind) {
    case OptimizerKind::sgd:
      hp.beta = 0.0;
      hp.beta_cap = 0.0;
      hp.gamma = 0.0;
      break;
    case OptimizerKind::nmomentum:
      hp.gamma = 0.0;
      break;
    default:
      break;
  }
  return hp;
}

OptimizerState OptimizerState::initial(const Vector& x0, const HyperParams& hp,
                                       Strategy strategy) {
  const Eigen::Index d = x0.size();
  hp.validate(static_cast<std::size_t>(d));
  if (!x0.allFinite()) throw NonFiniteInput("initial point must be finite");

  OptimizerState state;
  state.strategy = strategy;
  state.x = x0;
  state.m = Vector::Zero(d);
  state.v = Vector::Zero(d);
  state.s_acc = Vector::Zero(d);
  const Vector h0 = hp.h0.size() == 0 ? Vector::Ones(d) : hp.h0;
  state.v_hat = h0.cwiseProduct(h0);
  state.s_hat = state.v_hat;
  switch (strategy) {
    case Strategy::identity:
      state.h = Vector::Ones(d);
      break;
    case Strategy::amsgrad:
    case Strategy::adabelief:
      state.h = h0;
      break;
    case Strategy::amsbound:
      state.h = h0.unaryExpr(
          [&](double hi) { return 1.0 / clip(1.0 / hi, hp.bound_lo, hp.bound_hi); });
      break;
  }
  return state;
}

double clip(double x, double l, double u) {
  if (l > u) throw InvalidBounds(fmt::format("clip bounds l = {} > u = {}", l, u));
  if (x < l) return l;
  if (x > u) return u;
  return x;
}

double schedule_alpha(const HyperParams& hp, std::size_t k) {
  if (hp.alpha_schedule == AlphaSchedule::constant) return hp.alpha;
  return hp.alpha / std::sqrt(static_cast<double>(k));
}

double schedule_beta(const HyperParams& hp, std::size_t k) {
  if (hp.beta_schedule == BetaSchedule::constant) return hp.beta;
  return std::pow(hp.beta, static_cast<double>(k));
}

void update_h(OptimizerState& state, const HyperParams& hp, const Vector& g) {
  if (!g.allFinite()) throw NonFiniteInput("gradient has non-finite entries");
  switch (state.strategy) {
    case Strategy::identity:
      state.h.setOnes();
      return;
    case Strategy::amsgrad:
      state.v = hp.delta * state.v + (1.0 - hp.delta) * g.cwiseProduct(g);
      state.v_hat = state.v_hat.cwiseMax(state.v);
      state.h = state.v_hat.cwiseSqrt();
      return;
    case Strategy::amsbound:
      state.v = hp.delta * state.v + (1.0 - hp.delta) * g.cwiseProduct(g);
      state.v_hat = state.v_hat.cwiseMax(state.v);
      for (Eigen::Index i = 0; i < state.h.size(); ++i) {
        state.h[i] = 1.0 / clip(1.0 / std::sqrt(state.v_hat[i]), hp.bound_lo, hp.bound_hi);
      }
      return;
    case Strategy::adabelief: {
      const Vector diff = g - state.m;
      state.s_acc = hp.delta * state.s_acc + (1.0 - hp.delta) * diff.cwiseProduct(diff);
      const double correction =
          1.0 - std::pow(hp.zeta, static_cast<double>(state.k + 1));
      const Vector corrected = state.s_acc / correction;
      for (Eigen::Index i = 0; i < corrected.size(); ++i) {
        if (corrected[i] < state.s_hat[i]) {
          ++state.max_binds;
        } else {
          state.s_hat[i] = corrected[i];
        }
      }
      state.h = state.s_hat.cwiseSqrt();
      return;
    }
  }
}

StepLog step(const FiniteSumProblem& problem, OptimizerState& state, const HyperParams& hp,
             const IndexSet& batch) {
  if (batch.empty()) throw InvalidBatchSize("batch must be nonempty");
  const std::size_t t = state.k + 1;

  // One pass over the batch gives both the estimator and sum_i ||grad f_i||.
  Vector g = Vector::Zero(state.x.size());
  double grad_sum_norm = 0.0;
  for (std::size_t i : batch) {
    const Vector gi = problem.component_gradient(i, state.x);
    grad_sum_norm += gi.norm();
    g += gi;
  }
  g /= static_cast<double>(batch.size());
  if (hp.estimator == Estimator::s_scaled) g /= static_cast<double>(batch.size());
  if (!g.allFinite()) throw NonFiniteInput("batch gradient has non-finite entries");

  const double beta_k = schedule_beta(hp, t);
  const double alpha_k = schedule_alpha(hp, t);
  state.m = beta_k * state.m + (1.0 - beta_k) * g;
  const Vector m_hat = state.m / (1.0 - std::pow(hp.gamma, static_cast<double>(t)));

  const Vector h_prev = state.h;
  update_h(state, hp, g);

  const Vector direction = -m_hat.cwiseQuotient(state.h);
  state.x += alpha_k * direction;
  state.k = t;

  const double x_norm = state.x.norm();
  if (!std::isfinite(x_norm) || x_norm > hp.divergence_guard) {
    throw DivergenceDetected(
        fmt::format("||x|| = {} exceeds guard {} at step {}", x_norm, hp.divergence_guard, t));
  }

  StepLog log;
  log.k = t;
  log.grad_norm_sq = problem.gradient(state.x).squaredNorm();
  log.m_norm_sq = state.m.squaredNorm();
  log.d_hnorm_sq = state.h.dot(direction.cwiseProduct(direction));
  log.batch_grad_sum_norm = grad_sum_norm;
  log.alpha_k = alpha_k;
  log.beta_k = beta_k;
  log.h_min = state.h.minCoeff();
  log.h_max = state.h.maxCoeff();
  log.h_monotone = (state.h.array() >= h_prev.array()).all();
  return log;
}

}  // namespace batchstep
