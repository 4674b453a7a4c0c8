#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "batchstep/optimizer.hpp"

namespace batchstep {

// constant_rate:         alpha_k = alpha,         beta_k = beta
// diminishing_rate:      alpha_k = alpha/sqrt(k), beta_k = beta
// diminishing_geometric: alpha_k = alpha/sqrt(k), beta_k = beta^k
enum class Regime { constant_rate, diminishing_rate, diminishing_geometric };

Regime parse_regime(std::string_view name);
std::string_view to_string(Regime regime);

struct TheoryConstants {
  std::size_t d = 1;
  std::size_t n = 1;
  double D = 1.0;
  double L = 1.0;
  double G = 1.0;
  double H = 1.0;
  double h0star = 1.0;
  double b = 0.0;
  double alpha = 1.0;
  double beta = 0.0;
  double gamma = 0.0;
  double epsilon = 1.0;

  // Throws InvalidConstants.
  void validate() const;
};

struct RegimeConstants {
  Regime regime = Regime::constant_rate;
  double A = 0.0;
  double B = 0.0;
  double C = 0.0;
};

struct OptimalBatch {
  double s_star = 0.0;
  double k_star = 0.0;
};

enum class TableKind { sgd, nmomentum, adam_type };

TableKind parse_table_kind(std::string_view name);
std::string_view to_string(TableKind kind);

// G = L n sqrt(d D), the gradient-sum bound on a bounded domain.
double g_from_g1(double L, std::size_t n, std::size_t d, double D);

RegimeConstants regime_constants(const TheoryConstants& tc, Regime regime);

// Real-valued step count K_eps(s). Throws DomainViolation for s <= 0 or, in the
// constant regime, s <= B/(eps^2 - C); InfeasibleBeta when eps^2 <= C outside
// the geometric regime.
double k_eps(const RegimeConstants& rc, double epsilon, double s);
std::size_t k_eps_steps(const RegimeConstants& rc, double epsilon, double s);

// Smallest admissible batch size: B/(eps^2 - C) for the constant regime, 0 otherwise.
double domain_lower_bound(const RegimeConstants& rc, double epsilon);

OptimalBatch optimal_batch(const RegimeConstants& rc, double epsilon);

// Copy of tc with G = L n sqrt(d D) and the row's forced values
// (sgd: beta = b = gamma = 0, H = h0star = 1; nmomentum: gamma = 0, H = h0star = 1).
TheoryConstants specialize(TableKind kind, TheoryConstants tc);

// Closed-form table entries under G = L n sqrt(d D). Only the two
// non-geometric regimes have a table; the geometric one throws InvalidConstants.
OptimalBatch table_row(TableKind kind, const TheoryConstants& tc, Regime regime);

// beta < min{(1-b) eps^2 / (sqrt(dD) G), b}, with beta = b = 0 accepted.
bool beta_feasible(const TheoryConstants& tc);

double upper_bound(const TheoryConstants& tc, Regime regime, double K, double s);

// Exact finite-sum form of the general bound before dividing by K:
//   d s D H / (2 b~ alpha_K) + G^2/(2 b~ g~^2 h0* s) sum alpha_k + sqrt(dD) G / b~ sum beta_k
double master_bound_rhs(const TheoryConstants& tc, AlphaSchedule alpha_schedule,
                        BetaSchedule beta_schedule, std::size_t K, double s);

enum class Sign { negative, zero, positive };
std::string_view to_string(Sign sign);

// Sign of dK_eps/ds; zero within 1e-12 of s*.
Sign dk_ds_sign(const RegimeConstants& rc, double epsilon, double s);

struct ComparisonEntry {
  TheoryConstants tc;  // after the row constraints were applied
  bool feasible = false;
  OptimalBatch best;   // NaN when infeasible
};

// A hypothesis about the constants. threshold is set for the beta conditions;
// holds is empty when the condition degenerates (zero denominator).
struct Condition {
  std::string key;
  std::optional<double> threshold;
  std::optional<bool> holds;
};

// lhs <= rhs for batch sizes, lhs >= rhs for step counts, evaluated directly.
struct Ordering {
  std::string key;
  double lhs = 0.0;
  double rhs = 0.0;
  bool holds = false;
  bool equal = false;  // within 1e-12 relative
};

// "premises imply conclusion" as claimed for this regime. consistent is false
// exactly when every premise holds and the conclusion does not.
struct Implication {
  std::vector<std::string> premises;
  std::string conclusion;
  bool premises_hold = false;
  bool conclusion_holds = false;
  bool consistent = true;
};

struct ComparisonReport {
  Regime regime = Regime::constant_rate;
  double G = 0.0;
  ComparisonEntry sgd;
  ComparisonEntry nm;
  ComparisonEntry adam;
  std::vector<Condition> conditions;
  std::vector<Ordering> orderings;
  std::vector<Implication> implications;
};

// The three constant sets must share G (MismatchedG otherwise). The sgd set is
// forced to beta = b = gamma = 0, H = h0star = 1 and the nm set to gamma = 0,
// H = h0star = 1 before evaluation.
ComparisonReport compare(const TheoryConstants& tc_sgd, const TheoryConstants& tc_nm,
                         const TheoryConstants& tc_adam, Regime regime);

}  // namespace batchstep
