#include "batchstep/theory.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "batchstep/errors.hpp"

namespace batchstep {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

bool positive(double v) { return std::isfinite(v) && v > 0.0; }

void require_feasible(const RegimeConstants& rc, double epsilon) {
  if (!positive(epsilon)) throw DomainViolation("epsilon must be positive");
  if (rc.regime != Regime::diminishing_geometric && epsilon * epsilon <= rc.C) {
    throw InfeasibleBeta(
        fmt::format("eps^2 = {} does not exceed C = {}", epsilon * epsilon, rc.C));
  }
}

bool close_rel(double a, double b, double tol) {
  return std::abs(a - b) <= tol * std::max(std::abs(a), std::abs(b));
}

}  // namespace

Regime parse_regime(std::string_view name) {
  if (name == "constant" || name == "constant_rate") return Regime::constant_rate;
  if (name == "diminishing" || name == "diminishing_rate") return Regime::diminishing_rate;
  if (name == "geometric" || name == "diminishing_geometric") {
    return Regime::diminishing_geometric;
  }
  throw InvalidConstants(fmt::format("unknown regime '{}'", name));
}

std::string_view to_string(Regime regime) {
  switch (regime) {
    case Regime::constant_rate: return "constant_rate";
    case Regime::diminishing_rate: return "diminishing_rate";
    case Regime::diminishing_geometric: return "diminishing_geometric";
  }
  return "unknown";
}

TableKind parse_table_kind(std::string_view name) {
  if (name == "sgd") return TableKind::sgd;
  if (name == "nmomentum" || name == "nm") return TableKind::nmomentum;
  if (name == "adam_type" || name == "adam") return TableKind::adam_type;
  throw InvalidConstants(fmt::format("unknown table kind '{}'", name));
}

std::string_view to_string(TableKind kind) {
  switch (kind) {
    case TableKind::sgd: return "sgd";
    case TableKind::nmomentum: return "nmomentum";
    case TableKind::adam_type: return "adam_type";
  }
  return "unknown";
}

std::string_view to_string(Sign sign) {
  switch (sign) {
    case Sign::negative: return "negative";
    case Sign::zero: return "zero";
    case Sign::positive: return "positive";
  }
  return "unknown";
}

void TheoryConstants::validate() const {
  if (d == 0 || n == 0) throw InvalidConstants("d and n must be positive integers");
  const std::pair<const char*, double> positives[] = {
      {"D", D}, {"L", L}, {"G", G}, {"H", H}, {"h0star", h0star}, {"epsilon", epsilon}};
  for (const auto& [name, value] : positives) {
    if (!positive(value)) throw InvalidConstants(fmt::format("{} = {} must be positive", name, value));
  }
  if (!(alpha > 0.0 && alpha <= 1.0)) throw InvalidConstants("alpha must lie in (0, 1]");
  if (!(b >= 0.0 && b < 1.0)) throw InvalidConstants("b must lie in [0, 1)");
  if (!(beta >= 0.0 && beta <= b)) throw InvalidConstants("beta must lie in [0, b]");
  if (!(gamma >= 0.0 && gamma < 1.0)) throw InvalidConstants("gamma must lie in [0, 1)");
  if (H < h0star) throw InvalidConstants(fmt::format("H = {} below h0star = {}", H, h0star));
}

double g_from_g1(double L, std::size_t n, std::size_t d, double D) {
  return L * static_cast<double>(n) * std::sqrt(static_cast<double>(d) * D);
}

RegimeConstants regime_constants(const TheoryConstants& tc, Regime regime) {
  tc.validate();
  const double bt = 1.0 - tc.b;
  const double gt = 1.0 - tc.gamma;
  const double dD = static_cast<double>(tc.d) * tc.D;

  RegimeConstants rc;
  rc.regime = regime;
  rc.A = dD * tc.H / (2.0 * bt * tc.alpha);
  const double B_half = tc.G * tc.G * tc.alpha / (2.0 * bt * gt * gt * tc.h0star);
  rc.B = regime == Regime::constant_rate ? B_half : tc.G * tc.G * tc.alpha / (bt * gt * gt * tc.h0star);
  rc.C = std::sqrt(dD) * tc.G * tc.beta / bt;
  if (regime == Regime::diminishing_geometric) rc.C /= (1.0 - tc.beta);
  return rc;
}

double domain_lower_bound(const RegimeConstants& rc, double epsilon) {
  require_feasible(rc, epsilon);
  if (rc.regime != Regime::constant_rate) return 0.0;
  return rc.B / (epsilon * epsilon - rc.C);
}

double k_eps(const RegimeConstants& rc, double epsilon, double s) {
  if (!(s > 0.0)) throw DomainViolation(fmt::format("batch size s = {} must be positive", s));
  require_feasible(rc, epsilon);
  const double e2 = epsilon * epsilon;
  switch (rc.regime) {
    case Regime::constant_rate: {
      const double pole = rc.B / (e2 - rc.C);
      if (s <= pole) {
        throw DomainViolation(fmt::format("s = {} not above the pole B/(eps^2 - C) = {}", s, pole));
      }
      return rc.A * s * s / ((e2 - rc.C) * s - rc.B);
    }
    case Regime::diminishing_rate: {
      const double r = (rc.A * s * s + rc.B) / ((e2 - rc.C) * s);
      return r * r;
    }
    case Regime::diminishing_geometric: {
      const double p = rc.A * s * s + rc.B;
      const double r = (p + std::sqrt(p * p + 4.0 * e2 * rc.C * s * s)) / (2.0 * e2 * s);
      return r * r;
    }
  }
  return kNaN;
}

std::size_t k_eps_steps(const RegimeConstants& rc, double epsilon, double s) {
  return static_cast<std::size_t>(std::ceil(k_eps(rc, epsilon, s)));
}

OptimalBatch optimal_batch(const RegimeConstants& rc, double epsilon) {
  require_feasible(rc, epsilon);
  const double e2 = epsilon * epsilon;
  OptimalBatch out;
  switch (rc.regime) {
    case Regime::constant_rate:
      out.s_star = 2.0 * rc.B / (e2 - rc.C);
      out.k_star = 4.0 * rc.A * rc.B / ((e2 - rc.C) * (e2 - rc.C));
      break;
    case Regime::diminishing_rate:
      out.s_star = std::sqrt(rc.B / rc.A);
      out.k_star = 4.0 * rc.A * rc.B / ((e2 - rc.C) * (e2 - rc.C));
      break;
    case Regime::diminishing_geometric: {
      out.s_star = std::sqrt(rc.B / rc.A);
      const double ab = rc.A * rc.B;
      const double r = (std::sqrt(ab) + std::sqrt(ab + e2 * rc.C)) / e2;
      out.k_star = r * r;
      break;
    }
  }
  return out;
}

TheoryConstants specialize(TableKind kind, TheoryConstants tc) {
  switch (kind) {
    case TableKind::sgd:
      tc.beta = 0.0;
      tc.b = 0.0;
      tc.gamma = 0.0;
      tc.H = 1.0;
      tc.h0star = 1.0;
      break;
    case TableKind::nmomentum:
      tc.gamma = 0.0;
      tc.H = 1.0;
      tc.h0star = 1.0;
      break;
    case TableKind::adam_type:
      break;
  }
  tc.G = g_from_g1(tc.L, tc.n, tc.d, tc.D);
  return tc;
}

OptimalBatch table_row(TableKind kind, const TheoryConstants& tc_in, Regime regime) {
  if (regime == Regime::diminishing_geometric) {
    throw InvalidConstants("no table row exists for the geometric-momentum regime");
  }
  const TheoryConstants tc = specialize(kind, tc_in);
  tc.validate();
  const double bt = 1.0 - tc.b;
  const double gt = 1.0 - tc.gamma;
  const double e2 = tc.epsilon * tc.epsilon;
  const double n = static_cast<double>(tc.n);
  const double dDLn = static_cast<double>(tc.d) * tc.D * tc.L * n;
  // (1-b) eps^2 - dDLn beta; reduces to eps^2 for SGD.
  const double margin = bt * e2 - dDLn * tc.beta;
  if (!(margin > 0.0)) {
    throw InfeasibleBeta(fmt::format("beta = {} violates (1-b) eps^2 > dDLn beta", tc.beta));
  }
  const double k_const = dDLn * dDLn * tc.H / (gt * gt * margin * margin * tc.h0star);

  OptimalBatch out;
  if (regime == Regime::constant_rate) {
    out.s_star = static_cast<double>(tc.d) * tc.D * tc.L * tc.L * n * n * tc.alpha /
                 (gt * gt * margin * tc.h0star);
    out.k_star = k_const;
  } else {
    out.s_star = std::sqrt(2.0) * tc.L * n * tc.alpha / (gt * std::sqrt(tc.H * tc.h0star));
    out.k_star = 2.0 * k_const;
  }
  return out;
}

bool beta_feasible(const TheoryConstants& tc) {
  if (tc.beta == 0.0 && tc.b == 0.0) return true;
  const double threshold = (1.0 - tc.b) * tc.epsilon * tc.epsilon /
                           (std::sqrt(static_cast<double>(tc.d) * tc.D) * tc.G);
  return tc.beta < std::min(threshold, tc.b);
}

double upper_bound(const TheoryConstants& tc, Regime regime, double K, double s) {
  if (!(K >= 1.0)) throw DomainViolation("K must be at least 1");
  if (!(s > 0.0)) throw DomainViolation("s must be positive");
  const RegimeConstants rc = regime_constants(tc, regime);
  switch (regime) {
    case Regime::constant_rate:
      return rc.A * s / K + rc.B / s + rc.C;
    case Regime::diminishing_rate:
      return rc.A * s / std::sqrt(K) + rc.B / (s * std::sqrt(K)) + rc.C;
    case Regime::diminishing_geometric:
      return rc.A * s / std::sqrt(K) + rc.B / (s * std::sqrt(K)) + rc.C / K;
  }
  return kNaN;
}

double master_bound_rhs(const TheoryConstants& tc, AlphaSchedule alpha_schedule,
                        BetaSchedule beta_schedule, std::size_t K, double s) {
  if (K < 1) throw DomainViolation("K must be at least 1");
  if (!(s > 0.0)) throw DomainViolation("s must be positive");
  tc.validate();
  HyperParams hp;
  hp.alpha = tc.alpha;
  hp.alpha_schedule = alpha_schedule;
  hp.beta = tc.beta;
  hp.beta_schedule = beta_schedule;

  double alpha_sum = 0.0;
  double beta_sum = 0.0;
  for (std::size_t k = 1; k <= K; ++k) {
    alpha_sum += schedule_alpha(hp, k);
    beta_sum += schedule_beta(hp, k);
  }
  const double bt = 1.0 - tc.b;
  const double gt = 1.0 - tc.gamma;
  const double dD = static_cast<double>(tc.d) * tc.D;
  return dD * s * tc.H / (2.0 * bt * schedule_alpha(hp, K)) +
         tc.G * tc.G / (2.0 * bt * gt * gt * tc.h0star * s) * alpha_sum +
         std::sqrt(dD) * tc.G / bt * beta_sum;
}

Sign dk_ds_sign(const RegimeConstants& rc, double epsilon, double s) {
  k_eps(rc, epsilon, s);  // domain checks
  const double s_star = optimal_batch(rc, epsilon).s_star;
  if (std::abs(s - s_star) <= 1e-12) return Sign::zero;
  const double e2 = epsilon * epsilon;
  const double factor = rc.regime == Regime::constant_rate ? (e2 - rc.C) * s - 2.0 * rc.B
                                                           : rc.A * s * s - rc.B;
  if (factor < 0.0) return Sign::negative;
  if (factor > 0.0) return Sign::positive;
  return Sign::zero;
}

namespace {

ComparisonEntry evaluate_entry(const TheoryConstants& tc, Regime regime) {
  ComparisonEntry entry;
  entry.tc = tc;
  entry.best = {kNaN, kNaN};
  try {
    entry.best = optimal_batch(regime_constants(tc, regime), tc.epsilon);
    entry.feasible = beta_feasible(tc);
  } catch (const InfeasibleBeta&) {
    entry.feasible = false;
  }
  return entry;
}

// beta <= num / den * eps^2; undefined when den == 0.
Condition beta_condition(std::string key, double beta, double num, double den, double e2) {
  Condition c{std::move(key), std::nullopt, std::nullopt};
  if (den == 0.0) return c;
  c.threshold = num / den * e2;
  c.holds = beta <= *c.threshold;
  return c;
}

Ordering batch_le(std::string key, double lhs, double rhs) {
  Ordering o{std::move(key), lhs, rhs, false, false};
  o.equal = close_rel(lhs, rhs, 1e-12);
  o.holds = lhs <= rhs || o.equal;
  return o;
}

Ordering steps_ge(std::string key, double lhs, double rhs) {
  Ordering o{std::move(key), lhs, rhs, false, false};
  o.equal = close_rel(lhs, rhs, 1e-12);
  o.holds = lhs >= rhs || o.equal;
  return o;
}

}  // namespace

ComparisonReport compare(const TheoryConstants& tc_sgd, const TheoryConstants& tc_nm,
                         const TheoryConstants& tc_adam, Regime regime) {
  if (tc_sgd.G != tc_nm.G || tc_sgd.G != tc_adam.G) {
    throw MismatchedG(fmt::format("G differs across optimizers: sgd {}, nm {}, adam {}",
                                  tc_sgd.G, tc_nm.G, tc_adam.G));
  }
  TheoryConstants sgd = tc_sgd;
  sgd.beta = sgd.b = sgd.gamma = 0.0;
  sgd.H = sgd.h0star = 1.0;
  TheoryConstants nm = tc_nm;
  nm.gamma = 0.0;
  nm.H = nm.h0star = 1.0;
  const TheoryConstants& ad = tc_adam;

  ComparisonReport report;
  report.regime = regime;
  report.G = tc_sgd.G;
  report.sgd = evaluate_entry(sgd, regime);
  report.nm = evaluate_entry(nm, regime);
  report.adam = evaluate_entry(ad, regime);

  const double G = report.G;
  const double e2 = ad.epsilon * ad.epsilon;
  const double d = static_cast<double>(ad.d);
  const double gt = 1.0 - ad.gamma;
  const double Ds = sgd.D, Dn = nm.D, Da = ad.D;

  auto& conds = report.conditions;
  conds.push_back({"h0_gamma", std::nullopt, gt * gt <= 1.0 / ad.h0star});
  conds.push_back({"h0_gamma_H", std::nullopt, gt * gt <= 1.0 / (ad.H * ad.h0star)});
  conds.push_back({"gamma_H_sufficient", std::nullopt, gt * ad.H <= 1.0});
  conds.push_back({"d_nm_le_d_adam", std::nullopt, Dn <= Da});
  conds.push_back({"d_equal", std::nullopt, Ds == Dn && Dn == Da});
  conds.push_back(beta_condition("beta_sgd_nm", nm.beta,
                                 (1.0 - nm.b) * std::sqrt(Ds) - std::sqrt(Dn),
                                 std::sqrt(d * Ds * Dn) * G, e2));
  conds.push_back(beta_condition(
      "beta_sgd_adam", ad.beta,
      (1.0 - ad.b) * gt * std::sqrt(Ds * ad.h0star) - std::sqrt(Da * ad.H),
      gt * std::sqrt(d * Ds * Da * ad.h0star) * G, e2));
  conds.push_back(beta_condition(
      "beta_nm_adam", ad.beta,
      (1.0 - ad.b) * (gt * std::sqrt(Dn * ad.h0star) - std::sqrt(Da * ad.H)),
      (gt * std::sqrt(d * Dn * Da * ad.h0star) - std::sqrt(d * Dn * Da * ad.H)) * G, e2));
  {
    const double D = std::max({Ds, Dn, Da});
    conds.push_back(beta_condition("beta_simplified", ad.beta, 1.0 - ad.b,
                                   ad.L * static_cast<double>(ad.n) * d * D, e2));
  }

  auto& ords = report.orderings;
  ords.push_back(batch_le("s_sgd_le_nm", report.sgd.best.s_star, report.nm.best.s_star));
  ords.push_back(batch_le("s_sgd_le_adam", report.sgd.best.s_star, report.adam.best.s_star));
  ords.push_back(batch_le("s_nm_le_adam", report.nm.best.s_star, report.adam.best.s_star));
  ords.push_back(steps_ge("k_sgd_ge_nm", report.sgd.best.k_star, report.nm.best.k_star));
  ords.push_back(steps_ge("k_sgd_ge_adam", report.sgd.best.k_star, report.adam.best.k_star));
  ords.push_back(steps_ge("k_nm_ge_adam", report.nm.best.k_star, report.adam.best.k_star));

  std::vector<std::pair<std::vector<std::string>, std::string>> claims;
  if (regime == Regime::constant_rate) {
    claims = {{{}, "s_sgd_le_nm"},
              {{"h0_gamma"}, "s_sgd_le_adam"},
              {{"h0_gamma", "d_nm_le_d_adam"}, "s_nm_le_adam"}};
  } else {
    claims = {{{"d_equal"}, "s_sgd_le_nm"},
              {{"h0_gamma_H", "d_equal"}, "s_sgd_le_adam"},
              {{"h0_gamma_H", "d_equal"}, "s_nm_le_adam"}};
  }
  if (regime != Regime::diminishing_geometric) {
    claims.push_back({{"beta_sgd_nm"}, "k_sgd_ge_nm"});
    claims.push_back({{"beta_sgd_adam"}, "k_sgd_ge_adam"});
    claims.push_back({{"beta_nm_adam"}, "k_nm_ge_adam"});
    claims.push_back({{"beta_simplified", "d_equal"}, "k_nm_ge_adam"});
  }

  auto condition_holds = [&](const std::string& key) {
    for (const Condition& c : conds) {
      if (c.key == key) return c.holds.value_or(false);
    }
    return false;
  };
  auto ordering_holds = [&](const std::string& key) {
    for (const Ordering& o : ords) {
      if (o.key == key) return o.holds;
    }
    return false;
  };
  for (auto& [premises, conclusion] : claims) {
    Implication imp;
    imp.premises = premises;
    imp.conclusion = conclusion;
    // Every claim is made under beta feasibility of the optimizers involved.
    imp.premises_hold = report.nm.feasible && report.adam.feasible &&
                        std::all_of(premises.begin(), premises.end(), condition_holds);
    imp.conclusion_holds = ordering_holds(conclusion);
    imp.consistent = !imp.premises_hold || imp.conclusion_holds;
    report.implications.push_back(std::move(imp));
  }
  return report;
}

}  // namespace batchstep
