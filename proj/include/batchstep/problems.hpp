#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "batchstep/random.hpp"

namespace batchstep {

using Vector = Eigen::VectorXd;

// Component indices are 0-based: a batch is a subset of {0, ..., n-1}.
using IndexSet = std::vector<std::size_t>;

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

// f(x) = (1/n) sum_i f_i(x) over R^d, with analytic per-component oracles.
// Immutable once built; share freely across concurrent runs.
class FiniteSumProblem {
 public:
  using ValueOracle = std::function<double(std::size_t, const Vector&)>;
  using GradientOracle = std::function<Vector(std::size_t, const Vector&)>;

  FiniteSumProblem(std::string name, std::size_t n, std::size_t d, ValueOracle value,
                   GradientOracle gradient, std::optional<double> lipschitz_bound = {},
                   std::optional<std::vector<Interval>> domain_box = {});

  const std::string& name() const { return name_; }
  std::size_t n() const { return n_; }
  std::size_t d() const { return d_; }
  const std::optional<double>& lipschitz_bound() const { return lipschitz_; }
  const std::optional<std::vector<Interval>>& domain_box() const { return box_; }

  double component_value(std::size_t i, const Vector& x) const;
  Vector component_gradient(std::size_t i, const Vector& x) const;

  double value(const Vector& x) const;
  Vector gradient(const Vector& x) const;

 private:
  void check_index(std::size_t i) const;

  std::string name_;
  std::size_t n_;
  std::size_t d_;
  ValueOracle value_;
  GradientOracle gradient_;
  std::optional<double> lipschitz_;
  std::optional<std::vector<Interval>> box_;
};

// Shuffle-and-slice batch sampler. Each epoch is a fresh permutation of the
// n indices cut into consecutive blocks of s; a trailing partial block
// (n mod s indices) is dropped and the next epoch begins.
class EpochSampler {
 public:
  EpochSampler(std::size_t n, std::size_t batch_size, std::uint64_t seed);

  IndexSet next_batch();

  std::size_t n() const { return permutation_.size(); }
  std::size_t batch_size() const { return batch_size_; }
  std::size_t cursor() const { return cursor_; }
  const IndexSet& permutation() const { return permutation_; }

 private:
  void reshuffle();

  IndexSet permutation_;
  std::size_t batch_size_;
  std::size_t cursor_;
  Rng rng_;
};

// Mean of the component gradients over the batch: (1/|B|) sum_{i in B} grad f_i(x).
Vector batch_gradient(const FiniteSumProblem& problem, const Vector& x, const IndexSet& batch);

// sum_{i in B} ||grad f_i(x)||, the per-step quantity bounded by G.
double batch_gradient_norm_sum(const FiniteSumProblem& problem, const Vector& x,
                               const IndexSet& batch);

enum class BuiltinProblem { quadratic_sum, sine_quadratic, rosenbrock_sum, noisy_quadratic };

BuiltinProblem parse_builtin_problem(std::string_view name);
std::string_view to_string(BuiltinProblem kind);

struct ProblemParams {
  std::size_t n = 16;
  std::size_t d = 2;
  double lambda = 0.0;          // sine amplitude for sine_quadratic
  double center_scale = 1.0;    // spread of the random centers c_i
  std::uint64_t seed = 0;
  std::optional<std::vector<Vector>> centers;  // overrides the random draw
  std::optional<std::vector<Interval>> domain_box;
};

// quadratic_sum:   f_i(x) = 1/2 ||x - c_i||^2, L = 1
// sine_quadratic:  f_i(x) = 1/2 ||x - c_i||^2 + lambda sum_j sin(x_j), L = 1 + lambda
// rosenbrock_sum:  f_i(x) = sum_j (x_{j+1} - x_j^2)^2 + (a_ij - x_j)^2, no global L
// noisy_quadratic: quadratic_sum with centers re-centred to mean zero, so the
//                  minimiser of f is exactly 0 and the spread of the c_i acts as
//                  per-component gradient noise.
FiniteSumProblem builtin_problem(BuiltinProblem kind, const ProblemParams& params);
FiniteSumProblem builtin_problem(std::string_view name, const ProblemParams& params);

}  // namespace batchstep
