#include "batchstep/problems.hpp"

#include <cmath>
#include <memory>
#include <numeric>
#include <utility>

#include <fmt/format.h>

#include "batchstep/errors.hpp"

namespace batchstep {

FiniteSumProblem::FiniteSumProblem(std::string name, std::size_t n, std::size_t d,
                                   ValueOracle value, GradientOracle gradient,
                                   std::optional<double> lipschitz_bound,
                                   std::optional<std::vector<Interval>> domain_box)
    : name_(std::move(name)),
      n_(n),
      d_(d),
      value_(std::move(value)),
      gradient_(std::move(gradient)),
      lipschitz_(lipschitz_bound),
      box_(std::move(domain_box)) {
  if (n_ == 0 || d_ == 0) {
    throw InvalidHyperParams(fmt::format("problem '{}' needs n >= 1 and d >= 1", name_));
  }
  if (lipschitz_ && !(*lipschitz_ > 0.0)) {
    throw InvalidHyperParams("lipschitz bound must be positive");
  }
  if (box_ && box_->size() != d_) {
    throw InvalidHyperParams("domain box must have one interval per coordinate");
  }
}

void FiniteSumProblem::check_index(std::size_t i) const {
  if (i >= n_) {
    throw IndexOutOfRange(fmt::format("component index {} outside [0, {})", i, n_));
  }
}

double FiniteSumProblem::component_value(std::size_t i, const Vector& x) const {
  check_index(i);
  return value_(i, x);
}

Vector FiniteSumProblem::component_gradient(std::size_t i, const Vector& x) const {
  check_index(i);
  return gradient_(i, x);
}

double FiniteSumProblem::value(const Vector& x) const {
  double total = 0.0;
  for (std::size_t i = 0; i < n_; ++i) total += value_(i, x);
  return total / static_cast<double>(n_);
}

Vector FiniteSumProblem::gradient(const Vector& x) const {
  Vector total = Vector::Zero(static_cast<Eigen::Index>(d_));
  for (std::size_t i = 0; i < n_; ++i) total += gradient_(i, x);
  return total / static_cast<double>(n_);
}

EpochSampler::EpochSampler(std::size_t n, std::size_t batch_size, std::uint64_t seed)
    : permutation_(n), batch_size_(batch_size), cursor_(0), rng_(seed) {
  if (batch_size < 1 || batch_size > n) {
    throw InvalidBatchSize(fmt::format("batch size {} outside [1, {}]", batch_size, n));
  }
  std::iota(permutation_.begin(), permutation_.end(), std::size_t{0});
  reshuffle();
}

void EpochSampler::reshuffle() {
  // Fisher-Yates over the identity permutation; see random.hpp for why
  // std::shuffle is avoided.
  std::iota(permutation_.begin(), permutation_.end(), std::size_t{0});
  for (std::size_t i = permutation_.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(uniform_below(rng_, i));
    std::swap(permutation_[i - 1], permutation_[j]);
  }
  cursor_ = 0;
}

IndexSet EpochSampler::next_batch() {
  if (cursor_ + batch_size_ > permutation_.size()) reshuffle();
  IndexSet batch(permutation_.begin() + static_cast<std::ptrdiff_t>(cursor_),
                 permutation_.begin() + static_cast<std::ptrdiff_t>(cursor_ + batch_size_));
  cursor_ += batch_size_;
  return batch;
}

static void check_batch(const FiniteSumProblem& problem, const IndexSet& batch) {
  if (batch.empty()) throw InvalidBatchSize("batch must be nonempty");
  for (std::size_t i : batch) {
    if (i >= problem.n()) {
      throw IndexOutOfRange(fmt::format("batch index {} outside [0, {})", i, problem.n()));
    }
  }
}

Vector batch_gradient(const FiniteSumProblem& problem, const Vector& x, const IndexSet& batch) {
  check_batch(problem, batch);
  Vector total = Vector::Zero(static_cast<Eigen::Index>(problem.d()));
  for (std::size_t i : batch) total += problem.component_gradient(i, x);
  return total / static_cast<double>(batch.size());
}

double batch_gradient_norm_sum(const FiniteSumProblem& problem, const Vector& x,
                               const IndexSet& batch) {
  check_batch(problem, batch);
  double total = 0.0;
  for (std::size_t i : batch) total += problem.component_gradient(i, x).norm();
  return total;
}

BuiltinProblem parse_builtin_problem(std::string_view name) {
  if (name == "quadratic_sum") return BuiltinProblem::quadratic_sum;
  if (name == "sine_quadratic") return BuiltinProblem::sine_quadratic;
  if (name == "rosenbrock_sum") return BuiltinProblem::rosenbrock_sum;
  if (name == "noisy_quadratic") return BuiltinProblem::noisy_quadratic;
  throw UnknownProblem(fmt::format("unknown problem '{}'", name));
}

std::string_view to_string(BuiltinProblem kind) {
  switch (kind) {
    case BuiltinProblem::quadratic_sum: return "quadratic_sum";
    case BuiltinProblem::sine_quadratic: return "sine_quadratic";
    case BuiltinProblem::rosenbrock_sum: return "rosenbrock_sum";
    case BuiltinProblem::noisy_quadratic: return "noisy_quadratic";
  }
  return "unknown";
}

namespace {

using Centers = std::shared_ptr<const std::vector<Vector>>;

Centers make_centers(const ProblemParams& params, bool recenter) {
  std::vector<Vector> centers;
  if (params.centers) {
    centers = *params.centers;
    if (centers.size() != params.n) {
      throw InvalidHyperParams(
          fmt::format("expected {} centers, got {}", params.n, centers.size()));
    }
    for (const Vector& c : centers) {
      if (static_cast<std::size_t>(c.size()) != params.d) {
        throw InvalidHyperParams("center dimension does not match d");
      }
    }
  } else {
    Rng rng(params.seed);
    centers.reserve(params.n);
    for (std::size_t i = 0; i < params.n; ++i) {
      Vector c(static_cast<Eigen::Index>(params.d));
      for (Eigen::Index j = 0; j < c.size(); ++j) {
        c[j] = params.center_scale * standard_normal(rng);
      }
      centers.push_back(std::move(c));
    }
  }
  if (recenter) {
    Vector mean = Vector::Zero(static_cast<Eigen::Index>(params.d));
    for (const Vector& c : centers) mean += c;
    mean /= static_cast<double>(centers.size());
    for (Vector& c : centers) c -= mean;
  }
  return std::make_shared<const std::vector<Vector>>(std::move(centers));
}

FiniteSumProblem make_quadratic(std::string name, const ProblemParams& params, bool recenter) {
  Centers centers = make_centers(params, recenter);
  auto value = [centers](std::size_t i, const Vector& x) {
    return 0.5 * (x - (*centers)[i]).squaredNorm();
  };
  auto gradient = [centers](std::size_t i, const Vector& x) -> Vector {
    return x - (*centers)[i];
  };
  return FiniteSumProblem(std::move(name), params.n, params.d, value, gradient, 1.0,
                          params.domain_box);
}

FiniteSumProblem make_sine_quadratic(const ProblemParams& params) {
  if (!(params.lambda >= 0.0)) throw InvalidHyperParams("lambda must be nonnegative");
  Centers centers = make_centers(params, false);
  const double lambda = params.lambda;
  auto value = [centers, lambda](std::size_t i, const Vector& x) {
    return 0.5 * (x - (*centers)[i]).squaredNorm() + lambda * x.array().sin().sum();
  };
  auto gradient = [centers, lambda](std::size_t i, const Vector& x) -> Vector {
    return x - (*centers)[i] + lambda * x.array().cos().matrix();
  };
  return FiniteSumProblem("sine_quadratic", params.n, params.d, value, gradient,
                          1.0 + lambda, params.domain_box);
}

FiniteSumProblem make_rosenbrock(const ProblemParams& params) {
  if (params.d < 2) throw InvalidHyperParams("rosenbrock_sum needs d >= 2");
  // a_ij = 1 + scale * z_ij; every f_i has its own valley.
  Centers offsets = make_centers(params, false);
  auto value = [offsets](std::size_t i, const Vector& x) {
    const Vector& a = (*offsets)[i];
    double total = 0.0;
    for (Eigen::Index j = 0; j + 1 < x.size(); ++j) {
      const double valley = x[j + 1] - x[j] * x[j];
      const double shift = 1.0 + a[j] - x[j];
      total += valley * valley + shift * shift;
    }
    return total;
  };
  auto gradient = [offsets](std::size_t i, const Vector& x) -> Vector {
    const Vector& a = (*offsets)[i];
    Vector g = Vector::Zero(x.size());
    for (Eigen::Index j = 0; j + 1 < x.size(); ++j) {
      const double valley = x[j + 1] - x[j] * x[j];
      const double shift = 1.0 + a[j] - x[j];
      g[j] += -4.0 * x[j] * valley - 2.0 * shift;
      g[j + 1] += 2.0 * valley;
    }
    return g;
  };
  return FiniteSumProblem("rosenbrock_sum", params.n, params.d, value, gradient, std::nullopt,
                          params.domain_box);
}

}  // namespace

FiniteSumProblem builtin_problem(BuiltinProblem kind, const ProblemParams& params) {
  if (params.n == 0 || params.d == 0) throw InvalidHyperParams("n and d must be positive");
  switch (kind) {
    case BuiltinProblem::quadratic_sum: return make_quadratic("quadratic_sum", params, false);
    case BuiltinProblem::sine_quadratic: return make_sine_quadratic(params);
    case BuiltinProblem::rosenbrock_sum: return make_rosenbrock(params);
    case BuiltinProblem::noisy_quadratic: return make_quadratic("noisy_quadratic", params, true);
  }
  throw UnknownProblem("unknown problem kind");
}

FiniteSumProblem builtin_problem(std::string_view name, const ProblemParams& params) {
  return builtin_problem(parse_builtin_problem(name), params);
}

}  // namespace batchstep
