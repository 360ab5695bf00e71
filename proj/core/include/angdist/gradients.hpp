#pragma once

// Closed-form gradients of the ADD losses with respect to raw
// (pre-normalization) embeddings, plus the central-difference oracle
// used to verify them.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

#include "angdist/geometry.hpp"
#include "angdist/matrix.hpp"

namespace angdist {

inline constexpr double kDefaultFiniteDifferenceStep = 1e-5;

/// d loss / d raw_i, one row per embedding.
class GradientBuffer {
 public:
  GradientBuffer() = default;
  /// Throws NonFiniteGradient if any entry is NaN or infinite.
  explicit GradientBuffer(Matrix per_embedding);

  static GradientBuffer zeros(std::size_t count, std::size_t dim) {
    return GradientBuffer(Matrix(count, dim));
  }

  const Matrix& per_embedding() const noexcept { return grads_; }
  std::size_t count() const noexcept { return grads_.rows(); }
  std::size_t dim() const noexcept { return grads_.cols(); }

 private:
  Matrix grads_;
};

struct LossWithGradient {
  double loss = 0.0;
  GradientBuffer grads;
};

/// Batch built by normalizing each row of `raw`.
Batch batch_from_raw(const Matrix& raw, const std::vector<LabelVector>& labels);

LossWithGradient add_loss_hard_grad(const Matrix& raw, const std::vector<LabelVector>& labels,
                                    const LossWeights& weights);

LossWithGradient add_loss_soft_grad(const Matrix& raw, const std::vector<LabelVector>& labels,
                                    double lambda_mu, double lambda_sigma_p);

/// Maps a gradient with respect to z = u/||u|| back onto u:
/// (I - z z^T) g / ||u||.
void project_through_normalization(std::span<const double> raw, std::span<const double> unit,
                                   std::span<const double> grad_unit, std::span<double> grad_raw);

using MatrixLoss = std::function<double(const Matrix&)>;
using ExtendedMatrixLoss = std::function<long double(const Matrix&)>;

/// Central differences (f(x + h e) - f(x - h e)) / 2h for every coordinate.
/// The denominator is the step actually taken after rounding x +- h.
Matrix finite_difference_grad(const MatrixLoss& loss_fn, const Matrix& point,
                              double h = kDefaultFiniteDifferenceStep);
/// Same, differencing a long double evaluation of the loss.
Matrix finite_difference_grad(const ExtendedMatrixLoss& loss_fn, const Matrix& point,
                              double h = kDefaultFiniteDifferenceStep);

/// |a - b| / max(|a|, |b|), taken over coordinates where max(|a|, |b|)
/// exceeds `floor`. Returns 0 when no coordinate qualifies.
double max_relative_error(std::span<const double> analytic, std::span<const double> numeric,
                          double floor = 1e-8);

struct GradCheckConfig {
  std::size_t min_dim = 2;
  std::size_t max_dim = 8;
  std::size_t min_batch = 2;
  std::size_t max_batch = 16;
  std::size_t trials = 100;
  std::size_t weight_draws = 5;
  double step = kDefaultFiniteDifferenceStep;
  std::uint64_t seed = 0;
};

struct GradCheckResult {
  double max_error_hard = 0.0;
  double max_error_soft = 0.0;
  /// Largest |g . raw_i| / (|g| ||raw_i||) seen, which must vanish.
  double max_radial_component = 0.0;
  std::size_t evaluations = 0;

  double max_error() const noexcept {
    return max_error_hard > max_error_soft ? max_error_hard : max_error_soft;
  }
};

/// Randomized comparison of the analytic ADD gradients against central
/// differences of the extended-precision reference losses, hard and soft
/// variants, over random batches, labels and nonnegative weights.
GradCheckResult run_gradient_check(const GradCheckConfig& config);

}  // namespace angdist
