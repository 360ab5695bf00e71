#pragma once

// Forward computation of angular distances, intra/inter-class pair sets,
// their first and second moments, and the angular distance distribution
// (ADD) loss in its hard-label and soft-label forms.

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "angdist/matrix.hpp"

namespace angdist {

/// L2-normalized embedding. Only constructible through normalize() or
/// from_unit(), so every instance has norm 1 within 1e-9 and k >= 2.
class UnitEmbedding {
 public:
  static UnitEmbedding from_unit(std::vector<double> values);

  std::size_t dim() const noexcept { return values_.size(); }
  std::span<const double> values() const noexcept { return values_; }
  double operator[](std::size_t i) const noexcept { return values_[i]; }

  friend bool operator==(const UnitEmbedding&, const UnitEmbedding&) = default;

 private:
  explicit UnitEmbedding(std::vector<double> values) : values_(std::move(values)) {}
  friend UnitEmbedding normalize(std::span<const double> raw);

  std::vector<double> values_;
};

/// Per-class probability vector; one-hot for hard labels.
class LabelVector {
 public:
  explicit LabelVector(std::vector<double> probs);
  static LabelVector one_hot(std::size_t classes, std::size_t index);

  std::size_t classes() const noexcept { return probs_.size(); }
  std::span<const double> probs() const noexcept { return probs_; }
  double operator[](std::size_t i) const noexcept { return probs_[i]; }

  /// Exactly one entry equals 1 and the rest are 0.
  bool is_hard() const noexcept;
  /// Index of the largest probability; ties go to the lowest index.
  std::size_t argmax() const noexcept;

  friend bool operator==(const LabelVector&, const LabelVector&) = default;

 private:
  std::vector<double> probs_;
};

class Batch {
 public:
  Batch(std::vector<UnitEmbedding> embeddings, std::vector<LabelVector> labels);

  std::size_t size() const noexcept { return embeddings_.size(); }
  std::size_t embedding_dim() const noexcept { return embeddings_.front().dim(); }
  std::size_t classes() const noexcept { return labels_.front().classes(); }
  const std::vector<UnitEmbedding>& embeddings() const noexcept { return embeddings_; }
  const std::vector<LabelVector>& labels() const noexcept { return labels_; }
  bool all_hard() const noexcept;

 private:
  std::vector<UnitEmbedding> embeddings_;
  std::vector<LabelVector> labels_;
};

/// Squared intra-class distances (positives) and squared complements of
/// inter-class distances (negatives), one entry per unordered pair.
struct PairPartition {
  std::vector<double> d_p;
  std::vector<double> d_n;
};

struct DistanceStats {
  double mu_p = 0.0;
  double sigma_p = 0.0;
  double mu_n = 0.0;
  double sigma_n = 0.0;
  std::size_t n_p = 0;
  std::size_t n_n = 0;
};

/// Nonnegative weights of the four ADD terms.
struct LossWeights {
  double mu_p = 0.0;
  double sigma_p = 0.0;
  double mu_n = 0.0;
  double sigma_n = 0.0;

  LossWeights() = default;
  LossWeights(double mu_p, double sigma_p, double mu_n, double sigma_n);

  /// Parses "1,0,1,0" or the compact digit form "1010".
  static LossWeights parse(const std::string& text);
  /// Compact tag: "1010" when every weight is a single digit integer,
  /// otherwise the comma form.
  std::string tag() const;
  bool all_zero() const noexcept {
    return mu_p == 0.0 && sigma_p == 0.0 && mu_n == 0.0 && sigma_n == 0.0;
  }

  friend bool operator==(const LossWeights&, const LossWeights&) = default;
};

struct Moments {
  double mean = 0.0;
  double sample_std = 0.0;
};

struct HardLoss {
  double loss = 0.0;
  DistanceStats stats;
};

UnitEmbedding normalize(std::span<const double> raw);

/// 1 - a.b clamped to [0, 2].
double cosine_distance(const UnitEmbedding& a, const UnitEmbedding& b);

/// 1 - y_i.y_j on raw probability vectors (0 for equal one-hot labels, 1 otherwise).
double label_distance(const LabelVector& a, const LabelVector& b);

PairPartition partition_pairs(const Batch& batch);

/// Mean and sample standard deviation (denominator n-1). Empty input gives
/// (0, 0); a single value v gives (v, 0).
Moments moments(std::span<const double> values) noexcept;

DistanceStats distance_stats(const PairPartition& partition) noexcept;

HardLoss add_loss_hard(const Batch& batch, const LossWeights& weights);

/// Mean over ordered pairs i != j of (d_c(y_i, y_j) - d_c(z_i, z_j))^2.
double l_mu_soft(const Batch& batch);

/// Squared distances of the unordered pairs whose labels share an argmax.
std::vector<double> soft_positive_values(const Batch& batch);

double add_loss_soft(const Batch& batch, double lambda_mu, double lambda_sigma_p);

}  // namespace angdist
