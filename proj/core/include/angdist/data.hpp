#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "angdist/geometry.hpp"
#include "angdist/matrix.hpp"

namespace angdist {

class Dataset {
 public:
  Dataset(Matrix features, std::vector<LabelVector> labels, std::vector<std::string> class_names);

  std::size_t size() const noexcept { return features_.rows(); }
  std::size_t feature_dim() const noexcept { return features_.cols(); }
  std::size_t classes() const noexcept { return class_names_.size(); }

  const Matrix& features() const noexcept { return features_; }
  const std::vector<LabelVector>& labels() const noexcept { return labels_; }
  const std::vector<std::string>& class_names() const noexcept { return class_names_; }

  /// argmax class of every label.
  std::vector<std::size_t> class_ids() const;

  Dataset subset(const std::vector<std::size_t>& indices) const;

 private:
  Matrix features_;
  std::vector<LabelVector> labels_;
  std::vector<std::string> class_names_;
};

std::vector<std::string> default_class_names(std::size_t classes);

struct SynthConfig {
  std::size_t classes = 5;
  std::size_t dim = 16;
  std::size_t per_class = 100;
  double spread = 1.0;
  double separation = 4.0;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Gaussian blobs around `classes` centroids on a sphere of radius
/// `separation`, every pair of centroids at least `separation` apart.
/// Rows are grouped by class.
Dataset generate_synthetic(const SynthConfig& config);

/// Reads a header-first CSV. With `label_column` set, that column holds
/// categorical class names (indexed in first-appearance order); otherwise
/// the columns label_0..label_{c-1} hold class probabilities. All other
/// columns are numeric features.
Dataset load_csv(const std::filesystem::path& path,
                 const std::optional<std::string>& label_column = std::nullopt);

/// Writes features as f_0..f_{d-1} and labels as label_0..label_{c-1}.
void save_csv(const Dataset& dataset, const std::filesystem::path& path);

struct Split {
  Dataset train;
  Dataset eval;
};

/// Stratified by argmax class: each class contributes round(n_c * fraction)
/// rows to eval. Disjoint, covering and deterministic per seed.
Split split_dataset(const Dataset& dataset, double eval_fraction, std::uint64_t seed);

/// Per-epoch shuffled batches of indices in [0, count); the last batch may
/// be short.
std::vector<std::vector<std::size_t>> shuffled_batches(std::size_t count, std::size_t batch_size,
                                                       std::mt19937_64& rng);

enum class MixupMode {
  Beta,   ///< m ~ Beta(alpha, alpha); alpha == 0 disables mixing
  Fixed,  ///< m == value for every pair
};

struct MixupSpec {
  MixupMode mode = MixupMode::Beta;
  double value = 0.0;  ///< alpha for Beta, the coefficient for Fixed

  bool active() const noexcept { return mode == MixupMode::Fixed || value > 0.0; }
};

struct MixedBatch {
  Matrix features;
  std::vector<LabelVector> labels;
  std::vector<double> coefficients;
};

/// Per pair: x = m x_a + (1 - m) x_b and y = m y_a + (1 - m) y_b.
MixedBatch mixup(const std::vector<std::size_t>& batch_a, const std::vector<std::size_t>& batch_b,
                 const Dataset& dataset, const MixupSpec& spec, std::mt19937_64& rng);

/// Beta(alpha, alpha) draw via two gamma variates; returns 1 when alpha == 0.
double sample_symmetric_beta(double alpha, std::mt19937_64& rng);

/// Independent generator for a named component of a seeded run.
std::mt19937_64 make_stream(std::uint64_t seed, std::uint64_t stream);

}  // namespace angdist
