#pragma once

// MLP embedding extractor with a terminal L2 normalization, followed by a
// linear classifier head. Forward and backward passes are explicit; the
// backward pass accepts an extra gradient at the raw embedding so metric
// losses can be added to cross-entropy.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "angdist/geometry.hpp"
#include "angdist/gradients.hpp"
#include "angdist/matrix.hpp"

namespace angdist {

enum class Activation { Relu, Tanh };

std::string to_string(Activation activation);
Activation parse_activation(const std::string& name);

/// Fully connected layer, y = x W^T + b with W of shape (out, in).
struct DenseLayer {
  Matrix weight;
  std::vector<double> bias;

  std::size_t in_dim() const noexcept { return weight.cols(); }
  std::size_t out_dim() const noexcept { return weight.rows(); }

  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

struct ModelConfig {
  std::size_t input_dim = 0;
  std::vector<std::size_t> hidden = {128, 128};
  std::size_t embedding_dim = 16;
  std::size_t classes = 0;
  Activation activation = Activation::Relu;
};

/// Extractor layers map input -> hidden... -> embedding (the last extractor
/// layer is linear); the head maps embedding -> logits.
struct MlpParams {
  std::vector<DenseLayer> extractor;
  DenseLayer head;
  Activation activation = Activation::Relu;

  std::size_t input_dim() const noexcept { return extractor.front().in_dim(); }
  std::size_t embedding_dim() const noexcept { return extractor.back().out_dim(); }
  std::size_t classes() const noexcept { return head.out_dim(); }
  std::size_t parameter_count() const noexcept;

  /// Throws InvalidArgument on broken shape chains or non-finite values.
  void validate() const;

  /// Visits every parameter array in a fixed order: extractor layers
  /// (weight, bias) then head (weight, bias).
  template <typename Fn>
  void for_each_array(Fn&& fn) {
    for (auto& layer : extractor) {
      fn(layer.weight.data());
      fn(layer.bias);
    }
    fn(head.weight.data());
    fn(head.bias);
  }
  template <typename Fn>
  void for_each_array(Fn&& fn) const {
    for (const auto& layer : extractor) {
      fn(layer.weight.data());
      fn(layer.bias);
    }
    fn(head.weight.data());
    fn(head.bias);
  }

  friend bool operator==(const MlpParams&, const MlpParams&) = default;
};

/// Same layout as MlpParams, holding gradients.
using MlpGrads = MlpParams;

/// Uniform He-style fan-in initialization, zero biases.
MlpParams init_mlp(const ModelConfig& config, std::uint64_t seed);

MlpGrads zeros_like(const MlpParams& params);

struct ForwardTrace {
  Matrix input;
  std::vector<Matrix> pre;   ///< extractor pre-activations, one per layer
  std::vector<Matrix> post;  ///< extractor outputs, one per layer (last == raw embedding)
  Matrix raw_embedding;
  Matrix unit_embedding;
  Matrix logits;
  Matrix probabilities;
};

ForwardTrace forward(const MlpParams& params, const Matrix& inputs);

struct CrossEntropy {
  double loss = 0.0;
  Matrix dlogits;
};

inline constexpr double kLogFloor = 1e-12;

/// Mean over rows of -sum_j y_j log max(p_j, 1e-12); dlogits = (p - y) / B.
CrossEntropy cross_entropy(const Matrix& probabilities, const std::vector<LabelVector>& labels);

/// Backpropagates logit gradients through the head and the normalization,
/// adds `d_raw_embedding` at the raw embedding, then continues through the
/// extractor.
MlpGrads backward(const MlpParams& params, const ForwardTrace& trace, const Matrix& dlogits,
                  const GradientBuffer& d_raw_embedding);

/// Row-wise softmax, shifted by the row maximum.
Matrix softmax(const Matrix& logits);

/// Checkpoint file: JSON document of named arrays with shape headers.
void save_checkpoint(const MlpParams& params, const std::filesystem::path& path);
MlpParams load_checkpoint(const std::filesystem::path& path);

inline constexpr int kCheckpointVersion = 1;
inline constexpr const char* kCheckpointFormat = "angdist-mlp";

}  // namespace angdist
