#include "angdist/geometry.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <string>

#include "angdist/error.hpp"

namespace angdist {

namespace {

constexpr double kUnitTolerance = 1e-9;
constexpr double kZeroNorm = 1e-12;

std::string shortest(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace

UnitEmbedding UnitEmbedding::from_unit(std::vector<double> values) {
  if (values.size() < 2) {
    throw Error(ErrorCode::InvalidArgument, "embedding dimension must be at least 2");
  }
  const double norm = l2_norm(values);
  if (!(std::abs(norm - 1.0) <= kUnitTolerance)) {
    throw Error(ErrorCode::InvalidArgument,
                "embedding is not unit norm (norm = " + shortest(norm) + ")");
  }
  return UnitEmbedding(std::move(values));
}

UnitEmbedding normalize(std::span<const double> raw) {
  if (raw.size() < 2) {
    throw Error(ErrorCode::InvalidArgument, "embedding dimension must be at least 2");
  }
  const double norm = l2_norm(raw);
  if (!std::isfinite(norm)) {
    throw Error(ErrorCode::InvalidArgument, "embedding has non-finite entries");
  }
  if (norm < kZeroNorm) {
    throw Error(ErrorCode::ZeroVector, "cannot normalize a vector with norm " + shortest(norm));
  }
  std::vector<double> out(raw.begin(), raw.end());
  for (double& v : out) v /= norm;
  return UnitEmbedding(std::move(out));
}

LabelVector::LabelVector(std::vector<double> probs) : probs_(std::move(probs)) {
  if (probs_.empty()) {
    throw Error(ErrorCode::InvalidArgument, "label vector must have at least one class");
  }
  double sum = 0.0;
  for (double p : probs_) {
    if (!(p >= 0.0 && p <= 1.0)) {
      throw Error(ErrorCode::InvalidArgument, "label entry " + shortest(p) + " outside [0, 1]");
    }
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    throw Error(ErrorCode::InvalidArgument, "label entries sum to " + shortest(sum));
  }
}

LabelVector LabelVector::one_hot(std::size_t classes, std::size_t index) {
  if (index >= classes) {
    throw Error(ErrorCode::IndexOutOfRange, "class index " + std::to_string(index) +
                                                " out of range for " + std::to_string(classes) +
                                                " classes");
  }
  std::vector<double> probs(classes, 0.0);
  probs[index] = 1.0;
  return LabelVector(std::move(probs));
}

bool LabelVector::is_hard() const noexcept {
  std::size_t ones = 0;
  for (double p : probs_) {
    if (p == 1.0) {
      ++ones;
    } else if (p != 0.0) {
      return false;
    }
  }
  return ones == 1;
}

std::size_t LabelVector::argmax() const noexcept {
  return static_cast<std::size_t>(std::max_element(probs_.begin(), probs_.end()) -
                                  probs_.begin());
}

Batch::Batch(std::vector<UnitEmbedding> embeddings, std::vector<LabelVector> labels)
    : embeddings_(std::move(embeddings)), labels_(std::move(labels)) {
  if (embeddings_.size() != labels_.size()) {
    throw Error(ErrorCode::DimensionMismatch,
                std::to_string(embeddings_.size()) + " embeddings but " +
                    std::to_string(labels_.size()) + " labels");
  }
  if (embeddings_.size() < 2) {
    throw Error(ErrorCode::InvalidArgument, "a batch needs at least two samples");
  }
  const std::size_t k = embeddings_.front().dim();
  const std::size_t c = labels_.front().classes();
  for (std::size_t i = 0; i < embeddings_.size(); ++i) {
    if (embeddings_[i].dim() != k) {
      throw Error(ErrorCode::DimensionMismatch,
                  "embedding " + std::to_string(i) + " has dimension " +
                      std::to_string(embeddings_[i].dim()) + ", expected " + std::to_string(k));
    }
    if (labels_[i].classes() != c) {
      throw Error(ErrorCode::DimensionMismatch,
                  "label " + std::to_string(i) + " has " + std::to_string(labels_[i].classes()) +
                      " classes, expected " + std::to_string(c));
    }
  }
}

bool Batch::all_hard() const noexcept {
  return std::all_of(labels_.begin(), labels_.end(),
                     [](const LabelVector& y) { return y.is_hard(); });
}

LossWeights::LossWeights(double mu_p, double sigma_p, double mu_n, double sigma_n)
    : mu_p(mu_p), sigma_p(sigma_p), mu_n(mu_n), sigma_n(sigma_n) {
  for (double w : {mu_p, sigma_p, mu_n, sigma_n}) {
    if (!(w >= 0.0) || !std::isfinite(w)) {
      throw Error(ErrorCode::InvalidArgument, "loss weights must be finite and nonnegative");
    }
  }
}

LossWeights LossWeights::parse(const std::string& text) {
  std::vector<double> values;
  if (text.size() == 4 && std::all_of(text.begin(), text.end(),
                                       [](char ch) { return ch >= '0' && ch <= '9'; })) {
    for (char ch : text) values.push_back(ch - '0');
  } else {
    std::size_t start = 0;
    while (start <= text.size()) {
      const std::size_t end = std::min(text.find(',', start), text.size());
      std::string field = text.substr(start, end - start);
      field.erase(0, field.find_first_not_of(" \t"));
      field.erase(field.find_last_not_of(" \t") + 1);
      double v = 0.0;
      auto res = std::from_chars(field.data(), field.data() + field.size(), v);
      if (field.empty() || res.ec != std::errc() || res.ptr != field.data() + field.size()) {
        throw Error(ErrorCode::ParseError, "bad loss weight '" + field + "' in '" + text + "'");
      }
      values.push_back(v);
      start = end + 1;
    }
  }
  if (values.size() != 4) {
    throw Error(ErrorCode::ParseError,
                "expected four loss weights (mu_p,sigma_p,mu_n,sigma_n), got '" + text + "'");
  }
  return LossWeights(values[0], values[1], values[2], values[3]);
}

std::string LossWeights::tag() const {
  const double w[4] = {mu_p, sigma_p, mu_n, sigma_n};
  const bool digits = std::all_of(std::begin(w), std::end(w), [](double v) {
    return v == std::floor(v) && v >= 0.0 && v <= 9.0;
  });
  std::string out;
  for (int i = 0; i < 4; ++i) {
    if (digits) {
      out += static_cast<char>('0' + static_cast<int>(w[i]));
    } else {
      if (i) out += ',';
      out += shortest(w[i]);
    }
  }
  return out;
}

double cosine_distance(const UnitEmbedding& a, const UnitEmbedding& b) {
  if (a.dim() != b.dim()) {
    throw Error(ErrorCode::DimensionMismatch, "cosine distance between dimensions " +
                                                  std::to_string(a.dim()) + " and " +
                                                  std::to_string(b.dim()));
  }
  return std::clamp(1.0 - dot(a.values(), b.values()), 0.0, 2.0);
}

double label_distance(const LabelVector& a, const LabelVector& b) {
  if (a.classes() != b.classes()) {
    throw Error(ErrorCode::DimensionMismatch, "label distance between different class counts");
  }
  return 1.0 - dot(a.probs(), b.probs());
}

PairPartition partition_pairs(const Batch& batch) {
  if (!batch.all_hard()) {
    throw Error(ErrorCode::SoftLabelsUnsupported,
                "pair partition needs one-hot labels; use the soft-label loss");
  }
  const auto& z = batch.embeddings();
  std::vector<std::size_t> cls(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) cls[i] = batch.labels()[i].argmax();

  PairPartition out;
  const std::size_t b = batch.size();
  out.d_p.reserve(b * (b - 1) / 2);
  out.d_n.reserve(b * (b - 1) / 2);
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = i + 1; j < b; ++j) {
      const double d = cosine_distance(z[i], z[j]);
      if (cls[i] == cls[j]) {
        out.d_p.push_back(d * d);
      } else {
        out.d_n.push_back((1.0 - d) * (1.0 - d));
      }
    }
  }
  return out;
}

Moments moments(std::span<const double> values) noexcept {
  const std::size_t n = values.size();
  if (n == 0) return {};
  double sum = 0.0;
  for (double v : values) sum += v;
  const double mean = sum / static_cast<double>(n);
  if (n == 1) return {mean, 0.0};
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return {mean, std::sqrt(ss / static_cast<double>(n - 1))};
}

DistanceStats distance_stats(const PairPartition& partition) noexcept {
  const Moments p = moments(partition.d_p);
  const Moments n = moments(partition.d_n);
  return {p.mean, p.sample_std, n.mean, n.sample_std, partition.d_p.size(), partition.d_n.size()};
}

HardLoss add_loss_hard(const Batch& batch, const LossWeights& w) {
  const DistanceStats s = distance_stats(partition_pairs(batch));
  const double loss =
      w.mu_p * s.mu_p + w.sigma_p * s.sigma_p + w.mu_n * s.mu_n + w.sigma_n * s.sigma_n;
  return {loss, s};
}

double l_mu_soft(const Batch& batch) {
  const auto& z = batch.embeddings();
  const auto& y = batch.labels();
  const std::size_t b = batch.size();
  // Each unordered pair stands for both (i, j) and (j, i).
  double sum = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = i + 1; j < b; ++j) {
      const double diff = label_distance(y[i], y[j]) - cosine_distance(z[i], z[j]);
      sum += diff * diff;
    }
  }
  return 2.0 * sum / static_cast<double>(b * (b - 1));
}

std::vector<double> soft_positive_values(const Batch& batch) {
  const auto& z = batch.embeddings();
  const std::size_t b = batch.size();
  std::vector<std::size_t> cls(b);
  for (std::size_t i = 0; i < b; ++i) cls[i] = batch.labels()[i].argmax();
  std::vector<double> out;
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = i + 1; j < b; ++j) {
      if (cls[i] != cls[j]) continue;
      const double d = cosine_distance(z[i], z[j]);
      out.push_back(d * d);
    }
  }
  return out;
}

double add_loss_soft(const Batch& batch, double lambda_mu, double lambda_sigma_p) {
  if (!(lambda_mu >= 0.0) || !(lambda_sigma_p >= 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "soft loss weights must be nonnegative");
  }
  double loss = 0.0;
  if (lambda_mu != 0.0) loss += lambda_mu * l_mu_soft(batch);
  if (lambda_sigma_p != 0.0) loss += lambda_sigma_p * moments(soft_positive_values(batch)).sample_std;
  return loss;
}

}  // namespace angdist
