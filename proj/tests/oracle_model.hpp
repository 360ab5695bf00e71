#pragma once

// Test-only extended-precision evaluation of the full training loss
// (MLP -> L2 normalization -> linear head -> cross-entropy, plus ADD on the
// raw embeddings), and a central-difference gradient over every parameter.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

#include "angdist/model.hpp"

namespace oracle {

using LD = long double;

struct ModelLossSpec {
  bool soft = false;
  double w[4] = {0, 0, 0, 0};  ///< hard weights
  double lambda_mu = 0, lambda_sigma = 0;
};

struct ModelEval {
  LD loss = 0;
  std::vector<bool> relu_pattern;  ///< sign of every hidden pre-activation
};

inline LD ld_mean(const std::vector<LD>& v) {
  if (v.empty()) return 0;
  LD s = 0;
  for (LD x : v) s += x;
  return s / static_cast<LD>(v.size());
}

inline LD ld_std(const std::vector<LD>& v) {
  if (v.size() < 2) return 0;
  const LD m = ld_mean(v);
  LD s = 0;
  for (LD x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<LD>(v.size() - 1));
}

inline ModelEval model_loss(const angdist::MlpParams& p, const angdist::Matrix& x,
                            const std::vector<angdist::LabelVector>& labels,
                            const ModelLossSpec& spec) {
  ModelEval out;
  const std::size_t batch = x.rows();
  std::vector<std::vector<LD>> z(batch);
  std::vector<std::vector<LD>> logits(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    std::vector<LD> h(x.row(b).begin(), x.row(b).end());
    for (std::size_t l = 0; l < p.extractor.size(); ++l) {
      const auto& layer = p.extractor[l];
      std::vector<LD> next(layer.out_dim());
      for (std::size_t o = 0; o < layer.out_dim(); ++o) {
        LD s = layer.bias[o];
        for (std::size_t i = 0; i < layer.in_dim(); ++i) s += static_cast<LD>(layer.weight(o, i)) * h[i];
        if (l + 1 < p.extractor.size()) {
          if (p.activation == angdist::Activation::Relu) {
            out.relu_pattern.push_back(s > 0);
            s = s > 0 ? s : 0;
          } else {
            s = std::tanh(s);
          }
        }
        next[o] = s;
      }
      h = std::move(next);
    }
    LD norm = 0;
    for (LD v : h) norm += v * v;
    norm = std::sqrt(norm);
    for (LD& v : h) v /= norm;
    z[b] = h;
    logits[b].resize(p.classes());
    for (std::size_t c = 0; c < p.classes(); ++c) {
      LD s = p.head.bias[c];
      for (std::size_t i = 0; i < h.size(); ++i) s += static_cast<LD>(p.head.weight(c, i)) * h[i];
      logits[b][c] = s;
    }
  }

  LD ce = 0;
  for (std::size_t b = 0; b < batch; ++b) {
    const LD top = *std::max_element(logits[b].begin(), logits[b].end());
    LD sum = 0;
    for (LD v : logits[b]) sum += std::exp(v - top);
    for (std::size_t c = 0; c < logits[b].size(); ++c) {
      const LD y = labels[b][c];
      if (y == 0) continue;
      const LD prob = std::exp(logits[b][c] - top) / sum;
      ce -= y * std::log(std::max(prob, static_cast<LD>(1e-12)));
    }
  }
  ce /= static_cast<LD>(batch);

  auto dist = [&](std::size_t i, std::size_t j) {
    LD d = 0;
    for (std::size_t k = 0; k < z[i].size(); ++k) d += z[i][k] * z[j][k];
    return std::clamp(1 - d, static_cast<LD>(0), static_cast<LD>(2));
  };
  LD add = 0;
  if (!spec.soft) {
    std::vector<LD> dp, dn;
    for (std::size_t i = 0; i < batch; ++i) {
      for (std::size_t j = i + 1; j < batch; ++j) {
        const LD d = dist(i, j);
        if (labels[i].argmax() == labels[j].argmax()) {
          dp.push_back(d * d);
        } else {
          dn.push_back((1 - d) * (1 - d));
        }
      }
    }
    add = spec.w[0] * ld_mean(dp) + spec.w[1] * ld_std(dp) + spec.w[2] * ld_mean(dn) +
          spec.w[3] * ld_std(dn);
  } else {
    LD lmu = 0;
    std::vector<LD> dp;
    for (std::size_t i = 0; i < batch; ++i) {
      for (std::size_t j = 0; j < batch; ++j) {
        if (i == j) continue;
        LD yy = 0;
        for (std::size_t c = 0; c < labels[i].classes(); ++c) {
          yy += static_cast<LD>(labels[i][c]) * labels[j][c];
        }
        const LD diff = (1 - yy) - dist(i, j);
        lmu += diff * diff;
        if (j > i && labels[i].argmax() == labels[j].argmax()) dp.push_back(dist(i, j) * dist(i, j));
      }
    }
    lmu /= static_cast<LD>(batch * (batch - 1));
    add = spec.lambda_mu * lmu + spec.lambda_sigma * ld_std(dp);
  }
  out.loss = ce + add;
  return out;
}

/// Central differences over every parameter in for_each_array order.
/// Coordinates whose +-h evaluations straddle a ReLU kink are NaN.
inline std::vector<double> model_fd_grad(const angdist::MlpParams& params, const angdist::Matrix& x,
                                         const std::vector<angdist::LabelVector>& labels,
                                         const ModelLossSpec& spec, double h) {
  angdist::MlpParams work = params;
  const auto base = model_loss(work, x, labels, spec).relu_pattern;
  std::vector<std::vector<double>*> arrays;
  work.for_each_array([&](std::vector<double>& a) { arrays.push_back(&a); });
  std::vector<double> out;
  for (auto* a : arrays) {
    for (double& v : *a) {
      const double orig = v;
      v = orig + h;
      const double hi = v;
      const auto up = model_loss(work, x, labels, spec);
      v = orig - h;
      const double lo = v;
      const auto down = model_loss(work, x, labels, spec);
      v = orig;
      if (up.relu_pattern != base || down.relu_pattern != base) {
        out.push_back(std::numeric_limits<double>::quiet_NaN());
      } else {
        out.push_back(static_cast<double>((up.loss - down.loss) / static_cast<LD>(hi - lo)));
      }
    }
  }
  return out;
}

/// False when two unit embeddings coincide or are antipodal: the clamped
/// distance and the zero-spread deviations are not differentiable there, so
/// central differences are no reference.
inline bool differentiable_point(const angdist::Matrix& unit) {
  for (std::size_t i = 0; i < unit.rows(); ++i) {
    for (std::size_t j = i + 1; j < unit.rows(); ++j) {
      LD dot = 0;
      for (std::size_t k = 0; k < unit.cols(); ++k) dot += static_cast<LD>(unit(i, k)) * unit(j, k);
      if (std::abs(1 - dot) < 1e-9 || std::abs(1 + dot) < 1e-9) return false;
    }
  }
  return true;
}

/// Flattened parameter gradient in for_each_array order.
inline std::vector<double> flatten(const angdist::MlpGrads& g) {
  std::vector<double> out;
  g.for_each_array([&](const std::vector<double>& a) { out.insert(out.end(), a.begin(), a.end()); });
  return out;
}

/// max |a - f| / max(|a|, |f|) over coordinates with max(|a|, |f|) > floor,
/// skipping NaN (kink) coordinates. Also reports how many were skipped.
inline double max_rel_error_skip_nan(const std::vector<double>& analytic,
                                     const std::vector<double>& numeric, std::size_t* skipped,
                                     double floor = 1e-8) {
  double worst = 0;
  std::size_t skip = 0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    if (std::isnan(numeric[i])) {
      ++skip;
      continue;
    }
    const double scale = std::max(std::abs(analytic[i]), std::abs(numeric[i]));
    if (scale <= floor) continue;
    worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / scale);
  }
  if (skipped) *skipped = skip;
  return worst;
}

}  // namespace oracle
