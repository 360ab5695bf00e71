#include "angdist/gradients.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "angdist/error.hpp"
#include "angdist/reference.hpp"

namespace angdist {

namespace {

// d sigma / d v_k = (v_k - mean) / ((n - 1) sigma); this returns the factor
// multiplying (v_k - mean). The gradient of a sample std has norm at most
// 1/sqrt(n - 1), so the only special case is sigma == 0, where it is 0.
double sigma_slope(std::size_t n, double sum_sq_dev) {
  if (n < 2 || sum_sq_dev == 0.0) return 0.0;
  const double sigma = std::sqrt(sum_sq_dev / static_cast<double>(n - 1));
  return 1.0 / (static_cast<double>(n - 1) * sigma);
}

struct PairSet {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  std::vector<double> values;
  std::vector<double> distances;
};

struct MomentSlopes {
  double mean = 0.0;
  double mean_slope = 0.0;   // d mu / d v
  double sigma_slope = 0.0;  // d sigma / d v = sigma_slope * (v - mean)
};

MomentSlopes slopes(const std::vector<double>& values) {
  MomentSlopes s;
  const std::size_t n = values.size();
  if (n == 0) return s;
  s.mean = moments(values).mean;
  s.mean_slope = 1.0 / static_cast<double>(n);
  double ss = 0.0;
  for (double v : values) ss += (v - s.mean) * (v - s.mean);
  s.sigma_slope = sigma_slope(n, ss);
  return s;
}

// Accumulates coef * dc/dz for the cosine similarity c = z_i . z_j.
void accumulate_pair(Matrix& grad_unit, const Batch& batch, std::size_t i, std::size_t j,
                     double coef) {
  if (coef == 0.0) return;
  const auto zi = batch.embeddings()[i].values();
  const auto zj = batch.embeddings()[j].values();
  auto gi = grad_unit.row(i);
  auto gj = grad_unit.row(j);
  for (std::size_t k = 0; k < zi.size(); ++k) {
    gi[k] += coef * zj[k];
    gj[k] += coef * zi[k];
  }
}

GradientBuffer to_raw_space(const Matrix& raw, const Batch& batch, const Matrix& grad_unit) {
  Matrix out(raw.rows(), raw.cols());
  for (std::size_t i = 0; i < raw.rows(); ++i) {
    project_through_normalization(raw.row(i), batch.embeddings()[i].values(), grad_unit.row(i),
                                  out.row(i));
  }
  if (!out.all_finite()) {
    throw Error(ErrorCode::NonFiniteGradient, "ADD gradient has non-finite entries");
  }
  return GradientBuffer(std::move(out));
}

void check_rows(const Matrix& raw, const std::vector<LabelVector>& labels) {
  if (raw.rows() != labels.size()) {
    throw Error(ErrorCode::DimensionMismatch, std::to_string(raw.rows()) +
                                                  " embeddings but " +
                                                  std::to_string(labels.size()) + " labels");
  }
}

}  // namespace

GradientBuffer::GradientBuffer(Matrix per_embedding) : grads_(std::move(per_embedding)) {
  if (!grads_.all_finite()) {
    throw Error(ErrorCode::NonFiniteGradient, "gradient buffer has non-finite entries");
  }
}

Batch batch_from_raw(const Matrix& raw, const std::vector<LabelVector>& labels) {
  check_rows(raw, labels);
  std::vector<UnitEmbedding> z;
  z.reserve(raw.rows());
  for (std::size_t i = 0; i < raw.rows(); ++i) z.push_back(normalize(raw.row(i)));
  return Batch(std::move(z), labels);
}

void project_through_normalization(std::span<const double> raw, std::span<const double> unit,
                                   std::span<const double> grad_unit, std::span<double> grad_raw) {
  const double norm = l2_norm(raw);
  const double radial = dot(unit, grad_unit);
  for (std::size_t k = 0; k < raw.size(); ++k) {
    grad_raw[k] = (grad_unit[k] - unit[k] * radial) / norm;
  }
}

LossWithGradient add_loss_hard_grad(const Matrix& raw, const std::vector<LabelVector>& labels,
                                    const LossWeights& w) {
  const Batch batch = batch_from_raw(raw, labels);
  const HardLoss forward = add_loss_hard(batch, w);

  const std::size_t b = batch.size();
  std::vector<std::size_t> cls(b);
  for (std::size_t i = 0; i < b; ++i) cls[i] = labels[i].argmax();

  PairSet pos, neg;
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = i + 1; j < b; ++j) {
      const double d = cosine_distance(batch.embeddings()[i], batch.embeddings()[j]);
      PairSet& set = cls[i] == cls[j] ? pos : neg;
      set.pairs.emplace_back(i, j);
      set.distances.push_back(d);
      set.values.push_back(cls[i] == cls[j] ? d * d : (1.0 - d) * (1.0 - d));
    }
  }

  Matrix grad_unit(b, raw.cols());
  const MomentSlopes sp = slopes(pos.values);
  for (std::size_t p = 0; p < pos.pairs.size(); ++p) {
    const double dl_dv =
        w.mu_p * sp.mean_slope + w.sigma_p * sp.sigma_slope * (pos.values[p] - sp.mean);
    // v = d^2, d = 1 - c  =>  dv/dc = -2d
    accumulate_pair(grad_unit, batch, pos.pairs[p].first, pos.pairs[p].second,
                    dl_dv * -2.0 * pos.distances[p]);
  }
  const MomentSlopes sn = slopes(neg.values);
  for (std::size_t p = 0; p < neg.pairs.size(); ++p) {
    const double dl_dv =
        w.mu_n * sn.mean_slope + w.sigma_n * sn.sigma_slope * (neg.values[p] - sn.mean);
    // v = (1 - d)^2  =>  dv/dc = 2(1 - d)
    accumulate_pair(grad_unit, batch, neg.pairs[p].first, neg.pairs[p].second,
                    dl_dv * 2.0 * (1.0 - neg.distances[p]));
  }

  return {forward.loss, to_raw_space(raw, batch, grad_unit)};
}

LossWithGradient add_loss_soft_grad(const Matrix& raw, const std::vector<LabelVector>& labels,
                                    double lambda_mu, double lambda_sigma_p) {
  const Batch batch = batch_from_raw(raw, labels);
  const double loss = add_loss_soft(batch, lambda_mu, lambda_sigma_p);

  const std::size_t b = batch.size();
  const double ordered_pairs = static_cast<double>(b * (b - 1));
  std::vector<std::size_t> cls(b);
  for (std::size_t i = 0; i < b; ++i) cls[i] = labels[i].argmax();

  Matrix grad_unit(b, raw.cols());
  PairSet pos;
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = i + 1; j < b; ++j) {
      const double dz = cosine_distance(batch.embeddings()[i], batch.embeddings()[j]);
      if (lambda_mu != 0.0) {
        const double dy = label_distance(labels[i], labels[j]);
        // Both orderings of the pair: 2/N_B * d/dc (dy - 1 + c)^2
        accumulate_pair(grad_unit, batch, i, j, lambda_mu * 4.0 * (dy - dz) / ordered_pairs);
      }
      if (cls[i] == cls[j]) {
        pos.pairs.emplace_back(i, j);
        pos.distances.push_back(dz);
        pos.values.push_back(dz * dz);
      }
    }
  }
  if (lambda_sigma_p != 0.0) {
    const MomentSlopes sp = slopes(pos.values);
    for (std::size_t p = 0; p < pos.pairs.size(); ++p) {
      const double dl_dv = lambda_sigma_p * sp.sigma_slope * (pos.values[p] - sp.mean);
      accumulate_pair(grad_unit, batch, pos.pairs[p].first, pos.pairs[p].second,
                      dl_dv * -2.0 * pos.distances[p]);
    }
  }

  return {loss, to_raw_space(raw, batch, grad_unit)};
}

namespace {

template <typename Real, typename Fn>
Matrix central_differences(const Fn& loss_fn, const Matrix& point, double h) {
  if (!(h > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "finite-difference step must be positive");
  }
  Matrix grad(point.rows(), point.cols());
  Matrix probe = point;
  for (std::size_t i = 0; i < point.data().size(); ++i) {
    const double x = point.data()[i];
    const double hi = x + h;
    const double lo = x - h;
    probe.data()[i] = hi;
    const Real up = loss_fn(probe);
    probe.data()[i] = lo;
    const Real down = loss_fn(probe);
    probe.data()[i] = x;
    grad.data()[i] = static_cast<double>((up - down) / (static_cast<Real>(hi) - lo));
  }
  return grad;
}

}  // namespace

Matrix finite_difference_grad(const MatrixLoss& loss_fn, const Matrix& point, double h) {
  return central_differences<double>(loss_fn, point, h);
}

Matrix finite_difference_grad(const ExtendedMatrixLoss& loss_fn, const Matrix& point, double h) {
  return central_differences<long double>(loss_fn, point, h);
}

double max_relative_error(std::span<const double> analytic, std::span<const double> numeric,
                          double floor) {
  if (analytic.size() != numeric.size()) {
    throw Error(ErrorCode::DimensionMismatch, "gradient sizes differ");
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double scale = std::max(std::abs(analytic[i]), std::abs(numeric[i]));
    if (!(scale > floor)) continue;
    worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / scale);
  }
  return worst;
}

GradCheckResult run_gradient_check(const GradCheckConfig& config) {
  if (config.trials == 0) {
    throw Error(ErrorCode::InvalidArgument, "gradient check needs at least one trial");
  }
  if (config.min_dim < 2 || config.min_dim > config.max_dim || config.min_batch < 2 ||
      config.min_batch > config.max_batch || config.weight_draws == 0) {
    throw Error(ErrorCode::InvalidArgument, "invalid gradient check ranges");
  }

  std::mt19937_64 rng(config.seed);
  std::uniform_int_distribution<std::size_t> pick_b(config.min_batch, config.max_batch);
  std::uniform_int_distribution<std::size_t> pick_k(config.min_dim, config.max_dim);
  std::normal_distribution<double> coord(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_real_distribution<double> weight(0.0, 2.0);

  GradCheckResult result;
  for (std::size_t t = 0; t < config.trials; ++t) {
    const std::size_t b = pick_b(rng);
    const std::size_t k = pick_k(rng);
    const std::size_t c = std::uniform_int_distribution<std::size_t>(2, 4)(rng);

    // Rows kept away from the origin so the normalization Jacobian stays tame.
    Matrix raw(b, k);
    for (std::size_t i = 0; i < b; ++i) {
      do {
        for (double& v : raw.row(i)) v = coord(rng);
      } while (l2_norm(raw.row(i)) < 0.5);
    }

    std::vector<LabelVector> hard, soft;
    std::uniform_int_distribution<std::size_t> pick_c(0, c - 1);
    for (std::size_t i = 0; i < b; ++i) {
      const std::size_t a = pick_c(rng);
      hard.push_back(LabelVector::one_hot(c, a));
      if (unit(rng) < 0.5) {
        soft.push_back(hard.back());
      } else {
        const std::size_t other = pick_c(rng);
        const double m = unit(rng);
        std::vector<double> probs(c, 0.0);
        probs[a] += m;
        probs[other] += 1.0 - m;
        soft.emplace_back(std::move(probs));
      }
    }

    auto track_radial = [&](const GradientBuffer& g) {
      for (std::size_t i = 0; i < b; ++i) {
        const double gn = l2_norm(g.per_embedding().row(i));
        if (gn < 1e-12) continue;
        const double r = std::abs(dot(g.per_embedding().row(i), raw.row(i))) /
                         (gn * l2_norm(raw.row(i)));
        result.max_radial_component = std::max(result.max_radial_component, r);
      }
    };

    for (std::size_t d = 0; d < config.weight_draws; ++d) {
      const LossWeights w(weight(rng), weight(rng), weight(rng), weight(rng));
      const auto analytic = add_loss_hard_grad(raw, hard, w);
      const Matrix numeric = finite_difference_grad(
          ExtendedMatrixLoss(
              [&](const Matrix& x) { return reference::add_loss_hard(x, hard, w); }),
          raw, config.step);
      result.max_error_hard =
          std::max(result.max_error_hard,
                   max_relative_error(analytic.grads.per_embedding().data(), numeric.data()));
      track_radial(analytic.grads);

      const double lambda_mu = weight(rng);
      const double lambda_sigma = weight(rng);
      const auto soft_analytic = add_loss_soft_grad(raw, soft, lambda_mu, lambda_sigma);
      const Matrix soft_numeric = finite_difference_grad(
          ExtendedMatrixLoss([&](const Matrix& x) {
            return reference::add_loss_soft(x, soft, lambda_mu, lambda_sigma);
          }),
          raw, config.step);
      result.max_error_soft = std::max(
          result.max_error_soft,
          max_relative_error(soft_analytic.grads.per_embedding().data(), soft_numeric.data()));
      track_radial(soft_analytic.grads);
      result.evaluations += 2;
    }
  }
  return result;
}

}  // namespace angdist
