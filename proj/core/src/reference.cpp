#include "angdist/reference.hpp"

#include <algorithm>
#include <cmath>

#include "angdist/error.hpp"

namespace angdist::reference {

namespace {

using Real = long double;

std::vector<std::vector<Real>> unit_rows(const Matrix& raw) {
  std::vector<std::vector<Real>> z(raw.rows(), std::vector<Real>(raw.cols()));
  for (std::size_t i = 0; i < raw.rows(); ++i) {
    Real sq = 0;
    for (double v : raw.row(i)) sq += static_cast<Real>(v) * v;
    const Real norm = std::sqrt(sq);
    if (norm < 1e-12L) throw Error(ErrorCode::ZeroVector, "zero embedding in reference loss");
    for (std::size_t k = 0; k < raw.cols(); ++k) z[i][k] = raw(i, k) / norm;
  }
  return z;
}

Real distance(const std::vector<Real>& a, const std::vector<Real>& b) {
  Real c = 0;
  for (std::size_t k = 0; k < a.size(); ++k) c += a[k] * b[k];
  return std::clamp<Real>(1 - c, 0, 2);
}

Real mean_of(const std::vector<Real>& v) {
  if (v.empty()) return 0;
  Real s = 0;
  for (Real x : v) s += x;
  return s / static_cast<Real>(v.size());
}

Real std_of(const std::vector<Real>& v) {
  if (v.size() < 2) return 0;
  const Real m = mean_of(v);
  Real s = 0;
  for (Real x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<Real>(v.size() - 1));
}

}  // namespace

long double add_loss_hard(const Matrix& raw, const std::vector<LabelVector>& labels,
                          const LossWeights& w) {
  const auto z = unit_rows(raw);
  std::vector<Real> pos, neg;
  for (std::size_t i = 0; i < z.size(); ++i) {
    for (std::size_t j = i + 1; j < z.size(); ++j) {
      const Real d = distance(z[i], z[j]);
      if (labels[i].argmax() == labels[j].argmax()) {
        pos.push_back(d * d);
      } else {
        neg.push_back((1 - d) * (1 - d));
      }
    }
  }
  return w.mu_p * mean_of(pos) + w.sigma_p * std_of(pos) + w.mu_n * mean_of(neg) +
         w.sigma_n * std_of(neg);
}

long double add_loss_soft(const Matrix& raw, const std::vector<LabelVector>& labels,
                          double lambda_mu, double lambda_sigma_p) {
  const auto z = unit_rows(raw);
  const std::size_t b = z.size();
  Real sum = 0;
  std::vector<Real> pos;
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = 0; j < b; ++j) {
      if (i == j) continue;
      Real dy = 1;
      for (std::size_t c = 0; c < labels[i].classes(); ++c) {
        dy -= static_cast<Real>(labels[i][c]) * labels[j][c];
      }
      const Real dz = distance(z[i], z[j]);
      sum += (dy - dz) * (dy - dz);
      if (i < j && labels[i].argmax() == labels[j].argmax()) pos.push_back(dz * dz);
    }
  }
  return lambda_mu * sum / static_cast<Real>(b * (b - 1)) + lambda_sigma_p * std_of(pos);
}

}  // namespace angdist::reference
