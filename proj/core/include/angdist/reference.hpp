#pragma once

// Straightforward extended-precision evaluation of the ADD losses on raw
// embeddings. Serves as the target of finite-difference gradient checks:
// differencing a long double evaluation keeps rounding noise well below
// the truncation error of a 1e-5 central step.

#include <vector>

#include "angdist/geometry.hpp"
#include "angdist/matrix.hpp"

namespace angdist::reference {

long double add_loss_hard(const Matrix& raw, const std::vector<LabelVector>& labels,
                          const LossWeights& weights);

long double add_loss_soft(const Matrix& raw, const std::vector<LabelVector>& labels,
                          double lambda_mu, double lambda_sigma_p);

}  // namespace angdist::reference
