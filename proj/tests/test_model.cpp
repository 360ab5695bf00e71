#include <cmath>
#include <fstream>
#include <limits>

#include "angdist/gradients.hpp"
#include "angdist/model.hpp"
#include "oracle_model.hpp"
#include "support.hpp"

using namespace angdist;
using namespace testing_support;

namespace {

DenseLayer layer(std::vector<std::vector<double>> w, std::vector<double> b) {
  return DenseLayer{Matrix::from_rows(w), std::move(b)};
}

MlpParams tiny_net() {
  MlpParams p;
  p.extractor.push_back(layer({{1, 0}, {0, 2}}, {0, 0}));
  p.head = layer({{1, 0}, {0, 1}, {1, 1}}, {0, 0, 0.5});
  return p;
}

ModelConfig small_config(Activation act = Activation::Tanh) {
  ModelConfig c;
  c.input_dim = 3;
  c.hidden = {5, 4};
  c.embedding_dim = 3;
  c.classes = 3;
  c.activation = act;
  return c;
}

}  // namespace

TEST(Model, HandComputedSingleLayerNet) {
  const auto t = forward(tiny_net(), Matrix::from_rows({{1, 1}}));
  const double s5 = std::sqrt(5.0);
  EXPECT_DOUBLE_EQ(t.raw_embedding(0, 1), 2.0);
  EXPECT_NEAR(t.unit_embedding(0, 0), 1 / s5, 1e-15);
  EXPECT_NEAR(t.unit_embedding(0, 1), 2 / s5, 1e-15);
  EXPECT_NEAR(t.logits(0, 0), 1 / s5, 1e-15);
  EXPECT_NEAR(t.logits(0, 1), 2 / s5, 1e-15);
  EXPECT_NEAR(t.logits(0, 2), 3 / s5 + 0.5, 1e-15);
  const double e0 = std::exp(1 / s5), e1 = std::exp(2 / s5), e2 = std::exp(3 / s5 + 0.5);
  EXPECT_NEAR(t.probabilities(0, 2), e2 / (e0 + e1 + e2), 1e-15);
}

TEST(Model, EmbeddingsAreUnitAndProbabilitiesSumToOne) {
  const auto p = init_mlp(small_config(Activation::Relu), 3);
  std::mt19937_64 rng(1);
  const auto t = forward(p, random_raw(20, 3, rng));
  for (std::size_t b = 0; b < 20; ++b) {
    EXPECT_NEAR(l2_norm(t.unit_embedding.row(b)), 1.0, 1e-12);
    double s = 0;
    for (double v : t.probabilities.row(b)) s += v;
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(Model, ZeroHeadGivesUniformSoftmax) {
  auto p = init_mlp(small_config(), 4);
  for (double& v : p.head.weight.data()) v = 0;
  std::mt19937_64 rng(2);
  const auto t = forward(p, random_raw(5, 3, rng));
  for (double v : t.probabilities.data()) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
}

TEST(Model, SoftmaxIsShiftInvariant) {
  const Matrix a = softmax(Matrix::from_rows({{1.0, -2.0, 0.5}}));
  const Matrix b = softmax(Matrix::from_rows({{101.0, 98.0, 100.5}}));
  for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(a(0, j), b(0, j), 1e-15);
  const Matrix big = softmax(Matrix::from_rows({{1000.0, 0.0}}));
  EXPECT_DOUBLE_EQ(big(0, 0), 1.0);
}

TEST(CrossEntropy, Examples) {
  const std::vector<LabelVector> y = {LabelVector::one_hot(2, 1)};
  EXPECT_EQ(cross_entropy(Matrix::from_rows({{0.0, 1.0}}), y).loss, 0.0);
  EXPECT_NEAR(cross_entropy(Matrix::from_rows({{0.25, 0.25, 0.25, 0.25}}),
                            {LabelVector::one_hot(4, 2)})
                  .loss,
              std::log(4.0), 1e-15);
  const auto soft = cross_entropy(Matrix::from_rows({{0.25, 0.75}}), {LabelVector({0.5, 0.5})});
  EXPECT_NEAR(soft.loss, -0.5 * (std::log(0.25) + std::log(0.75)), 1e-15);
  EXPECT_NEAR(soft.dlogits(0, 0), -0.25, 1e-15);
  EXPECT_NEAR(soft.dlogits(0, 1), 0.25, 1e-15);
}

TEST(CrossEntropy, FloorsZeroProbability) {
  const auto r = cross_entropy(Matrix::from_rows({{1.0, 0.0}}), {LabelVector::one_hot(2, 1)});
  EXPECT_NEAR(r.loss, -std::log(kLogFloor), 1e-9);
}

TEST(CrossEntropy, GradientIsMeanOverBatch) {
  const Matrix p = Matrix::from_rows({{0.2, 0.8}, {0.6, 0.4}});
  const auto r = cross_entropy(p, {LabelVector::one_hot(2, 0), LabelVector::one_hot(2, 0)});
  EXPECT_NEAR(r.dlogits(0, 0), (0.2 - 1.0) / 2, 1e-15);
  EXPECT_NEAR(r.dlogits(1, 1), 0.4 / 2, 1e-15);
}

TEST(CrossEntropy, ShapeErrors) {
  EXPECT_ERROR_CODE(cross_entropy(Matrix::from_rows({{0.5, 0.5}}), {}), ErrorCode::DimensionMismatch);
  EXPECT_ERROR_CODE(cross_entropy(Matrix::from_rows({{0.5, 0.5}}), {LabelVector::one_hot(3, 0)}),
                    ErrorCode::DimensionMismatch);
}

TEST(Backward, IsLinearInUpstreamGradients) {
  const auto p = init_mlp(small_config(), 5);
  std::mt19937_64 rng(3);
  const Matrix x = random_raw(6, 3, rng);
  const auto t = forward(p, x);
  const Matrix dl = random_raw(6, 3, rng);
  const Matrix de = random_raw(6, 3, rng);
  const auto both = oracle::flatten(backward(p, t, dl, GradientBuffer(de)));
  const auto only_l = oracle::flatten(backward(p, t, dl, GradientBuffer::zeros(6, 3)));
  const auto only_e = oracle::flatten(backward(p, t, Matrix(6, 3), GradientBuffer(de)));
  for (std::size_t i = 0; i < both.size(); ++i) {
    EXPECT_NEAR(both[i], only_l[i] + only_e[i], 1e-12 * (1 + std::abs(both[i])));
  }
}

TEST(Backward, ZeroUpstreamGivesZeroGradients) {
  const auto p = init_mlp(small_config(), 6);
  std::mt19937_64 rng(4);
  const auto t = forward(p, random_raw(4, 3, rng));
  for (double v : oracle::flatten(backward(p, t, Matrix(4, 3), GradientBuffer::zeros(4, 3)))) {
    EXPECT_EQ(v, 0.0);
  }
}

TEST(Backward, ShapeMismatch) {
  const auto p = init_mlp(small_config(), 6);
  std::mt19937_64 rng(4);
  const auto t = forward(p, random_raw(4, 3, rng));
  EXPECT_ERROR_CODE(backward(p, t, Matrix(3, 3), GradientBuffer::zeros(4, 3)),
                    ErrorCode::DimensionMismatch);
  EXPECT_ERROR_CODE(backward(p, t, Matrix(4, 3), GradientBuffer::zeros(4, 2)),
                    ErrorCode::DimensionMismatch);
}

// CE + ADD through every layer against extended-precision central differences.
TEST(Backward, FullModelMatchesFiniteDifferences) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 6; ++trial) {
    const auto act = trial % 2 ? Activation::Relu : Activation::Tanh;
    const auto p = init_mlp(small_config(act), 100 + trial);
    const Matrix x = random_raw(6, 3, rng);
    const bool soft = trial >= 4;
    const auto labels = soft ? random_soft_labels(6, 3, rng) : random_hard_labels(6, 3, rng);
    const auto t = forward(p, x);
    const auto ce = cross_entropy(t.probabilities, labels);
    oracle::ModelLossSpec spec;
    spec.soft = soft;
    GradientBuffer d_raw;
    if (soft) {
      spec.lambda_mu = 0.8;
      spec.lambda_sigma = 1.1;
      d_raw = add_loss_soft_grad(t.raw_embedding, labels, 0.8, 1.1).grads;
    } else {
      const LossWeights w(1.0, 0.5, 2.0, 0.7);
      spec.w[0] = 1.0, spec.w[1] = 0.5, spec.w[2] = 2.0, spec.w[3] = 0.7;
      d_raw = add_loss_hard_grad(t.raw_embedding, labels, w).grads;
    }
    const auto analytic = oracle::flatten(backward(p, t, ce.dlogits, d_raw));
    const auto numeric = oracle::model_fd_grad(p, x, labels, spec, 1e-5);
    std::size_t skipped = 0;
    EXPECT_LE(oracle::max_rel_error_skip_nan(analytic, numeric, &skipped), 1e-5) << "trial " << trial;
    EXPECT_LT(skipped, analytic.size() / 10);
  }
}

TEST(Init, DeterministicAndHeUniform) {
  const auto cfg = small_config();
  EXPECT_EQ(init_mlp(cfg, 9), init_mlp(cfg, 9));
  EXPECT_NE(init_mlp(cfg, 9), init_mlp(cfg, 10));
  const auto p = init_mlp(cfg, 9);
  for (const auto* l : {&p.extractor[0], &p.extractor[1], &p.extractor[2], &p.head}) {
    const double bound = std::sqrt(6.0 / static_cast<double>(l->in_dim()));
    for (double v : l->weight.data()) EXPECT_LE(std::abs(v), bound);
    for (double v : l->bias) EXPECT_EQ(v, 0.0);
  }
  EXPECT_EQ(p.parameter_count(), 3u * 5 + 5 + 5 * 4 + 4 + 4 * 3 + 3 + 3 * 3 + 3);
}

TEST(Init, RejectsBadConfigs) {
  auto cfg = small_config();
  cfg.classes = 0;
  EXPECT_ERROR_CODE(init_mlp(cfg, 0), ErrorCode::InvalidArgument);
  cfg = small_config();
  cfg.embedding_dim = 1;
  EXPECT_ERROR_CODE(init_mlp(cfg, 0), ErrorCode::InvalidArgument);
  cfg = small_config();
  cfg.hidden = {4, 0};
  EXPECT_ERROR_CODE(init_mlp(cfg, 0), ErrorCode::InvalidArgument);
}

TEST(Forward, Errors) {
  const auto p = init_mlp(small_config(), 1);
  EXPECT_ERROR_CODE(forward(p, Matrix(2, 4)), ErrorCode::DimensionMismatch);
  Matrix x(1, 3);
  x(0, 0) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_ERROR_CODE(forward(p, x), ErrorCode::NonFiniteActivation);
}

TEST(Activation, ParseAndPrint) {
  EXPECT_EQ(parse_activation("relu"), Activation::Relu);
  EXPECT_EQ(parse_activation(to_string(Activation::Tanh)), Activation::Tanh);
  EXPECT_ERROR_CODE(parse_activation("gelu"), ErrorCode::InvalidArgument);
}

TEST(Checkpoint, RoundTripIsExact) {
  const auto dir = temp_dir("checkpoint");
  const auto p = init_mlp(small_config(Activation::Relu), 42);
  save_checkpoint(p, dir / "m.json");
  EXPECT_EQ(load_checkpoint(dir / "m.json"), p);
}

TEST(Checkpoint, RejectsForeignOrBrokenFiles) {
  const auto dir = temp_dir("checkpoint_bad");
  {
    std::ofstream(dir / "a.json") << R"({"format":"other","version":1})";
    std::ofstream(dir / "b.json") << "{not json";
    std::ofstream(dir / "c.json") << R"({"format":"angdist-mlp","version":99})";
  }
  EXPECT_ERROR_CODE(load_checkpoint(dir / "a.json"), ErrorCode::ParseError);
  EXPECT_ERROR_CODE(load_checkpoint(dir / "b.json"), ErrorCode::ParseError);
  EXPECT_ERROR_CODE(load_checkpoint(dir / "c.json"), ErrorCode::ParseError);
  EXPECT_ERROR_CODE(load_checkpoint(dir / "missing.json"), ErrorCode::IoError);
}
