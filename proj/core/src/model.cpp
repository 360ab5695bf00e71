#include "angdist/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "angdist/error.hpp"
#include "json_util.hpp"

namespace angdist {

namespace {

// out(b, o) = sum_i in(b, i) * layer.weight(o, i) + layer.bias(o)
Matrix affine(const Matrix& in, const DenseLayer& layer) {
  if (in.cols() != layer.in_dim()) {
    throw Error(ErrorCode::DimensionMismatch,
                "layer expects " + std::to_string(layer.in_dim()) + " inputs, got " +
                    std::to_string(in.cols()));
  }
  Matrix out(in.rows(), layer.out_dim());
  for (std::size_t b = 0; b < in.rows(); ++b) {
    const auto x = in.row(b);
    for (std::size_t o = 0; o < layer.out_dim(); ++o) {
      out(b, o) = dot(x, layer.weight.row(o)) + layer.bias[o];
    }
  }
  return out;
}

double activate(Activation a, double x) {
  return a == Activation::Relu ? (x > 0.0 ? x : 0.0) : std::tanh(x);
}

// Derivative expressed through the pre-activation and the output.
double activate_slope(Activation a, double pre, double post) {
  return a == Activation::Relu ? (pre > 0.0 ? 1.0 : 0.0) : 1.0 - post * post;
}

// Accumulates weight/bias gradients of `layer` and returns d input.
Matrix affine_backward(const DenseLayer& layer, const Matrix& input, const Matrix& dout,
                       DenseLayer& grad) {
  for (std::size_t b = 0; b < dout.rows(); ++b) {
    const auto x = input.row(b);
    for (std::size_t o = 0; o < layer.out_dim(); ++o) {
      const double g = dout(b, o);
      if (g == 0.0) continue;
      auto gw = grad.weight.row(o);
      for (std::size_t i = 0; i < x.size(); ++i) gw[i] += g * x[i];
      grad.bias[o] += g;
    }
  }
  Matrix din(dout.rows(), layer.in_dim());
  for (std::size_t b = 0; b < dout.rows(); ++b) {
    auto d = din.row(b);
    for (std::size_t o = 0; o < layer.out_dim(); ++o) {
      const double g = dout(b, o);
      if (g == 0.0) continue;
      const auto w = layer.weight.row(o);
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += g * w[i];
    }
  }
  return din;
}

DenseLayer init_layer(std::size_t in, std::size_t out, std::mt19937_64& rng) {
  DenseLayer layer{Matrix(out, in), std::vector<double>(out, 0.0)};
  const double limit = std::sqrt(6.0 / static_cast<double>(in));
  std::uniform_real_distribution<double> dist(-limit, limit);
  for (double& w : layer.weight.data()) w = dist(rng);
  return layer;
}

DenseLayer zero_layer(const DenseLayer& like) {
  return {Matrix(like.weight.rows(), like.weight.cols()), std::vector<double>(like.bias.size())};
}

}  // namespace

std::string to_string(Activation activation) {
  return activation == Activation::Relu ? "relu" : "tanh";
}

Activation parse_activation(const std::string& name) {
  if (name == "relu") return Activation::Relu;
  if (name == "tanh") return Activation::Tanh;
  throw Error(ErrorCode::InvalidArgument, "unknown activation '" + name + "'");
}

std::size_t MlpParams::parameter_count() const noexcept {
  std::size_t n = 0;
  for_each_array([&](const std::vector<double>& a) { n += a.size(); });
  return n;
}

void MlpParams::validate() const {
  if (extractor.empty()) throw Error(ErrorCode::InvalidArgument, "MLP has no extractor layers");
  for (std::size_t l = 0; l < extractor.size(); ++l) {
    const auto& layer = extractor[l];
    if (layer.bias.size() != layer.out_dim() || layer.weight.empty()) {
      throw Error(ErrorCode::InvalidArgument, "extractor layer " + std::to_string(l) +
                                                  " has inconsistent shapes");
    }
    if (l > 0 && layer.in_dim() != extractor[l - 1].out_dim()) {
      throw Error(ErrorCode::InvalidArgument,
                  "extractor layer " + std::to_string(l) + " expects " +
                      std::to_string(layer.in_dim()) + " inputs but the previous layer emits " +
                      std::to_string(extractor[l - 1].out_dim()));
    }
  }
  if (embedding_dim() < 2) {
    throw Error(ErrorCode::InvalidArgument, "embedding dimension must be at least 2");
  }
  if (head.in_dim() != embedding_dim() || head.bias.size() != head.out_dim() ||
      head.out_dim() == 0) {
    throw Error(ErrorCode::InvalidArgument, "classifier head does not match the embedding");
  }
  bool finite = true;
  for_each_array([&](const std::vector<double>& a) {
    finite = finite && std::all_of(a.begin(), a.end(), [](double v) { return std::isfinite(v); });
  });
  if (!finite) throw Error(ErrorCode::InvalidArgument, "MLP parameters are not finite");
}

MlpParams init_mlp(const ModelConfig& config, std::uint64_t seed) {
  if (config.input_dim == 0 || config.classes == 0) {
    throw Error(ErrorCode::InvalidArgument, "model needs input_dim and classes");
  }
  if (config.embedding_dim < 2) {
    throw Error(ErrorCode::InvalidArgument, "embedding dimension must be at least 2");
  }
  std::mt19937_64 rng(seed);
  MlpParams params;
  params.activation = config.activation;
  std::size_t in = config.input_dim;
  for (std::size_t width : config.hidden) {
    if (width == 0) throw Error(ErrorCode::InvalidArgument, "hidden width must be positive");
    params.extractor.push_back(init_layer(in, width, rng));
    in = width;
  }
  params.extractor.push_back(init_layer(in, config.embedding_dim, rng));
  params.head = init_layer(config.embedding_dim, config.classes, rng);
  return params;
}

MlpGrads zeros_like(const MlpParams& params) {
  MlpGrads g;
  g.activation = params.activation;
  for (const auto& layer : params.extractor) g.extractor.push_back(zero_layer(layer));
  g.head = zero_layer(params.head);
  return g;
}

Matrix softmax(const Matrix& logits) {
  Matrix p(logits.rows(), logits.cols());
  for (std::size_t b = 0; b < logits.rows(); ++b) {
    const auto row = logits.row(b);
    const double top = *std::max_element(row.begin(), row.end());
    double sum = 0.0;
    for (std::size_t j = 0; j < row.size(); ++j) {
      p(b, j) = std::exp(row[j] - top);
      sum += p(b, j);
    }
    for (double& v : p.row(b)) v /= sum;
  }
  return p;
}

ForwardTrace forward(const MlpParams& params, const Matrix& inputs) {
  if (inputs.cols() != params.input_dim()) {
    throw Error(ErrorCode::DimensionMismatch,
                "model expects " + std::to_string(params.input_dim()) + " features, got " +
                    std::to_string(inputs.cols()));
  }
  ForwardTrace t;
  t.input = inputs;
  const Matrix* x = &t.input;
  for (std::size_t l = 0; l < params.extractor.size(); ++l) {
    t.pre.push_back(affine(*x, params.extractor[l]));
    Matrix post = t.pre.back();
    if (l + 1 < params.extractor.size()) {
      for (double& v : post.data()) v = activate(params.activation, v);
    }
    t.post.push_back(std::move(post));
    x = &t.post.back();
  }
  t.raw_embedding = t.post.back();
  if (!t.raw_embedding.all_finite()) {
    throw Error(ErrorCode::NonFiniteActivation, "raw embedding has non-finite entries");
  }
  t.unit_embedding = Matrix(t.raw_embedding.rows(), t.raw_embedding.cols());
  for (std::size_t b = 0; b < t.raw_embedding.rows(); ++b) {
    const UnitEmbedding z = normalize(t.raw_embedding.row(b));
    std::copy(z.values().begin(), z.values().end(), t.unit_embedding.row(b).begin());
  }
  t.logits = affine(t.unit_embedding, params.head);
  t.probabilities = softmax(t.logits);
  if (!t.logits.all_finite() || !t.probabilities.all_finite()) {
    throw Error(ErrorCode::NonFiniteActivation, "logits are not finite");
  }
  return t;
}

CrossEntropy cross_entropy(const Matrix& probabilities, const std::vector<LabelVector>& labels) {
  if (probabilities.rows() != labels.size() || probabilities.rows() == 0) {
    throw Error(ErrorCode::DimensionMismatch, "probabilities and labels disagree on batch size");
  }
  const double inv_b = 1.0 / static_cast<double>(labels.size());
  CrossEntropy ce{0.0, Matrix(probabilities.rows(), probabilities.cols())};
  for (std::size_t b = 0; b < labels.size(); ++b) {
    if (labels[b].classes() != probabilities.cols()) {
      throw Error(ErrorCode::DimensionMismatch, "label width differs from the class count");
    }
    for (std::size_t j = 0; j < probabilities.cols(); ++j) {
      const double y = labels[b][j];
      const double p = probabilities(b, j);
      if (y != 0.0) ce.loss -= y * std::log(std::max(p, kLogFloor));
      ce.dlogits(b, j) = (p - y) * inv_b;
    }
  }
  ce.loss *= inv_b;
  return ce;
}

MlpGrads backward(const MlpParams& params, const ForwardTrace& trace, const Matrix& dlogits,
                  const GradientBuffer& d_raw_embedding) {
  const std::size_t batch = trace.input.rows();
  if (dlogits.rows() != batch || dlogits.cols() != params.classes() ||
      d_raw_embedding.count() != batch || d_raw_embedding.dim() != params.embedding_dim()) {
    throw Error(ErrorCode::DimensionMismatch, "gradient shapes do not match the forward trace");
  }
  MlpGrads grads = zeros_like(params);

  const Matrix dunit = affine_backward(params.head, trace.unit_embedding, dlogits, grads.head);
  Matrix dcur(batch, params.embedding_dim());
  for (std::size_t b = 0; b < batch; ++b) {
    project_through_normalization(trace.raw_embedding.row(b), trace.unit_embedding.row(b),
                                  dunit.row(b), dcur.row(b));
    auto d = dcur.row(b);
    const auto extra = d_raw_embedding.per_embedding().row(b);
    for (std::size_t k = 0; k < d.size(); ++k) d[k] += extra[k];
  }

  for (std::size_t l = params.extractor.size(); l-- > 0;) {
    if (l + 1 < params.extractor.size()) {
      const Matrix& pre = trace.pre[l];
      const Matrix& post = trace.post[l];
      for (std::size_t i = 0; i < dcur.data().size(); ++i) {
        dcur.data()[i] *= activate_slope(params.activation, pre.data()[i], post.data()[i]);
      }
    }
    const Matrix& input = l == 0 ? trace.input : trace.post[l - 1];
    dcur = affine_backward(params.extractor[l], input, dcur, grads.extractor[l]);
  }

  bool finite = true;
  grads.for_each_array([&](const std::vector<double>& a) {
    finite = finite && std::all_of(a.begin(), a.end(), [](double v) { return std::isfinite(v); });
  });
  if (!finite) throw Error(ErrorCode::NonFiniteGradient, "parameter gradient is not finite");
  return grads;
}

namespace {

using detail::json;

json array_entry(const std::string& name, std::vector<std::size_t> shape,
                 const std::vector<double>& data) {
  return json{{"name", name}, {"shape", std::move(shape)}, {"data", data}};
}

std::vector<double> take_array(const json& entry, const std::string& name,
                               const std::vector<std::size_t>& shape_out) {
  if (entry.at("name").get<std::string>() != name) {
    throw Error(ErrorCode::ParseError, "checkpoint array '" +
                                           entry.at("name").get<std::string>() +
                                           "' where '" + name + "' was expected");
  }
  auto shape = entry.at("shape").get<std::vector<std::size_t>>();
  if (shape != shape_out) throw Error(ErrorCode::ParseError, "bad shape for " + name);
  auto data = entry.at("data").get<std::vector<double>>();
  std::size_t n = 1;
  for (std::size_t s : shape) n *= s;
  if (data.size() != n) throw Error(ErrorCode::ParseError, "bad element count for " + name);
  return data;
}

}  // namespace

void save_checkpoint(const MlpParams& params, const std::filesystem::path& path) {
  params.validate();
  json arrays = json::array();
  for (std::size_t l = 0; l < params.extractor.size(); ++l) {
    const auto& layer = params.extractor[l];
    const std::string prefix = "extractor." + std::to_string(l);
    arrays.push_back(
        array_entry(prefix + ".weight", {layer.out_dim(), layer.in_dim()}, layer.weight.data()));
    arrays.push_back(array_entry(prefix + ".bias", {layer.out_dim()}, layer.bias));
  }
  arrays.push_back(array_entry("head.weight", {params.head.out_dim(), params.head.in_dim()},
                               params.head.weight.data()));
  arrays.push_back(array_entry("head.bias", {params.head.out_dim()}, params.head.bias));
  const json doc{{"format", kCheckpointFormat},
                 {"version", kCheckpointVersion},
                 {"activation", to_string(params.activation)},
                 {"extractor_layers", params.extractor.size()},
                 {"arrays", std::move(arrays)}};
  detail::write_text_file(path, doc.dump() + "\n");
}

MlpParams load_checkpoint(const std::filesystem::path& path) {
  const json doc = detail::read_json_file(path);
  try {
    if (doc.at("format").get<std::string>() != kCheckpointFormat) {
      throw Error(ErrorCode::ParseError, path.string() + " is not an angdist checkpoint");
    }
    if (doc.at("version").get<int>() != kCheckpointVersion) {
      throw Error(ErrorCode::ParseError, "unsupported checkpoint version " +
                                             std::to_string(doc.at("version").get<int>()));
    }
    MlpParams params;
    params.activation = parse_activation(doc.at("activation").get<std::string>());
    const auto layers = doc.at("extractor_layers").get<std::size_t>();
    const json& arrays = doc.at("arrays");
    if (arrays.size() != 2 * layers + 2) {
      throw Error(ErrorCode::ParseError, "checkpoint array count does not match layer count");
    }
    auto read_layer = [&](std::size_t index, const std::string& prefix) {
      const auto shape = arrays.at(index).at("shape").get<std::vector<std::size_t>>();
      if (shape.size() != 2) throw Error(ErrorCode::ParseError, prefix + ".weight is not 2-D");
      DenseLayer layer;
      layer.weight = Matrix(shape[0], shape[1], take_array(arrays.at(index), prefix + ".weight", shape));
      layer.bias = take_array(arrays.at(index + 1), prefix + ".bias", {shape[0]});
      return layer;
    };
    for (std::size_t l = 0; l < layers; ++l) {
      params.extractor.push_back(read_layer(2 * l, "extractor." + std::to_string(l)));
    }
    params.head = read_layer(2 * layers, "head");
    params.validate();
    return params;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, path.string() + ": " + e.what());
  }
}

}  // namespace angdist
