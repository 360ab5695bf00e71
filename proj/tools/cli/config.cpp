#include <cstdlib>
#include <fstream>
#include <initializer_list>
#include <string>

#include "angdist/error.hpp"
#include "cli/cli.hpp"

namespace angdist::cli {

namespace {

[[noreturn]] void config_error(const std::string& msg) {
  throw Error(ErrorCode::ParseError, "config: " + msg);
}

void check_keys(const json& obj, const std::string& where,
                std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) config_error("'" + where + "' must be an object");
  for (const auto& item : obj.items()) {
    bool known = false;
    for (const char* key : allowed) known = known || item.key() == key;
    if (!known) config_error("unknown key '" + item.key() + "' in '" + where + "'");
  }
}

template <typename T>
void read(const json& obj, const char* key, T& target) {
  if (obj.contains(key)) target = obj.at(key).get<T>();
}

SynthConfig parse_synthetic(const json& s) {
  check_keys(s, "data.synthetic", {"classes", "dim", "per_class", "spread", "separation", "seed"});
  SynthConfig cfg;
  read(s, "classes", cfg.classes);
  read(s, "dim", cfg.dim);
  read(s, "per_class", cfg.per_class);
  read(s, "spread", cfg.spread);
  read(s, "separation", cfg.separation);
  read(s, "seed", cfg.seed);
  cfg.validate();
  return cfg;
}

DataSource parse_data(const json& d, const std::filesystem::path& base_dir) {
  check_keys(d, "data", {"synthetic", "csv", "label_column"});
  DataSource src;
  if (d.contains("synthetic") == d.contains("csv")) {
    config_error("'data' needs exactly one of 'synthetic' or 'csv'");
  }
  if (d.contains("synthetic")) {
    if (d.contains("label_column")) config_error("'label_column' applies to csv data only");
    src.synthetic = parse_synthetic(d.at("synthetic"));
    return src;
  }
  std::filesystem::path csv = d.at("csv").get<std::string>();
  if (csv.is_relative()) csv = base_dir / csv;
  if (!std::filesystem::exists(csv)) {
    throw Error(ErrorCode::IoError, "config: dataset " + csv.string() + " does not exist");
  }
  src.csv = csv;
  if (d.contains("label_column")) src.label_column = d.at("label_column").get<std::string>();
  return src;
}

ModelConfig parse_model(const json& m) {
  check_keys(m, "model", {"hidden", "embedding_dim", "activation"});
  ModelConfig cfg;
  read(m, "hidden", cfg.hidden);
  read(m, "embedding_dim", cfg.embedding_dim);
  if (m.contains("activation")) cfg.activation = parse_activation(m.at("activation").get<std::string>());
  if (cfg.embedding_dim < 2) {
    throw Error(ErrorCode::InvalidArgument, "config: model.embedding_dim must be at least 2");
  }
  for (auto h : cfg.hidden) {
    if (h == 0) throw Error(ErrorCode::InvalidArgument, "config: model.hidden widths must be > 0");
  }
  return cfg;
}

LossWeights parse_lambda(const json& v) {
  if (v.is_string()) return LossWeights::parse(v.get<std::string>());
  // A --set override of 1010 arrives as a JSON number.
  if (v.is_number_unsigned()) return LossWeights::parse(v.dump());
  if (v.is_array() && v.size() == 4) {
    return LossWeights(v[0].get<double>(), v[1].get<double>(), v[2].get<double>(),
                       v[3].get<double>());
  }
  config_error("'train.lambda' must be a string like \"1010\" or an array of four numbers");
}

MixupSpec parse_mixup(const json& v) {
  MixupSpec spec;
  if (v.is_number()) {
    spec.value = v.get<double>();
    return spec;
  }
  check_keys(v, "train.mixup", {"mode", "value"});
  if (v.contains("mode")) {
    const auto mode = v.at("mode").get<std::string>();
    if (mode == "beta") {
      spec.mode = MixupMode::Beta;
    } else if (mode == "fixed") {
      spec.mode = MixupMode::Fixed;
    } else {
      config_error("train.mixup.mode must be 'beta' or 'fixed'");
    }
  }
  read(v, "value", spec.value);
  return spec;
}

TrainConfig parse_train(const json& t) {
  check_keys(t, "train",
             {"epochs", "batch_size", "learning_rate", "beta1", "beta2", "adam_epsilon",
              "weight_decay", "optimizer", "loss", "lambda", "soft_lambda_mu",
              "soft_lambda_sigma_p", "mixup", "seed", "eval_fraction", "per_epoch_geometry"});
  TrainConfig cfg;
  read(t, "epochs", cfg.epochs);
  read(t, "batch_size", cfg.batch_size);
  read(t, "learning_rate", cfg.learning_rate);
  read(t, "beta1", cfg.beta1);
  read(t, "beta2", cfg.beta2);
  read(t, "adam_epsilon", cfg.adam_epsilon);
  read(t, "weight_decay", cfg.weight_decay);
  if (t.contains("optimizer")) cfg.optimizer = parse_optimizer(t.at("optimizer").get<std::string>());
  if (t.contains("loss")) cfg.loss_mode = parse_loss_mode(t.at("loss").get<std::string>());
  if (t.contains("lambda")) cfg.weights = parse_lambda(t.at("lambda"));
  read(t, "soft_lambda_mu", cfg.soft_lambda_mu);
  read(t, "soft_lambda_sigma_p", cfg.soft_lambda_sigma_p);
  if (t.contains("mixup")) cfg.mixup = parse_mixup(t.at("mixup"));
  read(t, "seed", cfg.seed);
  read(t, "eval_fraction", cfg.eval_fraction);
  read(t, "per_epoch_geometry", cfg.per_epoch_geometry);
  cfg.validate();
  return cfg;
}

}  // namespace

void apply_override(json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw Error(ErrorCode::ParseError, "override '" + assignment + "' is not path=value");
  }
  const std::string path = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;

  json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? dot : dot - start);
    if (key.empty()) throw Error(ErrorCode::ParseError, "override path '" + path + "' is malformed");
    if (!node->is_object()) {
      if (!node->is_null()) {
        throw Error(ErrorCode::ParseError, "override path '" + path + "' crosses a non-object");
      }
      *node = json::object();
    }
    node = &(*node)[key];
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  *node = std::move(value);
}

ExperimentConfig parse_experiment(json doc, const std::filesystem::path& base_dir) {
  try {
    check_keys(doc, "config", {"data", "model", "train", "output"});
    if (!doc.contains("data")) config_error("missing 'data' section");
    ExperimentConfig cfg;
    cfg.data = parse_data(doc.at("data"), base_dir);
    if (doc.contains("model")) cfg.model = parse_model(doc.at("model"));
    if (doc.contains("train")) cfg.train = parse_train(doc.at("train"));
    if (doc.contains("output")) {
      const json& o = doc.at("output");
      check_keys(o, "output", {"dir"});
      if (o.contains("dir")) cfg.output_dir = o.at("dir").get<std::string>();
    }
    return cfg;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("config: ") + e.what());
  }
}

ExperimentConfig load_experiment(const std::filesystem::path& path,
                                 const std::vector<std::string>& overrides) {
  if (!std::filesystem::exists(path)) {
    throw Error(ErrorCode::IoError, "config file " + path.string() + " does not exist");
  }
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  json doc = json::parse(in, nullptr, false);
  if (doc.is_discarded()) throw Error(ErrorCode::ParseError, path.string() + " is not valid JSON");
  for (const auto& o : overrides) apply_override(doc, o);
  return parse_experiment(std::move(doc), std::filesystem::absolute(path).parent_path());
}

Dataset load_dataset(const DataSource& source) {
  if (source.synthetic) return generate_synthetic(*source.synthetic);
  return load_csv(source.csv, source.label_column);
}

std::filesystem::path resolve_output_dir(const std::optional<std::filesystem::path>& flag,
                                         const std::filesystem::path& configured,
                                         const std::string& command) {
  if (flag) return *flag;
  const char* root_env = std::getenv(kOutputRootEnv);
  const std::filesystem::path root =
      root_env && *root_env ? std::filesystem::path(root_env) : std::filesystem::path();
  if (!configured.empty()) {
    return configured.is_relative() && !root.empty() ? root / configured : configured;
  }
  return (root.empty() ? std::filesystem::path("angdist-out") : root) / command;
}

}  // namespace angdist::cli
