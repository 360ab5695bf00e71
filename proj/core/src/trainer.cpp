#include "angdist/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <exception>
#include <mutex>
#include <sstream>
#include <thread>

#include "angdist/error.hpp"
#include "angdist/gradients.hpp"
#include "report_json.hpp"

namespace angdist {

namespace {

// RNG stream ids; each component of a run draws from its own generator.
constexpr std::uint64_t kInitStream = 0;
constexpr std::uint64_t kBatchStream = 1;
constexpr std::uint64_t kMixupStream = 2;
constexpr std::uint64_t kSplitStream = 3;

class Optimizer {
 public:
  Optimizer(const TrainConfig& cfg, const MlpParams& params) : cfg_(cfg) {
    params.for_each_array([&](const std::vector<double>& a) {
      first_.emplace_back(a.size(), 0.0);
      if (cfg_.optimizer == OptimizerKind::AdamW) second_.emplace_back(a.size(), 0.0);
    });
  }

  void step(MlpParams& params, const MlpGrads& grads) {
    ++t_;
    std::vector<const std::vector<double>*> g;
    grads.for_each_array([&](const std::vector<double>& a) { g.push_back(&a); });
    std::size_t idx = 0;
    params.for_each_array([&](std::vector<double>& p) {
      update(p, *g[idx], idx);
      ++idx;
    });
  }

 private:
  void update(std::vector<double>& p, const std::vector<double>& g, std::size_t idx) {
    const double lr = cfg_.learning_rate;
    const double decay = 1.0 - lr * cfg_.weight_decay;
    auto& m = first_[idx];
    if (cfg_.optimizer == OptimizerKind::SgdMomentum) {
      for (std::size_t i = 0; i < p.size(); ++i) {
        m[i] = cfg_.beta1 * m[i] + g[i];
        p[i] = p[i] * decay - lr * m[i];
      }
      return;
    }
    auto& v = second_[idx];
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      p[i] = p[i] * decay - lr * mhat / (std::sqrt(vhat) + cfg_.adam_epsilon);
    }
  }

  const TrainConfig& cfg_;
  std::size_t t_ = 0;
  std::vector<std::vector<double>> first_;
  std::vector<std::vector<double>> second_;
};

struct BatchData {
  Matrix features;
  std::vector<LabelVector> labels;
};

BatchData gather(const Dataset& ds, const std::vector<std::size_t>& idx) {
  BatchData b{Matrix(idx.size(), ds.feature_dim()), {}};
  b.labels.reserve(idx.size());
  for (std::size_t r = 0; r < idx.size(); ++r) {
    auto src = ds.features().row(idx[r]);
    std::copy(src.begin(), src.end(), b.features.row(r).begin());
    b.labels.push_back(ds.labels()[idx[r]]);
  }
  return b;
}

std::vector<UnitEmbedding> unit_rows(const Matrix& raw) {
  std::vector<UnitEmbedding> out;
  out.reserve(raw.rows());
  for (std::size_t r = 0; r < raw.rows(); ++r) out.push_back(normalize(raw.row(r)));
  return out;
}

struct AddTerm {
  double loss = 0.0;
  GradientBuffer grads;
  DistanceStats stats;
  double l_mu = 0.0;
};

AddTerm add_term(const TrainConfig& cfg, const Matrix& raw, const std::vector<LabelVector>& labels) {
  AddTerm t;
  if (cfg.loss_mode == LossMode::Hard) {
    auto lg = add_loss_hard_grad(raw, labels, cfg.weights);
    t.loss = lg.loss;
    t.grads = std::move(lg.grads);
    t.stats = distance_stats(partition_pairs(batch_from_raw(raw, labels)));
  } else {
    auto lg = add_loss_soft_grad(raw, labels, cfg.soft_lambda_mu, cfg.soft_lambda_sigma_p);
    t.loss = lg.loss;
    t.grads = std::move(lg.grads);
    const Batch batch = batch_from_raw(raw, labels);
    t.l_mu = l_mu_soft(batch);
    t.stats.sigma_p = moments(soft_positive_values(batch)).sample_std;
  }
  return t;
}

std::string number_text(double v) {
  if (!std::isfinite(v)) return "nan";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string optional_text(const std::optional<double>& v) {
  return v ? number_text(*v) : std::string("nan");
}

}  // namespace

std::string to_string(LossMode mode) {
  switch (mode) {
    case LossMode::None: return "none";
    case LossMode::Hard: return "hard";
    case LossMode::Soft: return "soft";
  }
  return "unknown";
}

LossMode parse_loss_mode(const std::string& name) {
  if (name == "none" || name == "ce") return LossMode::None;
  if (name == "hard") return LossMode::Hard;
  if (name == "soft") return LossMode::Soft;
  throw Error(ErrorCode::ParseError, "unknown loss mode '" + name + "' (none, hard, soft)");
}

std::string to_string(OptimizerKind kind) {
  return kind == OptimizerKind::AdamW ? "adamw" : "sgd";
}

OptimizerKind parse_optimizer(const std::string& name) {
  if (name == "adamw") return OptimizerKind::AdamW;
  if (name == "sgd") return OptimizerKind::SgdMomentum;
  throw Error(ErrorCode::ParseError, "unknown optimizer '" + name + "' (adamw, sgd)");
}

void TrainConfig::validate() const {
  auto bad = [](const std::string& msg) { throw Error(ErrorCode::InvalidArgument, msg); };
  if (epochs < 1) bad("epochs must be at least 1");
  if (batch_size < 2) bad("batch_size must be at least 2");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) bad("learning_rate must be > 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) bad("beta1 must be in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) bad("beta2 must be in [0, 1)");
  if (!(adam_epsilon > 0.0)) bad("adam_epsilon must be > 0");
  if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay)) bad("weight_decay must be >= 0");
  if (!(soft_lambda_mu >= 0.0) || !(soft_lambda_sigma_p >= 0.0) || !std::isfinite(soft_lambda_mu) ||
      !std::isfinite(soft_lambda_sigma_p)) {
    bad("soft lambdas must be finite and >= 0");
  }
  if (!(eval_fraction >= 0.0 && eval_fraction < 1.0)) bad("eval_fraction must be in [0, 1)");
  if (mixup.mode == MixupMode::Beta && !(mixup.value >= 0.0 && std::isfinite(mixup.value))) {
    bad("mixup alpha must be >= 0");
  }
  if (mixup.mode == MixupMode::Fixed && !(mixup.value >= 0.0 && mixup.value <= 1.0)) {
    bad("fixed mixup coefficient must be in [0, 1]");
  }
  if (mixup.active() && loss_mode != LossMode::Soft) {
    throw Error(ErrorCode::ConfigConflict,
                "mixup produces soft labels and needs loss mode 'soft', got '" +
                    to_string(loss_mode) + "'");
  }
}

double accuracy_from_logits(const Matrix& logits, const std::vector<LabelVector>& labels) {
  if (logits.rows() != labels.size()) {
    throw Error(ErrorCode::DimensionMismatch, "logits and labels differ in row count");
  }
  if (labels.empty()) throw Error(ErrorCode::InvalidArgument, "empty evaluation split");
  std::size_t correct = 0;
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    auto row = logits.row(r);
    const auto pred = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
    if (pred == labels[r].argmax()) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

EvalResult evaluate(const MlpParams& params, const Dataset& split) {
  if (split.size() == 0) throw Error(ErrorCode::InvalidArgument, "empty evaluation split");
  const ForwardTrace trace = forward(params, split.features());
  EvalResult out;
  out.accuracy = accuracy_from_logits(trace.logits, split.labels());
  try {
    out.geometry = geometry_report(unit_rows(trace.raw_embedding), split.class_ids(), split.classes());
  } catch (const Error& e) {
    if (e.code() != ErrorCode::ClassTooSmall) throw;
  }
  return out;
}

TrainResult train(const Dataset& dataset, ModelConfig model_config, const TrainConfig& config) {
  config.validate();
  if (model_config.input_dim == 0) model_config.input_dim = dataset.feature_dim();
  if (model_config.classes == 0) model_config.classes = dataset.classes();
  if (model_config.input_dim != dataset.feature_dim() || model_config.classes != dataset.classes()) {
    throw Error(ErrorCode::DimensionMismatch,
                "model expects " + std::to_string(model_config.input_dim) + " features / " +
                    std::to_string(model_config.classes) + " classes, dataset has " +
                    std::to_string(dataset.feature_dim()) + " / " +
                    std::to_string(dataset.classes()));
  }

  Dataset train_set = dataset;
  Dataset eval_set = dataset;
  if (config.eval_fraction > 0.0) {
    auto split_rng = make_stream(config.seed, kSplitStream);
    Split split = split_dataset(dataset, config.eval_fraction, split_rng());
    // Too few rows to hold anything out: evaluate on the training rows.
    if (split.eval.size() > 0 && split.train.size() > 0) {
      train_set = std::move(split.train);
      eval_set = std::move(split.eval);
    }
  }

  auto init_rng = make_stream(config.seed, kInitStream);
  MlpParams params = init_mlp(model_config, init_rng());
  Optimizer optimizer(config, params);
  auto batch_rng = make_stream(config.seed, kBatchStream);
  auto mixup_rng = make_stream(config.seed, kMixupStream);

  RunRecord record;
  record.model = model_config;
  record.config = config;
  record.seed = config.seed;

  std::size_t step_index = 0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    EpochRecord er;
    er.epoch = epoch;
    std::size_t add_steps = 0;
    const auto batches = shuffled_batches(train_set.size(), config.batch_size, batch_rng);
    for (const auto& idx : batches) {
      BatchData b;
      if (config.mixup.active()) {
        std::vector<std::size_t> partner = idx;
        std::shuffle(partner.begin(), partner.end(), mixup_rng);
        MixedBatch mixed = mixup(idx, partner, train_set, config.mixup, mixup_rng);
        b.features = std::move(mixed.features);
        b.labels = std::move(mixed.labels);
      } else {
        b = gather(train_set, idx);
      }

      const ForwardTrace trace = forward(params, b.features);
      const CrossEntropy ce = cross_entropy(trace.probabilities, b.labels);

      StepRecord sr;
      sr.ce = ce.loss;
      GradientBuffer d_raw =
          GradientBuffer::zeros(b.features.rows(), params.embedding_dim());
      // A trailing one-row batch has no pairs; it trains on CE alone.
      if (config.loss_mode != LossMode::None && idx.size() >= 2) {
        AddTerm add = add_term(config, trace.raw_embedding, b.labels);
        sr.add = add.loss;
        d_raw = std::move(add.grads);
        er.mu_p += add.stats.mu_p;
        er.sigma_p += add.stats.sigma_p;
        er.mu_n += add.stats.mu_n;
        er.sigma_n += add.stats.sigma_n;
        er.l_mu += add.l_mu;
        ++add_steps;
      }
      sr.total = sr.ce + sr.add;
      if (!std::isfinite(sr.total)) {
        throw Error(ErrorCode::NonFiniteLoss,
                    "loss is not finite at step " + std::to_string(step_index) + " (epoch " +
                        std::to_string(epoch) + ", ce " + number_text(sr.ce) + ", add " +
                        number_text(sr.add) + ")");
      }

      const MlpGrads grads = backward(params, trace, ce.dlogits, d_raw);
      optimizer.step(params, grads);

      er.ce += sr.ce;
      er.add += sr.add;
      er.total += sr.total;
      record.steps.push_back(sr);
      ++step_index;
    }
    const double n = static_cast<double>(batches.size());
    er.ce /= n;
    er.add /= n;
    er.total /= n;
    if (add_steps > 0) {
      const double a = static_cast<double>(add_steps);
      er.mu_p /= a;
      er.sigma_p /= a;
      er.mu_n /= a;
      er.sigma_n /= a;
      er.l_mu /= a;
    }
    if (config.per_epoch_geometry) {
      EvalResult ev = evaluate(params, eval_set);
      er.eval_accuracy = ev.accuracy;
      er.geometry = std::move(ev.geometry);
    } else {
      er.eval_accuracy = accuracy_from_logits(forward(params, eval_set.features()).logits,
                                              eval_set.labels());
    }
    record.epochs.push_back(std::move(er));
  }

  EvalResult final_eval = evaluate(params, eval_set);
  record.final_accuracy = final_eval.accuracy;
  record.final_geometry = std::move(final_eval.geometry);
  return TrainResult{std::move(params), std::move(record)};
}

std::vector<LossWeights> ablation_weight_set() {
  return {LossWeights(1, 0, 0, 0), LossWeights(0, 1, 0, 0), LossWeights(0, 0, 1, 0),
          LossWeights(0, 0, 0, 1), LossWeights(1, 0, 1, 0), LossWeights(1, 1, 1, 1)};
}

AblationTable ablation_sweep(const Dataset& dataset, const ModelConfig& model_config,
                             const TrainConfig& base_config,
                             const std::vector<LossWeights>& lambda_set,
                             const std::vector<std::uint64_t>& seeds, bool parallel) {
  if (lambda_set.empty()) throw Error(ErrorCode::InvalidArgument, "empty lambda set");
  if (seeds.empty()) throw Error(ErrorCode::InvalidArgument, "empty seed list");
  if (base_config.loss_mode == LossMode::Soft) {
    throw Error(ErrorCode::ConfigConflict, "the lambda ablation runs the hard-label loss");
  }

  AblationTable table;
  for (const auto& w : lambda_set) {
    for (auto seed : seeds) table.rows.push_back(AblationRow{w, seed, {}});
  }
  auto run_one = [&](AblationRow& row) {
    TrainConfig cfg = base_config;
    cfg.loss_mode = LossMode::Hard;
    cfg.weights = row.weights;
    cfg.seed = row.seed;
    row.record = train(dataset, model_config, cfg).record;
  };

  if (!parallel) {
    for (auto& row : table.rows) run_one(row);
  } else {
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    const std::size_t workers =
        std::min<std::size_t>(std::max(1u, std::thread::hardware_concurrency()), table.rows.size());
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < table.rows.size(); i = next++) {
          try {
            run_one(table.rows[i]);
          } catch (...) {
            std::lock_guard lock(failure_mutex);
            if (!failure) failure = std::current_exception();
          }
        }
      });
    }
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
  }

  for (std::size_t l = 0; l < lambda_set.size(); ++l) {
    std::vector<double> acc;
    for (std::size_t s = 0; s < seeds.size(); ++s) {
      acc.push_back(table.rows[l * seeds.size() + s].record.final_accuracy);
    }
    const Moments m = moments(acc);
    table.summary.push_back(AblationSummary{lambda_set[l], acc.size(), m.mean, m.sample_std});
  }
  return table;
}

std::string AblationTable::to_csv() const {
  std::ostringstream out;
  out << "lambda,seed,accuracy,intra_clustering,intra_equidistance,inter_separation,"
         "inter_equidistance\n";
  for (const auto& row : rows) {
    out << row.weights.tag() << ',' << row.seed << ',' << number_text(row.record.final_accuracy);
    if (const auto& g = row.record.final_geometry) {
      out << ',' << number_text(g->intra_clustering) << ',' << optional_text(g->intra_equidistance)
          << ',' << optional_text(g->inter_separation) << ','
          << optional_text(g->inter_equidistance);
    } else {
      out << ",nan,nan,nan,nan";
    }
    out << '\n';
  }
  return out.str();
}

std::string run_record_to_json(const RunRecord& record,
                               const std::vector<std::string>& class_names) {
  using detail::json;
  const TrainConfig& c = record.config;
  json model{{"input_dim", record.model.input_dim},
             {"hidden", record.model.hidden},
             {"embedding_dim", record.model.embedding_dim},
             {"classes", record.model.classes},
             {"activation", to_string(record.model.activation)}};
  json train{{"epochs", c.epochs},
             {"batch_size", c.batch_size},
             {"learning_rate", c.learning_rate},
             {"beta1", c.beta1},
             {"beta2", c.beta2},
             {"adam_epsilon", c.adam_epsilon},
             {"weight_decay", c.weight_decay},
             {"optimizer", to_string(c.optimizer)},
             {"loss", to_string(c.loss_mode)},
             {"lambda", {c.weights.mu_p, c.weights.sigma_p, c.weights.mu_n, c.weights.sigma_n}},
             {"soft_lambda_mu", c.soft_lambda_mu},
             {"soft_lambda_sigma_p", c.soft_lambda_sigma_p},
             {"mixup", {{"mode", c.mixup.mode == MixupMode::Beta ? "beta" : "fixed"},
                        {"value", c.mixup.value}}},
             {"seed", c.seed},
             {"eval_fraction", c.eval_fraction},
             {"per_epoch_geometry", c.per_epoch_geometry}};

  json steps = json::array();
  for (const auto& s : record.steps) {
    steps.push_back({{"ce", s.ce}, {"add", s.add}, {"total", s.total}});
  }
  json epochs = json::array();
  for (const auto& e : record.epochs) {
    json ej{{"epoch", e.epoch},       {"ce", e.ce},           {"add", e.add},
            {"total", e.total},       {"mu_p", e.mu_p},       {"sigma_p", e.sigma_p},
            {"mu_n", e.mu_n},         {"sigma_n", e.sigma_n}, {"l_mu", e.l_mu},
            {"eval_accuracy", e.eval_accuracy}};
    if (e.geometry) ej["geometry"] = detail::report_json(*e.geometry, class_names);
    epochs.push_back(std::move(ej));
  }
  json doc{{"model", std::move(model)},
           {"train", std::move(train)},
           {"seed", record.seed},
           {"final_accuracy", record.final_accuracy},
           {"epochs", std::move(epochs)},
           {"steps", std::move(steps)}};
  doc["final_geometry"] = record.final_geometry
                              ? detail::report_json(*record.final_geometry, class_names)
                              : json(nullptr);
  return doc.dump(2);
}

}  // namespace angdist
