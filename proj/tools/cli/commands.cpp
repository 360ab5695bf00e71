#include <algorithm>
#include <charconv>
#include <fstream>
#include <ostream>
#include <string>

#include <CLI11.hpp>

#include "angdist/error.hpp"
#include "angdist/gradients.hpp"
#include "angdist/metrics.hpp"
#include "cli/cli.hpp"

namespace angdist::cli {

namespace {

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::NonFiniteLoss:
    case ErrorCode::NonFiniteGradient:
    case ErrorCode::NonFiniteActivation:
      return kNumericFailure;
    default:
      return kConfigError;
  }
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << text << '\n';
  if (!out) throw Error(ErrorCode::IoError, "failed writing " + path.string());
}

std::size_t parse_count(const std::string& text) {
  std::size_t v = 0;
  auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (text.empty() || res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    throw Error(ErrorCode::ParseError, "'" + text + "' is not a nonnegative integer");
  }
  return v;
}

// "4" or "2-8".
std::pair<std::size_t, std::size_t> parse_range(const std::string& text) {
  const auto dash = text.find('-');
  if (dash == std::string::npos) {
    const auto v = parse_count(text);
    return {v, v};
  }
  return {parse_count(text.substr(0, dash)), parse_count(text.substr(dash + 1))};
}

ExperimentConfig load_with_lambda(const std::string& config_path,
                                  const std::vector<std::string>& overrides,
                                  const std::optional<std::string>& lambda) {
  std::vector<std::string> all = overrides;
  // Quote the tag so "1010" stays a string rather than a JSON number.
  if (lambda) all.push_back("train.lambda=" + json(*lambda).dump());
  return load_experiment(config_path, all);
}

json scores_object(const GeometryReport& report) { return json::parse(scores_to_json(report)); }

struct TrainArgs {
  std::string config;
  std::vector<std::string> overrides;
  std::optional<std::string> lambda;
  std::optional<std::filesystem::path> out;
};

int cmd_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  const ExperimentConfig cfg = load_with_lambda(a.config, a.overrides, a.lambda);
  const Dataset ds = load_dataset(cfg.data);
  const auto dir = resolve_output_dir(a.out, cfg.output_dir, "train");
  std::filesystem::create_directories(dir);

  err << "training on " << ds.size() << " rows, " << ds.classes() << " classes, loss "
      << to_string(cfg.train.loss_mode) << ", lambda " << cfg.train.weights.tag() << "\n";
  const TrainResult result = train(ds, cfg.model, cfg.train);

  save_checkpoint(result.params, dir / "checkpoint.json");
  write_file(dir / "run.json", run_record_to_json(result.record, ds.class_names()));
  const auto& geometry = result.record.final_geometry;
  if (geometry) {
    write_file(dir / "geometry.json", report_to_json(*geometry, ds.class_names()));
    write_report_csv(*geometry, ds.class_names(), dir);
  } else {
    err << "warning: eval split has a class with fewer than two rows; geometry.json is null\n";
    write_file(dir / "geometry.json", "null");
  }

  json summary{{"command", "train"},
               {"status", "ok"},
               {"out_dir", dir.string()},
               {"final_accuracy", result.record.final_accuracy},
               {"loss", to_string(cfg.train.loss_mode)},
               {"lambda", cfg.train.weights.tag()},
               {"seed", cfg.train.seed},
               {"steps", result.record.steps.size()}};
  summary["scores"] = geometry ? scores_object(*geometry) : json(nullptr);
  out << summary.dump() << '\n';
  return kOk;
}

struct AblateArgs {
  std::string config;
  std::vector<std::string> overrides;
  std::vector<std::string> lambdas;
  std::vector<std::uint64_t> seeds;
  bool parallel = false;
  std::optional<std::filesystem::path> out;
};

int cmd_ablate(const AblateArgs& a, bool lambdas_given, std::ostream& out, std::ostream& err) {
  const ExperimentConfig cfg = load_experiment(a.config, a.overrides);
  std::vector<LossWeights> lambda_set;
  if (lambdas_given) {
    for (const auto& entry : a.lambdas) {
      // Entries may also be joined with ';'.
      std::size_t start = 0;
      while (start <= entry.size()) {
        const auto end = std::min(entry.find(';', start), entry.size());
        const std::string tag = entry.substr(start, end - start);
        if (!tag.empty()) lambda_set.push_back(LossWeights::parse(tag));
        start = end + 1;
      }
    }
    if (lambda_set.empty()) throw Error(ErrorCode::InvalidArgument, "empty lambda list");
  } else {
    lambda_set = ablation_weight_set();
  }
  std::vector<std::uint64_t> seeds = a.seeds;
  if (seeds.empty()) seeds.push_back(cfg.train.seed);

  const Dataset ds = load_dataset(cfg.data);
  const auto dir = resolve_output_dir(a.out, cfg.output_dir, "ablate");
  std::filesystem::create_directories(dir);
  err << "ablation: " << lambda_set.size() << " weightings x " << seeds.size() << " seeds"
      << (a.parallel ? " (parallel)" : "") << "\n";

  const AblationTable table = ablation_sweep(ds, cfg.model, cfg.train, lambda_set, seeds, a.parallel);
  {
    std::ofstream csv(dir / "ablation.csv");
    if (!csv) throw Error(ErrorCode::IoError, "cannot write " + (dir / "ablation.csv").string());
    csv << table.to_csv();
  }

  json summary = json::array();
  for (const auto& s : table.summary) {
    summary.push_back({{"lambda", s.weights.tag()},
                       {"runs", s.runs},
                       {"mean_accuracy", s.mean_accuracy},
                       {"std_accuracy", s.std_accuracy}});
  }
  write_file(dir / "ablation_summary.json", summary.dump(2));
  out << json{{"command", "ablate"},
              {"status", "ok"},
              {"out_dir", dir.string()},
              {"rows", table.rows.size()},
              {"summary", summary}}
             .dump()
      << '\n';
  return kOk;
}

struct GradcheckArgs {
  std::string dims = "2-8";
  std::string batch_sizes = "2-16";
  std::size_t trials = 100;
  std::size_t weight_draws = 5;
  double tolerance = 1e-6;
  double step = kDefaultFiniteDifferenceStep;
  std::uint64_t seed = 0;
};

int cmd_gradcheck(const GradcheckArgs& a, std::ostream& out, std::ostream& err) {
  GradCheckConfig cfg;
  std::tie(cfg.min_dim, cfg.max_dim) = parse_range(a.dims);
  std::tie(cfg.min_batch, cfg.max_batch) = parse_range(a.batch_sizes);
  cfg.trials = a.trials;
  cfg.weight_draws = a.weight_draws;
  cfg.step = a.step;
  cfg.seed = a.seed;
  if (!(a.tolerance >= 0.0)) throw Error(ErrorCode::InvalidArgument, "tolerance must be >= 0");

  const GradCheckResult r = run_gradient_check(cfg);
  const bool pass = r.max_error() <= a.tolerance;
  err << "max relative error " << r.max_error() << " (hard " << r.max_error_hard << ", soft "
      << r.max_error_soft << ") over " << r.evaluations << " gradient evaluations\n";
  out << json{{"command", "gradcheck"},
              {"status", pass ? "ok" : "fail"},
              {"max_relative_error", r.max_error()},
              {"max_relative_error_hard", r.max_error_hard},
              {"max_relative_error_soft", r.max_error_soft},
              {"max_radial_component", r.max_radial_component},
              {"tolerance", a.tolerance},
              {"evaluations", r.evaluations}}
             .dump()
      << '\n';
  return pass ? kOk : kCheckFailed;
}

struct GeometryArgs {
  std::string checkpoint;
  std::string dataset;
  std::optional<std::string> label_column;
  std::vector<std::string> classes;
  std::optional<std::filesystem::path> out;
};

int cmd_geometry(const GeometryArgs& a, std::ostream& out, std::ostream& err) {
  const MlpParams params = load_checkpoint(a.checkpoint);
  const Dataset ds = load_csv(a.dataset, a.label_column);
  if (ds.feature_dim() != params.input_dim() || ds.classes() != params.classes()) {
    throw Error(ErrorCode::DimensionMismatch,
                "checkpoint expects " + std::to_string(params.input_dim()) + " features / " +
                    std::to_string(params.classes()) + " classes, dataset has " +
                    std::to_string(ds.feature_dim()) + " / " + std::to_string(ds.classes()));
  }
  const auto dir = resolve_output_dir(a.out, {}, "geometry");
  std::filesystem::create_directories(dir);

  const ForwardTrace trace = forward(params, ds.features());
  std::vector<UnitEmbedding> emb;
  for (std::size_t r = 0; r < trace.raw_embedding.rows(); ++r) {
    emb.push_back(normalize(trace.raw_embedding.row(r)));
  }
  const auto ids = ds.class_ids();

  GeometryReport report;
  std::vector<std::string> names = ds.class_names();
  if (a.classes.empty()) {
    report = geometry_report(emb, ids, ds.classes());
  } else {
    std::vector<std::size_t> keep;
    std::vector<std::string> kept_names;
    for (const auto& c : a.classes) {
      auto it = std::find(names.begin(), names.end(), c);
      const std::size_t idx =
          it != names.end() ? static_cast<std::size_t>(it - names.begin()) : parse_count(c);
      if (idx >= names.size()) throw Error(ErrorCode::IndexOutOfRange, "no class '" + c + "'");
      keep.push_back(idx);
      kept_names.push_back(names[idx]);
    }
    report = geometry_report_subset(emb, ids, keep);
    names = kept_names;
  }
  write_report_csv(report, names, dir);
  write_file(dir / "scores.json", scores_to_json(report));
  err << "geometry of " << emb.size() << " embeddings over " << report.classes << " classes\n";
  out << json{{"command", "geometry"},
              {"status", "ok"},
              {"out_dir", dir.string()},
              {"scores", scores_object(report)}}
             .dump()
      << '\n';
  return kOk;
}

struct SynthArgs {
  SynthConfig cfg;
  std::filesystem::path out;
};

int cmd_synth(const SynthArgs& a, std::ostream& out, std::ostream& err) {
  a.cfg.validate();
  const Dataset ds = generate_synthetic(a.cfg);
  if (a.out.has_parent_path()) std::filesystem::create_directories(a.out.parent_path());
  save_csv(ds, a.out);
  err << "wrote " << ds.size() << " rows to " << a.out.string() << "\n";
  out << json{{"command", "synth"},
              {"status", "ok"},
              {"path", a.out.string()},
              {"rows", ds.size()},
              {"classes", ds.classes()},
              {"dim", ds.feature_dim()}}
             .dump()
      << '\n';
  return kOk;
}

void emit_error(std::ostream& out, std::ostream& err, const std::string& command,
                const std::string& code, const std::string& message) {
  err << "error: " << message << "\n";
  out << json{{"command", command}, {"status", "error"}, {"error", code}, {"message", message}}
             .dump()
      << '\n';
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Angular distance distribution loss: training, ablation and diagnostics"};
  app.require_subcommand(1);

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "Train one model from a JSON config");
  train_cmd->add_option("-c,--config", train_args.config, "Experiment config (JSON)")->required();
  train_cmd->add_option("--set", train_args.overrides, "Override, e.g. train.epochs=5 (repeatable)");
  train_cmd->add_option("--lambda", train_args.lambda, "Loss weights, e.g. 1010 or 1,0.5,1,0");
  train_cmd->add_option("-o,--out", train_args.out, "Output directory");

  AblateArgs ablate_args;
  auto* ablate_cmd = app.add_subcommand("ablate", "Sweep loss weightings over seeds");
  ablate_cmd->add_option("-c,--config", ablate_args.config, "Experiment config (JSON)")->required();
  ablate_cmd->add_option("--set", ablate_args.overrides, "Config override (repeatable)");
  auto* lambdas_opt = ablate_cmd->add_option(
      "--lambdas", ablate_args.lambdas,
      "Weightings, space or ';' separated (default 1000 0100 0010 0001 1010 1111)");
  ablate_cmd->add_option("--seeds", ablate_args.seeds, "Seeds (default: the config seed)");
  ablate_cmd->add_flag("--parallel", ablate_args.parallel, "Run on all hardware threads");
  ablate_cmd->add_option("-o,--out", ablate_args.out, "Output directory");

  GradcheckArgs grad_args;
  auto* grad_cmd = app.add_subcommand("gradcheck", "Compare analytic and numeric ADD gradients");
  grad_cmd->add_option("--dims", grad_args.dims, "Embedding dimension range, e.g. 2-8")
      ->capture_default_str();
  grad_cmd->add_option("--batch-sizes", grad_args.batch_sizes, "Batch size range, e.g. 2-16")
      ->capture_default_str();
  grad_cmd->add_option("--trials", grad_args.trials, "Random batches")->capture_default_str();
  grad_cmd->add_option("--weight-draws", grad_args.weight_draws, "Weight vectors per batch")
      ->capture_default_str();
  grad_cmd->add_option("--tolerance", grad_args.tolerance, "Max relative error")
      ->capture_default_str();
  grad_cmd->add_option("--step", grad_args.step, "Finite-difference step")->capture_default_str();
  grad_cmd->add_option("--seed", grad_args.seed, "Seed")->capture_default_str();

  GeometryArgs geo_args;
  auto* geo_cmd = app.add_subcommand("geometry", "Embedding geometry report of a checkpoint");
  geo_cmd->add_option("--checkpoint", geo_args.checkpoint, "checkpoint.json")->required();
  geo_cmd->add_option("--dataset", geo_args.dataset, "Dataset CSV")->required();
  geo_cmd->add_option("--label-column", geo_args.label_column, "Categorical label column");
  geo_cmd->add_option("--classes", geo_args.classes, "Restrict to these classes (names or indices)");
  geo_cmd->add_option("-o,--out", geo_args.out, "Output directory");

  SynthArgs synth_args;
  auto* synth_cmd = app.add_subcommand("synth", "Write a synthetic blob dataset as CSV");
  synth_cmd->add_option("-o,--out", synth_args.out, "CSV path")->required();
  synth_cmd->add_option("--classes", synth_args.cfg.classes)->capture_default_str();
  synth_cmd->add_option("--dim", synth_args.cfg.dim)->capture_default_str();
  synth_cmd->add_option("--per-class", synth_args.cfg.per_class)->capture_default_str();
  synth_cmd->add_option("--spread", synth_args.cfg.spread)->capture_default_str();
  synth_cmd->add_option("--separation", synth_args.cfg.separation)->capture_default_str();
  synth_cmd->add_option("--seed", synth_args.cfg.seed)->capture_default_str();

  std::string command = "angdist";
  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    for (auto* sub : app.get_subcommands()) command = sub->get_name();
    emit_error(out, err, command, "UsageError", e.what());
    return kConfigError;
  }
  auto* chosen = app.get_subcommands().front();
  command = chosen->get_name();

  try {
    if (chosen == train_cmd) return cmd_train(train_args, out, err);
    if (chosen == ablate_cmd) return cmd_ablate(ablate_args, lambdas_opt->count() > 0, out, err);
    if (chosen == grad_cmd) return cmd_gradcheck(grad_args, out, err);
    if (chosen == geo_cmd) return cmd_geometry(geo_args, out, err);
    return cmd_synth(synth_args, out, err);
  } catch (const Error& e) {
    emit_error(out, err, command, std::string(to_string(e.code())), e.what());
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    emit_error(out, err, command, "IoError", e.what());
    return kConfigError;
  }
}

}  // namespace angdist::cli
