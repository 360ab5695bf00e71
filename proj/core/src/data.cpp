#include "angdist/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <string>

#include "angdist/error.hpp"

namespace angdist {

namespace {

constexpr std::size_t kCentroidRetries = 1000;

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    out.push_back(line.substr(start, comma == std::string::npos ? std::string::npos
                                                                : comma - start));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  for (auto& f : out) {
    f.erase(0, f.find_first_not_of(" \t"));
    f.erase(f.find_last_not_of(" \t") + 1);
  }
  return out;
}

double parse_number(const std::string& field, std::size_t line, const std::string& column) {
  double v = 0.0;
  const char* first = field.data();
  const char* last = field.data() + field.size();
  if (first != last && *first == '+') ++first;
  auto res = std::from_chars(first, last, v);
  if (field.empty() || res.ec != std::errc() || res.ptr != last || !std::isfinite(v)) {
    throw Error(ErrorCode::ParseError, "line " + std::to_string(line) + ": '" + field +
                                           "' in column '" + column + "' is not a finite number");
  }
  return v;
}

std::string format_number(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::optional<std::size_t> label_index(const std::string& name) {
  constexpr std::string_view prefix = "label_";
  if (name.size() <= prefix.size() || name.compare(0, prefix.size(), prefix) != 0) {
    return std::nullopt;
  }
  std::size_t idx = 0;
  const char* first = name.data() + prefix.size();
  const char* last = name.data() + name.size();
  auto res = std::from_chars(first, last, idx);
  if (res.ec != std::errc() || res.ptr != last) return std::nullopt;
  return idx;
}

}  // namespace

Dataset::Dataset(Matrix features, std::vector<LabelVector> labels,
                 std::vector<std::string> class_names)
    : features_(std::move(features)),
      labels_(std::move(labels)),
      class_names_(std::move(class_names)) {
  if (features_.rows() != labels_.size()) {
    throw Error(ErrorCode::DimensionMismatch,
                std::to_string(features_.rows()) + " feature rows but " +
                    std::to_string(labels_.size()) + " labels");
  }
  if (class_names_.empty()) throw Error(ErrorCode::InvalidArgument, "dataset has no classes");
  for (const auto& y : labels_) {
    if (y.classes() != class_names_.size()) {
      throw Error(ErrorCode::DimensionMismatch, "label width differs from the class count");
    }
  }
  if (!features_.all_finite()) {
    throw Error(ErrorCode::InvalidArgument, "dataset features must be finite");
  }
}

std::vector<std::size_t> Dataset::class_ids() const {
  std::vector<std::size_t> ids;
  ids.reserve(labels_.size());
  for (const auto& y : labels_) ids.push_back(y.argmax());
  return ids;
}

Dataset Dataset::subset(const std::vector<std::size_t>& indices) const {
  Matrix f(indices.size(), feature_dim());
  std::vector<LabelVector> y;
  y.reserve(indices.size());
  for (std::size_t r = 0; r < indices.size(); ++r) {
    if (indices[r] >= size()) {
      throw Error(ErrorCode::IndexOutOfRange, "row " + std::to_string(indices[r]) +
                                                  " out of range for " + std::to_string(size()));
    }
    std::copy(features_.row(indices[r]).begin(), features_.row(indices[r]).end(),
              f.row(r).begin());
    y.push_back(labels_[indices[r]]);
  }
  return Dataset(std::move(f), std::move(y), class_names_);
}

std::vector<std::string> default_class_names(std::size_t classes) {
  std::vector<std::string> names;
  for (std::size_t c = 0; c < classes; ++c) names.push_back("class_" + std::to_string(c));
  return names;
}

void SynthConfig::validate() const {
  if (classes < 1 || dim < 1 || per_class < 1) {
    throw Error(ErrorCode::InvalidArgument, "synthetic classes, dim and per_class must be >= 1");
  }
  if (!(spread > 0.0) || !std::isfinite(spread)) {
    throw Error(ErrorCode::InvalidArgument, "synthetic spread must be positive");
  }
  if (!(separation >= 0.0) || !std::isfinite(separation)) {
    throw Error(ErrorCode::InvalidArgument, "synthetic separation must be nonnegative");
  }
}

Dataset generate_synthetic(const SynthConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);

  std::vector<std::vector<double>> centroids;
  for (std::size_t c = 0; c < cfg.classes; ++c) {
    bool placed = false;
    for (std::size_t attempt = 0; attempt < kCentroidRetries && !placed; ++attempt) {
      std::vector<double> dir(cfg.dim);
      double norm = 0.0;
      while (norm < 1e-12) {
        for (double& v : dir) v = gauss(rng);
        norm = l2_norm(dir);
      }
      for (double& v : dir) v *= cfg.separation / norm;
      placed = std::all_of(centroids.begin(), centroids.end(), [&](const auto& other) {
        double sq = 0.0;
        for (std::size_t k = 0; k < cfg.dim; ++k) sq += (dir[k] - other[k]) * (dir[k] - other[k]);
        return std::sqrt(sq) >= cfg.separation;
      });
      if (placed) centroids.push_back(std::move(dir));
    }
    if (!placed) {
      throw Error(ErrorCode::InfeasibleGeometry,
                  "could not place " + std::to_string(cfg.classes) + " centroids " +
                      format_number(cfg.separation) + " apart in " + std::to_string(cfg.dim) +
                      " dimensions");
    }
  }

  const std::size_t n = cfg.classes * cfg.per_class;
  Matrix features(n, cfg.dim);
  std::vector<LabelVector> labels;
  labels.reserve(n);
  for (std::size_t c = 0; c < cfg.classes; ++c) {
    for (std::size_t s = 0; s < cfg.per_class; ++s) {
      auto row = features.row(c * cfg.per_class + s);
      for (std::size_t k = 0; k < cfg.dim; ++k) row[k] = centroids[c][k] + cfg.spread * gauss(rng);
      labels.push_back(LabelVector::one_hot(cfg.classes, c));
    }
  }
  return Dataset(std::move(features), std::move(labels), default_class_names(cfg.classes));
}

Dataset load_csv(const std::filesystem::path& path, const std::optional<std::string>& label_column) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());

  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line_no == 1 && line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) {
      line.erase(0, 3);
    }
    if (line.empty()) continue;
    header = split_fields(line);
    break;
  }
  if (header.empty()) throw Error(ErrorCode::ParseError, path.string() + ": missing header row");

  std::optional<std::size_t> categorical;
  std::map<std::size_t, std::size_t> prob_columns;  // class index -> column
  if (label_column) {
    auto it = std::find(header.begin(), header.end(), *label_column);
    if (it == header.end()) {
      throw Error(ErrorCode::UnknownLabelColumn,
                  "column '" + *label_column + "' not found in " + path.string());
    }
    categorical = static_cast<std::size_t>(it - header.begin());
  } else {
    for (std::size_t col = 0; col < header.size(); ++col) {
      if (auto idx = label_index(header[col])) {
        if (!prob_columns.emplace(*idx, col).second) {
          throw Error(ErrorCode::InconsistentWidth, "duplicate column " + header[col]);
        }
      }
    }
    if (prob_columns.empty()) {
      throw Error(ErrorCode::UnknownLabelColumn,
                  path.string() + " has no label_0..label_{c-1} columns and no label column was "
                                  "named");
    }
    if (prob_columns.rbegin()->first + 1 != prob_columns.size()) {
      throw Error(ErrorCode::InconsistentWidth,
                  "label columns must be label_0..label_" +
                      std::to_string(prob_columns.size() - 1) + " without gaps");
    }
  }

  std::vector<std::size_t> feature_cols;
  for (std::size_t col = 0; col < header.size(); ++col) {
    const bool is_label = categorical ? col == *categorical : label_index(header[col]).has_value();
    if (!is_label) feature_cols.push_back(col);
  }
  if (feature_cols.empty()) {
    throw Error(ErrorCode::InconsistentWidth, path.string() + " has no feature columns");
  }

  std::vector<double> values;
  std::vector<std::string> categories;
  std::vector<std::size_t> category_ids;
  std::vector<std::vector<double>> probs;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_fields(line);
    if (fields.size() != header.size()) {
      throw Error(ErrorCode::ParseError, path.string() + " line " + std::to_string(line_no) +
                                             ": expected " + std::to_string(header.size()) +
                                             " fields, found " + std::to_string(fields.size()));
    }
    for (std::size_t col : feature_cols) {
      values.push_back(parse_number(fields[col], line_no, header[col]));
    }
    if (categorical) {
      const std::string& name = fields[*categorical];
      if (name.empty()) {
        throw Error(ErrorCode::ParseError, "line " + std::to_string(line_no) + ": empty label");
      }
      auto it = std::find(categories.begin(), categories.end(), name);
      category_ids.push_back(static_cast<std::size_t>(it - categories.begin()));
      if (it == categories.end()) categories.push_back(name);
    } else {
      std::vector<double> p(prob_columns.size());
      for (const auto& [cls, col] : prob_columns) p[cls] = parse_number(fields[col], line_no, header[col]);
      probs.push_back(std::move(p));
    }
    ++rows;
  }
  if (rows < 2) throw Error(ErrorCode::ParseError, path.string() + " needs at least two data rows");

  std::vector<LabelVector> labels;
  std::vector<std::string> class_names;
  if (categorical) {
    for (std::size_t id : category_ids) labels.push_back(LabelVector::one_hot(categories.size(), id));
    class_names = std::move(categories);
  } else {
    for (std::size_t r = 0; r < rows; ++r) {
      try {
        labels.emplace_back(std::move(probs[r]));
      } catch (const Error& e) {
        throw Error(ErrorCode::ParseError,
                    "data row " + std::to_string(r + 1) + " has an invalid label: " + e.what());
      }
    }
    class_names = default_class_names(prob_columns.size());
  }
  return Dataset(Matrix(rows, feature_cols.size(), std::move(values)), std::move(labels),
                 std::move(class_names));
}

void save_csv(const Dataset& dataset, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  for (std::size_t k = 0; k < dataset.feature_dim(); ++k) out << (k ? "," : "") << "f_" << k;
  for (std::size_t c = 0; c < dataset.classes(); ++c) out << ",label_" << c;
  out << '\n';
  for (std::size_t r = 0; r < dataset.size(); ++r) {
    const auto row = dataset.features().row(r);
    for (std::size_t k = 0; k < row.size(); ++k) out << (k ? "," : "") << format_number(row[k]);
    for (double p : dataset.labels()[r].probs()) out << ',' << format_number(p);
    out << '\n';
  }
  if (!out) throw Error(ErrorCode::IoError, "failed writing " + path.string());
}

Split split_dataset(const Dataset& dataset, double eval_fraction, std::uint64_t seed) {
  if (!(eval_fraction >= 0.0 && eval_fraction < 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "eval fraction must be in [0, 1)");
  }
  std::mt19937_64 rng(seed);
  std::vector<std::vector<std::size_t>> by_class(dataset.classes());
  const auto ids = dataset.class_ids();
  for (std::size_t i = 0; i < ids.size(); ++i) by_class[ids[i]].push_back(i);

  std::vector<std::size_t> train_idx, eval_idx;
  for (auto& members : by_class) {
    std::shuffle(members.begin(), members.end(), rng);
    const auto n_eval = static_cast<std::size_t>(
        std::llround(eval_fraction * static_cast<double>(members.size())));
    eval_idx.insert(eval_idx.end(), members.begin(), members.begin() + n_eval);
    train_idx.insert(train_idx.end(), members.begin() + n_eval, members.end());
  }
  std::sort(train_idx.begin(), train_idx.end());
  std::sort(eval_idx.begin(), eval_idx.end());
  return {dataset.subset(train_idx), dataset.subset(eval_idx)};
}

std::vector<std::vector<std::size_t>> shuffled_batches(std::size_t count, std::size_t batch_size,
                                                       std::mt19937_64& rng) {
  if (batch_size == 0) throw Error(ErrorCode::InvalidArgument, "batch size must be positive");
  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < count; start += batch_size) {
    const std::size_t end = std::min(count, start + batch_size);
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

double sample_symmetric_beta(double alpha, std::mt19937_64& rng) {
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) {
    throw Error(ErrorCode::InvalidArgument, "mixup alpha must be nonnegative");
  }
  if (alpha == 0.0) return 1.0;
  std::gamma_distribution<double> gamma(alpha, 1.0);
  const double x = gamma(rng);
  const double y = gamma(rng);
  if (x + y == 0.0) return 0.5;
  return x / (x + y);
}

MixedBatch mixup(const std::vector<std::size_t>& batch_a, const std::vector<std::size_t>& batch_b,
                 const Dataset& dataset, const MixupSpec& spec, std::mt19937_64& rng) {
  if (batch_a.size() != batch_b.size()) {
    throw Error(ErrorCode::InvalidArgument, "mixup index lists differ in length");
  }
  if (spec.mode == MixupMode::Fixed && !(spec.value >= 0.0 && spec.value <= 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "fixed mixup coefficient must be in [0, 1]");
  }
  for (const auto* list : {&batch_a, &batch_b}) {
    for (std::size_t idx : *list) {
      if (idx >= dataset.size()) {
        throw Error(ErrorCode::IndexOutOfRange, "mixup index " + std::to_string(idx) +
                                                    " out of range for " +
                                                    std::to_string(dataset.size()) + " rows");
      }
    }
  }

  const std::size_t n = batch_a.size();
  MixedBatch out{Matrix(n, dataset.feature_dim()), {}, {}};
  out.labels.reserve(n);
  for (std::size_t r = 0; r < n; ++r) {
    const double m =
        spec.mode == MixupMode::Fixed ? spec.value : sample_symmetric_beta(spec.value, rng);
    out.coefficients.push_back(m);
    const auto xa = dataset.features().row(batch_a[r]);
    const auto xb = dataset.features().row(batch_b[r]);
    const auto& ya = dataset.labels()[batch_a[r]];
    const auto& yb = dataset.labels()[batch_b[r]];
    auto x = out.features.row(r);
    if (m == 1.0) {
      std::copy(xa.begin(), xa.end(), x.begin());
      out.labels.push_back(ya);
      continue;
    }
    for (std::size_t k = 0; k < x.size(); ++k) x[k] = m * xa[k] + (1.0 - m) * xb[k];
    std::vector<double> y(ya.classes());
    for (std::size_t c = 0; c < y.size(); ++c) {
      y[c] = std::clamp(m * ya[c] + (1.0 - m) * yb[c], 0.0, 1.0);
    }
    out.labels.emplace_back(std::move(y));
  }
  return out;
}

std::mt19937_64 make_stream(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  return std::mt19937_64(seq);
}

}  // namespace angdist
