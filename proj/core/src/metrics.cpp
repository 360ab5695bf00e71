#include "angdist/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <string>

#include "angdist/error.hpp"
#include "report_json.hpp"

namespace angdist {

std::optional<double> coefficient_of_variation(std::span<const double> values) {
  if (values.size() < 2) return std::nullopt;
  const Moments m = moments(values);
  if (m.mean == 0.0) {
    if (m.sample_std == 0.0) return 0.0;
    return std::nullopt;
  }
  return m.sample_std / m.mean;
}

GeometryReport geometry_report(const std::vector<UnitEmbedding>& embeddings,
                               const std::vector<std::size_t>& class_ids,
                               std::optional<std::size_t> classes) {
  if (embeddings.size() != class_ids.size()) {
    throw Error(ErrorCode::DimensionMismatch,
                std::to_string(embeddings.size()) + " embeddings but " +
                    std::to_string(class_ids.size()) + " class ids");
  }
  if (embeddings.empty()) throw Error(ErrorCode::InvalidArgument, "no embeddings to report on");
  const std::size_t c =
      classes.value_or(*std::max_element(class_ids.begin(), class_ids.end()) + 1);

  std::vector<std::vector<std::size_t>> groups(c);
  for (std::size_t i = 0; i < class_ids.size(); ++i) {
    if (class_ids[i] >= c) {
      throw Error(ErrorCode::IndexOutOfRange, "class id " + std::to_string(class_ids[i]) +
                                                  " out of range for " + std::to_string(c) +
                                                  " classes");
    }
    if (embeddings[i].dim() != embeddings.front().dim()) {
      throw Error(ErrorCode::DimensionMismatch, "embeddings have different dimensions");
    }
    groups[class_ids[i]].push_back(i);
  }
  std::string small;
  for (std::size_t a = 0; a < c; ++a) {
    if (groups[a].size() < 2) {
      small += (small.empty() ? "" : ", ") + std::to_string(a) + " (" +
               std::to_string(groups[a].size()) + " samples)";
    }
  }
  if (!small.empty()) {
    throw Error(ErrorCode::ClassTooSmall, "classes need at least two embeddings: " + small);
  }

  GeometryReport r;
  r.classes = c;
  r.mean_matrix.assign(c, std::vector<double>(c, 0.0));
  r.cv_matrix.assign(c, std::vector<std::optional<double>>(c));
  r.pair_counts.assign(c, std::vector<std::size_t>(c, 0));

  std::vector<double> pooled_inter;
  std::vector<double> cell;
  for (std::size_t a = 0; a < c; ++a) {
    for (std::size_t b = a; b < c; ++b) {
      cell.clear();
      const auto& ga = groups[a];
      const auto& gb = groups[b];
      for (std::size_t x = 0; x < ga.size(); ++x) {
        for (std::size_t y = (a == b ? x + 1 : 0); y < gb.size(); ++y) {
          cell.push_back(cosine_distance(embeddings[ga[x]], embeddings[gb[y]]));
        }
      }
      const double mean = moments(cell).mean;
      const auto cv = coefficient_of_variation(cell);
      r.mean_matrix[a][b] = r.mean_matrix[b][a] = mean;
      r.cv_matrix[a][b] = r.cv_matrix[b][a] = cv;
      r.pair_counts[a][b] = r.pair_counts[b][a] = cell.size();
      if (a != b) pooled_inter.insert(pooled_inter.end(), cell.begin(), cell.end());
    }
  }

  double diag = 0.0;
  double cv_sum = 0.0;
  std::size_t cv_defined = 0;
  for (std::size_t a = 0; a < c; ++a) {
    diag += r.mean_matrix[a][a];
    if (r.cv_matrix[a][a]) {
      cv_sum += *r.cv_matrix[a][a];
      ++cv_defined;
    }
  }
  r.intra_clustering = diag / static_cast<double>(c);
  if (cv_defined > 0) r.intra_equidistance = cv_sum / static_cast<double>(cv_defined);

  if (c > 1) {
    double dev = 0.0;
    for (std::size_t a = 0; a < c; ++a) {
      for (std::size_t b = a + 1; b < c; ++b) dev += std::abs(r.mean_matrix[a][b] - 1.0);
    }
    r.inter_separation = dev / static_cast<double>(c * (c - 1) / 2);
    r.inter_equidistance = coefficient_of_variation(pooled_inter);
  }
  return r;
}

GeometryReport geometry_report_subset(const std::vector<UnitEmbedding>& embeddings,
                                      const std::vector<std::size_t>& class_ids,
                                      const std::vector<std::size_t>& keep) {
  if (keep.empty()) throw Error(ErrorCode::InvalidArgument, "empty class subset");
  std::vector<UnitEmbedding> sub;
  std::vector<std::size_t> ids;
  for (std::size_t i = 0; i < class_ids.size(); ++i) {
    auto it = std::find(keep.begin(), keep.end(), class_ids[i]);
    if (it == keep.end()) continue;
    sub.push_back(embeddings[i]);
    ids.push_back(static_cast<std::size_t>(it - keep.begin()));
  }
  if (sub.empty()) throw Error(ErrorCode::ClassTooSmall, "no embeddings in the selected classes");
  return geometry_report(sub, ids, keep.size());
}

namespace detail {

json scores_json(const GeometryReport& r) {
  return json{{"intra_clustering", r.intra_clustering},
              {"intra_equidistance", optional_number(r.intra_equidistance)},
              {"inter_separation", optional_number(r.inter_separation)},
              {"inter_equidistance", optional_number(r.inter_equidistance)}};
}

json report_json(const GeometryReport& r, const std::vector<std::string>& class_names) {
  json cv = json::array();
  for (const auto& row : r.cv_matrix) {
    json out = json::array();
    for (const auto& v : row) out.push_back(optional_number(v));
    cv.push_back(std::move(out));
  }
  json doc{{"classes", r.classes},
           {"mean_matrix", r.mean_matrix},
           {"cv_matrix", std::move(cv)},
           {"pair_counts", r.pair_counts},
           {"scores", scores_json(r)}};
  if (!class_names.empty()) doc["class_names"] = class_names;
  return doc;
}

}  // namespace detail

std::string report_to_json(const GeometryReport& report,
                           const std::vector<std::string>& class_names) {
  return detail::report_json(report, class_names).dump(2);
}

std::string scores_to_json(const GeometryReport& report) {
  detail::json doc = detail::scores_json(report);
  doc["classes"] = report.classes;
  return doc.dump(2);
}

namespace {

std::string cell_text(double v) {
  if (!std::isfinite(v)) return "nan";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

template <typename CellFn>
void write_matrix_csv(const std::filesystem::path& path, const std::vector<std::string>& names,
                      std::size_t c, CellFn&& cell) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << "class";
  for (std::size_t b = 0; b < c; ++b) out << ',' << names[b];
  out << '\n';
  for (std::size_t a = 0; a < c; ++a) {
    out << names[a];
    for (std::size_t b = 0; b < c; ++b) out << ',' << cell(a, b);
    out << '\n';
  }
  if (!out) throw Error(ErrorCode::IoError, "failed writing " + path.string());
}

}  // namespace

void write_report_csv(const GeometryReport& report, const std::vector<std::string>& class_names,
                      const std::filesystem::path& dir) {
  std::vector<std::string> names = class_names;
  if (names.size() != report.classes) {
    names.clear();
    for (std::size_t a = 0; a < report.classes; ++a) names.push_back("class_" + std::to_string(a));
  }
  std::filesystem::create_directories(dir);
  write_matrix_csv(dir / "mean_matrix.csv", names, report.classes,
                   [&](std::size_t a, std::size_t b) { return cell_text(report.mean_matrix[a][b]); });
  write_matrix_csv(dir / "cv_matrix.csv", names, report.classes, [&](std::size_t a, std::size_t b) {
    const auto& v = report.cv_matrix[a][b];
    return v ? cell_text(*v) : std::string("nan");
  });
}

}  // namespace angdist
