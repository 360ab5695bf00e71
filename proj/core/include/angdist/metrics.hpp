#pragma once

// Embedding-geometry report: per-class-pair mean and coefficient of
// variation of cosine distances, plus four scalar scores (lower is better
// for all of them):
//   intra_clustering    mean of the diagonal of the mean matrix
//   intra_equidistance  mean of the defined diagonal CV cells
//   inter_separation    mean |m - 1| over the off-diagonal cells m of the mean matrix
//   inter_equidistance  CV of all inter-class distances pooled

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "angdist/geometry.hpp"

namespace angdist {

/// sigma / mu with sample sigma. 0 when both vanish; nullopt for fewer than
/// two samples or mu == 0 with sigma > 0.
std::optional<double> coefficient_of_variation(std::span<const double> values);

struct GeometryReport {
  std::size_t classes = 0;
  std::vector<std::vector<double>> mean_matrix;
  std::vector<std::vector<std::optional<double>>> cv_matrix;
  std::vector<std::vector<std::size_t>> pair_counts;
  double intra_clustering = 0.0;
  std::optional<double> intra_equidistance;
  std::optional<double> inter_separation;  ///< nullopt with a single class
  std::optional<double> inter_equidistance;
};

/// `class_ids[i]` is the class of `embeddings[i]`. Classes 0..classes-1 are
/// reported (`classes` defaults to max id + 1); each needs two or more
/// embeddings, otherwise ClassTooSmall lists the offenders.
GeometryReport geometry_report(const std::vector<UnitEmbedding>& embeddings,
                               const std::vector<std::size_t>& class_ids,
                               std::optional<std::size_t> classes = std::nullopt);

/// Restricts a report to a subset of classes, in the given order. Scores
/// are recomputed from the original embeddings.
GeometryReport geometry_report_subset(const std::vector<UnitEmbedding>& embeddings,
                                      const std::vector<std::size_t>& class_ids,
                                      const std::vector<std::size_t>& keep);

/// {"classes", "mean_matrix", "cv_matrix", "pair_counts", "scores": {...}};
/// undefined values are null.
std::string report_to_json(const GeometryReport& report,
                           const std::vector<std::string>& class_names = {});
std::string scores_to_json(const GeometryReport& report);

/// Writes mean_matrix.csv and cv_matrix.csv into `dir`. Header row
/// "class,<name>...", one row per class; undefined cells are "nan".
void write_report_csv(const GeometryReport& report, const std::vector<std::string>& class_names,
                      const std::filesystem::path& dir);

}  // namespace angdist
