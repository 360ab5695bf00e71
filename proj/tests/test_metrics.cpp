#include <cmath>
#include <algorithm>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "angdist/metrics.hpp"
#include "support.hpp"

using namespace angdist;
using namespace testing_support;

namespace {

std::vector<UnitEmbedding> embed(const std::vector<std::vector<double>>& rows) {
  std::vector<UnitEmbedding> out;
  for (const auto& r : rows) out.push_back(normalize(r));
  return out;
}

std::vector<UnitEmbedding> embed(const Matrix& m) {
  std::vector<UnitEmbedding> out;
  for (std::size_t r = 0; r < m.rows(); ++r) out.push_back(normalize(m.row(r)));
  return out;
}

bool opt_close(const std::optional<double>& a, double oracle_value, double tol) {
  if (!a) return std::isnan(oracle_value);
  return oracle::rel_close(*a, oracle_value, tol);
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST(CoefficientOfVariation, Edges) {
  EXPECT_FALSE(coefficient_of_variation(std::vector<double>{}).has_value());
  EXPECT_FALSE(coefficient_of_variation(std::vector<double>{3.0}).has_value());
  EXPECT_EQ(coefficient_of_variation(std::vector<double>{0.0, 0.0}), 0.0);
  EXPECT_FALSE(coefficient_of_variation(std::vector<double>{-1.0, 1.0}).has_value());
  EXPECT_NEAR(*coefficient_of_variation(std::vector<double>{1.0, 3.0}), std::sqrt(2.0) / 2.0, 1e-15);
}

TEST(GeometryReport, IdealOrthogonalClasses) {
  const auto z = embed({{1, 0, 0}, {1, 0, 0}, {1, 0, 0}, {0, 1, 0}, {0, 1, 0}, {0, 1, 0},
                        {0, 0, 1}, {0, 0, 1}, {0, 0, 1}});
  const auto r = geometry_report(z, {0, 0, 0, 1, 1, 1, 2, 2, 2});
  EXPECT_EQ(r.classes, 3u);
  EXPECT_EQ(r.intra_clustering, 0.0);
  EXPECT_EQ(r.intra_equidistance, 0.0);
  EXPECT_EQ(r.inter_separation, 0.0);
  EXPECT_EQ(r.inter_equidistance, 0.0);
  EXPECT_EQ(r.pair_counts[0][0], 3u);
  EXPECT_EQ(r.pair_counts[0][1], 9u);
  EXPECT_EQ(r.mean_matrix[1][2], 1.0);
  EXPECT_EQ(r.mean_matrix[2][1], 1.0);
}

TEST(GeometryReport, AntipodalPairHasDiagonalTwo) {
  const auto z = embed({{1, 0}, {-1, 0}, {0, 1}, {0, 1}});
  const auto r = geometry_report(z, {0, 0, 1, 1});
  EXPECT_EQ(r.mean_matrix[0][0], 2.0);
  EXPECT_EQ(r.mean_matrix[1][1], 0.0);
  EXPECT_EQ(r.intra_clustering, 1.0);
  EXPECT_FALSE(r.cv_matrix[0][0].has_value());  // a single intra pair
  EXPECT_FALSE(r.intra_equidistance.has_value());
  EXPECT_EQ(r.mean_matrix[0][1], 1.0);
  EXPECT_EQ(r.inter_separation, 0.0);
}

TEST(GeometryReport, FrozenExample) {
  // Class 0 at 0, 30 and 60 degrees; class 1 at 90 and 180 degrees.
  const auto z = embed({angle(0), angle(30), angle(60), angle(90), angle(180)});
  const auto r = geometry_report(z, {0, 0, 0, 1, 1});
  const double c30 = 1 - std::cos(std::numbers::pi / 6), c60 = 0.5;
  EXPECT_NEAR(r.mean_matrix[0][0], (2 * c30 + c60) / 3, 1e-15);
  EXPECT_NEAR(r.mean_matrix[1][1], 1.0, 1e-15);
  // Inter-class angles: 90, 180, 60, 150, 30, 120 degrees.
  const std::vector<double> inter = {1.0, 2.0, 1 - std::cos(std::numbers::pi / 3), 1 - std::cos(5 * std::numbers::pi / 6),
                                     1 - std::cos(std::numbers::pi / 6), 1 - std::cos(2 * std::numbers::pi / 3)};
  EXPECT_NEAR(r.mean_matrix[0][1], oracle::mean(inter), 1e-15);
  EXPECT_NEAR(*r.inter_separation, std::abs(oracle::mean(inter) - 1.0), 1e-15);
  EXPECT_NEAR(*r.inter_equidistance, oracle::cv_of(inter), 1e-14);
  EXPECT_NEAR(r.intra_clustering, ((2 * c30 + c60) / 3 + 1.0) / 2, 1e-15);
  EXPECT_FALSE(r.cv_matrix[1][1].has_value());
  EXPECT_NEAR(*r.intra_equidistance, *r.cv_matrix[0][0], 1e-15);
}

TEST(GeometryReport, MatchesOracleOnRandomData) {
  std::mt19937_64 rng(21);
  for (int t = 0; t < 50; ++t) {
    const std::size_t classes = 2 + t % 6;
    const std::size_t n = classes * 2 + t;
    const Matrix raw = random_raw(n, 2 + t % 7, rng);
    std::vector<std::size_t> ids(n);
    for (std::size_t i = 0; i < n; ++i) ids[i] = i < 2 * classes ? i / 2 : rng() % classes;
    const auto r = geometry_report(embed(raw), ids);
    const auto o = oracle::geometry(unit_rows(raw), ids, classes);
    for (std::size_t a = 0; a < classes; ++a) {
      for (std::size_t b = 0; b < classes; ++b) {
        EXPECT_TRUE(oracle::rel_close(r.mean_matrix[a][b], o.mean[a][b], 1e-12));
        EXPECT_TRUE(opt_close(r.cv_matrix[a][b], o.cv[a][b], 1e-12));
      }
    }
    EXPECT_TRUE(oracle::rel_close(r.intra_clustering, o.intra_clustering, 1e-12));
    EXPECT_TRUE(opt_close(r.intra_equidistance, o.intra_equidistance, 1e-12));
    EXPECT_TRUE(opt_close(r.inter_separation, o.inter_separation, 1e-12));
    EXPECT_TRUE(opt_close(r.inter_equidistance, o.inter_equidistance, 1e-12));
  }
}

TEST(GeometryReport, PermutationAndRelabelInvariance) {
  std::mt19937_64 rng(22);
  const Matrix raw = random_raw(15, 4, rng);
  std::vector<std::size_t> ids = {0, 0, 0, 0, 0, 1, 1, 1, 1, 1, 2, 2, 2, 2, 2};
  const auto base = geometry_report(embed(raw), ids);

  std::vector<std::size_t> order(15);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<UnitEmbedding> z2;
  std::vector<std::size_t> ids2;
  const auto z = embed(raw);
  const std::size_t relabel[] = {2, 0, 1};
  for (std::size_t i : order) {
    z2.push_back(z[i]);
    ids2.push_back(relabel[ids[i]]);
  }
  const auto r = geometry_report(z2, ids2);
  EXPECT_NEAR(r.intra_clustering, base.intra_clustering, 1e-12);
  EXPECT_NEAR(*r.intra_equidistance, *base.intra_equidistance, 1e-12);
  EXPECT_NEAR(*r.inter_separation, *base.inter_separation, 1e-12);
  EXPECT_NEAR(*r.inter_equidistance, *base.inter_equidistance, 1e-12);
  for (std::size_t a = 0; a < 3; ++a) {
    for (std::size_t b = 0; b < 3; ++b) {
      EXPECT_NEAR(r.mean_matrix[relabel[a]][relabel[b]], base.mean_matrix[a][b], 1e-12);
    }
  }
}

TEST(GeometryReport, SingleClassHasNoInterScores) {
  const auto r = geometry_report(embed({{1, 0}, {0, 1}, {1, 1}}), {0, 0, 0});
  EXPECT_FALSE(r.inter_separation.has_value());
  EXPECT_FALSE(r.inter_equidistance.has_value());
  EXPECT_TRUE(r.intra_equidistance.has_value());
}

TEST(GeometryReport, Errors) {
  const auto z = embed({{1, 0}, {0, 1}, {1, 1}});
  try {
    geometry_report(z, {0, 0, 1});
    ADD_FAILURE() << "expected ClassTooSmall";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ClassTooSmall);
    EXPECT_NE(std::string(e.what()).find("1 (1 samples)"), std::string::npos) << e.what();
  }
  EXPECT_ERROR_CODE(geometry_report(z, {0, 0, 0}, 2), ErrorCode::ClassTooSmall);
  EXPECT_ERROR_CODE(geometry_report(z, {0, 0}), ErrorCode::DimensionMismatch);
  EXPECT_ERROR_CODE(geometry_report({}, {}), ErrorCode::InvalidArgument);
  EXPECT_ERROR_CODE(geometry_report(z, {0, 0, 3}, 2), ErrorCode::IndexOutOfRange);
  auto mixed = z;
  mixed.push_back(normalize(std::vector<double>{1, 0, 0}));
  EXPECT_ERROR_CODE(geometry_report(mixed, {0, 0, 0, 0}), ErrorCode::DimensionMismatch);
}

TEST(GeometryReport, SubsetMatchesDirectReport) {
  std::mt19937_64 rng(23);
  const Matrix raw = random_raw(12, 3, rng);
  const std::vector<std::size_t> ids = {0, 0, 0, 1, 1, 1, 2, 2, 2, 3, 3, 3};
  const auto z = embed(raw);
  const auto sub = geometry_report_subset(z, ids, {3, 1});
  std::vector<UnitEmbedding> kept;
  std::vector<std::size_t> kept_ids;
  for (std::size_t i = 0; i < 12; ++i) {
    if (ids[i] == 3 || ids[i] == 1) {
      kept.push_back(z[i]);
      kept_ids.push_back(ids[i] == 3 ? 0 : 1);
    }
  }
  const auto direct = geometry_report(kept, kept_ids);
  EXPECT_EQ(sub.mean_matrix, direct.mean_matrix);
  EXPECT_EQ(sub.intra_clustering, direct.intra_clustering);
  EXPECT_ERROR_CODE(geometry_report_subset(z, ids, {}), ErrorCode::InvalidArgument);
}

TEST(GeometryReport, JsonOutput) {
  const auto r = geometry_report(embed({{1, 0}, {-1, 0}, {0, 1}, {0, 1}}), {0, 0, 1, 1});
  const auto doc = nlohmann::json::parse(report_to_json(r, {"a", "b"}));
  EXPECT_EQ(doc["classes"], 2);
  EXPECT_EQ(doc["mean_matrix"][0][0], 2.0);
  EXPECT_TRUE(doc["cv_matrix"][0][0].is_null());
  EXPECT_EQ(doc["pair_counts"][0][1], 4);
  EXPECT_TRUE(doc["scores"]["intra_equidistance"].is_null());
  EXPECT_EQ(doc["scores"]["intra_clustering"], 1.0);
  EXPECT_EQ(doc["class_names"][1], "b");
  const auto scores = nlohmann::json::parse(scores_to_json(r));
  EXPECT_EQ(scores["inter_separation"], 0.0);
}

TEST(GeometryReport, CsvOutput) {
  const auto dir = temp_dir("report_csv") / "nested";
  const auto r = geometry_report(embed({{1, 0}, {-1, 0}, {0, 1}, {0, 1}}), {0, 0, 1, 1});
  write_report_csv(r, {"a", "b"}, dir);
  EXPECT_EQ(read_file(dir / "mean_matrix.csv"), "class,a,b\na,2,1\nb,1,0\n");
  const std::string cv = read_file(dir / "cv_matrix.csv");
  EXPECT_EQ(cv.substr(0, 14), "class,a,b\na,na");
  write_report_csv(r, {"only_one"}, dir);
  EXPECT_EQ(read_file(dir / "mean_matrix.csv").substr(0, 22), "class,class_0,class_1\n");
}
