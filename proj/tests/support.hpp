#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "angdist/error.hpp"
#include "angdist/geometry.hpp"
#include "angdist/matrix.hpp"
#include "oracle.hpp"

#define EXPECT_ERROR_CODE(stmt, expected_code)                               \
  do {                                                                       \
    try {                                                                    \
      stmt;                                                                  \
      ADD_FAILURE() << "expected " << ::angdist::to_string(expected_code);   \
    } catch (const ::angdist::Error& e_) {                                   \
      EXPECT_EQ(e_.code(), expected_code) << e_.what();                      \
    }                                                                        \
  } while (0)

namespace testing_support {

using angdist::Batch;
using angdist::LabelVector;
using angdist::Matrix;

inline Matrix random_raw(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    double norm = 0.0;
    do {
      norm = 0.0;
      for (std::size_t c = 0; c < cols; ++c) {
        m(r, c) = n(rng);
        norm += m(r, c) * m(r, c);
      }
    } while (std::sqrt(norm) < 0.25);
  }
  return m;
}

inline std::vector<LabelVector> random_hard_labels(std::size_t count, std::size_t classes,
                                                   std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> pick(0, classes - 1);
  std::vector<LabelVector> out;
  for (std::size_t i = 0; i < count; ++i) out.push_back(LabelVector::one_hot(classes, pick(rng)));
  return out;
}

/// Half one-hot, half random two-class mixtures.
inline std::vector<LabelVector> random_soft_labels(std::size_t count, std::size_t classes,
                                                   std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> pick(0, classes - 1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<LabelVector> out;
  for (std::size_t i = 0; i < count; ++i) {
    std::vector<double> p(classes, 0.0);
    const std::size_t a = pick(rng);
    if (u(rng) < 0.5) {
      p[a] = 1.0;
    } else {
      const std::size_t b = pick(rng);
      const double m = u(rng);
      p[a] += m;
      p[b] += 1.0 - m;
    }
    out.push_back(LabelVector(p));
  }
  return out;
}

inline std::vector<oracle::Vec> raw_rows(const Matrix& m) {
  std::vector<oracle::Vec> out;
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto row = m.row(r);
    out.emplace_back(row.begin(), row.end());
  }
  return out;
}

inline std::vector<oracle::Vec> unit_rows(const Matrix& m) {
  std::vector<oracle::Vec> out;
  for (const auto& r : raw_rows(m)) out.push_back(oracle::unit(r));
  return out;
}

inline std::vector<oracle::Vec> label_rows(const std::vector<LabelVector>& labels) {
  std::vector<oracle::Vec> out;
  for (const auto& l : labels) out.emplace_back(l.probs().begin(), l.probs().end());
  return out;
}

inline std::vector<std::size_t> argmax_ids(const std::vector<LabelVector>& labels) {
  std::vector<std::size_t> out;
  for (const auto& l : labels) out.push_back(l.argmax());
  return out;
}

inline Batch make_batch(const Matrix& raw, const std::vector<LabelVector>& labels) {
  std::vector<angdist::UnitEmbedding> z;
  for (std::size_t r = 0; r < raw.rows(); ++r) z.push_back(angdist::normalize(raw.row(r)));
  return Batch(std::move(z), labels);
}

inline std::vector<double> angle(double degrees) {
  const double r = degrees * 3.14159265358979323846 / 180.0;
  return {std::cos(r), std::sin(r)};
}

/// Fresh, empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("angdist_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace testing_support
