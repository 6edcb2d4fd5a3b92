#pragma once

// Classification metrics over the five motion classes.

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "emgcnn/core.hpp"

namespace emgcnn::eval {

// counts[true][predicted]
struct ConfusionMatrix {
  std::array<std::array<std::int64_t, kNumClasses>, kNumClasses> counts{};

  [[nodiscard]] std::int64_t total() const {
    std::int64_t t = 0;
    for (const auto& row : counts)
      for (auto v : row) t += v;
    return t;
  }
  [[nodiscard]] std::int64_t trace() const {
    std::int64_t t = 0;
    for (int i = 0; i < kNumClasses; ++i) t += counts[i][i];
    return t;
  }
  [[nodiscard]] std::int64_t row_sum(int c) const {
    std::int64_t t = 0;
    for (auto v : counts[c]) t += v;
    return t;
  }
  [[nodiscard]] std::int64_t col_sum(int c) const {
    std::int64_t t = 0;
    for (const auto& row : counts) t += row[c];
    return t;
  }

  void add(ClassId truth, ClassId pred) { ++counts[to_index(truth)][to_index(pred)]; }

  ConfusionMatrix& operator+=(const ConfusionMatrix& o) {
    for (int i = 0; i < kNumClasses; ++i)
      for (int j = 0; j < kNumClasses; ++j) counts[i][j] += o.counts[i][j];
    return *this;
  }

  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;
};

inline ConfusionMatrix confusion(std::span<const ClassId> preds, std::span<const ClassId> truths) {
  if (preds.size() != truths.size()) {
    throw UsageError("confusion: " + std::to_string(preds.size()) + " predictions for " +
                     std::to_string(truths.size()) + " truths");
  }
  if (preds.empty()) throw UsageError("confusion: empty input");
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < preds.size(); ++i) cm.add(truths[i], preds[i]);
  return cm;
}

inline double accuracy(const ConfusionMatrix& cm) {
  const auto total = cm.total();
  if (total == 0) throw UsageError("accuracy: empty confusion matrix");
  return static_cast<double>(cm.trace()) / static_cast<double>(total);
}

// Per-class F1 = 2PR/(P+R); 0 when P+R = 0 (including a class that is neither
// predicted nor present).
inline std::array<double, kNumClasses> f1_per_class(const ConfusionMatrix& cm) {
  std::array<double, kNumClasses> f1{};
  for (int c = 0; c < kNumClasses; ++c) {
    const auto tp = static_cast<double>(cm.counts[c][c]);
    const auto predicted = static_cast<double>(cm.col_sum(c));
    const auto actual = static_cast<double>(cm.row_sum(c));
    const double p = predicted > 0 ? tp / predicted : 0.0;
    const double r = actual > 0 ? tp / actual : 0.0;
    f1[c] = p + r > 0 ? 2.0 * p * r / (p + r) : 0.0;
  }
  return f1;
}

// Unweighted mean of the five per-class F1 scores.
inline double f1_macro(const ConfusionMatrix& cm) {
  if (cm.total() == 0) throw UsageError("f1_macro: empty confusion matrix");
  double s = 0.0;
  for (double v : f1_per_class(cm)) s += v;
  return s / kNumClasses;
}

// Recall of each class (diagonal over row sum); 0 for an empty row.
inline std::array<double, kNumClasses> per_class_accuracy(const ConfusionMatrix& cm) {
  std::array<double, kNumClasses> a{};
  for (int c = 0; c < kNumClasses; ++c) {
    const auto n = cm.row_sum(c);
    a[c] = n > 0 ? static_cast<double>(cm.counts[c][c]) / static_cast<double>(n) : 0.0;
  }
  return a;
}

using RealMatrix = std::array<std::array<double, kNumClasses>, kNumClasses>;

// With normalize: each matrix is row-normalized to percentages and the results
// averaged entrywise (every row must be non-empty). Without: plain entrywise
// mean of the raw counts.
inline RealMatrix average_subjectwise(std::span<const ConfusionMatrix> matrices,
                                      bool normalize = true) {
  if (matrices.empty()) throw UsageError("average_subjectwise: no matrices");
  RealMatrix out{};
  for (const auto& cm : matrices) {
    for (int i = 0; i < kNumClasses; ++i) {
      const auto n = cm.row_sum(i);
      if (normalize && n == 0) {
        throw DataError("average_subjectwise: matrix has an all-zero row for class " +
                        std::string(kClassNames[i]));
      }
      for (int j = 0; j < kNumClasses; ++j) {
        const auto v = static_cast<double>(cm.counts[i][j]);
        out[i][j] += normalize ? 100.0 * v / static_cast<double>(n) : v;
      }
    }
  }
  for (auto& row : out)
    for (double& v : row) v /= static_cast<double>(matrices.size());
  return out;
}

}  // namespace emgcnn::eval
