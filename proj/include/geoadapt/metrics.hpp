// Copyright 2026 The geoadapt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "geoadapt/errors.hpp"

namespace geoadapt {

/// Rows are ground truth, columns predictions.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int classes) : c_(classes), counts_(static_cast<std::size_t>(classes * classes), 0) {
    if (classes < 1) throw MetricError("confusion matrix needs at least one class");
  }
  ConfusionMatrix(int classes, std::vector<std::int64_t> counts) : c_(classes), counts_(std::move(counts)) {
    if (counts_.size() != static_cast<std::size_t>(classes * classes))
      throw DimensionError("confusion matrix needs " + std::to_string(classes * classes) + " counts");
    for (auto v : counts_)
      if (v < 0) throw DataError("confusion counts must be non-negative");
  }

  int classes() const { return c_; }
  std::int64_t at(int truth, int pred) const { return counts_[static_cast<std::size_t>(truth * c_ + pred)]; }
  const std::vector<std::int64_t>& counts() const { return counts_; }

  std::int64_t total() const {
    std::int64_t n = 0;
    for (auto v : counts_) n += v;
    return n;
  }

  void accumulate(std::span<const int> pred, std::span<const int> truth) {
    if (pred.size() != truth.size())
      throw DimensionError("prediction has " + std::to_string(pred.size()) + " pixels, truth " +
                           std::to_string(truth.size()));
    for (std::size_t i = 0; i < pred.size(); ++i) {
      if (pred[i] < 0 || pred[i] >= c_ || truth[i] < 0 || truth[i] >= c_)
        throw DataError("class id outside [0, " + std::to_string(c_) + ") at pixel " + std::to_string(i));
    }
    for (std::size_t i = 0; i < pred.size(); ++i) ++counts_[static_cast<std::size_t>(truth[i] * c_ + pred[i])];
  }

  void merge(const ConfusionMatrix& other) {
    if (other.c_ != c_) throw DimensionError("cannot merge confusion matrices of different class counts");
    for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
  }

  std::int64_t tp(int k) const { return at(k, k); }
  std::int64_t fp(int k) const {
    std::int64_t s = 0;
    for (int t = 0; t < c_; ++t) s += t == k ? 0 : at(t, k);
    return s;
  }
  std::int64_t fn(int k) const {
    std::int64_t s = 0;
    for (int p = 0; p < c_; ++p) s += p == k ? 0 : at(k, p);
    return s;
  }
  // A class counts when it occurs in the truth or the prediction.
  bool present(int k) const { return tp(k) + fp(k) + fn(k) > 0; }

  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

 private:
  int c_;
  std::vector<std::int64_t> counts_;
};

struct ClassScores {
  double iou = 0, precision = 0, recall = 0, f1 = 0;
  bool present = false;
};

/// Per-class scores. A ratio with an empty denominator is 0.
inline ClassScores class_scores(const ConfusionMatrix& cm, int k) {
  ClassScores s;
  const double tp = double(cm.tp(k)), fp = double(cm.fp(k)), fn = double(cm.fn(k));
  s.present = cm.present(k);
  if (!s.present) return s;
  s.iou = tp / (tp + fp + fn);
  s.precision = tp + fp > 0 ? tp / (tp + fp) : 0.0;
  s.recall = tp + fn > 0 ? tp / (tp + fn) : 0.0;
  s.f1 = s.precision + s.recall > 0 ? 2 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
  return s;
}

namespace detail {
template <typename F>
double macro(const ConfusionMatrix& cm, F pick, const char* name) {
  if (cm.total() == 0) throw MetricError(std::string(name) + " of an empty confusion matrix");
  double sum = 0.0;
  int n = 0;
  for (int k = 0; k < cm.classes(); ++k) {
    const auto s = class_scores(cm, k);
    if (!s.present) continue;
    sum += pick(s);
    ++n;
  }
  return sum / n;
}
}  // namespace detail

inline double miou(const ConfusionMatrix& cm) {
  return detail::macro(cm, [](const ClassScores& s) { return s.iou; }, "mIoU");
}
inline double precision(const ConfusionMatrix& cm) {
  return detail::macro(cm, [](const ClassScores& s) { return s.precision; }, "precision");
}
inline double recall(const ConfusionMatrix& cm) {
  return detail::macro(cm, [](const ClassScores& s) { return s.recall; }, "recall");
}
inline double f1(const ConfusionMatrix& cm) {
  return detail::macro(cm, [](const ClassScores& s) { return s.f1; }, "F1");
}

inline double pixel_accuracy(const ConfusionMatrix& cm) {
  if (cm.total() == 0) throw MetricError("accuracy of an empty confusion matrix");
  std::int64_t d = 0;
  for (int k = 0; k < cm.classes(); ++k) d += cm.tp(k);
  return double(d) / double(cm.total());
}

struct Metrics {
  double miou = 0, f1 = 0, precision = 0, recall = 0;
  std::vector<double> class_iou;
};

inline Metrics summarize(const ConfusionMatrix& cm) {
  Metrics m{miou(cm), f1(cm), precision(cm), recall(cm), {}};
  for (int k = 0; k < cm.classes(); ++k) m.class_iou.push_back(class_scores(cm, k).iou);
  return m;
}

}  // namespace geoadapt
