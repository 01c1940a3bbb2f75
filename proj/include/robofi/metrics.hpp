#pragma once

// Classification metrics with an 8x8 confusion matrix (rows = truth,
// cols = prediction) and macro-averaged precision / recall / F1.

#include <array>
#include <span>
#include <string>
#include <vector>

#include "robofi/core_types.hpp"

namespace robofi::metrics {

using Confusion = std::array<std::array<std::size_t, kNumClasses>, kNumClasses>;

struct ClassScores {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

struct Metrics {
  double accuracy = 0.0;
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_f1 = 0.0;
  Confusion confusion{};
  std::array<ClassScores, kNumClasses> per_class{};

  std::size_t total() const;
  std::size_t truth_count(std::size_t cls) const;
  /// Recall of one class; 0 when it has no true samples.
  double class_accuracy(std::size_t cls) const { return per_class[cls].recall; }
};

/// Throws LengthMismatch when sizes differ or are zero.
Metrics compute_metrics(std::span<const ActivityLabel> preds, std::span<const ActivityLabel> truth);

/// Metrics re-derived from an accumulated confusion matrix (e.g. pooled folds).
Metrics from_confusion(const Confusion& confusion);

struct Summary {
  double mean = 0.0;
  double stddev = 0.0;  // n-1 denominator; 0 for a single value
};

Summary summarize(std::span<const double> values);

std::string confusion_csv(const Confusion& c);

}  // namespace robofi::metrics
