#include "robofi/metrics.hpp"

#include <cmath>
#include <sstream>

namespace robofi::metrics {

std::size_t Metrics::total() const {
  std::size_t n = 0;
  for (const auto& row : confusion)
    for (std::size_t v : row) n += v;
  return n;
}

std::size_t Metrics::truth_count(std::size_t cls) const {
  std::size_t n = 0;
  for (std::size_t v : confusion[cls]) n += v;
  return n;
}

Metrics from_confusion(const Confusion& confusion) {
  Metrics m;
  m.confusion = confusion;
  std::size_t trace = 0;
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    const std::size_t tp = confusion[c][c];
    std::size_t predicted = 0;
    std::size_t actual = 0;
    for (std::size_t k = 0; k < kNumClasses; ++k) {
      predicted += confusion[k][c];
      actual += confusion[c][k];
    }
    trace += tp;
    ClassScores& s = m.per_class[c];
    s.precision = predicted == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(predicted);
    s.recall = actual == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(actual);
    s.f1 = s.precision + s.recall == 0.0 ? 0.0 : 2.0 * s.precision * s.recall / (s.precision + s.recall);
    m.macro_precision += s.precision;
    m.macro_recall += s.recall;
    m.macro_f1 += s.f1;
  }
  m.macro_precision /= kNumClasses;
  m.macro_recall /= kNumClasses;
  m.macro_f1 /= kNumClasses;
  const std::size_t total = m.total();
  m.accuracy = total == 0 ? 0.0 : static_cast<double>(trace) / static_cast<double>(total);
  return m;
}

Metrics compute_metrics(std::span<const ActivityLabel> preds, std::span<const ActivityLabel> truth) {
  if (preds.size() != truth.size() || preds.empty()) {
    throw Error(ErrorCode::LengthMismatch, std::to_string(preds.size()) + " predictions for " +
                                               std::to_string(truth.size()) + " labels");
  }
  Confusion c{};
  for (std::size_t i = 0; i < preds.size(); ++i) ++c[label_index(truth[i])][label_index(preds[i])];
  return from_confusion(c);
}

Summary summarize(std::span<const double> values) {
  Summary s;
  if (values.empty()) return s;
  for (double v : values) s.mean += v;
  s.mean /= static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.stddev = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return s;
}

std::string confusion_csv(const Confusion& c) {
  std::ostringstream out;
  out << "true\\pred";
  for (auto l : kAllLabels) out << ',' << label_name(l);
  out << '\n';
  for (std::size_t r = 0; r < kNumClasses; ++r) {
    out << label_name(kAllLabels[r]);
    for (std::size_t k = 0; k < kNumClasses; ++k) out << ',' << c[r][k];
    out << '\n';
  }
  return out.str();
}

}  // namespace robofi::metrics
