#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "emosphere/tensor.hpp"

namespace emosphere {

struct RegressionReport {
  double ccc_v = 0.0;
  double ccc_a = 0.0;
  double ccc_d = 0.0;
  double ccc_mean = 0.0;
};

struct ClassificationReport {
  double macro_f1 = 0.0;
  double accuracy = 0.0;
  std::vector<std::vector<std::int64_t>> confusion;  // [true][pred]
};

struct EvalReport {
  double ccc_v = 0.0;
  double ccc_a = 0.0;
  double ccc_d = 0.0;
  double ccc_mean = 0.0;
  double macro_f1 = 0.0;
  double accuracy = 0.0;
  std::vector<std::vector<std::int64_t>> confusion;

  bool operator==(const EvalReport&) const = default;
};

/// Dataset-level CCC per column of [M x 3] predictions, in one pass over
/// the whole set.
RegressionReport evaluate_regression(const Tensor& pred, const Tensor& target);

/// Accuracy and macro F1. Classes absent from both truth and predictions
/// are left out of the macro average.
ClassificationReport evaluate_classification(std::span<const int> pred_labels,
                                             std::span<const int> true_labels, int n_classes);

EvalReport make_report(const RegressionReport& reg, const ClassificationReport& cls);

/// One "key=value" per line.
std::string report_to_text(const EvalReport& r);
/// JSON object with ccc_v, ccc_a, ccc_d, ccc_mean, macro_f1, accuracy and
/// the confusion matrix.
std::string report_to_json(const EvalReport& r);
EvalReport report_from_json(const std::string& json);

/// Valence / Arousal / Dominance / Average table row.
std::string format_ccc_table(const RegressionReport& r, const std::string& label);

}  // namespace emosphere
