#include "emosphere/metrics.hpp"

#include <cstdio>
#include <sstream>

#include "json.hpp"

#include "emosphere/errors.hpp"
#include "emosphere/losses.hpp"

namespace emosphere {

RegressionReport evaluate_regression(const Tensor& pred, const Tensor& target) {
  if (pred.rank() != 2 || pred.dim(1) != 3 || pred.shape() != target.shape()) {
    throw ShapeError("evaluate_regression: prediction " + shape_string(pred.shape()) +
                     " and target " + shape_string(target.shape()) + " must both be [M x 3]");
  }
  const std::size_t m = pred.dim(0);
  if (m < 2) throw DomainError("evaluate_regression needs at least two samples");

  double out[3];
  std::vector<double> p(m);
  std::vector<double> t(m);
  for (std::size_t d = 0; d < 3; ++d) {
    for (std::size_t i = 0; i < m; ++i) {
      p[i] = pred.at(i, d);
      t[i] = target.at(i, d);
    }
    out[d] = ccc(p, t);
  }
  return {out[0], out[1], out[2], (out[0] + out[1] + out[2]) / 3.0};
}

ClassificationReport evaluate_classification(std::span<const int> pred_labels,
                                             std::span<const int> true_labels, int n_classes) {
  if (n_classes < 1) throw ConfigError("class count must be positive");
  if (pred_labels.size() != true_labels.size()) {
    throw ShapeError("got " + std::to_string(pred_labels.size()) + " predictions for " +
                     std::to_string(true_labels.size()) + " labels");
  }
  const auto check = [n_classes](int label) {
    if (label < 0 || label >= n_classes) {
      throw IndexError("label " + std::to_string(label) + " out of range [0, " +
                       std::to_string(n_classes) + ")");
    }
  };

  ClassificationReport out;
  out.confusion.assign(n_classes, std::vector<std::int64_t>(n_classes, 0));
  for (std::size_t i = 0; i < pred_labels.size(); ++i) {
    check(pred_labels[i]);
    check(true_labels[i]);
    ++out.confusion[true_labels[i]][pred_labels[i]];
  }

  std::int64_t correct = 0;
  double f1_sum = 0.0;
  int present = 0;
  for (int c = 0; c < n_classes; ++c) {
    const std::int64_t tp = out.confusion[c][c];
    std::int64_t support = 0;
    std::int64_t predicted = 0;
    for (int k = 0; k < n_classes; ++k) {
      support += out.confusion[c][k];
      predicted += out.confusion[k][c];
    }
    correct += tp;
    if (support == 0 && predicted == 0) continue;
    ++present;
    // F1 = 2TP / (2TP + FP + FN); zero when there are no true positives.
    const auto denom = static_cast<double>(support + predicted);
    f1_sum += 2.0 * static_cast<double>(tp) / denom;
  }
  const auto total = static_cast<double>(pred_labels.size());
  out.accuracy = total > 0 ? static_cast<double>(correct) / total : 0.0;
  out.macro_f1 = present > 0 ? f1_sum / present : 0.0;
  return out;
}

EvalReport make_report(const RegressionReport& reg, const ClassificationReport& cls) {
  return {reg.ccc_v,        reg.ccc_a,        reg.ccc_d,    reg.ccc_mean,
          cls.macro_f1,     cls.accuracy,     cls.confusion};
}

std::string report_to_text(const EvalReport& r) {
  std::ostringstream os;
  os.precision(17);
  os << "ccc_v=" << r.ccc_v << '\n'
     << "ccc_a=" << r.ccc_a << '\n'
     << "ccc_d=" << r.ccc_d << '\n'
     << "ccc_mean=" << r.ccc_mean << '\n'
     << "macro_f1=" << r.macro_f1 << '\n'
     << "accuracy=" << r.accuracy << '\n';
  return os.str();
}

std::string report_to_json(const EvalReport& r) {
  nlohmann::ordered_json j;
  j["ccc_v"] = r.ccc_v;
  j["ccc_a"] = r.ccc_a;
  j["ccc_d"] = r.ccc_d;
  j["ccc_mean"] = r.ccc_mean;
  j["macro_f1"] = r.macro_f1;
  j["accuracy"] = r.accuracy;
  j["confusion"] = r.confusion;
  return j.dump(2) + "\n";
}

EvalReport report_from_json(const std::string& json) {
  try {
    const auto j = nlohmann::json::parse(json);
    EvalReport r;
    r.ccc_v = j.at("ccc_v").get<double>();
    r.ccc_a = j.at("ccc_a").get<double>();
    r.ccc_d = j.at("ccc_d").get<double>();
    r.ccc_mean = j.at("ccc_mean").get<double>();
    r.macro_f1 = j.at("macro_f1").get<double>();
    r.accuracy = j.at("accuracy").get<double>();
    if (j.contains("confusion")) {
      r.confusion = j.at("confusion").get<std::vector<std::vector<std::int64_t>>>();
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("report JSON: ") + e.what());
  }
}

std::string format_ccc_table(const RegressionReport& r, const std::string& label) {
  char row[160];
  std::snprintf(row, sizeof(row), "%-24s | %8.4f %8.4f %9.4f | %8.4f\n", label.c_str(), r.ccc_v,
                r.ccc_a, r.ccc_d, r.ccc_mean);
  char header[160];
  std::snprintf(header, sizeof(header), "%-24s | %8s %8s %9s | %8s\n", "Method", "Valence",
                "Arousal", "Dominance", "Average");
  return std::string(header) + row;
}

}  // namespace emosphere
