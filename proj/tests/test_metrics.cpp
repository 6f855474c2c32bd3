#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "emosphere/errors.hpp"
#include "emosphere/losses.hpp"
#include "emosphere/metrics.hpp"
#include "json.hpp"
#include "support.hpp"

namespace emosphere {
namespace {

using testing::random_tensor;

TEST(Regression, PerfectPredictions) {
  std::mt19937_64 rng(1);
  const Tensor y = random_tensor({20, 3}, rng);
  const RegressionReport r = evaluate_regression(y, y);
  EXPECT_NEAR(r.ccc_v, 1.0, 1e-6);
  EXPECT_NEAR(r.ccc_a, 1.0, 1e-6);
  EXPECT_NEAR(r.ccc_d, 1.0, 1e-6);
  EXPECT_NEAR(r.ccc_mean, 1.0, 1e-6);
}

TEST(Regression, NegatedDimension) {
  std::mt19937_64 rng(2);
  const Tensor y = random_tensor({30, 3}, rng);
  Tensor p = y;
  double mean = 0.0;
  for (std::size_t b = 0; b < 30; ++b) mean += y.at(b, 1) / 30;
  for (std::size_t b = 0; b < 30; ++b) p.at(b, 1) = 2 * mean - y.at(b, 1);
  const RegressionReport r = evaluate_regression(p, y);
  EXPECT_NEAR(r.ccc_a, -1.0, 1e-6);
  EXPECT_NEAR(r.ccc_mean, 1.0 / 3.0, 1e-6);
}

TEST(Regression, AgreesWithLossModuleCcc) {
  std::mt19937_64 rng(3);
  const Tensor p = random_tensor({50, 3}, rng);
  const Tensor y = random_tensor({50, 3}, rng);
  const RegressionReport r = evaluate_regression(p, y);
  const double dims[3] = {r.ccc_v, r.ccc_a, r.ccc_d};
  for (std::size_t j = 0; j < 3; ++j) {
    std::vector<double> pc, yc;
    for (std::size_t b = 0; b < 50; ++b) {
      pc.push_back(p.at(b, j));
      yc.push_back(y.at(b, j));
    }
    EXPECT_NEAR(dims[j], ccc(pc, yc), 1e-12);
  }
  EXPECT_NEAR(r.ccc_mean, (r.ccc_v + r.ccc_a + r.ccc_d) / 3, 1e-12);
}

TEST(Regression, Errors) {
  EXPECT_THROW(evaluate_regression(Tensor({1, 3}), Tensor({1, 3})), DomainError);
  EXPECT_THROW(evaluate_regression(Tensor({4, 3}), Tensor({5, 3})), ShapeError);
}

TEST(Classification, Perfect) {
  const std::vector<int> y{0, 1, 2, 2, 1};
  const ClassificationReport r = evaluate_classification(y, y, 3);
  EXPECT_EQ(r.macro_f1, 1.0);
  EXPECT_EQ(r.accuracy, 1.0);
}

TEST(Classification, BinaryHandComputed) {
  const std::vector<int> pred{0, 0, 1, 1};
  const std::vector<int> truth{0, 1, 0, 1};
  const ClassificationReport r = evaluate_classification(pred, truth, 2);
  EXPECT_DOUBLE_EQ(r.accuracy, 0.5);
  EXPECT_DOUBLE_EQ(r.macro_f1, 0.5);
  EXPECT_EQ(r.confusion, (std::vector<std::vector<std::int64_t>>{{1, 1}, {1, 1}}));
}

TEST(Classification, SingleClassPredictions) {
  const std::vector<int> pred{0, 0, 0, 0};
  const std::vector<int> truth{0, 0, 1, 1};
  const ClassificationReport r = evaluate_classification(pred, truth, 2);
  EXPECT_DOUBLE_EQ(r.accuracy, 0.5);
  EXPECT_DOUBLE_EQ(r.macro_f1, (2.0 / 3.0 + 0.0) / 2.0);
}

TEST(Classification, AbsentClassesExcluded) {
  const std::vector<int> pred{0, 1, 1};
  const std::vector<int> truth{0, 1, 0};
  const ClassificationReport two = evaluate_classification(pred, truth, 2);
  const ClassificationReport eight = evaluate_classification(pred, truth, 8);
  EXPECT_DOUBLE_EQ(two.macro_f1, eight.macro_f1);
  EXPECT_EQ(eight.confusion.size(), 8u);
}

TEST(Classification, AccuracyIsTraceOverSum) {
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<int> c(0, 5);
  std::vector<int> pred(300), truth(300);
  for (int& x : pred) x = c(rng);
  for (int& x : truth) x = c(rng);
  const ClassificationReport r = evaluate_classification(pred, truth, 6);
  std::int64_t trace = 0, total = 0;
  for (std::size_t i = 0; i < 6; ++i) {
    trace += r.confusion[i][i];
    for (auto v : r.confusion[i]) total += v;
  }
  EXPECT_EQ(total, 300);
  EXPECT_EQ(r.accuracy, static_cast<double>(trace) / static_cast<double>(total));
}

TEST(Classification, PermutationInvariant) {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> c(0, 3);
  std::vector<int> pred(100), truth(100);
  for (int& x : pred) x = c(rng);
  for (int& x : truth) x = c(rng);
  const ClassificationReport a = evaluate_classification(pred, truth, 4);
  std::vector<std::size_t> order(100);
  for (std::size_t i = 0; i < 100; ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<int> p2, t2;
  for (auto i : order) {
    p2.push_back(pred[i]);
    t2.push_back(truth[i]);
  }
  const ClassificationReport b = evaluate_classification(p2, t2, 4);
  EXPECT_NEAR(a.macro_f1, b.macro_f1, 1e-15);
  EXPECT_EQ(a.accuracy, b.accuracy);
  EXPECT_EQ(a.confusion, b.confusion);
}

TEST(Classification, Errors) {
  EXPECT_THROW(evaluate_classification(std::vector<int>{0, 2}, std::vector<int>{0, 1}, 2), IndexError);
  EXPECT_THROW(evaluate_classification(std::vector<int>{0}, std::vector<int>{0, 1}, 2), ShapeError);
}

EvalReport sample_report() {
  RegressionReport reg{0.81234567890123456, 0.7, 0.6, (0.81234567890123456 + 0.7 + 0.6) / 3};
  const std::vector<int> pred{0, 1, 1};
  const std::vector<int> truth{0, 1, 0};
  return make_report(reg, evaluate_classification(pred, truth, 2));
}

TEST(Report, JsonHasDocumentedKeysAndRoundTrips) {
  const EvalReport r = sample_report();
  const auto doc = nlohmann::json::parse(report_to_json(r));
  for (const char* key : {"ccc_v", "ccc_a", "ccc_d", "ccc_mean", "macro_f1", "accuracy", "confusion"}) {
    EXPECT_TRUE(doc.contains(key)) << key;
  }
  EXPECT_EQ(report_from_json(report_to_json(r)), r);
  EXPECT_EQ(report_to_json(r), report_to_json(r));
  EXPECT_THROW(report_from_json("{not json"), FormatError);
}

TEST(Report, TextIsKeyValueLines) {
  const std::string text = report_to_text(sample_report());
  EXPECT_NE(text.find("ccc_mean="), std::string::npos);
  EXPECT_NE(text.find("macro_f1="), std::string::npos);
  EXPECT_NE(text.find("accuracy="), std::string::npos);
  const auto at = text.find("ccc_v=");
  ASSERT_NE(at, std::string::npos);
  EXPECT_EQ(std::stod(text.substr(at + 6)), 0.81234567890123456) << text;
}

TEST(Report, CccTableLayout) {
  const std::string table = format_ccc_table({0.1, 0.2, 0.3, 0.2}, "ours");
  EXPECT_NE(table.find("Valence"), std::string::npos);
  EXPECT_NE(table.find("Arousal"), std::string::npos);
  EXPECT_NE(table.find("Dominance"), std::string::npos);
  EXPECT_NE(table.find("Average"), std::string::npos);
  EXPECT_LT(table.find("Valence"), table.find("Arousal"));
  EXPECT_LT(table.find("Dominance"), table.find("Average"));
  EXPECT_NE(table.find("ours"), std::string::npos);
}

}  // namespace
}  // namespace emosphere
