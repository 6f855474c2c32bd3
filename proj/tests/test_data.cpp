#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <cstring>
#include <fstream>
#include <map>
#include <random>
#include <set>

#include "emosphere/data.hpp"
#include "emosphere/errors.hpp"
#include "emosphere/losses.hpp"
#include "support.hpp"

namespace emosphere {
namespace {

using testing::TempDir;

void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream(p, std::ios::binary) << text;
}

UtteranceRecord rec(const std::string& id, const std::string& category, double v = 4, double a = 4,
                    double d = 4) {
  UtteranceRecord r;
  r.id = id;
  r.feature_path = id + ".emf";
  r.vad_raw = {v, a, d, VadScale::Raw17};
  r.category = category;
  return r;
}

std::string le_u32(std::uint32_t v) {
  std::string s(4, '\0');
  for (int i = 0; i < 4; ++i) s[static_cast<std::size_t>(i)] = static_cast<char>((v >> (8 * i)) & 0xff);
  return s;
}

std::string le_f32(float f) {
  std::uint32_t bits;
  std::memcpy(&bits, &f, 4);
  return le_u32(bits);
}

TEST(Split, StringRoundTrip) {
  for (Split s : {Split::Train, Split::Val, Split::Test}) EXPECT_EQ(split_from_string(to_string(s)), s);
  EXPECT_THROW(split_from_string("holdout"), FormatError);
}

TEST(Manifest, EmptyTextGivesNoRecords) {
  EXPECT_TRUE(parse_manifest("", "/data").empty());
  EXPECT_TRUE(parse_manifest("# only a comment\n\n", "/data").empty());
}

TEST(Manifest, ThreeLinesPreserveOrder) {
  const std::string text =
      "# id\tpath\tv\ta\td\tcat\n"
      "b\tfeat/b.emf\t1\t2\t3\tangry\n"
      "a\t/abs/a.emf\t7\t7\t7\thappy\n"
      "c\tc.emf\t4.5\t4\t1\tX\n";
  const auto records = parse_manifest(text, "/data");
  ASSERT_EQ(records.size(), 3u);
  EXPECT_EQ(records[0].id, "b");
  EXPECT_EQ(records[1].id, "a");
  EXPECT_EQ(records[2].id, "c");
  EXPECT_EQ(records[0].feature_path, "/data/feat/b.emf");
  EXPECT_EQ(records[1].feature_path, "/abs/a.emf");
  EXPECT_EQ(records[2].vad_raw, (VadPoint{4.5, 4, 1, VadScale::Raw17}));
  EXPECT_EQ(records[2].category, "X");
  EXPECT_EQ(records[0].split, Split::Unassigned);
}

TEST(Manifest, OptionalSplitColumn) {
  const auto records = parse_manifest("a\ta.emf\t1\t1\t1\tx\tval\nb\tb.emf\t1\t1\t1\tx\ttest\n", "/d");
  EXPECT_EQ(records[0].split, Split::Val);
  EXPECT_EQ(records[1].split, Split::Test);
}

TEST(Manifest, OutOfRangeNamesIds) {
  try {
    parse_manifest("ok\tf\t4\t4\t4\tc\nbad1\tf\t8.0\t4\t4\tc\nbad2\tf\t4\t0.5\t4\tc\n", "/d");
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("bad1"), std::string::npos) << msg;
    EXPECT_NE(msg.find("bad2"), std::string::npos) << msg;
    EXPECT_EQ(msg.find("ok"), std::string::npos) << msg;
  }
}

TEST(Manifest, MalformedLinesReportLineNumbers) {
  try {
    parse_manifest("a\tf\t4\t4\t4\tc\nb\tf\t4\t4\n# c\nd\tf\tfour\t4\t4\tc\n", "/d");
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("2"), std::string::npos) << msg;
    EXPECT_NE(msg.find("4"), std::string::npos) << msg;
  }
}

TEST(Manifest, DuplicateIdsRejected) {
  EXPECT_THROW(parse_manifest("a\tf\t4\t4\t4\tc\na\tg\t4\t4\t4\tc\n", "/d"), ValidationError);
}

TEST(Manifest, MissingFileIsIoError) {
  EXPECT_THROW(load_manifest("/nonexistent/manifest.tsv"), IoError);
}

TEST(Manifest, WriteLoadRoundTrip) {
  TempDir dir("manifest");
  std::vector<UtteranceRecord> records{rec("u1", "0", 1.2345678901234567, 6.5, 2),
                                       rec("u2", "X", 7, 1, 4)};
  for (auto& r : records) r.feature_path = (dir.path() / "features" / (r.id + ".emf")).string();
  records[0].split = Split::Train;
  records[1].split = Split::Val;
  write_manifest(dir / "m.tsv", records);
  EXPECT_EQ(load_manifest(dir / "m.tsv"), records);
}

TEST(FilterX, NoXIsIdentity) {
  const std::vector<UtteranceRecord> in{rec("a", "0"), rec("b", "1")};
  const FilterResult f = filter_x_labels(in);
  EXPECT_EQ(f.records, in);
  EXPECT_EQ(f.removed, 0u);
  EXPECT_TRUE(f.warnings.empty());
}

TEST(FilterX, AllXWarns) {
  const FilterResult f = filter_x_labels({rec("a", "X"), rec("b", "X")});
  EXPECT_TRUE(f.records.empty());
  EXPECT_EQ(f.removed, 2u);
  EXPECT_EQ(f.warnings.size(), 1u);
}

TEST(FilterX, MixedKeepsOrder) {
  const FilterResult f =
      filter_x_labels({rec("a", "0"), rec("b", "X"), rec("c", "1"), rec("d", "X"), rec("e", "0")});
  ASSERT_EQ(f.records.size(), 3u);
  EXPECT_EQ(f.records[0].id, "a");
  EXPECT_EQ(f.records[1].id, "c");
  EXPECT_EQ(f.records[2].id, "e");
  EXPECT_EQ(f.removed, 2u);
}

std::vector<UtteranceRecord> categorized(const std::map<std::string, int>& sizes) {
  std::vector<UtteranceRecord> out;
  int k = 0;
  for (const auto& [cat, n] : sizes) {
    for (int i = 0; i < n; ++i) out.push_back(rec("u" + std::to_string(k++), cat));
  }
  return out;
}

TEST(SplitPerCategory, TwoOfFive) {
  const SplitResult s = split_per_category(categorized({{"a", 5}}), 2, 1);
  EXPECT_EQ(s.val.size(), 2u);
  EXPECT_EQ(s.test.size(), 3u);
  EXPECT_TRUE(s.warnings.empty());
  for (const auto& r : s.val) EXPECT_EQ(r.split, Split::Val);
  for (const auto& r : s.test) EXPECT_EQ(r.split, Split::Test);
}

TEST(SplitPerCategory, SameSeedSameSplit) {
  const auto records = categorized({{"a", 40}, {"b", 17}, {"c", 9}});
  const SplitResult s1 = split_per_category(records, 5, 42);
  const SplitResult s2 = split_per_category(records, 5, 42);
  EXPECT_EQ(s1.val, s2.val);
  EXPECT_EQ(s1.test, s2.test);
  const SplitResult s3 = split_per_category(records, 5, 43);
  EXPECT_NE(s1.val, s3.val);
}

TEST(SplitPerCategory, UniformValidationCountsAndDisjoint) {
  const auto records = categorized({{"angry", 900}, {"happy", 1500}, {"sad", 301}, {"neutral", 2000}});
  const SplitResult s = split_per_category(records, 300, 7);
  std::map<std::string, int> per_cat;
  for (const auto& r : s.val) ++per_cat[r.category];
  for (const auto& [cat, n] : per_cat) EXPECT_EQ(n, 300) << cat;
  EXPECT_EQ(per_cat.size(), 4u);
  std::set<std::string> ids;
  for (const auto& r : s.val) ids.insert(r.id);
  for (const auto& r : s.test) EXPECT_FALSE(ids.count(r.id)) << r.id;
  EXPECT_EQ(s.val.size() + s.test.size(), records.size());
}

TEST(SplitPerCategory, UndersizedCategoryGoesToValidationWithWarning) {
  const SplitResult s = split_per_category(categorized({{"big", 10}, {"tiny", 2}}), 3, 0);
  int tiny_val = 0;
  for (const auto& r : s.val) tiny_val += r.category == "tiny";
  EXPECT_EQ(tiny_val, 2);
  ASSERT_EQ(s.warnings.size(), 1u);
  EXPECT_NE(s.warnings[0].find("tiny"), std::string::npos);
}

TEST(SplitPerCategory, PerClassMustBePositive) {
  EXPECT_THROW(split_per_category({}, 0, 0), ConfigError);
}

TEST(SplitPipeline, DeterministicUnderSeed) {
  std::vector<UtteranceRecord> records = categorized({{"a", 30}, {"b", 20}, {"X", 10}});
  const auto run = [&] {
    const FilterResult f = filter_x_labels(records);
    const SplitResult s = split_per_category(f.records, 4, 99);
    return std::make_pair(s.val, compute_region_counts(s.test, make_partition(60)));
  };
  EXPECT_EQ(run(), run());
}

TEST(RegionCounts, SingleCornerRecord) {
  const auto counts = compute_region_counts({rec("a", "c", 7, 7, 7)}, make_partition(90));
  ASSERT_EQ(counts.size(), 8u);
  int nonzero = 0;
  for (auto c : counts) nonzero += c != 0;
  EXPECT_EQ(nonzero, 1);
  EXPECT_EQ(counts[0], 1);  // azimuth 45, elevation 54.7
}

TEST(RegionCounts, MatchBruteForceBinning) {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(1, 7);
  std::vector<UtteranceRecord> records;
  for (int i = 0; i < 10000; ++i) records.push_back(rec("u" + std::to_string(i), "c", u(rng), u(rng), u(rng)));
  for (double angle : {90.0, 60.0, 45.0}) {
    const RegionPartition p = make_partition(angle);
    std::vector<std::int64_t> expected(static_cast<std::size_t>(p.n_regions()), 0);
    for (const auto& r : records) {
      ++expected[static_cast<std::size_t>(
          testing::brute_force_region(r.vad_raw.v, r.vad_raw.a, r.vad_raw.d, p.n_phi(), p.n_theta()))];
    }
    EXPECT_EQ(compute_region_counts(records, p), expected);
  }
}

TEST(MakeDataset, CountsSumToRecords) {
  std::mt19937_64 rng(32);
  std::uniform_real_distribution<double> u(1, 7);
  std::vector<UtteranceRecord> records;
  for (int i = 0; i < 257; ++i) records.push_back(rec("u" + std::to_string(i), "c", u(rng), u(rng), u(rng)));
  const Dataset d = make_dataset(records, make_partition(45));
  std::int64_t total = 0;
  for (auto c : d.region_counts) total += c;
  EXPECT_EQ(total, 257);
  EXPECT_EQ(d.partition, make_partition(45));
}

TEST(Features, HandWrittenFileReadsInRowOrder) {
  TempDir dir("feat");
  std::string bytes = "EMOFEAT1" + le_u32(2) + le_u32(3);
  for (float f : {1.f, 2.f, 3.f, 4.f, 5.f, 6.5f}) bytes += le_f32(f);
  write_file(dir / "x.emf", bytes);
  const Tensor t = read_features(dir / "x.emf");
  EXPECT_EQ(t.shape(), (std::vector<std::size_t>{2, 3}));
  EXPECT_EQ(t.at(0, 2), 3.0);
  EXPECT_EQ(t.at(1, 0), 4.0);
  EXPECT_EQ(t.at(1, 2), 6.5);
}

TEST(Features, RoundTripIsBitExact) {
  TempDir dir("feat");
  std::mt19937_64 rng(33);
  Tensor t = testing::random_tensor({5, 4}, rng);
  for (double& v : t.values()) v = static_cast<double>(static_cast<float>(v));
  write_features(dir / "r.emf", t);
  EXPECT_EQ(read_features(dir / "r.emf"), t);
}

TEST(Features, DimensionMismatchNamesFile) {
  TempDir dir("feat");
  write_features(dir / "w.emf", Tensor({2, 3}, 1.0));
  UtteranceRecord r = rec("w", "c");
  r.feature_path = (dir / "w.emf").string();
  EXPECT_EQ(load_features(r, 3).shape(), (std::vector<std::size_t>{2, 3}));
  try {
    load_features(r, 4);
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("w.emf"), std::string::npos) << e.what();
  }
}

TEST(Features, MalformedFiles) {
  TempDir dir("feat");
  std::string truncated = "EMOFEAT1" + le_u32(2) + le_u32(3);
  for (int i = 0; i < 5; ++i) truncated += le_f32(1.f);
  write_file(dir / "t.emf", truncated);
  EXPECT_THROW(read_features(dir / "t.emf"), FormatError);
  write_file(dir / "m.emf", "EMOFEAT2" + le_u32(1) + le_u32(1) + le_f32(1.f));
  EXPECT_THROW(read_features(dir / "m.emf"), FormatError);
  write_file(dir / "z.emf", "EMOFEAT1" + le_u32(0) + le_u32(3));
  EXPECT_THROW(read_features(dir / "z.emf"), FormatError);
  write_file(dir / "e.emf", "EMO");
  EXPECT_THROW(read_features(dir / "e.emf"), FormatError);
  write_file(dir / "x.emf", "EMOFEAT1" + le_u32(1) + le_u32(1) + le_f32(1.f) + "junk");
  EXPECT_THROW(read_features(dir / "x.emf"), FormatError);
  EXPECT_THROW(read_features(dir / "missing.emf"), IoError);
}

SyntheticConfig synth_config(double noise, std::uint64_t seed = 0) {
  SyntheticConfig cfg;
  cfg.n = 200;
  cfg.noise = noise;
  cfg.seed = seed;
  return cfg;
}

// Mean feature per example as rows of an M x D matrix, with normalized
// labels as M x 3.
std::pair<Eigen::MatrixXd, Eigen::MatrixXd> mean_features(const std::vector<Example>& examples) {
  const auto m = static_cast<Eigen::Index>(examples.size());
  const auto d = static_cast<Eigen::Index>(examples[0].features.dim(1));
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(m, d);
  Eigen::MatrixXd y(m, 3);
  for (Eigen::Index i = 0; i < m; ++i) {
    const Tensor& f = examples[static_cast<std::size_t>(i)].features;
    for (std::size_t t = 0; t < f.dim(0); ++t) {
      for (Eigen::Index c = 0; c < d; ++c) x(i, c) += f.at(t, static_cast<std::size_t>(c));
    }
    x.row(i) /= static_cast<double>(f.dim(0));
    const VadPoint& v = examples[static_cast<std::size_t>(i)].vad;
    y.row(i) << v.v, v.a, v.d;
  }
  return {x, y};
}

TEST(Synthetic, NoiselessGeneratorRecoveredByLeastSquares) {
  const SyntheticDataset syn = generate_synthetic(synth_config(0.0));
  const auto [x, y] = mean_features(syn.examples);
  // Features = [vad, 1] * [M^T; offset^T]
  Eigen::MatrixXd design(y.rows(), 4);
  design << y, Eigen::VectorXd::Ones(y.rows());
  const Eigen::MatrixXd coef = design.colPivHouseholderQr().solve(x);
  const double residual = (design * coef - x).cwiseAbs().maxCoeff();
  EXPECT_LT(residual, 1e-9);
  for (std::size_t c = 0; c < 16; ++c) {
    for (std::size_t j = 0; j < 3; ++j) {
      EXPECT_NEAR(coef(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(c)),
                  syn.embedding.at(c, j), 1e-6);
    }
    EXPECT_NEAR(coef(3, static_cast<Eigen::Index>(c)), syn.offset[c], 1e-6);
  }
}

double ls_ccc_mean(const std::vector<Example>& train, const std::vector<Example>& val) {
  const auto [xt, yt] = mean_features(train);
  const auto [xv, yv] = mean_features(val);
  Eigen::MatrixXd dt(xt.rows(), xt.cols() + 1);
  dt << xt, Eigen::VectorXd::Ones(xt.rows());
  Eigen::MatrixXd dv(xv.rows(), xv.cols() + 1);
  dv << xv, Eigen::VectorXd::Ones(xv.rows());
  const Eigen::MatrixXd w = dt.colPivHouseholderQr().solve(yt);
  const Eigen::MatrixXd pred = dv * w;
  double total = 0.0;
  for (Eigen::Index j = 0; j < 3; ++j) {
    std::vector<double> p(pred.col(j).data(), pred.col(j).data() + pred.rows());
    std::vector<double> t(yv.col(j).data(), yv.col(j).data() + yv.rows());
    total += ccc(p, t);
  }
  return total / 3.0;
}

TEST(Synthetic, LeastSquaresSolvesTask) {
  for (double noise : {0.0, 0.05}) {
    SyntheticConfig cfg = synth_config(noise);
    cfg.n = 512;
    const SyntheticDataset syn = generate_synthetic(cfg);
    std::vector<Example> train, val;
    for (std::size_t i = 0; i < syn.examples.size(); ++i) {
      (syn.dataset.records[i].split == Split::Val ? val : train).push_back(syn.examples[i]);
    }
    EXPECT_GT(ls_ccc_mean(train, val), 0.99) << "noise " << noise;
  }
}

TEST(Synthetic, SameSeedSameDataset) {
  const SyntheticDataset a = generate_synthetic(synth_config(0.05, 4));
  const SyntheticDataset b = generate_synthetic(synth_config(0.05, 4));
  EXPECT_EQ(a.dataset.records, b.dataset.records);
  ASSERT_EQ(a.examples.size(), b.examples.size());
  for (std::size_t i = 0; i < a.examples.size(); ++i) EXPECT_EQ(a.examples[i].features, b.examples[i].features);
  const SyntheticDataset c = generate_synthetic(synth_config(0.05, 5));
  EXPECT_NE(a.dataset.records, c.dataset.records);
}

TEST(Synthetic, LabelsValidAndCategoriesAreRegions) {
  const SyntheticDataset syn = generate_synthetic(synth_config(0.05, 6));
  const RegionPartition p = make_partition(90);
  std::size_t n_val = 0;
  for (std::size_t i = 0; i < syn.examples.size(); ++i) {
    const UtteranceRecord& r = syn.dataset.records[i];
    EXPECT_NO_THROW(normalize_vad(r.vad_raw));
    EXPECT_EQ(r.category, std::to_string(region_of_raw(p, r.vad_raw).index));
    EXPECT_EQ(syn.examples[i].region, region_of_raw(p, r.vad_raw).index);
    n_val += r.split == Split::Val;
  }
  EXPECT_EQ(n_val, 40u);
}

TEST(Synthetic, WrittenDatasetLoadsBack) {
  TempDir dir("synth");
  SyntheticConfig cfg = synth_config(0.05, 7);
  cfg.n = 30;
  const SyntheticDataset syn = synthesize_dataset(cfg, dir.path());
  const auto records = load_manifest(dir / "manifest.tsv");
  ASSERT_EQ(records.size(), 30u);
  EXPECT_EQ(records[0].id, "utt00000");
  const auto examples = load_examples(records, make_partition(90), 16);
  for (std::size_t i = 0; i < examples.size(); ++i) {
    EXPECT_EQ(examples[i].region, syn.examples[i].region);
    EXPECT_EQ(examples[i].features.shape(), syn.examples[i].features.shape());
    for (std::size_t k = 0; k < examples[i].features.size(); ++k) {
      EXPECT_EQ(examples[i].features[k], static_cast<double>(static_cast<float>(syn.examples[i].features[k])));
    }
  }
}

TEST(Synthetic, BadConfig) {
  SyntheticConfig cfg;
  cfg.n = 0;
  EXPECT_THROW(generate_synthetic(cfg), ConfigError);
  cfg = SyntheticConfig{};
  cfg.noise = -1;
  EXPECT_THROW(generate_synthetic(cfg), ConfigError);
}

}  // namespace
}  // namespace emosphere
