#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <random>

#include "emosphere/errors.hpp"
#include "emosphere/gradcheck.hpp"
#include "emosphere/losses.hpp"
#include "emosphere/model.hpp"
#include "support.hpp"

namespace emosphere {
namespace {

using testing::random_tensor;

ModelConfig small_config(Pooling pooling = Pooling::StylePooling, std::uint64_t seed = 1) {
  return ModelConfig{8, 16, 2, 5, 8, pooling, seed};
}

std::vector<double> flatten_params(const Model& m) {
  std::vector<double> out;
  for (const nn::Parameter* p : m.parameters()) {
    out.insert(out.end(), p->value.values().begin(), p->value.values().end());
  }
  return out;
}

TEST(ModelConfig, Validation) {
  ModelConfig cfg = small_config();
  cfg.hidden_dim = 33;
  EXPECT_THROW(init_model(cfg), ConfigError);
  cfg = small_config();
  cfg.kernel_size = 4;
  EXPECT_THROW(Model{cfg}, ConfigError);
  cfg = small_config();
  cfg.n_regions = 0;
  EXPECT_THROW(Model{cfg}, ConfigError);
}

TEST(Pooling, StringRoundTrip) {
  for (Pooling p : {Pooling::StylePooling, Pooling::AttentiveStats}) {
    EXPECT_EQ(pooling_from_string(to_string(p)), p);
  }
  EXPECT_THROW(pooling_from_string("max"), ConfigError);
}

TEST(InitModel, SameSeedBitIdentical) {
  EXPECT_EQ(flatten_params(init_model(small_config())), flatten_params(init_model(small_config())));
}

TEST(InitModel, DifferentSeedsDiffer) {
  EXPECT_NE(flatten_params(init_model(small_config(Pooling::StylePooling, 1))),
            flatten_params(init_model(small_config(Pooling::StylePooling, 2))));
}

TEST(InitModel, FanInBounds) {
  const Model m = init_model(small_config());
  for (const nn::Parameter* p : m.parameters()) {
    if (p->value.rank() != 2) continue;
    const double bound = std::sqrt(1.0 / static_cast<double>(p->value.dim(1)));
    for (double v : p->value.values()) EXPECT_LE(std::abs(v), bound) << p->name;
  }
}

TEST(InitModel, ParameterListDependsOnPooling) {
  const Model style(small_config(Pooling::StylePooling));
  const Model stats(small_config(Pooling::AttentiveStats));
  EXPECT_LT(style.parameter_count(), stats.parameter_count());
  for (const nn::Parameter* p : style.parameters()) {
    EXPECT_EQ(p->name.find("stats_pool"), std::string::npos);
  }
}

TEST(Forward, OutputShapes) {
  std::mt19937_64 rng(3);
  for (Pooling pooling : {Pooling::StylePooling, Pooling::AttentiveStats}) {
    Model m(small_config(pooling));
    const ModelOutput out = m.forward(random_tensor({3, 5, 8}, rng));
    EXPECT_EQ(out.region_logits.shape(), (std::vector<std::size_t>{3, 8}));
    EXPECT_EQ(out.vad_pred.shape(), (std::vector<std::size_t>{3, 3}));
    EXPECT_EQ(out.pooled.shape(), (std::vector<std::size_t>{3, 16}));
    EXPECT_TRUE(out.region_logits.all_finite());
  }
}

TEST(Forward, ShapeErrorNamesBothShapes) {
  Model m(small_config());
  try {
    m.forward(Tensor({2, 4, 7}));
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2x4x7]"), std::string::npos) << msg;
    EXPECT_NE(msg.find("8"), std::string::npos) << msg;
  }
}

TEST(Forward, BatchOrderEquivariance) {
  std::mt19937_64 rng(4);
  const Model m(small_config(Pooling::AttentiveStats));
  const Tensor x = random_tensor({4, 6, 8}, rng);
  const std::vector<std::size_t> perm{2, 0, 3, 1};
  Tensor xp(x.shape());
  for (std::size_t b = 0; b < 4; ++b) {
    std::copy_n(x.data() + perm[b] * 48, 48, xp.data() + b * 48);
  }
  const ModelOutput a = m.infer(x);
  const ModelOutput c = m.infer(xp);
  for (std::size_t b = 0; b < 4; ++b) {
    for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(c.vad_pred.at(b, j), a.vad_pred.at(perm[b], j));
    for (std::size_t j = 0; j < 8; ++j) {
      EXPECT_EQ(c.region_logits.at(b, j), a.region_logits.at(perm[b], j));
    }
  }
}

TEST(Forward, BatchItemsDoNotInteract) {
  std::mt19937_64 rng(5);
  const Model m(small_config());
  const Tensor x = random_tensor({3, 4, 8}, rng);
  const ModelOutput all = m.infer(x);
  const Tensor single(std::vector<std::size_t>{1, 4, 8},
                      std::vector<double>(x.data() + 32, x.data() + 64));
  const ModelOutput one = m.infer(single);
  for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(one.vad_pred.at(0, j), all.vad_pred.at(1, j));
}

TEST(Forward, InferMatchesForwardAndIsDeterministic) {
  std::mt19937_64 rng(6);
  Model m(small_config());
  const Tensor x = random_tensor({2, 5, 8}, rng);
  const ModelOutput a = m.forward(x);
  const ModelOutput b = m.infer(x);
  EXPECT_EQ(a.vad_pred, b.vad_pred);
  EXPECT_EQ(a.region_logits, b.region_logits);
  EXPECT_EQ(m.infer(x).vad_pred, b.vad_pred);
}

TEST(Backward, BeforeForwardIsStateError) {
  Model m(small_config());
  EXPECT_THROW(m.backward(Tensor({2, 8}), Tensor({2, 3})), StateError);
}

TEST(Backward, ZeroUpstreamGivesZeroGradients) {
  std::mt19937_64 rng(7);
  Model m(small_config(Pooling::AttentiveStats));
  m.forward(random_tensor({2, 5, 8}, rng));
  const ParameterGradients g = m.backward(Tensor({2, 8}), Tensor({2, 3}));
  ASSERT_EQ(g.grads.size(), m.parameters().size());
  for (const Tensor& t : g.grads) {
    for (double v : t.values()) EXPECT_EQ(v, 0.0);
  }
}

TEST(Backward, ShapesMatchParametersAndAreFinite) {
  std::mt19937_64 rng(8);
  Model m(small_config());
  m.forward(random_tensor({3, 6, 8}, rng, -10, 10));
  const ParameterGradients g = m.backward(random_tensor({3, 8}, rng), random_tensor({3, 3}, rng));
  const auto params = m.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    EXPECT_EQ(g.names[i], params[i]->name);
    EXPECT_EQ(g.grads[i].shape(), params[i]->value.shape());
    EXPECT_TRUE(g.grads[i].all_finite()) << params[i]->name;
  }
}

TEST(Backward, EmptyLogitGradientSkipsRegionHead) {
  std::mt19937_64 rng(9);
  Model m(small_config());
  m.forward(random_tensor({2, 4, 8}, rng));
  const ParameterGradients g = m.backward(Tensor(), random_tensor({2, 3}, rng));
  for (std::size_t i = 0; i < g.names.size(); ++i) {
    if (g.names[i].rfind("region_head", 0) == 0) {
      for (double v : g.grads[i].values()) EXPECT_EQ(v, 0.0);
    }
  }
}

TEST(Backward, Deterministic) {
  std::mt19937_64 rng(10);
  const Tensor x = random_tensor({2, 4, 8}, rng);
  const Tensor dl = random_tensor({2, 8}, rng);
  const Tensor dv = random_tensor({2, 3}, rng);
  Model a(small_config());
  Model b(small_config());
  a.forward(x);
  b.forward(x);
  EXPECT_EQ(a.backward(dl, dv).grads, b.backward(dl, dv).grads);
}

// Finite differences of CCC + WCE (lambda = 1) on a sample of entries from
// every parameter, computed here without the library's checker.
TEST(Backward, CombinedLossMatchesFiniteDifferences) {
  for (Pooling pooling : {Pooling::StylePooling, Pooling::AttentiveStats}) {
    std::mt19937_64 rng(11);
    Model m(small_config(pooling, 3));
    const Tensor x = random_tensor({4, 7, 8}, rng);
    const Tensor target = random_tensor({4, 3}, rng);
    const std::vector<int> labels{0, 3, 5, 3};
    const ClassWeights w = inverse_frequency_weights(std::vector<std::int64_t>{5, 1, 2, 7, 3, 9, 1, 1}, 8);
    const auto objective = [&](Model& model) {
      const ModelOutput out = model.infer(x);
      return ccc_loss(out.vad_pred, target).value +
             weighted_cross_entropy(out.region_logits, labels, w).value;
    };

    const ModelOutput out = m.forward(x);
    const LossValue c = ccc_loss(out.vad_pred, target);
    const LossValue s = weighted_cross_entropy(out.region_logits, labels, w);
    const ParameterGradients g = m.backward(s.gradient, c.gradient);

    auto params = m.parameters();
    std::uniform_int_distribution<std::size_t> pick(0, 1u << 30);
    double worst = 0.0;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
      Tensor& v = params[pi]->value;
      for (int k = 0; k < 6; ++k) {
        const std::size_t i = pick(rng) % v.size();
        const double saved = v[i];
        v[i] = saved + 1e-5;
        const double up = objective(m);
        v[i] = saved - 1e-5;
        const double down = objective(m);
        v[i] = saved;
        const double n = (up - down) / 2e-5;
        const double a = g.grads[pi][i];
        worst = std::max(worst, std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-5}));
      }
    }
    EXPECT_LT(worst, 1e-3) << to_string(pooling);
  }
}

TEST(GradCheck, LibraryModelCheckPasses) {
  for (Pooling pooling : {Pooling::StylePooling, Pooling::AttentiveStats}) {
    const GradCheckResult r =
        check_model(small_config(pooling, 0), 4, 7, 5, GradCheckOptions{1e-5, 16, 1e-5});
    EXPECT_TRUE(r.passed()) << r.name << " " << r.max_rel_error << " at " << r.worst_entry;
  }
}

TEST(Model, ZeroGradClearsAccumulators) {
  std::mt19937_64 rng(12);
  Model m(small_config());
  m.forward(random_tensor({2, 3, 8}, rng));
  m.backward(random_tensor({2, 8}, rng), random_tensor({2, 3}, rng));
  m.zero_grad();
  for (const nn::Parameter* p : m.parameters()) {
    for (double v : p->grad.values()) EXPECT_EQ(v, 0.0);
  }
}

TEST(Checkpoint, SaveLoadSaveIsByteIdentical) {
  testing::TempDir dir("ckpt");
  for (Pooling pooling : {Pooling::StylePooling, Pooling::AttentiveStats}) {
    const Model m = init_model(small_config(pooling, 9));
    const std::vector<std::string> names{"angry", "happy", "neutral"};
    save_checkpoint(dir / "a.bin", m, names);
    const Checkpoint ck = load_checkpoint(dir / "a.bin");
    EXPECT_EQ(ck.model.config(), m.config());
    EXPECT_EQ(ck.class_names, names);
    EXPECT_EQ(flatten_params(ck.model), flatten_params(m));
    EXPECT_EQ(serialize_checkpoint(ck.model, ck.class_names), serialize_checkpoint(m, names));
  }
}

TEST(Checkpoint, LayoutHeader) {
  const std::vector<char> bytes = serialize_checkpoint(init_model(small_config()));
  ASSERT_GT(bytes.size(), 12u);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 8), "EMOSPHCK");
  EXPECT_EQ(static_cast<unsigned char>(bytes[8]), 1u);
  EXPECT_EQ(bytes[9], 0);
}

TEST(Checkpoint, CorruptionIsFormatError) {
  const std::vector<char> good = serialize_checkpoint(init_model(small_config()));
  std::vector<char> bad_magic = good;
  bad_magic[0] = 'X';
  EXPECT_THROW(deserialize_checkpoint(bad_magic), FormatError);
  std::vector<char> bad_version = good;
  bad_version[8] = 7;
  EXPECT_THROW(deserialize_checkpoint(bad_version), FormatError);
  EXPECT_THROW(deserialize_checkpoint(std::vector<char>(good.begin(), good.end() - 5)), FormatError);
  std::vector<char> trailing = good;
  trailing.push_back(0);
  EXPECT_THROW(deserialize_checkpoint(trailing), FormatError);
  EXPECT_THROW(deserialize_checkpoint({}), FormatError);
}

TEST(Checkpoint, MissingFileIsIoError) {
  EXPECT_THROW(load_checkpoint("/nonexistent/dir/model.bin"), IoError);
  EXPECT_THROW(save_checkpoint("/nonexistent/dir/model.bin", init_model(small_config())), IoError);
}

}  // namespace
}  // namespace emosphere
