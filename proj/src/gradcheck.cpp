#include "emosphere/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <random>

#include "emosphere/losses.hpp"

namespace emosphere {

double relative_error(double analytic, double numeric, double floor) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / scale;
}

namespace {

Tensor random_tensor(std::vector<std::size_t> shape, std::mt19937_64& rng, double lo = -1.0,
                     double hi = 1.0) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> dist(lo, hi);
  for (double& v : t.values()) v = dist(rng);
  return t;
}

std::vector<std::size_t> pick_entries(std::size_t n, std::size_t limit, std::mt19937_64& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  if (limit == 0 || limit >= n) return idx;
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(limit);
  std::sort(idx.begin(), idx.end());
  return idx;
}

double central_difference(double& slot, double h, const std::function<double()>& f) {
  const double saved = slot;
  slot = saved + h;
  const double up = f();
  slot = saved - h;
  const double down = f();
  slot = saved;
  return (up - down) / (2.0 * h);
}

// Compares `analytic` against central differences of `objective` for the
// sampled entries of `target`.
void compare(GradCheckResult& res, const std::string& label, Tensor& target,
             const Tensor& analytic, const std::function<double()>& objective,
             const GradCheckOptions& opts, std::mt19937_64& rng) {
  for (std::size_t i : pick_entries(target.size(), opts.max_entries_per_tensor, rng)) {
    const double numeric = central_difference(target[i], opts.step, objective);
    const double err = relative_error(analytic[i], numeric, opts.scale_floor);
    ++res.checked;
    if (res.worst_entry.empty() || err > res.max_rel_error) {
      res.max_rel_error = err;
      res.worst_entry = label + "[" + std::to_string(i) + "]";
    }
  }
}

template <typename Layer>
GradCheckResult check_layer(const std::string& name, Layer& layer, Tensor x,
                            std::mt19937_64& rng, const GradCheckOptions& opts,
                            double tolerance) {
  GradCheckResult res;
  res.name = name;
  res.tolerance = tolerance;

  nn::ParameterList params;
  if constexpr (requires { layer.collect(params); }) layer.collect(params);
  for (nn::Parameter* p : params) p->grad.fill(0.0);

  typename Layer::Cache cache;
  const Tensor y = layer.forward(x, &cache);
  const Tensor projection = random_tensor(y.shape(), rng);
  const Tensor dx = layer.backward(projection, cache);

  const auto objective = [&]() {
    const Tensor out = layer.forward(x, nullptr);
    double s = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) s += out[i] * projection[i];
    return s;
  };
  compare(res, "input", x, dx, objective, opts, rng);
  for (nn::Parameter* p : params) compare(res, p->name, p->value, p->grad, objective, opts, rng);
  return res;
}

}  // namespace

std::vector<GradCheckResult> check_layers(std::uint64_t seed, const GradCheckOptions& opts,
                                          double tolerance) {
  std::mt19937_64 rng(seed);
  constexpr std::size_t kBatch = 2;
  constexpr std::size_t kFrames = 5;
  constexpr std::size_t kHidden = 8;
  std::vector<GradCheckResult> out;

  {
    nn::LayerNorm norm("layer_norm", kHidden);
    norm.gain.value = random_tensor({kHidden}, rng, 0.5, 1.5);
    norm.bias.value = random_tensor({kHidden}, rng);
    out.push_back(check_layer("layer_norm", norm, random_tensor({kBatch, kFrames, kHidden}, rng, -2, 2),
                              rng, opts, tolerance));
  }
  {
    nn::SpectralStack stack("spectral", 6, kHidden);
    stack.init(rng);
    out.push_back(check_layer("spectral_fc", stack, random_tensor({kBatch, kFrames, 6}, rng, -2, 2),
                              rng, opts, tolerance));
  }
  {
    nn::GatedConvBlock conv("gated_conv", kHidden, 5);
    conv.init(rng);
    out.push_back(check_layer("gated_conv", conv, random_tensor({kBatch, kFrames, kHidden}, rng),
                              rng, opts, tolerance));
  }
  {
    nn::MultiHeadSelfAttention mhsa("mhsa", kHidden, 2);
    mhsa.init(rng);
    out.push_back(check_layer("mhsa", mhsa, random_tensor({kBatch, kFrames, kHidden}, rng), rng,
                              opts, tolerance));
  }
  {
    nn::TemporalAveragePool pool;
    out.push_back(check_layer("temporal_average_pool", pool,
                              random_tensor({kBatch, kFrames, kHidden}, rng), rng, opts, tolerance));
  }
  {
    nn::AttentiveStatsPool pool("attentive_stats", kHidden);
    pool.init(rng);
    out.push_back(check_layer("attentive_stats_pool", pool,
                              random_tensor({kBatch, kFrames, kHidden}, rng), rng, opts, tolerance));
  }
  {
    nn::Linear linear("linear", kHidden, 3);
    linear.init(rng);
    out.push_back(check_layer("linear", linear, random_tensor({kBatch, kHidden}, rng), rng, opts,
                              tolerance));
  }
  return out;
}

GradCheckResult check_model(const ModelConfig& cfg, std::size_t batch, std::size_t frames,
                            std::uint64_t seed, const GradCheckOptions& opts, double tolerance) {
  ModelConfig model_cfg = cfg;
  model_cfg.seed = seed;
  Model model(model_cfg);
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);

  const Tensor x = random_tensor({batch, frames, static_cast<std::size_t>(cfg.feat_dim)}, rng, -2, 2);
  const Tensor y = random_tensor({batch, 3}, rng);
  std::vector<int> targets(batch);
  std::uniform_int_distribution<int> label(0, cfg.n_regions - 1);
  for (int& t : targets) t = label(rng);
  std::vector<double> w(cfg.n_regions);
  for (double& v : w) v = std::uniform_real_distribution<double>(0.5, 1.5)(rng);
  const ClassWeights weights{w, std::vector<std::int64_t>(cfg.n_regions, 0)};
  const ScheduleConfig schedule;

  const auto total = [&](const ModelOutput& out) {
    const LossValue reg = ccc_loss(out.vad_pred, y);
    const LossValue cls = weighted_cross_entropy(out.region_logits, targets, weights);
    return combined_loss(reg, &cls, 0, schedule);
  };

  const CombinedLoss loss = total(model.forward(x));
  const ParameterGradients grads = model.backward(loss.logits_gradient, loss.vad_gradient);

  GradCheckResult res;
  res.name = std::string("model_") + to_string(cfg.pooling);
  res.tolerance = tolerance;
  const auto objective = [&]() { return total(model.infer(x)).value; };
  const auto params = model.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    compare(res, params[i]->name, params[i]->value, grads.grads[i], objective, opts, rng);
  }
  return res;
}

GradSuiteSummary run_gradient_suite(const GradSuiteConfig& cfg) {
  std::map<std::string, GradCheckResult> worst;
  std::vector<std::string> order;
  const auto record = [&](const GradCheckResult& r) {
    auto it = worst.find(r.name);
    if (it == worst.end()) {
      order.push_back(r.name);
      worst.emplace(r.name, r);
      return;
    }
    it->second.checked += r.checked;
    if (r.max_rel_error > it->second.max_rel_error) {
      it->second.max_rel_error = r.max_rel_error;
      it->second.worst_entry = r.worst_entry;
    }
  };

  for (int s = 0; s < cfg.seeds; ++s) {
    const std::uint64_t seed = cfg.first_seed + static_cast<std::uint64_t>(s);
    for (const auto& r : check_layers(seed, cfg.options, cfg.layer_tolerance)) record(r);
    for (Pooling pooling : {Pooling::StylePooling, Pooling::AttentiveStats}) {
      ModelConfig mc = cfg.model;
      mc.pooling = pooling;
      record(check_model(mc, cfg.batch, cfg.frames, seed, cfg.options, cfg.model_tolerance));
    }
  }

  GradSuiteSummary out;
  for (const auto& name : order) {
    out.worst.push_back(worst.at(name));
    out.ok = out.ok && out.worst.back().passed();
  }
  return out;
}

}  // namespace emosphere
