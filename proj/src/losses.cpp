#include "emosphere/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "emosphere/errors.hpp"

namespace emosphere {

ClassWeights inverse_frequency_weights(std::span<const std::int64_t> counts, int n) {
  if (n < 1) throw ConfigError("class count must be at least 1");
  if (counts.size() != static_cast<std::size_t>(n)) {
    throw ConfigError("expected " + std::to_string(n) + " class counts, got " +
                      std::to_string(counts.size()));
  }
  if (std::any_of(counts.begin(), counts.end(), [](auto c) { return c < 0; })) {
    throw ConfigError("class counts must be non-negative");
  }
  if (std::all_of(counts.begin(), counts.end(), [](auto c) { return c == 0; })) {
    throw ConfigError("cannot derive inverse-frequency weights: all class counts are zero");
  }

  ClassWeights out;
  out.counts.assign(counts.begin(), counts.end());
  out.w.resize(counts.size());
  for (std::size_t i = 0; i < counts.size(); ++i) {
    out.w[i] = 1.0 / static_cast<double>(std::max<std::int64_t>(counts[i], 1));
  }
  const double mean = std::accumulate(out.w.begin(), out.w.end(), 0.0) / n;
  for (double& w : out.w) w /= mean;
  return out;
}

ClassWeights uniform_weights(int n) {
  if (n < 1) throw ConfigError("class count must be at least 1");
  return {std::vector<double>(n, 1.0), std::vector<std::int64_t>(n, 0)};
}

LossValue weighted_cross_entropy(const Tensor& logits, std::span<const int> targets,
                                 const ClassWeights& weights) {
  if (logits.rank() != 2) {
    throw ShapeError("logits must be [B x N], got " + shape_string(logits.shape()));
  }
  const std::size_t batch = logits.dim(0);
  const std::size_t n = logits.dim(1);
  if (batch < 1) throw DomainError("cross-entropy needs at least one sample");
  if (targets.size() != batch) {
    throw ShapeError("got " + std::to_string(targets.size()) + " targets for " +
                     std::to_string(batch) + " logit rows");
  }
  if (weights.size() != n) {
    throw ShapeError("got " + std::to_string(weights.size()) + " class weights for " +
                     std::to_string(n) + " classes");
  }

  LossValue out{0.0, Tensor({batch, n})};
  const double inv_batch = 1.0 / static_cast<double>(batch);
  std::vector<double> prob(n);
  for (std::size_t b = 0; b < batch; ++b) {
    const int y = targets[b];
    if (y < 0 || static_cast<std::size_t>(y) >= n) {
      throw IndexError("target " + std::to_string(y) + " out of range [0, " +
                       std::to_string(n) + ")");
    }
    const double* row = logits.data() + b * n;
    const double peak = *std::max_element(row, row + n);
    double sum = 0.0;
    for (std::size_t c = 0; c < n; ++c) {
      prob[c] = std::exp(row[c] - peak);
      sum += prob[c];
    }
    const double log_sum = std::log(sum) + peak;
    const double w = weights.w[y];
    out.value += w * (log_sum - row[y]);

    double* grad = out.gradient.data() + b * n;
    for (std::size_t c = 0; c < n; ++c) {
      const double p = prob[c] / sum;
      grad[c] = w * (p - (static_cast<std::size_t>(y) == c ? 1.0 : 0.0)) * inv_batch;
    }
  }
  out.value *= inv_batch;
  return out;
}

namespace {

struct Moments {
  double mean_p = 0.0;
  double mean_t = 0.0;
  double var_p = 0.0;
  double var_t = 0.0;
  double cov = 0.0;
};

template <typename Get>
Moments moments(std::size_t n, Get get) {
  Moments m;
  for (std::size_t i = 0; i < n; ++i) {
    const auto [p, t] = get(i);
    m.mean_p += p;
    m.mean_t += t;
  }
  m.mean_p /= static_cast<double>(n);
  m.mean_t /= static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto [p, t] = get(i);
    const double dp = p - m.mean_p;
    const double dt = t - m.mean_t;
    m.var_p += dp * dp;
    m.var_t += dt * dt;
    m.cov += dp * dt;
  }
  m.var_p /= static_cast<double>(n);
  m.var_t /= static_cast<double>(n);
  m.cov /= static_cast<double>(n);
  return m;
}

double denominator(const Moments& m) {
  const double gap = m.mean_p - m.mean_t;
  return m.var_p + m.var_t + gap * gap + kCccEpsilon;
}

}  // namespace

double ccc(std::span<const double> pred, std::span<const double> target) {
  if (pred.size() != target.size()) {
    throw DomainError("ccc: length mismatch (" + std::to_string(pred.size()) +
                      " vs " + std::to_string(target.size()) + ")");
  }
  if (pred.size() < 2) throw DomainError("ccc needs at least two samples");
  const Moments m = moments(pred.size(), [&](std::size_t i) {
    return std::pair{pred[i], target[i]};
  });
  return 2.0 * m.cov / denominator(m);
}

LossValue ccc_loss(const Tensor& pred, const Tensor& target) {
  if (pred.rank() != 2 || pred.dim(1) != 3 || pred.shape() != target.shape()) {
    throw ShapeError("ccc_loss: prediction " + shape_string(pred.shape()) +
                     " and target " + shape_string(target.shape()) +
                     " must be matching [B x 3]");
  }
  const std::size_t batch = pred.dim(0);
  const std::size_t dims = pred.dim(1);
  if (batch < 2) throw DomainError("ccc_loss needs a batch of at least two samples");

  LossValue out{0.0, Tensor({batch, dims})};
  const double n = static_cast<double>(batch);
  for (std::size_t d = 0; d < dims; ++d) {
    const Moments m = moments(batch, [&](std::size_t b) {
      return std::pair{pred.at(b, d), target.at(b, d)};
    });
    const double den = denominator(m);
    const double num = 2.0 * m.cov;
    out.value += 1.0 - num / den;

    // d(num/den)/dp_b, negated for the loss and averaged over columns.
    const double gap = m.mean_p - m.mean_t;
    for (std::size_t b = 0; b < batch; ++b) {
      const double dnum = 2.0 * (target.at(b, d) - m.mean_t) / n;
      const double dden = 2.0 * (pred.at(b, d) - m.mean_p) / n + 2.0 * gap / n;
      const double dccc = (dnum * den - num * dden) / (den * den);
      out.gradient.at(b, d) = -dccc / static_cast<double>(dims);
    }
  }
  out.value /= static_cast<double>(dims);
  return out;
}

double lambda_schedule(int epoch, const ScheduleConfig& cfg) {
  if (epoch < 0) throw DomainError("epoch must be non-negative (got " + std::to_string(epoch) + ")");
  if (cfg.cutoff_epoch < 0) throw ConfigError("cutoff epoch must be non-negative");
  if (!cfg.enabled) return 1.0;
  if (epoch >= cfg.cutoff_epoch) return 0.0;
  return static_cast<double>(1.0L - cfg.decay_slope * epoch);
}

CombinedLoss combined_loss(const LossValue& ccc_value, const LossValue* aux, int epoch,
                           const ScheduleConfig& cfg) {
  CombinedLoss out;
  out.ccc_part = ccc_value.value;
  out.value = ccc_value.value;
  out.vad_gradient = ccc_value.gradient;
  if (aux == nullptr) return out;

  out.lambda = lambda_schedule(epoch, cfg);
  if (out.lambda == 0.0) return out;

  out.aux_part = out.lambda * aux->value;
  out.value += out.aux_part;
  out.logits_gradient = aux->gradient;
  for (double& g : out.logits_gradient.values()) g *= out.lambda;
  return out;
}

}  // namespace emosphere
