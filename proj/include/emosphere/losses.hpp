#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "emosphere/tensor.hpp"

namespace emosphere {

/// Per-class weights for the region cross-entropy. Weights are proportional
/// to inverse class frequency and rescaled to mean 1.
struct ClassWeights {
  std::vector<double> w;
  std::vector<std::int64_t> counts;

  std::size_t size() const noexcept { return w.size(); }
};

struct LossValue {
  double value = 0.0;
  Tensor gradient;
};

/// Dynamic weighting of the auxiliary loss. When enabled the weight decays
/// linearly from 1 and is zero from `cutoff_epoch` on; when disabled the
/// weight stays at 1 for every epoch.
struct ScheduleConfig {
  // Extended precision so each weight is rounded to double only once.
  long double decay_slope = 0.99L / 5.0L;
  int cutoff_epoch = 5;
  bool enabled = true;
};

/// Total objective with separate gradients for the two network heads.
struct CombinedLoss {
  double value = 0.0;
  double lambda = 0.0;
  double ccc_part = 0.0;
  double aux_part = 0.0;  // lambda * aux loss, exactly 0 when lambda == 0
  Tensor vad_gradient;
  Tensor logits_gradient;  // empty when no auxiliary loss participates
};

inline constexpr double kCccEpsilon = 1e-8;

ClassWeights inverse_frequency_weights(std::span<const std::int64_t> counts, int n);
ClassWeights uniform_weights(int n);

/// Batch-averaged weighted cross-entropy on raw logits [B x N].
LossValue weighted_cross_entropy(const Tensor& logits, std::span<const int> targets,
                                 const ClassWeights& weights);

/// Concordance correlation coefficient with population statistics.
double ccc(std::span<const double> pred, std::span<const double> target);

/// Mean over columns of (1 - CCC) for [B x 3] predictions, with gradient
/// with respect to `pred`.
LossValue ccc_loss(const Tensor& pred, const Tensor& target);

double lambda_schedule(int epoch, const ScheduleConfig& cfg);

/// L = L_ccc + lambda(epoch) * L_aux. Pass `aux == nullptr` to train on the
/// regression loss alone.
CombinedLoss combined_loss(const LossValue& ccc_value, const LossValue* aux,
                           int epoch, const ScheduleConfig& cfg);

}  // namespace emosphere
