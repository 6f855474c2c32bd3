#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "emosphere/model.hpp"

namespace emosphere {

struct GradCheckOptions {
  double step = 1e-5;
  // Entries sampled per tensor (inputs and each parameter); 0 checks all.
  std::size_t max_entries_per_tensor = 0;
  // Magnitudes below this are compared absolutely rather than relatively.
  double scale_floor = 1e-5;
};

struct GradCheckResult {
  std::string name;
  double max_rel_error = 0.0;
  std::string worst_entry;
  std::size_t checked = 0;
  double tolerance = 0.0;

  bool passed() const noexcept { return max_rel_error < tolerance; }
};

/// |analytic - numeric| / max(|analytic|, |numeric|, floor)
double relative_error(double analytic, double numeric, double floor);

// Per-layer checks use the scalar objective sum(layer(x) * R) for a random
// projection R, so the upstream gradient is R itself.
std::vector<GradCheckResult> check_layers(std::uint64_t seed, const GradCheckOptions& opts,
                                          double tolerance = 1e-4);

/// Composed model under the combined objective (CCC + WCE at lambda = 1)
/// with random inputs and targets.
GradCheckResult check_model(const ModelConfig& cfg, std::size_t batch, std::size_t frames,
                            std::uint64_t seed, const GradCheckOptions& opts,
                            double tolerance = 1e-3);

struct GradSuiteConfig {
  int seeds = 20;
  std::uint64_t first_seed = 1;
  ModelConfig model{8, 16, 2, 5, 8, Pooling::StylePooling, 0};
  std::size_t batch = 4;
  std::size_t frames = 7;
  GradCheckOptions options{1e-5, 24, 1e-5};
  double layer_tolerance = 1e-4;
  double model_tolerance = 1e-3;
};

struct GradSuiteSummary {
  // Worst result per check name across seeds.
  std::vector<GradCheckResult> worst;
  bool ok = true;
};

GradSuiteSummary run_gradient_suite(const GradSuiteConfig& cfg);

}  // namespace emosphere
