#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "emosphere/data.hpp"
#include "emosphere/losses.hpp"
#include "emosphere/metrics.hpp"
#include "emosphere/model.hpp"

namespace emosphere {

/// Which labels drive the auxiliary classification head.
enum class AuxMode { SphericalRegion, Categorical, None };
enum class WceMode { Weighted, Unweighted };

std::string to_string(AuxMode m);
AuxMode aux_mode_from_string(const std::string& s);
std::string to_string(WceMode m);
WceMode wce_mode_from_string(const std::string& s);

struct TrainConfig {
  int epochs = 20;
  int batch_size = 32;
  double lr = 1e-3;  // 1e-5 with a pre-trained encoder
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  ScheduleConfig schedule;
  AuxMode aux_mode = AuxMode::SphericalRegion;
  WceMode wce_mode = WceMode::Weighted;
  std::uint64_t seed = 0;

  void validate() const;
};

struct TrainState {
  int epoch = 0;
  std::int64_t step = 0;
  double best_val_loss = std::numeric_limits<double>::infinity();
  std::vector<Tensor> moment1;
  std::vector<Tensor> moment2;
  std::mt19937_64 rng;
};

TrainState make_train_state(const Model& model, const TrainConfig& cfg);

/// Decoupled weight decay followed by a bias-corrected Adam update. Throws
/// TrainingError naming the parameter if any gradient is not finite.
void adamw_step(const std::vector<nn::Parameter*>& params, const ParameterGradients& grads,
                TrainState& state, const TrainConfig& cfg);

/// Class targets and weights for the auxiliary head.
struct AuxTask {
  AuxMode mode = AuxMode::SphericalRegion;
  int n_classes = 0;
  std::vector<std::string> class_names;  // Categorical vocabulary only
  ClassWeights weights;

  int target(const Example& ex) const;
};

/// Builds the auxiliary task from the training split: region labels or the
/// sorted category vocabulary, with inverse-frequency or uniform weights.
AuxTask make_aux_task(const std::vector<Example>& train, const RegionPartition& partition,
                      const TrainConfig& cfg);

struct EpochStats {
  int epoch = 0;
  double lambda = 0.0;
  double total_loss = 0.0;
  double ccc_loss = 0.0;
  double aux_loss = 0.0;  // lambda-weighted contribution
  int batches = 0;
  int dropped_samples = 0;
  std::vector<std::string> warnings;
};

/// One pass over `train` in seeded shuffled order (batches are formed
/// within groups of equal frame count). Advances state.epoch.
EpochStats train_epoch(Model& model, const std::vector<Example>& train, const AuxTask& aux,
                       const TrainConfig& cfg, TrainState& state);

struct Predictions {
  Tensor vad;            // [M x 3]
  Tensor region_logits;  // [M x N]
};

Predictions predict(const Model& model, const std::vector<Example>& examples,
                    int batch_size = 64);

struct Evaluation {
  double loss = 0.0;
  double ccc_loss = 0.0;
  double aux_loss = 0.0;
  EvalReport report;
};

/// Dataset-level evaluation: combined loss at `epoch`'s lambda plus metrics.
Evaluation evaluate(const Model& model, const std::vector<Example>& examples, const AuxTask& aux,
                    int epoch, const TrainConfig& cfg);

struct EpochRecord {
  int epoch = 0;
  double lambda = 0.0;
  double train_loss = 0.0;
  double train_ccc_loss = 0.0;
  double train_aux_loss = 0.0;
  double val_loss = 0.0;
  EvalReport val;
  bool saved = false;
};

struct FitOptions {
  std::optional<std::filesystem::path> checkpoint_path;
  std::optional<std::filesystem::path> history_path;
};

struct FitResult {
  std::vector<EpochRecord> history;
  int best_epoch = -1;
  double best_val_loss = std::numeric_limits<double>::infinity();
  Model best_model;
  AuxTask aux;
  std::vector<std::string> warnings;
};

/// Trains for cfg.epochs, keeping the parameters with the strictly lowest
/// validation loss (written to options.checkpoint_path when set).
FitResult fit(Model& model, const std::vector<Example>& train, const std::vector<Example>& val,
              const RegionPartition& partition, const TrainConfig& cfg,
              const FitOptions& options = {});

std::string history_header();
std::string history_line(const EpochRecord& r);
void write_history(const std::filesystem::path& path, const std::vector<EpochRecord>& history);

}  // namespace emosphere
