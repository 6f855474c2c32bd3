#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "emosphere/layers.hpp"
#include "emosphere/tensor.hpp"

namespace emosphere {

enum class Pooling { StylePooling, AttentiveStats };

std::string to_string(Pooling p);
Pooling pooling_from_string(const std::string& s);

/// Architecture hyperparameters. Defaults are desk scale; the published
/// configuration is hidden_dim 1024, two heads, kernel 5.
struct ModelConfig {
  int feat_dim = 16;
  int hidden_dim = 32;
  int n_heads = 2;
  int kernel_size = 5;
  int n_regions = 8;
  Pooling pooling = Pooling::StylePooling;
  std::uint64_t seed = 0;

  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

struct ModelOutput {
  Tensor region_logits;  // [B x n_regions]
  Tensor vad_pred;       // [B x 3]
  Tensor pooled;         // [B x hidden_dim]
};

/// Gradients in parameter order, one tensor per parameter.
struct ParameterGradients {
  std::vector<std::string> names;
  std::vector<Tensor> grads;
};

/// Style pooling network with a region-classification head and a VAD
/// regression head:
///
///   LayerNorm -> FC/Mish x2 -> gated conv x2 -> self-attention -> FC
///     -> temporal average pool (or attentive statistics pool)
///     -> {region logits, VAD}
///
/// forward() caches activations for backward(); infer() is const and
/// caches nothing, so a shared model can serve concurrent readers.
class Model {
 public:
  explicit Model(const ModelConfig& cfg);

  const ModelConfig& config() const noexcept { return cfg_; }

  ModelOutput forward(const Tensor& features);
  ModelOutput infer(const Tensor& features) const;

  /// Reverse pass from head gradients. `d_logits` may be empty when the
  /// auxiliary loss does not participate. Throws StateError if forward()
  /// has not been called.
  ParameterGradients backward(const Tensor& d_logits, const Tensor& d_vad);

  std::vector<nn::Parameter*> parameters();
  std::vector<const nn::Parameter*> parameters() const;
  std::size_t parameter_count() const;
  void zero_grad();

  // Sub-layers are public so tests and the gradient checker can reach them.
  nn::LayerNorm input_norm;
  nn::SpectralStack spectral;
  nn::GatedConvBlock conv1;
  nn::GatedConvBlock conv2;
  nn::MultiHeadSelfAttention attention;
  nn::Linear frame_fc;
  nn::TemporalAveragePool average_pool;
  nn::AttentiveStatsPool stats_pool;
  nn::Linear region_head;
  nn::Linear vad_head;

 private:
  struct Caches {
    nn::LayerNorm::Cache norm;
    nn::SpectralStack::Cache spectral;
    nn::GatedConvBlock::Cache conv1;
    nn::GatedConvBlock::Cache conv2;
    nn::MultiHeadSelfAttention::Cache attention;
    nn::Linear::Cache frame_fc;
    nn::TemporalAveragePool::Cache average_pool;
    nn::AttentiveStatsPool::Cache stats_pool;
    nn::Linear::Cache region_head;
    nn::Linear::Cache vad_head;
  };

  ModelOutput run(const Tensor& features, Caches* caches) const;

  ModelConfig cfg_;
  Caches caches_;
  bool has_cache_ = false;
};

/// Same as Model(cfg): seeded fan-in uniform initialization.
Model init_model(const ModelConfig& cfg);

// Checkpoint file layout (all integers and reals little-endian):
//   8 bytes   magic "EMOSPHCK"
//   u32       format version (1)
//   i32 x 6   feat_dim, hidden_dim, n_heads, kernel_size, n_regions, pooling
//   u64       seed
//   u32       number of class names, then per name: u32 length + bytes
//   u64       number of parameter tensors, then per tensor:
//               u32 rank, u64 dims[rank], f64 values (row-major)
// Parameters appear in Model::parameters() order.
inline constexpr char kCheckpointMagic[8] = {'E', 'M', 'O', 'S', 'P', 'H', 'C', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  Model model;
  // Vocabulary of the auxiliary head; empty for spherical-region heads.
  std::vector<std::string> class_names;
};

std::vector<char> serialize_checkpoint(const Model& model,
                                       const std::vector<std::string>& class_names = {});
Checkpoint deserialize_checkpoint(const std::vector<char>& bytes);

void save_checkpoint(const std::filesystem::path& path, const Model& model,
                     const std::vector<std::string>& class_names = {});
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace emosphere
