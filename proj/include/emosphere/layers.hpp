#pragma once

// Building blocks of the style pooling network. Every layer has a const
// forward pass that optionally records what backward needs into a Cache, and
// a backward pass that accumulates parameter gradients and returns the
// gradient with respect to the layer input. Inputs are [B x T x D] unless
// stated otherwise; frame-wise layers accept any rank and act on the last
// axis.

#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include "emosphere/tensor.hpp"

namespace emosphere::nn {

struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  Parameter() = default;
  Parameter(std::string n, std::vector<std::size_t> shape)
      : name(std::move(n)), value(shape), grad(std::move(shape)) {}
};

using ParameterList = std::vector<Parameter*>;

// Fills with U(-sqrt(1/fan_in), +sqrt(1/fan_in)).
void init_uniform(Parameter& p, std::size_t fan_in, std::mt19937_64& rng);

double mish(double x);
double mish_derivative(double x);

class Linear {
 public:
  struct Cache {
    Tensor input;
  };

  Linear() = default;
  Linear(const std::string& name, std::size_t in, std::size_t out);

  Tensor forward(const Tensor& x, Cache* cache) const;
  Tensor backward(const Tensor& dy, const Cache& cache);
  void init(std::mt19937_64& rng);
  void collect(ParameterList& out);

  std::size_t in_features() const noexcept { return in_; }
  std::size_t out_features() const noexcept { return out_; }

  Parameter weight;  // [out x in]
  Parameter bias;    // [out]

 private:
  std::size_t in_ = 0;
  std::size_t out_ = 0;
};

class LayerNorm {
 public:
  struct Cache {
    Tensor normalized;
    std::vector<double> inv_std;
  };

  static constexpr double kEpsilon = 1e-5;

  LayerNorm() = default;
  LayerNorm(const std::string& name, std::size_t dim);

  Tensor forward(const Tensor& x, Cache* cache) const;
  Tensor backward(const Tensor& dy, const Cache& cache);
  void init();
  void collect(ParameterList& out);

  Parameter gain;
  Parameter bias;

 private:
  std::size_t dim_ = 0;
};

/// Linear -> Mish -> Linear -> Mish, applied frame-wise.
class SpectralStack {
 public:
  struct Cache {
    Linear::Cache fc1;
    Linear::Cache fc2;
    Tensor pre1;
    Tensor pre2;
  };

  SpectralStack() = default;
  SpectralStack(const std::string& name, std::size_t in, std::size_t hidden);

  Tensor forward(const Tensor& x, Cache* cache) const;
  Tensor backward(const Tensor& dy, const Cache& cache);
  void init(std::mt19937_64& rng);
  void collect(ParameterList& out);

  Linear fc1;
  Linear fc2;
};

/// Zero-padded "same" temporal convolution to 2*H channels, GLU gating, and
/// a residual connection around the whole block.
class GatedConvBlock {
 public:
  struct Cache {
    Tensor input;
    Tensor pre;  // [B x T x 2H] convolution output before gating
  };

  GatedConvBlock() = default;
  GatedConvBlock(const std::string& name, std::size_t hidden, std::size_t kernel);

  Tensor forward(const Tensor& x, Cache* cache) const;
  Tensor backward(const Tensor& dy, const Cache& cache);
  void init(std::mt19937_64& rng);
  void collect(ParameterList& out);

  std::size_t hidden() const noexcept { return hidden_; }
  std::size_t kernel() const noexcept { return kernel_; }

  Parameter weight;  // [2H x kernel x H]
  Parameter bias;    // [2H]

 private:
  std::size_t hidden_ = 0;
  std::size_t kernel_ = 0;
};

/// Scaled dot-product self-attention over T with `heads` heads, output
/// projection and residual add.
class MultiHeadSelfAttention {
 public:
  struct Cache {
    Linear::Cache q_in;
    Linear::Cache k_in;
    Linear::Cache v_in;
    Linear::Cache o_in;
    Tensor q;
    Tensor k;
    Tensor v;
    Tensor attention;  // [B x heads x T x T], rows sum to 1
  };

  MultiHeadSelfAttention() = default;
  MultiHeadSelfAttention(const std::string& name, std::size_t hidden, std::size_t heads);

  Tensor forward(const Tensor& x, Cache* cache) const;
  Tensor backward(const Tensor& dy, const Cache& cache);
  void init(std::mt19937_64& rng);
  void collect(ParameterList& out);

  std::size_t heads() const noexcept { return heads_; }

  Linear query;
  Linear key;
  Linear value;
  Linear output;

 private:
  std::size_t hidden_ = 0;
  std::size_t heads_ = 1;
};

/// [B x T x H] -> [B x H] mean over frames.
class TemporalAveragePool {
 public:
  struct Cache {
    std::size_t frames = 0;
  };

  Tensor forward(const Tensor& x, Cache* cache) const;
  Tensor backward(const Tensor& dy, const Cache& cache) const;
};

/// Attention-weighted mean and standard deviation over frames, projected
/// from 2H back to H. Frame scores come from Linear -> tanh -> Linear.
class AttentiveStatsPool {
 public:
  struct Cache {
    Tensor input;
    Linear::Cache score_in;
    Linear::Cache score_out;
    Tensor hidden_act;  // tanh activations [B x T x H]
    Tensor weights;     // softmax over T, [B x T]
    Tensor mean;        // [B x H]
    Tensor stddev;      // [B x H]
    Tensor variance;    // [B x H] before the floor
    Linear::Cache proj;
  };

  static constexpr double kVarianceFloor = 1e-10;

  AttentiveStatsPool() = default;
  AttentiveStatsPool(const std::string& name, std::size_t hidden);

  Tensor forward(const Tensor& x, Cache* cache) const;
  Tensor backward(const Tensor& dy, const Cache& cache);
  void init(std::mt19937_64& rng);
  void collect(ParameterList& out);

  Linear score_hidden;  // H -> H
  Linear score_out;     // H -> 1
  Linear projection;    // 2H -> H
};

}  // namespace emosphere::nn
