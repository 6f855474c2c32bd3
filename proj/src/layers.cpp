#include "emosphere/layers.hpp"

#include <algorithm>
#include <cmath>

#include "emosphere/errors.hpp"

namespace emosphere::nn {

namespace {

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

void require_rank3(const Tensor& x, const char* what) {
  if (x.rank() != 3) {
    throw ShapeError(std::string(what) + ": expected [B x T x D] input, got " +
                     shape_string(x.shape()));
  }
}

void require_last_dim(const Tensor& x, std::size_t d, const char* what) {
  if (x.rank() == 0 || x.shape().back() != d) {
    throw ShapeError(std::string(what) + ": expected last dimension " + std::to_string(d) +
                     ", got shape " + shape_string(x.shape()));
  }
}

std::vector<std::size_t> with_last(std::vector<std::size_t> shape, std::size_t last) {
  shape.back() = last;
  return shape;
}

// In-place softmax over a contiguous row.
void softmax_row(double* row, std::size_t n) {
  const double peak = *std::max_element(row, row + n);
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    row[i] = std::exp(row[i] - peak);
    sum += row[i];
  }
  for (std::size_t i = 0; i < n; ++i) row[i] /= sum;
}

}  // namespace

void init_uniform(Parameter& p, std::size_t fan_in, std::mt19937_64& rng) {
  const double bound = std::sqrt(1.0 / static_cast<double>(std::max<std::size_t>(fan_in, 1)));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (double& v : p.value.values()) v = dist(rng);
}

double mish(double x) { return x * std::tanh(softplus(x)); }

double mish_derivative(double x) {
  const double t = std::tanh(softplus(x));
  return t + x * (1.0 - t * t) * sigmoid(x);
}

// ---------------------------------------------------------------- Linear

Linear::Linear(const std::string& name, std::size_t in, std::size_t out)
    : weight(name + ".weight", {out, in}), bias(name + ".bias", {out}), in_(in), out_(out) {}

Tensor Linear::forward(const Tensor& x, Cache* cache) const {
  require_last_dim(x, in_, weight.name.c_str());
  const std::size_t rows = x.size() / in_;
  Tensor y(with_last(x.shape(), out_));
  const double* w = weight.value.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x.data() + r * in_;
    double* yr = y.data() + r * out_;
    for (std::size_t o = 0; o < out_; ++o) {
      const double* wo = w + o * in_;
      double acc = bias.value[o];
      for (std::size_t i = 0; i < in_; ++i) acc += wo[i] * xr[i];
      yr[o] = acc;
    }
  }
  if (cache) cache->input = x;
  return y;
}

Tensor Linear::backward(const Tensor& dy, const Cache& cache) {
  const Tensor& x = cache.input;
  const std::size_t rows = x.size() / in_;
  Tensor dx(x.shape());
  const double* w = weight.value.data();
  double* gw = weight.grad.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x.data() + r * in_;
    const double* dyr = dy.data() + r * out_;
    double* dxr = dx.data() + r * in_;
    for (std::size_t o = 0; o < out_; ++o) {
      const double g = dyr[o];
      if (g == 0.0) continue;
      bias.grad[o] += g;
      const double* wo = w + o * in_;
      double* gwo = gw + o * in_;
      for (std::size_t i = 0; i < in_; ++i) {
        gwo[i] += g * xr[i];
        dxr[i] += g * wo[i];
      }
    }
  }
  return dx;
}

void Linear::init(std::mt19937_64& rng) {
  init_uniform(weight, in_, rng);
  init_uniform(bias, in_, rng);
}

void Linear::collect(ParameterList& out) {
  out.push_back(&weight);
  out.push_back(&bias);
}

// ------------------------------------------------------------- LayerNorm

LayerNorm::LayerNorm(const std::string& name, std::size_t dim)
    : gain(name + ".gain", {dim}), bias(name + ".bias", {dim}), dim_(dim) {
  init();
}

Tensor LayerNorm::forward(const Tensor& x, Cache* cache) const {
  require_last_dim(x, dim_, gain.name.c_str());
  const std::size_t rows = x.size() / dim_;
  Tensor y(x.shape());
  if (cache) {
    cache->normalized = Tensor(x.shape());
    cache->inv_std.assign(rows, 0.0);
  }
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x.data() + r * dim_;
    double mean = 0.0;
    for (std::size_t i = 0; i < dim_; ++i) mean += xr[i];
    mean /= static_cast<double>(dim_);
    double var = 0.0;
    for (std::size_t i = 0; i < dim_; ++i) var += (xr[i] - mean) * (xr[i] - mean);
    var /= static_cast<double>(dim_);
    const double inv_std = 1.0 / std::sqrt(var + kEpsilon);
    double* yr = y.data() + r * dim_;
    for (std::size_t i = 0; i < dim_; ++i) {
      const double xhat = (xr[i] - mean) * inv_std;
      yr[i] = gain.value[i] * xhat + bias.value[i];
      if (cache) cache->normalized[r * dim_ + i] = xhat;
    }
    if (cache) cache->inv_std[r] = inv_std;
  }
  return y;
}

Tensor LayerNorm::backward(const Tensor& dy, const Cache& cache) {
  const std::size_t rows = cache.inv_std.size();
  Tensor dx(dy.shape());
  std::vector<double> dxhat(dim_);
  const double n = static_cast<double>(dim_);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* dyr = dy.data() + r * dim_;
    const double* xh = cache.normalized.data() + r * dim_;
    double sum_d = 0.0;
    double sum_dx = 0.0;
    for (std::size_t i = 0; i < dim_; ++i) {
      gain.grad[i] += dyr[i] * xh[i];
      bias.grad[i] += dyr[i];
      dxhat[i] = dyr[i] * gain.value[i];
      sum_d += dxhat[i];
      sum_dx += dxhat[i] * xh[i];
    }
    double* dxr = dx.data() + r * dim_;
    for (std::size_t i = 0; i < dim_; ++i) {
      dxr[i] = cache.inv_std[r] * (dxhat[i] - sum_d / n - xh[i] * sum_dx / n);
    }
  }
  return dx;
}

void LayerNorm::init() {
  gain.value.fill(1.0);
  bias.value.fill(0.0);
}

void LayerNorm::collect(ParameterList& out) {
  out.push_back(&gain);
  out.push_back(&bias);
}

// --------------------------------------------------------- SpectralStack

SpectralStack::SpectralStack(const std::string& name, std::size_t in, std::size_t hidden)
    : fc1(name + ".fc1", in, hidden), fc2(name + ".fc2", hidden, hidden) {}

Tensor SpectralStack::forward(const Tensor& x, Cache* cache) const {
  Tensor h = fc1.forward(x, cache ? &cache->fc1 : nullptr);
  if (cache) cache->pre1 = h;
  for (double& v : h.values()) v = mish(v);
  Tensor y = fc2.forward(h, cache ? &cache->fc2 : nullptr);
  if (cache) cache->pre2 = y;
  for (double& v : y.values()) v = mish(v);
  return y;
}

Tensor SpectralStack::backward(const Tensor& dy, const Cache& cache) {
  Tensor d2 = dy;
  for (std::size_t i = 0; i < d2.size(); ++i) d2[i] *= mish_derivative(cache.pre2[i]);
  Tensor d1 = fc2.backward(d2, cache.fc2);
  for (std::size_t i = 0; i < d1.size(); ++i) d1[i] *= mish_derivative(cache.pre1[i]);
  return fc1.backward(d1, cache.fc1);
}

void SpectralStack::init(std::mt19937_64& rng) {
  fc1.init(rng);
  fc2.init(rng);
}

void SpectralStack::collect(ParameterList& out) {
  fc1.collect(out);
  fc2.collect(out);
}

// -------------------------------------------------------- GatedConvBlock

GatedConvBlock::GatedConvBlock(const std::string& name, std::size_t hidden, std::size_t kernel)
    : weight(name + ".weight", {2 * hidden, kernel, hidden}),
      bias(name + ".bias", {2 * hidden}),
      hidden_(hidden),
      kernel_(kernel) {}

Tensor GatedConvBlock::forward(const Tensor& x, Cache* cache) const {
  require_rank3(x, weight.name.c_str());
  require_last_dim(x, hidden_, weight.name.c_str());
  const std::size_t batch = x.dim(0);
  const std::size_t frames = x.dim(1);
  const std::size_t h = hidden_;
  const std::size_t channels = 2 * h;
  const auto half = static_cast<long>(kernel_ / 2);

  Tensor pre({batch, frames, channels});
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t t = 0; t < frames; ++t) {
      double* out = &pre.at(b, t, 0);
      for (std::size_t o = 0; o < channels; ++o) out[o] = bias.value[o];
      for (std::size_t j = 0; j < kernel_; ++j) {
        const long src = static_cast<long>(t) + static_cast<long>(j) - half;
        if (src < 0 || src >= static_cast<long>(frames)) continue;
        const double* xs = &x.at(b, static_cast<std::size_t>(src), 0);
        for (std::size_t o = 0; o < channels; ++o) {
          const double* w = weight.value.data() + (o * kernel_ + j) * h;
          double acc = 0.0;
          for (std::size_t i = 0; i < h; ++i) acc += w[i] * xs[i];
          out[o] += acc;
        }
      }
    }
  }

  Tensor y(x.shape());
  for (std::size_t r = 0; r < batch * frames; ++r) {
    const double* p = pre.data() + r * channels;
    const double* xr = x.data() + r * h;
    double* yr = y.data() + r * h;
    for (std::size_t c = 0; c < h; ++c) yr[c] = xr[c] + p[c] * sigmoid(p[h + c]);
  }
  if (cache) {
    cache->input = x;
    cache->pre = std::move(pre);
  }
  return y;
}

Tensor GatedConvBlock::backward(const Tensor& dy, const Cache& cache) {
  const Tensor& x = cache.input;
  const std::size_t batch = x.dim(0);
  const std::size_t frames = x.dim(1);
  const std::size_t h = hidden_;
  const std::size_t channels = 2 * h;
  const auto half = static_cast<long>(kernel_ / 2);

  Tensor dpre({batch, frames, channels});
  for (std::size_t r = 0; r < batch * frames; ++r) {
    const double* p = cache.pre.data() + r * channels;
    const double* g = dy.data() + r * h;
    double* dp = dpre.data() + r * channels;
    for (std::size_t c = 0; c < h; ++c) {
      const double s = sigmoid(p[h + c]);
      dp[c] = g[c] * s;
      dp[h + c] = g[c] * p[c] * s * (1.0 - s);
    }
  }

  Tensor dx = dy;  // residual path
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t t = 0; t < frames; ++t) {
      const double* dp = &dpre.at(b, t, 0);
      for (std::size_t o = 0; o < channels; ++o) bias.grad[o] += dp[o];
      for (std::size_t j = 0; j < kernel_; ++j) {
        const long src = static_cast<long>(t) + static_cast<long>(j) - half;
        if (src < 0 || src >= static_cast<long>(frames)) continue;
        const double* xs = &x.at(b, static_cast<std::size_t>(src), 0);
        double* dxs = &dx.at(b, static_cast<std::size_t>(src), 0);
        for (std::size_t o = 0; o < channels; ++o) {
          const double g = dp[o];
          const std::size_t off = (o * kernel_ + j) * h;
          const double* w = weight.value.data() + off;
          double* gw = weight.grad.data() + off;
          for (std::size_t i = 0; i < h; ++i) {
            gw[i] += g * xs[i];
            dxs[i] += g * w[i];
          }
        }
      }
    }
  }
  return dx;
}

void GatedConvBlock::init(std::mt19937_64& rng) {
  init_uniform(weight, hidden_ * kernel_, rng);
  init_uniform(bias, hidden_ * kernel_, rng);
}

void GatedConvBlock::collect(ParameterList& out) {
  out.push_back(&weight);
  out.push_back(&bias);
}

// ------------------------------------------------ MultiHeadSelfAttention

MultiHeadSelfAttention::MultiHeadSelfAttention(const std::string& name, std::size_t hidden,
                                               std::size_t heads)
    : query(name + ".query", hidden, hidden),
      key(name + ".key", hidden, hidden),
      value(name + ".value", hidden, hidden),
      output(name + ".output", hidden, hidden),
      hidden_(hidden),
      heads_(heads) {
  if (heads == 0 || hidden % heads != 0) {
    throw ConfigError("hidden size " + std::to_string(hidden) +
                      " is not divisible by head count " + std::to_string(heads));
  }
}

Tensor MultiHeadSelfAttention::forward(const Tensor& x, Cache* cache) const {
  require_rank3(x, "attention");
  require_last_dim(x, hidden_, "attention");
  const std::size_t batch = x.dim(0);
  const std::size_t frames = x.dim(1);
  const std::size_t dh = hidden_ / heads_;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  Tensor q = query.forward(x, cache ? &cache->q_in : nullptr);
  Tensor k = key.forward(x, cache ? &cache->k_in : nullptr);
  Tensor v = value.forward(x, cache ? &cache->v_in : nullptr);

  Tensor attn({batch, heads_, frames, frames});
  Tensor context(x.shape());
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t hd = 0; hd < heads_; ++hd) {
      const std::size_t off = hd * dh;
      double* a = attn.data() + (b * heads_ + hd) * frames * frames;
      for (std::size_t i = 0; i < frames; ++i) {
        const double* qi = &q.at(b, i, off);
        double* row = a + i * frames;
        for (std::size_t j = 0; j < frames; ++j) {
          const double* kj = &k.at(b, j, off);
          double s = 0.0;
          for (std::size_t c = 0; c < dh; ++c) s += qi[c] * kj[c];
          row[j] = s * scale;
        }
        softmax_row(row, frames);
        double* ci = &context.at(b, i, off);
        for (std::size_t j = 0; j < frames; ++j) {
          const double* vj = &v.at(b, j, off);
          for (std::size_t c = 0; c < dh; ++c) ci[c] += row[j] * vj[c];
        }
      }
    }
  }

  Tensor y = output.forward(context, cache ? &cache->o_in : nullptr);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += x[i];
  if (cache) {
    cache->q = std::move(q);
    cache->k = std::move(k);
    cache->v = std::move(v);
    cache->attention = std::move(attn);
  }
  return y;
}

Tensor MultiHeadSelfAttention::backward(const Tensor& dy, const Cache& cache) {
  const std::size_t batch = dy.dim(0);
  const std::size_t frames = dy.dim(1);
  const std::size_t dh = hidden_ / heads_;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  const Tensor dcontext = output.backward(dy, cache.o_in);
  Tensor dq(dy.shape());
  Tensor dk(dy.shape());
  Tensor dv(dy.shape());
  std::vector<double> da(frames);

  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t hd = 0; hd < heads_; ++hd) {
      const std::size_t off = hd * dh;
      const double* a = cache.attention.data() + (b * heads_ + hd) * frames * frames;
      for (std::size_t i = 0; i < frames; ++i) {
        const double* row = a + i * frames;
        const double* dci = &dcontext.at(b, i, off);
        // dA_ij = dC_i . V_j, and dV_j += A_ij dC_i
        double dot = 0.0;
        for (std::size_t j = 0; j < frames; ++j) {
          const double* vj = &cache.v.at(b, j, off);
          double* dvj = &dv.at(b, j, off);
          double s = 0.0;
          for (std::size_t c = 0; c < dh; ++c) {
            s += dci[c] * vj[c];
            dvj[c] += row[j] * dci[c];
          }
          da[j] = s;
          dot += s * row[j];
        }
        const double* qi = &cache.q.at(b, i, off);
        double* dqi = &dq.at(b, i, off);
        for (std::size_t j = 0; j < frames; ++j) {
          const double ds = row[j] * (da[j] - dot) * scale;
          if (ds == 0.0) continue;
          const double* kj = &cache.k.at(b, j, off);
          double* dkj = &dk.at(b, j, off);
          for (std::size_t c = 0; c < dh; ++c) {
            dqi[c] += ds * kj[c];
            dkj[c] += ds * qi[c];
          }
        }
      }
    }
  }

  Tensor dx = dy;  // residual path
  const Tensor dxq = query.backward(dq, cache.q_in);
  const Tensor dxk = key.backward(dk, cache.k_in);
  const Tensor dxv = value.backward(dv, cache.v_in);
  for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dxq[i] + dxk[i] + dxv[i];
  return dx;
}

void MultiHeadSelfAttention::init(std::mt19937_64& rng) {
  query.init(rng);
  key.init(rng);
  value.init(rng);
  output.init(rng);
}

void MultiHeadSelfAttention::collect(ParameterList& out) {
  query.collect(out);
  key.collect(out);
  value.collect(out);
  output.collect(out);
}

// ---------------------------------------------------- TemporalAveragePool

Tensor TemporalAveragePool::forward(const Tensor& x, Cache* cache) const {
  require_rank3(x, "temporal average pool");
  const std::size_t batch = x.dim(0);
  const std::size_t frames = x.dim(1);
  const std::size_t h = x.dim(2);
  if (frames == 0) throw ShapeError("temporal average pool needs at least one frame");
  Tensor y({batch, h});
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t t = 0; t < frames; ++t) {
      for (std::size_t c = 0; c < h; ++c) y.at(b, c) += x.at(b, t, c);
    }
    for (std::size_t c = 0; c < h; ++c) y.at(b, c) /= static_cast<double>(frames);
  }
  if (cache) cache->frames = frames;
  return y;
}

Tensor TemporalAveragePool::backward(const Tensor& dy, const Cache& cache) const {
  const std::size_t batch = dy.dim(0);
  const std::size_t h = dy.dim(1);
  const double inv = 1.0 / static_cast<double>(cache.frames);
  Tensor dx({batch, cache.frames, h});
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t t = 0; t < cache.frames; ++t) {
      for (std::size_t c = 0; c < h; ++c) dx.at(b, t, c) = dy.at(b, c) * inv;
    }
  }
  return dx;
}

// ----------------------------------------------------- AttentiveStatsPool

AttentiveStatsPool::AttentiveStatsPool(const std::string& name, std::size_t hidden)
    : score_hidden(name + ".score_hidden", hidden, hidden),
      score_out(name + ".score_out", hidden, 1),
      projection(name + ".projection", 2 * hidden, hidden) {}

Tensor AttentiveStatsPool::forward(const Tensor& x, Cache* cache) const {
  require_rank3(x, "attentive statistics pool");
  const std::size_t batch = x.dim(0);
  const std::size_t frames = x.dim(1);
  const std::size_t h = x.dim(2);
  if (frames == 0) throw ShapeError("attentive statistics pool needs at least one frame");

  Tensor act = score_hidden.forward(x, cache ? &cache->score_in : nullptr);
  for (double& v : act.values()) v = std::tanh(v);
  Tensor scores = score_out.forward(act, cache ? &cache->score_out : nullptr);

  Tensor weights({batch, frames});
  Tensor mean({batch, h});
  Tensor stddev({batch, h});
  Tensor variance({batch, h});
  Tensor stats({batch, 2 * h});
  for (std::size_t b = 0; b < batch; ++b) {
    double* w = &weights.at(b, 0);
    for (std::size_t t = 0; t < frames; ++t) w[t] = scores[b * frames + t];
    softmax_row(w, frames);
    for (std::size_t c = 0; c < h; ++c) {
      double m = 0.0;
      double sq = 0.0;
      for (std::size_t t = 0; t < frames; ++t) {
        const double xv = x.at(b, t, c);
        m += w[t] * xv;
        sq += w[t] * xv * xv;
      }
      const double var = sq - m * m;
      mean.at(b, c) = m;
      variance.at(b, c) = var;
      stddev.at(b, c) = std::sqrt(std::max(var, 0.0) + kVarianceFloor);
      stats.at(b, c) = m;
      stats.at(b, h + c) = stddev.at(b, c);
    }
  }

  Tensor y = projection.forward(stats, cache ? &cache->proj : nullptr);
  if (cache) {
    cache->input = x;
    cache->hidden_act = std::move(act);
    cache->weights = std::move(weights);
    cache->mean = std::move(mean);
    cache->stddev = std::move(stddev);
    cache->variance = std::move(variance);
  }
  return y;
}

Tensor AttentiveStatsPool::backward(const Tensor& dy, const Cache& cache) {
  const Tensor& x = cache.input;
  const std::size_t batch = x.dim(0);
  const std::size_t frames = x.dim(1);
  const std::size_t h = x.dim(2);

  const Tensor dstats = projection.backward(dy, cache.proj);
  Tensor dx(x.shape());
  Tensor dscores({batch, frames, 1});
  std::vector<double> dmean(h);
  std::vector<double> dvar(h);
  std::vector<double> dweight(frames);

  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t c = 0; c < h; ++c) {
      dmean[c] = dstats.at(b, c);
      const double var = cache.variance.at(b, c);
      dvar[c] = var > 0.0 ? dstats.at(b, h + c) / (2.0 * cache.stddev.at(b, c)) : 0.0;
    }
    const double* w = &cache.weights.at(b, 0);
    double dot = 0.0;
    for (std::size_t t = 0; t < frames; ++t) {
      double dw = 0.0;
      for (std::size_t c = 0; c < h; ++c) {
        const double xv = x.at(b, t, c);
        const double m = cache.mean.at(b, c);
        dw += dmean[c] * xv + dvar[c] * (xv * xv - 2.0 * m * xv);
        dx.at(b, t, c) += w[t] * (dmean[c] + 2.0 * dvar[c] * (xv - m));
      }
      dweight[t] = dw;
      dot += dw * w[t];
    }
    for (std::size_t t = 0; t < frames; ++t) {
      dscores[b * frames + t] = w[t] * (dweight[t] - dot);
    }
  }

  Tensor dact = score_out.backward(dscores, cache.score_out);
  for (std::size_t i = 0; i < dact.size(); ++i) {
    const double a = cache.hidden_act[i];
    dact[i] *= 1.0 - a * a;
  }
  const Tensor dx_score = score_hidden.backward(dact, cache.score_in);
  for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dx_score[i];
  return dx;
}

void AttentiveStatsPool::init(std::mt19937_64& rng) {
  score_hidden.init(rng);
  score_out.init(rng);
  projection.init(rng);
}

void AttentiveStatsPool::collect(ParameterList& out) {
  score_hidden.collect(out);
  score_out.collect(out);
  projection.collect(out);
}

}  // namespace emosphere::nn
