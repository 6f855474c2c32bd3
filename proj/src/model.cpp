#include "emosphere/model.hpp"

#include <fstream>
#include <iterator>
#include <random>

#include "binary_io.hpp"
#include "emosphere/errors.hpp"

namespace emosphere {

std::string to_string(Pooling p) {
  return p == Pooling::StylePooling ? "style" : "attentive_stats";
}

Pooling pooling_from_string(const std::string& s) {
  if (s == "style") return Pooling::StylePooling;
  if (s == "attentive_stats") return Pooling::AttentiveStats;
  throw ConfigError("unknown pooling '" + s + "' (expected style or attentive_stats)");
}

void ModelConfig::validate() const {
  if (feat_dim < 1) throw ConfigError("feat_dim must be positive");
  if (hidden_dim < 1) throw ConfigError("hidden_dim must be positive");
  if (n_heads < 1) throw ConfigError("n_heads must be positive");
  if (hidden_dim % n_heads != 0) {
    throw ConfigError("hidden_dim " + std::to_string(hidden_dim) +
                      " is not divisible by n_heads " + std::to_string(n_heads));
  }
  if (kernel_size < 1 || kernel_size % 2 == 0) {
    throw ConfigError("kernel_size must be a positive odd number (got " +
                      std::to_string(kernel_size) + ")");
  }
  if (n_regions < 1) throw ConfigError("n_regions must be positive");
}

namespace {

const ModelConfig& validated(const ModelConfig& cfg) {
  cfg.validate();
  return cfg;
}

}  // namespace

Model::Model(const ModelConfig& cfg)
    : input_norm("input_norm", validated(cfg).feat_dim),
      spectral("spectral", cfg.feat_dim, cfg.hidden_dim),
      conv1("conv1", cfg.hidden_dim, cfg.kernel_size),
      conv2("conv2", cfg.hidden_dim, cfg.kernel_size),
      attention("attention", cfg.hidden_dim, cfg.n_heads),
      frame_fc("frame_fc", cfg.hidden_dim, cfg.hidden_dim),
      stats_pool("stats_pool", cfg.hidden_dim),
      region_head("region_head", cfg.hidden_dim, cfg.n_regions),
      vad_head("vad_head", cfg.hidden_dim, 3),
      cfg_(cfg) {
  std::mt19937_64 rng(cfg.seed);
  spectral.init(rng);
  conv1.init(rng);
  conv2.init(rng);
  attention.init(rng);
  frame_fc.init(rng);
  if (cfg.pooling == Pooling::AttentiveStats) stats_pool.init(rng);
  region_head.init(rng);
  vad_head.init(rng);
}

Model init_model(const ModelConfig& cfg) { return Model(cfg); }

ModelOutput Model::run(const Tensor& x, Caches* c) const {
  const auto feat = static_cast<std::size_t>(cfg_.feat_dim);
  if (x.rank() != 3 || x.dim(2) != feat || x.dim(0) == 0 || x.dim(1) == 0) {
    throw ShapeError("model input: expected shape [B x T x " + std::to_string(feat) +
                     "] with B, T >= 1, got " + shape_string(x.shape()));
  }
  Tensor h = input_norm.forward(x, c ? &c->norm : nullptr);
  h = spectral.forward(h, c ? &c->spectral : nullptr);
  h = conv1.forward(h, c ? &c->conv1 : nullptr);
  h = conv2.forward(h, c ? &c->conv2 : nullptr);
  h = attention.forward(h, c ? &c->attention : nullptr);
  h = frame_fc.forward(h, c ? &c->frame_fc : nullptr);

  ModelOutput out;
  out.pooled = cfg_.pooling == Pooling::StylePooling
                   ? average_pool.forward(h, c ? &c->average_pool : nullptr)
                   : stats_pool.forward(h, c ? &c->stats_pool : nullptr);
  out.region_logits = region_head.forward(out.pooled, c ? &c->region_head : nullptr);
  out.vad_pred = vad_head.forward(out.pooled, c ? &c->vad_head : nullptr);
  return out;
}

ModelOutput Model::forward(const Tensor& features) {
  has_cache_ = false;
  ModelOutput out = run(features, &caches_);
  has_cache_ = true;
  return out;
}

ModelOutput Model::infer(const Tensor& features) const { return run(features, nullptr); }

ParameterGradients Model::backward(const Tensor& d_logits, const Tensor& d_vad) {
  if (!has_cache_) throw StateError("backward called before forward");
  const std::size_t batch = caches_.vad_head.input.dim(0);
  require_shape(d_vad, {batch, 3}, "VAD gradient");
  zero_grad();

  Tensor dpooled = vad_head.backward(d_vad, caches_.vad_head);
  if (!d_logits.empty()) {
    require_shape(d_logits, {batch, static_cast<std::size_t>(cfg_.n_regions)},
                  "region logit gradient");
    const Tensor from_region = region_head.backward(d_logits, caches_.region_head);
    for (std::size_t i = 0; i < dpooled.size(); ++i) dpooled[i] += from_region[i];
  }

  Tensor dh = cfg_.pooling == Pooling::StylePooling
                  ? average_pool.backward(dpooled, caches_.average_pool)
                  : stats_pool.backward(dpooled, caches_.stats_pool);
  dh = frame_fc.backward(dh, caches_.frame_fc);
  dh = attention.backward(dh, caches_.attention);
  dh = conv2.backward(dh, caches_.conv2);
  dh = conv1.backward(dh, caches_.conv1);
  dh = spectral.backward(dh, caches_.spectral);
  input_norm.backward(dh, caches_.norm);

  ParameterGradients out;
  for (const nn::Parameter* p : std::as_const(*this).parameters()) {
    out.names.push_back(p->name);
    out.grads.push_back(p->grad);
  }
  return out;
}

std::vector<nn::Parameter*> Model::parameters() {
  nn::ParameterList out;
  input_norm.collect(out);
  spectral.collect(out);
  conv1.collect(out);
  conv2.collect(out);
  attention.collect(out);
  frame_fc.collect(out);
  if (cfg_.pooling == Pooling::AttentiveStats) stats_pool.collect(out);
  region_head.collect(out);
  vad_head.collect(out);
  return out;
}

std::vector<const nn::Parameter*> Model::parameters() const {
  const auto mutable_list = const_cast<Model*>(this)->parameters();
  return {mutable_list.begin(), mutable_list.end()};
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const nn::Parameter* p : parameters()) n += p->value.size();
  return n;
}

void Model::zero_grad() {
  for (nn::Parameter* p : parameters()) p->grad.fill(0.0);
}

// ------------------------------------------------------------ checkpoint

std::vector<char> serialize_checkpoint(const Model& model,
                                       const std::vector<std::string>& class_names) {
  detail::ByteWriter w;
  const ModelConfig& cfg = model.config();
  w.bytes(kCheckpointMagic, sizeof(kCheckpointMagic));
  w.u32(kCheckpointVersion);
  w.i32(cfg.feat_dim);
  w.i32(cfg.hidden_dim);
  w.i32(cfg.n_heads);
  w.i32(cfg.kernel_size);
  w.i32(cfg.n_regions);
  w.i32(static_cast<std::int32_t>(cfg.pooling));
  w.u64(cfg.seed);
  w.u32(static_cast<std::uint32_t>(class_names.size()));
  for (const std::string& name : class_names) {
    w.u32(static_cast<std::uint32_t>(name.size()));
    w.bytes(name.data(), name.size());
  }
  const auto params = model.parameters();
  w.u64(params.size());
  for (const nn::Parameter* p : params) {
    w.u32(static_cast<std::uint32_t>(p->value.rank()));
    for (std::size_t d : p->value.shape()) w.u64(d);
    for (double v : p->value.values()) w.f64(v);
  }
  return std::move(w.buffer());
}

Checkpoint deserialize_checkpoint(const std::vector<char>& bytes) {
  detail::ByteReader r(bytes.data(), bytes.size(), "checkpoint");
  char magic[sizeof(kCheckpointMagic)];
  r.bytes(magic, sizeof(magic));
  if (!std::equal(std::begin(magic), std::end(magic), std::begin(kCheckpointMagic))) {
    throw FormatError("checkpoint: bad magic");
  }
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint: unsupported version " + std::to_string(version));
  }
  ModelConfig cfg;
  cfg.feat_dim = r.i32();
  cfg.hidden_dim = r.i32();
  cfg.n_heads = r.i32();
  cfg.kernel_size = r.i32();
  cfg.n_regions = r.i32();
  const std::int32_t pooling = r.i32();
  if (pooling != 0 && pooling != 1) {
    throw FormatError("checkpoint: unknown pooling code " + std::to_string(pooling));
  }
  cfg.pooling = static_cast<Pooling>(pooling);
  cfg.seed = r.u64();

  std::vector<std::string> class_names(r.u32());
  for (std::string& name : class_names) {
    name.resize(r.u32());
    r.bytes(name.data(), name.size());
  }

  Checkpoint ck{Model(cfg), std::move(class_names)};
  auto params = ck.model.parameters();
  const std::uint64_t count = r.u64();
  if (count != params.size()) {
    throw FormatError("checkpoint: expected " + std::to_string(params.size()) +
                      " parameter tensors, found " + std::to_string(count));
  }
  for (nn::Parameter* p : params) {
    std::vector<std::size_t> shape(r.u32());
    for (std::size_t& d : shape) d = r.u64();
    if (shape != p->value.shape()) {
      throw FormatError("checkpoint: parameter " + p->name + " has shape " +
                        shape_string(shape) + ", model expects " +
                        shape_string(p->value.shape()));
    }
    for (double& v : p->value.values()) v = r.f64();
  }
  if (r.remaining() != 0) {
    throw FormatError("checkpoint: " + std::to_string(r.remaining()) + " trailing bytes");
  }
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const Model& model,
                     const std::vector<std::string>& class_names) {
  const std::vector<char> bytes = serialize_checkpoint(model, class_names);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open checkpoint for writing: " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing checkpoint: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

}  // namespace emosphere
