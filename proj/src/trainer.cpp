#include "emosphere/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <set>

#include "emosphere/errors.hpp"

namespace emosphere {

std::string to_string(AuxMode m) {
  switch (m) {
    case AuxMode::SphericalRegion: return "spherical";
    case AuxMode::Categorical: return "categorical";
    case AuxMode::None: break;
  }
  return "none";
}

AuxMode aux_mode_from_string(const std::string& s) {
  if (s == "spherical") return AuxMode::SphericalRegion;
  if (s == "categorical") return AuxMode::Categorical;
  if (s == "none") return AuxMode::None;
  throw ConfigError("unknown auxiliary mode '" + s + "' (expected spherical, categorical or none)");
}

std::string to_string(WceMode m) { return m == WceMode::Weighted ? "weighted" : "unweighted"; }

WceMode wce_mode_from_string(const std::string& s) {
  if (s == "weighted") return WceMode::Weighted;
  if (s == "unweighted") return WceMode::Unweighted;
  throw ConfigError("unknown cross-entropy mode '" + s + "' (expected weighted or unweighted)");
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be at least 1");
  if (batch_size < 2) throw ConfigError("batch_size must be at least 2 (batch CCC needs two samples)");
  if (!(lr >= 0.0)) throw ConfigError("learning rate must be non-negative");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight decay must be non-negative");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError("Adam betas must lie in [0, 1)");
  }
  if (!(eps > 0.0)) throw ConfigError("Adam epsilon must be positive");
  if (schedule.cutoff_epoch < 0) throw ConfigError("schedule cutoff epoch must be non-negative");
}

TrainState make_train_state(const Model& model, const TrainConfig& cfg) {
  TrainState s;
  for (const nn::Parameter* p : model.parameters()) {
    s.moment1.push_back(Tensor::zeros_like(p->value));
    s.moment2.push_back(Tensor::zeros_like(p->value));
  }
  s.rng.seed(cfg.seed);
  return s;
}

void adamw_step(const std::vector<nn::Parameter*>& params, const ParameterGradients& grads,
                TrainState& state, const TrainConfig& cfg) {
  if (grads.grads.size() != params.size() || state.moment1.size() != params.size() ||
      state.moment2.size() != params.size()) {
    throw ShapeError("optimizer: " + std::to_string(params.size()) + " parameters, " +
                     std::to_string(grads.grads.size()) + " gradients, " +
                     std::to_string(state.moment1.size()) + " moment slots");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads.grads[i].shape() != params[i]->value.shape()) {
      throw ShapeError("optimizer: gradient for " + params[i]->name + " has shape " +
                       shape_string(grads.grads[i].shape()) + ", parameter has " +
                       shape_string(params[i]->value.shape()));
    }
    if (!grads.grads[i].all_finite()) {
      throw TrainingError("non-finite gradient for parameter " + params[i]->name);
    }
  }

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(cfg.beta1, t);
  const double correction2 = 1.0 - std::pow(cfg.beta2, t);
  const double decay = 1.0 - cfg.lr * cfg.weight_decay;
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& w = params[i]->value;
    const Tensor& g = grads.grads[i];
    Tensor& m = state.moment1[i];
    Tensor& v = state.moment2[i];
    for (std::size_t k = 0; k < w.size(); ++k) {
      w[k] *= decay;
      m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g[k];
      v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g[k] * g[k];
      const double m_hat = m[k] / correction1;
      const double v_hat = v[k] / correction2;
      w[k] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
    }
  }
}

// ------------------------------------------------------------ aux task

int AuxTask::target(const Example& ex) const {
  if (mode != AuxMode::Categorical) return ex.region;
  const auto it = std::lower_bound(class_names.begin(), class_names.end(), ex.category);
  if (it == class_names.end() || *it != ex.category) {
    throw ConfigError("category '" + ex.category + "' of " + ex.id +
                      " is not in the training vocabulary");
  }
  return static_cast<int>(it - class_names.begin());
}

AuxTask make_aux_task(const std::vector<Example>& train, const RegionPartition& partition,
                      const TrainConfig& cfg) {
  AuxTask aux;
  aux.mode = cfg.aux_mode;
  if (cfg.aux_mode == AuxMode::Categorical) {
    std::set<std::string> vocab;
    for (const auto& ex : train) vocab.insert(ex.category);
    aux.class_names.assign(vocab.begin(), vocab.end());
    aux.n_classes = static_cast<int>(aux.class_names.size());
    if (aux.n_classes == 0) throw ConfigError("categorical auxiliary task needs training data");
  } else {
    aux.n_classes = partition.n_regions();
  }

  std::vector<std::int64_t> counts(aux.n_classes, 0);
  for (const auto& ex : train) ++counts[aux.target(ex)];
  aux.weights = cfg.wce_mode == WceMode::Weighted && !train.empty()
                    ? inverse_frequency_weights(counts, aux.n_classes)
                    : uniform_weights(aux.n_classes);
  aux.weights.counts = counts;
  return aux;
}

// ------------------------------------------------------------- batching

namespace {

// Groups indices (in the given order) by frame count, then cuts each group
// into consecutive batches.
std::vector<std::vector<std::size_t>> make_batches(const std::vector<Example>& examples,
                                                   const std::vector<std::size_t>& order,
                                                   std::size_t batch_size) {
  std::vector<std::size_t> lengths;
  std::map<std::size_t, std::vector<std::size_t>> groups;
  for (std::size_t i : order) {
    const std::size_t t = examples[i].features.dim(0);
    if (groups.find(t) == groups.end()) lengths.push_back(t);
    groups[t].push_back(i);
  }
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t t : lengths) {
    const auto& g = groups[t];
    for (std::size_t start = 0; start < g.size(); start += batch_size) {
      const std::size_t end = std::min(g.size(), start + batch_size);
      batches.emplace_back(g.begin() + static_cast<long>(start), g.begin() + static_cast<long>(end));
    }
  }
  return batches;
}

Tensor stack_features(const std::vector<Example>& examples, const std::vector<std::size_t>& idx) {
  const std::size_t frames = examples[idx[0]].features.dim(0);
  const std::size_t dim = examples[idx[0]].features.dim(1);
  Tensor x({idx.size(), frames, dim});
  for (std::size_t b = 0; b < idx.size(); ++b) {
    const Tensor& f = examples[idx[b]].features;
    std::copy(f.data(), f.data() + f.size(), x.data() + b * frames * dim);
  }
  return x;
}

Tensor stack_vad(const std::vector<Example>& examples, const std::vector<std::size_t>& idx) {
  Tensor y({idx.size(), 3});
  for (std::size_t b = 0; b < idx.size(); ++b) {
    const VadPoint& p = examples[idx[b]].vad;
    y.at(b, 0) = p.v;
    y.at(b, 1) = p.a;
    y.at(b, 2) = p.d;
  }
  return y;
}

void check_feature_width(const Model& model, const std::vector<Example>& examples) {
  const auto dim = static_cast<std::size_t>(model.config().feat_dim);
  for (const auto& ex : examples) {
    if (ex.features.rank() != 2 || ex.features.dim(1) != dim || ex.features.dim(0) == 0) {
      throw ShapeError("example " + ex.id + " has features " + shape_string(ex.features.shape()) +
                       ", model expects [T x " + std::to_string(dim) + "]");
    }
  }
}

}  // namespace

EpochStats train_epoch(Model& model, const std::vector<Example>& train, const AuxTask& aux,
                       const TrainConfig& cfg, TrainState& state) {
  if (train.empty()) throw ConfigError("training set is empty");
  check_feature_width(model, train);
  if (aux.mode != AuxMode::None && aux.n_classes != model.config().n_regions) {
    throw ConfigError("auxiliary task has " + std::to_string(aux.n_classes) +
                      " classes but the model head has " +
                      std::to_string(model.config().n_regions));
  }

  EpochStats stats;
  stats.epoch = state.epoch;
  stats.lambda = aux.mode == AuxMode::None ? 0.0 : lambda_schedule(state.epoch, cfg.schedule);

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), state.rng);
  const auto batches = make_batches(train, order, static_cast<std::size_t>(cfg.batch_size));

  const auto params = model.parameters();
  for (const auto& idx : batches) {
    if (idx.size() < 2) {
      stats.dropped_samples += static_cast<int>(idx.size());
      stats.warnings.push_back("dropped a batch of " + std::to_string(idx.size()) +
                               " sample (batch CCC needs two)");
      continue;
    }
    const Tensor x = stack_features(train, idx);
    const Tensor y = stack_vad(train, idx);
    const ModelOutput out = model.forward(x);
    const LossValue reg = ccc_loss(out.vad_pred, y);

    CombinedLoss total;
    if (aux.mode == AuxMode::None) {
      total = combined_loss(reg, nullptr, state.epoch, cfg.schedule);
    } else {
      std::vector<int> targets(idx.size());
      for (std::size_t b = 0; b < idx.size(); ++b) targets[b] = aux.target(train[idx[b]]);
      const LossValue cls = weighted_cross_entropy(out.region_logits, targets, aux.weights);
      total = combined_loss(reg, &cls, state.epoch, cfg.schedule);
    }

    const ParameterGradients grads = model.backward(total.logits_gradient, total.vad_gradient);
    adamw_step(params, grads, state, cfg);

    stats.total_loss += total.value;
    stats.ccc_loss += total.ccc_part;
    stats.aux_loss += total.aux_part;
    ++stats.batches;
  }

  if (stats.batches > 0) {
    stats.total_loss /= stats.batches;
    stats.ccc_loss /= stats.batches;
    stats.aux_loss /= stats.batches;
  }
  ++state.epoch;
  return stats;
}

Predictions predict(const Model& model, const std::vector<Example>& examples, int batch_size) {
  check_feature_width(model, examples);
  const std::size_t m = examples.size();
  const auto n = static_cast<std::size_t>(model.config().n_regions);
  Predictions out{Tensor({m, 3}), Tensor({m, n})};

  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  for (const auto& idx :
       make_batches(examples, order, static_cast<std::size_t>(std::max(batch_size, 1)))) {
    const ModelOutput o = model.infer(stack_features(examples, idx));
    for (std::size_t b = 0; b < idx.size(); ++b) {
      std::copy_n(o.vad_pred.data() + b * 3, 3, out.vad.data() + idx[b] * 3);
      std::copy_n(o.region_logits.data() + b * n, n, out.region_logits.data() + idx[b] * n);
    }
  }
  return out;
}

Evaluation evaluate(const Model& model, const std::vector<Example>& examples, const AuxTask& aux,
                    int epoch, const TrainConfig& cfg) {
  if (examples.size() < 2) throw DomainError("evaluation needs at least two examples");
  const Predictions pred = predict(model, examples);

  std::vector<std::size_t> all(examples.size());
  std::iota(all.begin(), all.end(), 0);
  const Tensor target = stack_vad(examples, all);

  std::vector<int> truth(examples.size());
  std::vector<int> guess(examples.size());
  const std::size_t n = pred.region_logits.dim(1);
  for (std::size_t i = 0; i < examples.size(); ++i) {
    truth[i] = aux.target(examples[i]);
    const double* row = pred.region_logits.data() + i * n;
    guess[i] = static_cast<int>(std::max_element(row, row + n) - row);
  }

  Evaluation ev;
  const LossValue reg = ccc_loss(pred.vad, target);
  CombinedLoss total;
  if (aux.mode == AuxMode::None) {
    total = combined_loss(reg, nullptr, epoch, cfg.schedule);
  } else {
    const LossValue cls = weighted_cross_entropy(pred.region_logits, truth, aux.weights);
    total = combined_loss(reg, &cls, epoch, cfg.schedule);
  }
  ev.loss = total.value;
  ev.ccc_loss = total.ccc_part;
  ev.aux_loss = total.aux_part;
  ev.report = make_report(evaluate_regression(pred.vad, target),
                          evaluate_classification(guess, truth, static_cast<int>(n)));
  return ev;
}

// ------------------------------------------------------------------- fit

FitResult fit(Model& model, const std::vector<Example>& train, const std::vector<Example>& val,
              const RegionPartition& partition, const TrainConfig& cfg,
              const FitOptions& options) {
  cfg.validate();
  if (train.empty()) throw ConfigError("training set is empty");
  if (val.size() < 2) throw ConfigError("validation set needs at least two examples");
  {
    std::set<std::string> train_ids;
    for (const auto& ex : train) train_ids.insert(ex.id);
    for (const auto& ex : val) {
      if (train_ids.count(ex.id)) {
        throw ConfigError("utterance " + ex.id + " appears in both train and validation sets");
      }
    }
  }

  FitResult result{{}, -1, std::numeric_limits<double>::infinity(), model,
                   make_aux_task(train, partition, cfg), {}};
  if (result.aux.n_classes != model.config().n_regions) {
    throw ConfigError("auxiliary task has " + std::to_string(result.aux.n_classes) +
                      " classes but the model head has " +
                      std::to_string(model.config().n_regions));
  }

  TrainState state = make_train_state(model, cfg);
  for (int e = 0; e < cfg.epochs; ++e) {
    EpochStats stats = train_epoch(model, train, result.aux, cfg, state);
    for (auto& w : stats.warnings) result.warnings.push_back(std::move(w));
    const Evaluation ev = evaluate(model, val, result.aux, stats.epoch, cfg);

    EpochRecord rec;
    rec.epoch = stats.epoch;
    rec.lambda = stats.lambda;
    rec.train_loss = stats.total_loss;
    rec.train_ccc_loss = stats.ccc_loss;
    rec.train_aux_loss = stats.aux_loss;
    rec.val_loss = ev.loss;
    rec.val = ev.report;

    if (ev.loss < state.best_val_loss) {
      state.best_val_loss = ev.loss;
      result.best_val_loss = ev.loss;
      result.best_epoch = stats.epoch;
      result.best_model = model;
      rec.saved = true;
      if (options.checkpoint_path) {
        try {
          save_checkpoint(*options.checkpoint_path, model, result.aux.class_names);
        } catch (const IoError& err) {
          throw TrainingError(std::string("checkpoint write failed, halting: ") + err.what());
        }
      }
    }
    result.history.push_back(rec);
    if (options.history_path) write_history(*options.history_path, result.history);
  }
  return result;
}

// --------------------------------------------------------------- history

std::string history_header() {
  return "epoch\ttrain_loss\tval_loss\tlambda\tval_ccc_v\tval_ccc_a\tval_ccc_d\tval_ccc_mean\t"
         "val_macro_f1\tval_accuracy\ttrain_ccc_loss\ttrain_aux_loss\tsaved\n";
}

std::string history_line(const EpochRecord& r) {
  char buf[512];
  std::snprintf(buf, sizeof(buf),
                "%d\t%.17g\t%.17g\t%.17g\t%.17g\t%.17g\t%.17g\t%.17g\t%.17g\t%.17g\t%.17g\t%.17g\t%d\n",
                r.epoch, r.train_loss, r.val_loss, r.lambda, r.val.ccc_v, r.val.ccc_a,
                r.val.ccc_d, r.val.ccc_mean, r.val.macro_f1, r.val.accuracy, r.train_ccc_loss,
                r.train_aux_loss, r.saved ? 1 : 0);
  return buf;
}

void write_history(const std::filesystem::path& path, const std::vector<EpochRecord>& history) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw TrainingError("cannot open history log for writing: " + path.string());
  out << history_header();
  for (const auto& r : history) out << history_line(r);
  if (!out) throw TrainingError("failed writing history log: " + path.string());
}

}  // namespace emosphere
