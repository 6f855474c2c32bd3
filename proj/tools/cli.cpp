#include "cli.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <algorithm>

#include "CLI11.hpp"
#include "json.hpp"
#include "emosphere/data.hpp"
#include "emosphere/errors.hpp"
#include "emosphere/geometry.hpp"
#include "emosphere/gradcheck.hpp"
#include "emosphere/losses.hpp"
#include "emosphere/metrics.hpp"
#include "emosphere/model.hpp"
#include "emosphere/trainer.hpp"

namespace emosphere::cli {

namespace fs = std::filesystem;

namespace {

struct TransformArgs {
  std::vector<double> vad;
  double angle = 90.0;
};

struct PartitionArgs {
  std::string manifest;
  double angle = 90.0;
  bool keep_x = false;
};

struct SynthArgs {
  std::string out_dir;
  SyntheticConfig cfg;
};

struct SplitArgs {
  std::string manifest;
  std::string out;
  int per_class = 300;
  std::uint64_t seed = 0;
};

struct TrainArgs {
  std::string manifest;
  std::string val_manifest;
  std::string checkpoint;
  std::string history;
  std::string report;
  double angle = 90.0;
  bool keep_x = false;
  bool no_dynamic_weighting = false;
  std::string aux = "spherical";
  std::string wce = "weighted";
  std::string pooling = "style";
  ModelConfig model;
  TrainConfig train;
};

struct EvalArgs {
  std::string checkpoint;
  std::string manifest;
  std::string out;
  std::string split = "val,test";
  double angle = 90.0;
  bool keep_x = false;
};

struct GradcheckArgs {
  int seeds = 20;
  std::uint64_t first_seed = 1;
  std::size_t entries = 24;
};

std::string fmt(double v, int precision = 6) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(precision) << v;
  return os.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open for writing: " + path.string());
  f << text;
  if (!f) throw IoError("failed writing: " + path.string());
}

std::vector<UtteranceRecord> preprocess(const std::vector<UtteranceRecord>& records, bool keep_x,
                                        std::ostream& err) {
  if (keep_x) return records;
  FilterResult f = filter_x_labels(records);
  if (f.removed > 0) err << "note: removed " << f.removed << " X-labelled records\n";
  for (const auto& w : f.warnings) err << "warning: " << w << '\n';
  return std::move(f.records);
}

// ------------------------------------------------------------ transform

int cmd_transform(const TransformArgs& a, std::ostream& out) {
  if (a.vad.size() != 3) throw DomainError("--vad needs exactly three comma-separated values");
  const VadPoint raw{a.vad[0], a.vad[1], a.vad[2], VadScale::Raw17};
  const RegionPartition part = make_partition(a.angle);
  const VadPoint unit = normalize_vad(raw);
  const SphericalPoint s = to_spherical(unit);
  const RegionLabel label = assign_region(part, s);

  out << "raw:        v=" << fmt(raw.v) << " a=" << fmt(raw.a) << " d=" << fmt(raw.d) << '\n';
  out << "normalized: v=" << fmt(unit.v) << " a=" << fmt(unit.a) << " d=" << fmt(unit.d) << '\n';
  out << "spherical:  r=" << fmt(s.r) << " azimuth=" << fmt(s.azimuth_deg)
      << " elevation=" << fmt(s.elevation_deg);
  if (s.r < kDegenerateRadius) out << " (degenerate origin: angles set to 0)";
  out << '\n';
  out << "region:     " << label.index << " of N=" << part.n_regions() << " (n_phi=" << part.n_phi()
      << ", n_theta=" << part.n_theta() << ", angle=" << a.angle << ")\n";
  return kExitOk;
}

// ------------------------------------------------------ partition-stats

int cmd_partition_stats(const PartitionArgs& a, std::ostream& out, std::ostream& err) {
  const RegionPartition part = make_partition(a.angle);
  const auto records = preprocess(load_manifest(a.manifest), a.keep_x, err);
  const auto counts = compute_region_counts(records, part);
  const std::int64_t total = static_cast<std::int64_t>(records.size());

  ClassWeights weights;
  if (total == 0) {
    err << "warning: manifest has no usable records; weights are reported as 0\n";
    weights.w.assign(part.n_regions(), 0.0);
  } else {
    weights = inverse_frequency_weights(counts, part.n_regions());
  }

  out << "partition: angle=" << a.angle << " n_phi=" << part.n_phi() << " n_theta=" << part.n_theta()
      << " N=" << part.n_regions() << '\n';
  out << "region\tazimuth_deg\televation_deg\tcount\tpercent\tweight\n";
  for (int i = 0; i < part.n_regions(); ++i) {
    const int a_idx = i / part.n_theta();
    const int e_idx = i % part.n_theta();
    const double pct = total > 0 ? 100.0 * static_cast<double>(counts[i]) / total : 0.0;
    out << i << '\t' << fmt(a_idx * part.azimuth_width(), 1) << '-'
        << fmt((a_idx + 1) * part.azimuth_width(), 1) << '\t'
        << fmt(e_idx * part.elevation_width(), 1) << '-'
        << fmt((e_idx + 1) * part.elevation_width(), 1) << '\t' << counts[i] << '\t' << fmt(pct, 2)
        << '\t' << fmt(weights.w[i]) << '\n';
  }
  out << "total\t\t\t" << total << '\t' << fmt(total > 0 ? 100.0 : 0.0, 2) << '\t' << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------- synth

int cmd_synth(const SynthArgs& a, std::ostream& out) {
  const SyntheticDataset syn = synthesize_dataset(a.cfg, a.out_dir);
  std::size_t n_val = 0;
  for (const auto& r : syn.dataset.records) n_val += r.split == Split::Val;
  out << "wrote " << syn.dataset.records.size() << " utterances (" << n_val << " val) to "
      << (fs::path(a.out_dir) / "manifest.tsv").string() << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------- split

int cmd_split(const SplitArgs& a, std::ostream& out, std::ostream& err) {
  const auto records = preprocess(load_manifest(a.manifest), false, err);
  std::vector<UtteranceRecord> keep;
  std::vector<UtteranceRecord> pool;
  const bool has_val = std::any_of(records.begin(), records.end(),
                                   [](const auto& r) { return r.split == Split::Val; });
  for (const auto& r : records) {
    const bool candidate = has_val ? r.split == Split::Val : r.split == Split::Unassigned;
    (candidate ? pool : keep).push_back(r);
  }
  const SplitResult s = split_per_category(pool, a.per_class, a.seed);
  for (const auto& w : s.warnings) err << "warning: " << w << '\n';

  std::vector<UtteranceRecord> all = keep;
  all.insert(all.end(), s.val.begin(), s.val.end());
  all.insert(all.end(), s.test.begin(), s.test.end());
  write_manifest(a.out, all);
  out << "split " << pool.size() << " candidates: " << s.val.size() << " val, " << s.test.size()
      << " test; " << keep.size() << " other records kept\n";
  return kExitOk;
}

// ---------------------------------------------------------------- train

int cmd_train(TrainArgs a, std::ostream& out, std::ostream& err) {
  const RegionPartition part = make_partition(a.angle);
  a.train.aux_mode = aux_mode_from_string(a.aux);
  a.train.wce_mode = wce_mode_from_string(a.wce);
  a.train.schedule.enabled = !a.no_dynamic_weighting;
  a.model.pooling = pooling_from_string(a.pooling);
  a.train.validate();

  const auto records = preprocess(load_manifest(a.manifest), a.keep_x, err);
  std::vector<UtteranceRecord> train_records;
  std::vector<UtteranceRecord> val_records;
  if (!a.val_manifest.empty()) {
    train_records = records;
    val_records = preprocess(load_manifest(a.val_manifest), a.keep_x, err);
  } else {
    for (const auto& r : records) {
      if (r.split == Split::Train) train_records.push_back(r);
      if (r.split == Split::Val) val_records.push_back(r);
    }
  }
  if (train_records.empty() || val_records.size() < 2) {
    throw ValidationError("need training records and at least two validation records (got " +
                          std::to_string(train_records.size()) + " train, " +
                          std::to_string(val_records.size()) + " val)");
  }

  const auto feat_dim = static_cast<std::size_t>(a.model.feat_dim);
  const auto train = load_examples(train_records, part, feat_dim);
  const auto val = load_examples(val_records, part, feat_dim);

  a.model.n_regions = make_aux_task(train, part, a.train).n_classes;
  Model model(a.model);
  FitOptions opts;
  if (!a.checkpoint.empty()) opts.checkpoint_path = a.checkpoint;
  if (!a.history.empty()) opts.history_path = a.history;
  const FitResult res = fit(model, train, val, part, a.train, opts);
  for (const auto& w : res.warnings) err << "warning: " << w << '\n';

  out << history_header();
  for (const auto& r : res.history) out << history_line(r);
  const EpochRecord& best = res.history.at(static_cast<std::size_t>(res.best_epoch));
  out << "best epoch " << best.epoch << " (val loss " << fmt(best.val_loss) << ")\n";
  out << format_ccc_table({best.val.ccc_v, best.val.ccc_a, best.val.ccc_d, best.val.ccc_mean},
                          "validation (best)");
  out << "region macro F1 " << fmt(best.val.macro_f1, 4) << ", accuracy "
      << fmt(best.val.accuracy, 4) << '\n';
  if (!a.report.empty()) write_text(a.report, report_to_json(best.val));
  return kExitOk;
}

// ----------------------------------------------------------------- eval

int cmd_eval(const EvalArgs& a, std::ostream& out, std::ostream& err) {
  const Checkpoint ck = load_checkpoint(a.checkpoint);
  const RegionPartition part = make_partition(a.angle);
  const bool categorical = !ck.class_names.empty();
  if (!categorical && ck.model.config().n_regions != part.n_regions()) {
    throw ConfigError("checkpoint has N=" + std::to_string(ck.model.config().n_regions) +
                      " regions but --angle " + fmt(a.angle, 1) + " gives N=" +
                      std::to_string(part.n_regions()));
  }

  const auto records = preprocess(load_manifest(a.manifest), a.keep_x, err);
  std::vector<std::string> wanted;
  {
    std::stringstream ss(a.split);
    for (std::string item; std::getline(ss, item, ',');) wanted.push_back(item);
  }

  AuxTask aux;
  aux.mode = categorical ? AuxMode::Categorical : AuxMode::SphericalRegion;
  aux.class_names = ck.class_names;
  aux.n_classes = ck.model.config().n_regions;
  aux.weights = uniform_weights(aux.n_classes);
  TrainConfig cfg;

  nlohmann::ordered_json doc;
  std::string text;
  int evaluated = 0;
  for (const std::string& name : wanted) {
    std::vector<UtteranceRecord> subset;
    for (const auto& r : records) {
      if (name == "all" || to_string(r.split) == name) subset.push_back(r);
    }
    if (subset.empty()) {
      err << "note: no records in split '" << name << "'\n";
      continue;
    }
    const auto examples =
        load_examples(subset, part, static_cast<std::size_t>(ck.model.config().feat_dim));
    // Evaluation reports the regression loss alone (lambda = 0 past cutoff).
    const Evaluation ev = evaluate(ck.model, examples, aux, cfg.schedule.cutoff_epoch, cfg);
    ++evaluated;

    out << "[" << name << "] n=" << examples.size() << '\n';
    out << format_ccc_table({ev.report.ccc_v, ev.report.ccc_a, ev.report.ccc_d, ev.report.ccc_mean},
                            name);
    out << "region macro F1 " << fmt(ev.report.macro_f1, 4) << ", accuracy "
        << fmt(ev.report.accuracy, 4) << '\n';
    doc[name] = nlohmann::ordered_json::parse(report_to_json(ev.report));
    text += "[" + name + "]\n" + report_to_text(ev.report);
  }
  if (evaluated == 0) throw ValidationError("no records matched --split " + a.split);
  if (!a.out.empty()) {
    write_text(a.out + ".json", doc.dump(2) + "\n");
    write_text(a.out + ".txt", text);
  }
  return kExitOk;
}

// ------------------------------------------------------------ gradcheck

int cmd_gradcheck(const GradcheckArgs& a, const ModelConfig& model, std::ostream& out) {
  GradSuiteConfig cfg;
  cfg.seeds = a.seeds;
  cfg.first_seed = a.first_seed;
  cfg.options.max_entries_per_tensor = a.entries;
  cfg.model = model;
  const GradSuiteSummary s = run_gradient_suite(cfg);
  double worst = 0.0;
  for (const auto& r : s.worst) {
    char line[256];
    std::snprintf(line, sizeof(line), "%-24s max_rel_err=%.3e tol=%.0e checked=%zu worst=%s %s\n",
                  r.name.c_str(), r.max_rel_error, r.tolerance, r.checked, r.worst_entry.c_str(),
                  r.passed() ? "PASS" : "FAIL");
    out << line;
    worst = std::max(worst, r.max_rel_error);
  }
  out << "max relative error " << std::scientific << std::setprecision(3) << worst
      << std::defaultfloat << " over " << a.seeds << " seeds: " << (s.ok ? "PASS" : "FAIL") << '\n';
  return s.ok ? kExitOk : kExitCheckFailed;
}

void add_model_options(CLI::App* sub, ModelConfig& m) {
  sub->add_option("--feat-dim", m.feat_dim, "Input feature width")->capture_default_str();
  sub->add_option("--hidden", m.hidden_dim, "Hidden width")->capture_default_str();
  sub->add_option("--heads", m.n_heads, "Attention heads")->capture_default_str();
  sub->add_option("--kernel", m.kernel_size, "Temporal convolution kernel size")
      ->capture_default_str();
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Spherical emotion-space tools: geometry, partitions, training, evaluation"};
  app.set_config("--config", "", "Key-value config file; flags override its values");
  app.require_subcommand(1);

  TransformArgs transform;
  auto* t = app.add_subcommand("transform", "Normalize a raw VAD triple and locate its region");
  t->add_option("--vad", transform.vad, "Raw valence,arousal,dominance on [1,7]")
      ->required()
      ->delimiter(',')
      ->expected(3);
  t->add_option("--angle", transform.angle, "Angular cell size in degrees")->capture_default_str();

  PartitionArgs partition;
  auto* p = app.add_subcommand("partition-stats", "Region occupancy and inverse-frequency weights");
  p->add_option("--manifest", partition.manifest, "Utterance manifest")->required();
  p->add_option("--angle", partition.angle, "Angular cell size in degrees")->capture_default_str();
  p->add_flag("--keep-x", partition.keep_x, "Keep X-labelled records");

  SynthArgs synth;
  auto* sy = app.add_subcommand("synth", "Write a synthetic manifest and feature files");
  sy->add_option("--out", synth.out_dir, "Output directory")->required();
  sy->add_option("--n", synth.cfg.n, "Number of utterances")->capture_default_str();
  sy->add_option("--feat-dim", synth.cfg.feat_dim, "Feature width")->capture_default_str();
  sy->add_option("--frames", synth.cfg.frames, "Frames per utterance")->capture_default_str();
  sy->add_option("--noise", synth.cfg.noise, "Per-frame Gaussian noise scale")->capture_default_str();
  sy->add_option("--seed", synth.cfg.seed, "Random seed")->capture_default_str();
  sy->add_option("--val-fraction", synth.cfg.val_fraction, "Fraction marked as validation")
      ->capture_default_str();
  sy->add_option("--angle", synth.cfg.angle_deg, "Angle used for category labels")
      ->capture_default_str();

  SplitArgs split;
  auto* sp = app.add_subcommand("split", "Drop X labels and sample a per-category validation set");
  sp->add_option("--manifest", split.manifest, "Input manifest")->required();
  sp->add_option("--out", split.out, "Output manifest")->required();
  sp->add_option("--per-class", split.per_class, "Validation records per category")
      ->capture_default_str();
  sp->add_option("--seed", split.seed, "Random seed")->capture_default_str();

  TrainArgs train;
  auto* tr = app.add_subcommand("train", "Train the model and keep the best validation checkpoint");
  tr->add_option("--manifest", train.manifest, "Training manifest (train/val split column)")
      ->required();
  tr->add_option("--val-manifest", train.val_manifest, "Separate validation manifest");
  tr->add_option("--checkpoint", train.checkpoint, "Where to save the best checkpoint");
  tr->add_option("--history", train.history, "Where to write the per-epoch history log");
  tr->add_option("--report", train.report, "Where to write the best validation report (JSON)");
  tr->add_option("--angle", train.angle, "Angular cell size in degrees")->capture_default_str();
  tr->add_flag("--keep-x", train.keep_x, "Keep X-labelled records");
  tr->add_option("--aux", train.aux, "Auxiliary task: spherical, categorical or none")
      ->capture_default_str();
  tr->add_option("--wce", train.wce, "Cross-entropy weighting: weighted or unweighted")
      ->capture_default_str();
  tr->add_flag("--no-dynamic-weighting", train.no_dynamic_weighting,
               "Hold the auxiliary weight at 1 for every epoch");
  tr->add_option("--pooling", train.pooling, "Pooling: style or attentive_stats")
      ->capture_default_str();
  add_model_options(tr, train.model);
  tr->add_option("--epochs", train.train.epochs, "Epochs")->capture_default_str();
  tr->add_option("--batch-size", train.train.batch_size, "Batch size")->capture_default_str();
  tr->add_option("--lr", train.train.lr, "Learning rate")->capture_default_str();
  tr->add_option("--weight-decay", train.train.weight_decay, "Decoupled weight decay")
      ->capture_default_str();
  tr->add_option("--seed", train.train.seed, "Seed for initialization and shuffling")
      ->capture_default_str();

  EvalArgs eval;
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on manifest splits");
  ev->add_option("--checkpoint", eval.checkpoint, "Checkpoint file")->required();
  ev->add_option("--manifest", eval.manifest, "Manifest")->required();
  ev->add_option("--out", eval.out, "Report path prefix (writes .json and .txt)");
  ev->add_option("--split", eval.split, "Comma-separated splits (val, test, train, all)")
      ->capture_default_str();
  ev->add_option("--angle", eval.angle, "Angular cell size in degrees")->capture_default_str();
  ev->add_flag("--keep-x", eval.keep_x, "Keep X-labelled records");

  GradcheckArgs grad;
  ModelConfig grad_model{8, 16, 2, 5, 8, Pooling::StylePooling, 0};
  auto* gc = app.add_subcommand("gradcheck", "Finite-difference check of every layer and the model");
  gc->add_option("--seeds", grad.seeds, "Number of seeds")->capture_default_str();
  gc->add_option("--first-seed", grad.first_seed, "First seed")->capture_default_str();
  gc->add_option("--entries", grad.entries, "Sampled entries per tensor (0 = all)")
      ->capture_default_str();
  add_model_options(gc, grad_model);

  std::vector<const char*> argv{"emosphere"};
  for (const auto& s : args) argv.push_back(s.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }

  CLI::App* chosen = app.get_subcommands().front();
  out << "# effective config (" << chosen->get_name() << ")\n"
      << chosen->config_to_str(true, false) << "#\n";

  try {
    if (chosen == t) return cmd_transform(transform, out);
    if (chosen == p) return cmd_partition_stats(partition, out, err);
    if (chosen == sy) return cmd_synth(synth, out);
    if (chosen == sp) return cmd_split(split, out, err);
    if (chosen == tr) return cmd_train(train, out, err);
    if (chosen == ev) return cmd_eval(eval, out, err);
    if (chosen == gc) return cmd_gradcheck(grad, grad_model, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}

}  // namespace emosphere::cli
