#include "emosphere/data.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "binary_io.hpp"
#include "emosphere/errors.hpp"

namespace emosphere {

namespace fs = std::filesystem;

std::string to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
    case Split::Unassigned: break;
  }
  return "unassigned";
}

Split split_from_string(const std::string& s) {
  if (s == "train") return Split::Train;
  if (s == "val") return Split::Val;
  if (s == "test") return Split::Test;
  if (s == "unassigned" || s.empty()) return Split::Unassigned;
  throw FormatError("unknown split '" + s + "' (expected train, val or test)");
}

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t tab = line.find('\t', start);
    out.push_back(line.substr(start, tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  return out;
}

bool parse_double(const std::string& s, double& out) {
  const char* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && ptr == end;
}

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

bool in_raw_range(const VadPoint& p) {
  const auto ok = [](double x) { return x >= 1.0 && x <= 7.0; };
  return ok(p.v) && ok(p.a) && ok(p.d);
}

std::vector<char> read_file(const fs::path& path, const char* what) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(std::string("cannot open ") + what + ": " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

// -------------------------------------------------------------- manifest

std::vector<UtteranceRecord> parse_manifest(const std::string& text, const fs::path& base_dir,
                                            const std::string& source) {
  std::vector<UtteranceRecord> records;
  std::vector<std::string> malformed;
  std::vector<std::string> out_of_range;
  std::set<std::string> seen;
  std::vector<std::string> duplicates;

  std::istringstream in(text);
  std::string line;
  for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;

    const auto fields = split_tabs(line);
    UtteranceRecord rec;
    double vad[3];
    const bool shape_ok = fields.size() == 6 || fields.size() == 7;
    bool ok = shape_ok && !fields[0].empty() && !fields[1].empty();
    for (int i = 0; ok && i < 3; ++i) ok = parse_double(fields[2 + i], vad[i]);
    if (ok && fields.size() == 7) {
      try {
        rec.split = split_from_string(fields[6]);
      } catch (const FormatError&) {
        ok = false;
      }
    }
    if (!ok) {
      malformed.push_back("line " + std::to_string(lineno) +
                          (shape_ok ? ": bad field value"
                                    : ": expected 6 or 7 tab-separated fields, got " +
                                          std::to_string(fields.size())));
      continue;
    }

    rec.id = fields[0];
    const fs::path feature(fields[1]);
    rec.feature_path = feature.is_absolute() ? feature.string() : (base_dir / feature).string();
    rec.vad_raw = {vad[0], vad[1], vad[2], VadScale::Raw17};
    rec.category = fields[5];
    if (!in_raw_range(rec.vad_raw)) out_of_range.push_back(rec.id);
    if (!seen.insert(rec.id).second) duplicates.push_back(rec.id);
    records.push_back(std::move(rec));
  }

  const auto join = [](const std::vector<std::string>& items, const char* sep) {
    std::string s;
    for (std::size_t i = 0; i < items.size(); ++i) s += (i ? sep : "") + items[i];
    return s;
  };
  if (!malformed.empty()) {
    throw FormatError(source + ": malformed lines: " + join(malformed, "; "));
  }
  if (!out_of_range.empty()) {
    throw ValidationError(source + ": VAD outside [1, 7] for ids: " + join(out_of_range, ", "));
  }
  if (!duplicates.empty()) {
    throw ValidationError(source + ": duplicate ids: " + join(duplicates, ", "));
  }
  return records;
}

std::vector<UtteranceRecord> load_manifest(const fs::path& path) {
  const std::vector<char> bytes = read_file(path, "manifest");
  return parse_manifest(std::string(bytes.begin(), bytes.end()), path.parent_path(),
                        path.string());
}

void write_manifest(const fs::path& path, const std::vector<UtteranceRecord>& records) {
  const fs::path base = path.parent_path();
  std::ostringstream os;
  os << "# id\tfeature_path\tvalence\tarousal\tdominance\tcategory\tsplit\n";
  for (const auto& r : records) {
    fs::path feature(r.feature_path);
    if (!base.empty()) feature = feature.lexically_proximate(base);
    os << r.id << '\t' << feature.generic_string() << '\t' << format_double(r.vad_raw.v) << '\t'
       << format_double(r.vad_raw.a) << '\t' << format_double(r.vad_raw.d) << '\t'
       << r.category;
    if (r.split != Split::Unassigned) os << '\t' << to_string(r.split);
    os << '\n';
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open manifest for writing: " + path.string());
  out << os.str();
  if (!out) throw IoError("failed writing manifest: " + path.string());
}

// ------------------------------------------------------- preprocessing

FilterResult filter_x_labels(const std::vector<UtteranceRecord>& records) {
  FilterResult out;
  std::copy_if(records.begin(), records.end(), std::back_inserter(out.records),
               [](const UtteranceRecord& r) { return r.category != kNoAgreementCategory; });
  out.removed = records.size() - out.records.size();
  if (!records.empty() && out.records.empty()) {
    out.warnings.push_back("every record carries the X label; nothing left after filtering");
  }
  return out;
}

SplitResult split_per_category(const std::vector<UtteranceRecord>& records, int per_class,
                               std::uint64_t seed) {
  if (per_class < 1) throw ConfigError("per-category sample size must be at least 1");

  std::map<std::string, std::vector<std::size_t>> by_category;
  for (std::size_t i = 0; i < records.size(); ++i) by_category[records[i].category].push_back(i);

  SplitResult out;
  std::vector<bool> in_val(records.size(), false);
  std::mt19937_64 rng(seed);
  for (auto& [category, idx] : by_category) {
    if (idx.size() < static_cast<std::size_t>(per_class)) {
      out.warnings.push_back("category '" + category + "' has only " +
                             std::to_string(idx.size()) + " records (< " +
                             std::to_string(per_class) + "); all go to validation");
      for (std::size_t i : idx) in_val[i] = true;
      continue;
    }
    std::shuffle(idx.begin(), idx.end(), rng);
    for (int k = 0; k < per_class; ++k) in_val[idx[k]] = true;
  }

  for (std::size_t i = 0; i < records.size(); ++i) {
    UtteranceRecord r = records[i];
    r.split = in_val[i] ? Split::Val : Split::Test;
    (in_val[i] ? out.val : out.test).push_back(std::move(r));
  }
  return out;
}

std::vector<std::int64_t> compute_region_counts(const std::vector<UtteranceRecord>& records,
                                                const RegionPartition& partition) {
  std::vector<std::int64_t> counts(partition.n_regions(), 0);
  for (const auto& r : records) ++counts[region_of_raw(partition, r.vad_raw).index];
  return counts;
}

Dataset make_dataset(std::vector<UtteranceRecord> records, const RegionPartition& partition) {
  Dataset ds{std::move(records), partition, {}};
  ds.region_counts = compute_region_counts(ds.records, partition);
  return ds;
}

// --------------------------------------------------------- feature files

void write_features(const fs::path& path, const Tensor& frames) {
  if (frames.rank() != 2 || frames.dim(0) == 0) {
    throw ShapeError("feature matrix must be [T x D] with T >= 1, got " +
                     shape_string(frames.shape()));
  }
  detail::ByteWriter w;
  w.bytes(kFeatureMagic, sizeof(kFeatureMagic));
  w.u32(static_cast<std::uint32_t>(frames.dim(0)));
  w.u32(static_cast<std::uint32_t>(frames.dim(1)));
  for (double v : frames.values()) w.f32(static_cast<float>(v));

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open feature file for writing: " + path.string());
  out.write(w.buffer().data(), static_cast<std::streamsize>(w.buffer().size()));
  if (!out) throw IoError("failed writing feature file: " + path.string());
}

Tensor read_features(const fs::path& path) {
  const std::vector<char> bytes = read_file(path, "feature file");
  detail::ByteReader r(bytes.data(), bytes.size(), path.string());
  char magic[sizeof(kFeatureMagic)];
  r.bytes(magic, sizeof(magic));
  if (!std::equal(std::begin(magic), std::end(magic), std::begin(kFeatureMagic))) {
    throw FormatError(path.string() + ": not a feature file (bad magic)");
  }
  const std::size_t frames = r.u32();
  const std::size_t dim = r.u32();
  if (frames == 0 || dim == 0) {
    throw FormatError(path.string() + ": empty feature matrix (T=" + std::to_string(frames) +
                      ", D=" + std::to_string(dim) + ")");
  }
  Tensor out({frames, dim});
  for (double& v : out.values()) v = r.f32();
  if (r.remaining() != 0) {
    throw FormatError(path.string() + ": " + std::to_string(r.remaining()) + " trailing bytes");
  }
  return out;
}

Tensor load_features(const UtteranceRecord& record, std::size_t expected_dim) {
  Tensor t = read_features(record.feature_path);
  if (t.dim(1) != expected_dim) {
    throw ShapeError(record.feature_path + ": feature width " + std::to_string(t.dim(1)) +
                     " does not match expected " + std::to_string(expected_dim));
  }
  return t;
}

std::vector<Example> load_examples(const std::vector<UtteranceRecord>& records,
                                   const RegionPartition& partition, std::size_t feat_dim) {
  std::vector<Example> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    const VadPoint unit = normalize_vad(r.vad_raw);
    out.push_back({r.id, load_features(r, feat_dim), unit,
                   assign_region(partition, to_spherical(unit)).index, r.category});
  }
  return out;
}

// ------------------------------------------------------------- synthetic

SyntheticDataset generate_synthetic(const SyntheticConfig& cfg) {
  if (cfg.n < 1) throw ConfigError("synthetic dataset needs n >= 1");
  if (cfg.feat_dim < 1 || cfg.frames < 1) {
    throw ConfigError("synthetic dataset needs feat_dim >= 1 and frames >= 1");
  }
  if (cfg.noise < 0.0) throw ConfigError("noise scale must be non-negative");
  if (!(cfg.val_fraction >= 0.0 && cfg.val_fraction < 1.0)) {
    throw ConfigError("val_fraction must lie in [0, 1)");
  }

  const auto dim = static_cast<std::size_t>(cfg.feat_dim);
  const auto frames = static_cast<std::size_t>(cfg.frames);
  const RegionPartition partition = make_partition(cfg.angle_deg);
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);

  SyntheticDataset out;
  out.embedding = Tensor({dim, 3});
  out.offset = Tensor({dim});
  for (double& v : out.embedding.values()) v = gauss(rng);
  // The offset keeps per-frame layer normalization from discarding the
  // label magnitude.
  for (double& v : out.offset.values()) v = 2.0 * gauss(rng);

  std::vector<UtteranceRecord> records;
  records.reserve(cfg.n);
  out.examples.reserve(cfg.n);
  for (int i = 0; i < cfg.n; ++i) {
    const VadPoint drawn{unit(rng), unit(rng), unit(rng), VadScale::NormUnit};
    // Round-trip through the raw scale so in-memory targets match what a
    // reader of the written manifest sees.
    const VadPoint raw = denormalize_vad(drawn);
    const VadPoint vad = normalize_vad(raw);
    const int region = assign_region(partition, to_spherical(vad)).index;

    Tensor feats({frames, dim});
    for (std::size_t t = 0; t < frames; ++t) {
      for (std::size_t c = 0; c < dim; ++c) {
        const double clean = out.embedding.at(c, 0) * vad.v + out.embedding.at(c, 1) * vad.a +
                             out.embedding.at(c, 2) * vad.d + out.offset[c];
        feats.at(t, c) = clean + cfg.noise * gauss(rng);
      }
    }

    char id[32];
    std::snprintf(id, sizeof(id), "utt%05d", i);
    UtteranceRecord rec;
    rec.id = id;
    rec.feature_path = (fs::path("features") / (rec.id + ".emf")).generic_string();
    rec.vad_raw = raw;
    rec.category = std::to_string(region);
    rec.split = Split::Train;
    records.push_back(rec);
    out.examples.push_back({rec.id, std::move(feats), vad, region, rec.category});
  }

  std::vector<std::size_t> order(records.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_val = static_cast<std::size_t>(cfg.val_fraction * cfg.n + 0.5);
  for (std::size_t k = 0; k < n_val; ++k) records[order[k]].split = Split::Val;

  out.dataset = make_dataset(std::move(records), partition);
  return out;
}

SyntheticDataset synthesize_dataset(const SyntheticConfig& cfg, const fs::path& out_dir) {
  SyntheticDataset out = generate_synthetic(cfg);
  fs::create_directories(out_dir / "features");
  for (std::size_t i = 0; i < out.examples.size(); ++i) {
    auto& rec = out.dataset.records[i];
    rec.feature_path = (out_dir / rec.feature_path).string();
    write_features(rec.feature_path, out.examples[i].features);
  }
  write_manifest(out_dir / "manifest.tsv", out.dataset.records);
  return out;
}

}  // namespace emosphere
