#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "emosphere/geometry.hpp"
#include "emosphere/tensor.hpp"

namespace emosphere {

enum class Split { Unassigned, Train, Val, Test };

std::string to_string(Split s);
Split split_from_string(const std::string& s);

/// Category value that marks utterances without a plurality emotion vote.
inline constexpr const char* kNoAgreementCategory = "X";

struct UtteranceRecord {
  std::string id;
  std::string feature_path;
  VadPoint vad_raw{4.0, 4.0, 4.0, VadScale::Raw17};
  std::string category;
  Split split = Split::Unassigned;

  bool operator==(const UtteranceRecord&) const = default;
};

struct Dataset {
  std::vector<UtteranceRecord> records;
  RegionPartition partition{4, 2};
  std::vector<std::int64_t> region_counts;
};

// Manifest: UTF-8 text, one record per line, tab-separated
//   id  feature_path  valence  arousal  dominance  category  [split]
// Lines starting with '#' and blank lines are ignored. The optional seventh
// column is one of train/val/test. Relative feature paths resolve against
// the manifest's directory.
std::vector<UtteranceRecord> load_manifest(const std::filesystem::path& path);
std::vector<UtteranceRecord> parse_manifest(const std::string& text,
                                            const std::filesystem::path& base_dir,
                                            const std::string& source = "manifest");
void write_manifest(const std::filesystem::path& path,
                    const std::vector<UtteranceRecord>& records);

struct FilterResult {
  std::vector<UtteranceRecord> records;
  std::size_t removed = 0;
  std::vector<std::string> warnings;
};

/// Drops records whose category is "X", preserving relative order.
FilterResult filter_x_labels(const std::vector<UtteranceRecord>& records);

struct SplitResult {
  std::vector<UtteranceRecord> val;
  std::vector<UtteranceRecord> test;
  std::vector<std::string> warnings;
};

/// Samples `per_class` records from every category (seeded, without
/// replacement) into the validation split; everything else goes to test.
/// Categories with fewer than `per_class` records go entirely to
/// validation. Both outputs keep the input's relative order.
SplitResult split_per_category(const std::vector<UtteranceRecord>& records, int per_class,
                               std::uint64_t seed);

std::vector<std::int64_t> compute_region_counts(const std::vector<UtteranceRecord>& records,
                                                const RegionPartition& partition);

Dataset make_dataset(std::vector<UtteranceRecord> records, const RegionPartition& partition);

// Feature file: 8-byte magic "EMOFEAT1", u32 T, u32 D (little-endian), then
// T*D little-endian float32 values, frames outermost.
inline constexpr char kFeatureMagic[8] = {'E', 'M', 'O', 'F', 'E', 'A', 'T', '1'};

void write_features(const std::filesystem::path& path, const Tensor& frames);
Tensor read_features(const std::filesystem::path& path);
/// Reads a record's feature file and checks its width.
Tensor load_features(const UtteranceRecord& record, std::size_t expected_dim);

/// In-memory training example: features plus every target derived from the
/// record's annotation.
struct Example {
  std::string id;
  Tensor features;  // [T x D]
  VadPoint vad;     // normalized
  int region = 0;
  std::string category;
};

std::vector<Example> load_examples(const std::vector<UtteranceRecord>& records,
                                   const RegionPartition& partition, std::size_t feat_dim);

struct SyntheticConfig {
  int n = 512;
  int feat_dim = 16;
  int frames = 10;
  double noise = 0.05;
  std::uint64_t seed = 0;
  double val_fraction = 0.2;
  double angle_deg = 90.0;
};

/// Desk-scale stand-in for a labelled corpus. Every frame of an utterance is
///   x_t = embedding * vad + offset + noise * N(0, I)
/// with normalized VAD drawn uniformly from [-1, 1]^3, so the temporal mean
/// is an affine function of the label plus averaged Gaussian noise.
struct SyntheticDataset {
  Dataset dataset;
  std::vector<Example> examples;  // same order as dataset.records
  Tensor embedding;               // [feat_dim x 3]
  Tensor offset;                  // [feat_dim]
};

SyntheticDataset generate_synthetic(const SyntheticConfig& cfg);

/// Generates the dataset and writes `<out_dir>/manifest.tsv` plus one
/// feature file per utterance under `<out_dir>/features/`.
SyntheticDataset synthesize_dataset(const SyntheticConfig& cfg,
                                    const std::filesystem::path& out_dir);

}  // namespace emosphere
