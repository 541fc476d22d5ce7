#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "xmeta/numerics.hpp"
#include "xmeta/rng.hpp"

namespace xmeta {

struct Example {
    std::string id;
    Vec64 features;
    int label = 0;
    std::string language;
    std::string task;
};

// A pool of examples sharing one (task, language) pair and an ordered label
// set. This is the unit the task queue samples from.
struct TaskDataset {
    std::string name;
    std::string task;
    std::string language;
    std::vector<std::string> label_names;
    std::vector<Example> examples;

    size_t size() const { return examples.size(); }
    size_t num_labels() const { return label_names.size(); }
    size_t feature_dim() const;
    // Example indices grouped by label id.
    std::vector<std::vector<size_t>> by_label() const;
    void validate() const;
};

// One label name per line; line order defines the integer id.
std::vector<std::string> load_label_file(const std::string& path);

// JSONL exchange: one object per line with keys id, features (number array),
// label (string), language, task. Labels map to indices by first appearance,
// or by `fixed_labels` when given (unknown labels are then an error).
// Malformed lines report their 1-based line number. All lines must share one
// (task, language) pair.
TaskDataset load_jsonl(const std::string& path,
                       const std::optional<std::vector<std::string>>& fixed_labels = std::nullopt);
void save_jsonl(const TaskDataset& dataset, const std::string& path);

// Tab-separated text pairs: premise<TAB>hypothesis<TAB>label. Each sentence
// is lowercased, split on whitespace, and its tokens hashed (FNV-1a 64-bit)
// into 128 counting buckets; each bag is L2-normalized and the two bags are
// concatenated into 256 features. Labels come from the sidecar label file.
TaskDataset load_tsv_pairs(const std::string& tsv_path, const std::string& labels_path,
                           const std::string& task, const std::string& language,
                           bool has_header = false);
Vec64 hash_pair_features(const std::string& premise, const std::string& hypothesis);

// Deterministic stratified three-way split. Fractions must be positive and
// sum to 1; every label needs at least 3 examples so each part gets one.
// Within a label, the shuffle order is fixed by `seed`; per-part counts use
// floor quotas with largest-remainder rounding.
struct SplitResult {
    TaskDataset train;
    TaskDataset dev;
    TaskDataset test;
};
SplitResult split(const TaskDataset& dataset, const std::array<double, 3>& fractions,
                  uint64_t seed);

struct SyntheticSpec {
    std::string task = "synth";
    size_t num_labels = 3;
    size_t feature_dim = 8;
    size_t num_languages = 2;
    size_t examples_per_label = 32;  // per language
    size_t clusters_per_label = 1;
    double separation = 6.0;          // pairwise distance between label centers
    double cluster_separation = 3.0;  // pairwise distance between planted sub-clusters
    double noise = 0.25;              // per-coordinate noise standard deviation
    double language_shift = 0.1;      // magnitude of each language's rotation + offset
    uint64_t seed = 1;

    void validate() const;
};

// Draws one dataset per "language", all sharing a single base sample so the
// languages differ exactly by a per-language affine map (rotation + offset of
// magnitude language_shift; shift 0 makes the datasets identical).
//
// The base sample: label centers on a randomly rotated regular simplex with
// pairwise distance `separation`; each label splits into `clusters_per_label`
// planted sub-clusters (their offsets form a centered simplex with pairwise
// distance `cluster_separation`, rotated per label); examples get cluster
// assignments round-robin and bounded noise drawn uniformly from a ball whose
// per-coordinate standard deviation is `noise`. Ids record the ground truth
// as "lang<l>-c<label>-k<cluster>-<index>".
std::vector<TaskDataset> generate_synthetic(const SyntheticSpec& spec);

}  // namespace xmeta
