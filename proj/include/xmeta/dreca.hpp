#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "xmeta/corpus.hpp"
#include "xmeta/episodes.hpp"
#include "xmeta/model.hpp"
#include "xmeta/numerics.hpp"
#include "xmeta/rng.hpp"

namespace xmeta {

struct DrecaConfig {
    size_t clusters_per_label = 2;  // K
    bool use_encoder = true;        // false: cluster raw features
    size_t restarts = 5;
    size_t max_iterations = 100;
    double tolerance = 1e-9;  // centroid movement convergence threshold
    void validate() const;
};

// One synthetic task: one cluster chosen per label; members are the union of
// the chosen clusters.
struct DrecaTask {
    std::vector<size_t> cluster_tuple;  // cluster index per label, label order
    std::vector<std::string> member_ids;
    std::string parent;  // dataset name
};

struct LabelGroup {
    int label = 0;
    std::vector<size_t> example_indices;  // into the parent dataset
    Mat64 embeddings;                     // one row per member, same order
};

struct KmeansResult {
    std::vector<size_t> assignments;
    Mat64 centroids;
    double inertia = 0.0;
};

// Examples grouped by label, embedded through the encoder's final layer in
// eval mode (or taken verbatim when encoder is null).
std::vector<LabelGroup> label_groups(const TaskDataset& dataset, const Model* encoder);

// Lloyd's algorithm, k-means++ seeding, best of config.restarts runs by
// inertia (ties to the earlier restart). Empty clusters are repaired by
// moving in the point farthest from its current centroid. Inertia is checked
// to be non-increasing across iterations on every run. Deterministic given
// rng; the caller's rng state is not consumed (per-restart substreams).
KmeansResult kmeans(const Mat64& points, size_t k, const DrecaConfig& config, const Rng& rng);

// Per-label cluster membership, as example ids.
struct ClusteredGroup {
    int label = 0;
    std::vector<std::vector<std::string>> clusters;
};

// Runs label_groups + kmeans over every label with K = clusters_per_label.
std::vector<ClusteredGroup> cluster_dataset(const TaskDataset& dataset, const Model* encoder,
                                            const DrecaConfig& config, const Rng& rng);

// All K^N cluster combinations, in lexicographic order of the cluster-index
// tuples (label 0 most significant). Every label must have exactly K
// clusters.
std::vector<DrecaTask> enumerate_tasks(const std::vector<ClusteredGroup>& groups,
                                       const std::string& parent);

// Materializes a task as a dataset (parent's labels, members only).
TaskDataset dreca_task_dataset(const TaskDataset& parent, const DrecaTask& task);

// Blends the original queue with the given task datasets: the originals keep
// total probability (1 - mixing), the new tasks share `mixing`, each side
// distributed by the temperature rule over its own sizes. Tasks that cannot
// host an episode (any label with fewer than min_per_label examples) are
// dropped; dropping all of them is an error. mixing 0 returns the queue
// unchanged.
TaskQueue augment_queue(const TaskQueue& queue, const std::vector<TaskDataset>& dreca_datasets,
                        double mixing, size_t min_per_label);

}  // namespace xmeta
