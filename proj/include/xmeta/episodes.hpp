#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "xmeta/corpus.hpp"
#include "xmeta/numerics.hpp"
#include "xmeta/rng.hpp"

namespace xmeta {

// Query composition: aux-only draws queries from the source datasets; the
// mixed variant fills each query slot from the target dataset with
// probability target_fraction and from the sources otherwise.
enum class Scenario { kAuxOnly, kAuxSupportMixedQuery };

Scenario scenario_from_string(const std::string& s);
std::string to_string(Scenario s);

struct Episode {
    std::vector<Example> support;
    std::vector<Example> query;
    size_t way = 0;
    size_t shot = 0;
    size_t query_per_class = 0;
    std::vector<int> classes;  // chosen label ids, sampled order
    std::string task_tag;
    std::vector<std::string> source_names;

    // Exact per-class counts, support/query id-disjointness, label-set
    // equality. query_per_class may be 0 (support-only episodes).
    void validate() const;
};

// P(i) = q_i^(1/tau) / sum_k q_k^(1/tau), computed in log space. tau may be
// +infinity (uniform). Sizes must be positive, tau > 0.
Vec64 queue_probabilities(const std::vector<size_t>& sizes, double tau);

struct TaskQueue {
    std::vector<TaskDataset> datasets;
    double tau = 1.0;
    Vec64 probabilities;  // cached, sums to 1
};

TaskQueue make_queue(std::vector<TaskDataset> datasets, double tau);

// One multinomial draw over the queue's cached probabilities; returns the
// dataset index.
size_t sample_task(const TaskQueue& queue, Rng& rng);

// N-way K-shot episode. Classes are drawn uniformly without replacement from
// the shared label set; examples without replacement within the episode.
// Sources must agree on their ordered label sets (and, with a target, the
// target too). Preconditions guarantee the episode always completes: each
// chosen class needs shot + query_per_class examples across the sources, and
// with the mixed-query scenario query_per_class examples in the target.
Episode build_episode(const std::vector<const TaskDataset*>& sources, size_t way, size_t shot,
                      size_t query_per_class, Scenario scenario, const TaskDataset* target,
                      double target_fraction, Rng& rng);

inline Episode build_episode(const TaskDataset& source, size_t way, size_t shot,
                             size_t query_per_class, Rng& rng) {
    return build_episode({&source}, way, shot, query_per_class, Scenario::kAuxOnly, nullptr, 0.0,
                         rng);
}

}  // namespace xmeta
