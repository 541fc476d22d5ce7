#include "xmeta/episodes.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <utility>

#include "xmeta/errors.hpp"

namespace xmeta {

Scenario scenario_from_string(const std::string& s) {
    if (s == "aux_only") return Scenario::kAuxOnly;
    if (s == "aux_support_mixed_query") return Scenario::kAuxSupportMixedQuery;
    throw ConfigError("unknown scenario: " + s);
}

std::string to_string(Scenario s) {
    return s == Scenario::kAuxOnly ? "aux_only" : "aux_support_mixed_query";
}

void Episode::validate() const {
    if (way == 0) throw DataError("episode: way must be positive");
    if (classes.size() != way) throw DataError("episode: class list size != way");
    if (support.size() != way * shot) throw DataError("episode: support size != way*shot");
    if (query.size() != way * query_per_class)
        throw DataError("episode: query size != way*query_per_class");

    std::set<int> class_set(classes.begin(), classes.end());
    if (class_set.size() != way) throw DataError("episode: duplicate classes");

    auto count_per_class = [&](const std::vector<Example>& part, size_t expected,
                               const char* what) {
        std::map<int, size_t> counts;
        for (const Example& ex : part) {
            if (!class_set.count(ex.label))
                throw DataError(std::string("episode: ") + what + " example " + ex.id +
                                " outside the episode's classes");
            ++counts[ex.label];
        }
        for (int c : classes)
            if (counts[c] != expected)
                throw DataError(std::string("episode: class ") + std::to_string(c) + " has " +
                                std::to_string(counts[c]) + " " + what + " examples, expected " +
                                std::to_string(expected));
    };
    count_per_class(support, shot, "support");
    count_per_class(query, query_per_class, "query");

    std::set<std::string> support_ids;
    for (const Example& ex : support)
        if (!support_ids.insert(ex.id).second)
            throw DataError("episode: duplicate support id " + ex.id);
    std::set<std::string> query_ids;
    for (const Example& ex : query) {
        if (!query_ids.insert(ex.id).second)
            throw DataError("episode: duplicate query id " + ex.id);
        if (support_ids.count(ex.id))
            throw DataError("episode: id " + ex.id + " appears in both support and query");
    }
}

Vec64 queue_probabilities(const std::vector<size_t>& sizes, double tau) {
    if (sizes.empty()) throw ConfigError("queue_probabilities: no sizes");
    if (std::isnan(tau) || tau <= 0.0)
        throw ConfigError("queue_probabilities: tau must be positive (or +inf for uniform)");
    const double inv_tau = 1.0 / tau;  // exactly 0 at tau = +inf

    Vec64 logits(sizes.size());
    for (size_t i = 0; i < sizes.size(); ++i) {
        if (sizes[i] == 0) throw ConfigError("queue_probabilities: zero-size task");
        logits[i] = inv_tau * std::log(static_cast<double>(sizes[i]));
    }
    return softmax(logits);
}

TaskQueue make_queue(std::vector<TaskDataset> datasets, double tau) {
    if (datasets.empty()) throw ConfigError("make_queue: empty queue");
    std::vector<size_t> sizes;
    sizes.reserve(datasets.size());
    for (const TaskDataset& ds : datasets) {
        ds.validate();
        sizes.push_back(ds.size());
    }
    TaskQueue queue;
    queue.datasets = std::move(datasets);
    queue.tau = tau;
    queue.probabilities = queue_probabilities(sizes, tau);
    return queue;
}

size_t sample_task(const TaskQueue& queue, Rng& rng) {
    if (queue.datasets.empty()) throw ConfigError("sample_task: empty queue");
    const double u = rng.next_double();
    double cumulative = 0.0;
    for (size_t i = 0; i < queue.probabilities.size(); ++i) {
        cumulative += queue.probabilities[i];
        if (u < cumulative) return i;
    }
    return queue.probabilities.size() - 1;
}

namespace {

// Index of one example into one of the episode's source datasets.
struct PoolRef {
    const TaskDataset* dataset;
    size_t index;
};

// Draw without replacement: swap a uniformly chosen remaining element to the
// back and shrink.
PoolRef draw(std::vector<PoolRef>& pool, Rng& rng, const char* what) {
    if (pool.empty())
        throw DataError(std::string("build_episode: ran out of ") + what + " examples");
    const size_t pick = static_cast<size_t>(rng.next_below(pool.size()));
    std::swap(pool[pick], pool.back());
    const PoolRef ref = pool.back();
    pool.pop_back();
    return ref;
}

}  // namespace

Episode build_episode(const std::vector<const TaskDataset*>& sources, size_t way, size_t shot,
                      size_t query_per_class, Scenario scenario, const TaskDataset* target,
                      double target_fraction, Rng& rng) {
    if (sources.empty()) throw ConfigError("build_episode: no source datasets");
    if (way < 1) throw ConfigError("build_episode: way must be >= 1");
    if (shot < 1) throw ConfigError("build_episode: shot must be >= 1");
    if (scenario == Scenario::kAuxSupportMixedQuery) {
        if (target == nullptr)
            throw ConfigError("build_episode: mixed-query scenario requires a target dataset");
        if (!(target_fraction >= 0.0 && target_fraction <= 1.0))
            throw ConfigError("build_episode: target_fraction must be in [0, 1]");
    }

    const TaskDataset& first = *sources[0];
    for (const TaskDataset* ds : sources) {
        ds->validate();
        if (ds->label_names != first.label_names)
            throw DataError("build_episode: source " + ds->name +
                            " has a different ordered label set than " + first.name);
        if (ds->task != first.task)
            throw DataError("build_episode: source " + ds->name + " has task " + ds->task +
                            ", expected " + first.task);
    }
    if (target != nullptr) {
        target->validate();
        if (target->label_names != first.label_names)
            throw DataError("build_episode: target label set differs from the sources'");
    }
    if (way > first.num_labels())
        throw DataError("build_episode: way " + std::to_string(way) + " exceeds the " +
                        std::to_string(first.num_labels()) + "-label set");

    // Per-class pools across all sources, plus target pools for scenario 2.
    const size_t num_labels = first.num_labels();
    std::vector<std::vector<PoolRef>> aux_pool(num_labels);
    for (const TaskDataset* ds : sources) {
        const auto groups = ds->by_label();
        for (size_t c = 0; c < num_labels; ++c)
            for (size_t idx : groups[c]) aux_pool[c].push_back({ds, idx});
    }
    std::vector<std::vector<PoolRef>> target_pool(num_labels);
    if (scenario == Scenario::kAuxSupportMixedQuery) {
        const auto groups = target->by_label();
        for (size_t c = 0; c < num_labels; ++c)
            for (size_t idx : groups[c]) target_pool[c].push_back({target, idx});
    }

    // Classes: first `way` entries of a seeded permutation of the label set.
    const std::vector<size_t> label_order = rng.permutation(num_labels);
    Episode ep;
    ep.way = way;
    ep.shot = shot;
    ep.query_per_class = query_per_class;
    ep.task_tag = first.task;
    for (const TaskDataset* ds : sources) ep.source_names.push_back(ds->name);
    if (target != nullptr) ep.source_names.push_back(target->name);
    for (size_t i = 0; i < way; ++i) ep.classes.push_back(static_cast<int>(label_order[i]));

    for (int c : ep.classes) {
        auto& aux = aux_pool[static_cast<size_t>(c)];
        auto& tgt = target_pool[static_cast<size_t>(c)];
        // Conservative capacity check so the draw below can never fail
        // mid-episode regardless of how the query coin flips land.
        if (aux.size() < shot + query_per_class)
            throw DataError("build_episode: class " + first.label_names[static_cast<size_t>(c)] +
                            " has " + std::to_string(aux.size()) + " source examples, needs " +
                            std::to_string(shot + query_per_class));
        if (scenario == Scenario::kAuxSupportMixedQuery && tgt.size() < query_per_class)
            throw DataError("build_episode: class " + first.label_names[static_cast<size_t>(c)] +
                            " has " + std::to_string(tgt.size()) + " target examples, needs " +
                            std::to_string(query_per_class));

        for (size_t k = 0; k < shot; ++k) {
            const PoolRef ref = draw(aux, rng, "support");
            ep.support.push_back(ref.dataset->examples[ref.index]);
        }
        for (size_t q = 0; q < query_per_class; ++q) {
            const bool from_target = scenario == Scenario::kAuxSupportMixedQuery &&
                                     rng.next_double() < target_fraction;
            const PoolRef ref = draw(from_target ? tgt : aux, rng, "query");
            ep.query.push_back(ref.dataset->examples[ref.index]);
        }
    }
    ep.validate();
    return ep;
}

}  // namespace xmeta
