#include "xmeta/dreca.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "xmeta/errors.hpp"

namespace xmeta {

void DrecaConfig::validate() const {
    if (clusters_per_label < 1) throw ConfigError("dreca: clusters_per_label must be >= 1");
    if (restarts < 1) throw ConfigError("dreca: restarts must be >= 1");
    if (max_iterations < 1) throw ConfigError("dreca: max_iterations must be >= 1");
    if (!(tolerance >= 0.0)) throw ConfigError("dreca: tolerance must be non-negative");
}

std::vector<LabelGroup> label_groups(const TaskDataset& dataset, const Model* encoder) {
    dataset.validate();
    Mat64 embedded;
    if (encoder != nullptr) {
        embedded = encoder->encode(features_matrix(std::span<const Example>(dataset.examples)));
    } else {
        embedded = features_matrix(std::span<const Example>(dataset.examples));
    }

    std::vector<LabelGroup> groups;
    const auto by_label = dataset.by_label();
    for (size_t c = 0; c < by_label.size(); ++c) {
        LabelGroup group;
        group.label = static_cast<int>(c);
        group.example_indices = by_label[c];
        group.embeddings = Mat64(by_label[c].size(), embedded.cols);
        for (size_t i = 0; i < by_label[c].size(); ++i)
            group.embeddings.set_row(i, embedded.row(by_label[c][i]));
        groups.push_back(std::move(group));
    }
    return groups;
}

namespace {

size_t nearest_centroid_index(const Mat64& points, size_t row, const Mat64& centroids) {
    size_t best = 0;
    double best_dist = std::numeric_limits<double>::infinity();
    for (size_t c = 0; c < centroids.rows; ++c) {
        double dist = 0.0;
        for (size_t j = 0; j < points.cols; ++j) {
            const double diff = points(row, j) - centroids(c, j);
            dist += diff * diff;
        }
        if (dist < best_dist) {
            best_dist = dist;
            best = c;
        }
    }
    return best;
}

double point_centroid_dist2(const Mat64& points, size_t row, const Mat64& centroids, size_t c) {
    double dist = 0.0;
    for (size_t j = 0; j < points.cols; ++j) {
        const double diff = points(row, j) - centroids(c, j);
        dist += diff * diff;
    }
    return dist;
}

Mat64 kmeanspp_seed(const Mat64& points, size_t k, Rng& rng) {
    Mat64 centroids(k, points.cols);
    std::vector<double> min_dist2(points.rows, std::numeric_limits<double>::infinity());
    size_t first = static_cast<size_t>(rng.next_below(points.rows));
    centroids.set_row(0, points.row(first));
    for (size_t c = 1; c < k; ++c) {
        double total = 0.0;
        for (size_t i = 0; i < points.rows; ++i) {
            const double d2 = point_centroid_dist2(points, i, centroids, c - 1);
            min_dist2[i] = std::min(min_dist2[i], d2);
            total += min_dist2[i];
        }
        size_t chosen;
        if (total <= 0.0) {
            chosen = static_cast<size_t>(rng.next_below(points.rows));
        } else {
            const double u = rng.next_double() * total;
            double cumulative = 0.0;
            chosen = points.rows - 1;
            for (size_t i = 0; i < points.rows; ++i) {
                cumulative += min_dist2[i];
                if (u < cumulative) {
                    chosen = i;
                    break;
                }
            }
        }
        centroids.set_row(c, points.row(chosen));
    }
    return centroids;
}

KmeansResult lloyd(const Mat64& points, size_t k, const DrecaConfig& config, Rng& rng) {
    KmeansResult result;
    result.centroids = kmeanspp_seed(points, k, rng);
    result.assignments.assign(points.rows, 0);
    double prev_inertia = std::numeric_limits<double>::infinity();

    for (size_t iter = 0; iter < config.max_iterations; ++iter) {
        // Assignment step.
        bool changed = iter == 0;
        double inertia = 0.0;
        for (size_t i = 0; i < points.rows; ++i) {
            const size_t c = nearest_centroid_index(points, i, result.centroids);
            if (c != result.assignments[i]) {
                result.assignments[i] = c;
                changed = true;
            }
            inertia += point_centroid_dist2(points, i, result.centroids, c);
        }
        if (inertia > prev_inertia + 1e-9 * (1.0 + prev_inertia))
            throw NumericError("kmeans: inertia increased across an iteration");
        result.inertia = inertia;
        if (!changed) break;

        // Update step.
        Mat64 sums(k, points.cols);
        std::vector<size_t> counts(k, 0);
        for (size_t i = 0; i < points.rows; ++i) {
            const size_t c = result.assignments[i];
            ++counts[c];
            for (size_t j = 0; j < points.cols; ++j) sums(c, j) += points(i, j);
        }
        // Repair empty clusters with the point farthest from its centroid
        // (donor clusters must keep at least one member).
        for (size_t c = 0; c < k; ++c) {
            if (counts[c] > 0) continue;
            double worst = -1.0;
            size_t worst_point = points.rows;
            for (size_t i = 0; i < points.rows; ++i) {
                const size_t owner = result.assignments[i];
                if (owner == c || counts[owner] < 2) continue;
                const double d2 = point_centroid_dist2(points, i, result.centroids, owner);
                if (d2 > worst) {
                    worst = d2;
                    worst_point = i;
                }
            }
            if (worst_point == points.rows) throw NumericError("kmeans: cannot repair empty cluster");
            const size_t owner = result.assignments[worst_point];
            --counts[owner];
            ++counts[c];
            for (size_t j = 0; j < points.cols; ++j) {
                sums(owner, j) -= points(worst_point, j);
                sums(c, j) += points(worst_point, j);
            }
            result.assignments[worst_point] = c;
        }

        double movement = 0.0;
        for (size_t c = 0; c < k; ++c)
            for (size_t j = 0; j < points.cols; ++j) {
                const double next = sums(c, j) / static_cast<double>(counts[c]);
                movement = std::max(movement, std::abs(next - result.centroids(c, j)));
                result.centroids(c, j) = next;
            }
        prev_inertia = inertia;
        if (movement < config.tolerance) {
            // Final assignment pass so assignments match the centroids.
            result.inertia = 0.0;
            for (size_t i = 0; i < points.rows; ++i) {
                result.assignments[i] = nearest_centroid_index(points, i, result.centroids);
                result.inertia +=
                    point_centroid_dist2(points, i, result.centroids, result.assignments[i]);
            }
            break;
        }
    }
    return result;
}

}  // namespace

KmeansResult kmeans(const Mat64& points, size_t k, const DrecaConfig& config, const Rng& rng) {
    config.validate();
    if (k < 1) throw ConfigError("kmeans: k must be >= 1");
    if (points.rows < k)
        throw DataError("kmeans: " + std::to_string(points.rows) + " points for k = " +
                        std::to_string(k));
    check_finite(points, "kmeans points");

    KmeansResult best;
    bool have_best = false;
    for (size_t r = 0; r < config.restarts; ++r) {
        Rng restart_rng = rng.split(r + 1);
        KmeansResult candidate = lloyd(points, k, config, restart_rng);
        if (!have_best || candidate.inertia < best.inertia) {
            best = std::move(candidate);
            have_best = true;
        }
    }
    return best;
}

std::vector<ClusteredGroup> cluster_dataset(const TaskDataset& dataset, const Model* encoder,
                                            const DrecaConfig& config, const Rng& rng) {
    std::vector<ClusteredGroup> out;
    const std::vector<LabelGroup> groups = label_groups(dataset, encoder);
    for (size_t g = 0; g < groups.size(); ++g) {
        const KmeansResult km =
            kmeans(groups[g].embeddings, config.clusters_per_label, config, rng.split(7000 + g));
        ClusteredGroup cg;
        cg.label = groups[g].label;
        cg.clusters.assign(config.clusters_per_label, {});
        for (size_t i = 0; i < groups[g].example_indices.size(); ++i)
            cg.clusters[km.assignments[i]].push_back(
                dataset.examples[groups[g].example_indices[i]].id);
        out.push_back(std::move(cg));
    }
    return out;
}

std::vector<DrecaTask> enumerate_tasks(const std::vector<ClusteredGroup>& groups,
                                       const std::string& parent) {
    if (groups.empty()) throw ConfigError("enumerate_tasks: no label groups");
    const size_t k = groups[0].clusters.size();
    for (const ClusteredGroup& g : groups)
        if (g.clusters.size() != k)
            throw DataError("enumerate_tasks: ragged cluster counts across labels");
    const size_t n = groups.size();

    size_t total = 1;
    for (size_t i = 0; i < n; ++i) {
        if (total > 100000 / k)
            throw ConfigError("enumerate_tasks: K^N too large to enumerate");
        total *= k;
    }

    std::vector<DrecaTask> tasks;
    tasks.reserve(total);
    std::vector<size_t> tuple(n, 0);
    for (size_t t = 0; t < total; ++t) {
        DrecaTask task;
        task.parent = parent;
        task.cluster_tuple = tuple;
        for (size_t l = 0; l < n; ++l)
            for (const std::string& id : groups[l].clusters[tuple[l]])
                task.member_ids.push_back(id);
        tasks.push_back(std::move(task));
        // Lexicographic increment, label 0 most significant.
        for (size_t l = n; l-- > 0;) {
            if (++tuple[l] < k) break;
            tuple[l] = 0;
        }
    }
    return tasks;
}

TaskDataset dreca_task_dataset(const TaskDataset& parent, const DrecaTask& task) {
    std::map<std::string, size_t> index_by_id;
    for (size_t i = 0; i < parent.examples.size(); ++i)
        index_by_id[parent.examples[i].id] = i;

    TaskDataset ds;
    ds.name = parent.name + "#dreca";
    for (size_t c : task.cluster_tuple) ds.name += "-" + std::to_string(c);
    ds.task = parent.task;
    ds.language = parent.language;
    ds.label_names = parent.label_names;
    for (const std::string& id : task.member_ids) {
        auto it = index_by_id.find(id);
        if (it == index_by_id.end())
            throw DataError("dreca_task_dataset: member id " + id + " not in " + parent.name);
        ds.examples.push_back(parent.examples[it->second]);
    }
    ds.validate();
    return ds;
}

TaskQueue augment_queue(const TaskQueue& queue, const std::vector<TaskDataset>& dreca_datasets,
                        double mixing, size_t min_per_label) {
    if (!(mixing >= 0.0 && mixing <= 1.0))
        throw ConfigError("augment_queue: mixing must be in [0, 1]");
    if (mixing == 0.0) return queue;

    std::vector<TaskDataset> capable;
    for (const TaskDataset& ds : dreca_datasets) {
        ds.validate();
        bool ok = true;
        for (const std::vector<size_t>& group : ds.by_label())
            if (group.size() < min_per_label) {
                ok = false;
                break;
            }
        if (ok) capable.push_back(ds);
    }
    if (capable.empty())
        throw DataError("augment_queue: no task can host an episode (need " +
                        std::to_string(min_per_label) + " examples per label)");

    std::vector<size_t> original_sizes;
    for (const TaskDataset& ds : queue.datasets) original_sizes.push_back(ds.size());
    std::vector<size_t> new_sizes;
    for (const TaskDataset& ds : capable) new_sizes.push_back(ds.size());

    TaskQueue out;
    out.tau = queue.tau;
    out.datasets = queue.datasets;
    out.datasets.insert(out.datasets.end(), capable.begin(), capable.end());
    const Vec64 p_old = queue_probabilities(original_sizes, queue.tau);
    const Vec64 p_new = queue_probabilities(new_sizes, queue.tau);
    for (double p : p_old) out.probabilities.push_back((1.0 - mixing) * p);
    for (double p : p_new) out.probabilities.push_back(mixing * p);
    return out;
}

}  // namespace xmeta
