#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include "json.hpp"
#include "xmeta/analysis.hpp"
#include "xmeta/config.hpp"
#include "xmeta/errors.hpp"
#include "xmeta/metrics.hpp"

namespace xmeta {
namespace {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw DataError("cannot create directory " + dir + ": " + ec.message());
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open " + path + " for writing");
    out << content;
    if (!out) throw DataError("write failed: " + path);
}

// Deletes the files registered with track() unless disarmed, so a command
// that fails partway does not leave a half-written run directory.
class OutputGuard {
  public:
    OutputGuard() = default;
    OutputGuard(const OutputGuard&) = delete;
    OutputGuard& operator=(const OutputGuard&) = delete;
    ~OutputGuard() {
        if (!armed_) return;
        for (const std::string& p : files_) {
            std::error_code ec;
            fs::remove(p, ec);
        }
    }

    std::string track(std::string path) {
        files_.push_back(path);
        return path;
    }
    void disarm() { armed_ = false; }

  private:
    std::vector<std::string> files_;
    bool armed_ = true;
};

struct Prepared {
    std::vector<TaskDataset> datasets;
    std::vector<SplitResult> splits;  // parallel to datasets
    size_t target_index = 0;
    std::vector<size_t> aux_indices;
    size_t feature_dim = 0;

    const SplitResult& target() const { return splits[target_index]; }
};

std::vector<TaskDataset> load_datasets(const DataConfig& data) {
    std::vector<TaskDataset> out;
    if (data.synthetic.has_value()) out = generate_synthetic(*data.synthetic);
    for (const auto& f : data.files) {
        std::optional<std::vector<std::string>> labels;
        if (!f.labels.empty()) labels = load_label_file(f.labels);
        out.push_back(load_jsonl(f.path, labels));
    }
    for (const auto& f : data.tsv_files)
        out.push_back(load_tsv_pairs(f.path, f.labels, f.task, f.language, f.has_header));
    return out;
}

Prepared prepare(const ExperimentConfig& config) {
    Prepared p;
    p.datasets = load_datasets(config.data);
    if (p.datasets.empty()) throw ConfigError("data: no datasets loaded");
    p.feature_dim = p.datasets.front().feature_dim();
    for (const TaskDataset& d : p.datasets) {
        if (d.feature_dim() != p.feature_dim)
            throw DataError("dataset " + d.name + ": feature dimension " +
                            std::to_string(d.feature_dim()) + " differs from " +
                            std::to_string(p.feature_dim));
    }
    if (config.data.target_language.empty()) {
        p.target_index = p.datasets.size() - 1;
    } else {
        std::vector<size_t> matches;
        for (size_t i = 0; i < p.datasets.size(); ++i)
            if (p.datasets[i].language == config.data.target_language) matches.push_back(i);
        if (matches.empty())
            throw ConfigError("data.target_language: no dataset has language \"" +
                              config.data.target_language + "\"");
        if (matches.size() > 1)
            throw ConfigError("data.target_language: " + std::to_string(matches.size()) +
                              " datasets have language \"" + config.data.target_language + "\"");
        p.target_index = matches.front();
    }
    for (size_t i = 0; i < p.datasets.size(); ++i)
        if (i != p.target_index) p.aux_indices.push_back(i);
    p.splits.reserve(p.datasets.size());
    for (const TaskDataset& d : p.datasets)
        p.splits.push_back(split(d, config.data.split_fractions, config.data.split_seed));
    return p;
}

EncoderConfig resolved_encoder(const ExperimentConfig& config, size_t feature_dim) {
    EncoderConfig enc = config.encoder;
    if (enc.input_dim == 0) enc.input_dim = feature_dim;
    if (enc.input_dim != feature_dim)
        throw ConfigError("encoder.input_dim " + std::to_string(enc.input_dim) +
                          " does not match the data feature dimension " +
                          std::to_string(feature_dim));
    enc.validate();
    return enc;
}

// Distinct task tags in dataset order, with their label counts.
std::vector<std::pair<std::string, size_t>> task_heads(const std::vector<TaskDataset>& datasets) {
    std::vector<std::pair<std::string, size_t>> out;
    std::map<std::string, size_t> seen;
    for (const TaskDataset& d : datasets) {
        auto it = seen.find(d.task);
        if (it == seen.end()) {
            seen.emplace(d.task, d.num_labels());
            out.emplace_back(d.task, d.num_labels());
        } else if (it->second != d.num_labels()) {
            throw DataError("task " + d.task + ": label count differs across datasets");
        }
    }
    return out;
}

Model build_model(const EncoderConfig& enc, const std::vector<TaskDataset>& datasets, Rng& rng) {
    Model model(enc, rng);
    for (const auto& [tag, classes] : task_heads(datasets)) model.register_head(tag, classes, rng);
    return model;
}

std::vector<TaskDataset> queue_datasets(const Prepared& p, bool include_target) {
    std::vector<TaskDataset> out;
    for (size_t i : p.aux_indices) out.push_back(p.splits[i].train);
    if (include_target) out.push_back(p.target().train);
    if (out.empty())
        throw ConfigError("queue: empty (single dataset and queue.include_target is false)");
    return out;
}

TaskQueue build_queue(const ExperimentConfig& config, const Prepared& p, const Model& model) {
    TaskQueue queue = make_queue(queue_datasets(p, config.queue.include_target), config.queue.tau);
    if (config.dreca.enabled && config.dreca.mixing > 0.0) {
        const Model* encoder = config.dreca.config.use_encoder ? &model : nullptr;
        const Rng dreca_rng = Rng(config.seed).split(14);
        std::vector<TaskDataset> generated;
        for (size_t g = 0; g < queue.datasets.size(); ++g) {
            const TaskDataset& parent = queue.datasets[g];
            const Rng parent_rng = dreca_rng.split(g);
            const auto groups = cluster_dataset(parent, encoder, config.dreca.config, parent_rng);
            for (const DrecaTask& task : enumerate_tasks(groups, parent.name))
                generated.push_back(dreca_task_dataset(parent, task));
        }
        const size_t min_per_label =
            config.train.episode.shot + config.train.episode.query_per_class;
        queue = augment_queue(queue, generated, config.dreca.mixing, min_per_label);
    }
    return queue;
}

TrainConfig finetune_config(const ExperimentConfig& config) {
    TrainConfig ft = config.train;
    ft.iterations = config.finetune.iterations;
    ft.epochs = config.finetune.epochs;
    ft.eval_interval = config.finetune.eval_interval;
    return ft;
}

// Auxiliary train examples pooled into one dataset (prototype source for
// zero-shot evaluation). Task/language strings are rewritten so the pool
// validates as a single dataset.
TaskDataset pooled_aux(const Prepared& p, const TaskDataset& like) {
    TaskDataset pool;
    pool.name = "aux-pool";
    pool.task = like.task;
    pool.language = "aux-pool";
    pool.label_names = like.label_names;
    for (size_t i : p.aux_indices) {
        const TaskDataset& d = p.splits[i].train;
        if (d.label_names != like.label_names)
            throw DataError("dataset " + d.name +
                            ": label set differs from the target; cannot pool prototypes");
        for (Example ex : d.examples) {
            ex.task = pool.task;
            ex.language = pool.language;
            pool.examples.push_back(std::move(ex));
        }
    }
    if (pool.examples.empty()) throw DataError("no auxiliary examples to pool prototypes from");
    pool.validate();
    return pool;
}

ordered_json confusion_json(const ConfusionMatrix& m) {
    ordered_json rows = ordered_json::array();
    for (size_t t = 0; t < m.num_labels; ++t) {
        ordered_json row = ordered_json::array();
        for (size_t q = 0; q < m.num_labels; ++q) row.push_back(m.at(t, q));
        rows.push_back(row);
    }
    return rows;
}

// First max_points examples of a dataset, as a probe for representation
// analysis.
TaskDataset probe_of(const TaskDataset& d, size_t max_points) {
    if (d.size() <= max_points) return d;
    TaskDataset out = d;
    out.examples.resize(max_points);
    return out;
}

std::string csv_join(std::initializer_list<std::string> cells) {
    std::string line;
    for (const std::string& c : cells) {
        if (!line.empty()) line += ",";
        line += c;
    }
    return line + "\n";
}

}  // namespace

void cmd_gen_data(const SyntheticSpec& spec, const std::string& out_dir) {
    ensure_dir(out_dir);
    OutputGuard guard;
    const std::vector<TaskDataset> datasets = generate_synthetic(spec);
    for (const TaskDataset& d : datasets)
        save_jsonl(d, guard.track(out_dir + "/" + d.name + ".jsonl"));
    std::string labels;
    for (const std::string& name : datasets.front().label_names) labels += name + "\n";
    write_text_file(guard.track(out_dir + "/labels.txt"), labels);
    write_text_file(guard.track(out_dir + "/spec.resolved.json"), serialize_synthetic_spec(spec));
    guard.disarm();
}

void cmd_train(const ExperimentConfig& config, const std::string& out_dir) {
    ensure_dir(out_dir);
    OutputGuard guard;
    const Prepared p = prepare(config);

    ExperimentConfig resolved = config;
    resolved.encoder = resolved_encoder(config, p.feature_dim);
    write_text_file(guard.track(out_dir + "/config.resolved.json"),
                    serialize_experiment_config(resolved));

    Rng init_rng = Rng(config.seed).split(10);
    Model model = build_model(resolved.encoder, p.datasets, init_rng);
    const TaskQueue queue = build_queue(resolved, p, model);

    Rng train_rng = Rng(config.seed).split(11);
    const RunMetrics metrics =
        train(model, queue, resolved.train, &p.target().train, &p.target().dev, train_rng);

    save_checkpoint(model, guard.track(out_dir + "/checkpoint.bin"));
    write_metrics_csv(metrics, guard.track(out_dir + "/metrics.csv"));
    write_metrics_summary(metrics, guard.track(out_dir + "/summary.json"));
    guard.disarm();
}

void cmd_finetune(const ExperimentConfig& config, const std::string& checkpoint_path,
                  const std::string& out_dir) {
    ensure_dir(out_dir);
    OutputGuard guard;
    const Prepared p = prepare(config);

    Model model = load_checkpoint(checkpoint_path);
    if (model.config().input_dim != p.feature_dim)
        throw ConfigError("checkpoint input dimension " +
                          std::to_string(model.config().input_dim) +
                          " does not match the data feature dimension " +
                          std::to_string(p.feature_dim));

    ExperimentConfig resolved = config;
    resolved.encoder = model.config();
    write_text_file(guard.track(out_dir + "/config.resolved.json"),
                    serialize_experiment_config(resolved));

    Rng rng = Rng(config.seed).split(12);
    const RunMetrics metrics = finetune(model, p.target().train, config.finetune.episodic,
                                        finetune_config(resolved), &p.target().dev, rng);

    save_checkpoint(model, guard.track(out_dir + "/checkpoint.bin"));
    write_metrics_csv(metrics, guard.track(out_dir + "/metrics.csv"));
    write_metrics_summary(metrics, guard.track(out_dir + "/summary.json"));
    guard.disarm();
}

void cmd_eval(const ExperimentConfig& config, const std::string& checkpoint_path,
              const std::string& out_dir) {
    ensure_dir(out_dir);
    OutputGuard guard;
    const Prepared p = prepare(config);

    const Model base = load_checkpoint(checkpoint_path);
    if (base.config().input_dim != p.feature_dim)
        throw ConfigError("checkpoint input dimension " + std::to_string(base.config().input_dim) +
                          " does not match the data feature dimension " +
                          std::to_string(p.feature_dim));

    ExperimentConfig resolved = config;
    resolved.encoder = base.config();
    write_text_file(guard.track(out_dir + "/config.resolved.json"),
                    serialize_experiment_config(resolved));

    const TaskDataset& test = p.target().test;
    const TaskDataset& target_train = p.target().train;
    std::optional<TaskDataset> aux_pool;
    const auto aux_pool_ptr = [&]() -> const TaskDataset* {
        if (!aux_pool.has_value()) aux_pool = pooled_aux(p, test);
        return &*aux_pool;
    };

    ordered_json cells = ordered_json::object();
    for (size_t i = 0; i < resolved.eval.cells.size(); ++i) {
        const std::string& cell = resolved.eval.cells[i];
        Model model = base;
        Rng rng = Rng(config.seed).split(20 + i);
        const bool tuned = cell != "zero_shot";

        ordered_json entry;
        if (tuned) {
            const RunMetrics ft = finetune(model, target_train, cell == "episodic_ft",
                                           finetune_config(resolved), nullptr, rng);
            entry["finetune_final_loss"] = ft.final_loss;
        }

        const TaskDataset* proto_source = nullptr;
        if (resolved.eval.method == EvalMethod::kPrototype) {
            if (!tuned || resolved.eval.prototype_source == PrototypeSource::kAux)
                proto_source = aux_pool_ptr();
            else
                proto_source = &target_train;
        }
        const EvalResult r = evaluate(model, test, resolved.eval.method, proto_source);
        entry["accuracy"] = r.accuracy;
        entry["confusion"] = confusion_json(r.confusion);
        cells[cell] = entry;
    }

    ordered_json grid;
    grid["task"] = test.task;
    grid["target_language"] = test.language;
    grid["method"] = resolved.eval.method == EvalMethod::kHead ? "head" : "prototype";
    grid["test_examples"] = test.size();
    grid["cells"] = cells;
    write_text_file(guard.track(out_dir + "/grid.json"), grid.dump(2) + "\n");
    guard.disarm();
}

void cmd_analyze(const ExperimentConfig& config, const std::string& checkpoint_after,
                 const std::string& checkpoint_before, const std::string& out_dir) {
    ensure_dir(out_dir);
    OutputGuard guard;
    const Prepared p = prepare(config);

    const Model after = load_checkpoint(checkpoint_after);
    if (after.config().input_dim != p.feature_dim)
        throw ConfigError("checkpoint input dimension " + std::to_string(after.config().input_dim) +
                          " does not match the data feature dimension " +
                          std::to_string(p.feature_dim));
    const Model before =
        checkpoint_before.empty() ? after : load_checkpoint(checkpoint_before);

    ExperimentConfig resolved = config;
    resolved.encoder = after.config();
    write_text_file(guard.track(out_dir + "/config.resolved.json"),
                    serialize_experiment_config(resolved));

    std::vector<TaskDataset> probes;
    probes.reserve(p.datasets.size());
    for (const SplitResult& s : p.splits)
        probes.push_back(probe_of(s.test, config.analysis.max_points));

    // Set labels: languages when unique, dataset names otherwise.
    std::set<std::string> languages;
    bool unique = true;
    for (const TaskDataset& d : probes) unique = languages.insert(d.language).second && unique;
    const auto set_label = [&](const TaskDataset& d) { return unique ? d.language : d.name; };

    std::vector<RepresentationSet> sets;
    sets.reserve(probes.size());
    for (const TaskDataset& d : probes)
        sets.push_back({set_label(d), after.encode(features_matrix(d.examples))});

    // Pooled two-component projection over every probe's encodings.
    size_t total_rows = 0;
    for (const RepresentationSet& s : sets) total_rows += s.rows.rows;
    Mat64 pooled(total_rows, sets.front().rows.cols);
    size_t at = 0;
    for (const RepresentationSet& s : sets)
        for (size_t r = 0; r < s.rows.rows; ++r) pooled.set_row(at++, s.rows.row(r));
    const Pca2Result pca = pca2(pooled);

    std::string pca_csv = csv_join({"id", "language", "x", "y"});
    at = 0;
    for (size_t si = 0; si < sets.size(); ++si) {
        for (const Example& ex : probes[si].examples) {
            pca_csv += csv_join({ex.id, sets[si].label, format_double(pca.coords(at, 0)),
                                 format_double(pca.coords(at, 1))});
            ++at;
        }
    }
    write_text_file(guard.track(out_dir + "/pca.csv"), pca_csv);

    const std::vector<double> profile =
        layer_cca_profile(before, after, probes[p.target_index]);
    std::string cca_csv = csv_join({"layer", "similarity"});
    for (size_t l = 0; l < profile.size(); ++l)
        cca_csv += csv_join({std::to_string(l), format_double(profile[l])});
    write_text_file(guard.track(out_dir + "/cca.csv"), cca_csv);

    std::string hd_csv = csv_join({"pair", "distance"});
    for (size_t i = 0; i < sets.size(); ++i)
        for (size_t j = i + 1; j < sets.size(); ++j)
            hd_csv += csv_join({sets[i].label + "|" + sets[j].label,
                                format_double(hausdorff(sets[i], sets[j]))});
    write_text_file(guard.track(out_dir + "/hausdorff.csv"), hd_csv);

    ordered_json summary;
    summary["pca_explained"] = pca.explained;
    summary["probe_points"] = total_rows;
    write_text_file(guard.track(out_dir + "/analysis.json"), summary.dump(2) + "\n");
    guard.disarm();
}

void cmd_dreca(const ExperimentConfig& config, const std::string& checkpoint_path,
               const std::string& out_dir) {
    ensure_dir(out_dir);
    OutputGuard guard;
    const Prepared p = prepare(config);

    std::optional<Model> loaded;
    const Model* encoder = nullptr;
    if (!checkpoint_path.empty() && config.dreca.config.use_encoder) {
        loaded = load_checkpoint(checkpoint_path);
        if (loaded->config().input_dim != p.feature_dim)
            throw ConfigError("checkpoint input dimension " +
                              std::to_string(loaded->config().input_dim) +
                              " does not match the data feature dimension " +
                              std::to_string(p.feature_dim));
        encoder = &*loaded;
    }

    ExperimentConfig resolved = config;
    if (loaded.has_value())
        resolved.encoder = loaded->config();
    else
        resolved.encoder = resolved_encoder(config, p.feature_dim);
    write_text_file(guard.track(out_dir + "/config.resolved.json"),
                    serialize_experiment_config(resolved));

    const std::vector<TaskDataset> parents = queue_datasets(p, config.queue.include_target);
    const Rng dreca_rng = Rng(config.seed).split(14);
    ordered_json entries = ordered_json::array();
    for (size_t g = 0; g < parents.size(); ++g) {
        const TaskDataset& parent = parents[g];
        const Rng parent_rng = dreca_rng.split(g);
        const auto groups = cluster_dataset(parent, encoder, config.dreca.config, parent_rng);
        ordered_json tasks = ordered_json::array();
        for (const DrecaTask& task : enumerate_tasks(groups, parent.name)) {
            ordered_json t;
            t["clusters"] = task.cluster_tuple;
            t["member_ids"] = task.member_ids;
            tasks.push_back(t);
        }
        ordered_json entry;
        entry["dataset"] = parent.name;
        entry["tasks"] = tasks;
        entries.push_back(entry);
    }
    ordered_json manifest;
    manifest["clusters_per_label"] = config.dreca.config.clusters_per_label;
    manifest["embedding"] = encoder != nullptr ? "encoder" : "features";
    manifest["datasets"] = entries;
    write_text_file(guard.track(out_dir + "/dreca.json"), manifest.dump(2) + "\n");
    guard.disarm();
}

}  // namespace xmeta
