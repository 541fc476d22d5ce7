#include "xmeta/metalearn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>

#include "xmeta/errors.hpp"

namespace xmeta {

Regime regime_from_string(const std::string& s) {
    if (s == "reptile") return Regime::kReptile;
    if (s == "maml") return Regime::kMaml;
    if (s == "protonet") return Regime::kProtonet;
    if (s == "non_episodic") return Regime::kNonEpisodic;
    throw ConfigError("unknown regime: " + s);
}

std::string to_string(Regime r) {
    switch (r) {
        case Regime::kReptile: return "reptile";
        case Regime::kMaml: return "maml";
        case Regime::kProtonet: return "protonet";
        case Regime::kNonEpisodic: return "non_episodic";
    }
    throw ConfigError("bad regime value");
}

void ReptileConfig::validate() const {
    if (inner_steps < 1) throw ConfigError("reptile: inner_steps must be >= 1");
    if (!(outer_step > 0.0 && outer_step <= 1.0))
        throw ConfigError("reptile: outer_step must be in (0, 1]");
    if (tasks_per_update < 1) throw ConfigError("reptile: tasks_per_update must be >= 1");
}

void MamlConfig::validate() const {
    if (!(inner_lr > 0.0)) throw ConfigError("maml: inner_lr must be positive");
    if (!(outer_lr > 0.0)) throw ConfigError("maml: outer_lr must be positive");
    if (inner_steps < 1) throw ConfigError("maml: inner_steps must be >= 1");
    if (tasks_per_update < 1) throw ConfigError("maml: tasks_per_update must be >= 1");
}

void ProtoConfig::validate() const {
    if (lambda_dce < 0.0 || lambda_ce < 0.0)
        throw ConfigError("protonet: loss weights must be non-negative");
    if (lambda_dce == 0.0 && lambda_ce == 0.0)
        throw ConfigError("protonet: loss weights must not both be zero");
}

void NonEpisodicConfig::validate() const {
    if (batch_size < 1) throw ConfigError("non_episodic: batch_size must be >= 1");
}

void TrainConfig::resolve() {
    if (eval_interval == 0) throw ConfigError("train: eval_interval must be positive");
    if (episode.way == 0) episode.way = regime == Regime::kProtonet ? 3 : 2;
    if (regime == Regime::kReptile) {
        episode.query_per_class = 0;  // support-only episodes
    } else if (episode.query_per_class == 0) {
        episode.query_per_class = episode.shot;
    }
    if (episode.shot < 1) throw ConfigError("train: shot must be >= 1");
    if (!(episode.target_fraction >= 0.0 && episode.target_fraction <= 1.0))
        throw ConfigError("train: target_fraction must be in [0, 1]");
    switch (regime) {
        case Regime::kReptile: reptile.validate(); break;
        case Regime::kMaml: maml.validate(); break;
        case Regime::kProtonet: proto.validate(); break;
        case Regime::kNonEpisodic: non_episodic.validate(); break;
    }
}

namespace {

std::vector<int> labels_of(const std::vector<Example>& part) {
    std::vector<int> labels;
    labels.reserve(part.size());
    for (const Example& ex : part) labels.push_back(ex.label);
    return labels;
}

struct CeOnLogits {
    double loss = 0.0;
    Mat64 grad;  // (softmax - onehot) / n
};

CeOnLogits ce_on_logits(const Mat64& logits, const std::vector<int>& labels) {
    if (logits.rows != labels.size()) throw ConfigError("ce_on_logits: label count mismatch");
    CeOnLogits out;
    out.grad = softmax_rows(logits);
    const double inv_n = 1.0 / static_cast<double>(logits.rows);
    for (size_t r = 0; r < logits.rows; ++r) {
        out.loss += cross_entropy(out.grad.row(r), labels[r]);
        for (size_t c = 0; c < logits.cols; ++c) out.grad(r, c) *= inv_n;
        out.grad(r, static_cast<size_t>(labels[r])) -= inv_n;
    }
    out.loss *= inv_n;
    return out;
}

Vec64 gather(const Vec64& full, const std::vector<size_t>& idx) {
    Vec64 sub(idx.size());
    for (size_t i = 0; i < idx.size(); ++i) sub[i] = full[idx[i]];
    return sub;
}

void scatter(Vec64& full, const std::vector<size_t>& idx, const Vec64& sub) {
    for (size_t i = 0; i < idx.size(); ++i) full[idx[i]] = sub[i];
}

// Mean support cross-entropy (eval mode) over a set of episodes; used as the
// recorded loss for learners whose step has no single scalar loss.
double support_ce(const Model& model, const std::vector<Episode>& episodes) {
    double total = 0.0;
    for (const Episode& ep : episodes) {
        const ForwardTrace trace =
            model.forward(std::span<const Example>(ep.support), ep.task_tag, ForwardMode::kEval);
        total += ce_on_logits(trace.logits, labels_of(ep.support)).loss;
    }
    return total / static_cast<double>(episodes.size());
}

double query_ce(const Model& model, const std::vector<Episode>& episodes) {
    double total = 0.0;
    for (const Episode& ep : episodes) {
        const ForwardTrace trace =
            model.forward(std::span<const Example>(ep.query), ep.task_tag, ForwardMode::kEval);
        total += ce_on_logits(trace.logits, labels_of(ep.query)).loss;
    }
    return total / static_cast<double>(episodes.size());
}

}  // namespace

Vec64 reptile_inner(const Model& model, const Episode& episode, size_t inner_steps,
                    const AdamWParams& hp, Rng* dropout_rng) {
    if (inner_steps < 1) throw ConfigError("reptile_inner: need at least one step");
    if (!model.has_head(episode.task_tag))
        throw ConfigError("reptile_inner: no head registered for task " + episode.task_tag);
    if (episode.support.empty()) throw ConfigError("reptile_inner: empty support set");

    Model work = model;
    const std::vector<size_t> idx = work.active_indices(episode.task_tag);
    const std::vector<int> labels = labels_of(episode.support);
    AdamWState state(idx.size(), hp);
    Vec64 flat = work.flatten();
    for (size_t step = 0; step < inner_steps; ++step) {
        const ForwardTrace trace = work.forward(std::span<const Example>(episode.support),
                                                episode.task_tag, ForwardMode::kTrain, dropout_rng);
        const CeOnLogits ce = ce_on_logits(trace.logits, labels);
        if (!std::isfinite(ce.loss)) throw NumericError("reptile_inner: non-finite loss");
        const Vec64 grad = work.backward(trace, {.logits_grad = ce.grad, .encoding_grad = {}});
        Vec64 sub_params = gather(flat, idx);
        const Vec64 sub_grad = gather(grad, idx);
        adamw_step(sub_params, sub_grad, state);
        scatter(flat, idx, sub_params);
        work.set_from_flat(flat);
    }
    return flat;
}

void reptile_outer(Vec64& theta, const std::vector<Vec64>& adapted, double beta) {
    if (adapted.empty()) throw ConfigError("reptile_outer: no adapted parameter vectors");
    for (const Vec64& a : adapted)
        if (a.size() != theta.size()) throw ConfigError("reptile_outer: length mismatch");
    const double scale = beta / static_cast<double>(adapted.size());
    for (size_t j = 0; j < theta.size(); ++j) {
        double delta = 0.0;
        for (const Vec64& a : adapted) delta += a[j] - theta[j];
        theta[j] += scale * delta;
    }
}

void maml_step(Model& model, const std::vector<Episode>& episodes, const MamlConfig& config,
               Rng* dropout_rng) {
    config.validate();
    if (episodes.empty()) throw ConfigError("maml_step: no episodes");

    const Vec64 theta0 = model.flatten();
    Vec64 outer_sum(theta0.size(), 0.0);
    Model work = model;
    for (const Episode& ep : episodes) {
        if (ep.query.empty()) throw ConfigError("maml_step: episode has an empty query set");
        if (!model.has_head(ep.task_tag))
            throw ConfigError("maml_step: no head registered for task " + ep.task_tag);
        work.set_from_flat(theta0);
        for (size_t step = 0; step < config.inner_steps; ++step) {
            const ForwardTrace trace = work.forward(std::span<const Example>(ep.support),
                                                    ep.task_tag, ForwardMode::kTrain, dropout_rng);
            const CeOnLogits ce = ce_on_logits(trace.logits, labels_of(ep.support));
            if (!std::isfinite(ce.loss)) throw NumericError("maml_step: non-finite inner loss");
            const Vec64 grad = work.backward(trace, {.logits_grad = ce.grad, .encoding_grad = {}});
            Vec64 flat = work.flatten();
            axpy(-config.inner_lr, grad, flat);
            work.set_from_flat(flat);
        }
        const ForwardTrace trace = work.forward(std::span<const Example>(ep.query), ep.task_tag,
                                                ForwardMode::kTrain, dropout_rng);
        const CeOnLogits ce = ce_on_logits(trace.logits, labels_of(ep.query));
        if (!std::isfinite(ce.loss)) throw NumericError("maml_step: non-finite query loss");
        const Vec64 grad = work.backward(trace, {.logits_grad = ce.grad, .encoding_grad = {}});
        axpy(1.0, grad, outer_sum);
    }
    Vec64 theta = theta0;
    axpy(-config.outer_lr, outer_sum, theta);
    model.set_from_flat(theta);
}

std::vector<Vec64> prototypes(const std::vector<Mat64>& encodings_by_class) {
    if (encodings_by_class.empty()) throw ConfigError("prototypes: no classes");
    std::vector<Vec64> protos;
    protos.reserve(encodings_by_class.size());
    for (const Mat64& m : encodings_by_class) {
        if (m.rows == 0) throw DataError("prototypes: a class has no encodings");
        protos.push_back(col_means(m));
    }
    return protos;
}

Vec64 proto_classify(const Vec64& query_encoding, const std::vector<Vec64>& protos) {
    if (protos.size() < 2) throw ConfigError("proto_classify: need at least 2 prototypes");
    Vec64 scores(protos.size());
    for (size_t c = 0; c < protos.size(); ++c) {
        if (protos[c].size() != query_encoding.size())
            throw ConfigError("proto_classify: dimension mismatch");
        scores[c] = -squared_distance(query_encoding, protos[c]);
    }
    return softmax(scores);
}

ProtoLoss proto_episode_loss(const Model& model, const Episode& episode, double lambda_dce,
                             double lambda_ce, Rng* dropout_rng) {
    if (lambda_dce < 0.0 || lambda_ce < 0.0)
        throw ConfigError("proto_episode_loss: loss weights must be non-negative");
    if (lambda_dce == 0.0 && lambda_ce == 0.0)
        throw ConfigError("proto_episode_loss: loss weights must not both be zero");
    episode.validate();
    if (episode.query.empty()) throw ConfigError("proto_episode_loss: empty query set");
    if (!model.has_head(episode.task_tag))
        throw ConfigError("proto_episode_loss: no head registered for task " + episode.task_tag);

    std::vector<Example> combined = episode.support;
    combined.insert(combined.end(), episode.query.begin(), episode.query.end());
    const ForwardTrace trace = model.forward(std::span<const Example>(combined), episode.task_tag,
                                             ForwardMode::kTrain, dropout_rng);
    const size_t ns = episode.support.size();
    const size_t nq = episode.query.size();
    const size_t hid = model.config().hidden_dim;

    // Position of each label id within the episode's class list.
    std::map<int, size_t> class_pos;
    for (size_t c = 0; c < episode.classes.size(); ++c) class_pos[episode.classes[c]] = c;

    // Prototypes from the support rows of this pass's encodings.
    std::vector<Vec64> protos(episode.way, Vec64(hid, 0.0));
    std::vector<double> counts(episode.way, 0.0);
    for (size_t s = 0; s < ns; ++s) {
        const size_t c = class_pos.at(episode.support[s].label);
        axpy(1.0, trace.encoding.row(s), protos[c]);
        counts[c] += 1.0;
    }
    for (size_t c = 0; c < episode.way; ++c) scale(protos[c], 1.0 / counts[c]);

    ProtoLoss result;
    Mat64 enc_grad(ns + nq, hid);
    std::vector<Vec64> proto_grad(episode.way, Vec64(hid, 0.0));
    const double query_scale = lambda_dce / static_cast<double>(nq);
    for (size_t q = 0; q < nq; ++q) {
        const Vec64 e = trace.encoding.row(ns + q);
        Vec64 scores(episode.way);
        for (size_t c = 0; c < episode.way; ++c) scores[c] = -squared_distance(e, protos[c]);
        const Vec64 p = softmax(scores);
        const size_t y = class_pos.at(episode.query[q].label);
        result.dce += cross_entropy(p, static_cast<int>(y));
        if (lambda_dce > 0.0) {
            for (size_t c = 0; c < episode.way; ++c) {
                // d(-log p_y)/d(dist_c) = 1{c=y} - p_c; dist = |e - mu_c|^2.
                const double g = ((c == y ? 1.0 : 0.0) - p[c]) * query_scale;
                for (size_t j = 0; j < hid; ++j) {
                    const double diff = 2.0 * (e[j] - protos[c][j]);
                    enc_grad(ns + q, j) += g * diff;
                    proto_grad[c][j] -= g * diff;
                }
            }
        }
    }
    result.dce /= static_cast<double>(nq);
    // Prototypes are support-class means: spread their gradient evenly.
    if (lambda_dce > 0.0) {
        for (size_t s = 0; s < ns; ++s) {
            const size_t c = class_pos.at(episode.support[s].label);
            for (size_t j = 0; j < hid; ++j)
                enc_grad(s, j) += proto_grad[c][j] / counts[c];
        }
    }

    const CeOnLogits ce = ce_on_logits(trace.logits, labels_of(combined));
    result.ce = ce.loss;
    result.loss = lambda_dce * result.dce + lambda_ce * result.ce;
    if (!std::isfinite(result.loss)) throw NumericError("proto_episode_loss: non-finite loss");

    BackwardSignal signal;
    if (lambda_ce > 0.0) {
        Mat64 lg = ce.grad;
        for (double& v : lg.data) v *= lambda_ce;
        signal.logits_grad = std::move(lg);
    }
    if (lambda_dce > 0.0) signal.encoding_grad = std::move(enc_grad);
    result.gradient = model.backward(trace, signal);
    return result;
}

EvalResult evaluate(const Model& model, const TaskDataset& test, EvalMethod method,
                    const TaskDataset* prototype_source) {
    test.validate();
    EvalResult result;
    result.confusion = ConfusionMatrix(test.num_labels());

    std::vector<int> predictions;
    predictions.reserve(test.size());
    if (method == EvalMethod::kHead) {
        if (!model.has_head(test.task))
            throw ConfigError("evaluate: no head registered for task " + test.task);
        if (model.head_classes(test.task) != test.num_labels())
            throw ConfigError("evaluate: head has " +
                              std::to_string(model.head_classes(test.task)) +
                              " classes, dataset has " + std::to_string(test.num_labels()));
        const ForwardTrace trace =
            model.forward(std::span<const Example>(test.examples), test.task, ForwardMode::kEval);
        for (size_t r = 0; r < trace.logits.rows; ++r) {
            size_t best = 0;
            for (size_t c = 1; c < trace.logits.cols; ++c)
                if (trace.logits(r, c) > trace.logits(r, best)) best = c;
            predictions.push_back(static_cast<int>(best));
        }
    } else {
        if (prototype_source == nullptr)
            throw ConfigError("evaluate: prototype method needs a prototype_source dataset");
        prototype_source->validate();
        if (prototype_source->label_names != test.label_names)
            throw DataError("evaluate: prototype_source label set differs from the test set's");
        const Mat64 source_enc =
            model.encode(features_matrix(std::span<const Example>(prototype_source->examples)));
        std::vector<Mat64> by_class;
        for (const std::vector<size_t>& group : prototype_source->by_label()) {
            if (group.empty())
                throw DataError("evaluate: prototype_source is missing a label's examples");
            Mat64 m(group.size(), source_enc.cols);
            for (size_t i = 0; i < group.size(); ++i) m.set_row(i, source_enc.row(group[i]));
            by_class.push_back(std::move(m));
        }
        const std::vector<Vec64> protos = prototypes(by_class);
        const Mat64 test_enc =
            model.encode(features_matrix(std::span<const Example>(test.examples)));
        for (size_t r = 0; r < test_enc.rows; ++r) {
            const Vec64 p = proto_classify(test_enc.row(r), protos);
            size_t best = 0;
            for (size_t c = 1; c < p.size(); ++c)
                if (p[c] > p[best]) best = c;
            predictions.push_back(static_cast<int>(best));
        }
    }

    for (size_t i = 0; i < test.size(); ++i)
        ++result.confusion.at(static_cast<size_t>(test.examples[i].label),
                              static_cast<size_t>(predictions[i]));
    result.accuracy = result.confusion.accuracy();
    return result;
}

double mean_episode_accuracy(const Model& model, const TaskDataset& source, size_t way,
                             size_t shot, size_t query_per_class, size_t episodes, Rng& rng) {
    if (episodes < 1) throw ConfigError("mean_episode_accuracy: need at least one episode");
    if (query_per_class < 1) throw ConfigError("mean_episode_accuracy: need a query set");
    size_t correct = 0;
    size_t total = 0;
    for (size_t e = 0; e < episodes; ++e) {
        const Episode ep = build_episode(source, way, shot, query_per_class, rng);
        std::map<int, size_t> class_pos;
        for (size_t c = 0; c < ep.classes.size(); ++c) class_pos[ep.classes[c]] = c;

        const Mat64 support_enc =
            model.encode(features_matrix(std::span<const Example>(ep.support)));
        std::vector<Vec64> protos(way, Vec64(support_enc.cols, 0.0));
        std::vector<double> counts(way, 0.0);
        for (size_t s = 0; s < ep.support.size(); ++s) {
            const size_t c = class_pos.at(ep.support[s].label);
            axpy(1.0, support_enc.row(s), protos[c]);
            counts[c] += 1.0;
        }
        for (size_t c = 0; c < way; ++c) scale(protos[c], 1.0 / counts[c]);

        const Mat64 query_enc = model.encode(features_matrix(std::span<const Example>(ep.query)));
        for (size_t q = 0; q < ep.query.size(); ++q) {
            const Vec64 p = proto_classify(query_enc.row(q), protos);
            size_t best = 0;
            for (size_t c = 1; c < p.size(); ++c)
                if (p[c] > p[best]) best = c;
            correct += best == class_pos.at(ep.query[q].label) ? 1 : 0;
            ++total;
        }
    }
    return static_cast<double>(correct) / static_cast<double>(total);
}

RunMetrics train(Model& model, const TaskQueue& queue, const TrainConfig& config_in,
                 const TaskDataset* scenario_target, const TaskDataset* dev, Rng& rng) {
    TrainConfig cfg = config_in;
    cfg.resolve();
    if (queue.datasets.empty()) throw ConfigError("train: empty queue");
    for (const TaskDataset& ds : queue.datasets)
        if (!model.has_head(ds.task))
            throw ConfigError("train: no head registered for task " + ds.task);
    const bool uses_queries = cfg.regime == Regime::kMaml || cfg.regime == Regime::kProtonet;
    if (uses_queries && cfg.episode.scenario == Scenario::kAuxSupportMixedQuery &&
        scenario_target == nullptr)
        throw ConfigError("train: mixed-query episodes need a target dataset");

    RunMetrics metrics;
    const size_t T = cfg.total_iterations();
    const EpisodePlan& plan = cfg.episode;

    std::map<std::string, AdamWState> opt_states;
    auto slice_step = [&](const std::string& tag, const Vec64& full_grad,
                          const AdamWParams& hp) {
        const std::vector<size_t> idx = model.active_indices(tag);
        auto it = opt_states.find(tag);
        if (it == opt_states.end())
            it = opt_states.emplace(tag, AdamWState(idx.size(), hp)).first;
        Vec64 flat = model.flatten();
        Vec64 sub_params = gather(flat, idx);
        const Vec64 sub_grad = gather(full_grad, idx);
        adamw_step(sub_params, sub_grad, it->second);
        scatter(flat, idx, sub_params);
        model.set_from_flat(flat);
    };

    // Non-episodic regime: one flat pool over the queue, reshuffled per pass.
    std::vector<std::pair<size_t, size_t>> pool;  // (dataset, example)
    std::vector<size_t> pool_order;
    size_t pool_cursor = 0;
    if (cfg.regime == Regime::kNonEpisodic) {
        for (const TaskDataset& ds : queue.datasets)
            if (ds.task != queue.datasets[0].task)
                throw ConfigError("train: non-episodic regime needs a single task tag");
        for (size_t d = 0; d < queue.datasets.size(); ++d)
            for (size_t i = 0; i < queue.datasets[d].size(); ++i) pool.emplace_back(d, i);
    }

    auto build_training_episode = [&](size_t dataset_index, size_t query_per_class) {
        const TaskDataset& ds = queue.datasets[dataset_index];
        if (uses_queries && plan.scenario == Scenario::kAuxSupportMixedQuery)
            return build_episode({&ds}, plan.way, plan.shot, query_per_class, plan.scenario,
                                 scenario_target, plan.target_fraction, rng);
        return build_episode(ds, plan.way, plan.shot, query_per_class, rng);
    };

    auto dev_accuracy = [&](uint64_t stream) -> double {
        if (dev == nullptr) return std::numeric_limits<double>::quiet_NaN();
        if (cfg.regime == Regime::kProtonet) {
            Rng eval_rng = rng.split(stream);
            const size_t q = std::max<size_t>(plan.query_per_class, 1);
            return mean_episode_accuracy(model, *dev, plan.way, plan.shot, q, 8, eval_rng);
        }
        return evaluate(model, *dev, EvalMethod::kHead).accuracy;
    };

    double last_loss = std::numeric_limits<double>::quiet_NaN();
    for (size_t t = 1; t <= T; ++t) {
        const bool record = t % cfg.eval_interval == 0;
        switch (cfg.regime) {
            case Regime::kReptile: {
                const ReptileConfig& rc = cfg.reptile;
                std::vector<Episode> episodes;
                episodes.reserve(rc.tasks_per_update);
                for (size_t i = 0; i < rc.tasks_per_update; ++i)
                    episodes.push_back(build_training_episode(sample_task(queue, rng), 0));
                if (record) last_loss = support_ce(model, episodes);
                std::vector<Vec64> adapted;
                adapted.reserve(episodes.size());
                for (const Episode& ep : episodes)
                    adapted.push_back(
                        reptile_inner(model, ep, rc.inner_steps, rc.inner_adamw, &rng));
                const double beta =
                    rc.outer_step_decay
                        ? rc.outer_step * (1.0 - static_cast<double>(t - 1) / static_cast<double>(T))
                        : rc.outer_step;
                Vec64 theta = model.flatten();
                reptile_outer(theta, adapted, beta);
                check_finite(theta, "train: parameters");
                model.set_from_flat(theta);
                break;
            }
            case Regime::kMaml: {
                const MamlConfig& mc = cfg.maml;
                std::vector<Episode> episodes;
                episodes.reserve(mc.tasks_per_update);
                for (size_t i = 0; i < mc.tasks_per_update; ++i)
                    episodes.push_back(
                        build_training_episode(sample_task(queue, rng), plan.query_per_class));
                if (record) last_loss = query_ce(model, episodes);
                maml_step(model, episodes, mc, &rng);
                check_finite(model.flatten(), "train: parameters");
                break;
            }
            case Regime::kProtonet: {
                const Episode ep =
                    build_training_episode(sample_task(queue, rng), plan.query_per_class);
                const ProtoLoss pl =
                    proto_episode_loss(model, ep, cfg.proto.lambda_dce, cfg.proto.lambda_ce, &rng);
                slice_step(ep.task_tag, pl.gradient, cfg.proto.adamw);
                last_loss = pl.loss;
                break;
            }
            case Regime::kNonEpisodic: {
                if (pool_cursor + 1 > pool_order.size()) {
                    pool_order = rng.permutation(pool.size());
                    pool_cursor = 0;
                }
                const size_t take = std::min(cfg.non_episodic.batch_size,
                                             pool_order.size() - pool_cursor);
                std::vector<Example> batch;
                batch.reserve(take);
                for (size_t i = 0; i < take; ++i, ++pool_cursor) {
                    const auto [d, e] = pool[pool_order[pool_cursor]];
                    batch.push_back(queue.datasets[d].examples[e]);
                }
                const std::string& tag = queue.datasets[0].task;
                const ForwardTrace trace = model.forward(std::span<const Example>(batch), tag,
                                                         ForwardMode::kTrain, &rng);
                const CeOnLogits ce = ce_on_logits(trace.logits, labels_of(batch));
                if (!std::isfinite(ce.loss)) throw NumericError("train: non-finite batch loss");
                const Vec64 grad =
                    model.backward(trace, {.logits_grad = ce.grad, .encoding_grad = {}});
                slice_step(tag, grad, cfg.non_episodic.adamw);
                last_loss = ce.loss;
                break;
            }
        }
        if (record) {
            check_finite(model.flatten(), "train: parameters");
            metrics.rows.push_back({t, last_loss, dev_accuracy(0xEA100000ull + t)});
        }
    }

    metrics.final_loss = last_loss;
    if (dev != nullptr && T > 0) {
        EvalResult final_eval;
        if (cfg.regime == Regime::kProtonet) {
            // Progress summary only: dev self-prototypes; the experiment grid
            // evaluates with an explicit prototype source instead.
            final_eval = evaluate(model, *dev, EvalMethod::kPrototype, dev);
        } else {
            final_eval = evaluate(model, *dev, EvalMethod::kHead);
        }
        metrics.final_accuracy = final_eval.accuracy;
        metrics.final_confusion = final_eval.confusion;
    } else {
        metrics.final_accuracy = std::numeric_limits<double>::quiet_NaN();
    }
    return metrics;
}

RunMetrics finetune(Model& model, const TaskDataset& target, bool episodic, TrainConfig config,
                    const TaskDataset* dev, Rng& rng) {
    target.validate();
    if (!episodic) {
        config.regime = Regime::kNonEpisodic;
    } else if (config.regime == Regime::kNonEpisodic) {
        throw ConfigError("finetune: episodic mode needs an episodic training regime");
    }
    config.episode.scenario = Scenario::kAuxOnly;
    if (!model.has_head(target.task))
        model.register_head(target.task, target.num_labels(), rng);
    const TaskQueue queue = make_queue({target}, 1.0);
    return train(model, queue, config, nullptr, dev, rng);
}

}  // namespace xmeta
