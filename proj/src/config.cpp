#include "xmeta/config.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "xmeta/errors.hpp"

namespace xmeta {
namespace {

using nlohmann::json;
using nlohmann::ordered_json;

std::string slurp_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config file " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Object wrapper that records which keys were consumed; done() rejects the
// rest, so typos surface as errors instead of silently falling back to
// defaults.
class JsonReader {
public:
    JsonReader(const json& node, std::string path) : node_(&node), path_(std::move(path)) {
        if (!node_->is_object()) throw ConfigError(path_ + ": expected an object");
    }

    bool has(const std::string& key) const { return node_->contains(key); }

    const json& raw(const std::string& key) {
        seen_.insert(key);
        return node_->at(key);
    }

    uint64_t u64(const std::string& key, uint64_t fallback) {
        if (!has(key)) return fallback;
        const json& v = raw(key);
        if (v.is_number_unsigned()) return v.get<uint64_t>();
        if (v.is_number_integer() && v.get<int64_t>() >= 0)
            return static_cast<uint64_t>(v.get<int64_t>());
        throw ConfigError(at(key) + ": expected a non-negative integer");
    }

    size_t size(const std::string& key, size_t fallback) {
        return static_cast<size_t>(u64(key, fallback));
    }

    double number(const std::string& key, double fallback) {
        if (!has(key)) return fallback;
        const json& v = raw(key);
        if (!v.is_number()) throw ConfigError(at(key) + ": expected a number");
        return v.get<double>();
    }

    // A number, or the string "inf".
    double extended_number(const std::string& key, double fallback) {
        if (!has(key)) return fallback;
        const json& v = raw(key);
        if (v.is_string() && v.get<std::string>() == "inf")
            return std::numeric_limits<double>::infinity();
        if (v.is_number()) return v.get<double>();
        throw ConfigError(at(key) + ": expected a number or \"inf\"");
    }

    bool boolean(const std::string& key, bool fallback) {
        if (!has(key)) return fallback;
        const json& v = raw(key);
        if (!v.is_boolean()) throw ConfigError(at(key) + ": expected a boolean");
        return v.get<bool>();
    }

    std::string str(const std::string& key, const std::string& fallback) {
        if (!has(key)) return fallback;
        const json& v = raw(key);
        if (!v.is_string()) throw ConfigError(at(key) + ": expected a string");
        return v.get<std::string>();
    }

    std::string require_str(const std::string& key) {
        if (!has(key)) throw ConfigError(at(key) + ": missing required key");
        return str(key, "");
    }

    JsonReader object(const std::string& key) {
        const json& v = raw(key);
        return JsonReader(v, at(key));
    }

    std::vector<JsonReader> object_array(const std::string& key) {
        const json& v = raw(key);
        if (!v.is_array()) throw ConfigError(at(key) + ": expected an array");
        std::vector<JsonReader> out;
        for (size_t i = 0; i < v.size(); ++i)
            out.emplace_back(v[i], at(key) + "[" + std::to_string(i) + "]");
        return out;
    }

    std::vector<std::string> string_array(const std::string& key) {
        const json& v = raw(key);
        if (!v.is_array()) throw ConfigError(at(key) + ": expected an array of strings");
        std::vector<std::string> out;
        for (const json& e : v) {
            if (!e.is_string()) throw ConfigError(at(key) + ": expected an array of strings");
            out.push_back(e.get<std::string>());
        }
        return out;
    }

    std::array<double, 3> fractions(const std::string& key, const std::array<double, 3>& fallback) {
        if (!has(key)) return fallback;
        const json& v = raw(key);
        if (!v.is_array() || v.size() != 3)
            throw ConfigError(at(key) + ": expected an array of 3 numbers");
        std::array<double, 3> out{};
        for (size_t i = 0; i < 3; ++i) {
            if (!v[i].is_number()) throw ConfigError(at(key) + ": expected an array of 3 numbers");
            out[i] = v[i].get<double>();
        }
        return out;
    }

    void done() const {
        for (const auto& item : node_->items()) {
            if (!seen_.count(item.key()))
                throw ConfigError(path_ + ": unknown key \"" + item.key() + "\"");
        }
    }

private:
    std::string at(const std::string& key) const { return path_ + "." + key; }

    const json* node_;
    std::string path_;
    std::set<std::string> seen_;
};

EvalMethod eval_method_from_string(const std::string& s) {
    if (s == "head") return EvalMethod::kHead;
    if (s == "prototype") return EvalMethod::kPrototype;
    throw ConfigError("unknown eval method \"" + s + "\" (expected head or prototype)");
}

std::string to_string(EvalMethod m) {
    return m == EvalMethod::kHead ? "head" : "prototype";
}

PrototypeSource prototype_source_from_string(const std::string& s) {
    if (s == "aux") return PrototypeSource::kAux;
    if (s == "target_train") return PrototypeSource::kTargetTrain;
    throw ConfigError("unknown prototype source \"" + s + "\" (expected aux or target_train)");
}

std::string to_string(PrototypeSource s) {
    return s == PrototypeSource::kAux ? "aux" : "target_train";
}

SyntheticSpec parse_synthetic(JsonReader& r) {
    SyntheticSpec s;
    s.task = r.str("task", s.task);
    s.num_labels = r.size("num_labels", s.num_labels);
    s.feature_dim = r.size("feature_dim", s.feature_dim);
    s.num_languages = r.size("num_languages", s.num_languages);
    s.examples_per_label = r.size("examples_per_label", s.examples_per_label);
    s.clusters_per_label = r.size("clusters_per_label", s.clusters_per_label);
    s.separation = r.number("separation", s.separation);
    s.cluster_separation = r.number("cluster_separation", s.cluster_separation);
    s.noise = r.number("noise", s.noise);
    s.language_shift = r.number("language_shift", s.language_shift);
    s.seed = r.u64("seed", s.seed);
    r.done();
    s.validate();
    return s;
}

AdamWParams parse_adamw(JsonReader r, const AdamWParams& defaults) {
    AdamWParams p = defaults;
    p.lr = r.number("lr", p.lr);
    p.beta1 = r.number("beta1", p.beta1);
    p.beta2 = r.number("beta2", p.beta2);
    p.eps = r.number("eps", p.eps);
    p.weight_decay = r.number("weight_decay", p.weight_decay);
    r.done();
    return p;
}

DataConfig parse_data(JsonReader& r) {
    DataConfig d;
    if (r.has("synthetic")) {
        JsonReader s = r.object("synthetic");
        d.synthetic = parse_synthetic(s);
    }
    if (r.has("files")) {
        for (JsonReader& f : r.object_array("files")) {
            DataConfig::JsonlSource src;
            src.path = f.require_str("path");
            src.labels = f.str("labels", "");
            f.done();
            d.files.push_back(std::move(src));
        }
    }
    if (r.has("tsv_files")) {
        for (JsonReader& f : r.object_array("tsv_files")) {
            DataConfig::TsvSource src;
            src.path = f.require_str("path");
            src.labels = f.require_str("labels");
            src.task = f.require_str("task");
            src.language = f.require_str("language");
            src.has_header = f.boolean("has_header", false);
            f.done();
            d.tsv_files.push_back(std::move(src));
        }
    }
    d.target_language = r.str("target_language", "");
    d.split_fractions = r.fractions("split_fractions", d.split_fractions);
    d.split_seed = r.u64("split_seed", d.split_seed);
    r.done();
    bool has_files = !d.files.empty() || !d.tsv_files.empty();
    if (d.synthetic.has_value() && has_files)
        throw ConfigError("data: synthetic and file sources are mutually exclusive");
    if (!d.synthetic.has_value() && !has_files)
        throw ConfigError("data: no source (need synthetic, files, or tsv_files)");
    return d;
}

EncoderConfig parse_encoder(JsonReader& r) {
    EncoderConfig e;
    e.input_dim = r.size("input_dim", 0);  // 0: infer from the data
    e.hidden_dim = r.size("hidden_dim", e.hidden_dim);
    e.num_layers = r.size("num_layers", e.num_layers);
    if (r.has("activation")) e.activation = activation_from_string(r.str("activation", ""));
    e.dropout_rate = r.number("dropout_rate", e.dropout_rate);
    e.seed = r.u64("seed", e.seed);
    r.done();
    return e;
}

TrainConfig parse_train(JsonReader& r) {
    TrainConfig t;
    if (r.has("regime")) t.regime = regime_from_string(r.str("regime", ""));
    t.iterations = r.size("iterations", t.iterations);
    t.epochs = r.size("epochs", t.epochs);
    t.eval_interval = r.size("eval_interval", t.eval_interval);
    if (r.has("episode")) {
        JsonReader e = r.object("episode");
        t.episode.way = e.size("way", t.episode.way);
        t.episode.shot = e.size("shot", t.episode.shot);
        t.episode.query_per_class = e.size("query_per_class", t.episode.query_per_class);
        if (e.has("scenario")) t.episode.scenario = scenario_from_string(e.str("scenario", ""));
        t.episode.target_fraction = e.number("target_fraction", t.episode.target_fraction);
        e.done();
    }
    if (r.has("reptile")) {
        JsonReader c = r.object("reptile");
        t.reptile.inner_steps = c.size("inner_steps", t.reptile.inner_steps);
        if (c.has("adamw")) t.reptile.inner_adamw = parse_adamw(c.object("adamw"), t.reptile.inner_adamw);
        t.reptile.outer_step = c.number("outer_step", t.reptile.outer_step);
        t.reptile.outer_step_decay = c.boolean("outer_step_decay", t.reptile.outer_step_decay);
        t.reptile.tasks_per_update = c.size("tasks_per_update", t.reptile.tasks_per_update);
        c.done();
    }
    if (r.has("maml")) {
        JsonReader c = r.object("maml");
        t.maml.inner_lr = c.number("inner_lr", t.maml.inner_lr);
        t.maml.outer_lr = c.number("outer_lr", t.maml.outer_lr);
        t.maml.inner_steps = c.size("inner_steps", t.maml.inner_steps);
        t.maml.tasks_per_update = c.size("tasks_per_update", t.maml.tasks_per_update);
        c.done();
    }
    if (r.has("proto")) {
        JsonReader c = r.object("proto");
        t.proto.lambda_dce = c.number("lambda_dce", t.proto.lambda_dce);
        t.proto.lambda_ce = c.number("lambda_ce", t.proto.lambda_ce);
        if (c.has("adamw")) t.proto.adamw = parse_adamw(c.object("adamw"), t.proto.adamw);
        c.done();
    }
    if (r.has("non_episodic")) {
        JsonReader c = r.object("non_episodic");
        t.non_episodic.batch_size = c.size("batch_size", t.non_episodic.batch_size);
        if (c.has("adamw"))
            t.non_episodic.adamw = parse_adamw(c.object("adamw"), t.non_episodic.adamw);
        c.done();
    }
    r.done();
    return t;
}

ExperimentConfig parse_root(const json& root, const std::string& context) {
    JsonReader r(root, context);
    ExperimentConfig c;
    c.seed = r.u64("seed", c.seed);
    c.out_dir = r.str("out_dir", "");
    if (!r.has("data")) throw ConfigError(context + ".data: missing required key");
    {
        JsonReader d = r.object("data");
        c.data = parse_data(d);
    }
    if (r.has("encoder")) {
        JsonReader e = r.object("encoder");
        c.encoder = parse_encoder(e);
    } else {
        c.encoder.input_dim = 0;
    }
    if (r.has("queue")) {
        JsonReader q = r.object("queue");
        c.queue.tau = q.extended_number("tau", c.queue.tau);
        c.queue.include_target = q.boolean("include_target", c.queue.include_target);
        q.done();
    }
    if (r.has("train")) {
        JsonReader t = r.object("train");
        c.train = parse_train(t);
    }
    if (r.has("finetune")) {
        JsonReader f = r.object("finetune");
        c.finetune.episodic = f.boolean("episodic", c.finetune.episodic);
        c.finetune.iterations = f.size("iterations", c.finetune.iterations);
        c.finetune.epochs = f.size("epochs", c.finetune.epochs);
        c.finetune.eval_interval = f.size("eval_interval", c.finetune.eval_interval);
        f.done();
    }
    if (r.has("eval")) {
        JsonReader e = r.object("eval");
        if (e.has("cells")) {
            c.eval.cells = e.string_array("cells");
            std::set<std::string> seen;
            for (const std::string& cell : c.eval.cells) {
                if (cell != "zero_shot" && cell != "non_episodic_ft" && cell != "episodic_ft")
                    throw ConfigError("eval.cells: unknown cell \"" + cell + "\"");
                if (!seen.insert(cell).second)
                    throw ConfigError("eval.cells: duplicate cell \"" + cell + "\"");
            }
        }
        if (e.has("method")) {
            c.eval.method = eval_method_from_string(e.str("method", ""));
            c.eval.method_set = true;
        }
        if (e.has("prototype_source"))
            c.eval.prototype_source = prototype_source_from_string(e.str("prototype_source", ""));
        e.done();
    }
    if (r.has("analysis")) {
        JsonReader a = r.object("analysis");
        c.analysis.max_points = a.size("max_points", c.analysis.max_points);
        a.done();
        if (c.analysis.max_points == 0) throw ConfigError("analysis.max_points: must be positive");
    }
    if (r.has("dreca")) {
        JsonReader d = r.object("dreca");
        c.dreca.enabled = d.boolean("enabled", c.dreca.enabled);
        c.dreca.config.clusters_per_label =
            d.size("clusters_per_label", c.dreca.config.clusters_per_label);
        c.dreca.config.use_encoder = d.boolean("use_encoder", c.dreca.config.use_encoder);
        c.dreca.config.restarts = d.size("restarts", c.dreca.config.restarts);
        c.dreca.config.max_iterations = d.size("max_iterations", c.dreca.config.max_iterations);
        c.dreca.config.tolerance = d.number("tolerance", c.dreca.config.tolerance);
        c.dreca.mixing = d.number("mixing", c.dreca.mixing);
        d.done();
        c.dreca.config.validate();
    }
    r.done();

    if (!c.eval.method_set) {
        c.eval.method =
            c.train.regime == Regime::kProtonet ? EvalMethod::kPrototype : EvalMethod::kHead;
        c.eval.method_set = true;
    }
    c.train.resolve();
    return c;
}

json parse_json_text(const std::string& text, const std::string& context) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(context + ": " + e.what());
    }
}

ordered_json adamw_json(const AdamWParams& p) {
    ordered_json j;
    j["lr"] = p.lr;
    j["beta1"] = p.beta1;
    j["beta2"] = p.beta2;
    j["eps"] = p.eps;
    j["weight_decay"] = p.weight_decay;
    return j;
}

ordered_json synthetic_json(const SyntheticSpec& s) {
    ordered_json j;
    j["task"] = s.task;
    j["num_labels"] = s.num_labels;
    j["feature_dim"] = s.feature_dim;
    j["num_languages"] = s.num_languages;
    j["examples_per_label"] = s.examples_per_label;
    j["clusters_per_label"] = s.clusters_per_label;
    j["separation"] = s.separation;
    j["cluster_separation"] = s.cluster_separation;
    j["noise"] = s.noise;
    j["language_shift"] = s.language_shift;
    j["seed"] = s.seed;
    return j;
}

}  // namespace

ExperimentConfig parse_experiment_config(const std::string& json_text, const std::string& context) {
    return parse_root(parse_json_text(json_text, context), context);
}

ExperimentConfig load_experiment_config(const std::string& path) {
    return parse_experiment_config(slurp_config(path), path);
}

SyntheticSpec parse_synthetic_spec(const std::string& json_text, const std::string& context) {
    json root = parse_json_text(json_text, context);
    JsonReader r(root, context);
    return parse_synthetic(r);
}

SyntheticSpec load_synthetic_spec(const std::string& path) {
    return parse_synthetic_spec(slurp_config(path), path);
}

std::string serialize_synthetic_spec(const SyntheticSpec& spec) {
    return synthetic_json(spec).dump(2) + "\n";
}

std::string serialize_experiment_config(const ExperimentConfig& config) {
    ordered_json j;
    j["seed"] = config.seed;
    j["out_dir"] = config.out_dir;

    ordered_json data;
    if (config.data.synthetic.has_value()) data["synthetic"] = synthetic_json(*config.data.synthetic);
    if (!config.data.files.empty()) {
        ordered_json files = ordered_json::array();
        for (const auto& f : config.data.files) {
            ordered_json e;
            e["path"] = f.path;
            if (!f.labels.empty()) e["labels"] = f.labels;
            files.push_back(e);
        }
        data["files"] = files;
    }
    if (!config.data.tsv_files.empty()) {
        ordered_json files = ordered_json::array();
        for (const auto& f : config.data.tsv_files) {
            ordered_json e;
            e["path"] = f.path;
            e["labels"] = f.labels;
            e["task"] = f.task;
            e["language"] = f.language;
            e["has_header"] = f.has_header;
            files.push_back(e);
        }
        data["tsv_files"] = files;
    }
    data["target_language"] = config.data.target_language;
    data["split_fractions"] = config.data.split_fractions;
    data["split_seed"] = config.data.split_seed;
    j["data"] = data;

    ordered_json enc;
    enc["input_dim"] = config.encoder.input_dim;
    enc["hidden_dim"] = config.encoder.hidden_dim;
    enc["num_layers"] = config.encoder.num_layers;
    enc["activation"] = to_string(config.encoder.activation);
    enc["dropout_rate"] = config.encoder.dropout_rate;
    enc["seed"] = config.encoder.seed;
    j["encoder"] = enc;

    ordered_json queue;
    if (std::isinf(config.queue.tau))
        queue["tau"] = "inf";
    else
        queue["tau"] = config.queue.tau;
    queue["include_target"] = config.queue.include_target;
    j["queue"] = queue;

    ordered_json train;
    train["regime"] = to_string(config.train.regime);
    train["iterations"] = config.train.iterations;
    train["epochs"] = config.train.epochs;
    train["eval_interval"] = config.train.eval_interval;
    ordered_json episode;
    episode["way"] = config.train.episode.way;
    episode["shot"] = config.train.episode.shot;
    episode["query_per_class"] = config.train.episode.query_per_class;
    episode["scenario"] = to_string(config.train.episode.scenario);
    episode["target_fraction"] = config.train.episode.target_fraction;
    train["episode"] = episode;
    ordered_json reptile;
    reptile["inner_steps"] = config.train.reptile.inner_steps;
    reptile["adamw"] = adamw_json(config.train.reptile.inner_adamw);
    reptile["outer_step"] = config.train.reptile.outer_step;
    reptile["outer_step_decay"] = config.train.reptile.outer_step_decay;
    reptile["tasks_per_update"] = config.train.reptile.tasks_per_update;
    train["reptile"] = reptile;
    ordered_json maml;
    maml["inner_lr"] = config.train.maml.inner_lr;
    maml["outer_lr"] = config.train.maml.outer_lr;
    maml["inner_steps"] = config.train.maml.inner_steps;
    maml["tasks_per_update"] = config.train.maml.tasks_per_update;
    train["maml"] = maml;
    ordered_json proto;
    proto["lambda_dce"] = config.train.proto.lambda_dce;
    proto["lambda_ce"] = config.train.proto.lambda_ce;
    proto["adamw"] = adamw_json(config.train.proto.adamw);
    train["proto"] = proto;
    ordered_json nonep;
    nonep["batch_size"] = config.train.non_episodic.batch_size;
    nonep["adamw"] = adamw_json(config.train.non_episodic.adamw);
    train["non_episodic"] = nonep;
    j["train"] = train;

    ordered_json ft;
    ft["episodic"] = config.finetune.episodic;
    ft["iterations"] = config.finetune.iterations;
    ft["epochs"] = config.finetune.epochs;
    ft["eval_interval"] = config.finetune.eval_interval;
    j["finetune"] = ft;

    ordered_json ev;
    ev["cells"] = config.eval.cells;
    ev["method"] = to_string(config.eval.method);
    ev["prototype_source"] = to_string(config.eval.prototype_source);
    j["eval"] = ev;

    ordered_json analysis;
    analysis["max_points"] = config.analysis.max_points;
    j["analysis"] = analysis;

    ordered_json dreca;
    dreca["enabled"] = config.dreca.enabled;
    dreca["clusters_per_label"] = config.dreca.config.clusters_per_label;
    dreca["use_encoder"] = config.dreca.config.use_encoder;
    dreca["restarts"] = config.dreca.config.restarts;
    dreca["max_iterations"] = config.dreca.config.max_iterations;
    dreca["tolerance"] = config.dreca.config.tolerance;
    dreca["mixing"] = config.dreca.mixing;
    j["dreca"] = dreca;

    return j.dump(2) + "\n";
}

std::string resolve_out_dir(const std::string& config_value, const std::string& flag_value) {
    const char* env = std::getenv("XMETA_OUT_DIR");
    if (env != nullptr && *env != '\0') return env;
    if (!flag_value.empty()) return flag_value;
    if (!config_value.empty()) return config_value;
    throw ConfigError(
        "no output directory: set XMETA_OUT_DIR, pass --out, or set out_dir in the config");
}

}  // namespace xmeta
