#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "xmeta/corpus.hpp"
#include "xmeta/dreca.hpp"
#include "xmeta/metalearn.hpp"
#include "xmeta/model.hpp"

namespace xmeta {

struct DataConfig {
    std::optional<SyntheticSpec> synthetic;
    struct JsonlSource {
        std::string path;
        std::string labels;  // optional sidecar label file
    };
    std::vector<JsonlSource> files;
    struct TsvSource {
        std::string path;
        std::string labels;  // sidecar label file (required)
        std::string task;
        std::string language;
        bool has_header = false;
    };
    std::vector<TsvSource> tsv_files;
    std::string target_language;  // empty: the last dataset is the target
    std::array<double, 3> split_fractions{0.8, 0.1, 0.1};
    uint64_t split_seed = 1;
};

struct QueueConfig {
    double tau = 1.0;             // +inf accepted as "inf" in JSON
    bool include_target = false;  // put the target's train split into the queue
};

struct FinetunePlan {
    bool episodic = true;
    size_t iterations = 100;
    size_t epochs = 1;
    size_t eval_interval = 25;
};

enum class PrototypeSource { kAux, kTargetTrain };

struct EvalPlan {
    // Subset of {"zero_shot", "non_episodic_ft", "episodic_ft"}; evaluated in
    // this order, each from a fresh copy of the loaded checkpoint.
    std::vector<std::string> cells;
    EvalMethod method = EvalMethod::kHead;  // parse default depends on the regime
    bool method_set = false;                // whether the config pinned it
    PrototypeSource prototype_source = PrototypeSource::kAux;  // fine-tuned cells only
};

struct AnalysisPlan {
    size_t max_points = 128;  // probe rows per language
};

struct DrecaPlan {
    bool enabled = false;
    DrecaConfig config;
    double mixing = 0.5;
};

struct ExperimentConfig {
    uint64_t seed = 1;
    std::string out_dir;
    DataConfig data;
    EncoderConfig encoder;  // input_dim 0 means "infer from the data"
    QueueConfig queue;
    TrainConfig train;
    FinetunePlan finetune;
    EvalPlan eval;
    AnalysisPlan analysis;
    DrecaPlan dreca;
};

// Schema-validated parses: an unknown key anywhere is a ConfigError naming
// the key and its location.
ExperimentConfig parse_experiment_config(const std::string& json_text, const std::string& context);
ExperimentConfig load_experiment_config(const std::string& path);
SyntheticSpec parse_synthetic_spec(const std::string& json_text, const std::string& context);
SyntheticSpec load_synthetic_spec(const std::string& path);

// Fully explicit serializations (every knob present, stable key order), used
// for run-directory provenance; parsing them back yields the same config.
std::string serialize_experiment_config(const ExperimentConfig& config);
std::string serialize_synthetic_spec(const SyntheticSpec& spec);

// Effective output directory: the XMETA_OUT_DIR environment variable wins,
// then the --out flag, then the config value. Empty result is an error.
std::string resolve_out_dir(const std::string& config_value, const std::string& flag_value);

// Subcommand bodies. They throw (ConfigError / DataError / NumericError) on
// failure; the CLI maps exceptions to exit codes. Commands that train remove
// the output files they created when they fail partway.
void cmd_gen_data(const SyntheticSpec& spec, const std::string& out_dir);
void cmd_train(const ExperimentConfig& config, const std::string& out_dir);
void cmd_finetune(const ExperimentConfig& config, const std::string& checkpoint_path,
                  const std::string& out_dir);
void cmd_eval(const ExperimentConfig& config, const std::string& checkpoint_path,
              const std::string& out_dir);
void cmd_analyze(const ExperimentConfig& config, const std::string& checkpoint_after,
                 const std::string& checkpoint_before, const std::string& out_dir);
void cmd_dreca(const ExperimentConfig& config, const std::string& checkpoint_path,
               const std::string& out_dir);

}  // namespace xmeta
