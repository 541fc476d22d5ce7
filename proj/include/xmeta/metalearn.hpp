#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "xmeta/corpus.hpp"
#include "xmeta/episodes.hpp"
#include "xmeta/metrics.hpp"
#include "xmeta/model.hpp"
#include "xmeta/numerics.hpp"
#include "xmeta/rng.hpp"

namespace xmeta {

enum class Regime { kReptile, kMaml, kProtonet, kNonEpisodic };

Regime regime_from_string(const std::string& s);
std::string to_string(Regime r);

struct ReptileConfig {
    size_t inner_steps = 3;        // m
    AdamWParams inner_adamw{};     // lr defaults to 1e-5
    double outer_step = 0.5;       // beta
    bool outer_step_decay = true;  // linear decay of beta to 0 over the run
    size_t tasks_per_update = 4;
    void validate() const;
};

struct MamlConfig {
    double inner_lr = 0.01;  // alpha, plain SGD
    double outer_lr = 0.001; // beta
    size_t inner_steps = 1;
    size_t tasks_per_update = 4;
    void validate() const;
};

struct ProtoConfig {
    double lambda_dce = 1.0;  // weight of the distance-based term
    double lambda_ce = 1.0;   // weight of the auxiliary softmax-head term
    AdamWParams adamw{};
    void validate() const;
};

struct NonEpisodicConfig {
    size_t batch_size = 16;
    AdamWParams adamw{};
    void validate() const;
};

// Shape of training episodes. way 0 means "regime default" (3 for the
// prototypical learner, otherwise 2); query_per_class 0 means "same as shot"
// (except for the reptile learner, whose episodes are support-only). Both are
// filled in by TrainConfig::resolve().
struct EpisodePlan {
    size_t way = 0;
    size_t shot = 1;
    size_t query_per_class = 0;
    Scenario scenario = Scenario::kAuxOnly;
    double target_fraction = 1.0 / 3.0;
};

struct TrainConfig {
    Regime regime = Regime::kReptile;
    size_t iterations = 20000;  // per epoch
    size_t epochs = 2;
    size_t eval_interval = 100;
    EpisodePlan episode;
    ReptileConfig reptile;
    MamlConfig maml;
    ProtoConfig proto;
    NonEpisodicConfig non_episodic;

    size_t total_iterations() const { return iterations * epochs; }
    // Applies the regime-dependent defaults described on EpisodePlan and
    // validates the learner config in use.
    void resolve();
};

// One task-adapted parameter vector: `inner_steps` AdamW steps of mean
// cross-entropy on the episode's support set, starting from the model's
// current parameters. The model itself is untouched; only the encoder and the
// episode task's head are adapted. dropout_rng may be null when the encoder
// has dropout 0 or for eval-mode adaptation.
Vec64 reptile_inner(const Model& model, const Episode& episode, size_t inner_steps,
                    const AdamWParams& hp, Rng* dropout_rng);

// theta <- theta + beta * mean_i(adapted[i] - theta), exactly.
void reptile_outer(Vec64& theta, const std::vector<Vec64>& adapted, double beta);

// First-order meta-gradient step. Per episode, from the same starting
// parameters: inner_steps plain SGD steps on the support loss reach
// theta_hat; the query-loss gradient at theta_hat is then treated as the
// gradient with respect to the starting parameters. The model moves by
// -outer_lr times the sum of the episodes' query gradients.
void maml_step(Model& model, const std::vector<Episode>& episodes, const MamlConfig& config,
               Rng* dropout_rng);

// Class means of the given encodings, in input order.
std::vector<Vec64> prototypes(const std::vector<Mat64>& encodings_by_class);

// softmax over negated squared Euclidean distances to each prototype.
Vec64 proto_classify(const Vec64& query_encoding, const std::vector<Vec64>& protos);

struct ProtoLoss {
    double loss = 0.0;  // lambda_dce * dce + lambda_ce * ce
    double dce = 0.0;   // mean over queries of -log p(true class | distances)
    double ce = 0.0;    // mean softmax-head cross-entropy over support + query
    Vec64 gradient;     // full-length flat gradient
};

// One forward pass over support + query; prototypes come from the support
// rows. The gradient is exact under the pass's dropout masks and reaches the
// support encodings through the prototypes.
ProtoLoss proto_episode_loss(const Model& model, const Episode& episode, double lambda_dce,
                             double lambda_ce, Rng* dropout_rng);

enum class EvalMethod { kHead, kPrototype };

// Head method: argmax of the test task's head logits. Prototype method:
// class means of prototype_source's encodings, nearest-prototype rule. Both
// run in eval mode. Confusion rows are true labels.
EvalResult evaluate(const Model& model, const TaskDataset& test, EvalMethod method,
                    const TaskDataset* prototype_source = nullptr);

// Mean query accuracy over `episodes` freshly built N-way K-shot episodes:
// prototypes from each episode's support, eval mode throughout.
double mean_episode_accuracy(const Model& model, const TaskDataset& source, size_t way,
                             size_t shot, size_t query_per_class, size_t episodes, Rng& rng);

// Meta-training / training loop. Samples tasks from the queue per its cached
// probabilities, builds episodes (or batches, for the non-episodic regime),
// and applies the configured learner. scenario_target supplies the
// mixed-query episodes' target pool when the plan asks for them; dev, when
// given, provides the evaluation split for the periodic metrics rows and the
// final confusion matrix. Throws NumericError as soon as any loss or
// parameter goes non-finite.
RunMetrics train(Model& model, const TaskQueue& queue, const TrainConfig& config,
                 const TaskDataset* scenario_target, const TaskDataset* dev, Rng& rng);

// Fine-tuning on one target dataset. Episodic mode keeps config.regime's
// learner (single-task queue); non-episodic mode runs plain AdamW
// cross-entropy batches regardless of the meta-training regime.
RunMetrics finetune(Model& model, const TaskDataset& target, bool episodic, TrainConfig config,
                    const TaskDataset* dev, Rng& rng);

}  // namespace xmeta
