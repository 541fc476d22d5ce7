#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "xmeta/corpus.hpp"
#include "xmeta/numerics.hpp"
#include "xmeta/rng.hpp"

namespace xmeta {

enum class Activation { kTanh, kRelu };
enum class ForwardMode { kTrain, kEval };

Activation activation_from_string(const std::string& s);
std::string to_string(Activation a);

struct EncoderConfig {
    size_t input_dim = 8;
    size_t hidden_dim = 32;
    size_t num_layers = 4;
    Activation activation = Activation::kTanh;
    double dropout_rate = 0.1;
    uint64_t seed = 1;

    void validate() const;
};

// Trace of one forward pass. `activations[l]` holds the post-activation,
// pre-dropout output of layer l; `masks[l]` the 0/1 dropout mask actually
// applied (empty in eval mode or when the rate is zero). Replaying the trace
// with its stored masks reproduces the outputs bit-exactly.
struct ForwardTrace {
    Mat64 input;
    std::vector<Mat64> activations;
    std::vector<Mat64> masks;
    Mat64 encoding;  // final layer output after dropout; the rows heads consume
    std::string head_tag;
    Mat64 logits;  // empty when no head was requested
    ForwardMode mode = ForwardMode::kEval;
    uint64_t model_version = 0;
};

// Upstream gradients fed into backward(): either or both of a gradient on the
// requested head's logits and a gradient on the final encoding.
struct BackwardSignal {
    std::optional<Mat64> logits_grad;
    std::optional<Mat64> encoding_grad;
};

// L-layer fully connected encoder plus one linear classification head per
// task tag. The flat parameter vector is ordered: for each encoder layer,
// weights row-major (fan_in x fan_out) then bias; then for each head in
// registration order, weights (hidden x classes) then bias. This ordering is
// the checkpoint layout and is stable across save/load.
class Model {
  public:
    Model(const EncoderConfig& config, Rng& rng);

    const EncoderConfig& config() const { return config_; }
    uint64_t version() const { return version_; }

    // Head registry -----------------------------------------------------------
    void register_head(const std::string& task_tag, size_t num_classes, Rng& rng);
    bool has_head(const std::string& task_tag) const;
    size_t head_classes(const std::string& task_tag) const;
    std::vector<std::string> head_tags() const;

    // Flat parameter view ------------------------------------------------------
    size_t param_count() const;
    size_t encoder_param_count() const;
    // Offset and length of one head's block inside the flat vector.
    std::pair<size_t, size_t> head_span(const std::string& task_tag) const;
    Vec64 flatten() const;
    void set_from_flat(const Vec64& flat);

    // Indices of the parameters an optimizer may touch when training the given
    // task: the whole encoder plus that task's head. Heads of other tasks stay
    // frozen.
    std::vector<size_t> active_indices(const std::string& task_tag) const;

    // Forward / backward ---------------------------------------------------------
    // Train mode applies inverted dropout using `rng`; eval mode is
    // deterministic and consumes no randomness. `head_tag` may be empty when
    // only encodings are needed.
    ForwardTrace forward(const Mat64& batch, const std::string& head_tag, ForwardMode mode,
                         Rng* rng = nullptr) const;
    ForwardTrace forward(std::span<const Example> batch, const std::string& head_tag,
                         ForwardMode mode, Rng* rng = nullptr) const;

    // Exact gradients under the trace's stored dropout masks, as a full-length
    // flat vector (zeros for untouched heads). The trace must come from this
    // model at its current version.
    Vec64 backward(const ForwardTrace& trace, const BackwardSignal& signal) const;

    // Recomputes the forward outputs from a trace's input and masks; used to
    // validate that traces capture everything the pass depended on.
    Mat64 replay_encoding(const ForwardTrace& trace) const;

    // Encodings for a batch in eval mode (no dropout, no rng).
    Mat64 encode(const Mat64& batch) const;

  private:
    struct Head {
        std::string tag;
        Mat64 weights;  // hidden_dim x classes
        Vec64 bias;
    };

    const Head& find_head(const std::string& tag) const;
    size_t head_index(const std::string& tag) const;

    EncoderConfig config_;
    std::vector<Mat64> weights_;  // layer l: fan_in x hidden
    std::vector<Vec64> biases_;
    std::vector<Head> heads_;
    uint64_t version_ = 0;
};

// Feature matrix (one row per example) for a batch.
Mat64 features_matrix(std::span<const Example> batch);

// Checkpoint container: magic "XMETAC01", little-endian u64 JSON header
// length, JSON header {encoder, heads, param_count}, then param_count raw
// little-endian doubles in flat order. Round-trips bit-exactly.
void save_checkpoint(const Model& model, const std::string& path);
Model load_checkpoint(const std::string& path);

}  // namespace xmeta
