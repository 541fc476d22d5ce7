#include "xmeta/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "xmeta/errors.hpp"

namespace xmeta {

Activation activation_from_string(const std::string& s) {
    if (s == "tanh") return Activation::kTanh;
    if (s == "relu") return Activation::kRelu;
    throw ConfigError("unknown activation: " + s);
}

std::string to_string(Activation a) {
    return a == Activation::kTanh ? "tanh" : "relu";
}

void EncoderConfig::validate() const {
    if (input_dim == 0) throw ConfigError("encoder: input_dim must be positive");
    if (hidden_dim == 0) throw ConfigError("encoder: hidden_dim must be positive");
    if (num_layers == 0) throw ConfigError("encoder: num_layers must be positive");
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0))
        throw ConfigError("encoder: dropout_rate must be in [0, 1)");
}

namespace {

// Uniform init on (-1/sqrt(fan_in), 1/sqrt(fan_in)), drawn row by row so the
// layout of the draw matches the row-major storage.
Mat64 init_weights(size_t fan_in, size_t fan_out, Rng& rng) {
    Mat64 w(fan_in, fan_out);
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (double& v : w.data) v = rng.next_uniform(-bound, bound);
    return w;
}

void apply_activation(Mat64& z, Activation act) {
    if (act == Activation::kTanh) {
        for (double& v : z.data) v = std::tanh(v);
    } else {
        for (double& v : z.data) v = v > 0.0 ? v : 0.0;
    }
}

}  // namespace

Model::Model(const EncoderConfig& config, Rng& rng) : config_(config) {
    config_.validate();
    weights_.reserve(config_.num_layers);
    biases_.reserve(config_.num_layers);
    for (size_t l = 0; l < config_.num_layers; ++l) {
        const size_t fan_in = l == 0 ? config_.input_dim : config_.hidden_dim;
        weights_.push_back(init_weights(fan_in, config_.hidden_dim, rng));
        biases_.push_back(Vec64(config_.hidden_dim, 0.0));
    }
}

void Model::register_head(const std::string& task_tag, size_t num_classes, Rng& rng) {
    if (task_tag.empty()) throw ConfigError("register_head: empty task tag");
    if (num_classes < 2) throw ConfigError("register_head: need at least 2 classes");
    if (has_head(task_tag)) throw ConfigError("register_head: duplicate tag " + task_tag);
    Head h;
    h.tag = task_tag;
    h.weights = init_weights(config_.hidden_dim, num_classes, rng);
    h.bias = Vec64(num_classes, 0.0);
    heads_.push_back(std::move(h));
    ++version_;
}

bool Model::has_head(const std::string& task_tag) const {
    return std::any_of(heads_.begin(), heads_.end(),
                       [&](const Head& h) { return h.tag == task_tag; });
}

size_t Model::head_classes(const std::string& task_tag) const {
    return find_head(task_tag).bias.size();
}

std::vector<std::string> Model::head_tags() const {
    std::vector<std::string> tags;
    tags.reserve(heads_.size());
    for (const Head& h : heads_) tags.push_back(h.tag);
    return tags;
}

const Model::Head& Model::find_head(const std::string& tag) const {
    for (const Head& h : heads_)
        if (h.tag == tag) return h;
    throw ConfigError("unknown task head: " + tag);
}

size_t Model::head_index(const std::string& tag) const {
    for (size_t i = 0; i < heads_.size(); ++i)
        if (heads_[i].tag == tag) return i;
    throw ConfigError("unknown task head: " + tag);
}

size_t Model::encoder_param_count() const {
    size_t n = 0;
    for (size_t l = 0; l < weights_.size(); ++l)
        n += weights_[l].data.size() + biases_[l].size();
    return n;
}

size_t Model::param_count() const {
    size_t n = encoder_param_count();
    for (const Head& h : heads_) n += h.weights.data.size() + h.bias.size();
    return n;
}

std::pair<size_t, size_t> Model::head_span(const std::string& task_tag) const {
    size_t offset = encoder_param_count();
    for (const Head& h : heads_) {
        const size_t len = h.weights.data.size() + h.bias.size();
        if (h.tag == task_tag) return {offset, len};
        offset += len;
    }
    throw ConfigError("unknown task head: " + task_tag);
}

Vec64 Model::flatten() const {
    Vec64 flat;
    flat.reserve(param_count());
    for (size_t l = 0; l < weights_.size(); ++l) {
        flat.insert(flat.end(), weights_[l].data.begin(), weights_[l].data.end());
        flat.insert(flat.end(), biases_[l].begin(), biases_[l].end());
    }
    for (const Head& h : heads_) {
        flat.insert(flat.end(), h.weights.data.begin(), h.weights.data.end());
        flat.insert(flat.end(), h.bias.begin(), h.bias.end());
    }
    return flat;
}

void Model::set_from_flat(const Vec64& flat) {
    if (flat.size() != param_count())
        throw ConfigError("set_from_flat: expected " + std::to_string(param_count()) +
                          " parameters, got " + std::to_string(flat.size()));
    size_t pos = 0;
    for (size_t l = 0; l < weights_.size(); ++l) {
        std::copy_n(flat.begin() + pos, weights_[l].data.size(), weights_[l].data.begin());
        pos += weights_[l].data.size();
        std::copy_n(flat.begin() + pos, biases_[l].size(), biases_[l].begin());
        pos += biases_[l].size();
    }
    for (Head& h : heads_) {
        std::copy_n(flat.begin() + pos, h.weights.data.size(), h.weights.data.begin());
        pos += h.weights.data.size();
        std::copy_n(flat.begin() + pos, h.bias.size(), h.bias.begin());
        pos += h.bias.size();
    }
    ++version_;
}

std::vector<size_t> Model::active_indices(const std::string& task_tag) const {
    std::vector<size_t> idx;
    const size_t enc = encoder_param_count();
    const auto [off, len] = head_span(task_tag);
    idx.reserve(enc + len);
    for (size_t i = 0; i < enc; ++i) idx.push_back(i);
    for (size_t i = 0; i < len; ++i) idx.push_back(off + i);
    return idx;
}

Mat64 features_matrix(std::span<const Example> batch) {
    if (batch.empty()) throw DataError("features_matrix: empty batch");
    const size_t dim = batch[0].features.size();
    Mat64 m(batch.size(), dim);
    for (size_t i = 0; i < batch.size(); ++i) {
        if (batch[i].features.size() != dim)
            throw DataError("features_matrix: inconsistent feature dims");
        m.set_row(i, batch[i].features);
    }
    return m;
}

ForwardTrace Model::forward(std::span<const Example> batch, const std::string& head_tag,
                            ForwardMode mode, Rng* rng) const {
    return forward(features_matrix(batch), head_tag, mode, rng);
}

ForwardTrace Model::forward(const Mat64& batch, const std::string& head_tag, ForwardMode mode,
                            Rng* rng) const {
    if (batch.cols != config_.input_dim)
        throw DataError("forward: batch has " + std::to_string(batch.cols) +
                        " features, model expects " + std::to_string(config_.input_dim));
    check_finite(batch, "forward input");
    const bool use_dropout = mode == ForwardMode::kTrain && config_.dropout_rate > 0.0;
    if (use_dropout && rng == nullptr)
        throw ConfigError("forward: train mode with dropout requires an rng");

    ForwardTrace trace;
    trace.input = batch;
    trace.mode = mode;
    trace.head_tag = head_tag;
    trace.model_version = version_;
    trace.activations.reserve(config_.num_layers);
    trace.masks.reserve(config_.num_layers);

    const double keep = 1.0 - config_.dropout_rate;
    Mat64 h = batch;
    for (size_t l = 0; l < config_.num_layers; ++l) {
        Mat64 z = matmul(h, weights_[l]);
        for (size_t r = 0; r < z.rows; ++r)
            for (size_t c = 0; c < z.cols; ++c) z(r, c) += biases_[l][c];
        apply_activation(z, config_.activation);
        trace.activations.push_back(z);
        if (use_dropout) {
            Mat64 mask(z.rows, z.cols);
            for (double& m : mask.data) m = rng->next_double() < keep ? 1.0 : 0.0;
            for (size_t i = 0; i < z.data.size(); ++i) z.data[i] *= mask.data[i] / keep;
            trace.masks.push_back(std::move(mask));
        } else {
            trace.masks.emplace_back();
        }
        h = std::move(z);
    }
    trace.encoding = h;

    if (!head_tag.empty()) {
        const Head& head = find_head(head_tag);
        trace.logits = matmul(trace.encoding, head.weights);
        for (size_t r = 0; r < trace.logits.rows; ++r)
            for (size_t c = 0; c < trace.logits.cols; ++c) trace.logits(r, c) += head.bias[c];
    }
    return trace;
}

Mat64 Model::replay_encoding(const ForwardTrace& trace) const {
    if (trace.model_version != version_)
        throw ConfigError("replay_encoding: trace from model version " +
                          std::to_string(trace.model_version) + ", model is at " +
                          std::to_string(version_));
    const double keep = 1.0 - config_.dropout_rate;
    Mat64 h = trace.input;
    for (size_t l = 0; l < config_.num_layers; ++l) {
        Mat64 z = matmul(h, weights_[l]);
        for (size_t r = 0; r < z.rows; ++r)
            for (size_t c = 0; c < z.cols; ++c) z(r, c) += biases_[l][c];
        apply_activation(z, config_.activation);
        const Mat64& mask = trace.masks[l];
        if (mask.rows > 0)
            for (size_t i = 0; i < z.data.size(); ++i) z.data[i] *= mask.data[i] / keep;
        h = std::move(z);
    }
    return h;
}

Mat64 Model::encode(const Mat64& batch) const {
    return forward(batch, "", ForwardMode::kEval, nullptr).encoding;
}

Vec64 Model::backward(const ForwardTrace& trace, const BackwardSignal& signal) const {
    if (trace.model_version != version_)
        throw ConfigError("backward: trace from model version " +
                          std::to_string(trace.model_version) + ", model is at " +
                          std::to_string(version_));
    if (!signal.logits_grad && !signal.encoding_grad)
        throw ConfigError("backward: no upstream gradient given");
    if (signal.logits_grad && trace.head_tag.empty())
        throw ConfigError("backward: logits gradient but trace has no head");

    Vec64 grad(param_count(), 0.0);
    const size_t rows = trace.encoding.rows;
    Mat64 d_enc(rows, config_.hidden_dim);  // zero-initialized

    if (signal.encoding_grad) {
        const Mat64& g = *signal.encoding_grad;
        if (g.rows != rows || g.cols != config_.hidden_dim)
            throw ConfigError("backward: encoding gradient shape mismatch");
        d_enc = g;
    }

    if (signal.logits_grad) {
        const Head& head = find_head(trace.head_tag);
        const Mat64& dl = *signal.logits_grad;
        if (dl.rows != rows || dl.cols != head.bias.size())
            throw ConfigError("backward: logits gradient shape mismatch");
        // Head weight grad = encoding^T * dlogits; bias grad = column sums.
        Mat64 dW = matmul_tn(trace.encoding, dl);
        Vec64 db = col_sums(dl);
        const auto [off, len] = head_span(trace.head_tag);
        std::copy(dW.data.begin(), dW.data.end(), grad.begin() + off);
        std::copy(db.begin(), db.end(), grad.begin() + off + dW.data.size());
        // Flow into the encoding.
        Mat64 back = matmul_nt(dl, head.weights);
        for (size_t i = 0; i < d_enc.data.size(); ++i) d_enc.data[i] += back.data[i];
        (void)len;
    }

    // Walk encoder layers from the top. d_enc holds the gradient on the
    // post-dropout output of the current layer.
    const double keep = 1.0 - config_.dropout_rate;
    size_t layer_offset = encoder_param_count();
    Mat64 d_h = std::move(d_enc);
    for (size_t li = config_.num_layers; li-- > 0;) {
        const Mat64& act = trace.activations[li];
        const Mat64& mask = trace.masks[li];
        // Through dropout: same mask, same 1/keep scaling.
        Mat64 d_a = d_h;
        if (mask.rows > 0)
            for (size_t i = 0; i < d_a.data.size(); ++i) d_a.data[i] *= mask.data[i] / keep;
        // Through the activation.
        Mat64 d_z = std::move(d_a);
        if (config_.activation == Activation::kTanh) {
            for (size_t i = 0; i < d_z.data.size(); ++i)
                d_z.data[i] *= 1.0 - act.data[i] * act.data[i];
        } else {
            for (size_t i = 0; i < d_z.data.size(); ++i)
                if (act.data[i] <= 0.0) d_z.data[i] = 0.0;
        }
        // Layer input: previous layer's post-dropout output, or the batch.
        Mat64 input_below;
        if (li == 0) {
            input_below = trace.input;
        } else {
            input_below = trace.activations[li - 1];
            const Mat64& m_below = trace.masks[li - 1];
            if (m_below.rows > 0)
                for (size_t i = 0; i < input_below.data.size(); ++i)
                    input_below.data[i] *= m_below.data[i] / keep;
        }
        Mat64 dW = matmul_tn(input_below, d_z);
        Vec64 db = col_sums(d_z);
        layer_offset -= weights_[li].data.size() + biases_[li].size();
        std::copy(dW.data.begin(), dW.data.end(), grad.begin() + layer_offset);
        std::copy(db.begin(), db.end(), grad.begin() + layer_offset + dW.data.size());
        if (li > 0) d_h = matmul_nt(d_z, weights_[li]);
    }
    return grad;
}

}  // namespace xmeta
