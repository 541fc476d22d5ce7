#include "xmeta/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "xmeta/errors.hpp"

namespace xmeta {

using nlohmann::json;

size_t TaskDataset::feature_dim() const {
    if (examples.empty()) throw DataError(name + ": empty dataset");
    return examples[0].features.size();
}

std::vector<std::vector<size_t>> TaskDataset::by_label() const {
    std::vector<std::vector<size_t>> groups(num_labels());
    for (size_t i = 0; i < examples.size(); ++i) {
        const int label = examples[i].label;
        if (label < 0 || static_cast<size_t>(label) >= num_labels())
            throw DataError(name + ": example " + examples[i].id + " has label " +
                            std::to_string(label) + " outside the " +
                            std::to_string(num_labels()) + "-label set");
        groups[static_cast<size_t>(label)].push_back(i);
    }
    return groups;
}

void TaskDataset::validate() const {
    if (examples.empty()) throw DataError(name + ": empty dataset");
    if (label_names.empty()) throw DataError(name + ": no labels");
    const size_t dim = examples[0].features.size();
    for (const Example& ex : examples) {
        if (ex.features.size() != dim)
            throw DataError(name + ": example " + ex.id + " has " +
                            std::to_string(ex.features.size()) + "-dim features, expected " +
                            std::to_string(dim));
        if (ex.task != task || ex.language != language)
            throw DataError(name + ": example " + ex.id + " has task/language (" + ex.task +
                            ", " + ex.language + "), dataset is (" + task + ", " + language + ")");
    }
    by_label();  // label range check
}

std::vector<std::string> load_label_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open label file: " + path);
    std::vector<std::string> labels;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (std::find(labels.begin(), labels.end(), line) != labels.end())
            throw DataError(path + ": duplicate label name '" + line + "'");
        labels.push_back(line);
    }
    if (labels.empty()) throw DataError(path + ": empty label file");
    return labels;
}

namespace {

int label_id(std::vector<std::string>& names, const std::string& label, bool fixed,
             const std::string& context) {
    auto it = std::find(names.begin(), names.end(), label);
    if (it != names.end()) return static_cast<int>(it - names.begin());
    if (fixed) throw DataError(context + ": label '" + label + "' not in the sidecar label set");
    names.push_back(label);
    return static_cast<int>(names.size()) - 1;
}

}  // namespace

TaskDataset load_jsonl(const std::string& path,
                       const std::optional<std::vector<std::string>>& fixed_labels) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open dataset: " + path);

    TaskDataset ds;
    ds.name = path;
    if (fixed_labels) ds.label_names = *fixed_labels;
    const bool fixed = fixed_labels.has_value();

    std::string line;
    size_t lineno = 0;
    size_t dim = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const std::string where = path + ":" + std::to_string(lineno);
        json obj;
        try {
            obj = json::parse(line);
        } catch (const json::exception& e) {
            throw DataError(where + ": malformed JSON (" + e.what() + ")");
        }
        if (!obj.is_object()) throw DataError(where + ": line is not a JSON object");
        for (const char* key : {"id", "features", "label", "language", "task"})
            if (!obj.contains(key)) throw DataError(where + ": missing field '" + key + "'");

        Example ex;
        try {
            ex.id = obj["id"].get<std::string>();
            ex.features = obj["features"].get<Vec64>();
            ex.language = obj["language"].get<std::string>();
            ex.task = obj["task"].get<std::string>();
            ex.label = label_id(ds.label_names, obj["label"].get<std::string>(), fixed, where);
        } catch (const json::exception& e) {
            throw DataError(where + ": bad field type (" + e.what() + ")");
        }

        if (ds.examples.empty()) {
            dim = ex.features.size();
            ds.task = ex.task;
            ds.language = ex.language;
        } else {
            if (ex.features.size() != dim)
                throw DataError(where + ": " + std::to_string(ex.features.size()) +
                                "-dim features in a " + std::to_string(dim) + "-dim dataset");
            if (ex.task != ds.task || ex.language != ds.language)
                throw DataError(where + ": mixed (task, language) pairs in one file");
        }
        ds.examples.push_back(std::move(ex));
    }
    if (ds.examples.empty()) throw DataError(path + ": empty dataset");
    ds.validate();
    return ds;
}

void save_jsonl(const TaskDataset& dataset, const std::string& path) {
    dataset.validate();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write dataset: " + path);
    for (const Example& ex : dataset.examples) {
        json obj;
        obj["id"] = ex.id;
        obj["features"] = ex.features;
        obj["label"] = dataset.label_names.at(static_cast<size_t>(ex.label));
        obj["language"] = ex.language;
        obj["task"] = ex.task;
        out << obj.dump() << '\n';
    }
    if (!out) throw DataError("write failed: " + path);
}

Vec64 hash_pair_features(const std::string& premise, const std::string& hypothesis) {
    constexpr size_t kBuckets = 128;
    auto bag = [](const std::string& text) {
        Vec64 counts(kBuckets, 0.0);
        std::istringstream words(text);
        std::string word;
        while (words >> word) {
            std::transform(word.begin(), word.end(), word.begin(),
                           [](unsigned char c) { return std::tolower(c); });
            // FNV-1a, 64-bit.
            uint64_t h = 0xcbf29ce484222325ull;
            for (unsigned char c : word) {
                h ^= c;
                h *= 0x100000001b3ull;
            }
            counts[h % kBuckets] += 1.0;
        }
        const double norm = l2_norm(counts);
        if (norm > 0.0) scale(counts, 1.0 / norm);
        return counts;
    };
    Vec64 features = bag(premise);
    const Vec64 hyp = bag(hypothesis);
    features.insert(features.end(), hyp.begin(), hyp.end());
    return features;
}

TaskDataset load_tsv_pairs(const std::string& tsv_path, const std::string& labels_path,
                           const std::string& task, const std::string& language,
                           bool has_header) {
    std::ifstream in(tsv_path);
    if (!in) throw DataError("cannot open TSV: " + tsv_path);

    TaskDataset ds;
    ds.name = tsv_path;
    ds.task = task;
    ds.language = language;
    ds.label_names = load_label_file(labels_path);

    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (has_header && lineno == 1) continue;
        const std::string where = tsv_path + ":" + std::to_string(lineno);

        const size_t tab1 = line.find('\t');
        const size_t tab2 = tab1 == std::string::npos ? std::string::npos : line.find('\t', tab1 + 1);
        if (tab2 == std::string::npos) throw DataError(where + ": expected 3 tab-separated fields");
        const std::string premise = line.substr(0, tab1);
        const std::string hypothesis = line.substr(tab1 + 1, tab2 - tab1 - 1);
        const std::string label = line.substr(tab2 + 1);

        Example ex;
        ex.id = language + "-" + std::to_string(lineno);
        ex.features = hash_pair_features(premise, hypothesis);
        ex.language = language;
        ex.task = task;
        auto it = std::find(ds.label_names.begin(), ds.label_names.end(), label);
        if (it == ds.label_names.end())
            throw DataError(where + ": label '" + label + "' not in the sidecar label set");
        ex.label = static_cast<int>(it - ds.label_names.begin());
        ds.examples.push_back(std::move(ex));
    }
    if (ds.examples.empty()) throw DataError(tsv_path + ": empty dataset");
    ds.validate();
    return ds;
}

SplitResult split(const TaskDataset& dataset, const std::array<double, 3>& fractions,
                  uint64_t seed) {
    dataset.validate();
    double sum = 0.0;
    for (double f : fractions) {
        if (!(f > 0.0)) throw ConfigError("split: fractions must be positive");
        sum += f;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("split: fractions must sum to 1");

    std::array<TaskDataset, 3> parts;
    for (size_t p = 0; p < 3; ++p) {
        parts[p].name = dataset.name + "/" + std::array<const char*, 3>{"train", "dev", "test"}[p];
        parts[p].task = dataset.task;
        parts[p].language = dataset.language;
        parts[p].label_names = dataset.label_names;
    }

    Rng rng(seed);
    for (const std::vector<size_t>& group : dataset.by_label()) {
        const size_t n = group.size();
        if (n < 3)
            throw DataError("split: a label has " + std::to_string(n) +
                            " examples, need at least one per part");
        // Floor quotas, then hand out the remainder by largest fractional
        // part (ties to the earlier part); finally make sure no part is empty.
        std::array<size_t, 3> quota;
        std::array<double, 3> frac;
        size_t assigned = 0;
        for (size_t p = 0; p < 3; ++p) {
            const double exact = static_cast<double>(n) * fractions[p];
            quota[p] = static_cast<size_t>(std::floor(exact + 1e-9));
            frac[p] = exact - static_cast<double>(quota[p]);
            assigned += quota[p];
        }
        while (assigned < n) {
            size_t best = 0;
            for (size_t p = 1; p < 3; ++p)
                if (frac[p] > frac[best]) best = p;
            ++quota[best];
            frac[best] = -1.0;
            ++assigned;
        }
        for (size_t p = 0; p < 3; ++p) {
            if (quota[p] > 0) continue;
            size_t donor = 0;
            for (size_t q = 1; q < 3; ++q)
                if (quota[q] > quota[donor]) donor = q;
            --quota[donor];
            ++quota[p];
        }

        const std::vector<size_t> order = rng.permutation(n);
        size_t cursor = 0;
        for (size_t p = 0; p < 3; ++p)
            for (size_t k = 0; k < quota[p]; ++k, ++cursor)
                parts[p].examples.push_back(dataset.examples[group[order[cursor]]]);
    }
    for (TaskDataset& part : parts) part.validate();
    return SplitResult{std::move(parts[0]), std::move(parts[1]), std::move(parts[2])};
}

void SyntheticSpec::validate() const {
    if (task.empty()) throw ConfigError("synthetic: task tag must be non-empty");
    if (num_labels < 2) throw ConfigError("synthetic: need at least 2 labels");
    if (num_languages < 1) throw ConfigError("synthetic: need at least 1 language");
    if (examples_per_label < 1) throw ConfigError("synthetic: need at least 1 example per label");
    if (clusters_per_label < 1) throw ConfigError("synthetic: clusters_per_label must be >= 1");
    if (!(separation > 0.0)) throw ConfigError("synthetic: separation must be positive");
    if (!(cluster_separation > 0.0) && clusters_per_label > 1)
        throw ConfigError("synthetic: cluster_separation must be positive");
    if (noise < 0.0) throw ConfigError("synthetic: noise must be non-negative");
    if (language_shift < 0.0) throw ConfigError("synthetic: language_shift must be non-negative");
    if (feature_dim < num_labels)
        throw ConfigError("synthetic: feature_dim must be >= num_labels");
    if (feature_dim < clusters_per_label)
        throw ConfigError("synthetic: feature_dim must be >= clusters_per_label");
}

namespace {

// Random rotation: Gram-Schmidt over the columns of `base` (typically a
// Gaussian draw or a perturbed identity). Columns must be independent.
Mat64 orthonormalize(Mat64 base) {
    const size_t d = base.rows;
    for (size_t j = 0; j < d; ++j) {
        for (size_t k = 0; k < j; ++k) {
            double proj = 0.0;
            for (size_t i = 0; i < d; ++i) proj += base(i, j) * base(i, k);
            for (size_t i = 0; i < d; ++i) base(i, j) -= proj * base(i, k);
        }
        double norm = 0.0;
        for (size_t i = 0; i < d; ++i) norm += base(i, j) * base(i, j);
        norm = std::sqrt(norm);
        if (norm < 1e-12) throw NumericError("orthonormalize: dependent columns");
        for (size_t i = 0; i < d; ++i) base(i, j) /= norm;
    }
    return base;
}

Mat64 random_rotation(size_t d, Rng& rng) {
    Mat64 g(d, d);
    for (double& v : g.data) v = rng.next_gaussian();
    return orthonormalize(std::move(g));
}

Vec64 apply_rotation(const Mat64& rot, const Vec64& v) {
    Vec64 out(rot.rows, 0.0);
    for (size_t i = 0; i < rot.rows; ++i) {
        double s = 0.0;
        for (size_t j = 0; j < rot.cols; ++j) s += rot(i, j) * v[j];
        out[i] = s;
    }
    return out;
}

// `count` points in `dim` dims with equal pairwise distance `dist`, centered
// at the origin, randomly rotated. Uses scaled standard-basis vectors (their
// pairwise distance is sqrt(2)) and needs dim >= count.
std::vector<Vec64> centered_simplex(size_t count, size_t dim, double dist, Rng& rng) {
    std::vector<Vec64> points(count, Vec64(dim, 0.0));
    const double edge = dist / std::sqrt(2.0);
    for (size_t i = 0; i < count; ++i) points[i][i] = edge;
    const double mean = edge / static_cast<double>(count);
    for (size_t i = 0; i < count; ++i)
        for (size_t j = 0; j < count; ++j) points[i][j] -= mean;
    const Mat64 rot = random_rotation(dim, rng);
    for (Vec64& p : points) p = apply_rotation(rot, p);
    return points;
}

// Uniform draw from the ball whose per-coordinate standard deviation is
// `sigma` (radius sigma * sqrt(dim + 2)); bounded noise keeps planted
// structure recoverable with certainty rather than with high probability.
Vec64 ball_noise(size_t dim, double sigma, Rng& rng) {
    Vec64 v(dim, 0.0);
    if (sigma == 0.0) return v;
    double norm = 0.0;
    for (double& x : v) {
        x = rng.next_gaussian();
        norm += x * x;
    }
    norm = std::sqrt(norm);
    if (norm < 1e-300) return Vec64(dim, 0.0);
    const double radius = sigma * std::sqrt(static_cast<double>(dim) + 2.0) *
                          std::pow(rng.next_double(), 1.0 / static_cast<double>(dim));
    for (double& x : v) x *= radius / norm;
    return v;
}

}  // namespace

std::vector<TaskDataset> generate_synthetic(const SyntheticSpec& spec) {
    spec.validate();
    const size_t d = spec.feature_dim;
    const size_t K = spec.clusters_per_label;

    Rng centers_rng = Rng(spec.seed).split(1);
    const std::vector<Vec64> centers =
        centered_simplex(spec.num_labels, d, spec.separation, centers_rng);

    // Per-label sub-cluster offsets (centered, so label means stay on the
    // simplex). K=1 degenerates to a zero offset.
    std::vector<std::vector<Vec64>> offsets(spec.num_labels);
    for (size_t c = 0; c < spec.num_labels; ++c) {
        if (K == 1) {
            offsets[c].assign(1, Vec64(d, 0.0));
        } else {
            Rng r = Rng(spec.seed).split(100 + c);
            offsets[c] = centered_simplex(K, d, spec.cluster_separation, r);
        }
    }

    // Base sample, shared by every language.
    struct BasePoint {
        Vec64 x;
        int label;
        size_t cluster;
        size_t index;
    };
    std::vector<BasePoint> base;
    base.reserve(spec.num_labels * spec.examples_per_label);
    Rng noise_rng = Rng(spec.seed).split(2);
    for (size_t c = 0; c < spec.num_labels; ++c) {
        for (size_t i = 0; i < spec.examples_per_label; ++i) {
            const size_t k = i % K;
            Vec64 x = centers[c];
            axpy(1.0, offsets[c][k], x);
            axpy(1.0, ball_noise(d, spec.noise, noise_rng), x);
            base.push_back({std::move(x), static_cast<int>(c), k, i});
        }
    }

    std::vector<TaskDataset> datasets;
    datasets.reserve(spec.num_languages);
    for (size_t l = 0; l < spec.num_languages; ++l) {
        const std::string lang = "lang" + std::to_string(l);
        TaskDataset ds;
        ds.name = spec.task + "-" + lang;
        ds.task = spec.task;
        ds.language = lang;
        for (size_t c = 0; c < spec.num_labels; ++c)
            ds.label_names.push_back("label" + std::to_string(c));

        // Rotation = Gram-Schmidt of identity + shift * Gaussian, offset =
        // shift * unit direction; both exactly identity at shift 0.
        Rng lang_rng = Rng(spec.seed).split(1000 + l);
        Mat64 perturbed(d, d);
        for (size_t i = 0; i < d; ++i)
            for (size_t j = 0; j < d; ++j)
                perturbed(i, j) = (i == j ? 1.0 : 0.0) + spec.language_shift * lang_rng.next_gaussian();
        const Mat64 rot = orthonormalize(std::move(perturbed));
        Vec64 offset(d, 0.0);
        for (double& x : offset) x = lang_rng.next_gaussian();
        const double norm = l2_norm(offset);
        scale(offset, norm > 0.0 ? spec.language_shift / norm : 0.0);

        ds.examples.reserve(base.size());
        for (const BasePoint& bp : base) {
            Example ex;
            ex.id = lang + "-c" + std::to_string(bp.label) + "-k" + std::to_string(bp.cluster) +
                    "-" + std::to_string(bp.index);
            ex.features = apply_rotation(rot, bp.x);
            axpy(1.0, offset, ex.features);
            ex.label = bp.label;
            ex.language = lang;
            ex.task = spec.task;
            ds.examples.push_back(std::move(ex));
        }
        ds.validate();
        datasets.push_back(std::move(ds));
    }
    return datasets;
}

}  // namespace xmeta
