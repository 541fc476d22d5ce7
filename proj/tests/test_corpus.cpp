#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <unistd.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "doctest.h"
#include "xmeta/corpus.hpp"
#include "xmeta/errors.hpp"

using namespace xmeta;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path dir;
    TempDir() : dir(fs::temp_directory_path() / ("xmeta_corpus_" + std::to_string(::getpid()))) {
        fs::create_directories(dir);
    }
    ~TempDir() { fs::remove_all(dir); }
    std::string file(const std::string& name, const std::string& content) const {
        const fs::path p = dir / name;
        std::ofstream out(p);
        out << content;
        return p.string();
    }
};

const char* kThreeLines =
    R"({"id": "a", "features": [1.0, 2.0], "label": "pos", "language": "en", "task": "senti"})"
    "\n"
    R"({"id": "b", "features": [3.0, 4.0], "label": "neg", "language": "en", "task": "senti"})"
    "\n"
    R"({"id": "c", "features": [5.0, 6.0], "label": "pos", "language": "en", "task": "senti"})"
    "\n";

}  // namespace

TEST_CASE("load_jsonl maps labels by first appearance") {
    TempDir tmp;
    const TaskDataset ds = load_jsonl(tmp.file("d.jsonl", kThreeLines));
    CHECK(ds.size() == 3);
    CHECK(ds.task == "senti");
    CHECK(ds.language == "en");
    CHECK(ds.label_names == std::vector<std::string>{"pos", "neg"});
    CHECK(ds.examples[0].label == 0);
    CHECK(ds.examples[1].label == 1);
    CHECK(ds.examples[2].label == 0);
    CHECK(ds.examples[1].features == Vec64{3.0, 4.0});
    CHECK(ds.feature_dim() == 2);
}

TEST_CASE("load_jsonl honors a fixed sidecar label order") {
    TempDir tmp;
    const std::string path = tmp.file("d.jsonl", kThreeLines);
    const TaskDataset ds = load_jsonl(path, std::vector<std::string>{"neg", "pos"});
    CHECK(ds.label_names == std::vector<std::string>{"neg", "pos"});
    CHECK(ds.examples[0].label == 1);
    CHECK(ds.examples[1].label == 0);
    CHECK_THROWS_AS(load_jsonl(path, std::vector<std::string>{"neg", "neutral"}), DataError);
}

TEST_CASE("load_jsonl reports malformed lines with their line number") {
    TempDir tmp;
    const std::string good = R"({"id": "a", "features": [1.0], "label": "x", "language": "l", "task": "t"})";
    const std::string path = tmp.file("bad.jsonl", good + "\n{oops\n");
    try {
        load_jsonl(path);
        FAIL("expected DataError");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find(":2") != std::string::npos);
    }
}

TEST_CASE("load_jsonl rejects structural problems") {
    TempDir tmp;
    const std::string a = R"({"id": "a", "features": [1.0, 2.0], "label": "x", "language": "l", "task": "t"})";
    const std::string dim = R"({"id": "b", "features": [1.0], "label": "x", "language": "l", "task": "t"})";
    const std::string lang = R"({"id": "b", "features": [1.0, 2.0], "label": "x", "language": "de", "task": "t"})";
    const std::string missing = R"({"id": "b", "features": [1.0, 2.0], "language": "l", "task": "t"})";
    CHECK_THROWS_AS(load_jsonl(tmp.file("dim.jsonl", a + "\n" + dim + "\n")), DataError);
    CHECK_THROWS_AS(load_jsonl(tmp.file("lang.jsonl", a + "\n" + lang + "\n")), DataError);
    CHECK_THROWS_AS(load_jsonl(tmp.file("missing.jsonl", a + "\n" + missing + "\n")), DataError);
    CHECK_THROWS_AS(load_jsonl(tmp.file("empty.jsonl", "")), DataError);
    CHECK_THROWS_AS(load_jsonl(tmp.dir.string() + "/nonexistent.jsonl"), DataError);
}

TEST_CASE("save_jsonl then load_jsonl reproduces the dataset") {
    TempDir tmp;
    const TaskDataset ds = load_jsonl(tmp.file("d.jsonl", kThreeLines));
    const std::string out = (tmp.dir / "roundtrip.jsonl").string();
    save_jsonl(ds, out);
    const TaskDataset back = load_jsonl(out, ds.label_names);
    REQUIRE(back.size() == ds.size());
    CHECK(back.label_names == ds.label_names);
    for (size_t i = 0; i < ds.size(); ++i) {
        CHECK(back.examples[i].id == ds.examples[i].id);
        CHECK(back.examples[i].features == ds.examples[i].features);
        CHECK(back.examples[i].label == ds.examples[i].label);
    }
}

TEST_CASE("label file loading keeps order and rejects duplicates") {
    TempDir tmp;
    CHECK(load_label_file(tmp.file("l.txt", "entail\nneutral\ncontra\n")) ==
          std::vector<std::string>{"entail", "neutral", "contra"});
    CHECK_THROWS_AS(load_label_file(tmp.file("dup.txt", "a\na\n")), DataError);
    CHECK_THROWS_AS(load_label_file(tmp.file("none.txt", "")), DataError);
}

TEST_CASE("tsv pair loading hashes both sentences into unit-norm bags") {
    TempDir tmp;
    const std::string tsv = tmp.file("p.tsv",
                                     "A man sleeps\tThe man is asleep\tentail\n"
                                     "A man sleeps\tThe man runs\tcontra\n");
    const std::string labels = tmp.file("l.txt", "entail\ncontra\n");
    const TaskDataset ds = load_tsv_pairs(tsv, labels, "nli", "en");
    REQUIRE(ds.size() == 2);
    CHECK(ds.feature_dim() == 256);
    CHECK(ds.examples[0].label == 0);
    CHECK(ds.examples[1].label == 1);
    for (const Example& ex : ds.examples) {
        double n1 = 0.0, n2 = 0.0;
        for (size_t i = 0; i < 128; ++i) n1 += ex.features[i] * ex.features[i];
        for (size_t i = 128; i < 256; ++i) n2 += ex.features[i] * ex.features[i];
        CHECK(n1 == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(n2 == doctest::Approx(1.0).epsilon(1e-12));
    }
    // Same premise hashes identically in both rows.
    for (size_t i = 0; i < 128; ++i)
        CHECK(ds.examples[0].features[i] == ds.examples[1].features[i]);

    // Case-insensitive tokenization.
    CHECK(hash_pair_features("Hello World", "x") == hash_pair_features("hello world", "x"));
    CHECK(hash_pair_features("ab", "x") != hash_pair_features("ba", "x"));

    // Header skipping drops the first row.
    const TaskDataset with_header =
        load_tsv_pairs(tmp.file("h.tsv", "premise\thypothesis\tgold\nA b\tc d\tentail\n"), labels,
                       "nli", "en", true);
    CHECK(with_header.size() == 1);
    // Unknown label and malformed row are data errors.
    CHECK_THROWS_AS(load_tsv_pairs(tmp.file("u.tsv", "a\tb\tweird\n"), labels, "nli", "en"),
                    DataError);
    CHECK_THROWS_AS(load_tsv_pairs(tmp.file("m.tsv", "no tabs here\n"), labels, "nli", "en"),
                    DataError);
}

TEST_CASE("split produces exact stratified counts") {
    SyntheticSpec spec;
    spec.num_labels = 3;
    spec.examples_per_label = 100;
    spec.num_languages = 1;
    spec.feature_dim = 4;
    const TaskDataset ds = generate_synthetic(spec)[0];
    REQUIRE(ds.size() == 300);
    const SplitResult s = split(ds, {0.8, 0.1, 0.1}, 7);
    CHECK(s.train.size() == 240);
    CHECK(s.dev.size() == 30);
    CHECK(s.test.size() == 30);
    for (const auto& part : {s.train, s.dev, s.test}) {
        const auto groups = part.by_label();
        REQUIRE(groups.size() == 3);
        for (const auto& g : groups) CHECK(g.size() == part.size() / 3);
        CHECK(part.label_names == ds.label_names);
    }
    // The three parts are an exact disjoint cover of the input ids.
    std::set<std::string> ids;
    for (const auto& part : {s.train, s.dev, s.test})
        for (const Example& ex : part.examples) REQUIRE(ids.insert(ex.id).second);
    CHECK(ids.size() == 300);
}

TEST_CASE("split rounding follows largest remainder with earlier ties") {
    SyntheticSpec spec;
    spec.num_labels = 2;
    spec.examples_per_label = 10;
    spec.num_languages = 1;
    spec.feature_dim = 4;
    const TaskDataset ds = generate_synthetic(spec)[0];
    // Per label: exact = (5, 2.5, 2.5); floors (5, 2, 2); the leftover goes to
    // the earlier of the tied parts, so dev gets 3.
    const SplitResult s = split(ds, {0.5, 0.25, 0.25}, 1);
    CHECK(s.train.size() == 10);
    CHECK(s.dev.size() == 6);
    CHECK(s.test.size() == 4);
}

TEST_CASE("split is deterministic in the seed") {
    SyntheticSpec spec;
    spec.num_labels = 2;
    spec.examples_per_label = 30;
    spec.num_languages = 1;
    const TaskDataset ds = generate_synthetic(spec)[0];
    const SplitResult a = split(ds, {0.6, 0.2, 0.2}, 11);
    const SplitResult b = split(ds, {0.6, 0.2, 0.2}, 11);
    const SplitResult c = split(ds, {0.6, 0.2, 0.2}, 12);
    for (size_t i = 0; i < a.train.size(); ++i)
        CHECK(a.train.examples[i].id == b.train.examples[i].id);
    bool any_diff = false;
    for (size_t i = 0; i < a.train.size(); ++i)
        any_diff = any_diff || a.train.examples[i].id != c.train.examples[i].id;
    CHECK(any_diff);
}

TEST_CASE("split rejects bad fractions and too-small labels") {
    SyntheticSpec spec;
    spec.num_labels = 2;
    spec.examples_per_label = 30;
    spec.num_languages = 1;
    const TaskDataset ds = generate_synthetic(spec)[0];
    CHECK_THROWS_AS(split(ds, {0.5, 0.5, 0.5}, 1), ConfigError);
    CHECK_THROWS_AS(split(ds, {1.0, 0.0, 0.0}, 1), ConfigError);
    CHECK_THROWS_AS(split(ds, {-0.2, 0.6, 0.6}, 1), ConfigError);

    SyntheticSpec tiny = spec;
    tiny.examples_per_label = 2;  // fewer than the three parts
    const TaskDataset small = generate_synthetic(tiny)[0];
    CHECK_THROWS_AS(split(small, {0.8, 0.1, 0.1}, 1), DataError);
}

TEST_CASE("every part keeps at least one example per label") {
    SyntheticSpec spec;
    spec.num_labels = 2;
    spec.examples_per_label = 3;
    spec.num_languages = 1;
    const TaskDataset ds = generate_synthetic(spec)[0];
    // 0.98/0.01/0.01 would floor dev and test to zero; donor repair must leave
    // one example in each part.
    const SplitResult s = split(ds, {0.98, 0.01, 0.01}, 5);
    for (const auto& part : {s.train, s.dev, s.test})
        for (const auto& g : part.by_label()) CHECK(g.size() == 1);
}

TEST_CASE("zero language shift gives identical datasets") {
    SyntheticSpec spec;
    spec.num_languages = 3;
    spec.language_shift = 0.0;
    spec.examples_per_label = 20;
    const auto datasets = generate_synthetic(spec);
    REQUIRE(datasets.size() == 3);
    for (size_t l = 1; l < 3; ++l) {
        REQUIRE(datasets[l].size() == datasets[0].size());
        for (size_t i = 0; i < datasets[0].size(); ++i) {
            CHECK(datasets[l].examples[i].features == datasets[0].examples[i].features);
            CHECK(datasets[l].examples[i].label == datasets[0].examples[i].label);
        }
    }

    SyntheticSpec shifted = spec;
    shifted.language_shift = 0.2;
    const auto moved = generate_synthetic(shifted);
    bool any_diff = false;
    for (size_t i = 0; i < moved[0].size(); ++i)
        any_diff = any_diff || moved[1].examples[i].features != moved[0].examples[i].features;
    CHECK(any_diff);
}

TEST_CASE("well-separated labels are recovered by nearest class mean") {
    SyntheticSpec spec;
    spec.num_labels = 3;
    spec.feature_dim = 8;
    spec.examples_per_label = 60;
    spec.noise = 0.25;
    spec.separation = 10.0 * spec.noise;
    const TaskDataset ds = generate_synthetic(spec)[0];
    const auto groups = ds.by_label();
    std::vector<Vec64> means(3, Vec64(8, 0.0));
    for (size_t c = 0; c < 3; ++c) {
        for (size_t idx : groups[c])
            for (size_t j = 0; j < 8; ++j) means[c][j] += ds.examples[idx].features[j];
        for (double& v : means[c]) v /= double(groups[c].size());
    }
    size_t correct = 0;
    for (const Example& ex : ds.examples) {
        size_t best = 0;
        double best_d = 1e300;
        for (size_t c = 0; c < 3; ++c) {
            double d = 0.0;
            for (size_t j = 0; j < 8; ++j) {
                const double diff = ex.features[j] - means[c][j];
                d += diff * diff;
            }
            if (d < best_d) {
                best_d = d;
                best = c;
            }
        }
        if (int(best) == ex.label) ++correct;
    }
    CHECK(double(correct) / double(ds.size()) >= 0.99);
}

TEST_CASE("noise magnitude matches the per-coordinate standard deviation") {
    SyntheticSpec spec;
    spec.num_labels = 2;
    spec.feature_dim = 6;
    spec.examples_per_label = 3000;
    spec.noise = 0.5;
    spec.clusters_per_label = 1;
    spec.num_languages = 1;
    const TaskDataset ds = generate_synthetic(spec)[0];
    const auto groups = ds.by_label();
    double var_sum = 0.0;
    size_t var_n = 0;
    for (const auto& g : groups) {
        Vec64 mean(6, 0.0);
        for (size_t idx : g)
            for (size_t j = 0; j < 6; ++j) mean[j] += ds.examples[idx].features[j];
        for (double& v : mean) v /= double(g.size());
        for (size_t idx : g)
            for (size_t j = 0; j < 6; ++j) {
                const double d = ds.examples[idx].features[j] - mean[j];
                var_sum += d * d;
                ++var_n;
            }
    }
    const double std_hat = std::sqrt(var_sum / double(var_n));
    CHECK(std_hat == doctest::Approx(0.5).epsilon(0.05));
}

TEST_CASE("synthetic ids encode language, label, and round-robin cluster") {
    SyntheticSpec spec;
    spec.num_labels = 2;
    spec.clusters_per_label = 2;
    spec.examples_per_label = 5;
    spec.num_languages = 2;
    spec.feature_dim = 4;
    const auto datasets = generate_synthetic(spec);
    CHECK(datasets[0].examples[0].id == "lang0-c0-k0-0");
    CHECK(datasets[0].examples[1].id == "lang0-c0-k1-1");
    CHECK(datasets[0].examples[2].id == "lang0-c0-k0-2");
    CHECK(datasets[1].examples[0].id == "lang1-c0-k0-0");
    CHECK(datasets[0].name == "synth-lang0");
    CHECK(datasets[0].label_names == std::vector<std::string>{"label0", "label1"});
}

TEST_CASE("generation is deterministic in the seed") {
    SyntheticSpec spec;
    spec.examples_per_label = 25;
    const auto a = generate_synthetic(spec);
    const auto b = generate_synthetic(spec);
    REQUIRE(a.size() == b.size());
    for (size_t l = 0; l < a.size(); ++l)
        for (size_t i = 0; i < a[l].size(); ++i)
            CHECK(a[l].examples[i].features == b[l].examples[i].features);
    SyntheticSpec other = spec;
    other.seed = 999;
    const auto c = generate_synthetic(other);
    CHECK(c[0].examples[0].features != a[0].examples[0].features);
}

TEST_CASE("spec validation catches impossible geometry") {
    SyntheticSpec spec;
    spec.num_labels = 0;
    CHECK_THROWS_AS(spec.validate(), ConfigError);
    spec = SyntheticSpec{};
    spec.feature_dim = 2;
    spec.num_labels = 3;  // simplex needs feature_dim >= num_labels
    CHECK_THROWS_AS(spec.validate(), ConfigError);
    spec = SyntheticSpec{};
    spec.separation = 0.0;
    CHECK_THROWS_AS(spec.validate(), ConfigError);
    spec = SyntheticSpec{};
    spec.noise = -1.0;
    CHECK_THROWS_AS(spec.validate(), ConfigError);
}

TEST_CASE("dataset validate rejects inconsistent examples") {
    TaskDataset ds;
    ds.name = "d";
    ds.task = "t";
    ds.language = "l";
    ds.label_names = {"a", "b"};
    Example ex;
    ex.id = "x";
    ex.features = {1.0, 2.0};
    ex.label = 0;
    ex.task = "t";
    ex.language = "l";
    ds.examples.push_back(ex);
    CHECK_NOTHROW(ds.validate());
    ds.examples[0].label = 5;
    CHECK_THROWS_AS(ds.validate(), DataError);
    ds.examples[0].label = 0;
    ds.examples[0].task = "other";
    CHECK_THROWS_AS(ds.validate(), DataError);
    ds.examples[0].task = "t";
    ds.examples.push_back(ex);
    ds.examples[1].id = "y";
    ds.examples[1].features = {1.0};
    CHECK_THROWS_AS(ds.validate(), DataError);
}
