#define DOCTEST_CONFIG_IMPLEMENT
#include <unistd.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

#include "doctest.h"
#include "json.hpp"

namespace fs = std::filesystem;

namespace {

std::string g_bin;

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag) {
        path = fs::temp_directory_path() / ("xmeta_cli_" + tag + "_" + std::to_string(::getpid()));
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
    std::string sub(const std::string& name) const { return (path / name).string(); }
};

int run_cli(const std::string& args) {
    const std::string cmd = "\"" + g_bin + "\" " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    REQUIRE(status != -1);
    REQUIRE(WIFEXITED(status));
    return WEXITSTATUS(status);
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    REQUIRE(bool(out));
    out << content;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(bool(in));
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

size_t line_count(const std::string& text) {
    size_t n = 0;
    for (char c : text) n += c == '\n';
    return n;
}

const char* kSpecJson = R"({
  "task": "clf",
  "num_labels": 3,
  "feature_dim": 6,
  "num_languages": 2,
  "examples_per_label": 30,
  "clusters_per_label": 1,
  "separation": 4.0,
  "cluster_separation": 0.0,
  "noise": 0.3,
  "language_shift": 0.1,
  "seed": 11
})";

std::string base_config(uint64_t seed) {
    std::ostringstream out;
    out << R"({
  "seed": )" << seed
        << R"(,
  "data": {
    "synthetic": )"
        << kSpecJson << R"(,
    "target_language": "lang1",
    "split_fractions": [0.7, 0.15, 0.15],
    "split_seed": 3
  },
  "encoder": {"hidden_dim": 8, "num_layers": 2, "activation": "tanh", "dropout_rate": 0.0, "seed": 5},
  "train": {
    "regime": "protonet",
    "iterations": 20,
    "epochs": 1,
    "eval_interval": 5,
    "episode": {"way": 3, "shot": 2, "query_per_class": 3}
  },
  "finetune": {"episodic": true, "iterations": 5, "eval_interval": 5},
  "eval": {"cells": ["zero_shot", "episodic_ft"]}
})";
    return out.str();
}

}  // namespace

TEST_CASE("data generation is deterministic and writes the full bundle") {
    TempDir tmp("gen");
    write_file(tmp.sub("spec.json"), kSpecJson);
    REQUIRE(run_cli("gen-data --spec " + tmp.sub("spec.json") + " --out " + tmp.sub("d1")) == 0);
    REQUIRE(run_cli("gen-data --spec " + tmp.sub("spec.json") + " --out " + tmp.sub("d2")) == 0);
    for (const std::string name :
         {"clf-lang0.jsonl", "clf-lang1.jsonl", "labels.txt", "spec.resolved.json"}) {
        CAPTURE(name);
        REQUIRE(fs::exists(tmp.sub("d1") + "/" + name));
        CHECK(slurp(tmp.sub("d1") + "/" + name) == slurp(tmp.sub("d2") + "/" + name));
    }
    CHECK(slurp(tmp.sub("d1") + "/labels.txt") == "label0\nlabel1\nlabel2\n");
    CHECK(line_count(slurp(tmp.sub("d1") + "/clf-lang0.jsonl")) == 90);
}

TEST_CASE("bad generation requests exit with the config code") {
    TempDir tmp("genbad");
    write_file(tmp.sub("zero.json"), R"({"num_labels": 0})");
    CHECK(run_cli("gen-data --spec " + tmp.sub("zero.json") + " --out " + tmp.sub("out")) == 2);
    write_file(tmp.sub("broken.json"), "{not json");
    CHECK(run_cli("gen-data --spec " + tmp.sub("broken.json") + " --out " + tmp.sub("out")) == 2);
    CHECK(run_cli("gen-data --spec " + tmp.sub("missing.json") + " --out " + tmp.sub("out")) == 2);
    write_file(tmp.sub("spec.json"), kSpecJson);
    CHECK(run_cli("gen-data --spec " + tmp.sub("spec.json")) == 2);  // nowhere to write
    CHECK(run_cli("frobnicate") == 2);
}

TEST_CASE("training writes the run files with the promised shapes") {
    TempDir tmp("train");
    write_file(tmp.sub("config.json"), base_config(7));
    REQUIRE(run_cli("train --config " + tmp.sub("config.json") + " --out " + tmp.sub("run")) == 0);

    REQUIRE(fs::exists(tmp.sub("run") + "/checkpoint.bin"));
    const std::string metrics = slurp(tmp.sub("run") + "/metrics.csv");
    CHECK(line_count(metrics) == 5);  // header + one row per eval interval
    CHECK(metrics.rfind("iteration,loss,accuracy\n", 0) == 0);

    const auto summary = nlohmann::json::parse(slurp(tmp.sub("run") + "/summary.json"));
    CHECK(summary["final_loss"].is_number());
    const double acc = summary["final_accuracy"].get<double>();
    CHECK(acc >= 0.0);
    CHECK(acc <= 1.0);

    const auto resolved = nlohmann::json::parse(slurp(tmp.sub("run") + "/config.resolved.json"));
    CHECK(resolved["train"]["regime"] == "protonet");
    CHECK(resolved["encoder"]["input_dim"] == 6);
    CHECK(resolved["eval"]["method"] == "prototype");
}

TEST_CASE("training is reproducible under a seed and moved by it") {
    TempDir tmp("repro");
    write_file(tmp.sub("config.json"), base_config(7));
    REQUIRE(run_cli("train --config " + tmp.sub("config.json") + " --out " + tmp.sub("a")) == 0);
    REQUIRE(run_cli("train --config " + tmp.sub("config.json") + " --out " + tmp.sub("b")) == 0);
    CHECK(slurp(tmp.sub("a") + "/checkpoint.bin") == slurp(tmp.sub("b") + "/checkpoint.bin"));
    CHECK(slurp(tmp.sub("a") + "/metrics.csv") == slurp(tmp.sub("b") + "/metrics.csv"));

    write_file(tmp.sub("config8.json"), base_config(8));
    REQUIRE(run_cli("train --config " + tmp.sub("config8.json") + " --out " + tmp.sub("c")) == 0);
    CHECK(slurp(tmp.sub("a") + "/checkpoint.bin") != slurp(tmp.sub("c") + "/checkpoint.bin"));
}

TEST_CASE("the resolved config reproduces the run byte for byte") {
    TempDir tmp("resolved");
    write_file(tmp.sub("config.json"), base_config(7));
    REQUIRE(run_cli("train --config " + tmp.sub("config.json") + " --out " + tmp.sub("a")) == 0);
    REQUIRE(run_cli("train --config " + tmp.sub("a") + "/config.resolved.json --out " +
                    tmp.sub("b")) == 0);
    CHECK(slurp(tmp.sub("a") + "/checkpoint.bin") == slurp(tmp.sub("b") + "/checkpoint.bin"));
    CHECK(slurp(tmp.sub("a") + "/metrics.csv") == slurp(tmp.sub("b") + "/metrics.csv"));
    CHECK(slurp(tmp.sub("a") + "/config.resolved.json") ==
          slurp(tmp.sub("b") + "/config.resolved.json"));
}

TEST_CASE("zero iterations still produce a loadable run") {
    TempDir tmp("zero");
    nlohmann::json cfg = nlohmann::json::parse(base_config(7));
    cfg["train"]["iterations"] = 0;
    write_file(tmp.sub("config.json"), cfg.dump());
    REQUIRE(run_cli("train --config " + tmp.sub("config.json") + " --out " + tmp.sub("run")) == 0);
    CHECK(line_count(slurp(tmp.sub("run") + "/metrics.csv")) == 1);
    REQUIRE(run_cli("eval --config " + tmp.sub("config.json") + " --checkpoint " +
                    tmp.sub("run") + "/checkpoint.bin --out " + tmp.sub("ev")) == 0);
    const auto grid = nlohmann::json::parse(slurp(tmp.sub("ev") + "/grid.json"));
    CHECK(grid["cells"].contains("zero_shot"));
}

TEST_CASE("evaluation reports each requested cell") {
    TempDir tmp("eval");
    write_file(tmp.sub("config.json"), base_config(7));
    REQUIRE(run_cli("train --config " + tmp.sub("config.json") + " --out " + tmp.sub("run")) == 0);
    REQUIRE(run_cli("eval --config " + tmp.sub("config.json") + " --checkpoint " +
                    tmp.sub("run") + "/checkpoint.bin --out " + tmp.sub("ev")) == 0);

    const auto grid = nlohmann::json::parse(slurp(tmp.sub("ev") + "/grid.json"));
    CHECK(grid["task"] == "clf");
    CHECK(grid["target_language"] == "lang1");
    CHECK(grid["method"] == "prototype");
    CHECK(grid["test_examples"].get<int>() > 0);
    REQUIRE(grid["cells"].contains("zero_shot"));
    REQUIRE(grid["cells"].contains("episodic_ft"));
    const double zs = grid["cells"]["zero_shot"]["accuracy"].get<double>();
    CHECK(zs >= 0.0);
    CHECK(zs <= 1.0);
    CHECK_FALSE(grid["cells"]["zero_shot"].contains("finetune_final_loss"));
    CHECK(grid["cells"]["episodic_ft"].contains("finetune_final_loss"));
    const auto confusion = grid["cells"]["zero_shot"]["confusion"];
    REQUIRE(confusion.size() == 3);
    REQUIRE(confusion[0].size() == 3);

    nlohmann::json cfg = nlohmann::json::parse(base_config(7));
    cfg["eval"]["cells"] = nlohmann::json::array();
    write_file(tmp.sub("empty.json"), cfg.dump());
    REQUIRE(run_cli("eval --config " + tmp.sub("empty.json") + " --checkpoint " +
                    tmp.sub("run") + "/checkpoint.bin --out " + tmp.sub("ev2")) == 0);
    const auto empty = nlohmann::json::parse(slurp(tmp.sub("ev2") + "/grid.json"));
    CHECK(empty["cells"].is_object());
    CHECK(empty["cells"].empty());
}

TEST_CASE("finetuning continues from a checkpoint and moves it") {
    TempDir tmp("ft");
    write_file(tmp.sub("config.json"), base_config(7));
    REQUIRE(run_cli("train --config " + tmp.sub("config.json") + " --out " + tmp.sub("run")) == 0);
    REQUIRE(run_cli("finetune --config " + tmp.sub("config.json") + " --checkpoint " +
                    tmp.sub("run") + "/checkpoint.bin --out " + tmp.sub("ft")) == 0);
    for (const std::string name :
         {"config.resolved.json", "checkpoint.bin", "metrics.csv", "summary.json"}) {
        CAPTURE(name);
        CHECK(fs::exists(tmp.sub("ft") + "/" + name));
    }
    CHECK(slurp(tmp.sub("ft") + "/checkpoint.bin") != slurp(tmp.sub("run") + "/checkpoint.bin"));
}

TEST_CASE("a missing checkpoint exits with the data code") {
    TempDir tmp("nockpt");
    write_file(tmp.sub("config.json"), base_config(7));
    CHECK(run_cli("eval --config " + tmp.sub("config.json") + " --checkpoint " +
                  tmp.sub("absent.bin") + " --out " + tmp.sub("ev")) == 3);
    CHECK(run_cli("finetune --config " + tmp.sub("config.json") + " --checkpoint " +
                  tmp.sub("absent.bin") + " --out " + tmp.sub("ft")) == 3);
    CHECK_FALSE(fs::exists(tmp.sub("ev") + "/grid.json"));
}

TEST_CASE("config mistakes exit with the config code") {
    TempDir tmp("badcfg");
    CHECK(run_cli("train --config " + tmp.sub("absent.json") + " --out " + tmp.sub("run")) == 2);
    write_file(tmp.sub("unknown.json"), R"({"seed": 1, "data": {"synthetic": {}}, "trian": {}})");
    CHECK(run_cli("train --config " + tmp.sub("unknown.json") + " --out " + tmp.sub("run")) == 2);
    nlohmann::json cfg = nlohmann::json::parse(base_config(7));
    cfg["data"]["target_language"] = "lang9";
    write_file(tmp.sub("target.json"), cfg.dump());
    CHECK(run_cli("train --config " + tmp.sub("target.json") + " --out " + tmp.sub("run")) == 2);
    CHECK_FALSE(fs::exists(tmp.sub("run") + "/checkpoint.bin"));
}

TEST_CASE("analysis writes the geometry reports") {
    TempDir tmp("an");
    write_file(tmp.sub("config.json"), base_config(7));
    REQUIRE(run_cli("train --config " + tmp.sub("config.json") + " --out " + tmp.sub("run")) == 0);
    REQUIRE(run_cli("analyze --config " + tmp.sub("config.json") + " --checkpoint " +
                    tmp.sub("run") + "/checkpoint.bin --out " + tmp.sub("an")) == 0);

    const std::string cca = slurp(tmp.sub("an") + "/cca.csv");
    CHECK(line_count(cca) == 3);  // header + one row per layer
    std::istringstream lines(cca);
    std::string line;
    std::getline(lines, line);
    CHECK(line == "layer,similarity");
    while (std::getline(lines, line)) {
        const double v = std::stod(line.substr(line.find(',') + 1));
        CHECK(v == doctest::Approx(1.0).epsilon(1e-6));  // before == after by default
    }

    const std::string hd = slurp(tmp.sub("an") + "/hausdorff.csv");
    CHECK(line_count(hd) == 2);  // one pair for two languages
    CHECK(hd.find("lang0|lang1") != std::string::npos);

    const std::string pca = slurp(tmp.sub("an") + "/pca.csv");
    CHECK(line_count(pca) >= 3);
    CHECK(pca.rfind("id,language,x,y\n", 0) == 0);

    const auto summary = nlohmann::json::parse(slurp(tmp.sub("an") + "/analysis.json"));
    REQUIRE(summary["pca_explained"].size() == 2);
    CHECK(summary["probe_points"].get<int>() > 0);
}

TEST_CASE("the cluster manifest enumerates every label tuple") {
    TempDir tmp("dreca");
    nlohmann::json cfg = nlohmann::json::parse(base_config(7));
    cfg["dreca"] = {{"clusters_per_label", 2}, {"use_encoder", false}};
    write_file(tmp.sub("config.json"), cfg.dump());
    REQUIRE(run_cli("dreca --config " + tmp.sub("config.json") + " --out " + tmp.sub("out")) == 0);

    const auto manifest = nlohmann::json::parse(slurp(tmp.sub("out") + "/dreca.json"));
    CHECK(manifest["clusters_per_label"] == 2);
    CHECK(manifest["embedding"] == "features");
    REQUIRE(manifest["datasets"].size() == 1);  // aux language only
    CHECK(manifest["datasets"][0]["dataset"] == "clf-lang0/train");
    const auto tasks = manifest["datasets"][0]["tasks"];
    REQUIRE(tasks.size() == 8);  // 2 clusters ^ 3 labels
    for (const auto& t : tasks) {
        CHECK(t["clusters"].size() == 3);
        CHECK(t["member_ids"].size() > 0);
    }
}

int main(int argc, char** argv) {
    ::unsetenv("XMETA_OUT_DIR");
    std::vector<char*> rest;
    for (int i = 0; i < argc; ++i) {
        if (std::string(argv[i]) == "--bin" && i + 1 < argc) {
            g_bin = argv[i + 1];
            ++i;
            continue;
        }
        rest.push_back(argv[i]);
    }
    if (g_bin.empty()) {
        std::fprintf(stderr, "usage: test_cli --bin <path-to-cli>\n");
        return 1;
    }
    doctest::Context context(int(rest.size()), rest.data());
    return context.run();
}
