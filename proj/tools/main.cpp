#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "xmeta/config.hpp"
#include "xmeta/errors.hpp"

namespace {

int run(int argc, char** argv) {
    CLI::App app{"meta-learning workbench: train, adapt, and probe small encoders"};
    app.require_subcommand(1);

    std::string spec_path;
    std::string config_path;
    std::string out_dir;
    std::string checkpoint;
    std::string before;

    CLI::App* gen = app.add_subcommand("gen-data", "write synthetic JSONL datasets from a spec");
    gen->add_option("-s,--spec", spec_path, "synthetic spec JSON file")->required();
    gen->add_option("-o,--out", out_dir, "output directory");

    const auto with_config = [&](CLI::App* cmd) {
        cmd->add_option("-c,--config", config_path, "experiment config JSON file")->required();
        cmd->add_option("-o,--out", out_dir, "output directory");
        return cmd;
    };

    CLI::App* train = with_config(app.add_subcommand("train", "meta-train on the task queue"));
    CLI::App* ft = with_config(app.add_subcommand("finetune", "adapt a checkpoint to the target"));
    ft->add_option("--checkpoint", checkpoint, "model checkpoint to start from")->required();
    CLI::App* ev = with_config(app.add_subcommand("eval", "run the transfer evaluation grid"));
    ev->add_option("--checkpoint", checkpoint, "model checkpoint to evaluate")->required();
    CLI::App* an = with_config(app.add_subcommand("analyze", "representation geometry reports"));
    an->add_option("--checkpoint", checkpoint, "model checkpoint to analyze")->required();
    an->add_option("--before", before, "reference checkpoint for the layer comparison");
    CLI::App* dr = with_config(app.add_subcommand("dreca", "cluster labels and emit the task manifest"));
    dr->add_option("--checkpoint", checkpoint, "encoder checkpoint (omit to cluster raw features)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return xmeta::kExitConfig;
    }

    if (gen->parsed()) {
        cmd_gen_data(xmeta::load_synthetic_spec(spec_path), xmeta::resolve_out_dir("", out_dir));
        return xmeta::kExitOk;
    }
    const xmeta::ExperimentConfig config = xmeta::load_experiment_config(config_path);
    const std::string out = xmeta::resolve_out_dir(config.out_dir, out_dir);
    if (train->parsed()) {
        cmd_train(config, out);
    } else if (ft->parsed()) {
        cmd_finetune(config, checkpoint, out);
    } else if (ev->parsed()) {
        cmd_eval(config, checkpoint, out);
    } else if (an->parsed()) {
        cmd_analyze(config, checkpoint, before, out);
    } else if (dr->parsed()) {
        cmd_dreca(config, checkpoint, out);
    }
    return xmeta::kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const xmeta::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return xmeta::kExitConfig;
    } catch (const xmeta::DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return xmeta::kExitData;
    } catch (const xmeta::NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return xmeta::kExitNumeric;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
