// Command-line front end: dataset preparation, synthesis, training,
// ablations, group-count sweeps, evaluation and analysis export.

#include <CLI11.hpp>
#include <iostream>
#include <string>
#include <vector>

#include "man/cli.hpp"

int main(int argc, char** argv) {
    CLI::App app{"man: cross-domain sequential recommender"};
    app.require_subcommand(1);

    man::cli::PrepareArgs prepare;
    auto* cmd_prepare = app.add_subcommand("prepare", "filter, index and split raw logs");
    cmd_prepare->add_option("--input-a", prepare.input_a, "domain A interactions TSV")->required();
    cmd_prepare->add_option("--input-b", prepare.input_b, "domain B interactions TSV")->required();
    cmd_prepare->add_option("--k-core", prepare.k_core, "k-core filter threshold");
    cmd_prepare->add_option("--max-len", prepare.max_len, "history window length");
    cmd_prepare->add_option("--val-ts", prepare.val_ts, "validation boundary timestamp")
        ->required();
    cmd_prepare->add_option("--test-ts", prepare.test_ts, "test boundary timestamp")->required();
    cmd_prepare->add_option("--out", prepare.out_dir, "output directory")->required();

    std::string config_path, out_dir, checkpoint_path, split = "test";
    std::vector<std::size_t> sweep_values = {1, 5, 10, 20};
    std::size_t analyze_k = 0;

    auto* cmd_synth = app.add_subcommand("synth", "generate a dual-domain synthetic dataset");
    cmd_synth->add_option("--config", config_path, "config file")->required();
    cmd_synth->add_option("--out", out_dir, "output directory")->required();

    auto* cmd_train = app.add_subcommand("train", "train a model from a config");
    cmd_train->add_option("--config", config_path, "config file")->required();
    cmd_train->add_option("--out", out_dir, "output directory")->required();

    auto* cmd_eval = app.add_subcommand("eval", "score a split with a trained checkpoint");
    cmd_eval->add_option("--checkpoint", checkpoint_path, "checkpoint file")->required();
    cmd_eval->add_option("--config", config_path, "config file")->required();
    cmd_eval->add_option("--split", split, "train | validation | test");
    cmd_eval->add_option("--out", out_dir, "output directory")->required();

    auto* cmd_ablate = app.add_subcommand("ablate", "train the module ablation matrix");
    cmd_ablate->add_option("--config", config_path, "config file")->required();
    cmd_ablate->add_option("--out", out_dir, "output directory")->required();

    auto* cmd_sweep = app.add_subcommand("sweep-groups", "train across prototype counts");
    cmd_sweep->add_option("--config", config_path, "config file")->required();
    cmd_sweep->add_option("--values", sweep_values, "prototype counts")->delimiter(',');
    cmd_sweep->add_option("--out", out_dir, "output directory")->required();

    auto* cmd_analyze = app.add_subcommand("analyze", "export and cluster group representations");
    cmd_analyze->add_option("--checkpoint", checkpoint_path, "checkpoint file")->required();
    cmd_analyze->add_option("--config", config_path, "config file")->required();
    cmd_analyze->add_option("--k", analyze_k, "cluster count (default: trained group count)");
    cmd_analyze->add_option("--out", out_dir, "output directory")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (cmd_prepare->parsed()) man::cli::cmd_prepare(prepare);
        if (cmd_synth->parsed()) man::cli::cmd_synth(config_path, out_dir);
        if (cmd_train->parsed()) man::cli::cmd_train(config_path, out_dir);
        if (cmd_eval->parsed()) man::cli::cmd_eval(checkpoint_path, config_path, split, out_dir);
        if (cmd_ablate->parsed()) man::cli::cmd_ablate(config_path, out_dir);
        if (cmd_sweep->parsed()) man::cli::cmd_sweep_groups(config_path, sweep_values, out_dir);
        if (cmd_analyze->parsed())
            man::cli::cmd_analyze(checkpoint_path, config_path, out_dir, analyze_k);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
