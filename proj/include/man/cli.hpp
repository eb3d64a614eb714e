#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "man/config.hpp"
#include "man/data.hpp"
#include "man/model.hpp"
#include "man/training.hpp"

namespace man::cli {

struct PrepareArgs {
    std::string input_a, input_b;
    std::size_t k_core = 10;
    std::size_t max_len = 20;
    std::int64_t val_ts = 0, test_ts = 0;
    std::string out_dir;
};

// Loads a config file and applies the MAN_SEED environment override.
Config load_run_config(const std::string& path);

// Everything a run needs, derived deterministically from one config.
struct RunSetup {
    Config cfg;
    DatasetSplit data;
    ModelConfig model_cfg;
    TrainConfig train_cfg;
    std::optional<std::map<std::string, std::size_t>> ground_truth;
};

RunSetup build_run_setup(const Config& cfg);

ModelConfig model_config_from(const Config& cfg);
TrainConfig train_config_from(const Config& cfg);
SynthConfig synth_config_from(const Config& cfg);

// k-core + vocabularies + timestamp split; writes per-domain split TSVs,
// vocabulary files and a meta file under out_dir.
void cmd_prepare(const PrepareArgs& args);

// Synthetic dual-domain benchmark: domain TSVs plus ground-truth groups.
void cmd_synth(const std::string& config_path, const std::string& out_dir);

// Trains per the config; writes checkpoint.bin and training_log.csv.
void cmd_train(const std::string& config_path, const std::string& out_dir);

// Scores one split with a trained checkpoint; writes metrics.csv.
void cmd_eval(const std::string& checkpoint_path, const std::string& config_path,
              const std::string& split, const std::string& out_dir);

// Trains the full model and the three single-module ablations; writes
// ablation.csv (one row per configuration, domain and metric).
void cmd_ablate(const std::string& config_path, const std::string& out_dir);

// Trains once per prototype count; writes group_sweep.csv.
void cmd_sweep_groups(const std::string& config_path, const std::vector<std::size_t>& values,
                      const std::string& out_dir);

// Exports pooled group representations, clusters them, projects to 2-D and
// (with ground truth) scores the group recovery.
void cmd_analyze(const std::string& checkpoint_path, const std::string& config_path,
                 const std::string& out_dir, std::size_t k_override = 0);

}  // namespace man::cli
