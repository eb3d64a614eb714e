#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "man/data.hpp"
#include "man/metrics.hpp"
#include "man/model.hpp"
#include "man/params.hpp"
#include "man/rng.hpp"

namespace man {

enum class UpdateMode { Joint, Alternating, SingleA, SingleB };

const char* update_mode_name(UpdateMode mode);
UpdateMode update_mode_from_name(const std::string& name);

struct TrainConfig {
    double learning_rate = 0.001;
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    double lambda_a = 1e-5, lambda_b = 1e-5;
    std::size_t batch_size = 128;
    std::size_t max_epochs = 10;
    std::size_t early_stop_patience = 2;
    std::uint64_t seed = 42;
    UpdateMode update_mode = UpdateMode::Joint;
    std::string early_stop_metric = "auc";  // mean over active domains
};

struct AdamParamState {
    std::vector<double> m, v;
    std::uint64_t step = 0;
};

struct AdamState {
    std::map<std::string, AdamParamState> by_name;
};

// One bias-corrected Adam update over `active` parameter names. Item-table
// padding rows have their gradients cleared before and their values re-zeroed
// after the update. Throws on a non-finite gradient, naming the parameter.
void adam_step(const ParameterStore& params, const std::vector<std::string>& active,
               AdamState& state, const TrainConfig& cfg);

// --- checkpointing -----------------------------------------------------------

struct NamedTensor {
    std::string name;
    std::vector<std::uint64_t> dims;
    std::vector<double> data;
};

struct Checkpoint {
    std::uint32_t version = 1;
    std::vector<NamedTensor> records;

    const NamedTensor* find(const std::string& name) const;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

Checkpoint make_checkpoint(const ManModel& model, const AdamState* opt, const Rng* rng);
// Shape-audited restore of parameter values (optimizer records are ignored).
void restore_model(ManModel& model, const Checkpoint& ckpt);
// Rebuilds the model from the checkpoint's embedded config.
ManModel model_from_checkpoint(const Checkpoint& ckpt);
AdamState adam_state_from_checkpoint(const Checkpoint& ckpt, const ManModel& model);

// --- evaluation ----------------------------------------------------------------

std::vector<ScoredExample> score_examples(const ManModel& model,
                                          const std::vector<SequenceExample>& examples);

// auc / gauc / mrr / ndcg@10 for one scored split.
std::map<std::string, double> ranking_metrics(const std::vector<ScoredExample>& scored);

// --- training loop ---------------------------------------------------------------

struct LogRow {
    std::size_t epoch = 0;
    std::string domain, split, metric;
    double value = 0.0;
};

struct TrainResult {
    std::vector<LogRow> log;
    Checkpoint best;         // best-validation parameters
    std::size_t best_epoch = 0;
    double best_validation = 0.0;
    std::size_t epochs_run = 0;
};

void write_training_log(const std::string& path, const std::vector<LogRow>& log);

// Epoch loop: seeded shuffles, mini-batch updates per the update mode,
// per-epoch validation, early stopping on the mean validation AUC of the
// active domains with the configured patience. Returns the best checkpoint.
TrainResult train(ManModel& model, const DatasetSplit& data, const TrainConfig& cfg);

// --- gradient verification --------------------------------------------------------

struct GradCheckConfig {
    Backbone backbone = Backbone::SelfAttention;
    std::size_t seq_len = 4, item_dim = 6, n_groups = 3;
    std::size_t users_per_domain = 3, items_per_domain = 6;
    bool use_isa = true, use_sfa = true, use_gpa = true;
    double lambda_a = 1e-3, lambda_b = 1e-3, lambda_g = 1e-2;
    double step = 1e-5;
    std::uint64_t seed = 7;
};

struct GradCheckReport {
    std::map<std::string, double> per_module;  // module tag -> max rel. error
    double max_rel_error = 0.0;
    bool stop_gradient_exact = false;  // encoder grads through SFA/GPA are 0
    std::size_t parameters_checked = 0;
};

std::string module_of_parameter(const std::string& name);

// Finite-difference sweep of the full objective on a tiny model plus the
// stop-gradient exactness audit.
GradCheckReport verify_gradients(const GradCheckConfig& cfg);

}  // namespace man
