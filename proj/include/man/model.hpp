#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "man/data.hpp"
#include "man/embeddings.hpp"
#include "man/encoders.hpp"
#include "man/mixed_attention.hpp"
#include "man/params.hpp"
#include "man/prediction.hpp"
#include "man/tensor.hpp"

namespace man {

// Single: per-domain encoder + per-domain head, nothing shared.
// Shared:  one shared embedding/encoder/head serving both domains.
// Cross:   the full model (local + global paths and the attention modules).
enum class ModelMode { Single, Shared, Cross };

const char* model_mode_name(ModelMode mode);
ModelMode model_mode_from_name(const std::string& name);
const char* backbone_name(Backbone backbone);
Backbone backbone_from_name(const std::string& name);

struct ModelConfig {
    std::size_t seq_len = 8;     // T
    std::size_t item_dim = 16;   // D
    std::size_t domain_dim = 0;  // 0 -> item_dim / 4, at least 1
    std::size_t n_groups = 5;

    Backbone backbone = Backbone::SelfAttention;
    std::size_t enc_layers = 2;
    std::size_t heads = 1;
    std::size_t enc_mlp_hidden = 0;  // 0 -> item_dim

    std::vector<std::size_t> isa_hidden = {32, 16};
    std::vector<std::size_t> sfa_hidden = {};
    std::vector<std::size_t> gpa_pool_hidden = {};
    std::vector<std::size_t> gpa_agg_hidden = {};
    std::vector<std::size_t> head_hidden = {20, 10};

    bool use_isa = true, use_sfa = true, use_gpa = true;
    ModelMode mode = ModelMode::Cross;
    bool mean_pool = false;  // head inputs pool by sum unless set
    double lambda_g = 1e-4;

    std::size_t vocab_a = 0, vocab_b = 0, vocab_global = 0;

    std::size_t resolved_domain_dim() const {
        return domain_dim ? domain_dim : std::max<std::size_t>(1, item_dim / 4);
    }
    std::size_t emb_width() const { return item_dim + resolved_domain_dim(); }
    void validate() const;
};

class ManModel {
public:
    ManModel(const ModelConfig& config, std::uint64_t seed);

    ModelConfig cfg;
    ParameterStore params;

    struct Forward {
        TensorPtr probability;   // 1 x 1
        TensorPtr pooled_groups; // 1 x item_dim (sum over prototype rows), null without GPA
    };

    Forward forward(const SequenceExample& ex) const;
    double predict(const SequenceExample& ex) const;  // value-only forward

    // Mean NLL of one domain's batch (pointers must share a domain).
    TensorPtr batch_nll(const std::vector<const SequenceExample*>& batch) const;

    // Prototype disentanglement term; scalar zero when GPA is off.
    TensorPtr disentangle_term() const;

    // Joint objective. Either batch may be empty, which drops that domain's
    // NLL and weight penalty (the disentanglement term always applies).
    TensorPtr loss(const std::vector<const SequenceExample*>& batch_a,
                   const std::vector<const SequenceExample*>& batch_b, double lambda_a,
                   double lambda_b, LossBreakdown* breakdown = nullptr) const;

    bool has_local() const { return cfg.mode != ModelMode::Shared; }
    bool has_global() const { return cfg.mode != ModelMode::Single; }

    EmbeddingTables tables;
    std::optional<EncoderParams> enc_a, enc_b, enc_g;
    std::optional<IsaParams> isa_a, isa_b;
    std::optional<SfaParams> sfa_a, sfa_b;
    std::optional<GpaParams> gpa_a, gpa_b;
    TensorPtr prototypes;
    std::vector<MlpLayer> head_a, head_b, head_g;

private:
    TensorPtr local_head_input(const SequenceExample& ex, const TensorPtr& e_local,
                               const TensorPtr& e_global, const TensorPtr& s_local,
                               const TensorPtr& s_global, TensorPtr* pooled_groups) const;
};

// Round-trippable flat key=value form, embedded in checkpoints so a model
// can be rebuilt from the file alone.
std::string model_config_to_text(const ModelConfig& cfg);
ModelConfig model_config_from_text(const std::string& text);

}  // namespace man
