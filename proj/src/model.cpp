#include "man/model.hpp"

#include <sstream>
#include <stdexcept>

#include "man/config.hpp"

namespace man {

const char* model_mode_name(ModelMode mode) {
    switch (mode) {
        case ModelMode::Single: return "single";
        case ModelMode::Shared: return "shared";
        case ModelMode::Cross: return "cross";
    }
    return "cross";
}

ModelMode model_mode_from_name(const std::string& name) {
    if (name == "single") return ModelMode::Single;
    if (name == "shared") return ModelMode::Shared;
    if (name == "cross") return ModelMode::Cross;
    throw std::runtime_error("unknown mode: " + name);
}

const char* backbone_name(Backbone backbone) {
    return backbone == Backbone::SelfAttention ? "self_attention" : "gated_recurrent";
}

Backbone backbone_from_name(const std::string& name) {
    if (name == "self_attention") return Backbone::SelfAttention;
    if (name == "gated_recurrent") return Backbone::GatedRecurrent;
    throw std::runtime_error("unknown backbone: " + name);
}

void ModelConfig::validate() const {
    if (seq_len == 0 || item_dim == 0) throw std::runtime_error("model config: zero dimension");
    if (mode == ModelMode::Cross && use_gpa && n_groups == 0)
        throw std::runtime_error("model config: n_groups must be positive with GPA enabled");
    if (vocab_a == 0 || vocab_b == 0 || vocab_global == 0)
        throw std::runtime_error("model config: vocabulary sizes unset");
    if (mode != ModelMode::Cross && !(use_isa && use_sfa && use_gpa))
        throw std::runtime_error("model config: ablation flags apply to cross mode only");
}

ManModel::ManModel(const ModelConfig& config, std::uint64_t seed) : cfg(config) {
    cfg.validate();
    const std::size_t D = cfg.item_dim;
    const std::size_t W = cfg.emb_width();

    EmbeddingConfig emb;
    emb.seq_len = cfg.seq_len;
    emb.item_dim = D;
    emb.domain_dim = cfg.resolved_domain_dim();
    emb.vocab_a = cfg.vocab_a;
    emb.vocab_b = cfg.vocab_b;
    emb.vocab_global = cfg.vocab_global;
    emb.with_local = has_local();
    emb.with_global = has_global();
    tables = make_embedding_tables(params, emb, seed);

    EncoderConfig enc;
    enc.backbone = cfg.backbone;
    enc.layers = cfg.enc_layers;
    enc.heads = cfg.heads;
    enc.input_dim = W;
    enc.hidden = D;
    enc.mlp_hidden = cfg.enc_mlp_hidden;
    if (has_local()) {
        enc_a = make_encoder(params, "a/enc", enc, seed);
        enc_b = make_encoder(params, "b/enc", enc, seed);
    }
    if (has_global()) enc_g = make_encoder(params, "shared/enc", enc, seed);

    if (cfg.mode == ModelMode::Cross) {
        if (cfg.use_isa) {
            isa_a = make_isa(params, "a/isa", D, W, cfg.isa_hidden, seed);
            isa_b = make_isa(params, "b/isa", D, W, cfg.isa_hidden, seed);
        }
        if (cfg.use_sfa) {
            sfa_a = make_sfa(params, "a/sfa", D, cfg.sfa_hidden, seed);
            sfa_b = make_sfa(params, "b/sfa", D, cfg.sfa_hidden, seed);
        }
        if (cfg.use_gpa) {
            gpa_a = make_gpa(params, "a/gpa", cfg.n_groups, cfg.seq_len, D, cfg.gpa_pool_hidden,
                             cfg.gpa_agg_hidden, seed);
            gpa_b = make_gpa(params, "b/gpa", cfg.n_groups, cfg.seq_len, D, cfg.gpa_pool_hidden,
                             cfg.gpa_agg_hidden, seed);
            prototypes = make_prototypes(params, cfg.n_groups, D, seed);
        }
    }

    // head input widths depend on mode and ablations
    if (has_local()) {
        std::size_t local_width = 2 * D;  // pooled local encoding + target row
        if (cfg.mode == ModelMode::Cross) {
            if (cfg.use_isa) local_width += W;
            if (cfg.use_sfa) local_width += D;
            if (cfg.use_gpa) local_width += D;
        }
        head_a = make_mlp(params, "a/head", local_width, cfg.head_hidden, 1, seed);
        head_b = make_mlp(params, "b/head", local_width, cfg.head_hidden, 1, seed);
    }
    if (has_global())
        head_g = make_mlp(params, "shared/head", 2 * D, cfg.head_hidden, 1, seed);
}

TensorPtr ManModel::local_head_input(const SequenceExample& ex, const TensorPtr& e_local,
                                     const TensorPtr& e_global, const TensorPtr& s_local,
                                     const TensorPtr& s_global, TensorPtr* pooled_groups) const {
    const bool is_a = ex.domain == Domain::A;
    std::vector<TensorPtr> feats;
    if (cfg.mode == ModelMode::Cross) {
        auto emb_sum = add(e_local, e_global);
        if (cfg.use_isa) {
            auto target = target_global_embedding(tables, ex.target_global);
            auto scores =
                item_similarity_scores(is_a ? *isa_a : *isa_b, target, emb_sum, ex.mask);
            auto weighted = item_similarity_weight(scores, emb_sum);
            feats.push_back(pool_rows(weighted, ex.mask, cfg.mean_pool));
        }
        if (cfg.use_sfa) {
            auto fused = sequence_fusion(is_a ? *sfa_a : *sfa_b, s_local, s_global, ex.mask);
            feats.push_back(pool_rows(fused, ex.mask, cfg.mean_pool));
        }
        if (cfg.use_gpa) {
            const auto& gpa = is_a ? *gpa_a : *gpa_b;
            auto relevance = group_pool(gpa, s_local, ex.mask);
            auto aggregated = group_aggregate(gpa, prototypes, s_local, ex.mask);
            auto weighted = group_weight(relevance, aggregated);
            if (pooled_groups) *pooled_groups = pool_all_rows(weighted);
            feats.push_back(pool_all_rows(weighted, cfg.mean_pool));
        }
    }
    feats.push_back(pool_rows(s_local, ex.mask, cfg.mean_pool));
    feats.push_back(target_local_embedding(tables, ex.target_item, ex.domain));
    return concat_cols(feats);
}

ManModel::Forward ManModel::forward(const SequenceExample& ex) const {
    if (ex.history.size() != cfg.seq_len)
        throw std::runtime_error("forward: example length mismatch");
    const bool is_a = ex.domain == Domain::A;
    Forward out;

    TensorPtr e_local, e_global, s_local, s_global;
    if (has_local()) {
        e_local = embed_local(tables, ex.history, ex.domain);
        s_local = encode(is_a ? *enc_a : *enc_b, e_local, ex.mask);
    }
    if (has_global()) {
        e_global = embed_global(tables, ex.history_global, ex.domain);
        s_global = encode(*enc_g, e_global, ex.mask);
    }

    TensorPtr local_in, global_in;
    if (has_local())
        local_in = local_head_input(ex, e_local, e_global, s_local, s_global, &out.pooled_groups);
    if (has_global())
        global_in = concat_cols({pool_rows(s_global, ex.mask, cfg.mean_pool),
                                 target_global_embedding(tables, ex.target_global)});

    out.probability = predict_probability(is_a ? head_a : head_b, local_in, head_g, global_in);
    return out;
}

double ManModel::predict(const SequenceExample& ex) const {
    NoGradGuard guard;
    return forward(ex).probability->scalar_value();
}

TensorPtr ManModel::batch_nll(const std::vector<const SequenceExample*>& batch) const {
    if (batch.empty()) throw std::runtime_error("batch_nll: empty batch");
    std::vector<TensorPtr> probs;
    std::vector<int> labels;
    probs.reserve(batch.size());
    for (const auto* ex : batch) {
        probs.push_back(forward(*ex).probability);
        labels.push_back(ex->label);
    }
    return domain_loss(concat_rows(probs), labels);
}

TensorPtr ManModel::disentangle_term() const {
    if (!prototypes) return scalar_tensor(0.0);
    return disentangle_loss(prototypes, cfg.lambda_g);
}

TensorPtr ManModel::loss(const std::vector<const SequenceExample*>& batch_a,
                         const std::vector<const SequenceExample*>& batch_b, double lambda_a,
                         double lambda_b, LossBreakdown* breakdown) const {
    if (batch_a.empty() && batch_b.empty()) throw std::runtime_error("loss: no batch");
    LossBreakdown bd;
    TensorPtr total;
    auto accumulate = [&total](const TensorPtr& term) {
        total = total ? add(total, term) : term;
    };

    if (!batch_a.empty()) {
        auto nll = batch_nll(batch_a);
        bd.loss_a = nll->scalar_value();
        accumulate(nll);
        if (lambda_a > 0.0) {
            auto reg = regularization_term(params, Ownership::DomainA);
            bd.reg_a = reg->scalar_value();
            accumulate(scale(reg, lambda_a));
        }
    }
    if (!batch_b.empty()) {
        auto nll = batch_nll(batch_b);
        bd.loss_b = nll->scalar_value();
        accumulate(nll);
        if (lambda_b > 0.0) {
            auto reg = regularization_term(params, Ownership::DomainB);
            bd.reg_b = reg->scalar_value();
            accumulate(scale(reg, lambda_b));
        }
    }
    auto disentangle = disentangle_term();
    bd.disentangle = disentangle->scalar_value();
    if (bd.disentangle != 0.0) accumulate(disentangle);

    bd.total = total->scalar_value();
    if (breakdown) *breakdown = bd;
    return total;
}

namespace {

std::string join_sizes(const std::vector<std::size_t>& v) {
    std::ostringstream out;
    for (std::size_t i = 0; i < v.size(); ++i) out << (i ? "," : "") << v[i];
    return out.str();
}

}  // namespace

std::string model_config_to_text(const ModelConfig& cfg) {
    Config c;
    c.set("model.seq_len", std::to_string(cfg.seq_len));
    c.set("model.item_dim", std::to_string(cfg.item_dim));
    c.set("model.domain_dim", std::to_string(cfg.domain_dim));
    c.set("model.n_groups", std::to_string(cfg.n_groups));
    c.set("model.backbone", backbone_name(cfg.backbone));
    c.set("model.enc_layers", std::to_string(cfg.enc_layers));
    c.set("model.heads", std::to_string(cfg.heads));
    c.set("model.enc_mlp_hidden", std::to_string(cfg.enc_mlp_hidden));
    c.set("model.isa_hidden", join_sizes(cfg.isa_hidden));
    c.set("model.sfa_hidden", join_sizes(cfg.sfa_hidden));
    c.set("model.gpa_pool_hidden", join_sizes(cfg.gpa_pool_hidden));
    c.set("model.gpa_agg_hidden", join_sizes(cfg.gpa_agg_hidden));
    c.set("model.head_hidden", join_sizes(cfg.head_hidden));
    c.set("model.use_isa", cfg.use_isa ? "true" : "false");
    c.set("model.use_sfa", cfg.use_sfa ? "true" : "false");
    c.set("model.use_gpa", cfg.use_gpa ? "true" : "false");
    c.set("model.mode", model_mode_name(cfg.mode));
    c.set("model.mean_pool", cfg.mean_pool ? "true" : "false");
    std::ostringstream lg;
    lg.precision(17);
    lg << cfg.lambda_g;
    c.set("model.lambda_g", lg.str());
    c.set("model.vocab_a", std::to_string(cfg.vocab_a));
    c.set("model.vocab_b", std::to_string(cfg.vocab_b));
    c.set("model.vocab_global", std::to_string(cfg.vocab_global));
    return c.text();
}

ModelConfig model_config_from_text(const std::string& text) {
    const Config c = Config::parse(text);
    ModelConfig cfg;
    cfg.seq_len = c.get_uint("model.seq_len", cfg.seq_len);
    cfg.item_dim = c.get_uint("model.item_dim", cfg.item_dim);
    cfg.domain_dim = c.get_uint("model.domain_dim", cfg.domain_dim);
    cfg.n_groups = c.get_uint("model.n_groups", cfg.n_groups);
    cfg.backbone = backbone_from_name(c.get_string("model.backbone", backbone_name(cfg.backbone)));
    cfg.enc_layers = c.get_uint("model.enc_layers", cfg.enc_layers);
    cfg.heads = c.get_uint("model.heads", cfg.heads);
    cfg.enc_mlp_hidden = c.get_uint("model.enc_mlp_hidden", cfg.enc_mlp_hidden);
    cfg.isa_hidden = c.get_size_list("model.isa_hidden", cfg.isa_hidden);
    cfg.sfa_hidden = c.get_size_list("model.sfa_hidden", cfg.sfa_hidden);
    cfg.gpa_pool_hidden = c.get_size_list("model.gpa_pool_hidden", cfg.gpa_pool_hidden);
    cfg.gpa_agg_hidden = c.get_size_list("model.gpa_agg_hidden", cfg.gpa_agg_hidden);
    cfg.head_hidden = c.get_size_list("model.head_hidden", cfg.head_hidden);
    cfg.use_isa = c.get_bool("model.use_isa", cfg.use_isa);
    cfg.use_sfa = c.get_bool("model.use_sfa", cfg.use_sfa);
    cfg.use_gpa = c.get_bool("model.use_gpa", cfg.use_gpa);
    cfg.mode = model_mode_from_name(c.get_string("model.mode", model_mode_name(cfg.mode)));
    cfg.mean_pool = c.get_bool("model.mean_pool", cfg.mean_pool);
    cfg.lambda_g = c.get_double("model.lambda_g", cfg.lambda_g);
    cfg.vocab_a = c.get_uint("model.vocab_a", 0);
    cfg.vocab_b = c.get_uint("model.vocab_b", 0);
    cfg.vocab_global = c.get_uint("model.vocab_global", 0);
    return cfg;
}

}  // namespace man
