#include "man/mixed_attention.hpp"

#include <cmath>
#include <stdexcept>

namespace man {

namespace {

TensorPtr xavier_param(ParameterStore& store, const std::string& name, std::size_t rows,
                       std::size_t cols, std::uint64_t seed) {
    Rng rng(seed, "init/" + name);
    return store.add(name, xavier_init(rows, cols, rng));
}

bool any_real(const std::vector<std::uint8_t>& mask) {
    for (auto m : mask)
        if (m) return true;
    return false;
}

TensorPtr mask_column(const std::vector<std::uint8_t>& mask) {
    auto col = tensor(mask.size(), 1);
    for (std::size_t t = 0; t < mask.size(); ++t) col->data[t] = mask[t] ? 1.0 : 0.0;
    return col;
}

TensorPtr key_mask_bias(const std::vector<std::uint8_t>& mask) {
    auto bias = tensor(1, mask.size());
    for (std::size_t t = 0; t < mask.size(); ++t) bias->data[t] = mask[t] ? 0.0 : -1e9;
    return bias;
}

// Atten(X Wq, Y Wk, Y Wv) with padded key positions excluded. Returns zeros
// when the mask admits no key at all.
TensorPtr cross_attention(const TensorPtr& x, const TensorPtr& y, const TensorPtr& wq,
                          const TensorPtr& wk, const TensorPtr& wv,
                          const std::vector<std::uint8_t>& mask) {
    if (!any_real(mask)) return zeros(x->rows, wv->cols);
    auto q = matmul(x, wq);
    auto k = matmul(y, wk);
    auto v = matmul(y, wv);
    auto scores = scale(matmul(q, transpose(k)), 1.0 / std::sqrt(double(q->cols)));
    auto weights = softmax(add_rowvec(scores, key_mask_bias(mask)), 1);
    return matmul(weights, v);
}

}  // namespace

IsaParams make_isa(ParameterStore& store, const std::string& prefix, std::size_t target_dim,
                   std::size_t emb_width, const std::vector<std::size_t>& hidden,
                   std::uint64_t seed) {
    IsaParams p;
    p.mlp = make_mlp(store, prefix + "/mlp", target_dim + emb_width, hidden, 1, seed);
    return p;
}

SfaParams make_sfa(ParameterStore& store, const std::string& prefix, std::size_t dim,
                   const std::vector<std::size_t>& hidden, std::uint64_t seed) {
    SfaParams p;
    p.wq = xavier_param(store, prefix + "/wq", dim, dim, seed);
    p.wk = xavier_param(store, prefix + "/wk", dim, dim, seed);
    p.wv = xavier_param(store, prefix + "/wv", dim, dim, seed);
    p.mlp = make_mlp(store, prefix + "/mlp", dim, hidden, dim, seed);
    return p;
}

GpaParams make_gpa(ParameterStore& store, const std::string& prefix, std::size_t n_groups,
                   std::size_t seq_len, std::size_t dim,
                   const std::vector<std::size_t>& pool_hidden,
                   const std::vector<std::size_t>& agg_hidden, std::uint64_t seed) {
    GpaParams p;
    p.w_pool = xavier_param(store, prefix + "/w_pool", n_groups, seq_len, seed);
    p.pool_mlp = make_mlp(store, prefix + "/pool_mlp", dim, pool_hidden, 1, seed);
    p.wq = xavier_param(store, prefix + "/wq", dim, dim, seed);
    p.wk = xavier_param(store, prefix + "/wk", dim, dim, seed);
    p.wv = xavier_param(store, prefix + "/wv", dim, dim, seed);
    p.agg_mlp = make_mlp(store, prefix + "/agg_mlp", dim, agg_hidden, dim, seed);
    return p;
}

TensorPtr make_prototypes(ParameterStore& store, std::size_t n_groups, std::size_t dim,
                          std::uint64_t seed) {
    return xavier_param(store, "shared/prototypes", n_groups, dim, seed);
}

TensorPtr item_similarity_scores(const IsaParams& params, const TensorPtr& target_global_emb,
                                 const TensorPtr& emb_sum,
                                 const std::vector<std::uint8_t>& mask) {
    if (target_global_emb->rows != 1)
        throw std::runtime_error("item_similarity_scores: target must be a single row");
    if (mask.size() != emb_sum->rows)
        throw std::runtime_error("item_similarity_scores: mask length mismatch");
    auto tiled = repeat_row(target_global_emb, emb_sum->rows);
    auto raw = mlp_apply(concat_cols({tiled, emb_sum}), params.mlp);
    auto bias = tensor(emb_sum->rows, 1);
    for (std::size_t t = 0; t < mask.size(); ++t) bias->data[t] = mask[t] ? 0.0 : -1e9;
    return add(raw, bias);
}

TensorPtr item_similarity_weight(const TensorPtr& scores, const TensorPtr& emb_sum) {
    if (scores->cols != 1 || scores->rows != emb_sum->rows)
        throw std::runtime_error("item_similarity_weight: scores " + scores->shape_str() +
                                 " vs embeddings " + emb_sum->shape_str());
    return mul_colvec(emb_sum, softmax(scores, 0));
}

TensorPtr sequence_fusion(const SfaParams& params, const TensorPtr& s_local,
                          const TensorPtr& s_global, const std::vector<std::uint8_t>& mask) {
    auto local_fixed = stop_gradient(s_local);
    auto global_fixed = stop_gradient(s_global);
    auto ca = cross_attention(local_fixed, global_fixed, params.wq, params.wk, params.wv, mask);
    return mlp_apply(add(ca, local_fixed), params.mlp);
}

TensorPtr group_pool(const GpaParams& params, const TensorPtr& s_local,
                     const std::vector<std::uint8_t>& mask) {
    auto fixed = mul_colvec(stop_gradient(s_local), mask_column(mask));
    return mlp_apply(matmul(params.w_pool, fixed), params.pool_mlp);
}

TensorPtr group_aggregate(const GpaParams& params, const TensorPtr& prototypes,
                          const TensorPtr& s_local, const std::vector<std::uint8_t>& mask) {
    auto fixed = stop_gradient(s_local);
    auto ca = cross_attention(prototypes, fixed, params.wq, params.wk, params.wv, mask);
    return mlp_apply(ca, params.agg_mlp);
}

TensorPtr group_weight(const TensorPtr& relevance, const TensorPtr& aggregated) {
    if (relevance->cols != 1 || relevance->rows != aggregated->rows)
        throw std::runtime_error("group_weight: relevance " + relevance->shape_str() +
                                 " vs aggregated " + aggregated->shape_str());
    return mul_colvec(aggregated, softmax(relevance, 0));
}

TensorPtr disentangle_loss(const TensorPtr& prototypes, double lambda_g) {
    if (lambda_g < 0) throw std::runtime_error("disentangle_loss: lambda_g must be >= 0");
    const std::size_t n = prototypes->rows;
    if (n < 2 || lambda_g == 0.0) return scalar_tensor(0.0);
    TensorPtr acc;
    for (std::size_t i = 0; i < n; ++i) {
        auto gi = slice_rows(prototypes, i, i + 1);
        for (std::size_t j = i + 1; j < n; ++j) {
            auto d = sub(gi, slice_rows(prototypes, j, j + 1));
            auto sq = sum_all(mul(d, d));
            acc = acc ? add(acc, sq) : sq;
        }
    }
    return scale(acc, -lambda_g);
}

}  // namespace man
