#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "man/params.hpp"
#include "man/tensor.hpp"

namespace man {

// Item similarity attention: scores every history position against the
// target item and reweighs the summed local+global embeddings.
struct IsaParams {
    std::vector<MlpLayer> mlp;  // (target_dim + emb_width) -> 1
};

// Sequence-fusion attention: cross-attention from the local encoding onto
// the global encoding, followed by a row-wise MLP. Both encoder outputs are
// consumed through stop-gradient, so fusion never trains the encoders.
struct SfaParams {
    TensorPtr wq, wk, wv;       // dim x dim
    std::vector<MlpLayer> mlp;  // dim -> dim
};

// Group-prototype attention: a soft pooling matrix scores the sequence's
// relevance to each group while the shared prototypes query the sequence.
// The encoder output is consumed through stop-gradient here as well.
struct GpaParams {
    TensorPtr w_pool;                // n_groups x T
    std::vector<MlpLayer> pool_mlp;  // dim -> 1, applied per pooled row
    TensorPtr wq, wk, wv;            // dim x dim
    std::vector<MlpLayer> agg_mlp;   // dim -> dim
};

IsaParams make_isa(ParameterStore& store, const std::string& prefix, std::size_t target_dim,
                   std::size_t emb_width, const std::vector<std::size_t>& hidden,
                   std::uint64_t seed);
SfaParams make_sfa(ParameterStore& store, const std::string& prefix, std::size_t dim,
                   const std::vector<std::size_t>& hidden, std::uint64_t seed);
GpaParams make_gpa(ParameterStore& store, const std::string& prefix, std::size_t n_groups,
                   std::size_t seq_len, std::size_t dim,
                   const std::vector<std::size_t>& pool_hidden,
                   const std::vector<std::size_t>& agg_hidden, std::uint64_t seed);
TensorPtr make_prototypes(ParameterStore& store, std::size_t n_groups, std::size_t dim,
                          std::uint64_t seed);

// T x 1 scores; masked positions receive -1e9 so a downstream softmax
// assigns them (numerically exact) zero weight.
TensorPtr item_similarity_scores(const IsaParams& params, const TensorPtr& target_global_emb,
                                 const TensorPtr& emb_sum,
                                 const std::vector<std::uint8_t>& mask);

// Row t of the result is softmax(scores)_t * emb_sum_t.
TensorPtr item_similarity_weight(const TensorPtr& scores, const TensorPtr& emb_sum);

TensorPtr sequence_fusion(const SfaParams& params, const TensorPtr& s_local,
                          const TensorPtr& s_global, const std::vector<std::uint8_t>& mask);

// n_groups x 1 relevance scores from the pooled sequence.
TensorPtr group_pool(const GpaParams& params, const TensorPtr& s_local,
                     const std::vector<std::uint8_t>& mask);

// n_groups x dim: prototypes query the sequence; a fully masked sequence
// aggregates to zero before the MLP.
TensorPtr group_aggregate(const GpaParams& params, const TensorPtr& prototypes,
                          const TensorPtr& s_local, const std::vector<std::uint8_t>& mask);

// Row k of the result is softmax(relevance)_k * aggregated_k.
TensorPtr group_weight(const TensorPtr& relevance, const TensorPtr& aggregated);

// -lambda_g * sum over prototype pairs of squared Euclidean distance; always
// <= 0 and 0 exactly when all prototypes coincide.
TensorPtr disentangle_loss(const TensorPtr& prototypes, double lambda_g);

}  // namespace man
