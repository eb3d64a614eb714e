#pragma once

#include <cstdint>

#include "man/data.hpp"
#include "man/params.hpp"
#include "man/tensor.hpp"

namespace man {

struct EmbeddingConfig {
    std::size_t seq_len = 0;     // T
    std::size_t item_dim = 0;    // D (shared table uses the same width)
    std::size_t domain_dim = 0;  // concatenated per-domain embedding
    std::size_t vocab_a = 0, vocab_b = 0, vocab_global = 0;  // real items, padding excluded
    bool with_local = true;
    bool with_global = true;
};

// Item, positional and domain embedding tables. Item tables carry one extra
// leading row for the padding item; that row is zero and stays zero (the
// optimizer re-clears it after every step).
struct EmbeddingTables {
    EmbeddingConfig cfg;
    TensorPtr item_a, item_b, item_global;
    TensorPtr pos_a, pos_b, pos_global;
    TensorPtr dom_a, dom_b;

    std::size_t local_width() const { return cfg.item_dim + cfg.domain_dim; }
    std::size_t global_width() const { return cfg.item_dim + cfg.domain_dim; }
};

EmbeddingTables make_embedding_tables(ParameterStore& store, const EmbeddingConfig& cfg,
                                      std::uint64_t seed);

// Row t = item_table[history[t]] + pos_table[t], with the owning domain's
// embedding concatenated. Padding positions still produce P_t || d; masks
// exclude them downstream.
TensorPtr embed_local(const EmbeddingTables& tables, const std::vector<std::size_t>& history,
                      Domain domain);
TensorPtr embed_global(const EmbeddingTables& tables,
                       const std::vector<std::size_t>& history_global, Domain domain);

// Target rows are bare table lookups (no positional or domain parts).
TensorPtr target_local_embedding(const EmbeddingTables& tables, std::size_t item, Domain domain);
TensorPtr target_global_embedding(const EmbeddingTables& tables, std::size_t item_global);

}  // namespace man
