#include "man/embeddings.hpp"

#include <stdexcept>

namespace man {

namespace {

TensorPtr add_param(ParameterStore& store, const std::string& name, std::size_t rows,
                    std::size_t cols, std::uint64_t seed, bool freeze_row0 = false) {
    Rng rng(seed, "init/" + name);
    auto t = xavier_init(rows, cols, rng);
    if (freeze_row0)
        for (std::size_t j = 0; j < cols; ++j) t->data[j] = 0.0;
    return store.add(name, t, freeze_row0);
}

}  // namespace

EmbeddingTables make_embedding_tables(ParameterStore& store, const EmbeddingConfig& cfg,
                                      std::uint64_t seed) {
    if (cfg.seq_len == 0 || cfg.item_dim == 0)
        throw std::runtime_error("make_embedding_tables: zero dimension");
    EmbeddingTables t;
    t.cfg = cfg;
    if (cfg.with_local) {
        t.item_a = add_param(store, "a/item_table", cfg.vocab_a + 1, cfg.item_dim, seed, true);
        t.item_b = add_param(store, "b/item_table", cfg.vocab_b + 1, cfg.item_dim, seed, true);
        t.pos_a = add_param(store, "a/pos_table", cfg.seq_len, cfg.item_dim, seed);
        t.pos_b = add_param(store, "b/pos_table", cfg.seq_len, cfg.item_dim, seed);
    }
    if (cfg.with_global) {
        t.item_global =
            add_param(store, "shared/item_table", cfg.vocab_global + 1, cfg.item_dim, seed, true);
        t.pos_global = add_param(store, "shared/pos_table", cfg.seq_len, cfg.item_dim, seed);
    }
    if (cfg.domain_dim > 0) {
        t.dom_a = add_param(store, "a/domain_emb", 1, cfg.domain_dim, seed);
        t.dom_b = add_param(store, "b/domain_emb", 1, cfg.domain_dim, seed);
    }
    return t;
}

namespace {

TensorPtr embed_from(const TensorPtr& item_table, const TensorPtr& pos_table,
                     const TensorPtr& domain_emb, const std::vector<std::size_t>& history,
                     std::size_t seq_len) {
    if (history.size() != seq_len)
        throw std::runtime_error("embed: history length " + std::to_string(history.size()) +
                                 " != T=" + std::to_string(seq_len));
    auto rows = gather_rows(item_table, history);
    auto e = add(rows, pos_table);
    if (domain_emb) e = concat_cols({e, repeat_row(domain_emb, seq_len)});
    return e;
}

}  // namespace

TensorPtr embed_local(const EmbeddingTables& t, const std::vector<std::size_t>& history,
                      Domain domain) {
    if (!t.cfg.with_local) throw std::runtime_error("embed_local: local tables not present");
    const bool is_a = domain == Domain::A;
    return embed_from(is_a ? t.item_a : t.item_b, is_a ? t.pos_a : t.pos_b,
                      is_a ? t.dom_a : t.dom_b, history, t.cfg.seq_len);
}

TensorPtr embed_global(const EmbeddingTables& t, const std::vector<std::size_t>& history_global,
                       Domain domain) {
    if (!t.cfg.with_global) throw std::runtime_error("embed_global: global tables not present");
    return embed_from(t.item_global, t.pos_global,
                      domain == Domain::A ? t.dom_a : t.dom_b, history_global, t.cfg.seq_len);
}

TensorPtr target_local_embedding(const EmbeddingTables& t, std::size_t item, Domain domain) {
    return gather_rows(domain == Domain::A ? t.item_a : t.item_b, {item});
}

TensorPtr target_global_embedding(const EmbeddingTables& t, std::size_t item_global) {
    return gather_rows(t.item_global, {item_global});
}

}  // namespace man
