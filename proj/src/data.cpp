#include "man/data.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace man {

std::size_t Vocabulary::add(const std::string& item_id) {
    auto it = index.find(item_id);
    if (it != index.end()) return it->second;
    items.push_back(item_id);
    index[item_id] = items.size();
    return items.size();
}

std::size_t Vocabulary::at(const std::string& item_id) const {
    auto it = index.find(item_id);
    if (it == index.end()) throw std::runtime_error("item not in vocabulary: " + item_id);
    return it->second;
}

namespace {

std::int64_t parse_int(const std::string& field, const std::string& what, std::size_t line_no) {
    std::int64_t value = 0;
    auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
    if (ec != std::errc() || ptr != field.data() + field.size())
        throw std::runtime_error("line " + std::to_string(line_no) + ": non-integer " + what +
                                 " '" + field + "'");
    return value;
}

}  // namespace

std::vector<InteractionRecord> load_interactions(const std::string& path, Domain domain) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open interactions file: " + path);
    std::vector<InteractionRecord> records;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::size_t start = 0;
        for (;;) {
            const std::size_t tab = line.find('\t', start);
            fields.push_back(line.substr(start, tab == std::string::npos ? tab : tab - start));
            if (tab == std::string::npos) break;
            start = tab + 1;
        }
        if (fields.size() != 4)
            throw std::runtime_error("line " + std::to_string(line_no) + ": expected 4 columns, got " +
                                     std::to_string(fields.size()));
        InteractionRecord rec;
        rec.user_id = fields[0];
        rec.item_id = fields[1];
        rec.timestamp = parse_int(fields[2], "timestamp", line_no);
        if (rec.timestamp < 0)
            throw std::runtime_error("line " + std::to_string(line_no) + ": negative timestamp");
        const std::int64_t label = parse_int(fields[3], "label", line_no);
        if (label != 0 && label != 1)
            throw std::runtime_error("line " + std::to_string(line_no) + ": label " +
                                     std::to_string(label) + " outside {0,1}");
        rec.label = static_cast<int>(label);
        rec.domain = domain;
        records.push_back(std::move(rec));
    }
    return records;
}

void write_interactions(const std::string& path, const std::vector<InteractionRecord>& records) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write interactions file: " + path);
    for (const auto& r : records)
        out << r.user_id << '\t' << r.item_id << '\t' << r.timestamp << '\t' << r.label << '\n';
}

std::vector<InteractionRecord> apply_k_core(std::vector<InteractionRecord> records,
                                            std::size_t k) {
    if (k < 1) throw std::runtime_error("apply_k_core: k must be >= 1");
    for (;;) {
        std::map<std::string, std::size_t> user_count, item_count;
        for (const auto& r : records) {
            user_count[r.user_id]++;
            item_count[r.item_id]++;
        }
        std::vector<InteractionRecord> kept;
        kept.reserve(records.size());
        for (auto& r : records)
            if (user_count[r.user_id] >= k && item_count[r.item_id] >= k)
                kept.push_back(std::move(r));
        if (kept.size() == records.size()) return kept;
        records = std::move(kept);
    }
}

std::vector<SequenceExample> build_sequences(const std::vector<InteractionRecord>& records,
                                             std::size_t T, const Vocabulary& vocab) {
    // per-user positive interactions, sorted by (timestamp, item_id)
    std::map<std::string, std::vector<const InteractionRecord*>> per_user;
    for (const auto& r : records)
        if (r.label == 1) per_user[r.user_id].push_back(&r);

    std::vector<SequenceExample> out;
    for (auto& [user, items] : per_user) {
        std::sort(items.begin(), items.end(),
                  [](const InteractionRecord* x, const InteractionRecord* y) {
                      if (x->timestamp != y->timestamp) return x->timestamp < y->timestamp;
                      return x->item_id < y->item_id;
                  });
        std::vector<std::size_t> seen;  // item indices in chronological order
        for (const auto* rec : items) {
            SequenceExample ex;
            ex.user_id = user;
            ex.domain = rec->domain;
            ex.target_item = vocab.at(rec->item_id);
            ex.label = 1;
            ex.target_ts = rec->timestamp;
            ex.history.assign(T, 0);
            ex.mask.assign(T, 0);
            const std::size_t n = std::min(T, seen.size());
            for (std::size_t i = 0; i < n; ++i) {
                ex.history[T - n + i] = seen[seen.size() - n + i];
                ex.mask[T - n + i] = 1;
            }
            out.push_back(std::move(ex));
            seen.push_back(vocab.at(rec->item_id));
        }
    }
    return out;
}

std::vector<SequenceExample> sample_negatives(const std::vector<SequenceExample>& examples,
                                              const Vocabulary& vocab, std::size_t ratio,
                                              std::uint64_t seed) {
    std::map<std::string, std::set<std::size_t>> user_positives;
    for (const auto& ex : examples)
        if (ex.label == 1) user_positives[ex.user_id].insert(ex.target_item);
    return sample_negatives(examples, vocab, ratio, seed, user_positives);
}

std::vector<SequenceExample> sample_negatives(
    const std::vector<SequenceExample>& examples, const Vocabulary& vocab, std::size_t ratio,
    std::uint64_t seed, const std::map<std::string, std::set<std::size_t>>& exclusions) {
    if (ratio < 1) throw std::runtime_error("sample_negatives: ratio must be >= 1");
    static const std::set<std::size_t> kEmpty;

    std::vector<SequenceExample> out;
    out.reserve(examples.size() * (1 + ratio));
    std::size_t next_set = 0;
    for (const auto& ex : examples) {
        if (ex.label != 1) continue;
        auto found = exclusions.find(ex.user_id);
        const auto& positives = found == exclusions.end() ? kEmpty : found->second;
        if (vocab.size() < positives.size() + ratio)
            throw std::runtime_error("sample_negatives: vocabulary of " +
                                     std::to_string(vocab.size()) + " items cannot supply " +
                                     std::to_string(ratio) + " negatives for user " + ex.user_id);
        SequenceExample pos = ex;
        pos.candidate_set = next_set;
        out.push_back(pos);

        Rng rng(seed, "negatives/" + ex.user_id + "/" + std::to_string(next_set));
        std::set<std::size_t> drawn;
        while (drawn.size() < ratio) {
            const std::size_t item = 1 + rng.uniform_int(vocab.size());
            if (positives.count(item) || drawn.count(item)) continue;
            drawn.insert(item);
            SequenceExample neg = ex;
            neg.target_item = item;
            neg.label = 0;
            neg.candidate_set = next_set;
            out.push_back(std::move(neg));
        }
        ++next_set;
    }
    return out;
}

DomainSplit chronological_split(const std::vector<SequenceExample>& examples,
                                std::int64_t val_boundary, std::int64_t test_boundary) {
    if (val_boundary >= test_boundary)
        throw std::runtime_error("chronological_split: boundaries out of order");
    DomainSplit split;
    for (const auto& ex : examples) {
        if (ex.target_ts < val_boundary)
            split.train.push_back(ex);
        else if (ex.target_ts < test_boundary)
            split.validation.push_back(ex);
        else
            split.test.push_back(ex);
    }
    return split;
}

void build_vocabularies(const std::vector<InteractionRecord>& records_a,
                        const std::vector<InteractionRecord>& records_b, DatasetSplit& out) {
    for (const auto& r : records_a)
        if (r.label == 1) out.vocab_a.add(r.item_id);
    for (const auto& r : records_b)
        if (r.label == 1) out.vocab_b.add(r.item_id);
    for (const auto& id : out.vocab_a.items) out.vocab_global.add(id);
    for (const auto& id : out.vocab_b.items) out.vocab_global.add(id);

    out.local_to_global_a.assign(out.vocab_a.size() + 1, 0);
    for (std::size_t i = 0; i < out.vocab_a.size(); ++i)
        out.local_to_global_a[i + 1] = out.vocab_global.at(out.vocab_a.items[i]);
    out.local_to_global_b.assign(out.vocab_b.size() + 1, 0);
    for (std::size_t i = 0; i < out.vocab_b.size(); ++i)
        out.local_to_global_b[i + 1] = out.vocab_global.at(out.vocab_b.items[i]);
}

void attach_global_indices(SequenceExample& ex, const std::vector<std::size_t>& local_to_global) {
    ex.history_global.resize(ex.history.size());
    for (std::size_t i = 0; i < ex.history.size(); ++i)
        ex.history_global[i] = local_to_global[ex.history[i]];
    ex.target_global = local_to_global[ex.target_item];
}

namespace {

struct SynthCatalog {
    std::vector<std::string> item_ids;             // per domain
    std::vector<std::size_t> item_group;           // primary group per item
    std::vector<std::vector<std::size_t>> by_group;  // group -> item positions
};

SynthCatalog make_catalog(const SynthConfig& cfg, Domain domain, std::size_t shared_count,
                          Rng& rng_items, const std::vector<std::size_t>& shared_groups) {
    SynthCatalog cat;
    cat.by_group.resize(cfg.n_groups);
    for (std::size_t i = 0; i < cfg.items_per_domain; ++i) {
        const bool shared = i < shared_count;
        std::string id = shared ? "i_shared_" + std::to_string(i)
                                : std::string("i") + domain_name(domain) + "_" + std::to_string(i);
        const std::size_t group =
            shared ? shared_groups[i] : rng_items.uniform_int(cfg.n_groups);
        cat.item_ids.push_back(std::move(id));
        cat.item_group.push_back(group);
        cat.by_group[group].push_back(i);
    }
    return cat;
}

}  // namespace

SynthResult synth_generate(const SynthConfig& cfg) {
    if (cfg.users_per_domain == 0 || cfg.items_per_domain == 0 || cfg.n_groups == 0)
        throw std::runtime_error("synth_generate: counts must be positive");
    if (cfg.overlap_user_fraction < 0 || cfg.overlap_user_fraction > 1 ||
        cfg.overlap_item_fraction < 0 || cfg.overlap_item_fraction > 1)
        throw std::runtime_error("synth_generate: overlap fractions must lie in [0,1]");

    SynthResult res;
    const std::size_t shared_users =
        static_cast<std::size_t>(cfg.overlap_user_fraction * cfg.users_per_domain + 0.5);
    const std::size_t shared_items =
        static_cast<std::size_t>(cfg.overlap_item_fraction * cfg.items_per_domain + 0.5);

    Rng rng_groups(cfg.seed, "synth/groups");
    std::vector<std::size_t> shared_item_groups(shared_items);
    for (auto& g : shared_item_groups) g = rng_groups.uniform_int(cfg.n_groups);

    Rng rng_items_a(cfg.seed, "synth/items/a");
    Rng rng_items_b(cfg.seed, "synth/items/b");
    const SynthCatalog cat_a =
        make_catalog(cfg, Domain::A, shared_items, rng_items_a, shared_item_groups);
    const SynthCatalog cat_b =
        make_catalog(cfg, Domain::B, shared_items, rng_items_b, shared_item_groups);
    for (std::size_t i = 0; i < cfg.items_per_domain; ++i) {
        res.item_group_a[cat_a.item_ids[i]] = cat_a.item_group[i];
        res.item_group_b[cat_b.item_ids[i]] = cat_b.item_group[i];
    }

    auto user_ids_for = [&](Domain d) {
        std::vector<std::string> ids;
        for (std::size_t u = 0; u < cfg.users_per_domain; ++u)
            ids.push_back(u < shared_users
                              ? "u_shared_" + std::to_string(u)
                              : std::string("u") + domain_name(d) + "_" + std::to_string(u));
        return ids;
    };

    auto generate_domain = [&](Domain d, const SynthCatalog& cat, double len_mean,
                               std::vector<InteractionRecord>& out) {
        const auto ids = user_ids_for(d);
        for (const auto& uid : ids) {
            // shared users keep one group across domains
            auto found = res.user_group.find(uid);
            std::size_t group;
            if (found != res.user_group.end()) {
                group = found->second;
            } else {
                Rng g(cfg.seed, "synth/user_group/" + uid);
                group = g.uniform_int(cfg.n_groups);
                res.user_group[uid] = group;
            }
            Rng rng(cfg.seed, "synth/clicks/" + std::string(domain_name(d)) + "/" + uid);
            const std::size_t len = std::max<std::uint64_t>(2, rng.poisson(len_mean));
            const auto& pool = cat.by_group[group];
            for (std::size_t t = 0; t < len; ++t) {
                std::size_t pos;
                if (pool.empty() || rng.uniform() < cfg.noise)
                    pos = rng.uniform_int(cat.item_ids.size());
                else
                    pos = pool[rng.uniform_int(pool.size())];
                InteractionRecord rec;
                rec.user_id = uid;
                rec.item_id = cat.item_ids[pos];
                rec.timestamp = static_cast<std::int64_t>(rng.uniform_int(cfg.time_horizon));
                rec.label = 1;
                rec.domain = d;
                out.push_back(std::move(rec));
            }
        }
    };

    const double mean_b = cfg.seq_len_mean_b < 0 ? cfg.seq_len_mean : cfg.seq_len_mean_b;
    generate_domain(Domain::A, cat_a, cfg.seq_len_mean, res.records_a);
    generate_domain(Domain::B, cat_b, mean_b, res.records_b);
    return res;
}

void write_ground_truth_groups(const std::string& path,
                               const std::map<std::string, std::size_t>& user_group) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write groups file: " + path);
    for (const auto& [user, group] : user_group) out << user << '\t' << group << '\n';
}

std::map<std::string, std::size_t> load_ground_truth_groups(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open groups file: " + path);
    std::map<std::string, std::size_t> out;
    std::string user;
    std::size_t group;
    while (in >> user >> group) out[user] = group;
    return out;
}

namespace {

DatasetSplit assemble_dataset(const std::vector<InteractionRecord>& filtered_a,
                              const std::vector<InteractionRecord>& filtered_b,
                              const PipelineConfig& cfg, DatasetSplit out) {
    auto assemble = [&](const std::vector<InteractionRecord>& records, Domain d) {
        const auto& vocab = d == Domain::A ? out.vocab_a : out.vocab_b;
        const auto& to_global = d == Domain::A ? out.local_to_global_a : out.local_to_global_b;
        auto examples = build_sequences(records, cfg.seq_len, vocab);

        std::map<std::string, std::set<std::size_t>> interacted;
        for (const auto& ex : examples) interacted[ex.user_id].insert(ex.target_item);

        auto split = chronological_split(examples, cfg.val_boundary, cfg.test_boundary);
        const std::string tag = domain_name(d);
        split.train = sample_negatives(split.train, vocab, cfg.neg_train,
                                       cfg.seed ^ hash_tag("neg/train/" + tag), interacted);
        split.validation = sample_negatives(split.validation, vocab, cfg.neg_eval,
                                            cfg.seed ^ hash_tag("neg/val/" + tag), interacted);
        split.test = sample_negatives(split.test, vocab, cfg.neg_eval,
                                      cfg.seed ^ hash_tag("neg/test/" + tag), interacted);
        for (auto* bucket : {&split.train, &split.validation, &split.test})
            for (auto& ex : *bucket) attach_global_indices(ex, to_global);
        return split;
    };

    out.a = assemble(filtered_a, Domain::A);
    out.b = assemble(filtered_b, Domain::B);
    return out;
}

}  // namespace

DatasetSplit build_dataset(const std::vector<InteractionRecord>& records_a,
                           const std::vector<InteractionRecord>& records_b,
                           const PipelineConfig& cfg) {
    DatasetSplit out;
    const auto filtered_a = apply_k_core(records_a, cfg.k_core);
    const auto filtered_b = apply_k_core(records_b, cfg.k_core);
    build_vocabularies(filtered_a, filtered_b, out);
    return assemble_dataset(filtered_a, filtered_b, cfg, std::move(out));
}

DatasetSplit build_dataset_with_vocabularies(const std::vector<InteractionRecord>& records_a,
                                             const std::vector<InteractionRecord>& records_b,
                                             const PipelineConfig& cfg, Vocabulary vocab_a,
                                             Vocabulary vocab_b, Vocabulary vocab_global) {
    DatasetSplit out;
    out.vocab_a = std::move(vocab_a);
    out.vocab_b = std::move(vocab_b);
    out.vocab_global = std::move(vocab_global);
    out.local_to_global_a.assign(out.vocab_a.size() + 1, 0);
    for (std::size_t i = 0; i < out.vocab_a.size(); ++i)
        out.local_to_global_a[i + 1] = out.vocab_global.at(out.vocab_a.items[i]);
    out.local_to_global_b.assign(out.vocab_b.size() + 1, 0);
    for (std::size_t i = 0; i < out.vocab_b.size(); ++i)
        out.local_to_global_b[i + 1] = out.vocab_global.at(out.vocab_b.items[i]);
    const auto filtered_a = apply_k_core(records_a, cfg.k_core);
    const auto filtered_b = apply_k_core(records_b, cfg.k_core);
    return assemble_dataset(filtered_a, filtered_b, cfg, std::move(out));
}

}  // namespace man
