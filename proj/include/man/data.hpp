#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "man/rng.hpp"

namespace man {

enum class Domain { A, B };

inline const char* domain_name(Domain d) { return d == Domain::A ? "a" : "b"; }

struct InteractionRecord {
    std::string user_id;
    std::string item_id;
    std::int64_t timestamp = 0;
    int label = 1;
    Domain domain = Domain::A;
};

// One training/evaluation example: a front-padded history window plus a
// target item. Index 0 is the padding item in every vocabulary; real items
// start at 1. `history_global` mirrors `history` in the shared vocabulary.
struct SequenceExample {
    std::vector<std::size_t> history;         // length T, local indices
    std::vector<std::size_t> history_global;  // length T, shared indices
    std::vector<std::uint8_t> mask;           // length T, 1 = real item
    std::size_t target_item = 0;              // local index
    std::size_t target_global = 0;            // shared index
    int label = 1;
    std::string user_id;
    Domain domain = Domain::A;
    std::int64_t target_ts = 0;
    std::size_t candidate_set = 0;  // one positive and its negatives share an id

    std::size_t real_len() const {
        std::size_t n = 0;
        for (auto m : mask) n += m;
        return n;
    }
};

// item_id -> 1-based index; index 0 is reserved for padding.
struct Vocabulary {
    std::map<std::string, std::size_t> index;
    std::vector<std::string> items;  // items[i-1] has index i

    std::size_t size() const { return items.size(); }  // excludes padding
    std::size_t add(const std::string& item_id);
    std::size_t at(const std::string& item_id) const;
    bool contains(const std::string& item_id) const { return index.count(item_id) > 0; }
};

struct DomainSplit {
    std::vector<SequenceExample> train, validation, test;
};

struct DatasetSplit {
    DomainSplit a, b;
    Vocabulary vocab_a, vocab_b, vocab_global;
    std::vector<std::size_t> local_to_global_a;  // [local index] -> global index
    std::vector<std::size_t> local_to_global_b;

    DomainSplit& domain(Domain d) { return d == Domain::A ? a : b; }
    const DomainSplit& domain(Domain d) const { return d == Domain::A ? a : b; }
};

// --- ingestion --------------------------------------------------------------

// TSV columns: user_id \t item_id \t timestamp \t label (no header).
// Throws on a malformed row, naming the offending line number.
std::vector<InteractionRecord> load_interactions(const std::string& path, Domain domain);

void write_interactions(const std::string& path, const std::vector<InteractionRecord>& records);

// Iteratively removes users and items with fewer than k interactions until a
// fixed point is reached (within one domain's records).
std::vector<InteractionRecord> apply_k_core(std::vector<InteractionRecord> records, std::size_t k);

// One example per positive interaction, in chronological per-user order with
// ties broken by item_id. The history window keeps the most recent T items.
std::vector<SequenceExample> build_sequences(const std::vector<InteractionRecord>& records,
                                             std::size_t T, const Vocabulary& vocab);

// Adds `ratio` negative copies per positive, drawn uniformly from the domain
// vocabulary excluding all items the user ever interacted with. Negatives
// inherit the positive's candidate_set id. The overload with `exclusions`
// supplies the per-user interacted sets explicitly (e.g. across splits).
std::vector<SequenceExample> sample_negatives(const std::vector<SequenceExample>& examples,
                                              const Vocabulary& vocab, std::size_t ratio,
                                              std::uint64_t seed);
std::vector<SequenceExample> sample_negatives(
    const std::vector<SequenceExample>& examples, const Vocabulary& vocab, std::size_t ratio,
    std::uint64_t seed, const std::map<std::string, std::set<std::size_t>>& exclusions);

// Places each example by its target timestamp: < val_boundary into train,
// < test_boundary into validation, the rest into test.
DomainSplit chronological_split(const std::vector<SequenceExample>& examples,
                                std::int64_t val_boundary, std::int64_t test_boundary);

// Builds per-domain and shared vocabularies. Items are keyed by raw id, so
// an id occurring in both domains maps to one shared row.
void build_vocabularies(const std::vector<InteractionRecord>& records_a,
                        const std::vector<InteractionRecord>& records_b, DatasetSplit& out);

void attach_global_indices(SequenceExample& ex, const std::vector<std::size_t>& local_to_global);

// --- synthetic benchmark ----------------------------------------------------

struct SynthConfig {
    std::size_t users_per_domain = 200;
    std::size_t items_per_domain = 60;
    std::size_t n_groups = 4;
    double overlap_user_fraction = 0.0;
    double overlap_item_fraction = 0.0;
    double seq_len_mean = 8.0;
    double seq_len_mean_b = -1.0;  // < 0: use seq_len_mean for both domains
    double noise = 0.2;
    std::uint64_t seed = 42;
    std::int64_t time_horizon = 1000000;
};

struct SynthResult {
    std::vector<InteractionRecord> records_a, records_b;
    std::map<std::string, std::size_t> user_group;           // ground truth
    std::map<std::string, std::size_t> item_group_a, item_group_b;
};

// Plants one shared group structure under both domains: every user belongs
// to a group, every item has a primary group, and a user picks uniformly
// from their group's item pool with probability 1 - noise (uniformly from
// the whole catalog otherwise). Deterministic under config + seed.
SynthResult synth_generate(const SynthConfig& config);

void write_ground_truth_groups(const std::string& path,
                               const std::map<std::string, std::size_t>& user_group);
std::map<std::string, std::size_t> load_ground_truth_groups(const std::string& path);

// --- end-to-end pipeline ------------------------------------------------------

struct PipelineConfig {
    std::size_t seq_len = 8;  // T
    std::size_t k_core = 1;
    std::int64_t val_boundary = 0;
    std::int64_t test_boundary = 0;
    std::size_t neg_train = 1;   // training negatives per positive
    std::size_t neg_eval = 49;   // ranking negatives per positive
    std::uint64_t seed = 42;
};

// k-core filter, vocabularies, chronological sequences, per-split negative
// sampling (training ratio for train, ranking ratio for validation/test) and
// global index attachment, per domain. Deterministic under config + seed.
DatasetSplit build_dataset(const std::vector<InteractionRecord>& records_a,
                           const std::vector<InteractionRecord>& records_b,
                           const PipelineConfig& cfg);

// Same pipeline with pre-built vocabularies (records outside them are
// rejected); used when loading a prepared dataset directory.
DatasetSplit build_dataset_with_vocabularies(const std::vector<InteractionRecord>& records_a,
                                             const std::vector<InteractionRecord>& records_b,
                                             const PipelineConfig& cfg, Vocabulary vocab_a,
                                             Vocabulary vocab_b, Vocabulary vocab_global);

}  // namespace man
