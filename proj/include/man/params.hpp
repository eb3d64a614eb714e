#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "man/rng.hpp"
#include "man/tensor.hpp"

namespace man {

// Every learnable tensor belongs to exactly one owner, derived from its name
// prefix: "a/..." and "b/..." are domain-exclusive, "shared/..." is used by
// both domains (global tables, global encoder, global head, prototypes).
enum class Ownership { DomainA, DomainB, Shared };

struct ParamEntry {
    std::string name;
    TensorPtr value;
    bool freeze_row0 = false;  // item tables: row 0 is the padding vector
};

class ParameterStore {
public:
    TensorPtr add(const std::string& name, TensorPtr t, bool freeze_row0 = false);
    TensorPtr get(const std::string& name) const;
    const ParamEntry& entry(const std::string& name) const;
    bool has(const std::string& name) const;

    const std::vector<ParamEntry>& entries() const { return entries_; }
    std::vector<TensorPtr> tensors() const;
    std::vector<TensorPtr> tensors_owned(Ownership owner) const;

    // Owner of a parameter name; throws on an unrecognized prefix.
    static Ownership ownership_of(const std::string& name);

    // Checks the A-exclusive / B-exclusive / shared partition is exhaustive
    // and disjoint; returns {count_a, count_b, count_shared} in tensors.
    std::array<std::size_t, 3> audit_partition() const;

    void zero_grads() const;
    std::size_t total_entries() const;  // sum of tensor sizes

private:
    std::vector<ParamEntry> entries_;
    std::map<std::string, std::size_t> index_;
};

// Uniform Xavier/Glorot initialization in +-sqrt(6 / (fan_in + fan_out)).
// Rows x cols matrices use (rows, cols) as the fans; pass rows == 1 for a
// vector, which is treated as fan_in = fan_out = cols.
TensorPtr xavier_init(std::size_t rows, std::size_t cols, Rng& rng);

// Registers an MLP under `prefix` ("a/isa/mlp", ...): Xavier weights, zero
// biases, `hidden_act` between layers and `final_act` on the last.
std::vector<MlpLayer> make_mlp(ParameterStore& store, const std::string& prefix,
                               std::size_t input_dim, const std::vector<std::size_t>& hidden,
                               std::size_t output_dim, std::uint64_t seed,
                               Activation hidden_act = Activation::ReLU,
                               Activation final_act = Activation::Identity);

}  // namespace man
