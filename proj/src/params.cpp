#include "man/params.hpp"

#include <array>
#include <cmath>
#include <stdexcept>

namespace man {

TensorPtr ParameterStore::add(const std::string& name, TensorPtr t, bool freeze_row0) {
    if (index_.count(name)) throw std::runtime_error("parameter already registered: " + name);
    ownership_of(name);  // validates the prefix
    t->requires_grad = true;
    index_[name] = entries_.size();
    entries_.push_back({name, t, freeze_row0});
    return t;
}

TensorPtr ParameterStore::get(const std::string& name) const { return entry(name).value; }

const ParamEntry& ParameterStore::entry(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::runtime_error("unknown parameter: " + name);
    return entries_[it->second];
}

bool ParameterStore::has(const std::string& name) const { return index_.count(name) > 0; }

std::vector<TensorPtr> ParameterStore::tensors() const {
    std::vector<TensorPtr> out;
    out.reserve(entries_.size());
    for (const auto& e : entries_) out.push_back(e.value);
    return out;
}

std::vector<TensorPtr> ParameterStore::tensors_owned(Ownership owner) const {
    std::vector<TensorPtr> out;
    for (const auto& e : entries_)
        if (ownership_of(e.name) == owner) out.push_back(e.value);
    return out;
}

Ownership ParameterStore::ownership_of(const std::string& name) {
    if (name.rfind("a/", 0) == 0) return Ownership::DomainA;
    if (name.rfind("b/", 0) == 0) return Ownership::DomainB;
    if (name.rfind("shared/", 0) == 0) return Ownership::Shared;
    throw std::runtime_error("parameter name lacks an ownership prefix: " + name);
}

std::array<std::size_t, 3> ParameterStore::audit_partition() const {
    std::array<std::size_t, 3> counts{0, 0, 0};
    for (const auto& e : entries_) counts[static_cast<std::size_t>(ownership_of(e.name))]++;
    return counts;
}

void ParameterStore::zero_grads() const {
    for (const auto& e : entries_) e.value->grad.assign(e.value->size(), 0.0);
}

std::size_t ParameterStore::total_entries() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.value->size();
    return n;
}

TensorPtr xavier_init(std::size_t rows, std::size_t cols, Rng& rng) {
    if (rows == 0 || cols == 0) throw std::runtime_error("xavier_init: zero dimension");
    const double fan_in = rows == 1 ? static_cast<double>(cols) : static_cast<double>(rows);
    const double fan_out = static_cast<double>(cols);
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    auto t = tensor(rows, cols);
    for (auto& v : t->data) v = rng.uniform(-bound, bound);
    return t;
}

std::vector<MlpLayer> make_mlp(ParameterStore& store, const std::string& prefix,
                               std::size_t input_dim, const std::vector<std::size_t>& hidden,
                               std::size_t output_dim, std::uint64_t seed, Activation hidden_act,
                               Activation final_act) {
    std::vector<MlpLayer> layers;
    std::size_t in = input_dim;
    std::vector<std::size_t> dims = hidden;
    dims.push_back(output_dim);
    for (std::size_t l = 0; l < dims.size(); ++l) {
        const std::string name = prefix + "/l" + std::to_string(l);
        Rng rng(seed, "init/" + name + "/w");
        MlpLayer layer;
        layer.weight = store.add(name + "/w", xavier_init(in, dims[l], rng));
        layer.bias = store.add(name + "/b", zeros(1, dims[l]));
        layer.act = l + 1 == dims.size() ? final_act : hidden_act;
        layers.push_back(std::move(layer));
        in = dims[l];
    }
    return layers;
}

}  // namespace man
