#include "man/prediction.hpp"

#include <stdexcept>

namespace man {

TensorPtr pool_rows(const TensorPtr& x, const std::vector<std::uint8_t>& mask, bool mean) {
    if (mask.size() != x->rows) throw std::runtime_error("pool_rows: mask length mismatch");
    std::size_t real = 0;
    for (auto m : mask) real += m;
    auto weights = tensor(1, x->rows);
    const double w = mean && real > 0 ? 1.0 / static_cast<double>(real) : 1.0;
    for (std::size_t t = 0; t < mask.size(); ++t) weights->data[t] = mask[t] ? w : 0.0;
    return matmul(weights, x);
}

TensorPtr pool_all_rows(const TensorPtr& x, bool mean) {
    auto weights = full(1, x->rows, mean ? 1.0 / static_cast<double>(x->rows) : 1.0);
    return matmul(weights, x);
}

TensorPtr predict_probability(const std::vector<MlpLayer>& local_head, const TensorPtr& local_in,
                              const std::vector<MlpLayer>& global_head,
                              const TensorPtr& global_in) {
    TensorPtr logit;
    if (local_in) logit = mlp_apply(local_in, local_head);
    if (global_in) {
        auto g = mlp_apply(global_in, global_head);
        logit = logit ? add(logit, g) : g;
    }
    if (!logit) throw std::runtime_error("predict_probability: no head input");
    return sigmoid(logit);
}

TensorPtr domain_loss(const TensorPtr& probabilities, const std::vector<int>& labels) {
    if (probabilities->cols != 1)
        throw std::runtime_error("domain_loss: expected a column of probabilities");
    if (probabilities->rows != labels.size())
        throw std::runtime_error("domain_loss: " + std::to_string(labels.size()) +
                                 " labels for " + probabilities->shape_str());
    if (labels.empty()) throw std::runtime_error("domain_loss: empty batch");
    const std::size_t n = labels.size();
    auto y = tensor(n, 1);
    auto y_inv = tensor(n, 1);
    for (std::size_t i = 0; i < n; ++i) {
        if (labels[i] != 0 && labels[i] != 1)
            throw std::runtime_error("domain_loss: label outside {0,1}");
        y->data[i] = labels[i];
        y_inv->data[i] = 1 - labels[i];
    }
    auto p = clamp(probabilities, 1e-12, 1.0 - 1e-12);
    auto one_minus_p = sub(full(n, 1, 1.0), p);
    auto ll = add(mul(y, log_op(p)), mul(y_inv, log_op(one_minus_p)));
    return scale(sum_all(ll), -1.0 / static_cast<double>(n));
}

TensorPtr regularization_term(const ParameterStore& store, Ownership owner) {
    TensorPtr acc;
    for (const auto& entry : store.entries()) {
        const Ownership o = ParameterStore::ownership_of(entry.name);
        double factor = 0.0;
        if (o == owner)
            factor = 1.0;
        else if (o == Ownership::Shared && owner != Ownership::Shared)
            factor = 0.5;
        if (factor == 0.0) continue;
        auto sq = sum_all(mul(entry.value, entry.value));
        if (factor != 1.0) sq = scale(sq, factor);
        acc = acc ? add(acc, sq) : sq;
    }
    return acc ? acc : scalar_tensor(0.0);
}

}  // namespace man
