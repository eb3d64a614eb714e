#pragma once

#include <cstdint>
#include <vector>

#include "man/params.hpp"
#include "man/tensor.hpp"

namespace man {

// Sum over real rows (1 x width). With `mean` set, divides by the number of
// real rows. A fully masked input pools to zeros.
TensorPtr pool_rows(const TensorPtr& x, const std::vector<std::uint8_t>& mask, bool mean = false);

// Sum over all rows, used for the group-representation pooling.
TensorPtr pool_all_rows(const TensorPtr& x, bool mean = false);

// sigmoid(local_logit + global_logit); either head may be absent (nullptr
// input) for the single/shared configurations.
TensorPtr predict_probability(const std::vector<MlpLayer>& local_head, const TensorPtr& local_in,
                              const std::vector<MlpLayer>& global_head,
                              const TensorPtr& global_in);

// Mean negative log-likelihood over the batch with predictions clamped to
// [1e-12, 1 - 1e-12]. `probabilities` is an n x 1 column.
TensorPtr domain_loss(const TensorPtr& probabilities, const std::vector<int>& labels);

// Sum of squared entries over a parameter subset (the weight-decay form of
// the L2 penalty). Domain-exclusive parameters count fully; shared
// parameters are split evenly between the two domain penalties.
TensorPtr regularization_term(const ParameterStore& store, Ownership owner);

struct LossBreakdown {
    double loss_a = 0.0, loss_b = 0.0;
    double disentangle = 0.0;
    double reg_a = 0.0, reg_b = 0.0;
    double total = 0.0;
};

}  // namespace man
