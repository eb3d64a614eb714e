#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace man {

class Tensor;
using TensorPtr = std::shared_ptr<Tensor>;

// Dense 2-D tensor of doubles participating in a define-by-run gradient
// graph. Every op below records, on its output node, the parent links and a
// closure that pushes the output's grad into the parents' grads. backward()
// walks the recorded graph once in reverse topological order.
//
// Scalars are 1x1, row vectors 1xN. Data is row-major. Nodes are immutable
// after construction except for grad accumulation.
class Tensor {
public:
    Tensor(std::size_t rows, std::size_t cols, bool requires_grad = false);

    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;
    std::vector<double> grad;  // empty until touched by backward()
    bool requires_grad = false;

    std::vector<TensorPtr> parents;
    std::function<void()> backprop;  // scatters this->grad into parents

    std::size_t size() const { return rows * cols; }
    bool is_scalar() const { return rows == 1 && cols == 1; }
    double scalar_value() const;

    double& at(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double at(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

    void ensure_grad();  // allocate zero-filled grad if absent
    std::string shape_str() const;
};

// While an instance is alive, ops build no graph (value-only forward).
// Used by evaluation paths and the finite-difference harness.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

bool grad_enabled();

// --- construction ---------------------------------------------------------

TensorPtr tensor(std::size_t rows, std::size_t cols, bool requires_grad = false);
TensorPtr tensor(std::size_t rows, std::size_t cols, std::vector<double> values,
                 bool requires_grad = false);
TensorPtr scalar_tensor(double value);
TensorPtr zeros(std::size_t rows, std::size_t cols);
TensorPtr full(std::size_t rows, std::size_t cols, double value);

// --- elementwise and structural ops ---------------------------------------

TensorPtr add(const TensorPtr& a, const TensorPtr& b);
TensorPtr sub(const TensorPtr& a, const TensorPtr& b);
TensorPtr mul(const TensorPtr& a, const TensorPtr& b);
TensorPtr scale(const TensorPtr& a, double c);
TensorPtr matmul(const TensorPtr& a, const TensorPtr& b);
TensorPtr transpose(const TensorPtr& a);
TensorPtr add_rowvec(const TensorPtr& x, const TensorPtr& row);   // row: 1 x cols
TensorPtr mul_colvec(const TensorPtr& x, const TensorPtr& col);   // col: rows x 1
TensorPtr relu(const TensorPtr& a);
TensorPtr sigmoid(const TensorPtr& a);
TensorPtr tanh_op(const TensorPtr& a);
TensorPtr log_op(const TensorPtr& a);
TensorPtr clamp(const TensorPtr& a, double lo, double hi);
TensorPtr sum_all(const TensorPtr& a);  // 1x1
TensorPtr softmax(const TensorPtr& a, int axis);  // stabilized by max-subtraction
TensorPtr concat_cols(const std::vector<TensorPtr>& parts);
TensorPtr concat_rows(const std::vector<TensorPtr>& parts);
TensorPtr slice_rows(const TensorPtr& a, std::size_t begin, std::size_t end);
TensorPtr slice_cols(const TensorPtr& a, std::size_t begin, std::size_t end);
TensorPtr repeat_row(const TensorPtr& row, std::size_t n);  // 1 x c -> n x c
TensorPtr gather_rows(const TensorPtr& table, const std::vector<std::size_t>& indices);
TensorPtr stop_gradient(const TensorPtr& a);

// Layer normalization over the feature axis (per row), with learnable gain
// and bias (both 1 x cols).
TensorPtr layer_norm(const TensorPtr& x, const TensorPtr& gain, const TensorPtr& bias,
                     double eps = 1e-8);

// softmax(Q K^T / sqrt(D)) V with masked key positions excluded. mask holds
// one flag per key row; true = attendable. Throws if every key is masked.
TensorPtr scaled_dot_attention(const TensorPtr& q, const TensorPtr& k, const TensorPtr& v,
                               const std::vector<std::uint8_t>* mask = nullptr);

enum class Activation { Identity, ReLU, Sigmoid, Tanh };

struct MlpLayer {
    TensorPtr weight;  // in x out
    TensorPtr bias;    // 1 x out
    Activation act = Activation::Identity;
};

TensorPtr mlp_apply(const TensorPtr& x, const std::vector<MlpLayer>& layers);

// --- backward pass ---------------------------------------------------------

// Accumulates gradients of `loss` (scalar) into every reachable tensor with
// requires_grad. Stop-gradient nodes sever the walk.
void backward(const TensorPtr& loss);

double max_rel_error(double analytic, double numeric);

// Central-difference audit of one scalar-valued computation. `build_loss`
// must rebuild the graph from the current parameter values on every call
// (its result is evaluated under NoGradGuard for the numeric probes).
// Returns the max relative error over every entry of every parameter.
double finite_difference_check(const std::function<TensorPtr()>& build_loss,
                               const std::vector<TensorPtr>& params, double step);

}  // namespace man
