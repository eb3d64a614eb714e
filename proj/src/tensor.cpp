#include "man/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_set>

namespace man {

namespace {

thread_local bool g_grad_enabled = true;

void check_finite_loss(double v) {
    if (!std::isfinite(v)) throw std::runtime_error("backward: loss is not finite");
}

}  // namespace

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

Tensor::Tensor(std::size_t r, std::size_t c, bool rg)
    : rows(r), cols(c), data(r * c, 0.0), requires_grad(rg) {
    if (r == 0 || c == 0) throw std::runtime_error("tensor: zero dimension");
}

double Tensor::scalar_value() const {
    if (!is_scalar()) throw std::runtime_error("scalar_value: tensor is " + shape_str());
    return data[0];
}

void Tensor::ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), 0.0);
}

std::string Tensor::shape_str() const {
    return std::to_string(rows) + "x" + std::to_string(cols);
}

TensorPtr tensor(std::size_t rows, std::size_t cols, bool requires_grad) {
    return std::make_shared<Tensor>(rows, cols, requires_grad);
}

TensorPtr tensor(std::size_t rows, std::size_t cols, std::vector<double> values,
                 bool requires_grad) {
    auto t = std::make_shared<Tensor>(rows, cols, requires_grad);
    if (values.size() != t->size())
        throw std::runtime_error("tensor: " + std::to_string(values.size()) +
                                 " values for shape " + t->shape_str());
    t->data = std::move(values);
    return t;
}

TensorPtr scalar_tensor(double value) {
    return tensor(1, 1, std::vector<double>{value});
}

TensorPtr zeros(std::size_t rows, std::size_t cols) { return tensor(rows, cols); }

TensorPtr full(std::size_t rows, std::size_t cols, double value) {
    auto t = tensor(rows, cols);
    std::fill(t->data.begin(), t->data.end(), value);
    return t;
}

namespace {

// Wire the output node into the graph if recording is on and any parent
// requires a gradient. `fn` runs with out->grad already allocated.
void attach(const TensorPtr& out, std::vector<TensorPtr> parents, std::function<void()> fn) {
    if (!g_grad_enabled) return;
    bool needed = false;
    for (const auto& p : parents)
        if (p->requires_grad) needed = true;
    if (!needed) return;
    out->requires_grad = true;
    out->parents = std::move(parents);
    out->backprop = std::move(fn);
}

void require_same_shape(const TensorPtr& a, const TensorPtr& b, const char* op) {
    if (a->rows != b->rows || a->cols != b->cols)
        throw std::runtime_error(std::string(op) + ": shape mismatch " + a->shape_str() +
                                 " vs " + b->shape_str());
}

}  // namespace

TensorPtr add(const TensorPtr& a, const TensorPtr& b) {
    require_same_shape(a, b, "add");
    auto out = tensor(a->rows, a->cols);
    for (std::size_t i = 0; i < out->size(); ++i) out->data[i] = a->data[i] + b->data[i];
    Tensor* o = out.get();
    attach(out, {a, b}, [a, b, o] {
        if (a->requires_grad) {
            a->ensure_grad();
            for (std::size_t i = 0; i < o->grad.size(); ++i) a->grad[i] += o->grad[i];
        }
        if (b->requires_grad) {
            b->ensure_grad();
            for (std::size_t i = 0; i < o->grad.size(); ++i) b->grad[i] += o->grad[i];
        }
    });
    return out;
}

TensorPtr sub(const TensorPtr& a, const TensorPtr& b) {
    require_same_shape(a, b, "sub");
    auto out = tensor(a->rows, a->cols);
    for (std::size_t i = 0; i < out->size(); ++i) out->data[i] = a->data[i] - b->data[i];
    Tensor* o = out.get();
    attach(out, {a, b}, [a, b, o] {
        if (a->requires_grad) {
            a->ensure_grad();
            for (std::size_t i = 0; i < o->grad.size(); ++i) a->grad[i] += o->grad[i];
        }
        if (b->requires_grad) {
            b->ensure_grad();
            for (std::size_t i = 0; i < o->grad.size(); ++i) b->grad[i] -= o->grad[i];
        }
    });
    return out;
}

TensorPtr mul(const TensorPtr& a, const TensorPtr& b) {
    require_same_shape(a, b, "mul");
    auto out = tensor(a->rows, a->cols);
    for (std::size_t i = 0; i < out->size(); ++i) out->data[i] = a->data[i] * b->data[i];
    Tensor* o = out.get();
    attach(out, {a, b}, [a, b, o] {
        if (a->requires_grad) {
            a->ensure_grad();
            for (std::size_t i = 0; i < o->grad.size(); ++i) a->grad[i] += o->grad[i] * b->data[i];
        }
        if (b->requires_grad) {
            b->ensure_grad();
            for (std::size_t i = 0; i < o->grad.size(); ++i) b->grad[i] += o->grad[i] * a->data[i];
        }
    });
    return out;
}

TensorPtr scale(const TensorPtr& a, double c) {
    auto out = tensor(a->rows, a->cols);
    for (std::size_t i = 0; i < out->size(); ++i) out->data[i] = a->data[i] * c;
    Tensor* o = out.get();
    attach(out, {a}, [a, c, o] {
        a->ensure_grad();
        for (std::size_t i = 0; i < o->grad.size(); ++i) a->grad[i] += o->grad[i] * c;
    });
    return out;
}

TensorPtr matmul(const TensorPtr& a, const TensorPtr& b) {
    if (a->cols != b->rows)
        throw std::runtime_error("matmul: inner dimensions differ, " + a->shape_str() + " x " +
                                 b->shape_str());
    const std::size_t m = a->rows, k = a->cols, n = b->cols;
    auto out = tensor(m, n);
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = &a->data[i * k];
        double* orow = &out->data[i * n];
        for (std::size_t p = 0; p < k; ++p) {
            const double av = arow[p];
            if (av == 0.0) continue;
            const double* brow = &b->data[p * n];
            for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    }
    Tensor* o = out.get();
    attach(out, {a, b}, [a, b, o, m, k, n] {
        if (a->requires_grad) {
            a->ensure_grad();
            // dA = dC * B^T
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t p = 0; p < k; ++p) {
                    double acc = 0.0;
                    const double* grow = &o->grad[i * n];
                    const double* brow = &b->data[p * n];
                    for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
                    a->grad[i * k + p] += acc;
                }
        }
        if (b->requires_grad) {
            b->ensure_grad();
            // dB = A^T * dC
            for (std::size_t p = 0; p < k; ++p)
                for (std::size_t i = 0; i < m; ++i) {
                    const double av = a->data[i * k + p];
                    if (av == 0.0) continue;
                    const double* grow = &o->grad[i * n];
                    double* brow = &b->grad[p * n];
                    for (std::size_t j = 0; j < n; ++j) brow[j] += av * grow[j];
                }
        }
    });
    return out;
}

TensorPtr transpose(const TensorPtr& a) {
    auto out = tensor(a->cols, a->rows);
    for (std::size_t i = 0; i < a->rows; ++i)
        for (std::size_t j = 0; j < a->cols; ++j) out->at(j, i) = a->at(i, j);
    Tensor* o = out.get();
    attach(out, {a}, [a, o] {
        a->ensure_grad();
        for (std::size_t i = 0; i < o->rows; ++i)
            for (std::size_t j = 0; j < o->cols; ++j)
                a->grad[j * a->cols + i] += o->grad[i * o->cols + j];
    });
    return out;
}

TensorPtr add_rowvec(const TensorPtr& x, const TensorPtr& row) {
    if (row->rows != 1 || row->cols != x->cols)
        throw std::runtime_error("add_rowvec: " + x->shape_str() + " + " + row->shape_str());
    auto out = tensor(x->rows, x->cols);
    for (std::size_t i = 0; i < x->rows; ++i)
        for (std::size_t j = 0; j < x->cols; ++j) out->at(i, j) = x->at(i, j) + row->data[j];
    Tensor* o = out.get();
    attach(out, {x, row}, [x, row, o] {
        if (x->requires_grad) {
            x->ensure_grad();
            for (std::size_t i = 0; i < o->grad.size(); ++i) x->grad[i] += o->grad[i];
        }
        if (row->requires_grad) {
            row->ensure_grad();
            for (std::size_t i = 0; i < o->rows; ++i)
                for (std::size_t j = 0; j < o->cols; ++j) row->grad[j] += o->grad[i * o->cols + j];
        }
    });
    return out;
}

TensorPtr mul_colvec(const TensorPtr& x, const TensorPtr& col) {
    if (col->cols != 1 || col->rows != x->rows)
        throw std::runtime_error("mul_colvec: " + x->shape_str() + " * " + col->shape_str());
    auto out = tensor(x->rows, x->cols);
    for (std::size_t i = 0; i < x->rows; ++i)
        for (std::size_t j = 0; j < x->cols; ++j) out->at(i, j) = x->at(i, j) * col->data[i];
    Tensor* o = out.get();
    attach(out, {x, col}, [x, col, o] {
        if (x->requires_grad) {
            x->ensure_grad();
            for (std::size_t i = 0; i < o->rows; ++i)
                for (std::size_t j = 0; j < o->cols; ++j)
                    x->grad[i * o->cols + j] += o->grad[i * o->cols + j] * col->data[i];
        }
        if (col->requires_grad) {
            col->ensure_grad();
            for (std::size_t i = 0; i < o->rows; ++i) {
                double acc = 0.0;
                for (std::size_t j = 0; j < o->cols; ++j)
                    acc += o->grad[i * o->cols + j] * x->data[i * o->cols + j];
                col->grad[i] += acc;
            }
        }
    });
    return out;
}

TensorPtr relu(const TensorPtr& a) {
    auto out = tensor(a->rows, a->cols);
    for (std::size_t i = 0; i < out->size(); ++i) out->data[i] = a->data[i] > 0.0 ? a->data[i] : 0.0;
    Tensor* o = out.get();
    attach(out, {a}, [a, o] {
        a->ensure_grad();
        for (std::size_t i = 0; i < o->grad.size(); ++i)
            if (a->data[i] > 0.0) a->grad[i] += o->grad[i];
    });
    return out;
}

TensorPtr sigmoid(const TensorPtr& a) {
    auto out = tensor(a->rows, a->cols);
    for (std::size_t i = 0; i < out->size(); ++i) {
        const double v = a->data[i];
        out->data[i] = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v))
                                : std::exp(v) / (1.0 + std::exp(v));
    }
    Tensor* o = out.get();
    attach(out, {a}, [a, o] {
        a->ensure_grad();
        for (std::size_t i = 0; i < o->grad.size(); ++i) {
            const double y = o->data[i];
            a->grad[i] += o->grad[i] * y * (1.0 - y);
        }
    });
    return out;
}

TensorPtr tanh_op(const TensorPtr& a) {
    auto out = tensor(a->rows, a->cols);
    for (std::size_t i = 0; i < out->size(); ++i) out->data[i] = std::tanh(a->data[i]);
    Tensor* o = out.get();
    attach(out, {a}, [a, o] {
        a->ensure_grad();
        for (std::size_t i = 0; i < o->grad.size(); ++i) {
            const double y = o->data[i];
            a->grad[i] += o->grad[i] * (1.0 - y * y);
        }
    });
    return out;
}

TensorPtr log_op(const TensorPtr& a) {
    auto out = tensor(a->rows, a->cols);
    for (std::size_t i = 0; i < out->size(); ++i) out->data[i] = std::log(a->data[i]);
    Tensor* o = out.get();
    attach(out, {a}, [a, o] {
        a->ensure_grad();
        for (std::size_t i = 0; i < o->grad.size(); ++i) a->grad[i] += o->grad[i] / a->data[i];
    });
    return out;
}

TensorPtr clamp(const TensorPtr& a, double lo, double hi) {
    auto out = tensor(a->rows, a->cols);
    for (std::size_t i = 0; i < out->size(); ++i)
        out->data[i] = std::min(hi, std::max(lo, a->data[i]));
    Tensor* o = out.get();
    attach(out, {a}, [a, lo, hi, o] {
        a->ensure_grad();
        for (std::size_t i = 0; i < o->grad.size(); ++i)
            if (a->data[i] > lo && a->data[i] < hi) a->grad[i] += o->grad[i];
    });
    return out;
}

TensorPtr sum_all(const TensorPtr& a) {
    auto out = tensor(1, 1);
    double acc = 0.0;
    for (double v : a->data) acc += v;
    out->data[0] = acc;
    Tensor* o = out.get();
    attach(out, {a}, [a, o] {
        a->ensure_grad();
        const double g = o->grad[0];
        for (std::size_t i = 0; i < a->grad.size(); ++i) a->grad[i] += g;
    });
    return out;
}

TensorPtr softmax(const TensorPtr& a, int axis) {
    if (axis != 0 && axis != 1) throw std::runtime_error("softmax: axis must be 0 or 1");
    auto out = tensor(a->rows, a->cols);
    const std::size_t slices = axis == 1 ? a->rows : a->cols;
    const std::size_t len = axis == 1 ? a->cols : a->rows;
    const std::size_t cols = a->cols;
    auto idx = [axis, cols](std::size_t s, std::size_t i) {
        return axis == 1 ? s * cols + i : i * cols + s;
    };
    for (std::size_t s = 0; s < slices; ++s) {
        double mx = a->data[idx(s, 0)];
        for (std::size_t i = 1; i < len; ++i) mx = std::max(mx, a->data[idx(s, i)]);
        double denom = 0.0;
        for (std::size_t i = 0; i < len; ++i) {
            const double e = std::exp(a->data[idx(s, i)] - mx);
            out->data[idx(s, i)] = e;
            denom += e;
        }
        for (std::size_t i = 0; i < len; ++i) out->data[idx(s, i)] /= denom;
    }
    Tensor* o = out.get();
    attach(out, {a}, [a, o, slices, len, idx] {
        a->ensure_grad();
        for (std::size_t s = 0; s < slices; ++s) {
            double dot = 0.0;
            for (std::size_t i = 0; i < len; ++i)
                dot += o->grad[idx(s, i)] * o->data[idx(s, i)];
            for (std::size_t i = 0; i < len; ++i)
                a->grad[idx(s, i)] += o->data[idx(s, i)] * (o->grad[idx(s, i)] - dot);
        }
    });
    return out;
}

TensorPtr concat_cols(const std::vector<TensorPtr>& parts) {
    if (parts.empty()) throw std::runtime_error("concat_cols: no parts");
    const std::size_t rows = parts[0]->rows;
    std::size_t cols = 0;
    for (const auto& p : parts) {
        if (p->rows != rows) throw std::runtime_error("concat_cols: row mismatch");
        cols += p->cols;
    }
    auto out = tensor(rows, cols);
    std::size_t off = 0;
    for (const auto& p : parts) {
        for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < p->cols; ++j) out->at(i, off + j) = p->at(i, j);
        off += p->cols;
    }
    Tensor* o = out.get();
    attach(out, parts, [parts, o] {
        std::size_t off = 0;
        for (const auto& p : parts) {
            if (p->requires_grad) {
                p->ensure_grad();
                for (std::size_t i = 0; i < p->rows; ++i)
                    for (std::size_t j = 0; j < p->cols; ++j)
                        p->grad[i * p->cols + j] += o->grad[i * o->cols + off + j];
            }
            off += p->cols;
        }
    });
    return out;
}

TensorPtr concat_rows(const std::vector<TensorPtr>& parts) {
    if (parts.empty()) throw std::runtime_error("concat_rows: no parts");
    const std::size_t cols = parts[0]->cols;
    std::size_t rows = 0;
    for (const auto& p : parts) {
        if (p->cols != cols) throw std::runtime_error("concat_rows: column mismatch");
        rows += p->rows;
    }
    auto out = tensor(rows, cols);
    std::size_t off = 0;
    for (const auto& p : parts) {
        std::copy(p->data.begin(), p->data.end(), out->data.begin() + off * cols);
        off += p->rows;
    }
    Tensor* o = out.get();
    attach(out, parts, [parts, o] {
        std::size_t off = 0;
        for (const auto& p : parts) {
            if (p->requires_grad) {
                p->ensure_grad();
                for (std::size_t i = 0; i < p->size(); ++i)
                    p->grad[i] += o->grad[off * o->cols + i];
            }
            off += p->rows;
        }
    });
    return out;
}

TensorPtr slice_rows(const TensorPtr& a, std::size_t begin, std::size_t end) {
    if (begin >= end || end > a->rows) throw std::runtime_error("slice_rows: bad range");
    auto out = tensor(end - begin, a->cols);
    std::copy(a->data.begin() + begin * a->cols, a->data.begin() + end * a->cols,
              out->data.begin());
    Tensor* o = out.get();
    attach(out, {a}, [a, begin, o] {
        a->ensure_grad();
        for (std::size_t i = 0; i < o->size(); ++i) a->grad[begin * a->cols + i] += o->grad[i];
    });
    return out;
}

TensorPtr slice_cols(const TensorPtr& a, std::size_t begin, std::size_t end) {
    if (begin >= end || end > a->cols) throw std::runtime_error("slice_cols: bad range");
    auto out = tensor(a->rows, end - begin);
    for (std::size_t i = 0; i < a->rows; ++i)
        for (std::size_t j = begin; j < end; ++j) out->at(i, j - begin) = a->at(i, j);
    Tensor* o = out.get();
    attach(out, {a}, [a, begin, o] {
        a->ensure_grad();
        for (std::size_t i = 0; i < o->rows; ++i)
            for (std::size_t j = 0; j < o->cols; ++j)
                a->grad[i * a->cols + begin + j] += o->grad[i * o->cols + j];
    });
    return out;
}

TensorPtr repeat_row(const TensorPtr& row, std::size_t n) {
    if (row->rows != 1) throw std::runtime_error("repeat_row: input is " + row->shape_str());
    auto out = tensor(n, row->cols);
    for (std::size_t i = 0; i < n; ++i)
        std::copy(row->data.begin(), row->data.end(), out->data.begin() + i * row->cols);
    Tensor* o = out.get();
    attach(out, {row}, [row, o] {
        row->ensure_grad();
        for (std::size_t i = 0; i < o->rows; ++i)
            for (std::size_t j = 0; j < o->cols; ++j) row->grad[j] += o->grad[i * o->cols + j];
    });
    return out;
}

TensorPtr gather_rows(const TensorPtr& table, const std::vector<std::size_t>& indices) {
    for (std::size_t ix : indices)
        if (ix >= table->rows)
            throw std::runtime_error("gather_rows: index " + std::to_string(ix) +
                                     " out of range for table " + table->shape_str());
    auto out = tensor(indices.size(), table->cols);
    for (std::size_t i = 0; i < indices.size(); ++i)
        std::copy(table->data.begin() + indices[i] * table->cols,
                  table->data.begin() + (indices[i] + 1) * table->cols,
                  out->data.begin() + i * table->cols);
    Tensor* o = out.get();
    attach(out, {table}, [table, indices, o] {
        table->ensure_grad();
        for (std::size_t i = 0; i < indices.size(); ++i)
            for (std::size_t j = 0; j < o->cols; ++j)
                table->grad[indices[i] * o->cols + j] += o->grad[i * o->cols + j];
    });
    return out;
}

TensorPtr stop_gradient(const TensorPtr& a) {
    auto out = tensor(a->rows, a->cols);
    out->data = a->data;
    return out;  // no parents: gradient stops here
}

TensorPtr layer_norm(const TensorPtr& x, const TensorPtr& gain, const TensorPtr& bias,
                     double eps) {
    if (gain->rows != 1 || gain->cols != x->cols || bias->rows != 1 || bias->cols != x->cols)
        throw std::runtime_error("layer_norm: gain/bias must be 1x" + std::to_string(x->cols));
    const std::size_t n = x->cols;
    auto out = tensor(x->rows, x->cols);
    std::vector<double> inv_std(x->rows), means(x->rows);
    for (std::size_t i = 0; i < x->rows; ++i) {
        double mean = 0.0;
        for (std::size_t j = 0; j < n; ++j) mean += x->at(i, j);
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            const double d = x->at(i, j) - mean;
            var += d * d;
        }
        var /= static_cast<double>(n);
        const double is = 1.0 / std::sqrt(var + eps);
        means[i] = mean;
        inv_std[i] = is;
        for (std::size_t j = 0; j < n; ++j)
            out->at(i, j) = (x->at(i, j) - mean) * is * gain->data[j] + bias->data[j];
    }
    Tensor* o = out.get();
    attach(out, {x, gain, bias}, [x, gain, bias, o, means, inv_std, n] {
        for (std::size_t i = 0; i < x->rows; ++i) {
            const double is = inv_std[i];
            // xhat_j = (x_ij - mean) * is
            if (gain->requires_grad || bias->requires_grad) {
                if (gain->requires_grad) gain->ensure_grad();
                if (bias->requires_grad) bias->ensure_grad();
                for (std::size_t j = 0; j < n; ++j) {
                    const double xhat = (x->at(i, j) - means[i]) * is;
                    const double g = o->grad[i * n + j];
                    if (gain->requires_grad) gain->grad[j] += g * xhat;
                    if (bias->requires_grad) bias->grad[j] += g;
                }
            }
            if (x->requires_grad) {
                x->ensure_grad();
                double sum_dy = 0.0, sum_dy_xhat = 0.0;
                for (std::size_t j = 0; j < n; ++j) {
                    const double dy = o->grad[i * n + j] * gain->data[j];
                    const double xhat = (x->at(i, j) - means[i]) * is;
                    sum_dy += dy;
                    sum_dy_xhat += dy * xhat;
                }
                const double inv_n = 1.0 / static_cast<double>(n);
                for (std::size_t j = 0; j < n; ++j) {
                    const double dy = o->grad[i * n + j] * gain->data[j];
                    const double xhat = (x->at(i, j) - means[i]) * is;
                    x->grad[i * n + j] +=
                        is * (dy - inv_n * sum_dy - xhat * inv_n * sum_dy_xhat);
                }
            }
        }
    });
    return out;
}

TensorPtr scaled_dot_attention(const TensorPtr& q, const TensorPtr& k, const TensorPtr& v,
                               const std::vector<std::uint8_t>* mask) {
    if (q->cols != k->cols)
        throw std::runtime_error("scaled_dot_attention: Q " + q->shape_str() + " vs K " +
                                 k->shape_str());
    if (k->rows != v->rows)
        throw std::runtime_error("scaled_dot_attention: K " + k->shape_str() + " vs V " +
                                 v->shape_str());
    if (mask) {
        if (mask->size() != k->rows)
            throw std::runtime_error("scaled_dot_attention: mask length mismatch");
        bool any = false;
        for (auto m : *mask) any = any || (m != 0);
        if (!any) throw std::runtime_error("scaled_dot_attention: every key is masked");
    }
    auto scores = scale(matmul(q, transpose(k)), 1.0 / std::sqrt(static_cast<double>(q->cols)));
    if (mask) {
        auto bias = tensor(1, k->rows);
        for (std::size_t j = 0; j < k->rows; ++j) bias->data[j] = (*mask)[j] ? 0.0 : -1e9;
        scores = add_rowvec(scores, bias);
    }
    return matmul(softmax(scores, 1), v);
}

TensorPtr mlp_apply(const TensorPtr& x, const std::vector<MlpLayer>& layers) {
    TensorPtr h = x;
    for (const auto& layer : layers) {
        h = add_rowvec(matmul(h, layer.weight), layer.bias);
        switch (layer.act) {
            case Activation::Identity: break;
            case Activation::ReLU: h = relu(h); break;
            case Activation::Sigmoid: h = sigmoid(h); break;
            case Activation::Tanh: h = tanh_op(h); break;
        }
    }
    return h;
}

void backward(const TensorPtr& loss) {
    if (!loss->is_scalar()) throw std::runtime_error("backward: loss is " + loss->shape_str());
    check_finite_loss(loss->data[0]);

    // iterative DFS topological order over parent links
    std::vector<Tensor*> order;
    std::unordered_set<Tensor*> seen;
    std::vector<std::pair<Tensor*, std::size_t>> stack;
    stack.emplace_back(loss.get(), 0);
    seen.insert(loss.get());
    while (!stack.empty()) {
        auto& [node, child] = stack.back();
        if (child < node->parents.size()) {
            Tensor* next = node->parents[child].get();
            ++child;
            if (next->requires_grad && !seen.count(next)) {
                seen.insert(next);
                stack.emplace_back(next, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    loss->ensure_grad();
    loss->grad[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Tensor* node = *it;
        if (node->backprop) {
            node->ensure_grad();
            node->backprop();
        }
    }
    // leaves reachable only through stop-gradient edges never enter `order`;
    // they keep (or are given) an all-zero grad by the caller's zero_grads.
}

double max_rel_error(double analytic, double numeric) {
    const double denom = std::max({std::fabs(analytic), std::fabs(numeric), 1e-8});
    return std::fabs(analytic - numeric) / denom;
}

double finite_difference_check(const std::function<TensorPtr()>& build_loss,
                               const std::vector<TensorPtr>& params, double step) {
    for (const auto& p : params) {
        p->grad.assign(p->size(), 0.0);
    }
    auto loss = build_loss();
    backward(loss);

    auto eval = [&]() {
        NoGradGuard guard;
        const double v = build_loss()->scalar_value();
        if (!std::isfinite(v))
            throw std::runtime_error("finite_difference_check: non-finite loss value");
        return v;
    };

    double worst = 0.0;
    for (const auto& p : params) {
        p->ensure_grad();
        for (std::size_t i = 0; i < p->size(); ++i) {
            const double saved = p->data[i];
            p->data[i] = saved + step;
            const double up = eval();
            p->data[i] = saved - step;
            const double down = eval();
            p->data[i] = saved;
            const double numeric = (up - down) / (2.0 * step);
            worst = std::max(worst, max_rel_error(p->grad[i], numeric));
        }
    }
    return worst;
}

}  // namespace man
