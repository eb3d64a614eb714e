#pragma once

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include "man/rng.hpp"
#include "man/tensor.hpp"

namespace testutil {

inline man::TensorPtr rand_tensor(man::Rng& rng, std::size_t rows, std::size_t cols,
                                  double lo = -1.0, double hi = 1.0, bool requires_grad = false) {
    auto t = man::tensor(rows, cols, requires_grad);
    for (auto& v : t->data) v = rng.uniform(lo, hi);
    return t;
}

inline bool all_close(const std::vector<double>& a, const std::vector<double>& b,
                      double tol = 1e-12) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (std::fabs(a[i] - b[i]) > tol) return false;
    return true;
}

// regularized upper incomplete gamma Q(a, x); used for chi-square p-values
inline double gammq(double a, double x) {
    auto gamma_series = [](double a_, double x_) {
        double sum = 1.0 / a_, term = sum, ap = a_;
        for (int i = 0; i < 500; ++i) {
            ap += 1.0;
            term *= x_ / ap;
            sum += term;
            if (std::fabs(term) < std::fabs(sum) * 1e-15) break;
        }
        return sum * std::exp(-x_ + a_ * std::log(x_) - std::lgamma(a_));
    };
    auto gamma_cf = [](double a_, double x_) {
        double b = x_ + 1.0 - a_, c = 1e300, d = 1.0 / b, h = d;
        for (int i = 1; i <= 500; ++i) {
            const double an = -i * (i - a_);
            b += 2.0;
            d = an * d + b;
            if (std::fabs(d) < 1e-300) d = 1e-300;
            c = b + an / c;
            if (std::fabs(c) < 1e-300) c = 1e-300;
            d = 1.0 / d;
            const double delta = d * c;
            h *= delta;
            if (std::fabs(delta - 1.0) < 1e-15) break;
        }
        return std::exp(-x_ + a_ * std::log(x_) - std::lgamma(a_)) * h;
    };
    if (x < 0.0 || a <= 0.0) return 1.0;
    if (x == 0.0) return 1.0;
    return x < a + 1.0 ? 1.0 - gamma_series(a, x) : gamma_cf(a, x);
}

inline double chi_square_p(double statistic, double dof) {
    return gammq(dof / 2.0, statistic / 2.0);
}

// per-test scratch directory under the build tree
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        path_ = std::filesystem::temp_directory_path() /
                ("man_test_" + tag + "_" + std::to_string(std::rand()));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    const std::filesystem::path& path() const { return path_; }
    std::string str(const std::string& name = "") const {
        return name.empty() ? path_.string() : (path_ / name).string();
    }

private:
    std::filesystem::path path_;
};

}  // namespace testutil
