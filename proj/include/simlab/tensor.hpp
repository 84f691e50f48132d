#pragma once

// Dense row-major tensors of 64-bit floats. Autograd lives in autograd.hpp;
// this header is the plain value type plus the raw matmul kernel.

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "simlab/common.hpp"

namespace simlab {

struct Tensor {
    std::vector<std::int64_t> shape;
    std::vector<double> values;
    std::vector<double> grad;  // empty unless gradients were requested
    bool requires_grad = false;

    Tensor() = default;

    static Tensor zeros(std::vector<std::int64_t> shape) {
        Tensor t;
        t.shape = std::move(shape);
        t.values.assign(static_cast<std::size_t>(numel(t.shape)), 0.0);
        return t;
    }

    static Tensor full(std::vector<std::int64_t> shape, double v) {
        Tensor t = zeros(std::move(shape));
        for (double& x : t.values) x = v;
        return t;
    }

    static Tensor from(std::vector<std::int64_t> shape, std::vector<double> values) {
        if (numel(shape) != static_cast<std::int64_t>(values.size()))
            throw ContractError("tensor values length does not match shape");
        Tensor t;
        t.shape = std::move(shape);
        t.values = std::move(values);
        return t;
    }

    static std::int64_t numel(const std::vector<std::int64_t>& shape) {
        return std::accumulate(shape.begin(), shape.end(), std::int64_t{1},
                               [](std::int64_t a, std::int64_t b) { return a * b; });
    }

    std::int64_t size() const { return static_cast<std::int64_t>(values.size()); }
    std::int64_t rows() const { return shape.empty() ? 1 : shape[0]; }
    std::int64_t cols() const { return shape.size() < 2 ? 1 : shape[1]; }

    double& at(std::int64_t r, std::int64_t c) { return values[static_cast<std::size_t>(r * cols() + c)]; }
    double at(std::int64_t r, std::int64_t c) const { return values[static_cast<std::size_t>(r * cols() + c)]; }

    void set_requires_grad(bool on = true) {
        requires_grad = on;
        if (on)
            grad.assign(values.size(), 0.0);
        else
            grad.clear();
    }

    void zero_grad() { grad.assign(values.size(), 0.0); }

    bool all_finite() const {
        for (double v : values)
            if (!std::isfinite(v)) return false;
        return true;
    }

    std::string shape_str() const {
        std::ostringstream os;
        os << '[';
        for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
        os << ']';
        return os.str();
    }
};

// C += A * B, row-major, ikj order so the inner loop streams both B and C.
inline void matmul_accumulate(const double* a, const double* b, double* c,
                              std::int64_t m, std::int64_t k, std::int64_t n) {
    for (std::int64_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        double* crow = c + i * n;
        for (std::int64_t p = 0; p < k; ++p) {
            double av = arow[p];
            if (av == 0.0) continue;
            const double* brow = b + p * n;
            for (std::int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

inline Tensor matmul_values(const Tensor& a, const Tensor& b) {
    if (a.shape.size() != 2 || b.shape.size() != 2 || a.shape[1] != b.shape[0])
        throw ContractError("matmul shape mismatch: " + a.shape_str() + " vs " + b.shape_str());
    Tensor out = Tensor::zeros({a.shape[0], b.shape[1]});
    matmul_accumulate(a.values.data(), b.values.data(), out.values.data(),
                      a.shape[0], a.shape[1], b.shape[1]);
    return out;
}

}  // namespace simlab
