#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace smvit {

// Dense row-major matrix of doubles. All model math runs through this type.
struct Tensor2 {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Tensor2() = default;
    Tensor2(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

    double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    std::size_t size() const { return data.size(); }
    bool same_shape(const Tensor2& o) const { return rows == o.rows && cols == o.cols; }
    std::string shape_str() const;

    void fill(double v);
    bool all_finite() const;
};

// value + gradient of the same shape; grad is zeroed before each backward pass
struct DualBuffer {
    Tensor2 value;
    Tensor2 grad;

    explicit DualBuffer(Tensor2 v) : value(std::move(v)), grad(value.rows, value.cols) {}
    DualBuffer() = default;
};

Tensor2 matmul(const Tensor2& a, const Tensor2& b);
// accumulates into da/db (pass nullptr to skip one side)
void matmul_backward(const Tensor2& a, const Tensor2& b, const Tensor2& dout,
                     Tensor2* da, Tensor2* db);

Tensor2 transpose(const Tensor2& a);

Tensor2 softmax_rows(const Tensor2& x);
// y = softmax_rows(x); returns dx
Tensor2 softmax_rows_backward(const Tensor2& y, const Tensor2& dy);

struct LayerNormCache {
    Tensor2 normalized;          // (x - mean) * rstd, per row
    std::vector<double> rstd;    // one per row
    bool valid = false;
};

// per-row standardization followed by affine scale/shift; gamma/beta are 1 x cols
Tensor2 layer_norm(const Tensor2& x, const Tensor2& gamma, const Tensor2& beta,
                   double eps, LayerNormCache* cache = nullptr);
void layer_norm_backward(const LayerNormCache& cache, const Tensor2& gamma,
                         const Tensor2& dy, Tensor2& dx, Tensor2& dgamma, Tensor2& dbeta);

// exact GELU x * Phi(x) via the Gaussian CDF
Tensor2 gelu(const Tensor2& x);
Tensor2 gelu_backward(const Tensor2& x, const Tensor2& dy);

// mean over rows of -log softmax(logits)[label], log-sum-exp form
double cross_entropy(const Tensor2& logits, const std::vector<int>& labels);
Tensor2 cross_entropy_backward(const Tensor2& logits, const std::vector<int>& labels);

}  // namespace smvit
