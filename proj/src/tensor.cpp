#include "smvit/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace smvit {

std::string Tensor2::shape_str() const {
    return std::to_string(rows) + "x" + std::to_string(cols);
}

void Tensor2::fill(double v) { std::fill(data.begin(), data.end(), v); }

bool Tensor2::all_finite() const {
    for (double v : data)
        if (!std::isfinite(v)) return false;
    return true;
}

Tensor2 matmul(const Tensor2& a, const Tensor2& b) {
    if (a.cols != b.rows)
        throw std::invalid_argument("matmul: shape mismatch " + a.shape_str() + " x " +
                                    b.shape_str());
    Tensor2 out(a.rows, b.cols);
    for (std::size_t i = 0; i < a.rows; ++i) {
        for (std::size_t k = 0; k < a.cols; ++k) {
            const double aik = a.at(i, k);
            if (aik == 0.0) continue;
            const double* brow = &b.data[k * b.cols];
            double* orow = &out.data[i * out.cols];
            for (std::size_t j = 0; j < b.cols; ++j) orow[j] += aik * brow[j];
        }
    }
    return out;
}

void matmul_backward(const Tensor2& a, const Tensor2& b, const Tensor2& dout,
                     Tensor2* da, Tensor2* db) {
    if (dout.rows != a.rows || dout.cols != b.cols)
        throw std::invalid_argument("matmul_backward: upstream shape " + dout.shape_str() +
                                    " does not match " + a.shape_str() + " x " + b.shape_str());
    if (da) {
        // dA = dOut * B^T
        for (std::size_t i = 0; i < a.rows; ++i)
            for (std::size_t k = 0; k < a.cols; ++k) {
                double acc = 0.0;
                for (std::size_t j = 0; j < b.cols; ++j)
                    acc += dout.at(i, j) * b.at(k, j);
                da->at(i, k) += acc;
            }
    }
    if (db) {
        // dB = A^T * dOut
        for (std::size_t k = 0; k < a.cols; ++k)
            for (std::size_t i = 0; i < a.rows; ++i) {
                const double aik = a.at(i, k);
                if (aik == 0.0) continue;
                for (std::size_t j = 0; j < b.cols; ++j)
                    db->at(k, j) += aik * dout.at(i, j);
            }
    }
}

Tensor2 transpose(const Tensor2& a) {
    Tensor2 out(a.cols, a.rows);
    for (std::size_t i = 0; i < a.rows; ++i)
        for (std::size_t j = 0; j < a.cols; ++j) out.at(j, i) = a.at(i, j);
    return out;
}

Tensor2 softmax_rows(const Tensor2& x) {
    Tensor2 out(x.rows, x.cols);
    for (std::size_t i = 0; i < x.rows; ++i) {
        double mx = x.at(i, 0);
        for (std::size_t j = 1; j < x.cols; ++j) mx = std::max(mx, x.at(i, j));
        double sum = 0.0;
        for (std::size_t j = 0; j < x.cols; ++j) {
            const double e = std::exp(x.at(i, j) - mx);
            out.at(i, j) = e;
            sum += e;
        }
        for (std::size_t j = 0; j < x.cols; ++j) out.at(i, j) /= sum;
    }
    return out;
}

Tensor2 softmax_rows_backward(const Tensor2& y, const Tensor2& dy) {
    if (!y.same_shape(dy))
        throw std::invalid_argument("softmax_rows_backward: shape mismatch " + y.shape_str() +
                                    " vs " + dy.shape_str());
    Tensor2 dx(y.rows, y.cols);
    for (std::size_t i = 0; i < y.rows; ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < y.cols; ++j) dot += y.at(i, j) * dy.at(i, j);
        for (std::size_t j = 0; j < y.cols; ++j)
            dx.at(i, j) = y.at(i, j) * (dy.at(i, j) - dot);
    }
    return dx;
}

Tensor2 layer_norm(const Tensor2& x, const Tensor2& gamma, const Tensor2& beta,
                   double eps, LayerNormCache* cache) {
    if (gamma.cols != x.cols || beta.cols != x.cols)
        throw std::invalid_argument("layer_norm: gamma/beta length must equal " +
                                    std::to_string(x.cols));
    if (eps <= 0.0) throw std::invalid_argument("layer_norm: eps must be positive");
    Tensor2 out(x.rows, x.cols);
    Tensor2 normalized(x.rows, x.cols);
    std::vector<double> rstds(x.rows);
    const double n = static_cast<double>(x.cols);
    for (std::size_t i = 0; i < x.rows; ++i) {
        double mean = 0.0;
        for (std::size_t j = 0; j < x.cols; ++j) mean += x.at(i, j);
        mean /= n;
        double var = 0.0;
        for (std::size_t j = 0; j < x.cols; ++j) {
            const double d = x.at(i, j) - mean;
            var += d * d;
        }
        var /= n;
        const double rstd = 1.0 / std::sqrt(var + eps);
        rstds[i] = rstd;
        for (std::size_t j = 0; j < x.cols; ++j) {
            const double nh = (x.at(i, j) - mean) * rstd;
            normalized.at(i, j) = nh;
            out.at(i, j) = gamma.at(0, j) * nh + beta.at(0, j);
        }
    }
    if (cache) {
        cache->normalized = std::move(normalized);
        cache->rstd = std::move(rstds);
        cache->valid = true;
    }
    return out;
}

void layer_norm_backward(const LayerNormCache& cache, const Tensor2& gamma,
                         const Tensor2& dy, Tensor2& dx, Tensor2& dgamma, Tensor2& dbeta) {
    if (!cache.valid)
        throw std::logic_error("layer_norm_backward called before forward");
    const Tensor2& nh = cache.normalized;
    const double n = static_cast<double>(nh.cols);
    for (std::size_t i = 0; i < nh.rows; ++i) {
        double mean_dnh = 0.0, mean_dnh_nh = 0.0;
        for (std::size_t j = 0; j < nh.cols; ++j) {
            const double dnh = dy.at(i, j) * gamma.at(0, j);
            mean_dnh += dnh;
            mean_dnh_nh += dnh * nh.at(i, j);
        }
        mean_dnh /= n;
        mean_dnh_nh /= n;
        const double rstd = cache.rstd[i];
        for (std::size_t j = 0; j < nh.cols; ++j) {
            const double dnh = dy.at(i, j) * gamma.at(0, j);
            dx.at(i, j) += rstd * (dnh - mean_dnh - nh.at(i, j) * mean_dnh_nh);
            dgamma.at(0, j) += dy.at(i, j) * nh.at(i, j);
            dbeta.at(0, j) += dy.at(i, j);
        }
    }
}

namespace {
constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;
}  // namespace

Tensor2 gelu(const Tensor2& x) {
    Tensor2 out(x.rows, x.cols);
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double v = x.data[i];
        out.data[i] = v * 0.5 * std::erfc(-v * kInvSqrt2);
    }
    return out;
}

Tensor2 gelu_backward(const Tensor2& x, const Tensor2& dy) {
    if (!x.same_shape(dy))
        throw std::invalid_argument("gelu_backward: shape mismatch");
    Tensor2 dx(x.rows, x.cols);
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double v = x.data[i];
        const double cdf = 0.5 * std::erfc(-v * kInvSqrt2);
        const double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
        dx.data[i] = dy.data[i] * (cdf + v * pdf);
    }
    return dx;
}

double cross_entropy(const Tensor2& logits, const std::vector<int>& labels) {
    if (labels.size() != logits.rows)
        throw std::invalid_argument("cross_entropy: label count != batch size");
    double total = 0.0;
    for (std::size_t i = 0; i < logits.rows; ++i) {
        const int label = labels[i];
        if (label < 0 || static_cast<std::size_t>(label) >= logits.cols)
            throw std::out_of_range("cross_entropy: label " + std::to_string(label) +
                                    " out of range [0," + std::to_string(logits.cols) + ")");
        double mx = logits.at(i, 0);
        for (std::size_t j = 1; j < logits.cols; ++j) mx = std::max(mx, logits.at(i, j));
        double sum = 0.0;
        for (std::size_t j = 0; j < logits.cols; ++j) sum += std::exp(logits.at(i, j) - mx);
        total += mx + std::log(sum) - logits.at(i, static_cast<std::size_t>(label));
    }
    return total / static_cast<double>(logits.rows);
}

Tensor2 cross_entropy_backward(const Tensor2& logits, const std::vector<int>& labels) {
    if (labels.size() != logits.rows)
        throw std::invalid_argument("cross_entropy_backward: label count != batch size");
    Tensor2 probs = softmax_rows(logits);
    const double scale = 1.0 / static_cast<double>(logits.rows);
    for (std::size_t i = 0; i < logits.rows; ++i) {
        const int label = labels[i];
        if (label < 0 || static_cast<std::size_t>(label) >= logits.cols)
            throw std::out_of_range("cross_entropy_backward: label out of range");
        for (std::size_t j = 0; j < logits.cols; ++j) probs.at(i, j) *= scale;
        probs.at(i, static_cast<std::size_t>(label)) -= scale;
    }
    return probs;
}

}  // namespace smvit
