#pragma once

#include <vector>

#include "smvit/tensor.hpp"
#include "smvit/tokenizer.hpp"

namespace smvit {

constexpr double kLayerNormEps = 1e-6;

// one pre-norm encoder layer's trainable tensors
struct LayerParams {
    Tensor2 ln1_gamma, ln1_beta;  // 1 x D
    Tensor2 w_qkv, b_qkv;         // D x 3D, 1 x 3D
    Tensor2 w_out, b_out;         // D x D, 1 x D
    Tensor2 ln2_gamma, ln2_beta;  // 1 x D
    Tensor2 w_fc1, b_fc1;         // D x 4D, 1 x 4D
    Tensor2 w_fc2, b_fc2;         // 4D x D, 1 x D

    static LayerParams zeros(const ViTConfig& cfg);
};

struct HeadCache {
    Tensor2 scores;  // pre-augmentation Q K^T / sqrt(d_k), T x T
    Tensor2 attn;    // post-softmax of the augmented scores, T x T
    int argmax = -1;     // argmax patch index in the class row (-1 when not augmented)
    double xmax = 0.0;
};

struct LayerCache {
    Tensor2 input;  // tokens entering the layer
    LayerNormCache ln1;
    Tensor2 n1;   // LN1 output
    Tensor2 qkv;  // T x 3D
    std::vector<HeadCache> heads;
    Tensor2 heads_out;   // concatenated head outputs, T x D
    Tensor2 after_attn;  // input + attention sublayer output
    LayerNormCache ln2;
    Tensor2 n2;       // LN2 output
    Tensor2 mlp_pre;  // T x 4D, before GELU
    bool valid = false;
};

// per-layer, per-head class-token attention distributions
struct AttentionRecord {
    int layers = 0;
    int heads = 0;
    int tokens = 0;
    std::vector<double> data;  // layer-major, then head, then token

    void init(int l, int h, int t) {
        layers = l;
        heads = h;
        tokens = t;
        data.assign(static_cast<std::size_t>(l) * h * t, 0.0);
    }
    double at(int l, int h, int t) const {
        return data[(static_cast<std::size_t>(l) * heads + h) * tokens + t];
    }
    double& at(int l, int h, int t) {
        return data[(static_cast<std::size_t>(l) * heads + h) * tokens + t];
    }
    // head-averaged class-token distribution at the final layer
    std::vector<double> final_layer_class_attention() const;
};

// Q K^T / sqrt(d_k) with d_k = q.cols
Tensor2 attention_scores(const Tensor2& q, const Tensor2& k);

struct AugmentInfo {
    int argmax = -1;
    double xmax = 0.0;
};

// Adds xmax * d_theta to masked entries of the class-token row. xmax is the
// maximum over PATCH entries (columns 1..N_p) of row 0; ties go to the lowest
// index. Rows 1.. are untouched.
Tensor2 augment_class_row(const Tensor2& scores, const MaskVector& m, double d_theta,
                          AugmentInfo* info = nullptr);

// full multi-head guided attention over pre-normalized tokens; returns the
// output-projected result and fills qkv/heads/heads_out in the cache
Tensor2 guided_attention(const Tensor2& x_normed, const LayerParams& p, const ViTConfig& cfg,
                         const MaskVector& m, double d_theta, LayerCache* cache = nullptr);

// pre-norm layer: x + MSA(LN(x)), then x + MLP(LN(x))
Tensor2 encoder_layer(const Tensor2& tokens, const MaskVector& m, double d_theta,
                      const LayerParams& p, const ViTConfig& cfg, LayerCache* cache = nullptr);

// accumulates parameter grads into `grads` and input grads into `d_in`
void encoder_layer_backward(const Tensor2& d_out, const LayerCache& cache,
                            const LayerParams& p, const ViTConfig& cfg, const MaskVector& m,
                            double d_theta, LayerParams& grads, Tensor2& d_in);

// sequential layers; the same mask is reused at every layer
Tensor2 encoder_forward(const TokenSequence& tokens, const MaskVector& m, const ViTConfig& cfg,
                        const std::vector<LayerParams>& layers, double d_theta,
                        std::vector<LayerCache>* caches = nullptr,
                        AttentionRecord* record = nullptr);

}  // namespace smvit
