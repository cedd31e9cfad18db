#include "smvit/smge.hpp"

#include <cmath>
#include <stdexcept>

namespace smvit {

LayerParams LayerParams::zeros(const ViTConfig& cfg) {
    const std::size_t d = static_cast<std::size_t>(cfg.embed_dim);
    LayerParams p;
    p.ln1_gamma = Tensor2(1, d);
    p.ln1_beta = Tensor2(1, d);
    p.w_qkv = Tensor2(d, 3 * d);
    p.b_qkv = Tensor2(1, 3 * d);
    p.w_out = Tensor2(d, d);
    p.b_out = Tensor2(1, d);
    p.ln2_gamma = Tensor2(1, d);
    p.ln2_beta = Tensor2(1, d);
    p.w_fc1 = Tensor2(d, 4 * d);
    p.b_fc1 = Tensor2(1, 4 * d);
    p.w_fc2 = Tensor2(4 * d, d);
    p.b_fc2 = Tensor2(1, d);
    return p;
}

std::vector<double> AttentionRecord::final_layer_class_attention() const {
    std::vector<double> out(static_cast<std::size_t>(tokens), 0.0);
    for (int h = 0; h < heads; ++h)
        for (int t = 0; t < tokens; ++t) out[t] += at(layers - 1, h, t);
    for (double& v : out) v /= heads;
    return out;
}

Tensor2 attention_scores(const Tensor2& q, const Tensor2& k) {
    if (q.cols != k.cols)
        throw std::invalid_argument("attention_scores: Q/K dim mismatch");
    const double scale = 1.0 / std::sqrt(static_cast<double>(q.cols));
    Tensor2 scores = matmul(q, transpose(k));
    for (double& v : scores.data) v *= scale;
    return scores;
}

Tensor2 augment_class_row(const Tensor2& scores, const MaskVector& m, double d_theta,
                          AugmentInfo* info) {
    if (m.size() != scores.cols || scores.rows != scores.cols)
        throw std::invalid_argument("augment_class_row: mask length " +
                                    std::to_string(m.size()) + " != score side " +
                                    scores.shape_str());
    if (d_theta < 0.0)
        throw std::invalid_argument("augment_class_row: d_theta must be >= 0");
    Tensor2 out = scores;
    // xmax scans the class-to-patch entries only (not the class-self score)
    int argmax = 1;
    double xmax = scores.at(0, 1);
    for (std::size_t j = 2; j < scores.cols; ++j)
        if (scores.at(0, j) > xmax) {
            xmax = scores.at(0, j);
            argmax = static_cast<int>(j);
        }
    const double boost = xmax * d_theta;
    for (std::size_t j = 0; j < scores.cols; ++j)
        if (m[j]) out.at(0, j) += boost;
    if (info) {
        info->argmax = argmax;
        info->xmax = xmax;
    }
    return out;
}

namespace {

// column slice [base, base+width) of src into a fresh tensor
Tensor2 slice_cols(const Tensor2& src, std::size_t base, std::size_t width) {
    Tensor2 out(src.rows, width);
    for (std::size_t i = 0; i < src.rows; ++i)
        for (std::size_t j = 0; j < width; ++j) out.at(i, j) = src.at(i, base + j);
    return out;
}

void add_cols(Tensor2& dst, std::size_t base, const Tensor2& src) {
    for (std::size_t i = 0; i < src.rows; ++i)
        for (std::size_t j = 0; j < src.cols; ++j) dst.at(i, base + j) += src.at(i, j);
}

Tensor2 linear(const Tensor2& x, const Tensor2& w, const Tensor2& b) {
    Tensor2 out = matmul(x, w);
    for (std::size_t i = 0; i < out.rows; ++i)
        for (std::size_t j = 0; j < out.cols; ++j) out.at(i, j) += b.at(0, j);
    return out;
}

void linear_backward(const Tensor2& x, const Tensor2& w, const Tensor2& dout, Tensor2& dx,
                     Tensor2& dw, Tensor2& db) {
    matmul_backward(x, w, dout, &dx, &dw);
    for (std::size_t i = 0; i < dout.rows; ++i)
        for (std::size_t j = 0; j < dout.cols; ++j) db.at(0, j) += dout.at(i, j);
}

}  // namespace

Tensor2 guided_attention(const Tensor2& x_normed, const LayerParams& p, const ViTConfig& cfg,
                         const MaskVector& m, double d_theta, LayerCache* cache) {
    const std::size_t d = static_cast<std::size_t>(cfg.embed_dim);
    const std::size_t dk = static_cast<std::size_t>(cfg.head_dim());
    const Tensor2 qkv = linear(x_normed, p.w_qkv, p.b_qkv);

    Tensor2 heads_out(x_normed.rows, d);
    std::vector<HeadCache> head_caches(static_cast<std::size_t>(cfg.heads));
    for (int h = 0; h < cfg.heads; ++h) {
        const std::size_t base = static_cast<std::size_t>(h) * dk;
        const Tensor2 q = slice_cols(qkv, base, dk);
        const Tensor2 k = slice_cols(qkv, d + base, dk);
        const Tensor2 v = slice_cols(qkv, 2 * d + base, dk);
        Tensor2 scores = attention_scores(q, k);
        HeadCache& hc = head_caches[static_cast<std::size_t>(h)];
        if (cache) hc.scores = scores;
        if (d_theta > 0.0) {
            AugmentInfo info;
            scores = augment_class_row(scores, m, d_theta, &info);
            hc.argmax = info.argmax;
            hc.xmax = info.xmax;
        }
        const Tensor2 attn = softmax_rows(scores);
        add_cols(heads_out, base, matmul(attn, v));
        hc.attn = attn;  // kept even without a cache for attention recording
    }
    Tensor2 out = linear(heads_out, p.w_out, p.b_out);
    if (cache) {
        cache->qkv = qkv;
        cache->heads = std::move(head_caches);
        cache->heads_out = heads_out;
    }
    return out;
}

Tensor2 encoder_layer(const Tensor2& tokens, const MaskVector& m, double d_theta,
                      const LayerParams& p, const ViTConfig& cfg, LayerCache* cache) {
    LayerCache local;
    LayerCache& c = cache ? *cache : local;
    c.input = tokens;

    const Tensor2 n1 = layer_norm(tokens, p.ln1_gamma, p.ln1_beta, kLayerNormEps, &c.ln1);
    c.n1 = n1;
    const Tensor2 attn_out = guided_attention(n1, p, cfg, m, d_theta, &c);

    Tensor2 x = tokens;
    for (std::size_t i = 0; i < x.size(); ++i) x.data[i] += attn_out.data[i];
    c.after_attn = x;

    const Tensor2 n2 = layer_norm(x, p.ln2_gamma, p.ln2_beta, kLayerNormEps, &c.ln2);
    c.n2 = n2;
    const Tensor2 pre = linear(n2, p.w_fc1, p.b_fc1);
    c.mlp_pre = pre;
    const Tensor2 mlp_out = linear(gelu(pre), p.w_fc2, p.b_fc2);
    for (std::size_t i = 0; i < x.size(); ++i) x.data[i] += mlp_out.data[i];
    c.valid = true;
    return x;
}

void encoder_layer_backward(const Tensor2& d_out, const LayerCache& cache,
                            const LayerParams& p, const ViTConfig& cfg, const MaskVector& m,
                            double d_theta, LayerParams& grads, Tensor2& d_in) {
    if (!cache.valid)
        throw std::logic_error("encoder_layer_backward called before forward");
    const std::size_t d = static_cast<std::size_t>(cfg.embed_dim);
    const std::size_t dk = static_cast<std::size_t>(cfg.head_dim());
    const double scale = 1.0 / std::sqrt(static_cast<double>(dk));

    // MLP sublayer
    Tensor2 d_after_attn = d_out;  // residual path
    {
        const Tensor2 act = gelu(cache.mlp_pre);
        Tensor2 d_act(act.rows, act.cols);
        linear_backward(act, p.w_fc2, d_out, d_act, grads.w_fc2, grads.b_fc2);
        const Tensor2 d_pre = gelu_backward(cache.mlp_pre, d_act);
        Tensor2 d_n2(cache.n2.rows, cache.n2.cols);
        linear_backward(cache.n2, p.w_fc1, d_pre, d_n2, grads.w_fc1, grads.b_fc1);
        layer_norm_backward(cache.ln2, p.ln2_gamma, d_n2, d_after_attn, grads.ln2_gamma,
                            grads.ln2_beta);
    }

    // attention sublayer
    Tensor2 d_tokens = d_after_attn;  // residual path
    {
        Tensor2 d_heads_out(cache.heads_out.rows, cache.heads_out.cols);
        linear_backward(cache.heads_out, p.w_out, d_after_attn, d_heads_out, grads.w_out,
                        grads.b_out);

        Tensor2 d_qkv(cache.qkv.rows, cache.qkv.cols);
        for (int h = 0; h < cfg.heads; ++h) {
            const std::size_t base = static_cast<std::size_t>(h) * dk;
            const HeadCache& hc = cache.heads[static_cast<std::size_t>(h)];
            const Tensor2 q = slice_cols(cache.qkv, base, dk);
            const Tensor2 k = slice_cols(cache.qkv, d + base, dk);
            const Tensor2 v = slice_cols(cache.qkv, 2 * d + base, dk);
            const Tensor2 d_head = slice_cols(d_heads_out, base, dk);

            Tensor2 d_attn(hc.attn.rows, hc.attn.cols);
            Tensor2 d_v(v.rows, v.cols);
            matmul_backward(hc.attn, v, d_head, &d_attn, &d_v);

            Tensor2 d_scores = softmax_rows_backward(hc.attn, d_attn);
            if (d_theta > 0.0) {
                // boosted entries route an extra d_theta-scaled term to the argmax
                double masked_sum = 0.0;
                for (std::size_t j = 0; j < d_scores.cols; ++j)
                    if (m[j]) masked_sum += d_scores.at(0, j);
                d_scores.at(0, static_cast<std::size_t>(hc.argmax)) += d_theta * masked_sum;
            }
            for (double& g : d_scores.data) g *= scale;
            // scores = scale * Q K^T, scale already folded into d_scores
            Tensor2 d_q(q.rows, q.cols);
            Tensor2 d_k(k.rows, k.cols);
            matmul_backward(q, transpose(k), d_scores, &d_q, nullptr);  // dQ = dS * K
            for (std::size_t i = 0; i < k.rows; ++i)                    // dK = dS^T * Q
                for (std::size_t j = 0; j < dk; ++j) {
                    double acc = 0.0;
                    for (std::size_t t = 0; t < q.rows; ++t)
                        acc += d_scores.at(t, i) * q.at(t, j);
                    d_k.at(i, j) = acc;
                }
            add_cols(d_qkv, base, d_q);
            add_cols(d_qkv, d + base, d_k);
            add_cols(d_qkv, 2 * d + base, d_v);
        }

        Tensor2 d_n1(cache.n1.rows, cache.n1.cols);
        linear_backward(cache.n1, p.w_qkv, d_qkv, d_n1, grads.w_qkv, grads.b_qkv);
        layer_norm_backward(cache.ln1, p.ln1_gamma, d_n1, d_tokens, grads.ln1_gamma,
                            grads.ln1_beta);
    }

    for (std::size_t i = 0; i < d_in.size(); ++i) d_in.data[i] += d_tokens.data[i];
}

Tensor2 encoder_forward(const TokenSequence& tokens, const MaskVector& m, const ViTConfig& cfg,
                        const std::vector<LayerParams>& layers, double d_theta,
                        std::vector<LayerCache>* caches, AttentionRecord* record) {
    if (layers.size() != static_cast<std::size_t>(cfg.layers))
        throw std::invalid_argument("encoder_forward: expected " + std::to_string(cfg.layers) +
                                    " layers, got " + std::to_string(layers.size()));
    if (record) record->init(cfg.layers, cfg.heads, cfg.tokens());
    if (caches) caches->assign(layers.size(), LayerCache{});

    Tensor2 x = tokens;
    for (std::size_t l = 0; l < layers.size(); ++l) {
        LayerCache local;
        LayerCache& c = caches ? (*caches)[l] : local;
        x = encoder_layer(x, m, d_theta, layers[l], cfg, &c);
        if (record)
            for (int h = 0; h < cfg.heads; ++h)
                for (int t = 0; t < cfg.tokens(); ++t)
                    record->at(static_cast<int>(l), h, t) =
                        c.heads[static_cast<std::size_t>(h)].attn.at(0, static_cast<std::size_t>(t));
    }
    return x;
}

}  // namespace smvit
