#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "smvit/netpbm.hpp"
#include "smvit/smge.hpp"
#include "smvit/tensor.hpp"
#include "smvit/tokenizer.hpp"

namespace smvit {

struct ModelParams {
    EmbeddingParams embed;
    std::vector<LayerParams> layers;
    Tensor2 final_gamma, final_beta;  // 1 x D
    Tensor2 w_head1, b_head1;         // D x D, 1 x D
    Tensor2 w_head2, b_head2;         // D x num_classes, 1 x num_classes

    // fixed declared order; doubles as the checkpoint tensor order
    std::vector<std::pair<std::string, Tensor2*>> tensor_list();
    std::vector<std::pair<std::string, const Tensor2*>> tensor_list() const;

    static ModelParams zeros(const ViTConfig& cfg);
    static ModelParams init(const ViTConfig& cfg, std::uint64_t seed);

    void zero_all();
};

struct ForwardCache {
    Tensor2 patches;
    Tensor2 tokens0;
    std::vector<LayerCache> layer_caches;
    LayerNormCache lnf;
    Tensor2 encoded;    // encoder output
    Tensor2 normed;     // final LN output
    Tensor2 cls;        // 1 x D, row 0 of normed
    Tensor2 head_pre;   // 1 x D, before GELU
    Tensor2 logits;     // 1 x num_classes
    MaskVector mask;
    bool guided = false;
    bool valid = false;
};

struct ForwardResult {
    Tensor2 logits;  // 1 x num_classes
    AttentionRecord record;
};

// tokenize -> embed -> encoder -> final LN -> head on the class token;
// guided=false ignores the mask entirely (d_theta treated as 0)
ForwardResult forward(const Image& image, const MaskVector& mask, const ViTConfig& cfg,
                      const ModelParams& params, bool guided, ForwardCache* cache = nullptr);

// accumulates dLoss/dParams into grads; d_logits is 1 x num_classes
void backward(const Tensor2& d_logits, const ForwardCache& cache, const ViTConfig& cfg,
              const ModelParams& params, ModelParams& grads);

// argmax, ties to the lowest index
int predict(const Tensor2& logits);

// final-layer head-averaged class attention as an H x W grayscale image in [0,1]
Image attention_heatmap(const AttentionRecord& record, const ViTConfig& cfg);

// binary checkpoint: magic "SMVT", version 1, config text, f32 tensors
void save_checkpoint(const std::string& path, const ViTConfig& cfg, const ModelParams& params);
std::pair<ViTConfig, ModelParams> load_checkpoint(const std::string& path);

struct CheckpointError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace smvit
