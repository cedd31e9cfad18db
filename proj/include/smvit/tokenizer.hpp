#pragma once

#include <cstdint>
#include <vector>

#include "smvit/netpbm.hpp"
#include "smvit/saliency.hpp"
#include "smvit/tensor.hpp"

namespace smvit {

struct ViTConfig {
    int image_side = 32;
    int channels = 3;
    int patch_side = 8;
    int embed_dim = 32;
    int layers = 2;
    int heads = 4;
    int num_classes = 10;
    double d_theta = 0.3;
    double patch_tau = 0.0;  // salient-pixel fraction a patch must exceed to count

    int grid_side() const { return image_side / patch_side; }
    int num_patches() const { return grid_side() * grid_side(); }
    int tokens() const { return num_patches() + 1; }
    int head_dim() const { return embed_dim / heads; }
    int patch_dim() const { return patch_side * patch_side * channels; }

    void validate() const;  // throws std::invalid_argument on any violation
};

struct EmbeddingParams {
    Tensor2 projection;   // (P^2*C) x D
    Tensor2 position;     // (N_p+1) x D
    Tensor2 class_token;  // 1 x D
};

// (N_p+1) x D; row 0 is the class token
using TokenSequence = Tensor2;

// token-aligned binary mask; index 0 is the class slot and is always 1
struct MaskVector {
    std::vector<std::uint8_t> m;

    static MaskVector from_patches(const std::vector<std::uint8_t>& patch_bits);
    static MaskVector all_ones(int tokens);

    std::size_t size() const { return m.size(); }
    std::uint8_t operator[](std::size_t i) const { return m[i]; }
};

// (H,W,C) -> N_p x (P^2*C), patches in row-major grid order, pixels row-major,
// channels interleaved per pixel
Tensor2 split_patches(const Image& image, const ViTConfig& cfg);

// inverse of split_patches
Image assemble_patches(const Tensor2& patches, const ViTConfig& cfg);

// per-patch projection, class token prepended, position embedding added
TokenSequence embed(const Tensor2& patches, const EmbeddingParams& params);

// patch marked 1 iff its salient-pixel fraction > tau (tau=0: any positive pixel)
std::vector<std::uint8_t> downsample_mask(const BinaryMask& mask, const ViTConfig& cfg);

}  // namespace smvit
