#include "smvit/tokenizer.hpp"

#include <stdexcept>

namespace smvit {

void ViTConfig::validate() const {
    if (image_side <= 0 || channels <= 0 || patch_side <= 0)
        throw std::invalid_argument("config: image_side, channels, patch_side must be positive");
    if (image_side % patch_side != 0)
        throw std::invalid_argument("config: image_side " + std::to_string(image_side) +
                                    " not divisible by patch_side " + std::to_string(patch_side));
    if (embed_dim <= 0 || heads <= 0 || embed_dim % heads != 0)
        throw std::invalid_argument("config: embed_dim " + std::to_string(embed_dim) +
                                    " not divisible by heads " + std::to_string(heads));
    if (layers <= 0) throw std::invalid_argument("config: layers must be positive");
    if (num_classes < 2) throw std::invalid_argument("config: num_classes must be >= 2");
    if (d_theta < 0.0) throw std::invalid_argument("config: d_theta must be >= 0");
    if (patch_tau < 0.0 || patch_tau >= 1.0)
        throw std::invalid_argument("config: patch_tau must be in [0,1)");
}

MaskVector MaskVector::from_patches(const std::vector<std::uint8_t>& patch_bits) {
    MaskVector mv;
    mv.m.reserve(patch_bits.size() + 1);
    mv.m.push_back(1);  // class-token slot is always favourable
    mv.m.insert(mv.m.end(), patch_bits.begin(), patch_bits.end());
    return mv;
}

MaskVector MaskVector::all_ones(int tokens) {
    MaskVector mv;
    mv.m.assign(static_cast<std::size_t>(tokens), 1);
    return mv;
}

Tensor2 split_patches(const Image& image, const ViTConfig& cfg) {
    if (image.rows != cfg.image_side || image.cols != cfg.image_side ||
        image.channels != cfg.channels)
        throw std::invalid_argument("split_patches: image dims " + std::to_string(image.rows) +
                                    "x" + std::to_string(image.cols) + "x" +
                                    std::to_string(image.channels) + " do not match config");
    const int g = cfg.grid_side();
    const int p = cfg.patch_side;
    Tensor2 patches(cfg.num_patches(), cfg.patch_dim());
    for (int pr = 0; pr < g; ++pr)
        for (int pc = 0; pc < g; ++pc) {
            const std::size_t patch = static_cast<std::size_t>(pr) * g + pc;
            std::size_t k = 0;
            for (int r = 0; r < p; ++r)
                for (int c = 0; c < p; ++c)
                    for (int ch = 0; ch < cfg.channels; ++ch)
                        patches.at(patch, k++) = image.at(pr * p + r, pc * p + c, ch);
        }
    return patches;
}

Image assemble_patches(const Tensor2& patches, const ViTConfig& cfg) {
    const int g = cfg.grid_side();
    const int p = cfg.patch_side;
    Image image(cfg.image_side, cfg.image_side, cfg.channels);
    for (int pr = 0; pr < g; ++pr)
        for (int pc = 0; pc < g; ++pc) {
            const std::size_t patch = static_cast<std::size_t>(pr) * g + pc;
            std::size_t k = 0;
            for (int r = 0; r < p; ++r)
                for (int c = 0; c < p; ++c)
                    for (int ch = 0; ch < cfg.channels; ++ch)
                        image.at(pr * p + r, pc * p + c, ch) = patches.at(patch, k++);
        }
    return image;
}

TokenSequence embed(const Tensor2& patches, const EmbeddingParams& params) {
    if (patches.cols != params.projection.rows)
        throw std::invalid_argument("embed: patch dim " + std::to_string(patches.cols) +
                                    " != projection rows " +
                                    std::to_string(params.projection.rows));
    const std::size_t d = params.projection.cols;
    if (params.position.rows != patches.rows + 1 || params.position.cols != d ||
        params.class_token.cols != d)
        throw std::invalid_argument("embed: position/class token shape mismatch");
    const Tensor2 projected = matmul(patches, params.projection);
    TokenSequence tokens(patches.rows + 1, d);
    for (std::size_t j = 0; j < d; ++j)
        tokens.at(0, j) = params.class_token.at(0, j) + params.position.at(0, j);
    for (std::size_t i = 0; i < patches.rows; ++i)
        for (std::size_t j = 0; j < d; ++j)
            tokens.at(i + 1, j) = projected.at(i, j) + params.position.at(i + 1, j);
    return tokens;
}

std::vector<std::uint8_t> downsample_mask(const BinaryMask& mask, const ViTConfig& cfg) {
    if (mask.rows != cfg.image_side || mask.cols != cfg.image_side)
        throw std::invalid_argument("downsample_mask: mask dims " + std::to_string(mask.rows) +
                                    "x" + std::to_string(mask.cols) + " do not match config");
    const int g = cfg.grid_side();
    const int p = cfg.patch_side;
    const double patch_pixels = static_cast<double>(p) * p;
    std::vector<std::uint8_t> out(static_cast<std::size_t>(cfg.num_patches()), 0);
    for (int pr = 0; pr < g; ++pr)
        for (int pc = 0; pc < g; ++pc) {
            int positives = 0;
            for (int r = 0; r < p; ++r)
                for (int c = 0; c < p; ++c) positives += mask.at(pr * p + r, pc * p + c);
            out[static_cast<std::size_t>(pr) * g + pc] =
                positives > cfg.patch_tau * patch_pixels ? 1 : 0;
        }
    return out;
}

}  // namespace smvit
