#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "smvit/netpbm.hpp"

namespace smvit {

// single-channel probability map in [0,1] after normalize_map
using SaliencyMap = Image;

struct BinaryMask {
    int rows = 0;
    int cols = 0;
    std::vector<std::uint8_t> v;  // strictly {0,1}

    BinaryMask() = default;
    BinaryMask(int r, int c) : rows(r), cols(c), v(static_cast<std::size_t>(r) * c, 0) {}

    std::uint8_t& at(int r, int c) { return v[static_cast<std::size_t>(r) * cols + c]; }
    std::uint8_t at(int r, int c) const { return v[static_cast<std::size_t>(r) * cols + c]; }

    std::size_t positive_count() const;
};

struct BoundingBox {
    int row_min = 0;
    int col_min = 0;
    int row_max = 0;
    int col_max = 0;
};

enum class MaskSource {
    primary_threshold,
    refined_threshold,
    central_fallback,
    external_file,
    toy_generator,
};

struct MaskProvenance {
    MaskSource source = MaskSource::primary_threshold;
    double threshold_used = 0.8;  // 0.8 primary, 0.2 refinement, -1 when not applicable
};

constexpr double kPrimaryThreshold = 0.8;
constexpr double kRefinedThreshold = 0.2;
// positive fraction below this counts as a corrupted mask
constexpr double kDefaultCorruptFraction = 0.005;

// min-max rescale to [0,1]; a constant map becomes all zeros
SaliencyMap normalize_map(const SaliencyMap& raw);

// pixel -> 1 iff value >= d_alpha
BinaryMask binarize(const SaliencyMap& map, double d_alpha);

// 0.8 threshold, then 0.2 refinement, then central-80% fallback; never empty
std::pair<BinaryMask, MaskProvenance> extract_mask(
    const SaliencyMap& map, double corrupt_fraction = kDefaultCorruptFraction);

// tightest box over positive pixels; throws std::logic_error on an empty mask
BoundingBox bounding_box(const BinaryMask& mask);

// crop to box then resize to target x target; image bilinear, mask nearest-neighbor
std::pair<Image, BinaryMask> crop_and_resize(const Image& image, const BinaryMask& mask,
                                             const BoundingBox& box, int target);

Image crop_and_resize_image(const Image& image, const BoundingBox& box, int target);
BinaryMask crop_and_resize_mask(const BinaryMask& mask, const BoundingBox& box, int target);

// toy saliency source standing in for a learned detector
struct EllipseSpec {
    int rows = 0;
    int cols = 0;
    double center_row = 0.0;
    double center_col = 0.0;
    double radius_row = 0.0;
    double radius_col = 0.0;

    bool contains(double r, double c) const {
        const double dr = (r - center_row) / radius_row;
        const double dc = (c - center_col) / radius_col;
        return dr * dr + dc * dc <= 1.0;
    }
};

// ground-truth ellipse indicator, optionally blurred (radius) and noised (sigma), clipped
SaliencyMap toy_saliency(const EllipseSpec& ellipse, int blur_radius, double noise_sigma,
                         std::uint64_t seed);

// PGM-backed map/mask persistence
SaliencyMap read_map(const std::string& path);
void write_map(const std::string& path, const SaliencyMap& map);
BinaryMask read_mask(const std::string& path);
void write_mask(const std::string& path, const BinaryMask& mask);

// bbox as key:value lines row_min/col_min/row_max/col_max
void write_bbox(const std::string& path, const BoundingBox& box);
BoundingBox read_bbox(const std::string& path);

}  // namespace smvit
