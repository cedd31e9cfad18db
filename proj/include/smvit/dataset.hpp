#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "smvit/netpbm.hpp"
#include "smvit/saliency.hpp"

namespace smvit {

// synthetic planted-feature classification task: one salient ellipse carrying
// the class glyph, misleading glyphs of other classes planted on the background
struct ToySpec {
    int image_side = 32;
    int num_classes = 10;
    int glyph_size = 8;
    double area_frac_min = 0.12;
    double area_frac_max = 0.30;
    int distractor_count = 3;
    double distractor_contrast = 1.0;
    int glyph_grid = 0;  // snap glyph positions to this pitch (0 = free placement)
    bool glyph_jitter = false;       // place the glyph anywhere inside the ellipse
    bool glyph_edge = false;         // place the glyph at a random ellipse bbox edge midpoint
    bool distractor_backing = false; // smooth fill patch behind each distractor
    bool corner_distractors = false; // plant distractors at the ellipse bbox corners
    int blur_radius = 1;       // saliency degradation
    double noise_sigma = 0.05;
    std::uint64_t seed = 1;

    void validate() const;  // throws if the glyph cannot fit the minimum ellipse
};

struct SampleMeta {
    EllipseSpec ellipse;
    int glyph_row = 0;  // top-left of the stamped class glyph
    int glyph_col = 0;
    std::uint64_t saliency_seed = 0;
};

struct Sample {
    Image image;  // image_side x image_side x 3
    int label = 0;
    SampleMeta meta;
};

// deterministic per (spec.seed, index)
Sample generate_sample(const ToySpec& spec, std::uint64_t index);
std::vector<Sample> generate_dataset(const ToySpec& spec, std::uint64_t first_index,
                                     std::size_t n);

// 4x4 bit pattern identifying a class, scaled to glyph_size when stamped
std::vector<std::uint8_t> class_glyph_bits(int label);

// the glyph exactly as stamped at full contrast, for template matching
Image render_glyph(int label, int glyph_size, double contrast);

// ground-truth foreground indicator for a sample
BinaryMask ground_truth_mask(const SampleMeta& meta, int image_side);

// degraded saliency map per the spec's blur/noise knobs
SaliencyMap sample_saliency(const ToySpec& spec, const SampleMeta& meta);

// manifest line round-trip for dataset export (index/label/paths/ellipse)
std::string manifest_line(std::uint64_t index, int label, const std::string& image_path,
                          const std::string& saliency_path, const SampleMeta& meta);
struct ManifestEntry {
    std::uint64_t index = 0;
    int label = 0;
    std::string image_path;
    std::string saliency_path;
    SampleMeta meta;
};
ManifestEntry parse_manifest_line(const std::string& line);

}  // namespace smvit
