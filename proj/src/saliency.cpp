#include "smvit/saliency.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <stdexcept>

#include "smvit/rng.hpp"

namespace smvit {

std::size_t BinaryMask::positive_count() const {
    std::size_t n = 0;
    for (std::uint8_t b : v) n += b;
    return n;
}

SaliencyMap normalize_map(const SaliencyMap& raw) {
    if (raw.channels != 1)
        throw std::invalid_argument("normalize_map: expected single-channel map");
    SaliencyMap out = raw;
    double lo = raw.data[0], hi = raw.data[0];
    for (double v : raw.data) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    if (hi == lo) {
        std::fill(out.data.begin(), out.data.end(), 0.0);
        return out;
    }
    const double scale = 1.0 / (hi - lo);
    for (double& v : out.data) v = (v - lo) * scale;
    return out;
}

BinaryMask binarize(const SaliencyMap& map, double d_alpha) {
    BinaryMask mask(map.rows, map.cols);
    for (std::size_t i = 0; i < map.data.size(); ++i)
        mask.v[i] = map.data[i] >= d_alpha ? 1 : 0;
    return mask;
}

namespace {

bool corrupted(const BinaryMask& mask, double corrupt_fraction) {
    const std::size_t n = mask.positive_count();
    if (n == 0) return true;
    return static_cast<double>(n) <
           corrupt_fraction * static_cast<double>(mask.v.size());
}

BinaryMask central_mask(int rows, int cols) {
    // 10% margin per side, floor-rounded
    BinaryMask mask(rows, cols);
    const int mr = rows / 10;
    const int mc = cols / 10;
    for (int r = mr; r < rows - mr; ++r)
        for (int c = mc; c < cols - mc; ++c) mask.at(r, c) = 1;
    return mask;
}

}  // namespace

std::pair<BinaryMask, MaskProvenance> extract_mask(const SaliencyMap& map,
                                                   double corrupt_fraction) {
    BinaryMask mask = binarize(map, kPrimaryThreshold);
    if (!corrupted(mask, corrupt_fraction))
        return {std::move(mask), {MaskSource::primary_threshold, kPrimaryThreshold}};
    // the original map is re-thresholded, not the stage-1 output
    mask = binarize(map, kRefinedThreshold);
    if (!corrupted(mask, corrupt_fraction))
        return {std::move(mask), {MaskSource::refined_threshold, kRefinedThreshold}};
    return {central_mask(map.rows, map.cols), {MaskSource::central_fallback, -1.0}};
}

BoundingBox bounding_box(const BinaryMask& mask) {
    BoundingBox box{mask.rows, mask.cols, -1, -1};
    for (int r = 0; r < mask.rows; ++r)
        for (int c = 0; c < mask.cols; ++c)
            if (mask.at(r, c)) {
                box.row_min = std::min(box.row_min, r);
                box.col_min = std::min(box.col_min, c);
                box.row_max = std::max(box.row_max, r);
                box.col_max = std::max(box.col_max, c);
            }
    if (box.row_max < 0)
        throw std::logic_error("bounding_box: mask has no positive pixels");
    return box;
}

namespace {

// corner-aligned source coordinate for a target index
double src_coord(int dst, int dst_size, int src_size) {
    if (dst_size <= 1) return 0.0;
    return static_cast<double>(dst) * (src_size - 1) / (dst_size - 1);
}

}  // namespace

Image crop_and_resize_image(const Image& image, const BoundingBox& box, int target) {
    if (target <= 0) throw std::invalid_argument("crop_and_resize: target must be positive");
    if (box.row_min < 0 || box.col_min < 0 || box.row_max >= image.rows ||
        box.col_max >= image.cols || box.row_min > box.row_max || box.col_min > box.col_max)
        throw std::invalid_argument("crop_and_resize: box out of bounds");
    const int src_rows = box.row_max - box.row_min + 1;
    const int src_cols = box.col_max - box.col_min + 1;
    Image out(target, target, image.channels);
    for (int r = 0; r < target; ++r) {
        const double sr = src_coord(r, target, src_rows);
        const int r0 = static_cast<int>(sr);
        const int r1 = std::min(r0 + 1, src_rows - 1);
        const double fr = sr - r0;
        for (int c = 0; c < target; ++c) {
            const double sc = src_coord(c, target, src_cols);
            const int c0 = static_cast<int>(sc);
            const int c1 = std::min(c0 + 1, src_cols - 1);
            const double fc = sc - c0;
            for (int ch = 0; ch < image.channels; ++ch) {
                const double v00 = image.at(box.row_min + r0, box.col_min + c0, ch);
                const double v01 = image.at(box.row_min + r0, box.col_min + c1, ch);
                const double v10 = image.at(box.row_min + r1, box.col_min + c0, ch);
                const double v11 = image.at(box.row_min + r1, box.col_min + c1, ch);
                out.at(r, c, ch) = (1 - fr) * ((1 - fc) * v00 + fc * v01) +
                                   fr * ((1 - fc) * v10 + fc * v11);
            }
        }
    }
    return out;
}

BinaryMask crop_and_resize_mask(const BinaryMask& mask, const BoundingBox& box, int target) {
    if (target <= 0) throw std::invalid_argument("crop_and_resize: target must be positive");
    const int src_rows = box.row_max - box.row_min + 1;
    const int src_cols = box.col_max - box.col_min + 1;
    BinaryMask out(target, target);
    for (int r = 0; r < target; ++r) {
        const int sr = static_cast<int>(std::lround(src_coord(r, target, src_rows)));
        for (int c = 0; c < target; ++c) {
            const int sc = static_cast<int>(std::lround(src_coord(c, target, src_cols)));
            out.at(r, c) = mask.at(box.row_min + sr, box.col_min + sc);
        }
    }
    return out;
}

std::pair<Image, BinaryMask> crop_and_resize(const Image& image, const BinaryMask& mask,
                                             const BoundingBox& box, int target) {
    if (mask.rows != image.rows || mask.cols != image.cols)
        throw std::invalid_argument("crop_and_resize: image/mask dimension mismatch");
    return {crop_and_resize_image(image, box, target),
            crop_and_resize_mask(mask, box, target)};
}

namespace {

SaliencyMap gaussian_blur(const SaliencyMap& map, int radius) {
    if (radius <= 0) return map;
    const double sigma = radius / 2.0;
    std::vector<double> kernel(2 * radius + 1);
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        kernel[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
        sum += kernel[i + radius];
    }
    for (double& k : kernel) k /= sum;

    SaliencyMap tmp(map.rows, map.cols, 1);
    for (int r = 0; r < map.rows; ++r)
        for (int c = 0; c < map.cols; ++c) {
            double acc = 0.0;
            for (int i = -radius; i <= radius; ++i) {
                const int cc = std::clamp(c + i, 0, map.cols - 1);
                acc += kernel[i + radius] * map.at(r, cc);
            }
            tmp.at(r, c) = acc;
        }
    SaliencyMap out(map.rows, map.cols, 1);
    for (int r = 0; r < map.rows; ++r)
        for (int c = 0; c < map.cols; ++c) {
            double acc = 0.0;
            for (int i = -radius; i <= radius; ++i) {
                const int rr = std::clamp(r + i, 0, map.rows - 1);
                acc += kernel[i + radius] * tmp.at(rr, c);
            }
            out.at(r, c) = acc;
        }
    return out;
}

}  // namespace

SaliencyMap toy_saliency(const EllipseSpec& ellipse, int blur_radius, double noise_sigma,
                         std::uint64_t seed) {
    SaliencyMap map(ellipse.rows, ellipse.cols, 1);
    for (int r = 0; r < ellipse.rows; ++r)
        for (int c = 0; c < ellipse.cols; ++c)
            map.at(r, c) = ellipse.contains(r, c) ? 1.0 : 0.0;
    map = gaussian_blur(map, blur_radius);
    if (noise_sigma > 0.0) {
        Rng rng(seed);
        for (double& v : map.data) v += noise_sigma * rng.normal();
    }
    for (double& v : map.data) v = std::clamp(v, 0.0, 1.0);
    return map;
}

SaliencyMap read_map(const std::string& path) { return read_pgm(path); }

void write_map(const std::string& path, const SaliencyMap& map) { write_pgm(path, map); }

BinaryMask read_mask(const std::string& path) {
    const Image img = read_pgm(path);
    BinaryMask mask(img.rows, img.cols);
    for (std::size_t i = 0; i < img.data.size(); ++i) mask.v[i] = img.data[i] >= 0.5 ? 1 : 0;
    return mask;
}

void write_mask(const std::string& path, const BinaryMask& mask) {
    Image img(mask.rows, mask.cols, 1);
    for (std::size_t i = 0; i < mask.v.size(); ++i) img.data[i] = mask.v[i] ? 1.0 : 0.0;
    write_pgm(path, img);
}

void write_bbox(const std::string& path, const BoundingBox& box) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
    out << "row_min:" << box.row_min << "\ncol_min:" << box.col_min << "\nrow_max:"
        << box.row_max << "\ncol_max:" << box.col_max << "\n";
}

BoundingBox read_bbox(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open '" + path + "'");
    std::map<std::string, int> kv;
    std::string line;
    while (std::getline(in, line)) {
        const auto colon = line.find(':');
        if (colon == std::string::npos) continue;
        kv[line.substr(0, colon)] = std::stoi(line.substr(colon + 1));
    }
    for (const char* key : {"row_min", "col_min", "row_max", "col_max"})
        if (!kv.count(key))
            throw std::runtime_error("bbox file '" + path + "' missing key " + key);
    return {kv["row_min"], kv["col_min"], kv["row_max"], kv["col_max"]};
}

}  // namespace smvit
