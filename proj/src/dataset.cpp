#include "smvit/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "smvit/rng.hpp"

namespace smvit {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kAspectMin = 0.75;
constexpr double kAspectMax = 4.0 / 3.0;

// half-side of the largest axis-aligned square inscribed in the ellipse
double inscribed_half_side(double rx, double ry) {
    return 1.0 / std::sqrt(1.0 / (rx * rx) + 1.0 / (ry * ry));
}

}  // namespace

void ToySpec::validate() const {
    if (image_side <= 0) throw std::invalid_argument("toy spec: image_side must be positive");
    if (num_classes < 2) throw std::invalid_argument("toy spec: num_classes must be >= 2");
    if (glyph_size < 4) throw std::invalid_argument("toy spec: glyph_size must be >= 4");
    if (!(area_frac_min > 0.0 && area_frac_min <= area_frac_max && area_frac_max < 0.7))
        throw std::invalid_argument("toy spec: bad foreground area fraction range");
    if (distractor_count < 0 || distractor_contrast < 0.0 || distractor_contrast > 1.0)
        throw std::invalid_argument("toy spec: bad distractor settings");
    if (blur_radius < 0 || noise_sigma < 0.0)
        throw std::invalid_argument("toy spec: bad saliency degradation settings");
    if (glyph_grid < 0 || (glyph_grid > 0 && image_side % glyph_grid != 0))
        throw std::invalid_argument("toy spec: glyph_grid must divide image_side");
    // glyph must fit the smallest, most eccentric ellipse
    const double s2 = static_cast<double>(image_side) * image_side;
    const double rx = std::sqrt(area_frac_min * s2 / (kAspectMax * kPi));
    const double ry = std::sqrt(area_frac_min * s2 * kAspectMax / kPi);
    if (inscribed_half_side(rx, ry) < glyph_size / 2.0)
        throw std::invalid_argument("toy spec: glyph_size " + std::to_string(glyph_size) +
                                    " does not fit the minimum ellipse");
}

std::vector<std::uint8_t> class_glyph_bits(int label) {
    if (label < 0) throw std::invalid_argument("class_glyph_bits: negative label");
    // deterministic distinct 4x4 patterns, built incrementally per label
    static std::vector<std::vector<std::uint8_t>> cache;
    while (static_cast<int>(cache.size()) <= label) {
        const int k = static_cast<int>(cache.size());
        std::vector<std::uint8_t> bits(16);
        for (std::uint64_t attempt = 0;; ++attempt) {
            const std::uint64_t word = mix_seed(0x67C1u, (static_cast<std::uint64_t>(k) << 16) | attempt);
            int ones = 0;
            for (int i = 0; i < 16; ++i) {
                bits[static_cast<std::size_t>(i)] = (word >> i) & 1u;
                ones += bits[static_cast<std::size_t>(i)];
            }
            if (ones < 4 || ones > 12) continue;  // avoid near-blank patterns
            bool distinct = true;
            for (const auto& prev : cache)
                if (prev == bits) {
                    distinct = false;
                    break;
                }
            if (distinct) break;
        }
        cache.push_back(bits);
    }
    return cache[static_cast<std::size_t>(label)];
}

namespace {

void stamp_glyph(Image& img, int top, int left, int label, int glyph_size, double contrast) {
    const std::vector<std::uint8_t> bits = class_glyph_bits(label);
    for (int r = 0; r < glyph_size; ++r)
        for (int c = 0; c < glyph_size; ++c) {
            const int rr = top + r, cc = left + c;
            if (rr < 0 || rr >= img.rows || cc < 0 || cc >= img.cols) continue;
            const std::uint8_t bit =
                bits[static_cast<std::size_t>(r * 4 / glyph_size) * 4 + c * 4 / glyph_size];
            const double color[3] = {bit ? 0.85 : 0.15, 0.15, bit ? 0.15 : 0.85};
            for (int ch = 0; ch < 3; ++ch)
                img.at(rr, cc, ch) = (1.0 - contrast) * img.at(rr, cc, ch) + contrast * color[ch];
        }
}

}  // namespace

Image render_glyph(int label, int glyph_size, double contrast) {
    Image img(glyph_size, glyph_size, 3);
    stamp_glyph(img, 0, 0, label, glyph_size, contrast);
    return img;
}

Sample generate_sample(const ToySpec& spec, std::uint64_t index) {
    spec.validate();
    Rng rng(mix_seed(spec.seed, index));
    const int s = spec.image_side;

    Sample sample;
    sample.label = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(spec.num_classes)));

    // background clutter
    sample.image = Image(s, s, 3);
    for (double& v : sample.image.data) v = rng.uniform(0.25, 0.75);

    // salient ellipse
    const double frac = rng.uniform(spec.area_frac_min, spec.area_frac_max);
    const double aspect = rng.uniform(kAspectMin, kAspectMax);
    const double s2 = static_cast<double>(s) * s;
    double ry = std::sqrt(frac * s2 * aspect / kPi);
    double rx = std::sqrt(frac * s2 / (aspect * kPi));
    const double rmax = s / 2.0 - 2.0;
    ry = std::min(ry, rmax);
    rx = std::min(rx, rmax);
    EllipseSpec& e = sample.meta.ellipse;
    e.rows = s;
    e.cols = s;
    e.radius_row = ry;
    e.radius_col = rx;
    e.center_row = rng.uniform(ry + 1.0, s - 1.0 - ry - 1.0);
    e.center_col = rng.uniform(rx + 1.0, s - 1.0 - rx - 1.0);

    // class-neutral fill so only the glyph identifies the class
    const double fill[3] = {rng.uniform(0.45, 0.6), rng.uniform(0.45, 0.6),
                            rng.uniform(0.45, 0.6)};
    for (int r = 0; r < s; ++r)
        for (int c = 0; c < s; ++c)
            if (e.contains(r, c))
                for (int ch = 0; ch < 3; ++ch) sample.image.at(r, c, ch) = fill[ch];

    // class glyph inside the ellipse: centered by default, anywhere that fits
    // with glyph_jitter, optionally snapped to the patch grid
    const int gs = spec.glyph_size;
    const int br0 = std::clamp(static_cast<int>(std::ceil(e.center_row - e.radius_row)), 0, s - 1);
    const int br1 = std::clamp(static_cast<int>(std::floor(e.center_row + e.radius_row)), 0, s - 1);
    const int bc0 = std::clamp(static_cast<int>(std::ceil(e.center_col - e.radius_col)), 0, s - 1);
    const int bc1 = std::clamp(static_cast<int>(std::floor(e.center_col + e.radius_col)), 0, s - 1);
    auto box_inside_ellipse = [&](int top, int left) {
        // a box lies inside the convex ellipse iff all four corners do
        return e.contains(top, left) && e.contains(top, left + gs - 1) &&
               e.contains(top + gs - 1, left) && e.contains(top + gs - 1, left + gs - 1);
    };
    auto place = [&](double center) {
        int pos = std::clamp(static_cast<int>(std::lround(center)) - gs / 2, 0, s - gs);
        if (spec.glyph_grid > 0) {
            const int g = spec.glyph_grid;
            pos = static_cast<int>(std::lround(static_cast<double>(pos) / g)) * g;
            pos = std::clamp(pos, 0, (s - gs) / g * g);
        }
        return pos;
    };
    sample.meta.glyph_row = place(e.center_row);
    sample.meta.glyph_col = place(e.center_col);
    if (spec.glyph_edge) {
        // one of four crop-stable anchor points: the midpoints of the ellipse
        // bounding-box edges, with the glyph box kept inside the bounding box
        const int side = static_cast<int>(rng.uniform_int(4));
        const int midr = std::clamp((br0 + br1) / 2 - gs / 2, 0, s - gs);
        const int midc = std::clamp((bc0 + bc1) / 2 - gs / 2, 0, s - gs);
        const int anchors[4][2] = {{br0, midc},
                                   {midr, std::max(bc1 - gs + 1, 0)},
                                   {std::max(br1 - gs + 1, 0), midc},
                                   {midr, bc0}};
        sample.meta.glyph_row = std::clamp(anchors[side][0], 0, s - gs);
        sample.meta.glyph_col = std::clamp(anchors[side][1], 0, s - gs);
    }
    if (spec.glyph_jitter) {
        for (int attempt = 0; attempt < 64; ++attempt) {
            const int top = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(s - gs + 1)));
            const int left = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(s - gs + 1)));
            if (box_inside_ellipse(top, left)) {
                sample.meta.glyph_row = top;
                sample.meta.glyph_col = left;
                break;
            }
        }
    }
    stamp_glyph(sample.image, sample.meta.glyph_row, sample.meta.glyph_col, sample.label, gs,
                1.0);

    // misleading glyphs of other classes on the background; they may sit right
    // next to the ellipse but never on it
    EllipseSpec padded = e;
    padded.radius_row += 1.0;
    padded.radius_col += 1.0;
    auto touches_ellipse = [&](int top, int left) {
        // nearest point of the box to the ellipse center, then a containment test
        const double nr = std::clamp(padded.center_row, static_cast<double>(top),
                                     static_cast<double>(top + gs - 1));
        const double nc = std::clamp(padded.center_col, static_cast<double>(left),
                                     static_cast<double>(left + gs - 1));
        return padded.contains(nr, nc);
    };
    // corner mode: small wrong glyphs pinned to the ellipse bounding-box
    // corners, so they survive a crop to that box
    const int ds = std::max(4, gs / 2);
    const int corners[4][2] = {{br0, bc0},
                               {br0, bc1 - ds + 1},
                               {br1 - ds + 1, bc0},
                               {br1 - ds + 1, bc1 - ds + 1}};
    const int corner_offset =
        spec.corner_distractors ? static_cast<int>(rng.uniform_int(4)) : 0;

    for (int k = 0; k < spec.distractor_count; ++k) {
        int wrong = static_cast<int>(
            rng.uniform_int(static_cast<std::uint64_t>(spec.num_classes - 1)));
        if (wrong >= sample.label) ++wrong;
        if (spec.corner_distractors) {
            const int* corner = corners[(corner_offset + k) % 4];
            stamp_glyph(sample.image, corner[0], corner[1], wrong, ds,
                        spec.distractor_contrast);
            continue;
        }
        for (int attempt = 0; attempt < 64; ++attempt) {
            int top, left;
            if (spec.glyph_grid > 0) {
                const int g = spec.glyph_grid;
                const std::uint64_t cells = static_cast<std::uint64_t>((s - gs) / g + 1);
                top = static_cast<int>(rng.uniform_int(cells)) * g;
                left = static_cast<int>(rng.uniform_int(cells)) * g;
            } else {
                top = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(s - gs + 1)));
                left = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(s - gs + 1)));
            }
            if (touches_ellipse(top, left)) continue;
            if (spec.distractor_backing) {
                // same smooth look as the ellipse interior so texture alone
                // cannot separate distractors from the object
                const double back[3] = {rng.uniform(0.45, 0.6), rng.uniform(0.45, 0.6),
                                        rng.uniform(0.45, 0.6)};
                for (int r = top - 2; r < top + gs + 2; ++r)
                    for (int c = left - 2; c < left + gs + 2; ++c) {
                        if (r < 0 || r >= s || c < 0 || c >= s) continue;
                        if (e.contains(r, c)) continue;
                        for (int ch = 0; ch < 3; ++ch) sample.image.at(r, c, ch) = back[ch];
                    }
            }
            stamp_glyph(sample.image, top, left, wrong, gs, spec.distractor_contrast);
            break;
        }
    }

    sample.meta.saliency_seed = mix_seed(spec.seed ^ 0x5A11E4C7u, index);
    return sample;
}

std::vector<Sample> generate_dataset(const ToySpec& spec, std::uint64_t first_index,
                                     std::size_t n) {
    std::vector<Sample> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(generate_sample(spec, first_index + i));
    return out;
}

BinaryMask ground_truth_mask(const SampleMeta& meta, int image_side) {
    BinaryMask mask(image_side, image_side);
    for (int r = 0; r < image_side; ++r)
        for (int c = 0; c < image_side; ++c)
            mask.at(r, c) = meta.ellipse.contains(r, c) ? 1 : 0;
    return mask;
}

SaliencyMap sample_saliency(const ToySpec& spec, const SampleMeta& meta) {
    return toy_saliency(meta.ellipse, spec.blur_radius, spec.noise_sigma, meta.saliency_seed);
}

std::string manifest_line(std::uint64_t index, int label, const std::string& image_path,
                          const std::string& saliency_path, const SampleMeta& meta) {
    std::ostringstream out;
    out.precision(17);
    out << "index=" << index << " label=" << label << " image=" << image_path
        << " saliency=" << saliency_path << " rows=" << meta.ellipse.rows
        << " cols=" << meta.ellipse.cols << " center_row=" << meta.ellipse.center_row
        << " center_col=" << meta.ellipse.center_col << " radius_row=" << meta.ellipse.radius_row
        << " radius_col=" << meta.ellipse.radius_col << " glyph_row=" << meta.glyph_row
        << " glyph_col=" << meta.glyph_col << " saliency_seed=" << meta.saliency_seed;
    return out.str();
}

ManifestEntry parse_manifest_line(const std::string& line) {
    ManifestEntry entry;
    std::istringstream in(line);
    std::string token;
    while (in >> token) {
        const auto eq = token.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error("manifest: malformed token '" + token + "'");
        const std::string key = token.substr(0, eq);
        const std::string val = token.substr(eq + 1);
        if (key == "index") entry.index = std::stoull(val);
        else if (key == "label") entry.label = std::stoi(val);
        else if (key == "image") entry.image_path = val;
        else if (key == "saliency") entry.saliency_path = val;
        else if (key == "rows") entry.meta.ellipse.rows = std::stoi(val);
        else if (key == "cols") entry.meta.ellipse.cols = std::stoi(val);
        else if (key == "center_row") entry.meta.ellipse.center_row = std::stod(val);
        else if (key == "center_col") entry.meta.ellipse.center_col = std::stod(val);
        else if (key == "radius_row") entry.meta.ellipse.radius_row = std::stod(val);
        else if (key == "radius_col") entry.meta.ellipse.radius_col = std::stod(val);
        else if (key == "glyph_row") entry.meta.glyph_row = std::stoi(val);
        else if (key == "glyph_col") entry.meta.glyph_col = std::stoi(val);
        else if (key == "saliency_seed") entry.meta.saliency_seed = std::stoull(val);
        else throw std::runtime_error("manifest: unknown key '" + key + "'");
    }
    return entry;
}

}  // namespace smvit
