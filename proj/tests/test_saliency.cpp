#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "smvit/rng.hpp"
#include "smvit/saliency.hpp"

using namespace smvit;

namespace {

SaliencyMap map_from(int rows, int cols, std::initializer_list<double> vals) {
    SaliencyMap m(rows, cols, 1);
    std::size_t i = 0;
    for (double v : vals) m.data[i++] = v;
    return m;
}

std::filesystem::path temp_file(const char* name) {
    return std::filesystem::temp_directory_path() / name;
}

}  // namespace

TEST_CASE("normalize_map rescales and handles degenerate input") {
    const SaliencyMap already = map_from(1, 3, {0.0, 0.4, 1.0});
    const SaliencyMap n1 = normalize_map(already);
    for (std::size_t i = 0; i < 3; ++i) CHECK(n1.data[i] == already.data[i]);

    const SaliencyMap n2 = normalize_map(map_from(1, 3, {2, 4, 6}));
    CHECK(n2.data[0] == 0.0);
    CHECK(n2.data[1] == 0.5);
    CHECK(n2.data[2] == 1.0);

    // a constant map carries no localization signal
    const SaliencyMap n3 = normalize_map(map_from(1, 3, {5, 5, 5}));
    for (double v : n3.data) CHECK(v == 0.0);
}

TEST_CASE("binarize applies inclusive threshold") {
    const SaliencyMap m = map_from(2, 2, {0.9, 0.5, 0.8, 0.79});
    const BinaryMask mask = binarize(m, 0.8);
    CHECK(mask.at(0, 0) == 1);
    CHECK(mask.at(0, 1) == 0);
    CHECK(mask.at(1, 0) == 1);  // boundary value exactly at threshold is positive
    CHECK(mask.at(1, 1) == 0);

    const BinaryMask zero = binarize(map_from(1, 2, {0, 0}), 0.5);
    CHECK(zero.positive_count() == 0);

    const BinaryMask refined = binarize(map_from(1, 2, {0.25, 0.1}), 0.2);
    CHECK(refined.at(0, 0) == 1);
    CHECK(refined.at(0, 1) == 0);
}

TEST_CASE("binarize is monotone in the threshold") {
    Rng rng(21);
    SaliencyMap m(16, 16, 1);
    for (double& v : m.data) v = rng.uniform();
    double lo = 0.1;
    for (double hi : {0.3, 0.5, 0.8, 0.95}) {
        const BinaryMask a = binarize(m, lo);
        const BinaryMask b = binarize(m, hi);
        for (std::size_t i = 0; i < a.v.size(); ++i)
            REQUIRE(b.v[i] <= a.v[i]);  // raising the threshold never adds positives
        lo = hi;
    }
}

TEST_CASE("extract_mask stage 1 fires on a strong blob") {
    SaliencyMap m(10, 10, 1);
    for (int r = 2; r < 8; ++r)
        for (int c = 2; c < 7; ++c) m.at(r, c) = 0.95;  // 30% blob
    const auto [mask, prov] = extract_mask(m);
    CHECK(prov.source == MaskSource::primary_threshold);
    CHECK(prov.threshold_used == 0.8);
    CHECK(mask.positive_count() == 30);
    CHECK(mask.at(2, 2) == 1);
    CHECK(mask.at(0, 0) == 0);
}

TEST_CASE("extract_mask refinement fires when 0.8 finds nothing") {
    SaliencyMap m(10, 10, 1);
    for (int r = 0; r < 5; ++r)
        for (int c = 0; c < 4; ++c) m.at(r, c) = 0.5;  // max value 0.5: stage 1 empty
    const auto [mask, prov] = extract_mask(m);
    CHECK(prov.source == MaskSource::refined_threshold);
    CHECK(prov.threshold_used == 0.2);
    CHECK(mask.positive_count() == 20);
}

TEST_CASE("extract_mask central fallback geometry on all-zero 10x10 map") {
    const SaliencyMap m(10, 10, 1);
    const auto [mask, prov] = extract_mask(m);
    CHECK(prov.source == MaskSource::central_fallback);
    CHECK(mask.positive_count() == 64);
    for (int r = 0; r < 10; ++r)
        for (int c = 0; c < 10; ++c) {
            const bool inside = r >= 1 && r <= 8 && c >= 1 && c <= 8;
            REQUIRE(mask.at(r, c) == (inside ? 1 : 0));
        }
}

TEST_CASE("extract_mask treats a sub-fraction mask as corrupted") {
    SaliencyMap m(32, 32, 1);  // 1024 pixels; < 0.5% means < 5.12 positives
    m.at(0, 0) = 1.0;
    m.at(0, 1) = 1.0;  // 2 positives at 0.8: corrupted
    const auto [mask, prov] = extract_mask(m);
    CHECK(prov.source == MaskSource::central_fallback);

    // the knob is configurable
    const auto [mask2, prov2] = extract_mask(m, 0.0009);
    CHECK(prov2.source == MaskSource::primary_threshold);
    CHECK(mask2.positive_count() == 2);
}

TEST_CASE("extract_mask never returns an empty mask") {
    Rng rng(4);
    for (int trial = 0; trial < 200; ++trial) {
        SaliencyMap m(8, 8, 1);
        for (double& v : m.data) v = rng.uniform() < 0.7 ? 0.0 : rng.uniform();
        const auto [mask, prov] = extract_mask(normalize_map(m));
        REQUIRE(mask.positive_count() >= 1);
        // provenance stage ordering is checkable by re-running stages
        if (prov.source == MaskSource::refined_threshold)
            REQUIRE(binarize(m, kPrimaryThreshold).positive_count() <
                    0.005 * m.data.size() + 1);
    }
}

TEST_CASE("bounding_box basics and brute-force oracle") {
    BinaryMask single(8, 8);
    single.at(3, 5) = 1;
    const BoundingBox b1 = bounding_box(single);
    CHECK(b1.row_min == 3);
    CHECK(b1.col_min == 5);
    CHECK(b1.row_max == 3);
    CHECK(b1.col_max == 5);

    BinaryMask two(8, 8);
    two.at(1, 2) = 1;
    two.at(4, 7) = 1;
    const BoundingBox b2 = bounding_box(two);
    CHECK(b2.row_min == 1);
    CHECK(b2.col_min == 2);
    CHECK(b2.row_max == 4);
    CHECK(b2.col_max == 7);

    Rng rng(13);
    for (int trial = 0; trial < 100; ++trial) {
        BinaryMask mask(12, 9);
        for (auto& v : mask.v) v = rng.uniform() < 0.1 ? 1 : 0;
        if (mask.positive_count() == 0)
            mask.at(static_cast<int>(rng.uniform_int(12)), static_cast<int>(rng.uniform_int(9))) = 1;
        const BoundingBox box = bounding_box(mask);
        // scan-all-pixels oracle
        int rmin = 12, cmin = 9, rmax = -1, cmax = -1;
        for (int r = 0; r < 12; ++r)
            for (int c = 0; c < 9; ++c)
                if (mask.at(r, c)) {
                    rmin = std::min(rmin, r);
                    cmin = std::min(cmin, c);
                    rmax = std::max(rmax, r);
                    cmax = std::max(cmax, c);
                }
        REQUIRE(box.row_min == rmin);
        REQUIRE(box.col_min == cmin);
        REQUIRE(box.row_max == rmax);
        REQUIRE(box.col_max == cmax);
        // the box touches positives on all four edges by construction of the oracle
    }
}

TEST_CASE("bounding_box rejects an empty mask") {
    CHECK_THROWS_AS(bounding_box(BinaryMask(4, 4)), std::logic_error);
}

TEST_CASE("crop_and_resize identity and corner preservation") {
    Image img(4, 4, 3);
    Rng rng(2);
    for (double& v : img.data) v = rng.uniform();
    BinaryMask mask(4, 4);
    mask.at(1, 1) = 1;
    const BoundingBox full{0, 0, 3, 3};
    const auto [img2, mask2] = crop_and_resize(img, mask, full, 4);
    for (std::size_t i = 0; i < img.data.size(); ++i)
        CHECK(img2.data[i] == doctest::Approx(img.data[i]).epsilon(1e-15));
    for (std::size_t i = 0; i < mask.v.size(); ++i) CHECK(mask2.v[i] == mask.v[i]);

    // 2x2 upsized to 4x4 keeps corners under corner-aligned bilinear sampling
    Image small(2, 2, 1);
    small.at(0, 0) = 0.1;
    small.at(0, 1) = 0.9;
    small.at(1, 0) = 0.3;
    small.at(1, 1) = 0.7;
    const Image up = crop_and_resize_image(small, {0, 0, 1, 1}, 4);
    CHECK(up.at(0, 0) == doctest::Approx(0.1));
    CHECK(up.at(0, 3) == doctest::Approx(0.9));
    CHECK(up.at(3, 0) == doctest::Approx(0.3));
    CHECK(up.at(3, 3) == doctest::Approx(0.7));
}

TEST_CASE("crop_and_resize mask stays binary and 1-pixel boxes replicate") {
    Rng rng(6);
    BinaryMask mask(10, 10);
    for (auto& v : mask.v) v = rng.uniform() < 0.4 ? 1 : 0;
    const BinaryMask resized = crop_and_resize_mask(mask, {2, 3, 8, 9}, 16);
    for (auto v : resized.v) REQUIRE((v == 0 || v == 1));

    Image img(5, 5, 3);
    img.at(2, 2, 0) = 0.5;
    img.at(2, 2, 1) = 0.25;
    const Image rep = crop_and_resize_image(img, {2, 2, 2, 2}, 3);
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) {
            REQUIRE(rep.at(r, c, 0) == 0.5);
            REQUIRE(rep.at(r, c, 1) == 0.25);
        }
}

TEST_CASE("toy_saliency exact indicator without degradation") {
    EllipseSpec e{16, 16, 8.0, 8.0, 4.0, 5.0};
    const SaliencyMap m = toy_saliency(e, 0, 0.0, 42);
    for (int r = 0; r < 16; ++r)
        for (int c = 0; c < 16; ++c)
            REQUIRE(m.at(r, c) == (e.contains(r, c) ? 1.0 : 0.0));
}

TEST_CASE("toy_saliency under noise keeps high IoU after 0.8 threshold") {
    int pass = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        EllipseSpec e{32, 32, 15.0, 16.0, 7.0, 9.0};
        const SaliencyMap noisy = toy_saliency(e, 0, 0.05, seed);
        const BinaryMask mask = binarize(normalize_map(noisy), 0.8);
        const BinaryMask truth = binarize(toy_saliency(e, 0, 0.0, 0), 0.5);
        std::size_t inter = 0, uni = 0;
        for (std::size_t i = 0; i < mask.v.size(); ++i) {
            inter += mask.v[i] & truth.v[i];
            uni += mask.v[i] | truth.v[i];
        }
        if (static_cast<double>(inter) / static_cast<double>(uni) >= 0.9) ++pass;
    }
    CHECK(pass == 100);
}

TEST_CASE("toy_saliency stays clipped and deterministic") {
    EllipseSpec e{16, 16, 8.0, 7.0, 5.0, 4.0};
    const SaliencyMap a = toy_saliency(e, 2, 0.2, 9);
    const SaliencyMap b = toy_saliency(e, 2, 0.2, 9);
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        REQUIRE(a.data[i] >= 0.0);
        REQUIRE(a.data[i] <= 1.0);
        REQUIRE(a.data[i] == b.data[i]);
    }
}

TEST_CASE("pgm write-read roundtrip is exact on quantized maps") {
    const auto path = temp_file("smvit_roundtrip.pgm");
    SaliencyMap m(3, 5, 1);
    Rng rng(8);
    for (double& v : m.data) v = std::round(rng.uniform() * 255.0) / 255.0;
    write_map(path.string(), m);
    const SaliencyMap back = read_map(path.string());
    REQUIRE(back.rows == 3);
    REQUIRE(back.cols == 5);
    for (std::size_t i = 0; i < m.data.size(); ++i)
        REQUIRE(back.data[i] == doctest::Approx(m.data[i]).epsilon(1e-12));
    std::filesystem::remove(path);
}

TEST_CASE("pgm header parsing") {
    const auto path = temp_file("smvit_header.pgm");
    {
        std::ofstream out(path, std::ios::binary);
        out << "P5\n4 2\n255\n";
        out.write("\x00\x40\x80\xff\x10\x20\x30\x40", 8);
    }
    const SaliencyMap m = read_map(path.string());
    CHECK(m.rows == 2);
    CHECK(m.cols == 4);
    CHECK(m.at(0, 3) == doctest::Approx(1.0));
    std::filesystem::remove(path);
}

TEST_CASE("pgm rejects bad maxval, truncation, bad magic with byte offsets") {
    const auto path = temp_file("smvit_bad.pgm");
    {
        std::ofstream out(path, std::ios::binary);
        out << "P5\n2 2\n65535\n";
        out.write("\x00\x00\x00\x00", 4);
    }
    CHECK_THROWS_AS(read_map(path.string()), NetpbmError);

    {
        std::ofstream out(path, std::ios::binary);
        out << "P5\n4 4\n255\n";
        out.write("\x00\x01", 2);  // 14 bytes short
    }
    try {
        read_map(path.string());
        FAIL("expected parse error");
    } catch (const NetpbmError& e) {
        CHECK(std::string(e.what()).find("byte offset") != std::string::npos);
        CHECK(e.byte_offset > 0);
    }

    {
        std::ofstream out(path, std::ios::binary);
        out << "P2\n2 2\n255\n0 0 0 0\n";
    }
    CHECK_THROWS_AS(read_map(path.string()), NetpbmError);
    std::filesystem::remove(path);
}

TEST_CASE("mask and bbox file roundtrips") {
    const auto mpath = temp_file("smvit_mask.pgm");
    BinaryMask mask(6, 4);
    Rng rng(30);
    for (auto& v : mask.v) v = rng.uniform() < 0.5 ? 1 : 0;
    write_mask(mpath.string(), mask);
    const BinaryMask back = read_mask(mpath.string());
    REQUIRE(back.v == mask.v);
    std::filesystem::remove(mpath);

    const auto bpath = temp_file("smvit_bbox.txt");
    const BoundingBox box{1, 2, 10, 20};
    write_bbox(bpath.string(), box);
    const BoundingBox bback = read_bbox(bpath.string());
    CHECK(bback.row_min == 1);
    CHECK(bback.col_min == 2);
    CHECK(bback.row_max == 10);
    CHECK(bback.col_max == 20);
    std::filesystem::remove(bpath);
}
