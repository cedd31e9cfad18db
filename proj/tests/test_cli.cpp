// end-to-end checks that spawn the real binary and inspect exit codes,
// stdout/stderr, and written artifacts. invoked as: test_cli <path-to-smvit>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "smvit/dataset.hpp"
#include "smvit/netpbm.hpp"
#include "smvit/saliency.hpp"

namespace fs = std::filesystem;
using namespace smvit;

namespace {

std::string g_bin;
fs::path g_dir;
int g_failures = 0;

void check(bool ok, const std::string& what) {
    if (ok) {
        std::cout << "ok: " << what << "\n";
    } else {
        std::cout << "FAIL: " << what << "\n";
        ++g_failures;
    }
}

struct RunResult {
    int exit_code = -1;
    std::string out;
    std::string err;
};

RunResult run(const std::string& args) {
    const fs::path out_file = g_dir / "stdout.txt";
    const fs::path err_file = g_dir / "stderr.txt";
    const std::string cmd =
        g_bin + " " + args + " >" + out_file.string() + " 2>" + err_file.string();
    const int status = std::system(cmd.c_str());
    RunResult r;
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    auto slurp = [](const fs::path& p) {
        std::ifstream in(p, std::ios::binary);
        std::stringstream ss;
        ss << in.rdbuf();
        return ss.str();
    };
    r.out = slurp(out_file);
    r.err = slurp(err_file);
    return r;
}

std::string read_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// fields like "loss=1.23" from a log line, order-independent comparison helper
std::string field(const std::string& line, const std::string& key) {
    const auto pos = line.find(key + "=");
    if (pos == std::string::npos) return "";
    const auto end = line.find_first_of(" \n", pos);
    return line.substr(pos + key.size() + 1, end - pos - key.size() - 1);
}

}  // namespace

int main(int argc, char** argv) {
    if (argc < 2) {
        std::cerr << "usage: test_cli <path-to-smvit>\n";
        return 1;
    }
    g_bin = argv[1];
    g_dir = fs::temp_directory_path() / "smvit_cli_test";
    fs::remove_all(g_dir);
    fs::create_directories(g_dir);
    try {
    // ---- usage errors -> exit 2 ----
    check(run("").exit_code == 2, "no command exits 2");
    check(run("frobnicate").exit_code == 2, "unknown command exits 2");
    check(run("mask --nope 1").exit_code == 2, "unknown flag exits 2");
    check(run("mask --in").exit_code == 2, "flag without value exits 2");
    {
        const RunResult r = run("train --steps=1 --train_samples=2 --val_samples=0 "
                                "--test_samples=0 --bogus_key=3");
        check(r.exit_code == 2, "unknown config key exits 2");
        check(r.err.find("bogus_key") != std::string::npos, "unknown key is named on stderr");
    }

    // ---- dataset generation ----
    const fs::path data = g_dir / "data";
    {
        const RunResult r = run("gen --out " + data.string() +
                                " --count 3 --num_classes=3 --image_side=32 --seed=9");
        check(r.exit_code == 0, "gen exits 0");
        check(fs::exists(data / "manifest.txt"), "gen writes a manifest");
        check(fs::exists(data / "sample_0.ppm") && fs::exists(data / "saliency_0.pgm"),
              "gen writes images and saliency maps");
    }

    std::string manifest_first;
    {
        std::ifstream in(data / "manifest.txt");
        std::getline(in, manifest_first);
    }
    const ManifestEntry entry = parse_manifest_line(manifest_first);

    // ---- mask extraction on a real sample ----
    const fs::path mask_path = g_dir / "mask.pgm";
    const fs::path bbox_path = g_dir / "bbox.txt";
    const fs::path crop_path = g_dir / "crop.ppm";
    {
        const RunResult r = run("mask --in " + (data / "sample_0.ppm").string() + " --saliency " +
                                (data / "saliency_0.pgm").string() + " --out-mask " +
                                mask_path.string() + " --out-bbox " + bbox_path.string() +
                                " --crop " + crop_path.string() + " --size 32");
        check(r.exit_code == 0, "mask exits 0");
        check(r.out.find("provenance=") != std::string::npos, "mask reports provenance");
        check(fs::exists(mask_path) && fs::exists(bbox_path) && fs::exists(crop_path),
              "mask writes all artifacts");

        // the extracted mask overlaps the true object well
        const BinaryMask mask = read_mask(mask_path.string());
        const BinaryMask truth = ground_truth_mask(entry.meta, 32);
        std::size_t inter = 0, uni = 0;
        for (std::size_t i = 0; i < mask.v.size(); ++i) {
            inter += mask.v[i] & truth.v[i];
            uni += mask.v[i] | truth.v[i];
        }
        check(uni > 0 && static_cast<double>(inter) / static_cast<double>(uni) >= 0.5,
              "extracted mask overlaps ground truth");
        const BoundingBox box = read_bbox(bbox_path.string());
        check(box.row_max >= box.row_min && box.col_max >= box.col_min, "bbox is well formed");
        const Image crop = read_ppm(crop_path.string());
        check(crop.rows == 32 && crop.cols == 32, "crop has the requested size");
    }

    // ---- corrupt input -> exit 2 with a byte offset ----
    {
        const fs::path bad = g_dir / "trunc.pgm";
        const std::string bytes = read_bytes(data / "saliency_0.pgm");
        std::ofstream out(bad, std::ios::binary);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
        out.close();
        const RunResult r = run("mask --in " + (data / "sample_0.ppm").string() + " --saliency " +
                                bad.string() + " --out-mask " + mask_path.string() +
                                " --out-bbox " + bbox_path.string());
        check(r.exit_code == 2, "truncated saliency map exits 2");
        check(r.err.find("byte offset") != std::string::npos,
              "parse error reports the byte offset");
    }
    {
        const RunResult r = run("mask --in " + (data / "sample_0.ppm").string() +
                                " --saliency /nonexistent.pgm --out-mask " + mask_path.string() +
                                " --out-bbox " + bbox_path.string());
        check(r.exit_code == 2, "missing saliency file exits 2");
    }

    // ---- tiny training run ----
    const fs::path ckpt = g_dir / "model.ckpt";
    const fs::path metrics = g_dir / "metrics.txt";
    const std::string common =
        " --image_side=16 --patch_side=4 --embed_dim=8 --heads=2 --layers=1 --num_classes=3"
        " --glyph_size=4 --area_frac_min=0.2"
        " --train_samples=24 --val_samples=8 --test_samples=8 --seed=11";
    {
        const RunResult r = run("train --steps=12 --batch_size=8 --lr=0.05 --eval_every=6" +
                                common + " --ckpt_out=" + ckpt.string() +
                                " --metrics_out=" + metrics.string());
        check(r.exit_code == 0, "train exits 0");
        check(fs::exists(ckpt), "train writes a checkpoint");
        check(r.out.find("test_accuracy=") != std::string::npos, "train reports test accuracy");
        std::ifstream in(metrics);
        std::string line;
        int lines = 0;
        bool saw_val = false;
        while (std::getline(in, line)) {
            ++lines;
            if (line.find("split=val") != std::string::npos) saw_val = true;
        }
        check(lines >= 3 && saw_val, "metrics file has train/val/test lines");
    }

    // ---- eval determinism ----
    {
        const std::string cmd = "eval --ckpt " + ckpt.string() + common;
        const RunResult a = run(cmd);
        const RunResult b = run(cmd);
        check(a.exit_code == 0, "eval exits 0");
        check(!a.out.empty() && a.out == b.out, "repeated eval is bit-identical");
        check(!field(a.out, "loss").empty() && !field(a.out, "accuracy").empty(),
              "eval line has loss and accuracy");
    }
    check(run("eval --ckpt /nonexistent.ckpt" + common).exit_code == 2,
          "missing checkpoint exits 2");

    // ---- attention heatmaps ----
    {
        const std::string base = "attend --ckpt " + ckpt.string() + " --in " +
                                 (data / "sample_0.ppm").string() + " --saliency " +
                                 (data / "saliency_0.pgm").string();
        const fs::path heat = g_dir / "heat.pgm";
        const RunResult r = run(base + " --out " + heat.string());
        check(r.exit_code == 0, "attend exits 0");
        check(r.out.find("predicted=") != std::string::npos, "attend reports a prediction");
        const Image hm = read_pgm(heat.string());
        check(hm.rows == 16 && hm.cols == 16, "heatmap matches the model resolution");

        // manifest-sourced saliency works too
        const fs::path heat2 = g_dir / "heat2.pgm";
        const RunResult r2 = run(base.substr(0, base.find(" --saliency")) + " --manifest " +
                                 (data / "manifest.txt").string() + " --index 0 --out " +
                                 heat2.string());
        check(r2.exit_code == 0, "attend via manifest exits 0");
    }

    // ---- d_theta=0 checkpoint: guided and unguided attention agree exactly ----
    {
        const fs::path ckpt0 = g_dir / "model0.ckpt";
        const RunResult t = run("train --steps=4 --batch_size=4 --lr=0.05 --d_theta=0" + common +
                                " --val_samples=0 --test_samples=0 --ckpt_out=" + ckpt0.string());
        check(t.exit_code == 0, "d_theta=0 training exits 0");
        const std::string base = "attend --ckpt " + ckpt0.string() + " --in " +
                                 (data / "sample_1.ppm").string() + " --saliency " +
                                 (data / "saliency_1.pgm").string();
        const fs::path hg = g_dir / "heat_g.pgm";
        const fs::path hu = g_dir / "heat_u.pgm";
        const RunResult rg = run(base + " --out " + hg.string() + " --guided true");
        const RunResult ru = run(base + " --out " + hu.string() + " --guided false");
        check(rg.exit_code == 0 && ru.exit_code == 0, "guided/unguided attend exit 0");
        check(read_bytes(hg) == read_bytes(hu),
              "d_theta=0 heatmaps are byte-identical with and without guidance");
        check(field(rg.out, "predicted") == field(ru.out, "predicted"),
              "d_theta=0 predictions agree");
    }

    // ---- gradcheck ----
    {
        const RunResult r = run("gradcheck --d_theta=0 --seed=2");
        check(r.exit_code == 0, "gradcheck d_theta=0 exits 0");
        check(r.out.find("max_rel_err=") != std::string::npos, "gradcheck reports the error");
        check(run("gradcheck --d_theta=0.3 --seed=2").exit_code == 0,
              "gradcheck d_theta=0.3 exits 0");
    }

    } catch (const std::exception& e) {
        check(false, std::string("unexpected exception: ") + e.what());
    }

    fs::remove_all(g_dir);
    if (g_failures > 0) {
        std::cout << g_failures << " check(s) failed\n";
        return 1;
    }
    std::cout << "all cli checks passed\n";
    return 0;
}
