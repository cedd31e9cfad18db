#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "smvit/config.hpp"
#include "smvit/dataset.hpp"
#include "smvit/model.hpp"
#include "smvit/netpbm.hpp"
#include "smvit/saliency.hpp"
#include "smvit/train.hpp"

namespace {

using namespace smvit;

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

const char* kUsage =
    "usage: smvit <command> [options]\n"
    "\n"
    "commands:\n"
    "  mask      --in img.ppm [--saliency map.pgm | --manifest m.txt --index N]\n"
    "            --out-mask mask.pgm --out-bbox bbox.txt [--crop out.ppm --size N]\n"
    "            [--blur R --noise S]\n"
    "  train     [--config run.cfg] [--key=value ...]\n"
    "  eval      --ckpt model.ckpt [--config run.cfg] [--key=value ...]\n"
    "  attend    --ckpt model.ckpt --in img.ppm [--saliency map.pgm |\n"
    "            --manifest m.txt --index N] --out heat.pgm [--guided true|false]\n"
    "  gradcheck [--d_theta V] [--seed N]\n"
    "  gen       [--config run.cfg] [--key=value ...] --out DIR\n";

// splits argv into named flags (--flag value | --flag=value) and config overrides
struct Args {
    std::map<std::string, std::string> flags;
    std::vector<std::string> overrides;
};

Args parse_args(int argc, char** argv, int first,
                const std::vector<std::string>& known_flags, bool collect_overrides) {
    Args args;
    for (int i = first; i < argc; ++i) {
        std::string arg = argv[i];
        if (arg.rfind("--", 0) != 0)
            throw UsageError("unexpected argument '" + arg + "'");
        std::string key, value;
        const auto eq = arg.find('=');
        if (eq != std::string::npos) {
            key = arg.substr(2, eq - 2);
            value = arg.substr(eq + 1);
        } else {
            key = arg.substr(2);
            if (i + 1 >= argc)
                throw UsageError("flag '--" + key + "' needs a value");
            value = argv[++i];
        }
        bool known = false;
        for (const std::string& f : known_flags)
            if (f == key) {
                known = true;
                break;
            }
        if (known) {
            args.flags[key] = value;
        } else if (collect_overrides) {
            args.overrides.push_back("--" + key + "=" + value);
        } else {
            throw UsageError("unknown flag '--" + key + "'");
        }
    }
    return args;
}

std::string require(const Args& args, const std::string& flag) {
    const auto it = args.flags.find(flag);
    if (it == args.flags.end()) throw UsageError("missing required flag '--" + flag + "'");
    return it->second;
}

std::optional<std::string> optional_flag(const Args& args, const std::string& flag) {
    const auto it = args.flags.find(flag);
    if (it == args.flags.end()) return std::nullopt;
    return it->second;
}

bool parse_bool_flag(const std::string& flag, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw UsageError("flag '--" + flag + "' needs true/false");
}

ManifestEntry lookup_manifest(const std::string& path, std::uint64_t index) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot open manifest '" + path + "'");
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const ManifestEntry entry = parse_manifest_line(line);
        if (entry.index == index) return entry;
    }
    throw UsageError("manifest '" + path + "' has no index " + std::to_string(index));
}

SaliencyMap resolve_saliency(const Args& args) {
    if (const auto sal = optional_flag(args, "saliency")) return read_map(*sal);
    const auto manifest = optional_flag(args, "manifest");
    const auto index = optional_flag(args, "index");
    if (!manifest || !index)
        throw UsageError("need --saliency, or --manifest with --index, as the saliency source");
    const ManifestEntry entry = lookup_manifest(*manifest, std::stoull(*index));
    const int blur = std::stoi(optional_flag(args, "blur").value_or("0"));
    const double noise = std::stod(optional_flag(args, "noise").value_or("0"));
    return toy_saliency(entry.meta.ellipse, blur, noise, entry.meta.saliency_seed);
}

int cmd_mask(int argc, char** argv) {
    const Args args = parse_args(argc, argv, 2,
                                 {"in", "saliency", "manifest", "index", "out-mask", "out-bbox",
                                  "crop", "size", "blur", "noise"},
                                 false);
    const Image image = read_ppm(require(args, "in"));
    const SaliencyMap map = normalize_map(resolve_saliency(args));
    if (map.rows != image.rows || map.cols != image.cols)
        throw UsageError("saliency map " + std::to_string(map.rows) + "x" +
                         std::to_string(map.cols) + " does not match image " +
                         std::to_string(image.rows) + "x" + std::to_string(image.cols));

    const auto [mask, provenance] = extract_mask(map);
    const BoundingBox box = bounding_box(mask);
    write_mask(require(args, "out-mask"), mask);
    write_bbox(require(args, "out-bbox"), box);

    const char* source = "";
    switch (provenance.source) {
        case MaskSource::primary_threshold: source = "primary_threshold"; break;
        case MaskSource::refined_threshold: source = "refined_threshold"; break;
        case MaskSource::central_fallback: source = "central_fallback"; break;
        case MaskSource::external_file: source = "external_file"; break;
        case MaskSource::toy_generator: source = "toy_generator"; break;
    }
    std::cout << "provenance=" << source << " threshold=" << provenance.threshold_used
              << " bbox=" << box.row_min << "," << box.col_min << "," << box.row_max << ","
              << box.col_max << "\n";

    if (const auto crop = optional_flag(args, "crop")) {
        const auto size = optional_flag(args, "size");
        if (!size) throw UsageError("--crop needs --size");
        write_ppm(*crop, crop_and_resize_image(image, box, std::stoi(*size)));
    }
    return kExitOk;
}

RunConfig config_from_args(const Args& args) {
    if (const auto cfg_path = optional_flag(args, "config"))
        return RunConfig::from_file(*cfg_path, args.overrides);
    return RunConfig::from_overrides(args.overrides);
}

int cmd_train(int argc, char** argv) {
    const Args args = parse_args(argc, argv, 2, {"config"}, true);
    const RunConfig cfg = config_from_args(args);

    const TrainResult result = train_loop(cfg.train, cfg.toy, cfg.model);
    save_checkpoint(cfg.ckpt_out, cfg.model, result.params);

    if (!cfg.metrics_out.empty()) {
        std::ofstream out(cfg.metrics_out);
        if (!out) throw std::runtime_error("cannot open '" + cfg.metrics_out + "' for writing");
        for (const std::string& line : result.log) out << line << "\n";
    } else {
        for (const std::string& line : result.log) std::cout << line << "\n";
    }
    std::cout << "checkpoint=" << cfg.ckpt_out << " test_accuracy=" << result.final_test.accuracy
              << "\n";
    return kExitOk;
}

int cmd_eval(int argc, char** argv) {
    const Args args = parse_args(argc, argv, 2, {"config", "ckpt"}, true);
    RunConfig cfg = config_from_args(args);
    auto [model_cfg, params] = load_checkpoint(require(args, "ckpt"));

    const auto test_set = prepare_dataset(
        cfg.toy, model_cfg,
        static_cast<std::uint64_t>(cfg.train.train_samples + cfg.train.val_samples),
        static_cast<std::size_t>(cfg.train.test_samples), cfg.train.corrupt_fraction);
    const EvalResult r = evaluate(params, model_cfg, test_set, cfg.train.smge_infer);
    std::cout << "split=test loss=" << r.loss << " accuracy=" << r.accuracy
              << " smge_train=" << (cfg.train.smge_train ? 1 : 0)
              << " smge_infer=" << (cfg.train.smge_infer ? 1 : 0)
              << " d_theta=" << model_cfg.d_theta << "\n";
    return kExitOk;
}

int cmd_attend(int argc, char** argv) {
    const Args args = parse_args(
        argc, argv, 2,
        {"ckpt", "in", "saliency", "manifest", "index", "out", "guided", "blur", "noise"},
        false);
    auto [cfg, params] = load_checkpoint(require(args, "ckpt"));
    const Image image = read_ppm(require(args, "in"));
    if (image.channels != cfg.channels)
        throw UsageError("image channel count does not match checkpoint config");
    const bool guided = parse_bool_flag("guided", optional_flag(args, "guided").value_or("true"));

    const SaliencyMap map = normalize_map(resolve_saliency(args));
    if (map.rows != image.rows || map.cols != image.cols)
        throw UsageError("saliency map dimensions do not match image");
    const auto [mask, provenance] = extract_mask(map);
    const BoundingBox box = bounding_box(mask);
    const Image cropped = crop_and_resize_image(image, box, cfg.image_side);
    const BinaryMask cropped_mask = crop_and_resize_mask(mask, box, cfg.image_side);
    const MaskVector m = MaskVector::from_patches(downsample_mask(cropped_mask, cfg));

    const ForwardResult result = forward(cropped, m, cfg, params, guided);
    write_pgm(require(args, "out"), attention_heatmap(result.record, cfg));
    std::cout << "predicted=" << predict(result.logits) << " guided=" << (guided ? 1 : 0) << "\n";
    return kExitOk;
}

int cmd_gradcheck(int argc, char** argv) {
    const Args args = parse_args(argc, argv, 2, {"d_theta", "seed"}, false);
    ViTConfig cfg;
    cfg.image_side = 8;
    cfg.patch_side = 4;
    cfg.embed_dim = 8;
    cfg.layers = 1;
    cfg.heads = 2;
    cfg.num_classes = 3;
    cfg.d_theta = std::stod(optional_flag(args, "d_theta").value_or("0.25"));
    const std::uint64_t seed = std::stoull(optional_flag(args, "seed").value_or("1"));

    const GradCheckResult r = grad_check(cfg, seed);
    std::cout << "max_rel_err=" << r.max_rel_err << " worst_tensor=" << r.worst_tensor
              << " worst_index=" << r.worst_index << " d_theta=" << cfg.d_theta << "\n";
    if (!r.passed(1e-4)) {
        std::cerr << "gradient check FAILED: tensor " << r.worst_tensor << " index "
                  << r.worst_index << " rel err " << r.max_rel_err << "\n";
        return kExitRuntime;
    }
    return kExitOk;
}

int cmd_gen(int argc, char** argv) {
    const Args args = parse_args(argc, argv, 2, {"config", "out", "count"}, true);
    const RunConfig cfg = config_from_args(args);
    const std::string dir = require(args, "out");
    std::filesystem::create_directories(dir);

    const std::size_t count = static_cast<std::size_t>(
        std::stoi(optional_flag(args, "count").value_or(std::to_string(cfg.train.train_samples))));
    std::ofstream manifest(dir + "/manifest.txt");
    if (!manifest) throw std::runtime_error("cannot open manifest for writing");
    for (std::size_t i = 0; i < count; ++i) {
        const Sample sample = generate_sample(cfg.toy, i);
        const std::string image_path = dir + "/sample_" + std::to_string(i) + ".ppm";
        const std::string map_path = dir + "/saliency_" + std::to_string(i) + ".pgm";
        write_ppm(image_path, sample.image);
        write_map(map_path, sample_saliency(cfg.toy, sample.meta));
        manifest << manifest_line(i, sample.label, image_path, map_path, sample.meta) << "\n";
    }
    std::cout << "wrote " << count << " samples to " << dir << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    if (argc < 2) {
        std::cerr << kUsage;
        return kExitUsage;
    }
    const std::string command = argv[1];
    try {
        if (command == "mask") return cmd_mask(argc, argv);
        if (command == "train") return cmd_train(argc, argv);
        if (command == "eval") return cmd_eval(argc, argv);
        if (command == "attend") return cmd_attend(argc, argv);
        if (command == "gradcheck") return cmd_gradcheck(argc, argv);
        if (command == "gen") return cmd_gen(argc, argv);
        std::cerr << "unknown command '" << command << "'\n" << kUsage;
        return kExitUsage;
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const NetpbmError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const CheckpointError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
}
