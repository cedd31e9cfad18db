#include "smvit/config.hpp"

#include <fstream>
#include <sstream>

namespace smvit {

namespace {

bool parse_bool(const std::string& key, const std::string& val) {
    if (val == "true" || val == "1") return true;
    if (val == "false" || val == "0") return false;
    throw UsageError("config: key '" + key + "' needs true/false, got '" + val + "'");
}

int parse_int(const std::string& key, const std::string& val) {
    try {
        std::size_t used = 0;
        const int v = std::stoi(val, &used);
        if (used != val.size()) throw std::invalid_argument(val);
        return v;
    } catch (const std::exception&) {
        throw UsageError("config: key '" + key + "' needs an integer, got '" + val + "'");
    }
}

double parse_double(const std::string& key, const std::string& val) {
    try {
        std::size_t used = 0;
        const double v = std::stod(val, &used);
        if (used != val.size()) throw std::invalid_argument(val);
        return v;
    } catch (const std::exception&) {
        throw UsageError("config: key '" + key + "' needs a number, got '" + val + "'");
    }
}

std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) return "";
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

}  // namespace

void RunConfig::apply(const std::string& key, const std::string& value) {
    // model
    if (key == "image_side") { model.image_side = parse_int(key, value); toy.image_side = model.image_side; }
    else if (key == "channels") model.channels = parse_int(key, value);
    else if (key == "patch_side") model.patch_side = parse_int(key, value);
    else if (key == "embed_dim") model.embed_dim = parse_int(key, value);
    else if (key == "layers") model.layers = parse_int(key, value);
    else if (key == "heads") model.heads = parse_int(key, value);
    else if (key == "num_classes") { model.num_classes = parse_int(key, value); toy.num_classes = model.num_classes; }
    else if (key == "d_theta") model.d_theta = parse_double(key, value);
    else if (key == "patch_tau") model.patch_tau = parse_double(key, value);
    // training
    else if (key == "lr") train.lr = parse_double(key, value);
    else if (key == "momentum") train.momentum = parse_double(key, value);
    else if (key == "batch_size") train.batch_size = parse_int(key, value);
    else if (key == "steps") train.steps = parse_int(key, value);
    else if (key == "seed") { train.seed = static_cast<std::uint64_t>(parse_int(key, value)); toy.seed = train.seed; }
    else if (key == "smge_train") train.smge_train = parse_bool(key, value);
    else if (key == "smge_infer") train.smge_infer = parse_bool(key, value);
    else if (key == "train_samples") train.train_samples = parse_int(key, value);
    else if (key == "val_samples") train.val_samples = parse_int(key, value);
    else if (key == "test_samples") train.test_samples = parse_int(key, value);
    else if (key == "flip_augment") train.flip_augment = parse_bool(key, value);
    else if (key == "color_jitter") train.color_jitter = parse_bool(key, value);
    else if (key == "eval_every") train.eval_every = parse_int(key, value);
    else if (key == "corrupt_fraction") train.corrupt_fraction = parse_double(key, value);
    // toy dataset
    else if (key == "glyph_size") toy.glyph_size = parse_int(key, value);
    else if (key == "area_frac_min") toy.area_frac_min = parse_double(key, value);
    else if (key == "area_frac_max") toy.area_frac_max = parse_double(key, value);
    else if (key == "distractor_count") toy.distractor_count = parse_int(key, value);
    else if (key == "distractor_contrast") toy.distractor_contrast = parse_double(key, value);
    else if (key == "glyph_grid") toy.glyph_grid = parse_int(key, value);
    else if (key == "glyph_jitter") toy.glyph_jitter = parse_bool(key, value);
    else if (key == "glyph_edge") toy.glyph_edge = parse_bool(key, value);
    else if (key == "distractor_backing") toy.distractor_backing = parse_bool(key, value);
    else if (key == "corner_distractors") toy.corner_distractors = parse_bool(key, value);
    else if (key == "blur_radius") toy.blur_radius = parse_int(key, value);
    else if (key == "noise_sigma") toy.noise_sigma = parse_double(key, value);
    // I/O
    else if (key == "ckpt_out") ckpt_out = value;
    else if (key == "metrics_out") metrics_out = value;
    else throw UsageError("config: unknown key '" + key + "'");
}

void RunConfig::validate() const {
    try {
        model.validate();
        train.validate();
        toy.validate();
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
    if (toy.image_side != model.image_side)
        throw UsageError("config: toy image_side must match model image_side");
}

RunConfig RunConfig::from_file(const std::string& path,
                               const std::vector<std::string>& overrides) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot open config file '" + path + "'");
    RunConfig cfg;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto colon = line.find(':');
        if (colon == std::string::npos)
            throw UsageError("config '" + path + "' line " + std::to_string(line_no) +
                             ": expected key:value");
        cfg.apply(trim(line.substr(0, colon)), trim(line.substr(colon + 1)));
    }
    for (const std::string& ov : overrides) {
        const auto eq = ov.find('=');
        if (ov.rfind("--", 0) != 0 || eq == std::string::npos)
            throw UsageError("override '" + ov + "' must look like --key=value");
        cfg.apply(ov.substr(2, eq - 2), ov.substr(eq + 1));
    }
    cfg.validate();
    return cfg;
}

RunConfig RunConfig::from_overrides(const std::vector<std::string>& overrides) {
    RunConfig cfg;
    for (const std::string& ov : overrides) {
        const auto eq = ov.find('=');
        if (ov.rfind("--", 0) != 0 || eq == std::string::npos)
            throw UsageError("override '" + ov + "' must look like --key=value");
        cfg.apply(ov.substr(2, eq - 2), ov.substr(eq + 1));
    }
    cfg.validate();
    return cfg;
}

}  // namespace smvit
