#include "smvit/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "smvit/rng.hpp"

namespace smvit {

namespace {

void init_trunc_normal(Tensor2& t, Rng& rng, double std_dev = 0.02) {
    for (double& v : t.data) v = rng.trunc_normal(std_dev);
}

}  // namespace

ModelParams ModelParams::zeros(const ViTConfig& cfg) {
    cfg.validate();
    ModelParams p;
    p.embed.projection = Tensor2(cfg.patch_dim(), cfg.embed_dim);
    p.embed.position = Tensor2(cfg.tokens(), cfg.embed_dim);
    p.embed.class_token = Tensor2(1, cfg.embed_dim);
    p.layers.assign(static_cast<std::size_t>(cfg.layers), LayerParams::zeros(cfg));
    p.final_gamma = Tensor2(1, cfg.embed_dim);
    p.final_beta = Tensor2(1, cfg.embed_dim);
    p.w_head1 = Tensor2(cfg.embed_dim, cfg.embed_dim);
    p.b_head1 = Tensor2(1, cfg.embed_dim);
    p.w_head2 = Tensor2(cfg.embed_dim, cfg.num_classes);
    p.b_head2 = Tensor2(1, cfg.num_classes);
    return p;
}

ModelParams ModelParams::init(const ViTConfig& cfg, std::uint64_t seed) {
    ModelParams p = zeros(cfg);
    Rng rng(mix_seed(seed, 0xC0FFEE));
    init_trunc_normal(p.embed.projection, rng);
    init_trunc_normal(p.embed.position, rng);
    init_trunc_normal(p.embed.class_token, rng);
    for (LayerParams& l : p.layers) {
        l.ln1_gamma.fill(1.0);
        l.ln2_gamma.fill(1.0);
        init_trunc_normal(l.w_qkv, rng);
        init_trunc_normal(l.w_out, rng);
        init_trunc_normal(l.w_fc1, rng);
        init_trunc_normal(l.w_fc2, rng);
    }
    p.final_gamma.fill(1.0);
    init_trunc_normal(p.w_head1, rng);
    init_trunc_normal(p.w_head2, rng);
    return p;
}

namespace {

template <typename Params, typename TensorPtr>
std::vector<std::pair<std::string, TensorPtr>> list_tensors(Params& p) {
    std::vector<std::pair<std::string, TensorPtr>> out;
    out.emplace_back("embed.projection", &p.embed.projection);
    out.emplace_back("embed.position", &p.embed.position);
    out.emplace_back("embed.class_token", &p.embed.class_token);
    for (std::size_t l = 0; l < p.layers.size(); ++l) {
        const std::string pre = "layer" + std::to_string(l) + ".";
        auto& lp = p.layers[l];
        out.emplace_back(pre + "ln1_gamma", &lp.ln1_gamma);
        out.emplace_back(pre + "ln1_beta", &lp.ln1_beta);
        out.emplace_back(pre + "w_qkv", &lp.w_qkv);
        out.emplace_back(pre + "b_qkv", &lp.b_qkv);
        out.emplace_back(pre + "w_out", &lp.w_out);
        out.emplace_back(pre + "b_out", &lp.b_out);
        out.emplace_back(pre + "ln2_gamma", &lp.ln2_gamma);
        out.emplace_back(pre + "ln2_beta", &lp.ln2_beta);
        out.emplace_back(pre + "w_fc1", &lp.w_fc1);
        out.emplace_back(pre + "b_fc1", &lp.b_fc1);
        out.emplace_back(pre + "w_fc2", &lp.w_fc2);
        out.emplace_back(pre + "b_fc2", &lp.b_fc2);
    }
    out.emplace_back("final_gamma", &p.final_gamma);
    out.emplace_back("final_beta", &p.final_beta);
    out.emplace_back("w_head1", &p.w_head1);
    out.emplace_back("b_head1", &p.b_head1);
    out.emplace_back("w_head2", &p.w_head2);
    out.emplace_back("b_head2", &p.b_head2);
    return out;
}

}  // namespace

std::vector<std::pair<std::string, Tensor2*>> ModelParams::tensor_list() {
    return list_tensors<ModelParams, Tensor2*>(*this);
}

std::vector<std::pair<std::string, const Tensor2*>> ModelParams::tensor_list() const {
    return list_tensors<const ModelParams, const Tensor2*>(*this);
}

void ModelParams::zero_all() {
    for (auto& [name, t] : tensor_list()) t->fill(0.0);
}

ForwardResult forward(const Image& image, const MaskVector& mask, const ViTConfig& cfg,
                      const ModelParams& params, bool guided, ForwardCache* cache) {
    cfg.validate();
    const double d_theta = guided ? cfg.d_theta : 0.0;
    const MaskVector& m = guided ? mask : MaskVector::all_ones(cfg.tokens());
    if (guided && mask.size() != static_cast<std::size_t>(cfg.tokens()))
        throw std::invalid_argument("forward: mask length " + std::to_string(mask.size()) +
                                    " != token count " + std::to_string(cfg.tokens()));

    ForwardCache local;
    ForwardCache& c = cache ? *cache : local;
    c.patches = split_patches(image, cfg);
    c.tokens0 = embed(c.patches, params.embed);
    c.mask = m;
    c.guided = guided && d_theta > 0.0;

    ForwardResult result;
    c.encoded = encoder_forward(c.tokens0, m, cfg, params.layers, d_theta, &c.layer_caches,
                                &result.record);
    c.normed = layer_norm(c.encoded, params.final_gamma, params.final_beta, kLayerNormEps,
                          &c.lnf);

    Tensor2 cls(1, cfg.embed_dim);
    for (int j = 0; j < cfg.embed_dim; ++j) cls.at(0, j) = c.normed.at(0, j);
    c.cls = cls;

    Tensor2 pre = matmul(cls, params.w_head1);
    for (int j = 0; j < cfg.embed_dim; ++j) pre.at(0, j) += params.b_head1.at(0, j);
    c.head_pre = pre;

    Tensor2 logits = matmul(gelu(pre), params.w_head2);
    for (int j = 0; j < cfg.num_classes; ++j) logits.at(0, j) += params.b_head2.at(0, j);
    c.logits = logits;
    c.valid = true;

    result.logits = logits;
    return result;
}

void backward(const Tensor2& d_logits, const ForwardCache& cache, const ViTConfig& cfg,
              const ModelParams& params, ModelParams& grads) {
    if (!cache.valid) throw std::logic_error("backward called before forward");
    const double d_theta = cache.guided ? cfg.d_theta : 0.0;

    // classification head
    const Tensor2 act = gelu(cache.head_pre);
    Tensor2 d_act(1, cfg.embed_dim);
    matmul_backward(act, params.w_head2, d_logits, &d_act, &grads.w_head2);
    for (int j = 0; j < cfg.num_classes; ++j) grads.b_head2.at(0, j) += d_logits.at(0, j);

    const Tensor2 d_pre = gelu_backward(cache.head_pre, d_act);
    Tensor2 d_cls(1, cfg.embed_dim);
    matmul_backward(cache.cls, params.w_head1, d_pre, &d_cls, &grads.w_head1);
    for (int j = 0; j < cfg.embed_dim; ++j) grads.b_head1.at(0, j) += d_pre.at(0, j);

    // final layer norm (only the class row carries gradient)
    Tensor2 d_normed(cfg.tokens(), cfg.embed_dim);
    for (int j = 0; j < cfg.embed_dim; ++j) d_normed.at(0, j) = d_cls.at(0, j);
    Tensor2 d_encoded(cfg.tokens(), cfg.embed_dim);
    layer_norm_backward(cache.lnf, params.final_gamma, d_normed, d_encoded, grads.final_gamma,
                        grads.final_beta);

    // encoder layers in reverse
    Tensor2 d_tokens = d_encoded;
    for (int l = cfg.layers - 1; l >= 0; --l) {
        Tensor2 d_in(cfg.tokens(), cfg.embed_dim);
        encoder_layer_backward(d_tokens, cache.layer_caches[static_cast<std::size_t>(l)],
                               params.layers[static_cast<std::size_t>(l)], cfg, cache.mask,
                               d_theta, grads.layers[static_cast<std::size_t>(l)], d_in);
        d_tokens = d_in;
    }

    // embedding
    for (std::size_t i = 0; i < d_tokens.size(); ++i)
        grads.embed.position.data[i] += d_tokens.data[i];
    for (int j = 0; j < cfg.embed_dim; ++j)
        grads.embed.class_token.at(0, j) += d_tokens.at(0, j);
    Tensor2 d_patch_tokens(cfg.num_patches(), cfg.embed_dim);
    for (int i = 0; i < cfg.num_patches(); ++i)
        for (int j = 0; j < cfg.embed_dim; ++j)
            d_patch_tokens.at(i, j) = d_tokens.at(i + 1, j);
    matmul_backward(cache.patches, params.embed.projection, d_patch_tokens, nullptr,
                    &grads.embed.projection);
}

int predict(const Tensor2& logits) {
    if (logits.cols < 2) throw std::invalid_argument("predict: need at least 2 classes");
    std::size_t best = 0;
    for (std::size_t j = 1; j < logits.cols; ++j)
        if (logits.at(0, j) > logits.at(0, best)) best = j;
    return static_cast<int>(best);
}

Image attention_heatmap(const AttentionRecord& record, const ViTConfig& cfg) {
    const int g = cfg.grid_side();
    if (g * g != record.tokens - 1)
        throw std::invalid_argument("attention_heatmap: non-square patch count");
    std::vector<double> mean = record.final_layer_class_attention();

    // drop the class-self entry, keep patch mass
    std::vector<double> patch(mean.begin() + 1, mean.end());
    const auto [lo_it, hi_it] = std::minmax_element(patch.begin(), patch.end());
    const double lo = *lo_it, hi = *hi_it;
    if (hi > lo)
        for (double& v : patch) v = (v - lo) / (hi - lo);
    else
        std::fill(patch.begin(), patch.end(), 0.0);

    Image out(cfg.image_side, cfg.image_side, 1);
    const int p = cfg.patch_side;
    for (int r = 0; r < cfg.image_side; ++r)
        for (int c = 0; c < cfg.image_side; ++c)
            out.at(r, c) = patch[static_cast<std::size_t>(r / p) * g + c / p];
    return out;
}

namespace {

constexpr char kMagic[4] = {'S', 'M', 'V', 'T'};
constexpr std::uint8_t kVersion = 1;

void write_u32(std::ostream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<char*>(b), 4);
}

std::uint32_t read_u32(std::istream& in, const char* what) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4))
        throw CheckpointError(std::string("checkpoint truncated reading ") + what);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

std::string config_to_text(const ViTConfig& cfg) {
    std::ostringstream out;
    out.precision(17);
    out << "image_side:" << cfg.image_side << "\nchannels:" << cfg.channels
        << "\npatch_side:" << cfg.patch_side << "\nembed_dim:" << cfg.embed_dim
        << "\nlayers:" << cfg.layers << "\nheads:" << cfg.heads
        << "\nnum_classes:" << cfg.num_classes << "\nd_theta:" << cfg.d_theta
        << "\npatch_tau:" << cfg.patch_tau << "\n";
    return out.str();
}

ViTConfig config_from_text(const std::string& text) {
    ViTConfig cfg;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        const auto colon = line.find(':');
        if (colon == std::string::npos) continue;
        const std::string key = line.substr(0, colon);
        const std::string val = line.substr(colon + 1);
        if (key == "image_side") cfg.image_side = std::stoi(val);
        else if (key == "channels") cfg.channels = std::stoi(val);
        else if (key == "patch_side") cfg.patch_side = std::stoi(val);
        else if (key == "embed_dim") cfg.embed_dim = std::stoi(val);
        else if (key == "layers") cfg.layers = std::stoi(val);
        else if (key == "heads") cfg.heads = std::stoi(val);
        else if (key == "num_classes") cfg.num_classes = std::stoi(val);
        else if (key == "d_theta") cfg.d_theta = std::stod(val);
        else if (key == "patch_tau") cfg.patch_tau = std::stod(val);
        else throw CheckpointError("checkpoint config has unknown key '" + key + "'");
    }
    cfg.validate();
    return cfg;
}

}  // namespace

void save_checkpoint(const std::string& path, const ViTConfig& cfg, const ModelParams& params) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
    out.write(kMagic, 4);
    out.put(static_cast<char>(kVersion));
    const std::string cfg_text = config_to_text(cfg);
    write_u32(out, static_cast<std::uint32_t>(cfg_text.size()));
    out.write(cfg_text.data(), static_cast<std::streamsize>(cfg_text.size()));
    for (const auto& [name, t] : params.tensor_list()) {
        write_u32(out, static_cast<std::uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_u32(out, 2);  // rank
        write_u32(out, static_cast<std::uint32_t>(t->rows));
        write_u32(out, static_cast<std::uint32_t>(t->cols));
        for (double v : t->data) {
            const float f = static_cast<float>(v);
            std::uint32_t bits;
            std::memcpy(&bits, &f, 4);
            write_u32(out, bits);
        }
    }
    if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

std::pair<ViTConfig, ModelParams> load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("cannot open checkpoint '" + path + "'");
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
        throw CheckpointError("bad checkpoint magic in '" + path + "'");
    const int version = in.get();
    if (version != kVersion)
        throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
    const std::uint32_t cfg_len = read_u32(in, "config length");
    std::string cfg_text(cfg_len, '\0');
    if (!in.read(cfg_text.data(), cfg_len))
        throw CheckpointError("checkpoint truncated reading config");
    const ViTConfig cfg = config_from_text(cfg_text);

    ModelParams params = ModelParams::zeros(cfg);
    for (auto& [name, t] : params.tensor_list()) {
        const std::uint32_t name_len = read_u32(in, "tensor name length");
        std::string got(name_len, '\0');
        if (!in.read(got.data(), name_len))
            throw CheckpointError("checkpoint truncated reading tensor name");
        if (got != name)
            throw CheckpointError("checkpoint tensor order mismatch: expected '" + name +
                                  "', found '" + got + "'");
        const std::uint32_t rank = read_u32(in, name.c_str());
        if (rank != 2)
            throw CheckpointError("tensor '" + name + "' has unsupported rank " +
                                  std::to_string(rank));
        const std::uint32_t rows = read_u32(in, name.c_str());
        const std::uint32_t cols = read_u32(in, name.c_str());
        if (rows != t->rows || cols != t->cols)
            throw CheckpointError("tensor '" + name + "' shape " + std::to_string(rows) + "x" +
                                  std::to_string(cols) + " does not match config-implied " +
                                  t->shape_str());
        for (double& v : t->data) {
            const std::uint32_t bits = read_u32(in, name.c_str());
            float f;
            std::memcpy(&f, &bits, 4);
            v = static_cast<double>(f);
        }
    }
    return {cfg, std::move(params)};
}

}  // namespace smvit
