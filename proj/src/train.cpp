#include "smvit/train.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "smvit/rng.hpp"

namespace smvit {

void TrainConfig::validate() const {
    if (lr <= 0.0) throw std::invalid_argument("train config: lr must be positive");
    if (momentum < 0.0 || momentum >= 1.0)
        throw std::invalid_argument("train config: momentum must be in [0,1)");
    if (batch_size <= 0) throw std::invalid_argument("train config: batch_size must be positive");
    if (steps < 0) throw std::invalid_argument("train config: steps must be >= 0");
    if (train_samples <= 0 || val_samples < 0 || test_samples < 0)
        throw std::invalid_argument("train config: bad split sizes");
    if (eval_every <= 0) throw std::invalid_argument("train config: eval_every must be positive");
    if (corrupt_fraction < 0.0 || corrupt_fraction >= 1.0)
        throw std::invalid_argument("train config: corrupt_fraction must be in [0,1)");
}

PreparedSample prepare_sample(const Sample& sample, const ToySpec& spec, const ViTConfig& cfg,
                              double corrupt_fraction) {
    const SaliencyMap map = normalize_map(sample_saliency(spec, sample.meta));
    auto [mask, provenance] = extract_mask(map, corrupt_fraction);
    const BoundingBox box = bounding_box(mask);

    PreparedSample out;
    out.label = sample.label;
    out.image = crop_and_resize_image(sample.image, box, cfg.image_side);
    out.mask = crop_and_resize_mask(mask, box, cfg.image_side);
    out.truth = crop_and_resize_mask(ground_truth_mask(sample.meta, spec.image_side), box,
                                     cfg.image_side);
    return out;
}

std::vector<PreparedSample> prepare_dataset(const ToySpec& spec, const ViTConfig& cfg,
                                            std::uint64_t first_index, std::size_t n,
                                            double corrupt_fraction) {
    std::vector<PreparedSample> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i)
        out.push_back(
            prepare_sample(generate_sample(spec, first_index + i), spec, cfg, corrupt_fraction));
    return out;
}

MaskVector token_mask(const PreparedSample& sample, const ViTConfig& cfg) {
    return MaskVector::from_patches(downsample_mask(sample.mask, cfg));
}

double cosine_lr(double base, int step, int total_steps) {
    if (total_steps <= 0) return base;
    const double t = static_cast<double>(step) / static_cast<double>(total_steps);
    return base * (1.0 + std::cos(3.14159265358979323846 * t)) / 2.0;
}

void sgd_step(ModelParams& params, const ModelParams& grads, SgdState& state,
              const TrainConfig& cfg, int step) {
    const double lr = cosine_lr(cfg.lr, step, cfg.steps);
    auto p = params.tensor_list();
    const auto g = grads.tensor_list();
    auto v = state.velocity.tensor_list();
    for (std::size_t i = 0; i < p.size(); ++i) {
        Tensor2& pv = *p[i].second;
        const Tensor2& gv = *g[i].second;
        Tensor2& vv = *v[i].second;
        for (std::size_t j = 0; j < pv.size(); ++j) {
            vv.data[j] = cfg.momentum * vv.data[j] + gv.data[j];
            pv.data[j] -= lr * vv.data[j];
        }
    }
}

namespace {

PreparedSample flipped(const PreparedSample& s) {
    PreparedSample out = s;
    for (int r = 0; r < s.image.rows; ++r)
        for (int c = 0; c < s.image.cols; ++c)
            for (int ch = 0; ch < s.image.channels; ++ch)
                out.image.at(r, c, ch) = s.image.at(r, s.image.cols - 1 - c, ch);
    for (int r = 0; r < s.mask.rows; ++r)
        for (int c = 0; c < s.mask.cols; ++c) {
            out.mask.at(r, c) = s.mask.at(r, s.mask.cols - 1 - c);
            out.truth.at(r, c) = s.truth.at(r, s.truth.cols - 1 - c);
        }
    return out;
}

std::string log_line(int step, const char* split, const EvalResult& r, const TrainConfig& tc,
                     const ViTConfig& cfg) {
    std::ostringstream out;
    out.precision(10);
    out << "step=" << step << " split=" << split << " loss=" << r.loss
        << " accuracy=" << r.accuracy << " smge_train=" << (tc.smge_train ? 1 : 0)
        << " smge_infer=" << (tc.smge_infer ? 1 : 0) << " d_theta=" << cfg.d_theta;
    return out.str();
}

}  // namespace

EvalResult evaluate(const ModelParams& params, const ViTConfig& cfg,
                    const std::vector<PreparedSample>& samples, bool guided) {
    if (samples.empty()) return {};
    double loss = 0.0;
    int correct = 0;
    for (const PreparedSample& s : samples) {
        const MaskVector m = token_mask(s, cfg);
        const ForwardResult r = forward(s.image, m, cfg, params, guided);
        loss += cross_entropy(r.logits, {s.label});
        if (predict(r.logits) == s.label) ++correct;
    }
    return {loss / static_cast<double>(samples.size()),
            static_cast<double>(correct) / static_cast<double>(samples.size())};
}

TrainResult train_loop(const TrainConfig& tc, const ToySpec& spec, const ViTConfig& cfg) {
    tc.validate();
    spec.validate();
    cfg.validate();

    const auto train_set = prepare_dataset(spec, cfg, 0, static_cast<std::size_t>(tc.train_samples),
                                           tc.corrupt_fraction);
    const auto val_set = prepare_dataset(spec, cfg, static_cast<std::uint64_t>(tc.train_samples),
                                         static_cast<std::size_t>(tc.val_samples),
                                         tc.corrupt_fraction);
    const auto test_set = prepare_dataset(
        spec, cfg, static_cast<std::uint64_t>(tc.train_samples + tc.val_samples),
        static_cast<std::size_t>(tc.test_samples), tc.corrupt_fraction);

    TrainResult result;
    result.params = ModelParams::init(cfg, tc.seed);
    SgdState state{ModelParams::zeros(cfg)};
    ModelParams grads = ModelParams::zeros(cfg);
    Rng rng(mix_seed(tc.seed, 0x7121A11));

    for (int step = 0; step < tc.steps; ++step) {
        grads.zero_all();
        double batch_loss = 0.0;
        int batch_correct = 0;
        for (int b = 0; b < tc.batch_size; ++b) {
            const std::size_t idx =
                static_cast<std::size_t>(rng.uniform_int(train_set.size()));
            const bool flip = tc.flip_augment && rng.uniform() < 0.5;
            const PreparedSample s = flip ? flipped(train_set[idx]) : train_set[idx];
            const MaskVector m = token_mask(s, cfg);
            ForwardCache cache;
            const ForwardResult r = forward(s.image, m, cfg, result.params, tc.smge_train, &cache);
            batch_loss += cross_entropy(r.logits, {s.label});
            if (predict(r.logits) == s.label) ++batch_correct;
            Tensor2 d_logits = cross_entropy_backward(r.logits, {s.label});
            for (double& v : d_logits.data) v /= tc.batch_size;
            backward(d_logits, cache, cfg, result.params, grads);
        }
        sgd_step(result.params, grads, state, tc, step);

        if ((step + 1) % tc.eval_every == 0 || step + 1 == tc.steps) {
            const EvalResult train_eval = {batch_loss / tc.batch_size,
                                           static_cast<double>(batch_correct) / tc.batch_size};
            result.log.push_back(log_line(step + 1, "train", train_eval, tc, cfg));
            if (!val_set.empty()) {
                const EvalResult v = evaluate(result.params, cfg, val_set, tc.smge_infer);
                result.log.push_back(log_line(step + 1, "val", v, tc, cfg));
            }
        }
    }

    if (!test_set.empty()) {
        result.final_test = evaluate(result.params, cfg, test_set, tc.smge_infer);
        if (tc.steps > 0)
            result.log.push_back(log_line(tc.steps, "test", result.final_test, tc, cfg));
    }
    return result;
}

namespace {

// the FD sweep needs every per-head argmax to stay unique under perturbation
bool argmax_margins_ok(const std::vector<LayerCache>& caches, double min_gap) {
    for (const LayerCache& lc : caches)
        for (const HeadCache& hc : lc.heads) {
            double best = -1e300, second = -1e300;
            for (std::size_t j = 1; j < hc.scores.cols; ++j) {
                const double v = hc.scores.at(0, j);
                if (v > best) {
                    second = best;
                    best = v;
                } else if (v > second) {
                    second = v;
                }
            }
            if (best - second < min_gap) return false;
        }
    return true;
}

}  // namespace

GradCheckResult grad_check(const ViTConfig& cfg, std::uint64_t seed, double fd_step) {
    cfg.validate();
    const int tokens = cfg.tokens();

    for (std::uint64_t attempt = 0; attempt < 32; ++attempt) {
        Rng rng(mix_seed(seed, 0x6AADC4EC + attempt));
        ModelParams params = ModelParams::init(cfg, rng.next_u64());
        // keep weights away from the tiny trunc-normal scale so attention logits spread out
        for (auto& [name, t] : params.tensor_list())
            if (name.find("w_") != std::string::npos || name.find("projection") != std::string::npos)
                for (double& v : t->data) v *= 8.0;

        Image image(cfg.image_side, cfg.image_side, cfg.channels);
        for (double& v : image.data) v = rng.uniform();
        const int label = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(cfg.num_classes)));

        // mixed mask: class slot plus roughly half the patches
        MaskVector mask = MaskVector::all_ones(tokens);
        for (int i = 1; i < tokens; ++i) mask.m[static_cast<std::size_t>(i)] = rng.uniform() < 0.5 ? 1 : 0;
        mask.m[1] = 1;
        mask.m[static_cast<std::size_t>(tokens - 1)] = 0;

        const bool guided = cfg.d_theta > 0.0;
        ForwardCache cache;
        forward(image, mask, cfg, params, guided, &cache);
        if (guided && !argmax_margins_ok(cache.layer_caches, 1e-2)) continue;

        ModelParams analytic = ModelParams::zeros(cfg);
        const Tensor2 d_logits = cross_entropy_backward(cache.logits, {label});
        backward(d_logits, cache, cfg, params, analytic);

        GradCheckResult result;
        auto p_list = params.tensor_list();
        const auto a_list = analytic.tensor_list();
        bool margin_violated = false;
        for (std::size_t t = 0; t < p_list.size() && !margin_violated; ++t) {
            Tensor2& tensor = *p_list[t].second;
            for (std::size_t i = 0; i < tensor.size(); ++i) {
                const double saved = tensor.data[i];
                tensor.data[i] = saved + fd_step;
                ForwardCache fc;
                const ForwardResult rp = forward(image, mask, cfg, params, guided, &fc);
                if (guided && !argmax_margins_ok(fc.layer_caches, 0.0)) {
                    margin_violated = true;
                }
                const double lp = cross_entropy(rp.logits, {label});
                tensor.data[i] = saved - fd_step;
                const double lm =
                    cross_entropy(forward(image, mask, cfg, params, guided).logits, {label});
                tensor.data[i] = saved;
                const double numeric = (lp - lm) / (2.0 * fd_step);
                const double exact = a_list[t].second->data[i];
                const double rel =
                    std::abs(exact - numeric) / std::max(std::abs(exact) + std::abs(numeric), 1e-6);
                if (rel > result.max_rel_err) {
                    result.max_rel_err = rel;
                    result.worst_tensor = p_list[t].first;
                    result.worst_index = i;
                }
            }
        }
        if (margin_violated) continue;
        return result;
    }
    throw std::runtime_error("grad_check: no point with unique argmax margins found");
}

}  // namespace smvit
