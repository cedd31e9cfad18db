#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "smvit/dataset.hpp"
#include "smvit/model.hpp"
#include "smvit/saliency.hpp"
#include "smvit/tokenizer.hpp"

namespace smvit {

struct TrainConfig {
    double lr = 0.01;
    double momentum = 0.9;
    int batch_size = 16;
    int steps = 2000;
    std::uint64_t seed = 1;
    bool smge_train = true;
    bool smge_infer = true;
    int train_samples = 2000;
    int val_samples = 200;
    int test_samples = 500;
    bool flip_augment = true;
    bool color_jitter = false;
    int eval_every = 200;
    double corrupt_fraction = kDefaultCorruptFraction;

    void validate() const;
};

// a sample after the upstream saliency pipeline: normalize -> extract_mask ->
// bbox -> crop to model resolution
struct PreparedSample {
    Image image;
    BinaryMask mask;   // extracted saliency mask, cropped
    BinaryMask truth;  // ground-truth foreground, cropped the same way
    int label = 0;
};

PreparedSample prepare_sample(const Sample& sample, const ToySpec& spec, const ViTConfig& cfg,
                              double corrupt_fraction = kDefaultCorruptFraction);
std::vector<PreparedSample> prepare_dataset(const ToySpec& spec, const ViTConfig& cfg,
                                            std::uint64_t first_index, std::size_t n,
                                            double corrupt_fraction = kDefaultCorruptFraction);

MaskVector token_mask(const PreparedSample& sample, const ViTConfig& cfg);

// lr(t) = base * (1 + cos(pi * t / T)) / 2
double cosine_lr(double base, int step, int total_steps);

struct SgdState {
    ModelParams velocity;
};

// v <- mu*v + g; p <- p - lr(t)*v
void sgd_step(ModelParams& params, const ModelParams& grads, SgdState& state,
              const TrainConfig& cfg, int step);

struct EvalResult {
    double loss = 0.0;
    double accuracy = 0.0;
};

EvalResult evaluate(const ModelParams& params, const ViTConfig& cfg,
                    const std::vector<PreparedSample>& samples, bool guided);

struct TrainResult {
    ModelParams params;
    std::vector<std::string> log;  // one structured line per evaluation
    EvalResult final_test;
};

TrainResult train_loop(const TrainConfig& tc, const ToySpec& spec, const ViTConfig& cfg);

struct GradCheckResult {
    double max_rel_err = 0.0;
    std::string worst_tensor;
    std::size_t worst_index = 0;
    bool passed(double tol) const { return max_rel_err <= tol; }
};

// analytic full-model gradient vs central finite differences at a point with a
// unique per-head argmax; throws if no suitable point is found
GradCheckResult grad_check(const ViTConfig& cfg, std::uint64_t seed, double fd_step = 1e-5);

}  // namespace smvit
