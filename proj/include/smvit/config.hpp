#pragma once

#include <string>
#include <vector>

#include "smvit/dataset.hpp"
#include "smvit/tokenizer.hpp"
#include "smvit/train.hpp"

namespace smvit {

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// flat key:value config with # comments, plus --key=value overrides;
// unknown keys are rejected
struct RunConfig {
    ViTConfig model;
    TrainConfig train;
    ToySpec toy;
    std::string ckpt_out = "model.ckpt";
    std::string metrics_out;

    static RunConfig from_file(const std::string& path,
                               const std::vector<std::string>& overrides = {});
    static RunConfig from_overrides(const std::vector<std::string>& overrides);

    void apply(const std::string& key, const std::string& value);
    void validate() const;
};

}  // namespace smvit
