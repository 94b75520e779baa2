#pragma once

#include <set>
#include <string_view>

#include "klite/encoder.hpp"

namespace klite {

enum class OptimizerKind { sgd, momentum, adam };

OptimizerKind parse_optimizer(std::string_view name);
std::string_view to_string(OptimizerKind kind);

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::adam;
    double learning_rate = 1e-3;
    double momentum = 0.9;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

// Updates only tensors whose group is in `trainable`; others are never touched.
// log_tau is clamped so tau stays <= kMaxTau.
class Optimizer {
public:
    Optimizer(const OptimizerConfig& config, const ModelParams& shape, std::set<TensorGroup> trainable);

    void step(ModelParams& params, const ModelParams& grads);
    long steps() const { return steps_; }

private:
    OptimizerConfig config_;
    std::set<TensorGroup> trainable_;
    ModelParams first_, second_;
    long steps_ = 0;
};

}  // namespace klite
