#pragma once

// Model-level objectives and their exact gradients.

#include <set>
#include <span>
#include <vector>

#include "klite/contrastive.hpp"
#include "klite/encoder.hpp"
#include "klite/grounding.hpp"

namespace klite {

// Which text branch a sample is routed through.
enum class Branch { vanilla, knowledge };

struct ContrastiveSample {
    Vector image;
    std::vector<int> tokens;  // EOS-terminated
    int label = 0;
    Branch branch = Branch::vanilla;
};

struct GroundingSample {
    Tensor regions;                         // M x image_input_dim
    std::vector<std::vector<int>> phrases;  // K CLS-led token sequences
    Tensor targets;                         // M x K
    Branch branch = Branch::vanilla;
};

struct LossSpec {
    std::set<TensorGroup> trainable{TensorGroup::text, TensorGroup::adapter, TensorGroup::image,
                                    TensorGroup::temperature};
    FocalParams focal{};

    static LossSpec all() { return {}; }
    static LossSpec adapters_only() { return {{TensorGroup::adapter}, {}}; }
    static LossSpec frozen() { return {{}, {}}; }
};

struct BranchCounts {
    std::size_t vanilla = 0;
    std::size_t knowledge = 0;
};

struct LossValue {
    double total = 0.0;
    ContrastiveLoss contrastive{};  // filled for contrastive batches
};

struct GradResult {
    LossValue loss;
    ModelParams grads;  // same shapes as the parameters; frozen groups are zero
    BranchCounts routed;
};

LossValue evaluate_loss(const ModelParams& params, std::span<const ContrastiveSample> batch, const LossSpec& spec);
LossValue evaluate_loss(const ModelParams& params, const GroundingSample& sample, const LossSpec& spec);

// Throws NumericError naming the offending component when the loss is not finite.
GradResult grads(const ModelParams& params, std::span<const ContrastiveSample> batch, const LossSpec& spec);
GradResult grads(const ModelParams& params, const GroundingSample& sample, const LossSpec& spec);

}  // namespace klite
