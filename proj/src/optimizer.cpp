#include "klite/optimizer.hpp"

#include <cmath>

#include "klite/error.hpp"

namespace klite {

OptimizerKind parse_optimizer(std::string_view name) {
    if (name == "sgd") return OptimizerKind::sgd;
    if (name == "momentum") return OptimizerKind::momentum;
    if (name == "adam") return OptimizerKind::adam;
    throw DataError("unknown optimizer: " + std::string(name));
}

std::string_view to_string(OptimizerKind kind) {
    switch (kind) {
        case OptimizerKind::sgd: return "sgd";
        case OptimizerKind::momentum: return "momentum";
        case OptimizerKind::adam: return "adam";
    }
    return "adam";
}

Optimizer::Optimizer(const OptimizerConfig& config, const ModelParams& shape, std::set<TensorGroup> trainable)
    : config_(config), trainable_(std::move(trainable)), first_(zeros_like(shape)), second_(zeros_like(shape)) {
    if (!(config_.learning_rate > 0.0)) throw DataError("learning rate must be positive");
}

void Optimizer::step(ModelParams& params, const ModelParams& grads) {
    ++steps_;
    auto p = list_tensors(params);
    const auto g = list_tensors(grads);
    auto m = list_tensors(first_);
    auto v = list_tensors(second_);
    if (p.size() != g.size() || p.size() != m.size()) throw DataError("optimizer: parameter layout changed");

    const double lr = config_.learning_rate;
    const double bc1 = 1.0 - std::pow(config_.beta1, double(steps_));
    const double bc2 = 1.0 - std::pow(config_.beta2, double(steps_));
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (!trainable_.contains(p[i].group)) continue;
        Tensor& w = *p[i].tensor;
        const Tensor& dw = *g[i].tensor;
        switch (config_.kind) {
            case OptimizerKind::sgd:
                w -= lr * dw;
                break;
            case OptimizerKind::momentum:
                *m[i].tensor = config_.momentum * *m[i].tensor + dw;
                w -= lr * *m[i].tensor;
                break;
            case OptimizerKind::adam: {
                Tensor& mt = *m[i].tensor;
                Tensor& vt = *v[i].tensor;
                mt = config_.beta1 * mt + (1.0 - config_.beta1) * dw;
                vt = config_.beta2 * vt + (1.0 - config_.beta2) * dw.cwiseAbs2();
                w.array() -= lr * (mt.array() / bc1) / ((vt.array() / bc2).sqrt() + config_.epsilon);
                break;
            }
        }
    }
    if (trainable_.contains(TensorGroup::temperature)) {
        params.log_tau(0, 0) = std::min(params.log_tau(0, 0), std::log(kMaxTau));
    }
}

}  // namespace klite
