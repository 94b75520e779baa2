#include "klite/losses.hpp"

#include <map>

#include "klite/error.hpp"

namespace klite {

namespace {

bool routes_to_adapters(Branch b) { return b == Branch::knowledge; }

// Identical (tokens, branch) pairs share one forward pass; gradients are summed.
struct TextSlots {
    std::vector<std::size_t> slot_of_sample;
    std::vector<std::pair<const std::vector<int>*, Branch>> unique;
};

TextSlots dedup_texts(std::span<const ContrastiveSample> batch) {
    TextSlots slots;
    std::map<std::pair<std::vector<int>, Branch>, std::size_t> index;
    for (const auto& s : batch) {
        auto [it, inserted] = index.emplace(std::make_pair(s.tokens, s.branch), slots.unique.size());
        if (inserted) slots.unique.emplace_back(&s.tokens, s.branch);
        slots.slot_of_sample.push_back(it->second);
    }
    return slots;
}

struct ContrastiveForward {
    std::vector<ImageTrace> image_traces;
    std::vector<TextTrace> text_traces;
    std::vector<Vector> raw_images, raw_texts;
    Tensor u, v;  // normalized rows
    TextSlots slots;
    std::vector<int> labels;
};

ContrastiveForward contrastive_forward(const ModelParams& params, std::span<const ContrastiveSample> batch,
                                       bool keep_traces) {
    if (batch.empty()) throw DataError("contrastive batch is empty");
    ContrastiveForward f;
    const auto b = static_cast<Eigen::Index>(batch.size());
    const int p = params.config.embed_dim;
    f.slots = dedup_texts(batch);
    f.u.resize(b, p);
    f.v.resize(b, p);
    if (keep_traces) {
        f.image_traces.resize(batch.size());
        f.text_traces.resize(f.slots.unique.size());
    }
    for (std::size_t i = 0; i < batch.size(); ++i) {
        f.raw_images.push_back(encode_image(params, batch[i].image, keep_traces ? &f.image_traces[i] : nullptr));
        f.u.row(static_cast<Eigen::Index>(i)) = normalize(f.raw_images.back()).transpose();
        f.labels.push_back(batch[i].label);
    }
    std::vector<Vector> unit_texts;
    for (std::size_t t = 0; t < f.slots.unique.size(); ++t) {
        const auto& [tokens, branch] = f.slots.unique[t];
        f.raw_texts.push_back(encode_text(params, *tokens, Pooling::EOS, routes_to_adapters(branch),
                                          keep_traces ? &f.text_traces[t] : nullptr));
        unit_texts.push_back(normalize(f.raw_texts.back()));
    }
    for (std::size_t i = 0; i < batch.size(); ++i) {
        f.v.row(static_cast<Eigen::Index>(i)) = unit_texts[f.slots.slot_of_sample[i]].transpose();
    }
    return f;
}

void mask_frozen(ModelParams& g, const LossSpec& spec) {
    for (auto& ref : list_tensors(g)) {
        if (!spec.trainable.contains(ref.group)) ref.tensor->setZero();
    }
}

void require_finite(double value, const char* component) {
    if (!std::isfinite(value)) throw NumericError(std::string("non-finite loss component: ") + component);
}

struct GroundingForward {
    std::vector<ImageTrace> region_traces;
    std::vector<TextTrace> phrase_traces;
    Tensor v, u, s;
};

GroundingForward grounding_forward(const ModelParams& params, const GroundingSample& sample, bool keep_traces) {
    const auto m = sample.regions.rows();
    const auto k = static_cast<Eigen::Index>(sample.phrases.size());
    if (m == 0 || k == 0) throw DataError("grounding sample needs at least one region and one phrase");
    if (sample.targets.rows() != m || sample.targets.cols() != k) {
        throw DataError("grounding targets must be M x K");
    }
    GroundingForward f;
    if (keep_traces) {
        f.region_traces.resize(static_cast<std::size_t>(m));
        f.phrase_traces.resize(static_cast<std::size_t>(k));
    }
    f.v.resize(m, params.config.embed_dim);
    for (Eigen::Index r = 0; r < m; ++r) {
        f.v.row(r) = encode_image(params, sample.regions.row(r).transpose(),
                                  keep_traces ? &f.region_traces[static_cast<std::size_t>(r)] : nullptr)
                         .transpose();
    }
    f.u.resize(params.config.embed_dim, k);
    for (Eigen::Index c = 0; c < k; ++c) {
        const auto idx = static_cast<std::size_t>(c);
        f.u.col(c) = encode_text(params, sample.phrases[idx], Pooling::CLS, routes_to_adapters(sample.branch),
                                 keep_traces ? &f.phrase_traces[idx] : nullptr);
    }
    f.s = ground_scores(f.v, f.u);
    return f;
}

}  // namespace

LossValue evaluate_loss(const ModelParams& params, std::span<const ContrastiveSample> batch, const LossSpec&) {
    const auto f = contrastive_forward(params, batch, false);
    LossValue out;
    out.contrastive = unicl_loss(f.u * f.v.transpose(), f.labels, params.tau());
    out.total = out.contrastive.total;
    return out;
}

LossValue evaluate_loss(const ModelParams& params, const GroundingSample& sample, const LossSpec& spec) {
    const auto f = grounding_forward(params, sample, false);
    return {focal_loss(f.s, sample.targets, spec.focal), {}};
}

GradResult grads(const ModelParams& params, std::span<const ContrastiveSample> batch, const LossSpec& spec) {
    auto f = contrastive_forward(params, batch, true);
    const Tensor sim = f.u * f.v.transpose();
    const double tau = params.tau();

    const Tensor logits = tau * sim;
    if (!logits.allFinite()) throw NumericError("non-finite loss component: similarity logits");
    const auto g = unicl_loss_grad(sim, f.labels, tau);
    require_finite(g.loss.i2t, "L_i2t");
    require_finite(g.loss.t2i, "L_t2i");

    GradResult out{{g.loss.total, g.loss}, zeros_like(params), {}};
    const Tensor du = g.d_sim * f.v;
    const Tensor dv = g.d_sim.transpose() * f.u;

    for (std::size_t i = 0; i < batch.size(); ++i) {
        const Vector d_unit = du.row(static_cast<Eigen::Index>(i)).transpose();
        backprop_image(params, f.image_traces[i], normalize_backward(f.raw_images[i], d_unit), out.grads);
    }
    std::vector<Vector> d_text(f.slots.unique.size(), Vector::Zero(params.config.embed_dim));
    for (std::size_t i = 0; i < batch.size(); ++i) {
        d_text[f.slots.slot_of_sample[i]] += dv.row(static_cast<Eigen::Index>(i)).transpose();
        (batch[i].branch == Branch::knowledge ? out.routed.knowledge : out.routed.vanilla)++;
    }
    for (std::size_t t = 0; t < f.slots.unique.size(); ++t) {
        backprop_text(params, f.text_traces[t], normalize_backward(f.raw_texts[t], d_text[t]), out.grads);
    }
    out.grads.log_tau(0, 0) = g.d_tau * tau;
    mask_frozen(out.grads, spec);
    return out;
}

GradResult grads(const ModelParams& params, const GroundingSample& sample, const LossSpec& spec) {
    auto f = grounding_forward(params, sample, true);
    const double loss = focal_loss(f.s, sample.targets, spec.focal);
    require_finite(loss, "focal");
    const Tensor ds = focal_loss_grad(f.s, sample.targets, spec.focal);

    GradResult out{{loss, {}}, zeros_like(params), {}};
    const Tensor dv = ds * f.u.transpose();
    const Tensor du = f.v.transpose() * ds;
    for (Eigen::Index r = 0; r < dv.rows(); ++r) {
        backprop_image(params, f.region_traces[static_cast<std::size_t>(r)], dv.row(r).transpose(), out.grads);
    }
    for (Eigen::Index c = 0; c < du.cols(); ++c) {
        backprop_text(params, f.phrase_traces[static_cast<std::size_t>(c)], du.col(c), out.grads);
    }
    (sample.branch == Branch::knowledge ? out.routed.knowledge : out.routed.vanilla) += sample.phrases.size();
    mask_frozen(out.grads, spec);
    return out;
}

}  // namespace klite
