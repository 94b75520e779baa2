#include "klite/grounding.hpp"

#include <cmath>

#include "klite/error.hpp"

namespace klite {

namespace {

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

void check_focal_inputs(const Tensor& scores, const Tensor& targets, const FocalParams& fp) {
    fp.validate();
    if (scores.rows() != targets.rows() || scores.cols() != targets.cols()) {
        throw DataError("focal_loss: scores and targets differ in shape");
    }
    if (!scores.allFinite()) throw NumericError("focal_loss: non-finite scores");
    for (Eigen::Index i = 0; i < targets.size(); ++i) {
        const double t = targets.data()[i];
        if (t != 0.0 && t != 1.0) throw DataError("focal_loss: targets must be 0 or 1");
    }
}

}  // namespace

double sigmoid(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

void FocalParams::validate() const {
    if (!(alpha > 0.0 && alpha < 1.0)) throw DataError("focal alpha must lie in (0, 1)");
    if (!(gamma >= 0.0)) throw DataError("focal gamma must be non-negative");
}

std::vector<AugmentedText> compose_category_texts(const std::vector<std::string>& categories,
                                                  const KnowledgeStore& store, KnowledgeSource source,
                                                  bool with_knowledge, std::size_t max_tokens) {
    std::vector<AugmentedText> out;
    out.reserve(categories.size());
    for (const auto& name : categories) {
        std::optional<std::string> knowledge;
        if (with_knowledge) {
            if (auto item = store.retrieve(name, source)) knowledge = item->text;
        }
        out.push_back(compose_od_text(normalize_query(name), knowledge, max_tokens));
    }
    return out;
}

PhraseBank encode_phrases_parallel(const ModelParams& params, const Vocabulary& vocab,
                                   const std::vector<std::string>& categories, const std::vector<std::string>& texts,
                                   bool use_adapters) {
    if (categories.size() != texts.size()) throw DataError("encode_phrases_parallel: one text per category required");
    PhraseBank bank;
    bank.categories = categories;
    bank.texts = texts;
    bank.u.resize(params.config.embed_dim, static_cast<Eigen::Index>(texts.size()));
    for (std::size_t k = 0; k < texts.size(); ++k) {
        const auto ids = vocab.encode(texts[k], Pooling::CLS);
        bank.u.col(static_cast<Eigen::Index>(k)) = encode_text(params, ids, Pooling::CLS, use_adapters);
    }
    return bank;
}

Tensor ground_scores(const Tensor& v, const Tensor& u) {
    if (v.cols() != u.rows()) {
        throw DataError("ground_scores: V is " + std::to_string(v.rows()) + "x" + std::to_string(v.cols()) +
                        " but U is " + std::to_string(u.rows()) + "x" + std::to_string(u.cols()));
    }
    return v * u;
}

double focal_loss(const Tensor& scores, const Tensor& targets, const FocalParams& fp) {
    check_focal_inputs(scores, targets, fp);
    double loss = 0.0;
    for (Eigen::Index i = 0; i < scores.size(); ++i) {
        const double s = scores.data()[i];
        if (targets.data()[i] == 1.0) {
            loss += fp.alpha * std::pow(sigmoid(-s), fp.gamma) * softplus(-s);
        } else {
            loss += (1.0 - fp.alpha) * std::pow(sigmoid(s), fp.gamma) * softplus(s);
        }
    }
    if (!std::isfinite(loss)) throw NumericError("focal_loss: non-finite loss");
    return loss;
}

Tensor focal_loss_grad(const Tensor& scores, const Tensor& targets, const FocalParams& fp) {
    check_focal_inputs(scores, targets, fp);
    Tensor d(scores.rows(), scores.cols());
    for (Eigen::Index i = 0; i < scores.size(); ++i) {
        const double s = scores.data()[i];
        const double p = sigmoid(s);
        const double q = sigmoid(-s);
        if (targets.data()[i] == 1.0) {
            d.data()[i] = fp.alpha * std::pow(q, fp.gamma) * (-fp.gamma * p * softplus(-s) - q);
        } else {
            d.data()[i] = (1.0 - fp.alpha) * std::pow(p, fp.gamma) * (p + fp.gamma * q * softplus(s));
        }
    }
    return d;
}

Tensor encode_regions(const ModelParams& params, const Tensor& region_features) {
    Tensor v(region_features.rows(), params.config.embed_dim);
    for (Eigen::Index m = 0; m < region_features.rows(); ++m) {
        v.row(m) = encode_image(params, region_features.row(m).transpose()).transpose();
    }
    return v;
}

std::vector<RegionPrediction> zero_shot_region_classify(const ModelParams& params, const Tensor& region_features,
                                                        const PhraseBank& bank) {
    if (bank.u.cols() == 0) throw DataError("zero_shot_region_classify: empty category list");
    const Tensor s = ground_scores(encode_regions(params, region_features), bank.u);
    std::vector<RegionPrediction> out(static_cast<std::size_t>(s.rows()));
    for (Eigen::Index m = 0; m < s.rows(); ++m) {
        Eigen::Index best = 0;
        for (Eigen::Index k = 1; k < s.cols(); ++k) {
            if (s(m, k) > s(m, best)) best = k;
        }
        out[static_cast<std::size_t>(m)] = {static_cast<int>(best), sigmoid(s(m, best))};
    }
    return out;
}

}  // namespace klite
