#pragma once

#include <filesystem>
#include <vector>

#include "klite/encoder.hpp"
#include "klite/losses.hpp"
#include "klite/rng.hpp"
#include "klite/vocabulary.hpp"

#ifndef KLITE_FIXTURE_DIR
#error "KLITE_FIXTURE_DIR must be defined by the build"
#endif

namespace klite::testing {

inline std::filesystem::path fixture(const std::string& name) { return std::filesystem::path(KLITE_FIXTURE_DIR) / name; }

inline EncoderConfig toy_config(int vocab = 20, int image_dim = 6) {
    EncoderConfig c;
    c.embed_dim = 8;
    c.text_layers = 2;
    c.heads = 2;
    c.hidden = 12;
    c.vocab_size = vocab;
    c.max_tokens = 10;
    c.adapter_bottleneck = 3;
    c.image_input_dim = image_dim;
    c.image_hidden = 10;
    return c;
}

// Perturbs every tensor (including zero-initialized ones) so gradient checks are not
// evaluated at a degenerate point.
inline void randomize(ModelParams& p, std::uint64_t seed, double scale = 0.3) {
    Rng rng(seed);
    for (auto& ref : list_tensors(p)) {
        for (Eigen::Index i = 0; i < ref.tensor->size(); ++i) ref.tensor->data()[i] += scale * rng.normal();
    }
}

inline std::vector<int> random_tokens(Rng& rng, int vocab, std::size_t len, Pooling pooling) {
    std::vector<int> ids;
    if (pooling == Pooling::CLS) ids.push_back(Vocabulary::kCls);
    for (std::size_t i = 0; i < len; ++i) ids.push_back(3 + static_cast<int>(rng.below(static_cast<std::size_t>(vocab - 3))));
    if (pooling == Pooling::EOS) ids.push_back(Vocabulary::kEos);
    return ids;
}

inline Vector random_vector(Rng& rng, Eigen::Index n) {
    Vector v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = rng.normal();
    return v;
}

inline std::vector<ContrastiveSample> random_contrastive_batch(Rng& rng, const EncoderConfig& cfg, std::size_t b,
                                                               bool knowledge_branch) {
    std::vector<ContrastiveSample> batch;
    for (std::size_t i = 0; i < b; ++i) {
        ContrastiveSample s;
        s.image = random_vector(rng, cfg.image_input_dim);
        s.tokens = random_tokens(rng, cfg.vocab_size, 2 + rng.below(4), Pooling::EOS);
        s.label = static_cast<int>(rng.below(std::max<std::size_t>(1, b / 2)));
        s.branch = knowledge_branch && (i % 2 == 0) ? Branch::knowledge : Branch::vanilla;
        batch.push_back(std::move(s));
    }
    return batch;
}

inline GroundingSample random_grounding_sample(Rng& rng, const EncoderConfig& cfg, bool knowledge) {
    GroundingSample s;
    const int m = 3, k = 3;
    s.regions.resize(m, cfg.image_input_dim);
    for (Eigen::Index i = 0; i < s.regions.size(); ++i) s.regions.data()[i] = rng.normal();
    for (int j = 0; j < k; ++j) s.phrases.push_back(random_tokens(rng, cfg.vocab_size, 1 + rng.below(4), Pooling::CLS));
    s.targets = Tensor::Zero(m, k);
    for (int i = 0; i < m; ++i) s.targets(i, static_cast<Eigen::Index>(rng.below(k))) = 1.0;
    s.branch = knowledge ? Branch::knowledge : Branch::vanilla;
    return s;
}

}  // namespace klite::testing
