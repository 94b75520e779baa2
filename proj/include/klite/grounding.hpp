#pragma once

// Region-phrase grounding head: category texts are encoded independently (CLS
// pooling), stacked into U (P x K), and scored against region features V (M x P)
// as S = V U. Training uses a sigmoid focal loss against a binary target matrix.

#include <string>
#include <vector>

#include "klite/encoder.hpp"
#include "klite/knowledge_store.hpp"
#include "klite/prompt_composer.hpp"

namespace klite {

struct FocalParams {
    double alpha = 0.25;
    double gamma = 2.0;

    // Throws DataError unless alpha in (0,1) and gamma >= 0.
    void validate() const;
};

// Raw region features (one row per region) for one image.
struct RegionSet {
    std::string image_id;
    Tensor features;  // M x image_input_dim
    Tensor targets;   // M x K in {0,1}, or empty when unlabeled
};

struct PhraseBank {
    Tensor u;  // P x K
    std::vector<std::string> categories;
    std::vector<std::string> texts;
    std::vector<bool> knowledge_hit;
};

// Each text is tokenized with [CLS] and encoded on its own. Throws DataError when a
// text does not fit max_tokens.
PhraseBank encode_phrases_parallel(const ModelParams& params, const Vocabulary& vocab,
                                   const std::vector<std::string>& categories, const std::vector<std::string>& texts,
                                   bool use_adapters = false);

// Composes "{q}, {s}" per category from the store (plain "{q}" when with_knowledge is
// false or retrieval misses).
std::vector<AugmentedText> compose_category_texts(const std::vector<std::string>& categories,
                                                  const KnowledgeStore& store, KnowledgeSource source,
                                                  bool with_knowledge, std::size_t max_tokens);

// S = V U. Throws DataError when the inner dimensions differ.
Tensor ground_scores(const Tensor& v, const Tensor& u);

// Sum over all cells. Throws DataError on shape mismatch, NumericError on non-finite values.
double focal_loss(const Tensor& scores, const Tensor& targets, const FocalParams& fp);
// dLoss/dscores.
Tensor focal_loss_grad(const Tensor& scores, const Tensor& targets, const FocalParams& fp);

struct RegionPrediction {
    int category = 0;
    double score = 0.0;  // sigmoid of the winning logit
};

// Region features are passed through the image encoder, then scored against the bank.
// Ties go to the lowest category index. Throws DataError for an empty bank.
std::vector<RegionPrediction> zero_shot_region_classify(const ModelParams& params, const Tensor& region_features,
                                                        const PhraseBank& bank);

// Encodes each region row with the image encoder: M x P.
Tensor encode_regions(const ModelParams& params, const Tensor& region_features);

double sigmoid(double x);

}  // namespace klite
