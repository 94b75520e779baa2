#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "klite/checkpoint.hpp"
#include "klite/knowledge_store.hpp"
#include "klite/losses.hpp"
#include "klite/prompt_composer.hpp"
#include "klite/query_builder.hpp"
#include "klite/trainer.hpp"

namespace klite {

// one_branch: every class text takes the model's single path (the adapter branch when
// the model has adapters). two_branch_selective: knowledge hits go through the
// adapters, misses through the vanilla branch.
enum class BranchMode { one_branch, two_branch_selective };

BranchMode parse_branch_mode(std::string_view name);
std::string_view to_string(BranchMode mode);

struct ClassEmbeddingOptions {
    bool with_knowledge = true;
    KnowledgeSource source = KnowledgeSource::wiki_def;
    BranchMode branch_mode = BranchMode::one_branch;
    std::vector<PromptTemplate> templates{default_template()};
    std::size_t max_tokens = kDefaultMaxTokens;
};

struct ClassEmbeddingMatrix {
    Tensor columns;  // P x C, unit-norm columns
    std::vector<std::string> names;
    std::vector<std::string> texts;  // composed text under the first template
    std::vector<bool> knowledge_hit;
    std::vector<Branch> branch;
};

// Throws DataError for an empty class list.
ClassEmbeddingMatrix build_class_embeddings(const Model& model, const std::vector<std::string>& class_names,
                                            const KnowledgeStore& store, const ClassEmbeddingOptions& options);

struct ZeroShotResult {
    std::vector<int> predictions;
    double accuracy = 0.0;
    std::vector<double> per_class_accuracy;  // NaN-free: classes without images report 0
};

// Argmax of u . c_j per image, ties to the lowest index. `labels` may be empty, in
// which case accuracy fields stay zero.
ZeroShotResult zero_shot_classify(const ModelParams& params, const std::vector<Vector>& images,
                                  const ClassEmbeddingMatrix& classes, const std::vector<int>& labels = {});

struct ProbeConfig {
    int shots_per_class = 5;
    int seeds = 3;
    std::uint64_t seed = 0;
    int steps = 500;
    double learning_rate = 0.5;
    double l2 = 1e-4;
};

struct ProbeResult {
    double mean_accuracy = 0.0;
    std::vector<double> per_seed;
};

// Multinomial logistic regression on frozen features (rows), trained by full-batch
// gradient descent on `shots` seeded samples per class and scored on the rest.
// Throws DataError when a class has fewer than shots+1 examples.
ProbeResult linear_probe(const Tensor& features, const std::vector<int>& labels, const ProbeConfig& config);

// Normalized image features (rows) from the image encoder.
Tensor image_features(const ModelParams& params, const std::vector<Vector>& images);

// |downstream ∩ pretrain| / |downstream| * 100 after normalize_query. Throws
// DataError for an empty downstream set.
double concept_overlap(const std::vector<std::string>& pretrain, const std::vector<std::string>& downstream);

struct DatasetStats {
    std::size_t instances = 0;
    std::size_t concepts_full = 0;
    std::size_t concepts_minfreq = 0;
    std::size_t vocab_full = 0;
    std::size_t vocab_minfreq = 0;
    double mean_ins_per_concept = 0.0;
    double std_ins_per_concept = 0.0;  // population std
};

// Concepts come from construct_query per item. A concept passes the frequency filter
// when it has more than `min_freq` instances.
DatasetStats dataset_stats(const std::vector<Triplet>& triplets, const FrequencyTable& freq, const Lexicon& lexicon,
                           std::size_t min_freq = 5);

// Per-concept instance counts used by dataset_stats.
std::map<std::string, std::size_t> concept_counts(const std::vector<Triplet>& triplets, const FrequencyTable& freq,
                                                  const Lexicon& lexicon);

struct EvalReport {
    double top1 = 0.0;
    std::vector<double> per_class;
    double concept_overlap = 0.0;     // percent
    double knowledge_coverage = 0.0;  // percent
    std::string config_digest;
};

void write_eval_report(const EvalReport& report, const std::vector<std::string>& class_names,
                       const std::filesystem::path& path);

struct BreakdownRow {
    std::string dataset;
    double score = 0.0;
    double concept_overlap = 0.0;
    double knowledge_coverage = 0.0;
};

void write_breakdown_csv(const std::vector<BreakdownRow>& rows, const std::filesystem::path& path);

}  // namespace klite
