#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "klite/checkpoint.hpp"
#include "klite/grounding.hpp"
#include "klite/knowledge_store.hpp"
#include "klite/losses.hpp"
#include "klite/optimizer.hpp"
#include "klite/prompt_composer.hpp"
#include "klite/query_builder.hpp"

namespace klite {

// One (image, text, label) instance. `group` is the normalized original description
// the label is derived from; augmented variants of one description keep its group.
struct Triplet {
    Vector image;
    std::string text;
    TextKind kind = TextKind::category;
    int label = -1;
    std::string group;
    bool augmented = false;
};

// Lowercased tokens joined by single spaces.
std::string normalize_text(std::string_view text);

// Equal groups (or equal normalized texts when the group is empty) share a label;
// labels are dense in order of first appearance.
void assign_labels(std::vector<Triplet>& triplets);

struct AugmentOptions {
    bool with_knowledge = true;
    KnowledgeSource source = KnowledgeSource::wiki_def;
    CaptionScheme scheme = CaptionScheme::concat;
    PromptTemplate prompt = default_template();
    std::size_t max_tokens = kDefaultMaxTokens;
};

struct AugmentAudit {
    std::size_t hits = 0;
    std::size_t misses = 0;
    std::size_t emitted = 0;
};

struct AugmentResult {
    std::vector<Triplet> triplets;
    AugmentAudit audit;
};

// Category texts become "prompt, query, knowledge" (the plain prompt on a
// miss or with with_knowledge=false); captions follow the concat/combine scheme.
// Labels are reassigned afterwards.
AugmentResult augment_dataset(const std::vector<Triplet>& triplets, const KnowledgeStore& store,
                              const FrequencyTable& freq, const Lexicon& lexicon, const AugmentOptions& options);

// JSONL {image: [..], text, kind, label?, group?, augmented?}
std::vector<Triplet> load_dataset(const std::filesystem::path& path);
void save_dataset(const std::vector<Triplet>& triplets, const std::filesystem::path& path);

enum class TrainMode { scratch_1branch, scratch_2branch, continual_adapters };

TrainMode parse_train_mode(std::string_view name);
std::string_view to_string(TrainMode mode);

struct TrainConfig {
    int batch_size = 32;
    int epochs = 10;
    OptimizerConfig optimizer{};
    std::uint64_t seed = 0;
    TrainMode mode = TrainMode::scratch_1branch;
    EncoderConfig encoder{};  // vocab_size and image_input_dim are filled from the data

    // Throws DataError for batch_size < 2 or epochs < 1.
    void validate() const;
};

struct TraceRow {
    long step = 0;
    int epoch = 0;
    ContrastiveLoss loss{};
    double tau = 0.0;
};

struct TrainResult {
    Model model;
    std::vector<TraceRow> trace;
    BranchCounts routed;
    std::size_t samples_seen = 0;
};

class TrainingError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Seeded shuffling each epoch; the trailing partial batch is kept when it has >= 2
// items. continual_adapters requires `base` and updates adapter tensors only.
// Throws TrainingError (with the offending batch's texts) on a non-finite loss.
TrainResult train(const TrainConfig& config, const std::vector<Triplet>& data, const Vocabulary& vocab,
                  const Model* base = nullptr);

// Text branch used for one triplet under a training mode. continual_adapters sends
// everything through the adapters.
Branch route(TrainMode mode, const Triplet& t);

void write_trace_csv(const std::vector<TraceRow>& trace, const std::filesystem::path& path);

// ---- grounding ------------------------------------------------------------------------------

struct GroundTrainConfig {
    int epochs = 20;
    OptimizerConfig optimizer{};
    FocalParams focal{};
    std::uint64_t seed = 0;
    bool knowledge_branch = false;  // route phrases through adapters (requires adapters)
    bool adapters_only = false;
};

struct GroundTrainResult {
    Model model;
    std::vector<double> loss_trace;  // one entry per region set visited
};

// Trains the text and image encoders so region features score their target category
// texts under the focal loss. Every RegionSet must carry K-column targets.
GroundTrainResult train_grounding(const GroundTrainConfig& config, Model model, const std::vector<RegionSet>& regions,
                                  const std::vector<std::string>& category_texts);

}  // namespace klite
