#include "klite/evaluation.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

#include "json.hpp"
#include "klite/contrastive.hpp"
#include "klite/error.hpp"
#include "klite/rng.hpp"

namespace klite {

using json = nlohmann::json;

BranchMode parse_branch_mode(std::string_view name) {
    if (name == "one_branch") return BranchMode::one_branch;
    if (name == "two_branch_selective") return BranchMode::two_branch_selective;
    throw DataError("unknown branch mode: " + std::string(name));
}

std::string_view to_string(BranchMode mode) {
    return mode == BranchMode::one_branch ? "one_branch" : "two_branch_selective";
}

ClassEmbeddingMatrix build_class_embeddings(const Model& model, const std::vector<std::string>& class_names,
                                            const KnowledgeStore& store, const ClassEmbeddingOptions& options) {
    if (class_names.empty()) throw DataError("build_class_embeddings: empty class list");
    if (options.templates.empty()) throw DataError("build_class_embeddings: no prompt templates");
    const bool adapters = model.params.has_adapters();

    ClassEmbeddingMatrix out;
    out.columns.resize(model.params.config.embed_dim, static_cast<Eigen::Index>(class_names.size()));
    for (std::size_t c = 0; c < class_names.size(); ++c) {
        const std::string query = normalize_query(class_names[c]);
        std::optional<std::string> knowledge;
        if (options.with_knowledge) {
            if (auto item = store.retrieve(query, options.source)) knowledge = item->text;
        }
        const bool hit = knowledge.has_value();
        const bool through_adapters =
            adapters && (options.branch_mode == BranchMode::one_branch || hit);

        Vector sum = Vector::Zero(model.params.config.embed_dim);
        for (std::size_t t = 0; t < options.templates.size(); ++t) {
            const auto composed = compose_class_text(options.templates[t], query, knowledge, options.max_tokens);
            if (t == 0) out.texts.push_back(composed.text);
            const auto ids = model.vocab.encode(composed.text, Pooling::EOS);
            sum += normalize(encode_text(model.params, ids, Pooling::EOS, through_adapters));
        }
        out.columns.col(static_cast<Eigen::Index>(c)) = options.templates.size() == 1 ? sum : normalize(sum);
        out.names.push_back(query);
        out.knowledge_hit.push_back(hit);
        out.branch.push_back(through_adapters ? Branch::knowledge : Branch::vanilla);
    }
    return out;
}

Tensor image_features(const ModelParams& params, const std::vector<Vector>& images) {
    Tensor f(static_cast<Eigen::Index>(images.size()), params.config.embed_dim);
    for (std::size_t i = 0; i < images.size(); ++i) {
        f.row(static_cast<Eigen::Index>(i)) = normalize(encode_image(params, images[i])).transpose();
    }
    return f;
}

ZeroShotResult zero_shot_classify(const ModelParams& params, const std::vector<Vector>& images,
                                  const ClassEmbeddingMatrix& classes, const std::vector<int>& labels) {
    if (!labels.empty() && labels.size() != images.size()) throw DataError("zero_shot_classify: one label per image");
    const Tensor scores = image_features(params, images) * classes.columns;
    ZeroShotResult out;
    const auto num_classes = static_cast<std::size_t>(classes.columns.cols());
    for (Eigen::Index i = 0; i < scores.rows(); ++i) {
        Eigen::Index best = 0;
        for (Eigen::Index c = 1; c < scores.cols(); ++c) {
            if (scores(i, c) > scores(i, best)) best = c;
        }
        out.predictions.push_back(static_cast<int>(best));
    }
    if (labels.empty() || images.empty()) return out;

    std::vector<std::size_t> seen(num_classes, 0), right(num_classes, 0);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const bool ok = out.predictions[i] == labels[i];
        correct += ok;
        if (labels[i] >= 0 && static_cast<std::size_t>(labels[i]) < num_classes) {
            seen[static_cast<std::size_t>(labels[i])]++;
            right[static_cast<std::size_t>(labels[i])] += ok;
        }
    }
    out.accuracy = static_cast<double>(correct) / static_cast<double>(labels.size());
    for (std::size_t c = 0; c < num_classes; ++c) {
        out.per_class_accuracy.push_back(seen[c] ? double(right[c]) / double(seen[c]) : 0.0);
    }
    return out;
}

namespace {

// Full-batch softmax regression; returns (weights P x C, bias 1 x C).
std::pair<Tensor, Tensor> fit_softmax_regression(const Tensor& x, const std::vector<int>& y, int classes,
                                                 const ProbeConfig& cfg) {
    Tensor w = Tensor::Zero(x.cols(), classes);
    Tensor b = Tensor::Zero(1, classes);
    const double n = static_cast<double>(x.rows());
    for (int step = 0; step < cfg.steps; ++step) {
        Tensor logits = x * w;
        logits.rowwise() += b.row(0);
        for (Eigen::Index r = 0; r < logits.rows(); ++r) {
            const double m = logits.row(r).maxCoeff();
            logits.row(r) = (logits.row(r).array() - m).exp();
            logits.row(r) /= logits.row(r).sum();
            logits(r, y[static_cast<std::size_t>(r)]) -= 1.0;
        }
        const Tensor dw = x.transpose() * logits / n + cfg.l2 * w;
        const Tensor db = logits.colwise().sum() / n;
        w -= cfg.learning_rate * dw;
        b -= cfg.learning_rate * db;
    }
    return {w, b};
}

}  // namespace

ProbeResult linear_probe(const Tensor& features, const std::vector<int>& labels, const ProbeConfig& config) {
    if (config.shots_per_class < 1) throw DataError("linear_probe: shots_per_class must be >= 1");
    if (config.seeds < 1) throw DataError("linear_probe: seeds must be >= 1");
    if (static_cast<std::size_t>(features.rows()) != labels.size()) throw DataError("linear_probe: one label per row");

    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
    const auto shots = static_cast<std::size_t>(config.shots_per_class);
    for (const auto& [label, members] : by_class) {
        if (members.size() <= shots) {
            throw DataError("linear_probe: class " + std::to_string(label) + " has " + std::to_string(members.size()) +
                            " examples, needs more than " + std::to_string(shots));
        }
    }
    std::map<int, int> dense;
    for (const auto& [label, members] : by_class) dense.emplace(label, static_cast<int>(dense.size()));

    ProbeResult result;
    for (int s = 0; s < config.seeds; ++s) {
        Rng rng(config.seed + static_cast<std::uint64_t>(s) * 0x9e3779b97f4a7c15ULL);
        std::vector<std::size_t> train_idx, test_idx;
        for (auto [label, members] : by_class) {
            rng.shuffle(members);
            train_idx.insert(train_idx.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(shots));
            test_idx.insert(test_idx.end(), members.begin() + static_cast<std::ptrdiff_t>(shots), members.end());
        }
        Tensor x(static_cast<Eigen::Index>(train_idx.size()), features.cols());
        std::vector<int> y;
        for (std::size_t i = 0; i < train_idx.size(); ++i) {
            x.row(static_cast<Eigen::Index>(i)) = features.row(static_cast<Eigen::Index>(train_idx[i]));
            y.push_back(dense.at(labels[train_idx[i]]));
        }
        const auto [w, b] = fit_softmax_regression(x, y, static_cast<int>(dense.size()), config);

        std::size_t correct = 0;
        for (auto i : test_idx) {
            const Eigen::RowVectorXd logits = features.row(static_cast<Eigen::Index>(i)) * w + b.row(0);
            Eigen::Index best = 0;
            for (Eigen::Index c = 1; c < logits.size(); ++c) {
                if (logits(c) > logits(best)) best = c;
            }
            correct += static_cast<int>(best) == dense.at(labels[i]);
        }
        result.per_seed.push_back(static_cast<double>(correct) / static_cast<double>(test_idx.size()));
    }
    double sum = 0.0;
    for (double a : result.per_seed) sum += a;
    result.mean_accuracy = sum / static_cast<double>(result.per_seed.size());
    return result;
}

double concept_overlap(const std::vector<std::string>& pretrain, const std::vector<std::string>& downstream) {
    std::set<std::string> down, pre;
    for (const auto& c : downstream) down.insert(normalize_query(c));
    for (const auto& c : pretrain) pre.insert(normalize_query(c));
    if (down.empty()) throw DataError("concept_overlap: empty downstream concept set");
    std::size_t shared = 0;
    for (const auto& c : down) shared += pre.contains(c);
    return 100.0 * static_cast<double>(shared) / static_cast<double>(down.size());
}

std::map<std::string, std::size_t> concept_counts(const std::vector<Triplet>& triplets, const FrequencyTable& freq,
                                                  const Lexicon& lexicon) {
    std::map<std::string, std::size_t> counts;
    for (const auto& t : triplets) counts[normalize_query(construct_query(t.text, t.kind, freq, lexicon).text)]++;
    return counts;
}

DatasetStats dataset_stats(const std::vector<Triplet>& triplets, const FrequencyTable& freq, const Lexicon& lexicon,
                           std::size_t min_freq) {
    DatasetStats s;
    s.instances = triplets.size();
    const auto counts = concept_counts(triplets, freq, lexicon);
    s.concepts_full = counts.size();

    std::set<std::string> vocab_full, vocab_min;
    double sum = 0.0;
    for (const auto& [concept_name, n] : counts) {
        const auto words = tokenize(concept_name);
        vocab_full.insert(words.begin(), words.end());
        if (n > min_freq) {
            ++s.concepts_minfreq;
            vocab_min.insert(words.begin(), words.end());
        }
        sum += static_cast<double>(n);
    }
    s.vocab_full = vocab_full.size();
    s.vocab_minfreq = vocab_min.size();
    if (!counts.empty()) {
        s.mean_ins_per_concept = sum / static_cast<double>(counts.size());
        double sq = 0.0;
        for (const auto& [_, n] : counts) sq += (double(n) - s.mean_ins_per_concept) * (double(n) - s.mean_ins_per_concept);
        s.std_ins_per_concept = std::sqrt(sq / static_cast<double>(counts.size()));
    }
    return s;
}

void write_eval_report(const EvalReport& report, const std::vector<std::string>& class_names,
                       const std::filesystem::path& path) {
    json per_class = json::object();
    for (std::size_t c = 0; c < class_names.size() && c < report.per_class.size(); ++c) {
        per_class[class_names[c]] = report.per_class[c];
    }
    const json doc{{"top1", report.top1},
                   {"per_class", per_class},
                   {"concept_overlap", report.concept_overlap},
                   {"knowledge_coverage", report.knowledge_coverage},
                   {"config_digest", report.config_digest}};
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write report: " + path.string());
    out << doc.dump(2) << '\n';
}

void write_breakdown_csv(const std::vector<BreakdownRow>& rows, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write breakdown: " + path.string());
    out << "dataset,score,concept_overlap,knowledge_coverage\n";
    char buf[512];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%s,%.6f,%.6f,%.6f\n", r.dataset.c_str(), r.score, r.concept_overlap,
                      r.knowledge_coverage);
        out << buf;
    }
}

}  // namespace klite
