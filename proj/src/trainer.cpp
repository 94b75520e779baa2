#include "klite/trainer.hpp"

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "json.hpp"
#include "klite/error.hpp"
#include "klite/rng.hpp"

namespace klite {

using json = nlohmann::json;

std::string normalize_text(std::string_view text) {
    std::string out;
    for (const auto& t : tokenize(text)) out += (out.empty() ? "" : " ") + t;
    return out;
}

void assign_labels(std::vector<Triplet>& triplets) {
    std::map<std::string, int> ids;
    for (auto& t : triplets) {
        const std::string key = t.group.empty() ? normalize_text(t.text) : t.group;
        auto [it, inserted] = ids.emplace(key, static_cast<int>(ids.size()));
        t.label = it->second;
    }
}

AugmentResult augment_dataset(const std::vector<Triplet>& triplets, const KnowledgeStore& store,
                              const FrequencyTable& freq, const Lexicon& lexicon, const AugmentOptions& options) {
    AugmentResult out;
    KnowledgeCache cache(store);
    for (const auto& t : triplets) {
        const Query q = construct_query(t.text, t.kind, freq, lexicon);
        std::optional<std::string> knowledge;
        if (options.with_knowledge) {
            if (auto item = cache.get(q.text, options.source)) knowledge = item->text;
        }
        (knowledge ? out.audit.hits : out.audit.misses)++;

        Triplet base = t;
        base.group = t.group.empty() ? normalize_text(t.text) : t.group;
        if (t.kind == TextKind::category) {
            const auto composed = compose_class_text(options.prompt, q.text, knowledge, options.max_tokens);
            base.text = composed.text;
            base.augmented = composed.has_knowledge();
            out.triplets.push_back(std::move(base));
        } else {
            for (auto& composed : compose_caption_texts(t.text, q.text, knowledge, options.scheme, options.max_tokens)) {
                Triplet variant = base;
                variant.text = composed.text;
                variant.augmented = composed.has_knowledge();
                out.triplets.push_back(std::move(variant));
            }
        }
    }
    assign_labels(out.triplets);
    out.audit.emitted = out.triplets.size();
    return out;
}

std::vector<Triplet> load_dataset(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open dataset: " + path.string());
    std::vector<Triplet> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            const auto obj = json::parse(line);
            Triplet t;
            const auto image = obj.at("image").get<std::vector<double>>();
            t.image = Eigen::Map<const Vector>(image.data(), static_cast<Eigen::Index>(image.size()));
            t.text = obj.at("text").get<std::string>();
            t.kind = parse_text_kind(obj.value("kind", std::string("category")));
            t.label = obj.value("label", -1);
            t.group = obj.value("group", std::string());
            t.augmented = obj.value("augmented", false);
            if (!out.empty() && out.front().image.size() != t.image.size()) {
                throw ParseError(path.string() + ": image dimension differs from the first record", lineno);
            }
            out.push_back(std::move(t));
        } catch (const json::exception& e) {
            throw ParseError(path.string() + ": " + e.what(), lineno);
        } catch (const DataError& e) {
            throw ParseError(path.string() + ": " + e.what(), lineno);
        }
    }
    if (out.empty()) throw DataError("dataset is empty: " + path.string());
    return out;
}

void save_dataset(const std::vector<Triplet>& triplets, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write dataset: " + path.string());
    for (const auto& t : triplets) {
        json line{{"image", std::vector<double>(t.image.data(), t.image.data() + t.image.size())},
                  {"text", t.text},
                  {"kind", to_string(t.kind)},
                  {"label", t.label},
                  {"group", t.group},
                  {"augmented", t.augmented}};
        out << line.dump() << '\n';
    }
}

TrainMode parse_train_mode(std::string_view name) {
    if (name == "scratch_1branch") return TrainMode::scratch_1branch;
    if (name == "scratch_2branch") return TrainMode::scratch_2branch;
    if (name == "continual_adapters") return TrainMode::continual_adapters;
    throw DataError("unknown training mode: " + std::string(name));
}

std::string_view to_string(TrainMode mode) {
    switch (mode) {
        case TrainMode::scratch_1branch: return "scratch_1branch";
        case TrainMode::scratch_2branch: return "scratch_2branch";
        case TrainMode::continual_adapters: return "continual_adapters";
    }
    return "scratch_1branch";
}

void TrainConfig::validate() const {
    if (batch_size < 2) throw DataError("batch size must be at least 2 for contrastive training");
    if (epochs < 1) throw DataError("epochs must be at least 1");
}

Branch route(TrainMode mode, const Triplet& t) {
    switch (mode) {
        case TrainMode::scratch_1branch: return Branch::vanilla;
        case TrainMode::scratch_2branch: return t.augmented ? Branch::knowledge : Branch::vanilla;
        // only the adapters train here, so everything has to pass through them
        case TrainMode::continual_adapters: return Branch::knowledge;
    }
    return Branch::vanilla;
}

namespace {

std::string describe_batch(const std::vector<Triplet>& data, const std::vector<std::size_t>& idx) {
    std::ostringstream os;
    for (auto i : idx) os << "\n  [" << i << "] label=" << data[i].label << " text=\"" << data[i].text << '"';
    return os.str();
}

}  // namespace

TrainResult train(const TrainConfig& config, const std::vector<Triplet>& data, const Vocabulary& vocab,
                  const Model* base) {
    config.validate();
    if (data.size() < 2) throw DataError("training needs at least two triplets");
    for (const auto& t : data) {
        if (t.label < 0) throw DataError("training data must be labeled (run assign_labels)");
    }

    TrainResult result;
    LossSpec spec = LossSpec::all();
    if (config.mode == TrainMode::continual_adapters) {
        if (!base) throw DataError("continual_adapters mode requires a base checkpoint");
        result.model = *base;
        enable_adapters(result.model.params, config.seed);
        spec = LossSpec::adapters_only();
    } else {
        EncoderConfig enc = config.encoder;
        enc.vocab_size = static_cast<int>(vocab.size());
        enc.image_input_dim = static_cast<int>(data.front().image.size());
        result.model.params = init_params(enc, config.seed);
        result.model.vocab = vocab;
        if (config.mode == TrainMode::scratch_2branch) enable_adapters(result.model.params, config.seed);
    }
    result.model.seed = config.seed;
    ModelParams& params = result.model.params;

    std::vector<ContrastiveSample> samples;
    samples.reserve(data.size());
    for (const auto& t : data) {
        samples.push_back({t.image, result.model.vocab.encode(t.text, Pooling::EOS), t.label, route(config.mode, t)});
    }

    Optimizer opt(config.optimizer, params, spec.trainable);
    Rng rng(config.seed ^ 0x5eedULL);
    std::vector<std::size_t> order(data.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    const auto bs = static_cast<std::size_t>(config.batch_size);
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        rng.shuffle(order);
        for (std::size_t start = 0; start < order.size(); start += bs) {
            const std::size_t end = std::min(order.size(), start + bs);
            if (end - start < 2) break;
            std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                         order.begin() + static_cast<std::ptrdiff_t>(end));
            std::vector<ContrastiveSample> batch;
            batch.reserve(idx.size());
            for (auto i : idx) batch.push_back(samples[i]);

            GradResult g;
            try {
                g = grads(params, batch, spec);
            } catch (const NumericError& e) {
                throw TrainingError(std::string(e.what()) + " at step " + std::to_string(opt.steps() + 1) +
                                    "; batch:" + describe_batch(data, idx));
            }
            opt.step(params, g.grads);
            result.routed.vanilla += g.routed.vanilla;
            result.routed.knowledge += g.routed.knowledge;
            result.samples_seen += batch.size();
            result.trace.push_back({opt.steps(), epoch, g.loss.contrastive, params.tau()});
        }
    }
    return result;
}

void write_trace_csv(const std::vector<TraceRow>& trace, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write trace: " + path.string());
    out << "step,L_i2t,L_t2i,L_IC,tau\n";
    char buf[256];
    for (const auto& r : trace) {
        std::snprintf(buf, sizeof buf, "%ld,%.17g,%.17g,%.17g,%.17g\n", r.step, r.loss.i2t, r.loss.t2i, r.loss.total,
                      r.tau);
        out << buf;
    }
}

GroundTrainResult train_grounding(const GroundTrainConfig& config, Model model, const std::vector<RegionSet>& regions,
                                  const std::vector<std::string>& category_texts) {
    if (regions.empty()) throw DataError("train_grounding: no region sets");
    if (category_texts.empty()) throw DataError("train_grounding: no categories");
    if (config.epochs < 1) throw DataError("train_grounding: epochs must be at least 1");
    if (config.knowledge_branch || config.adapters_only) enable_adapters(model.params, config.seed);

    LossSpec spec = config.adapters_only ? LossSpec::adapters_only() : LossSpec::all();
    spec.trainable.erase(TensorGroup::temperature);  // tau plays no part in the grounding head
    spec.focal = config.focal;

    std::vector<std::vector<int>> phrases;
    for (const auto& text : category_texts) phrases.push_back(model.vocab.encode(text, Pooling::CLS));

    std::vector<GroundingSample> samples;
    for (const auto& r : regions) {
        if (r.targets.cols() != static_cast<Eigen::Index>(category_texts.size()) || r.targets.rows() != r.features.rows()) {
            throw DataError("region set '" + r.image_id + "' has targets that are not M x K");
        }
        samples.push_back({r.features, phrases, r.targets,
                           config.knowledge_branch ? Branch::knowledge : Branch::vanilla});
    }

    GroundTrainResult result;
    Optimizer opt(config.optimizer, model.params, spec.trainable);
    Rng rng(config.seed ^ 0x6a0dULL);
    std::vector<std::size_t> order(samples.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        rng.shuffle(order);
        for (auto i : order) {
            GradResult g;
            try {
                g = grads(model.params, samples[i], spec);
            } catch (const NumericError& e) {
                throw TrainingError(std::string(e.what()) + " on region set '" + regions[i].image_id + "'");
            }
            opt.step(model.params, g.grads);
            result.loss_trace.push_back(g.loss.total);
        }
    }
    result.model = std::move(model);
    return result;
}

}  // namespace klite
