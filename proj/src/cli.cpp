#include "klite/cli.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <optional>
#include <set>

#include "CLI11.hpp"
#include "json.hpp"
#include "klite/checkpoint.hpp"
#include "klite/error.hpp"
#include "klite/evaluation.hpp"
#include "klite/grounding.hpp"
#include "klite/knowledge_store.hpp"
#include "klite/prompt_composer.hpp"
#include "klite/query_builder.hpp"
#include "klite/synth_bench.hpp"
#include "klite/trainer.hpp"

namespace klite {

using json = nlohmann::json;

namespace {

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Key {
    std::string name;
    std::string fallback;  // empty means unset
    std::string help;
};

const std::vector<Key> kSnapshotKeys = {
    {"wordnet", "", "WordNet snapshot (JSONL)"},
    {"wiktionary", "", "Wiktionary snapshot (JSONL)"},
    {"source", "wiki_def", "knowledge source: wn_hier, wn_def or wiki_def"},
};

const std::vector<Key> kEncoderKeys = {
    {"embed-dim", "32", ""},  {"layers", "2", ""},          {"heads", "2", ""},
    {"hidden", "64", ""},     {"max-tokens", "64", ""},     {"adapter-bottleneck", "8", ""},
    {"image-hidden", "64", ""},
};

struct Command {
    std::string name;
    std::string description;
    std::vector<Key> keys;
    std::vector<std::string> required;
};

std::vector<Key> join(std::initializer_list<std::vector<Key>> parts) {
    std::vector<Key> out{{"seed", "0", "random seed"}};
    for (const auto& p : parts) out.insert(out.end(), p.begin(), p.end());
    return out;
}

std::vector<Command> commands() {
    return {
        {"augment",
         "compose knowledge-augmented texts for a dataset",
         join({kSnapshotKeys,
               {{"dataset", "", "input dataset (JSONL)"},
                {"out", "", "augmented dataset (JSONL)"},
                {"lexicon", "", "part-of-speech lexicon (TSV)"},
                {"freq", "", "noun-phrase frequency table; built from the dataset captions when absent"},
                {"freq-out", "", "write the frequency table used"},
                {"scheme", "concat", "caption scheme: concat or combine"},
                {"with-knowledge", "true", ""},
                {"max-tokens", "64", ""}}}),
         {"dataset", "out"}},
        {"stats",
         "concept statistics of a dataset",
         join({{{"dataset", "", ""}, {"lexicon", "", ""}, {"freq", "", ""}, {"min-freq", "5", ""}, {"out", "", ""}}}),
         {"dataset"}},
        {"coverage", "knowledge coverage of a query list", join({kSnapshotKeys, {{"queries", "", "one query per line"}}}),
         {"queries"}},
        {"train",
         "contrastive training",
         join({{{"wordnet", "", ""}, {"wiktionary", "", ""}},
               kEncoderKeys,
               {{"dataset", "", ""},
                {"out", "", "checkpoint"},
                {"trace", "", "loss trace (CSV)"},
                {"mode", "scratch_1branch", "scratch_1branch, scratch_2branch or continual_adapters"},
                {"base", "", "base checkpoint for continual_adapters"},
                {"batch-size", "32", ""},
                {"epochs", "10", ""},
                {"lr", "0.001", ""},
                {"optimizer", "adam", "sgd, momentum or adam"}}}),
         {"dataset", "out"}},
        {"eval-zeroshot",
         "zero-shot classification",
         join({kSnapshotKeys,
               {{"checkpoint", "", ""},
                {"dataset", "", "images whose text is the class name"},
                {"classes", "", "one class name per line"},
                {"with-knowledge", "true", ""},
                {"branch-mode", "one_branch", "one_branch or two_branch_selective"},
                {"templates", "", "prompt templates, one per line"},
                {"max-tokens", "64", ""},
                {"pretrain-concepts", "", "pretraining concepts, one per line"},
                {"report", "", "report (JSON)"},
                {"breakdown", "", "breakdown row (CSV)"},
                {"name", "dataset", "dataset name in the breakdown"}}}),
         {"checkpoint", "dataset", "classes"}},
        {"eval-probe",
         "few-shot linear probe on frozen image features",
         join({{{"checkpoint", "", ""},
                {"dataset", "", ""},
                {"shots", "5", ""},
                {"probe-seeds", "3", ""},
                {"steps", "500", ""},
                {"lr", "0.5", ""},
                {"l2", "0.0001", ""},
                {"report", "", ""}}}),
         {"checkpoint", "dataset"}},
        {"ground-train",
         "train region-phrase grounding",
         join({kSnapshotKeys,
               {{"checkpoint", "", ""},
                {"regions", "", "region sets (JSONL)"},
                {"categories", "", "one category per line"},
                {"out", "", "checkpoint"},
                {"trace", "", "loss trace (CSV)"},
                {"epochs", "20", ""},
                {"lr", "0.001", ""},
                {"optimizer", "adam", ""},
                {"alpha", "0.25", ""},
                {"gamma", "2", ""},
                {"with-knowledge", "true", ""},
                {"max-tokens", "64", ""},
                {"knowledge-branch", "false", ""},
                {"adapters-only", "false", ""}}}),
         {"checkpoint", "regions", "categories", "out"}},
        {"ground-eval",
         "zero-shot region classification",
         join({kSnapshotKeys,
               {{"checkpoint", "", ""},
                {"regions", "", ""},
                {"categories", "", ""},
                {"with-knowledge", "true", ""},
                {"max-tokens", "64", ""},
                {"knowledge-branch", "false", ""},
                {"out", "", "predictions (JSONL)"}}}),
         {"checkpoint", "regions", "categories"}},
        {"bench-synth",
         "synthetic rare-concept transfer benchmark",
         join({{{"seeds", "5", "number of seeds"},
                {"empty-knowledge", "false", "run with empty snapshots"},
                {"epochs", "", "training epochs"},
                {"out", "", "report (JSON)"}}}),
         {}},
    };
}

class Settings {
public:
    explicit Settings(std::map<std::string, std::string> values) : values_(std::move(values)) {}

    bool has(const std::string& key) const {
        auto it = values_.find(key);
        return it != values_.end() && !it->second.empty();
    }
    std::string str(const std::string& key) const { return has(key) ? values_.at(key) : std::string(); }
    std::optional<std::filesystem::path> path(const std::string& key) const {
        if (!has(key)) return std::nullopt;
        return std::filesystem::path(values_.at(key));
    }
    std::filesystem::path input(const std::string& key) const {
        std::filesystem::path p = str(key);
        if (!std::filesystem::exists(p)) throw DataError("--" + key + ": no such file: " + p.string());
        return p;
    }
    std::optional<std::filesystem::path> optional_input(const std::string& key) const {
        if (!has(key)) return std::nullopt;
        return input(key);
    }
    long integer(const std::string& key) const {
        const auto s = str(key);
        char* end = nullptr;
        const long v = std::strtol(s.c_str(), &end, 10);
        if (s.empty() || *end) throw UsageError("--" + key + " expects an integer, got '" + s + "'");
        return v;
    }
    double real(const std::string& key) const {
        const auto s = str(key);
        char* end = nullptr;
        const double v = std::strtod(s.c_str(), &end);
        if (s.empty() || *end) throw UsageError("--" + key + " expects a number, got '" + s + "'");
        return v;
    }
    bool flag(const std::string& key) const {
        const auto s = str(key);
        if (s == "true" || s == "1" || s == "yes") return true;
        if (s == "false" || s == "0" || s == "no") return false;
        throw UsageError("--" + key + " expects true or false, got '" + s + "'");
    }
    const std::map<std::string, std::string>& all() const { return values_; }

private:
    std::map<std::string, std::string> values_;
};

std::string trim(std::string s) {
    auto ws = [](unsigned char c) { return std::isspace(c) != 0; };
    s.erase(s.begin(), std::find_if_not(s.begin(), s.end(), ws));
    s.erase(std::find_if_not(s.rbegin(), s.rend(), ws).base(), s.end());
    return s;
}

std::string canonical_key(std::string key) {
    std::replace(key.begin(), key.end(), '_', '-');
    std::transform(key.begin(), key.end(), key.begin(), [](unsigned char c) { return std::tolower(c); });
    return key;
}

std::map<std::string, std::string> read_config(const std::filesystem::path& path, const std::set<std::string>& known) {
    std::ifstream in(path);
    if (!in) throw DataError("--config: no such file: " + path.string());
    std::map<std::string, std::string> out;
    std::string line;
    int number = 0;
    while (std::getline(in, line)) {
        ++number;
        line = trim(line);
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw UsageError(path.string() + ":" + std::to_string(number) + ": expected key=value");
        const auto key = canonical_key(trim(line.substr(0, eq)));
        if (!known.contains(key) || key == "config")
            throw UsageError(path.string() + ":" + std::to_string(number) + ": unknown key '" + key + "'");
        out[key] = trim(line.substr(eq + 1));
    }
    return out;
}

std::string env_name(const std::string& key) {
    std::string s = "KLITE_";
    for (char c : key) s += c == '-' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return s;
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot read " + path.string());
    std::vector<std::string> out;
    std::string line;
    while (std::getline(in, line)) {
        line = trim(line);
        if (!line.empty()) out.push_back(line);
    }
    return out;
}

void write_json(const json& doc, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out << doc.dump(2) << '\n';
}

KnowledgeStore load_store(const Settings& s) {
    return KnowledgeStore::load(s.optional_input("wordnet"), s.optional_input("wiktionary"));
}

Lexicon load_lexicon(const Settings& s) {
    if (auto p = s.optional_input("lexicon")) return Lexicon::load(*p);
    return Lexicon{};
}

FrequencyTable frequency_for(const Settings& s, const std::vector<Triplet>& data, const Lexicon& lexicon) {
    if (auto p = s.optional_input("freq")) return FrequencyTable::load(*p);
    std::vector<std::string> captions;
    for (const auto& t : data)
        if (t.kind == TextKind::caption) captions.push_back(t.text);
    if (captions.empty()) return FrequencyTable{};
    return build_frequency_table(captions, lexicon);
}

std::vector<RegionSet> load_regions(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot read " + path.string());
    std::vector<RegionSet> out;
    std::string line;
    std::size_t number = 0;
    auto matrix = [&](const json& rows, const char* field) {
        if (!rows.is_array() || rows.empty() || !rows[0].is_array())
            throw ParseError(path.string() + ": '" + field + "' must be a non-empty list of rows", number);
        Tensor m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows[0].size()));
        for (std::size_t r = 0; r < rows.size(); ++r) {
            if (rows[r].size() != rows[0].size()) throw ParseError(path.string() + ": ragged '" + field + "'", number);
            for (std::size_t c = 0; c < rows[r].size(); ++c)
                m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c].get<double>();
        }
        return m;
    };
    while (std::getline(in, line)) {
        ++number;
        if (trim(line).empty()) continue;
        try {
            const json j = json::parse(line);
            RegionSet r;
            r.image_id = j.value("image_id", std::to_string(out.size()));
            r.features = matrix(j.at("features"), "features");
            if (j.contains("targets")) {
                r.targets = matrix(j.at("targets"), "targets");
                if (r.targets.rows() != r.features.rows())
                    throw ParseError(path.string() + ": one target row per region", number);
            }
            out.push_back(std::move(r));
        } catch (const json::exception& e) {
            throw ParseError(path.string() + ": " + e.what(), number);
        }
    }
    if (out.empty()) throw DataError(path.string() + ": no region sets");
    return out;
}

EncoderConfig encoder_config(const Settings& s) {
    EncoderConfig e;
    e.embed_dim = static_cast<int>(s.integer("embed-dim"));
    e.text_layers = static_cast<int>(s.integer("layers"));
    e.heads = static_cast<int>(s.integer("heads"));
    e.hidden = static_cast<int>(s.integer("hidden"));
    e.max_tokens = static_cast<int>(s.integer("max-tokens"));
    e.adapter_bottleneck = static_cast<int>(s.integer("adapter-bottleneck"));
    e.image_hidden = static_cast<int>(s.integer("image-hidden"));
    return e;
}

std::uint64_t seed_of(const Settings& s) { return static_cast<std::uint64_t>(s.integer("seed")); }

// ---- subcommands --------------------------------------------------------------------------

json cmd_augment(const Settings& s) {
    const auto data = load_dataset(s.input("dataset"));
    const auto store = load_store(s);
    const auto lexicon = load_lexicon(s);
    const auto freq = frequency_for(s, data, lexicon);
    AugmentOptions opts;
    opts.with_knowledge = s.flag("with-knowledge");
    opts.source = parse_knowledge_source(s.str("source"));
    opts.scheme = parse_caption_scheme(s.str("scheme"));
    opts.max_tokens = static_cast<std::size_t>(s.integer("max-tokens"));
    const auto result = augment_dataset(data, store, freq, lexicon, opts);
    save_dataset(result.triplets, s.str("out"));
    if (auto p = s.path("freq-out")) freq.save(*p);
    return {{"hits", result.audit.hits},
            {"misses", result.audit.misses},
            {"emitted", result.audit.emitted},
            {"out", s.str("out")}};
}

json cmd_stats(const Settings& s) {
    const auto data = load_dataset(s.input("dataset"));
    const auto lexicon = load_lexicon(s);
    const auto freq = frequency_for(s, data, lexicon);
    const auto st = dataset_stats(data, freq, lexicon, static_cast<std::size_t>(s.integer("min-freq")));
    const json doc{{"instances", st.instances},
                   {"concepts_full", st.concepts_full},
                   {"concepts_minfreq", st.concepts_minfreq},
                   {"vocab_full", st.vocab_full},
                   {"vocab_minfreq", st.vocab_minfreq},
                   {"mean_ins_per_concept", st.mean_ins_per_concept},
                   {"std_ins_per_concept", st.std_ins_per_concept}};
    if (auto p = s.path("out")) write_json(doc, *p);
    return doc;
}

json cmd_coverage(const Settings& s) {
    const auto queries = read_lines(s.input("queries"));
    const auto store = load_store(s);
    return {{"coverage", knowledge_coverage(queries, store, parse_knowledge_source(s.str("source")))}};
}

json cmd_train(const Settings& s) {
    const auto data = load_dataset(s.input("dataset"));
    if (data.empty()) throw DataError(s.str("dataset") + ": empty dataset");
    TrainConfig tc;
    tc.batch_size = static_cast<int>(s.integer("batch-size"));
    tc.epochs = static_cast<int>(s.integer("epochs"));
    tc.optimizer.kind = parse_optimizer(s.str("optimizer"));
    tc.optimizer.learning_rate = s.real("lr");
    tc.seed = seed_of(s);
    tc.mode = parse_train_mode(s.str("mode"));
    tc.encoder = encoder_config(s);

    std::optional<Model> base;
    if (auto p = s.optional_input("base")) base = load_checkpoint(*p);
    if (tc.mode == TrainMode::continual_adapters && !base)
        throw UsageError("--mode continual_adapters requires --base");

    Vocabulary vocab;
    if (base) {
        vocab = base->vocab;
    } else {
        std::vector<std::string> texts;
        for (const auto& t : data) texts.push_back(t.text);
        const auto store = load_store(s);
        for (const auto& r : store.wordnet().records()) {
            for (const auto& l : r.lemmas) texts.push_back(l);
            texts.push_back(r.definition);
        }
        for (const auto& e : store.dictionary().entries()) {
            texts.push_back(e.term);
            texts.insert(texts.end(), e.senses.begin(), e.senses.end());
        }
        vocab = Vocabulary::from_texts(texts);
    }

    const auto result = train(tc, data, vocab, base ? &*base : nullptr);
    save_checkpoint(result.model, s.str("out"));
    if (auto p = s.path("trace")) write_trace_csv(result.trace, *p);
    json summary{{"steps", result.trace.size()},
                 {"samples", result.samples_seen},
                 {"routed_vanilla", result.routed.vanilla},
                 {"routed_knowledge", result.routed.knowledge},
                 {"out", s.str("out")}};
    if (!result.trace.empty()) {
        summary["final_loss"] = result.trace.back().loss.total;
        summary["tau"] = result.trace.back().tau;
    }
    return summary;
}

json cmd_eval_zeroshot(const Settings& s) {
    const Model model = load_checkpoint(s.input("checkpoint"));
    const auto data = load_dataset(s.input("dataset"));
    const auto classes = read_lines(s.input("classes"));
    if (classes.empty()) throw DataError(s.str("classes") + ": no classes");
    const auto store = load_store(s);

    ClassEmbeddingOptions opts;
    opts.with_knowledge = s.flag("with-knowledge");
    opts.source = parse_knowledge_source(s.str("source"));
    opts.branch_mode = parse_branch_mode(s.str("branch-mode"));
    opts.max_tokens = static_cast<std::size_t>(s.integer("max-tokens"));
    if (auto p = s.optional_input("templates")) opts.templates = load_templates(*p);

    std::map<std::string, int> index;
    for (std::size_t c = 0; c < classes.size(); ++c) index.emplace(normalize_query(classes[c]), static_cast<int>(c));
    std::vector<Vector> images;
    std::vector<int> labels;
    for (const auto& t : data) {
        auto it = index.find(normalize_query(t.text));
        if (it == index.end()) throw DataError(s.str("dataset") + ": text '" + t.text + "' is not a listed class");
        images.push_back(t.image);
        labels.push_back(it->second);
    }
    if (images.empty()) throw DataError(s.str("dataset") + ": empty dataset");

    const auto embeddings = build_class_embeddings(model, classes, store, opts);
    const auto result = zero_shot_classify(model.params, images, embeddings, labels);

    EvalReport report;
    report.top1 = result.accuracy;
    report.per_class = result.per_class_accuracy;
    report.knowledge_coverage = 100.0 * knowledge_coverage(classes, store, opts.source);
    if (auto p = s.optional_input("pretrain-concepts")) report.concept_overlap = concept_overlap(read_lines(*p), classes);
    json resolved(s.all());
    for (const char* k : {"report", "breakdown"}) resolved.erase(k);
    report.config_digest = sha256_hex(resolved.dump());

    if (auto p = s.path("report")) write_eval_report(report, embeddings.names, *p);
    if (auto p = s.path("breakdown"))
        write_breakdown_csv({{s.str("name"), report.top1, report.concept_overlap, report.knowledge_coverage}}, *p);
    return {{"top1", report.top1},
            {"knowledge_coverage", report.knowledge_coverage},
            {"concept_overlap", report.concept_overlap},
            {"config_digest", report.config_digest}};
}

json cmd_eval_probe(const Settings& s) {
    const Model model = load_checkpoint(s.input("checkpoint"));
    auto data = load_dataset(s.input("dataset"));
    assign_labels(data);
    std::vector<Vector> images;
    std::vector<int> labels;
    for (const auto& t : data) {
        images.push_back(t.image);
        labels.push_back(t.label);
    }
    ProbeConfig pc;
    pc.shots_per_class = static_cast<int>(s.integer("shots"));
    pc.seeds = static_cast<int>(s.integer("probe-seeds"));
    pc.seed = seed_of(s);
    pc.steps = static_cast<int>(s.integer("steps"));
    pc.learning_rate = s.real("lr");
    pc.l2 = s.real("l2");
    const auto result = linear_probe(image_features(model.params, images), labels, pc);
    const json doc{{"mean_accuracy", result.mean_accuracy}, {"per_seed", result.per_seed}};
    if (auto p = s.path("report")) write_json(doc, *p);
    return doc;
}

std::vector<std::string> category_texts(const Settings& s, const std::vector<std::string>& categories) {
    const auto store = load_store(s);
    std::vector<std::string> texts;
    for (const auto& c : compose_category_texts(categories, store, parse_knowledge_source(s.str("source")),
                                                s.flag("with-knowledge"),
                                                static_cast<std::size_t>(s.integer("max-tokens"))))
        texts.push_back(c.text);
    return texts;
}

json cmd_ground_train(const Settings& s) {
    Model model = load_checkpoint(s.input("checkpoint"));
    const auto regions = load_regions(s.input("regions"));
    const auto categories = read_lines(s.input("categories"));
    GroundTrainConfig gc;
    gc.epochs = static_cast<int>(s.integer("epochs"));
    gc.optimizer.kind = parse_optimizer(s.str("optimizer"));
    gc.optimizer.learning_rate = s.real("lr");
    gc.focal.alpha = s.real("alpha");
    gc.focal.gamma = s.real("gamma");
    gc.seed = seed_of(s);
    gc.knowledge_branch = s.flag("knowledge-branch");
    gc.adapters_only = s.flag("adapters-only");
    const auto result = train_grounding(gc, std::move(model), regions, category_texts(s, categories));
    save_checkpoint(result.model, s.str("out"));
    if (auto p = s.path("trace")) {
        std::ofstream out(*p, std::ios::binary);
        if (!out) throw DataError("cannot write " + p->string());
        out << "step,loss\n";
        char buf[64];
        for (std::size_t i = 0; i < result.loss_trace.size(); ++i) {
            std::snprintf(buf, sizeof buf, "%zu,%.17g\n", i, result.loss_trace[i]);
            out << buf;
        }
    }
    json summary{{"steps", result.loss_trace.size()}, {"out", s.str("out")}};
    if (!result.loss_trace.empty()) summary["final_loss"] = result.loss_trace.back();
    return summary;
}

json cmd_ground_eval(const Settings& s) {
    const Model model = load_checkpoint(s.input("checkpoint"));
    const auto regions = load_regions(s.input("regions"));
    const auto categories = read_lines(s.input("categories"));
    const auto bank = encode_phrases_parallel(model.params, model.vocab, categories, category_texts(s, categories),
                                              s.flag("knowledge-branch"));
    std::size_t total = 0, labelled = 0, correct = 0;
    json predictions = json::array();
    for (const auto& r : regions) {
        const auto preds = zero_shot_region_classify(model.params, r.features, bank);
        for (std::size_t m = 0; m < preds.size(); ++m) {
            ++total;
            predictions.push_back({{"image_id", r.image_id},
                                   {"region", m},
                                   {"category", categories[static_cast<std::size_t>(preds[m].category)]},
                                   {"score", preds[m].score}});
            if (r.targets.size() == 0) continue;
            if (r.targets.cols() != static_cast<Eigen::Index>(categories.size()))
                throw DataError(s.str("regions") + ": targets need one column per category");
            const auto row = static_cast<Eigen::Index>(m);
            if (r.targets.row(row).sum() == 0.0) continue;
            ++labelled;
            correct += r.targets(row, preds[m].category) == 1.0;
        }
    }
    if (auto p = s.path("out")) {
        std::ofstream out(*p, std::ios::binary);
        if (!out) throw DataError("cannot write " + p->string());
        for (const auto& pred : predictions) out << pred.dump() << '\n';
    }
    json summary{{"regions", total}, {"labelled", labelled}};
    summary["accuracy"] = labelled ? double(correct) / double(labelled) : 0.0;
    return summary;
}

json cmd_bench_synth(const Settings& s) {
    SynthBenchConfig bc;
    bc.seeds = static_cast<int>(s.integer("seeds"));
    bc.base_seed = seed_of(s);
    bc.empty_knowledge = s.flag("empty-knowledge");
    if (s.has("epochs")) bc.train.epochs = static_cast<int>(s.integer("epochs"));
    const json doc = to_json(run_synth_bench(bc));
    if (auto p = s.path("out")) write_json(doc, *p);
    return {{"seeds", bc.seeds},
            {"knowledge_wins", doc["knowledge_wins"]},
            {"consistency_holds", doc["consistency_holds"]},
            {"mean_gap", doc["mean_gap"]}};
}

json dispatch(const std::string& name, const Settings& s) {
    if (name == "augment") return cmd_augment(s);
    if (name == "stats") return cmd_stats(s);
    if (name == "coverage") return cmd_coverage(s);
    if (name == "train") return cmd_train(s);
    if (name == "eval-zeroshot") return cmd_eval_zeroshot(s);
    if (name == "eval-probe") return cmd_eval_probe(s);
    if (name == "ground-train") return cmd_ground_train(s);
    if (name == "ground-eval") return cmd_ground_eval(s);
    return cmd_bench_synth(s);
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"knowledge-augmented language-image pretraining toolkit", "klite"};
    app.require_subcommand(1);
    const auto specs = commands();
    std::map<std::string, std::map<std::string, std::string>> given;
    std::map<std::string, std::map<std::string, CLI::Option*>> options;
    std::map<std::string, std::string> config_path;
    for (const auto& cmd : specs) {
        auto* sub = app.add_subcommand(cmd.name, cmd.description);
        sub->add_option("--config", config_path[cmd.name], "flat key=value configuration file");
        for (const auto& key : cmd.keys) {
            std::string help = key.help;
            if (!key.fallback.empty()) help += (help.empty() ? "" : " ") + std::string("(default ") + key.fallback + ")";
            options[cmd.name][key.name] = sub->add_option("--" + key.name, given[cmd.name][key.name], help);
        }
    }

    std::vector<std::string> argv_store{"klite"};
    argv_store.insert(argv_store.end(), args.begin(), args.end());
    std::vector<char*> argv;
    for (auto& a : argv_store) argv.push_back(a.data());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n" << app.help();
        return 1;
    }

    const auto* chosen = app.get_subcommands().front();
    const std::string name = chosen->get_name();
    const auto& spec = *std::find_if(specs.begin(), specs.end(), [&](const Command& c) { return c.name == name; });
    try {
        std::set<std::string> known;
        for (const auto& k : spec.keys) known.insert(k.name);
        std::map<std::string, std::string> file;
        if (!config_path[name].empty()) file = read_config(config_path[name], known);

        // Precedence: command line, then environment, then config file, then default.
        std::map<std::string, std::string> resolved;
        for (const auto& k : spec.keys) {
            std::string v = k.fallback;
            if (auto it = file.find(k.name); it != file.end()) v = it->second;
            if (const char* e = std::getenv(env_name(k.name).c_str())) v = e;
            if (options[name][k.name]->count() > 0) v = given[name][k.name];
            resolved[k.name] = v;
        }
        for (const auto& r : spec.required) {
            if (resolved[r].empty()) throw UsageError(name + ": --" + r + " is required");
        }
        out << dispatch(name, Settings(std::move(resolved))).dump() << '\n';
        return 0;
    } catch (const UsageError& e) {
        err << "error: " << e.what() << "\n" << chosen->help();
        return 1;
    } catch (const ParseError& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    } catch (const DataError& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    } catch (const NumericError& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    } catch (const TrainingError& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::filesystem::filesystem_error& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    } catch (const nlohmann::json::exception& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    }
}

}  // namespace klite
