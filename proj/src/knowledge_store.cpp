#include "klite/knowledge_store.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <array>
#include <cctype>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "json.hpp"
#include "klite/error.hpp"

namespace klite {

using json = nlohmann::json;

namespace {

constexpr std::array<std::string_view, 18> kDeterminers = {
    "a", "an", "the", "this", "that", "these", "those", "some", "any",
    "each", "every", "my", "your", "his", "her", "its", "our", "their"};

std::vector<std::string> split_words(std::string_view s) {
    std::vector<std::string> out;
    std::istringstream in{std::string(s)};
    for (std::string w; in >> w;) out.push_back(std::move(w));
    return out;
}

std::string join(const std::vector<std::string>& words, std::string_view sep, std::size_t from = 0) {
    std::string out;
    for (std::size_t i = from; i < words.size(); ++i) {
        if (i > from) out += sep;
        out += words[i];
    }
    return out;
}

std::string to_lemma_key(std::string_view normalized) { return join(split_words(normalized), "_"); }

template <typename Fn>
void for_each_json_line(const std::filesystem::path& path, Fn&& fn) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open snapshot: " + path.string());
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (std::all_of(line.begin(), line.end(), [](unsigned char c) { return std::isspace(c); })) continue;
        json obj;
        try {
            obj = json::parse(line);
        } catch (const json::parse_error& e) {
            throw ParseError(path.string() + ": invalid JSON: " + e.what(), lineno);
        }
        if (!obj.is_object()) throw ParseError(path.string() + ": expected a JSON object", lineno);
        fn(obj, lineno);
    }
}

std::vector<std::string> string_list(const json& obj, const char* field, const std::filesystem::path& path,
                                     std::size_t lineno) {
    auto it = obj.find(field);
    if (it == obj.end() || !it->is_array()) {
        throw ParseError(path.string() + ": missing or non-array field '" + field + "'", lineno);
    }
    std::vector<std::string> out;
    for (const auto& v : *it) {
        if (!v.is_string()) throw ParseError(path.string() + ": non-string entry in '" + field + "'", lineno);
        out.push_back(v.get<std::string>());
    }
    return out;
}

std::string string_field(const json& obj, const char* field, const std::filesystem::path& path,
                         std::size_t lineno) {
    auto it = obj.find(field);
    if (it == obj.end() || !it->is_string()) {
        throw ParseError(path.string() + ": missing or non-string field '" + field + "'", lineno);
    }
    return it->get<std::string>();
}

}  // namespace

std::string_view to_string(KnowledgeSource source) {
    switch (source) {
        case KnowledgeSource::wn_hier: return "wn_hier";
        case KnowledgeSource::wn_def: return "wn_def";
        case KnowledgeSource::wiki_def: return "wiki_def";
    }
    return "unknown";
}

KnowledgeSource parse_knowledge_source(std::string_view name) {
    if (name == "wn_hier") return KnowledgeSource::wn_hier;
    if (name == "wn_def") return KnowledgeSource::wn_def;
    if (name == "wiki_def") return KnowledgeSource::wiki_def;
    throw DataError("unknown knowledge source: " + std::string(name));
}

std::string normalize_query(std::string_view query) {
    std::string lowered(query);
    std::transform(lowered.begin(), lowered.end(), lowered.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return join(split_words(lowered), " ");
}

// ---------------------------------------------------------------------------------------------

WordNetGraph::WordNetGraph(std::vector<SynsetRecord> records) : records_(std::move(records)) {
    for (std::size_t i = 0; i < records_.size(); ++i) {
        const auto& r = records_[i];
        if (r.lemmas.empty()) throw DataError("synset '" + r.id + "' has no lemmas");
        if (!by_id_.emplace(r.id, i).second) throw DataError("duplicate synset id '" + r.id + "'");
        for (const auto& lemma : r.lemmas) by_lemma_.emplace(to_lemma_key(normalize_query(lemma)), i);
    }
    for (const auto& r : records_) {
        for (const auto& h : r.hypernym_ids) {
            if (!by_id_.contains(h)) throw DataError("synset '" + r.id + "' references unknown hypernym id '" + h + "'");
        }
    }
}

const SynsetRecord* WordNetGraph::find_lemma(std::string_view lemma) const {
    auto it = by_lemma_.find(std::string(lemma));
    return it == by_lemma_.end() ? nullptr : &records_[it->second];
}

const SynsetRecord* WordNetGraph::locate(std::string_view query) const {
    const auto words = split_words(normalize_query(query));
    if (words.empty()) return nullptr;
    if (const auto* hit = find_lemma(join(words, "_"))) return hit;
    if (words.size() > 1) return find_lemma(words.back());
    return nullptr;
}

std::vector<const SynsetRecord*> WordNetGraph::hypernym_path(const SynsetRecord& start) const {
    std::vector<const SynsetRecord*> path{&start};
    const SynsetRecord* node = &start;
    while (!node->hypernym_ids.empty()) {
        if (path.size() >= kMaxHierarchyHops) {
            throw DataError("hypernym chain from '" + start.id + "' exceeds " + std::to_string(kMaxHierarchyHops) +
                            " hops (cycle?)");
        }
        node = &records_[by_id_.at(node->hypernym_ids.front())];
        path.push_back(node);
    }
    return path;
}

Dictionary::Dictionary(std::vector<DictionaryEntry> entries) : entries_(std::move(entries)) {
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        const auto& e = entries_[i];
        if (e.senses.empty()) throw DataError("dictionary term '" + e.term + "' has no senses");
        if (!by_term_.emplace(normalize_query(e.term), i).second) {
            throw DataError("duplicate dictionary term '" + e.term + "'");
        }
    }
}

const DictionaryEntry* Dictionary::find(std::string_view term) const {
    auto it = by_term_.find(std::string(term));
    return it == by_term_.end() ? nullptr : &entries_[it->second];
}

WordNetGraph load_wordnet_snapshot(const std::filesystem::path& path) {
    std::vector<SynsetRecord> records;
    for_each_json_line(path, [&](const json& obj, std::size_t lineno) {
        SynsetRecord r;
        r.id = string_field(obj, "id", path, lineno);
        r.lemmas = string_list(obj, "lemmas", path, lineno);
        r.definition = string_field(obj, "definition", path, lineno);
        r.hypernym_ids = string_list(obj, "hypernym_ids", path, lineno);
        if (r.lemmas.empty()) throw ParseError(path.string() + ": empty 'lemmas'", lineno);
        for (auto& l : r.lemmas) l = normalize_query(l);
        records.push_back(std::move(r));
    });
    return WordNetGraph(std::move(records));
}

Dictionary load_wiktionary_snapshot(const std::filesystem::path& path) {
    std::vector<DictionaryEntry> entries;
    for_each_json_line(path, [&](const json& obj, std::size_t lineno) {
        DictionaryEntry e;
        e.term = normalize_query(string_field(obj, "term", path, lineno));
        e.senses = string_list(obj, "senses", path, lineno);
        if (e.senses.empty()) throw ParseError(path.string() + ": empty 'senses'", lineno);
        entries.push_back(std::move(e));
    });
    return Dictionary(std::move(entries));
}

// ---------------------------------------------------------------------------------------------

std::optional<KnowledgeItem> wn_hierarchy(const WordNetGraph& graph, std::string_view query) {
    const auto* synset = graph.locate(query);
    if (!synset) return std::nullopt;
    std::vector<std::string> names;
    for (const auto* node : graph.hypernym_path(*synset)) names.push_back(node->lemmas.front());
    return KnowledgeItem{normalize_query(query), KnowledgeSource::wn_hier, join(names, ", ")};
}

std::optional<KnowledgeItem> wn_definition(const WordNetGraph& graph, std::string_view query) {
    const auto* synset = graph.locate(query);
    if (!synset || synset->definition.empty()) return std::nullopt;
    return KnowledgeItem{normalize_query(query), KnowledgeSource::wn_def, synset->definition};
}

std::optional<KnowledgeItem> wiki_definition(const Dictionary& dict, std::string_view query) {
    const std::string normalized = normalize_query(query);
    const auto words = split_words(normalized);
    if (words.empty()) return std::nullopt;

    const DictionaryEntry* entry = dict.find(normalized);
    if (!entry && words.size() > 1 &&
        std::find(kDeterminers.begin(), kDeterminers.end(), words.front()) != kDeterminers.end()) {
        entry = dict.find(join(words, " ", 1));
    }
    if (!entry && words.size() > 1) entry = dict.find(words.back());
    if (!entry || entry->senses.front().empty()) return std::nullopt;
    return KnowledgeItem{normalized, KnowledgeSource::wiki_def, entry->senses.front()};
}

// ---------------------------------------------------------------------------------------------

KnowledgeStore::KnowledgeStore(WordNetGraph wordnet, Dictionary dictionary)
    : wordnet_(std::move(wordnet)), dictionary_(std::move(dictionary)) {}

KnowledgeStore KnowledgeStore::load(const std::optional<std::filesystem::path>& wordnet_path,
                                    const std::optional<std::filesystem::path>& wiktionary_path) {
    KnowledgeStore store;
    if (wordnet_path) {
        store.wordnet_ = load_wordnet_snapshot(*wordnet_path);
        store.digests_["wordnet"] = sha256_file(*wordnet_path);
    }
    if (wiktionary_path) {
        store.dictionary_ = load_wiktionary_snapshot(*wiktionary_path);
        store.digests_["wiktionary"] = sha256_file(*wiktionary_path);
    }
    return store;
}

std::optional<KnowledgeItem> KnowledgeStore::retrieve(std::string_view query, KnowledgeSource source) const {
    switch (source) {
        case KnowledgeSource::wn_hier: return wn_hierarchy(wordnet_, query);
        case KnowledgeSource::wn_def: return wn_definition(wordnet_, query);
        case KnowledgeSource::wiki_def: return wiki_definition(dictionary_, query);
    }
    return std::nullopt;
}

double knowledge_coverage(const std::vector<std::string>& queries, const KnowledgeStore& store,
                          KnowledgeSource source) {
    if (queries.empty()) throw DataError("knowledge_coverage: empty query list");
    const auto hits = std::count_if(queries.begin(), queries.end(),
                                    [&](const std::string& q) { return store.retrieve(q, source).has_value(); });
    return static_cast<double>(hits) / static_cast<double>(queries.size());
}

// ---------------------------------------------------------------------------------------------

std::optional<KnowledgeItem> KnowledgeCache::get(std::string_view query, KnowledgeSource source) {
    auto key = std::make_pair(normalize_query(query), source);
    auto it = entries_.find(key);
    if (it == entries_.end()) it = entries_.emplace(key, store_->retrieve(query, source)).first;
    return it->second;
}

const std::optional<KnowledgeItem>* KnowledgeCache::peek(std::string_view query, KnowledgeSource source) const {
    auto it = entries_.find({normalize_query(query), source});
    return it == entries_.end() ? nullptr : &it->second;
}

void KnowledgeCache::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write cache: " + path.string());
    out << json{{"snapshots", store_->digests()}}.dump() << '\n';
    for (const auto& [key, item] : entries_) {
        json line{{"query", key.first}, {"source", to_string(key.second)}};
        line["text"] = item ? json(item->text) : json(nullptr);
        out << line.dump() << '\n';
    }
}

void KnowledgeCache::load(const std::filesystem::path& path) {
    bool header = true;
    for_each_json_line(path, [&](const json& obj, std::size_t lineno) {
        if (header) {
            header = false;
            auto it = obj.find("snapshots");
            if (it == obj.end()) throw ParseError(path.string() + ": missing snapshot header", lineno);
            if (it->get<std::map<std::string, std::string>>() != store_->digests()) {
                throw DataError(path.string() + ": cache was built from different snapshots");
            }
            return;
        }
        const auto query = string_field(obj, "query", path, lineno);
        const auto source = parse_knowledge_source(string_field(obj, "source", path, lineno));
        auto it = obj.find("text");
        if (it == obj.end()) throw ParseError(path.string() + ": missing field 'text'", lineno);
        std::optional<KnowledgeItem> item;
        if (!it->is_null()) item = KnowledgeItem{query, source, it->get<std::string>()};
        entries_[{query, source}] = std::move(item);
    });
}

std::string sha256_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open file: " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return sha256_hex(buf.str());
}

std::string sha256_hex(std::string_view bytes) {
    std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
    unsigned int len = 0;
    EVP_Digest(bytes.data(), bytes.size(), md.data(), &len, EVP_sha256(), nullptr);
    std::ostringstream hex;
    for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << int(md[i]);
    return hex.str();
}

}  // namespace klite
