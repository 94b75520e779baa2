#pragma once

// External knowledge sources: WordNet and Wiktionary snapshots stored as JSONL.
//
// WordNet snapshot line:   {"id": ..., "lemmas": [...], "definition": ..., "hypernym_ids": [...]}
// Wiktionary snapshot line: {"term": ..., "senses": [...]}
//
// Word-sense disambiguation is "first wins": the first synset listing a lemma (in
// file order) and the first sense of a dictionary entry are the retrieval targets.

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace klite {

enum class KnowledgeSource { wn_hier, wn_def, wiki_def };

std::string_view to_string(KnowledgeSource source);
KnowledgeSource parse_knowledge_source(std::string_view name);

struct SynsetRecord {
    std::string id;
    std::vector<std::string> lemmas;
    std::string definition;
    std::vector<std::string> hypernym_ids;
};

struct DictionaryEntry {
    std::string term;
    std::vector<std::string> senses;
};

struct KnowledgeItem {
    std::string query;
    KnowledgeSource source;
    std::string text;

    friend bool operator==(const KnowledgeItem&, const KnowledgeItem&) = default;
};

// Maximum number of synsets visited on a hypernym walk; longer chains are treated as cycles.
inline constexpr std::size_t kMaxHierarchyHops = 32;

class WordNetGraph {
public:
    WordNetGraph() = default;
    // Validates ids and hypernym references. Throws DataError on duplicate or dangling ids.
    explicit WordNetGraph(std::vector<SynsetRecord> records);

    std::size_t size() const { return records_.size(); }
    const std::vector<SynsetRecord>& records() const { return records_; }

    // Exact lemma lookup (query already normalized to lowercase/underscore form).
    const SynsetRecord* find_lemma(std::string_view lemma) const;
    // Exact lookup, falling back to the head noun (last token) of a multi-word query.
    const SynsetRecord* locate(std::string_view query) const;

    // Walks first hypernyms from `start` to a root. Throws DataError when the
    // walk exceeds kMaxHierarchyHops.
    std::vector<const SynsetRecord*> hypernym_path(const SynsetRecord& start) const;

private:
    std::vector<SynsetRecord> records_;
    std::unordered_map<std::string, std::size_t> by_id_;
    std::unordered_map<std::string, std::size_t> by_lemma_;
};

class Dictionary {
public:
    Dictionary() = default;
    explicit Dictionary(std::vector<DictionaryEntry> entries);

    std::size_t size() const { return entries_.size(); }
    const DictionaryEntry* find(std::string_view term) const;
    const std::vector<DictionaryEntry>& entries() const { return entries_; }

private:
    std::vector<DictionaryEntry> entries_;
    std::unordered_map<std::string, std::size_t> by_term_;
};

WordNetGraph load_wordnet_snapshot(const std::filesystem::path& path);
Dictionary load_wiktionary_snapshot(const std::filesystem::path& path);

// Lowercase, trim, collapse internal whitespace runs to one space.
std::string normalize_query(std::string_view query);

std::optional<KnowledgeItem> wn_hierarchy(const WordNetGraph& graph, std::string_view query);
std::optional<KnowledgeItem> wn_definition(const WordNetGraph& graph, std::string_view query);
std::optional<KnowledgeItem> wiki_definition(const Dictionary& dict, std::string_view query);

// Both knowledge bases plus the digests of the snapshot files they came from.
// Immutable after construction; concurrent reads are safe.
class KnowledgeStore {
public:
    KnowledgeStore() = default;
    KnowledgeStore(WordNetGraph wordnet, Dictionary dictionary);

    static KnowledgeStore load(const std::optional<std::filesystem::path>& wordnet_path,
                               const std::optional<std::filesystem::path>& wiktionary_path);

    std::optional<KnowledgeItem> retrieve(std::string_view query, KnowledgeSource source) const;

    const WordNetGraph& wordnet() const { return wordnet_; }
    const Dictionary& dictionary() const { return dictionary_; }
    // "wordnet" / "wiktionary" -> sha256 hex of the snapshot file; empty when built in memory.
    const std::map<std::string, std::string>& digests() const { return digests_; }

private:
    WordNetGraph wordnet_;
    Dictionary dictionary_;
    std::map<std::string, std::string> digests_;
};

// Fraction of queries with a non-empty retrieval. Throws DataError on an empty list.
double knowledge_coverage(const std::vector<std::string>& queries, const KnowledgeStore& store,
                          KnowledgeSource source);

// Memoized retrieval. A cached miss (std::nullopt) is distinct from "never queried".
class KnowledgeCache {
public:
    explicit KnowledgeCache(const KnowledgeStore& store) : store_(&store) {}

    std::optional<KnowledgeItem> get(std::string_view query, KnowledgeSource source);
    // nullptr when (query, source) has not been looked up yet.
    const std::optional<KnowledgeItem>* peek(std::string_view query, KnowledgeSource source) const;
    std::size_t size() const { return entries_.size(); }

    // Header line {"snapshots": {...}} followed by {query, source, text|null} per entry.
    void save(const std::filesystem::path& path) const;
    // Throws DataError when the header digests do not match the bound store.
    void load(const std::filesystem::path& path);

private:
    const KnowledgeStore* store_;
    std::map<std::pair<std::string, KnowledgeSource>, std::optional<KnowledgeItem>> entries_;
};

std::string sha256_file(const std::filesystem::path& path);
std::string sha256_hex(std::string_view bytes);

}  // namespace klite
