#pragma once

// Query construction: a category name is its own query; a caption is reduced to
// its rarest noun phrase, with rarity measured over a corpus frequency table.

#include <cstddef>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace klite {

enum class PosTag { NOUN, ADJ, NUM, DET, OTHER };

std::string_view to_string(PosTag tag);

struct TaggedToken {
    std::string surface;
    PosTag tag;

    friend bool operator==(const TaggedToken&, const TaggedToken&) = default;
};

struct NounPhrase {
    std::vector<TaggedToken> tokens;
    std::string normalized;
};

// Token -> tag. Unknown tokens are tagged NOUN.
class Lexicon {
public:
    Lexicon() = default;
    explicit Lexicon(std::unordered_map<std::string, PosTag> entries) : entries_(std::move(entries)) {}

    // TSV "token<TAB>TAG". Throws ParseError on malformed lines or unknown tags.
    static Lexicon load(const std::filesystem::path& path);

    PosTag tag(std::string_view token) const;
    void set(std::string token, PosTag tag) { entries_[std::move(token)] = tag; }

private:
    std::unordered_map<std::string, PosTag> entries_;
};

class FrequencyTable {
public:
    // 0 for phrases never seen.
    std::size_t count(std::string_view phrase) const;
    void add(const std::string& phrase, std::size_t n = 1);
    void merge(const FrequencyTable& other);

    const std::map<std::string, std::size_t, std::less<>>& counts() const { return counts_; }
    std::size_t total_docs() const { return total_docs_; }
    void set_total_docs(std::size_t n) { total_docs_ = n; }

    // JSONL: header {"total_docs": N} then {"phrase": ..., "count": ...} per line, sorted by phrase.
    void save(const std::filesystem::path& path) const;
    static FrequencyTable load(const std::filesystem::path& path);

private:
    std::map<std::string, std::size_t, std::less<>> counts_;
    std::size_t total_docs_ = 0;
};

enum class TextKind { category, caption };
enum class QueryOrigin { category, caption_np, caption_fallback };

TextKind parse_text_kind(std::string_view name);
std::string_view to_string(TextKind kind);
std::string_view to_string(QueryOrigin origin);

struct Query {
    std::string text;
    QueryOrigin origin;
};

// Lowercase whitespace split with leading/trailing punctuation stripped per token.
std::vector<std::string> tokenize(std::string_view text);

std::vector<TaggedToken> pos_tag(const std::vector<std::string>& tokens, const Lexicon& lexicon);

// Maximal left-to-right matches of DET? (ADJ|NUM)* NOUN+, each followed by its bare
// NOUN+ head when that differs. Duplicates removed, first occurrence kept.
std::vector<NounPhrase> chunk_noun_phrases(const std::vector<TaggedToken>& tagged);

// One count per noun-phrase occurrence. Throws DataError on an empty corpus.
FrequencyTable build_frequency_table(const std::vector<std::string>& corpus, const Lexicon& lexicon);

// Throws DataError on empty text.
Query construct_query(std::string_view text, TextKind kind, const FrequencyTable& freq, const Lexicon& lexicon);

}  // namespace klite
