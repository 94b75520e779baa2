#include "klite/query_builder.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>
#include <tuple>

#include "json.hpp"
#include "klite/error.hpp"

namespace klite {

using json = nlohmann::json;

namespace {

PosTag parse_tag(std::string_view s) {
    if (s == "NOUN") return PosTag::NOUN;
    if (s == "ADJ") return PosTag::ADJ;
    if (s == "NUM") return PosTag::NUM;
    if (s == "DET") return PosTag::DET;
    if (s == "OTHER") return PosTag::OTHER;
    throw ParseError("unknown POS tag '" + std::string(s) + "'");
}

bool is_punct(unsigned char c) { return std::ispunct(c) != 0; }

NounPhrase make_phrase(const std::vector<TaggedToken>& tagged, std::size_t begin, std::size_t end) {
    NounPhrase np;
    for (std::size_t i = begin; i < end; ++i) {
        if (i > begin) np.normalized += ' ';
        np.normalized += tagged[i].surface;
        np.tokens.push_back(tagged[i]);
    }
    return np;
}

std::size_t word_count(std::string_view s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), ' ')) + 1; }

}  // namespace

std::string_view to_string(PosTag tag) {
    switch (tag) {
        case PosTag::NOUN: return "NOUN";
        case PosTag::ADJ: return "ADJ";
        case PosTag::NUM: return "NUM";
        case PosTag::DET: return "DET";
        case PosTag::OTHER: return "OTHER";
    }
    return "OTHER";
}

TextKind parse_text_kind(std::string_view name) {
    if (name == "category") return TextKind::category;
    if (name == "caption") return TextKind::caption;
    throw DataError("unknown text kind: " + std::string(name));
}

std::string_view to_string(TextKind kind) { return kind == TextKind::category ? "category" : "caption"; }

std::string_view to_string(QueryOrigin origin) {
    switch (origin) {
        case QueryOrigin::category: return "category";
        case QueryOrigin::caption_np: return "caption_np";
        case QueryOrigin::caption_fallback: return "caption_fallback";
    }
    return "category";
}

Lexicon Lexicon::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open lexicon: " + path.string());
    std::unordered_map<std::string, PosTag> entries;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos || tab == 0 || tab + 1 == line.size()) {
            throw ParseError(path.string() + ": expected 'token<TAB>TAG'", lineno);
        }
        std::string token = line.substr(0, tab);
        std::transform(token.begin(), token.end(), token.begin(),
                       [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
        try {
            entries[token] = parse_tag(line.substr(tab + 1));
        } catch (const ParseError& e) {
            throw ParseError(path.string() + ": " + e.what(), lineno);
        }
    }
    return Lexicon(std::move(entries));
}

PosTag Lexicon::tag(std::string_view token) const {
    auto it = entries_.find(std::string(token));
    return it == entries_.end() ? PosTag::NOUN : it->second;
}

std::size_t FrequencyTable::count(std::string_view phrase) const {
    auto it = counts_.find(phrase);
    return it == counts_.end() ? 0 : it->second;
}

void FrequencyTable::add(const std::string& phrase, std::size_t n) {
    if (n > 0) counts_[phrase] += n;
}

void FrequencyTable::merge(const FrequencyTable& other) {
    for (const auto& [phrase, n] : other.counts_) counts_[phrase] += n;
    total_docs_ += other.total_docs_;
}

void FrequencyTable::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write frequency table: " + path.string());
    out << json{{"total_docs", total_docs_}}.dump() << '\n';
    for (const auto& [phrase, n] : counts_) out << json{{"phrase", phrase}, {"count", n}}.dump() << '\n';
}

FrequencyTable FrequencyTable::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open frequency table: " + path.string());
    FrequencyTable table;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            const auto obj = json::parse(line);
            if (obj.contains("total_docs")) {
                table.total_docs_ = obj.at("total_docs").get<std::size_t>();
                continue;
            }
            const auto n = obj.at("count").get<std::size_t>();
            if (n == 0) throw ParseError(path.string() + ": zero count", lineno);
            table.counts_[obj.at("phrase").get<std::string>()] = n;
        } catch (const json::exception& e) {
            throw ParseError(path.string() + ": " + e.what(), lineno);
        }
    }
    return table;
}

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> out;
    std::istringstream in{std::string(text)};
    for (std::string w; in >> w;) {
        std::size_t b = 0, e = w.size();
        while (b < e && is_punct(static_cast<unsigned char>(w[b]))) ++b;
        while (e > b && is_punct(static_cast<unsigned char>(w[e - 1]))) --e;
        if (b == e) continue;
        std::string token = w.substr(b, e - b);
        std::transform(token.begin(), token.end(), token.begin(),
                       [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
        out.push_back(std::move(token));
    }
    return out;
}

std::vector<TaggedToken> pos_tag(const std::vector<std::string>& tokens, const Lexicon& lexicon) {
    std::vector<TaggedToken> out;
    out.reserve(tokens.size());
    for (const auto& t : tokens) out.push_back({t, lexicon.tag(t)});
    return out;
}

namespace {

std::vector<NounPhrase> chunk(const std::vector<TaggedToken>& tagged, bool dedup) {
    std::vector<NounPhrase> out;
    auto emit = [&](NounPhrase np) {
        const bool seen = dedup && std::any_of(out.begin(), out.end(), [&](const NounPhrase& p) {
                              return p.normalized == np.normalized;
                          });
        if (!seen) out.push_back(std::move(np));
    };

    const std::size_t n = tagged.size();
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        if (tagged[j].tag == PosTag::DET) ++j;
        while (j < n && (tagged[j].tag == PosTag::ADJ || tagged[j].tag == PosTag::NUM)) ++j;
        const std::size_t head = j;
        while (j < n && tagged[j].tag == PosTag::NOUN) ++j;
        if (j == head) {
            ++i;
            continue;
        }
        emit(make_phrase(tagged, i, j));
        if (head != i) emit(make_phrase(tagged, head, j));
        i = j;
    }
    return out;
}

}  // namespace

std::vector<NounPhrase> chunk_noun_phrases(const std::vector<TaggedToken>& tagged) { return chunk(tagged, true); }

FrequencyTable build_frequency_table(const std::vector<std::string>& corpus, const Lexicon& lexicon) {
    if (corpus.empty()) throw DataError("build_frequency_table: empty corpus");
    FrequencyTable table;
    for (const auto& caption : corpus) {
        for (const auto& np : chunk(pos_tag(tokenize(caption), lexicon), false)) table.add(np.normalized);
    }
    table.set_total_docs(corpus.size());
    return table;
}

Query construct_query(std::string_view text, TextKind kind, const FrequencyTable& freq, const Lexicon& lexicon) {
    const auto tokens = tokenize(text);
    if (tokens.empty()) throw DataError("construct_query: empty text");

    std::string lowered;
    for (const auto& t : tokens) lowered += (lowered.empty() ? "" : " ") + t;
    if (kind == TextKind::category) {
        std::string verbatim(text);
        std::transform(verbatim.begin(), verbatim.end(), verbatim.begin(),
                       [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
        return {verbatim, QueryOrigin::category};
    }

    const auto phrases = chunk_noun_phrases(pos_tag(tokens, lexicon));
    if (phrases.empty()) {
        // Any NOUN token forms a phrase on its own, so an NP-less caption has no nouns either.
        return {lowered, QueryOrigin::caption_fallback};
    }
    auto rarer = [&](const NounPhrase& a, const NounPhrase& b) {
        const auto ka = std::make_tuple(freq.count(a.normalized), -static_cast<long>(word_count(a.normalized)));
        const auto kb = std::make_tuple(freq.count(b.normalized), -static_cast<long>(word_count(b.normalized)));
        if (ka != kb) return ka < kb;
        return a.normalized < b.normalized;
    };
    const auto best = std::min_element(phrases.begin(), phrases.end(), rarer);
    return {best->normalized, QueryOrigin::caption_np};
}

}  // namespace klite
