#pragma once

// Knowledge-augmented text composition. Components are joined with ", ":
//
//   class_eq2               "{prompt(q)}, {q}, {s}"   or "{prompt(q)}" without knowledge
//   caption_concat          "{t}, {q}, {s}"           or "{t}"
//   caption_combine_member  "{q}, {s}" and "{t}, {q}, {s}" (two texts), or "{t}"
//   od_plain                "{q}, {s}"                or "{q}"
//
// With knowledge absent every scheme degenerates to the knowledge-free input.

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace klite {

inline constexpr std::string_view kPartSeparator = ", ";
inline constexpr std::size_t kDefaultMaxTokens = 64;

class PromptTemplate {
public:
    // Throws DataError unless the pattern contains exactly one "{}".
    explicit PromptTemplate(std::string pattern);

    std::string apply(std::string_view query) const;
    const std::string& pattern() const { return pattern_; }
    std::string_view prefix() const { return std::string_view(pattern_).substr(0, slot_); }
    std::string_view suffix() const { return std::string_view(pattern_).substr(slot_ + 2); }

private:
    std::string pattern_;
    std::size_t slot_;
};

inline const PromptTemplate& default_template() {
    static const PromptTemplate t("a photo of a {}");
    return t;
}

// One pattern per non-empty line.
std::vector<PromptTemplate> load_templates(const std::filesystem::path& path);

enum class CompositionScheme { class_eq2, caption_concat, caption_combine_member, od_plain };
enum class CaptionScheme { concat, combine };

std::string_view to_string(CompositionScheme scheme);
CaptionScheme parse_caption_scheme(std::string_view name);
std::string_view to_string(CaptionScheme scheme);

struct TextParts {
    std::optional<std::string> prompt;
    std::optional<std::string> original_caption;
    std::string query;
    std::optional<std::string> knowledge;

    friend bool operator==(const TextParts&, const TextParts&) = default;
};

struct AugmentedText {
    std::string text;
    TextParts parts;
    CompositionScheme scheme;

    bool has_knowledge() const { return parts.knowledge.has_value(); }
};

// Joining rule shared by every scheme.
std::string render(const TextParts& parts);

// Inverse of render() for a known query. The caption and prompt must not contain
// ", {query}, "; knowledge may contain anything. Throws DataError when the text does
// not have the scheme's shape.
TextParts decompose(std::string_view text, CompositionScheme scheme, std::string_view query,
                    const PromptTemplate& tmpl = default_template());

// Throws DataError on an empty query. Knowledge words are dropped from the end until the
// text fits max_tokens (counting one pooling token); query and prompt are never cut.
AugmentedText compose_class_text(const PromptTemplate& tmpl, std::string_view query,
                                 const std::optional<std::string>& knowledge,
                                 std::size_t max_tokens = kDefaultMaxTokens);

std::vector<AugmentedText> compose_caption_texts(std::string_view caption, std::string_view query,
                                                 const std::optional<std::string>& knowledge, CaptionScheme scheme,
                                                 std::size_t max_tokens = kDefaultMaxTokens);

AugmentedText compose_od_text(std::string_view query, const std::optional<std::string>& knowledge,
                              std::size_t max_tokens = kDefaultMaxTokens);

}  // namespace klite
