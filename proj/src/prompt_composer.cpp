#include "klite/prompt_composer.hpp"

#include <fstream>
#include <sstream>

#include "klite/error.hpp"
#include "klite/query_builder.hpp"

namespace klite {

PromptTemplate::PromptTemplate(std::string pattern) : pattern_(std::move(pattern)) {
    slot_ = pattern_.find("{}");
    if (slot_ == std::string::npos || pattern_.find("{}", slot_ + 2) != std::string::npos) {
        throw DataError("prompt template must contain exactly one '{}': \"" + pattern_ + "\"");
    }
}

std::string PromptTemplate::apply(std::string_view query) const {
    std::string out(prefix());
    out += query;
    out += suffix();
    return out;
}

std::vector<PromptTemplate> load_templates(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open template file: " + path.string());
    std::vector<PromptTemplate> out;
    for (std::string line; std::getline(in, line);) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty()) out.emplace_back(line);
    }
    if (out.empty()) throw DataError("template file has no patterns: " + path.string());
    return out;
}

std::string_view to_string(CompositionScheme scheme) {
    switch (scheme) {
        case CompositionScheme::class_eq2: return "class_eq2";
        case CompositionScheme::caption_concat: return "caption_concat";
        case CompositionScheme::caption_combine_member: return "caption_combine_member";
        case CompositionScheme::od_plain: return "od_plain";
    }
    return "class_eq2";
}

CaptionScheme parse_caption_scheme(std::string_view name) {
    if (name == "concat") return CaptionScheme::concat;
    if (name == "combine") return CaptionScheme::combine;
    throw DataError("unknown caption scheme: " + std::string(name));
}

std::string_view to_string(CaptionScheme scheme) { return scheme == CaptionScheme::concat ? "concat" : "combine"; }

std::string render(const TextParts& parts) {
    if (!parts.knowledge) {
        if (parts.prompt) return *parts.prompt;
        if (parts.original_caption) return *parts.original_caption;
        return parts.query;
    }
    std::string out;
    auto append = [&](const std::string& s) {
        if (!out.empty()) out += kPartSeparator;
        out += s;
    };
    if (parts.prompt) append(*parts.prompt);
    if (parts.original_caption) append(*parts.original_caption);
    append(parts.query);
    append(*parts.knowledge);
    return out;
}

TextParts decompose(std::string_view text, CompositionScheme scheme, std::string_view query,
                    const PromptTemplate& tmpl) {
    auto fail = [&] {
        return DataError("text \"" + std::string(text) + "\" does not match scheme " + std::string(to_string(scheme)));
    };
    const std::string sep(kPartSeparator);
    TextParts parts;
    parts.query = std::string(query);

    // Everything after the "{head}, {q}, " marker is knowledge.
    auto split_knowledge = [&](std::string_view head_and_rest, std::string& head) -> bool {
        const std::string marker = sep + std::string(query) + sep;
        const auto at = head_and_rest.find(marker);
        if (at == std::string_view::npos) return false;
        head = std::string(head_and_rest.substr(0, at));
        parts.knowledge = std::string(head_and_rest.substr(at + marker.size()));
        return true;
    };

    switch (scheme) {
        case CompositionScheme::class_eq2: {
            const std::string prompt = tmpl.apply(query);
            if (text == prompt) {
                parts.prompt = prompt;
                return parts;
            }
            if (text.substr(0, prompt.size()) != prompt) throw fail();
            const std::string marker = sep + std::string(query) + sep;
            if (text.substr(prompt.size(), marker.size()) != marker) throw fail();
            parts.prompt = prompt;
            parts.knowledge = std::string(text.substr(prompt.size() + marker.size()));
            return parts;
        }
        case CompositionScheme::od_plain:
        case CompositionScheme::caption_combine_member: {
            const std::string lead = std::string(query) + sep;
            if (text.substr(0, lead.size()) == lead) {
                parts.knowledge = std::string(text.substr(lead.size()));
                return parts;
            }
            if (scheme == CompositionScheme::od_plain) {
                if (text != query) throw fail();
                return parts;
            }
            [[fallthrough]];
        }
        case CompositionScheme::caption_concat: {
            std::string caption;
            if (split_knowledge(text, caption)) {
                parts.original_caption = caption;
            } else {
                parts.original_caption = std::string(text);
            }
            return parts;
        }
    }
    throw fail();
}

namespace {

std::size_t count_tokens(const TextParts& parts) { return tokenize(render(parts)).size() + 1; }

// Drops trailing knowledge words until the rendered text fits; knowledge that shrinks
// to nothing is treated as absent.
void fit_knowledge(TextParts& parts, std::size_t max_tokens) {
    if (!parts.knowledge || count_tokens(parts) <= max_tokens) return;
    std::vector<std::string> words;
    std::istringstream in(*parts.knowledge);
    for (std::string w; in >> w;) words.push_back(std::move(w));
    while (!words.empty()) {
        words.pop_back();
        std::string joined;
        for (const auto& w : words) joined += (joined.empty() ? "" : " ") + w;
        parts.knowledge = joined;
        if (tokenize(joined).empty()) continue;
        if (count_tokens(parts) <= max_tokens) return;
    }
    parts.knowledge.reset();
}

std::optional<std::string> non_empty(const std::optional<std::string>& s) {
    if (s && !tokenize(*s).empty()) return s;
    return std::nullopt;
}

void require_query(std::string_view query) {
    if (tokenize(query).empty()) throw DataError("empty query");
}

}  // namespace

AugmentedText compose_class_text(const PromptTemplate& tmpl, std::string_view query,
                                 const std::optional<std::string>& knowledge, std::size_t max_tokens) {
    require_query(query);
    TextParts parts{tmpl.apply(query), std::nullopt, std::string(query), non_empty(knowledge)};
    fit_knowledge(parts, max_tokens);
    return {render(parts), parts, CompositionScheme::class_eq2};
}

std::vector<AugmentedText> compose_caption_texts(std::string_view caption, std::string_view query,
                                                 const std::optional<std::string>& knowledge, CaptionScheme scheme,
                                                 std::size_t max_tokens) {
    if (tokenize(caption).empty()) throw DataError("empty caption");
    const auto s = non_empty(knowledge);
    if (!s) {
        TextParts parts{std::nullopt, std::string(caption), std::string(query), std::nullopt};
        return {{render(parts), parts, CompositionScheme::caption_concat}};
    }

    TextParts with_caption{std::nullopt, std::string(caption), std::string(query), s};
    fit_knowledge(with_caption, max_tokens);
    if (scheme == CaptionScheme::concat) {
        return {{render(with_caption), with_caption, CompositionScheme::caption_concat}};
    }
    TextParts bare{std::nullopt, std::nullopt, std::string(query), s};
    fit_knowledge(bare, max_tokens);
    return {{render(bare), bare, CompositionScheme::caption_combine_member},
            {render(with_caption), with_caption, CompositionScheme::caption_combine_member}};
}

AugmentedText compose_od_text(std::string_view query, const std::optional<std::string>& knowledge,
                              std::size_t max_tokens) {
    require_query(query);
    TextParts parts{std::nullopt, std::nullopt, std::string(query), non_empty(knowledge)};
    fit_knowledge(parts, max_tokens);
    return {render(parts), parts, CompositionScheme::od_plain};
}

}  // namespace klite
