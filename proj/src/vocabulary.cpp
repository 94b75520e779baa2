#include "klite/vocabulary.hpp"

#include <algorithm>
#include <set>

#include "klite/error.hpp"
#include "klite/query_builder.hpp"

namespace klite {

namespace {

std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace

Vocabulary::Vocabulary(std::vector<std::string> words, std::size_t oov_buckets)
    : words_(std::move(words)), oov_buckets_(oov_buckets) {
    if (oov_buckets_ == 0) throw DataError("vocabulary needs at least one OOV bucket");
    std::sort(words_.begin(), words_.end());
    words_.erase(std::unique(words_.begin(), words_.end()), words_.end());
    for (std::size_t i = 0; i < words_.size(); ++i) {
        index_.emplace(words_[i], static_cast<int>(kFirstBucket + oov_buckets_ + i));
    }
}

Vocabulary Vocabulary::from_texts(const std::vector<std::string>& texts, std::size_t oov_buckets) {
    std::set<std::string> words;
    for (const auto& t : texts) {
        for (auto& w : tokenize(t)) words.insert(std::move(w));
    }
    return Vocabulary(std::vector<std::string>(words.begin(), words.end()), oov_buckets);
}

int Vocabulary::id(std::string_view token) const {
    auto it = index_.find(std::string(token));
    if (it != index_.end()) return it->second;
    return kFirstBucket + static_cast<int>(fnv1a(token) % oov_buckets_);
}

std::vector<int> Vocabulary::encode(std::string_view text, Pooling pooling) const {
    std::vector<int> ids;
    if (pooling == Pooling::CLS) ids.push_back(kCls);
    for (const auto& t : tokenize(text)) ids.push_back(id(t));
    if (pooling == Pooling::EOS) ids.push_back(kEos);
    return ids;
}

}  // namespace klite
