#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace klite {

enum class Pooling { EOS, CLS };

// Whitespace-token vocabulary. Ids: 0 [PAD], 1 [CLS], 2 [EOS], then `oov_buckets`
// hashed ids for unknown words, then known words in lexicographic order.
class Vocabulary {
public:
    static constexpr int kPad = 0;
    static constexpr int kCls = 1;
    static constexpr int kEos = 2;
    static constexpr int kFirstBucket = 3;

    Vocabulary() : Vocabulary(std::vector<std::string>{}, 16) {}
    Vocabulary(std::vector<std::string> words, std::size_t oov_buckets);

    // Collects every token of every text (tokenized with klite::tokenize).
    static Vocabulary from_texts(const std::vector<std::string>& texts, std::size_t oov_buckets = 16);

    std::size_t size() const { return kFirstBucket + oov_buckets_ + words_.size(); }
    std::size_t oov_buckets() const { return oov_buckets_; }
    const std::vector<std::string>& words() const { return words_; }

    int id(std::string_view token) const;

    // EOS pooling appends [EOS]; CLS pooling prepends [CLS].
    std::vector<int> encode(std::string_view text, Pooling pooling) const;

private:
    std::vector<std::string> words_;
    std::size_t oov_buckets_;
    std::unordered_map<std::string, int> index_;
};

}  // namespace klite
