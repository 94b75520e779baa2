#pragma once

// Versioned JSON checkpoint: encoder config, vocabulary, every tensor, and the seed.
// Doubles are written in shortest round-trip form, so a reload reproduces the
// forward pass bit for bit.

#include <cstdint>
#include <filesystem>

#include "klite/encoder.hpp"
#include "klite/vocabulary.hpp"

namespace klite {

inline constexpr int kCheckpointVersion = 1;

struct Model {
    ModelParams params;
    Vocabulary vocab;
    std::uint64_t seed = 0;
};

void save_checkpoint(const Model& model, const std::filesystem::path& path);
// Throws ParseError/DataError on malformed files or unsupported versions.
Model load_checkpoint(const std::filesystem::path& path);

}  // namespace klite
