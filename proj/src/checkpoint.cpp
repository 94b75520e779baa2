#include "klite/checkpoint.hpp"

#include <fstream>

#include "json.hpp"
#include "klite/error.hpp"

namespace klite {

using json = nlohmann::json;

namespace {

json config_to_json(const EncoderConfig& c) {
    return {{"embed_dim", c.embed_dim},
            {"text_layers", c.text_layers},
            {"heads", c.heads},
            {"hidden", c.hidden},
            {"vocab_size", c.vocab_size},
            {"max_tokens", c.max_tokens},
            {"adapter_bottleneck", c.adapter_bottleneck},
            {"image_input_dim", c.image_input_dim},
            {"image_hidden", c.image_hidden}};
}

EncoderConfig config_from_json(const json& j) {
    EncoderConfig c;
    c.embed_dim = j.at("embed_dim").get<int>();
    c.text_layers = j.at("text_layers").get<int>();
    c.heads = j.at("heads").get<int>();
    c.hidden = j.at("hidden").get<int>();
    c.vocab_size = j.at("vocab_size").get<int>();
    c.max_tokens = j.at("max_tokens").get<int>();
    c.adapter_bottleneck = j.at("adapter_bottleneck").get<int>();
    c.image_input_dim = j.at("image_input_dim").get<int>();
    c.image_hidden = j.at("image_hidden").get<int>();
    return c;
}

}  // namespace

void save_checkpoint(const Model& model, const std::filesystem::path& path) {
    json tensors = json::object();
    for (const auto& ref : list_tensors(model.params)) {
        const Tensor& t = *ref.tensor;
        std::vector<double> row_major;
        row_major.reserve(static_cast<std::size_t>(t.size()));
        for (Eigen::Index r = 0; r < t.rows(); ++r) {
            for (Eigen::Index c = 0; c < t.cols(); ++c) row_major.push_back(t(r, c));
        }
        tensors[ref.name] = {{"rows", t.rows()}, {"cols", t.cols()}, {"data", std::move(row_major)}};
    }
    const json doc{{"format", "klite-checkpoint"},
                   {"version", kCheckpointVersion},
                   {"seed", model.seed},
                   {"config", config_to_json(model.params.config)},
                   {"adapters", model.params.has_adapters()},
                   {"vocab", {{"oov_buckets", model.vocab.oov_buckets()}, {"words", model.vocab.words()}}},
                   {"tensors", std::move(tensors)}};
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write checkpoint: " + path.string());
    out << doc.dump() << '\n';
}

Model load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open checkpoint: " + path.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
    try {
        if (doc.at("format") != "klite-checkpoint") throw DataError(path.string() + ": not a klite checkpoint");
        if (doc.at("version").get<int>() != kCheckpointVersion) {
            throw DataError(path.string() + ": unsupported checkpoint version");
        }
        Model model;
        model.seed = doc.at("seed").get<std::uint64_t>();
        model.vocab = Vocabulary(doc.at("vocab").at("words").get<std::vector<std::string>>(),
                                 doc.at("vocab").at("oov_buckets").get<std::size_t>());
        // Build the layout, then overwrite every tensor from the file.
        model.params = init_params(config_from_json(doc.at("config")), 0);
        if (doc.at("adapters").get<bool>()) enable_adapters(model.params, 0);
        const auto& tensors = doc.at("tensors");
        for (auto& ref : list_tensors(model.params)) {
            const auto& t = tensors.at(ref.name);
            const auto rows = t.at("rows").get<Eigen::Index>();
            const auto cols = t.at("cols").get<Eigen::Index>();
            if (rows != ref.tensor->rows() || cols != ref.tensor->cols()) {
                throw DataError(path.string() + ": tensor '" + ref.name + "' has the wrong shape");
            }
            const auto data = t.at("data").get<std::vector<double>>();
            if (data.size() != static_cast<std::size_t>(rows * cols)) {
                throw DataError(path.string() + ": tensor '" + ref.name + "' has the wrong size");
            }
            for (Eigen::Index r = 0; r < rows; ++r) {
                for (Eigen::Index c = 0; c < cols; ++c) (*ref.tensor)(r, c) = data[static_cast<std::size_t>(r * cols + c)];
            }
        }
        if (tensors.size() != list_tensors(model.params).size()) {
            throw DataError(path.string() + ": unexpected extra tensors");
        }
        return model;
    } catch (const json::exception& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

}  // namespace klite
