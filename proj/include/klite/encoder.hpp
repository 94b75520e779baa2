#pragma once

// Dual encoders with hand-written reverse passes.
//
// Text: token + position embedding -> L pre-norm transformer blocks -> final layer norm
// at the pooling position -> linear projection to the embedding dimension. With
// adapters enabled, a bottleneck adapter (down, GELU, up, residual) follows both the
// attention and the MLP sublayer of every block. Adapter up-projections start at zero
// so the adapter branch initially computes exactly the base function.
//
// Image: two-layer GELU MLP over a precomputed feature vector.

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "klite/vocabulary.hpp"

namespace klite {

using Tensor = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct EncoderConfig {
    int embed_dim = 32;
    int text_layers = 2;
    int heads = 2;
    int hidden = 64;
    int vocab_size = 0;
    int max_tokens = 64;
    int adapter_bottleneck = 8;
    int image_input_dim = 0;
    int image_hidden = 64;

    // Throws DataError when a field is out of range.
    void validate() const;
    friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

struct AdapterParams {
    Tensor down, down_bias, up, up_bias;
};

struct BlockParams {
    Tensor ln1_gain, ln1_bias;
    Tensor wq, bq, wk, bk, wv, bv, wo, bo;
    Tensor ln2_gain, ln2_bias;
    Tensor w1, b1, w2, b2;
    AdapterParams attn_adapter, mlp_adapter;
};

struct ModelParams {
    EncoderConfig config;
    Tensor token_embedding, position_embedding;
    std::vector<BlockParams> blocks;
    Tensor final_ln_gain, final_ln_bias, text_projection;
    Tensor image_w1, image_b1, image_w2, image_b2;
    Tensor log_tau;  // 1x1; tau = exp(log_tau)

    bool has_adapters() const { return !blocks.empty() && blocks.front().attn_adapter.down.size() > 0; }
    double tau() const { return std::exp(log_tau(0, 0)); }
};

enum class TensorGroup { text, adapter, image, temperature };

struct TensorRef {
    std::string name;
    Tensor* tensor;
    TensorGroup group;
};

struct ConstTensorRef {
    std::string name;
    const Tensor* tensor;
    TensorGroup group;
};

// Every tensor in a fixed order. Adapter tensors are listed only when present.
std::vector<TensorRef> list_tensors(ModelParams& params);
std::vector<ConstTensorRef> list_tensors(const ModelParams& params);

inline constexpr double kInitialTau = 1.0 / 0.07;
inline constexpr double kMaxTau = 100.0;

ModelParams init_params(const EncoderConfig& config, std::uint64_t seed);
// Adds adapters with random down-projections and zero up-projections. No-op if present.
void enable_adapters(ModelParams& params, std::uint64_t seed);
ModelParams zeros_like(const ModelParams& params);

// Per-position activations kept for the reverse pass.
struct LayerNormCache {
    Tensor xhat;
    Vector rstd;
};

struct AdapterCache {
    Tensor input, pre, act;
};

struct BlockCache {
    LayerNormCache ln1, ln2;
    Tensor y1, q, k, v, o;
    std::vector<Tensor> probs;
    Tensor attn_out;
    AdapterCache attn_adapter;
    Tensor y2, pre, act, mlp_out;
    AdapterCache mlp_adapter;
};

struct TextTrace {
    std::vector<int> ids;  // effective (unpadded) sequence
    int pool = 0;
    bool use_adapters = false;
    std::vector<BlockCache> blocks;
    LayerNormCache final_ln;
    Tensor pooled_norm;  // 1 x P, input to the projection
};

struct ImageTrace {
    Tensor input, pre, act;
};

// EOS pooling reads the first [EOS] position; anything after it is padding and
// never enters attention. CLS pooling reads position 0 (must be [CLS]) and the
// sequence ends at the first [PAD]. Throws DataError for out-of-vocab ids,
// overlength input, missing pooling token, or use_adapters without adapters.
Vector encode_text(const ModelParams& params, std::span<const int> token_ids, Pooling pooling, bool use_adapters,
                   TextTrace* trace = nullptr);
void backprop_text(const ModelParams& params, const TextTrace& trace, const Vector& d_out, ModelParams& grads);

// Throws DataError on a dimension mismatch.
Vector encode_image(const ModelParams& params, const Vector& image, ImageTrace* trace = nullptr);
void backprop_image(const ModelParams& params, const ImageTrace& trace, const Vector& d_out, ModelParams& grads);

double gelu(double x);
double gelu_grad(double x);

}  // namespace klite
