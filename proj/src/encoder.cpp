#include "klite/encoder.hpp"

#include <algorithm>
#include <numbers>

#include "klite/error.hpp"
#include "klite/rng.hpp"

namespace klite {

namespace {

constexpr double kLayerNormEps = 1e-5;

Tensor uniform_tensor(Rng& rng, int rows, int cols, double bound) {
    Tensor t(rows, cols);
    for (int c = 0; c < cols; ++c) {
        for (int r = 0; r < rows; ++r) t(r, c) = rng.uniform(-bound, bound);
    }
    return t;
}

Tensor fan_in_weight(Rng& rng, int in, int out) { return uniform_tensor(rng, in, out, 1.0 / std::sqrt(double(in))); }

Tensor ones_row(int n) { return Tensor::Ones(1, n); }
Tensor zeros_row(int n) { return Tensor::Zero(1, n); }

AdapterParams make_adapter(Rng& rng, int width, int bottleneck) {
    return {fan_in_weight(rng, width, bottleneck), zeros_row(bottleneck), Tensor::Zero(bottleneck, width),
            zeros_row(width)};
}

// ---- primitives -------------------------------------------------------------------------------

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
    Tensor y = x * w;
    y.rowwise() += b.row(0);
    return y;
}

// Accumulates dW, db and returns dX.
Tensor linear_backward(const Tensor& dy, const Tensor& x, const Tensor& w, Tensor& dw, Tensor& db) {
    dw.noalias() += x.transpose() * dy;
    db += dy.colwise().sum();
    return dy * w.transpose();
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, LayerNormCache& cache) {
    const auto n = x.rows();
    const auto p = static_cast<double>(x.cols());
    cache.xhat.resize(n, x.cols());
    cache.rstd.resize(n);
    for (Eigen::Index r = 0; r < n; ++r) {
        const double mean = x.row(r).sum() / p;
        const auto centered = (x.row(r).array() - mean).eval();
        const double var = centered.square().sum() / p;
        cache.rstd(r) = 1.0 / std::sqrt(var + kLayerNormEps);
        cache.xhat.row(r) = centered * cache.rstd(r);
    }
    Tensor y = cache.xhat.array().rowwise() * gain.row(0).array();
    y.rowwise() += bias.row(0);
    return y;
}

Tensor layer_norm_backward(const Tensor& dy, const Tensor& gain, const LayerNormCache& cache, Tensor& dgain,
                           Tensor& dbias) {
    dgain += (dy.array() * cache.xhat.array()).colwise().sum().matrix();
    dbias += dy.colwise().sum();
    const Tensor dxhat = dy.array().rowwise() * gain.row(0).array();
    Tensor dx(dy.rows(), dy.cols());
    for (Eigen::Index r = 0; r < dy.rows(); ++r) {
        const double m1 = dxhat.row(r).mean();
        const double m2 = (dxhat.row(r).array() * cache.xhat.row(r).array()).mean();
        dx.row(r) = cache.rstd(r) * (dxhat.row(r).array() - m1 - cache.xhat.row(r).array() * m2);
    }
    return dx;
}

Tensor gelu_of(const Tensor& x) { return x.unaryExpr([](double v) { return gelu(v); }); }
Tensor gelu_backward(const Tensor& dy, const Tensor& pre) {
    return dy.array() * pre.unaryExpr([](double v) { return gelu_grad(v); }).array();
}

Tensor adapter_forward(const AdapterParams& a, const Tensor& x, AdapterCache& cache) {
    cache.input = x;
    cache.pre = linear(x, a.down, a.down_bias);
    cache.act = gelu_of(cache.pre);
    return x + linear(cache.act, a.up, a.up_bias);
}

Tensor adapter_backward(const AdapterParams& a, const AdapterCache& cache, const Tensor& dy, AdapterParams& g) {
    const Tensor dact = linear_backward(dy, cache.act, a.up, g.up, g.up_bias);
    const Tensor dpre = gelu_backward(dact, cache.pre);
    return dy + linear_backward(dpre, cache.input, a.down, g.down, g.down_bias);
}

void softmax_rows(Tensor& s) {
    for (Eigen::Index r = 0; r < s.rows(); ++r) {
        const double m = s.row(r).maxCoeff();
        s.row(r) = (s.row(r).array() - m).exp();
        s.row(r) /= s.row(r).sum();
    }
}

Tensor block_forward(const EncoderConfig& cfg, const BlockParams& b, const Tensor& x, bool use_adapters,
                     BlockCache& c) {
    const int heads = cfg.heads;
    const int dh = cfg.embed_dim / heads;
    const double scale = 1.0 / std::sqrt(double(dh));

    c.y1 = layer_norm(x, b.ln1_gain, b.ln1_bias, c.ln1);
    c.q = linear(c.y1, b.wq, b.bq);
    c.k = linear(c.y1, b.wk, b.bk);
    c.v = linear(c.y1, b.wv, b.bv);
    c.o.resize(x.rows(), cfg.embed_dim);
    c.probs.resize(heads);
    for (int h = 0; h < heads; ++h) {
        Tensor s = (c.q.middleCols(h * dh, dh) * c.k.middleCols(h * dh, dh).transpose()) * scale;
        softmax_rows(s);
        c.o.middleCols(h * dh, dh) = s * c.v.middleCols(h * dh, dh);
        c.probs[h] = std::move(s);
    }
    c.attn_out = linear(c.o, b.wo, b.bo);
    Tensor x1 = x + (use_adapters ? adapter_forward(b.attn_adapter, c.attn_out, c.attn_adapter) : c.attn_out);

    c.y2 = layer_norm(x1, b.ln2_gain, b.ln2_bias, c.ln2);
    c.pre = linear(c.y2, b.w1, b.b1);
    c.act = gelu_of(c.pre);
    c.mlp_out = linear(c.act, b.w2, b.b2);
    return x1 + (use_adapters ? adapter_forward(b.mlp_adapter, c.mlp_out, c.mlp_adapter) : c.mlp_out);
}

Tensor block_backward(const EncoderConfig& cfg, const BlockParams& b, const BlockCache& c, const Tensor& dx2,
                      bool use_adapters, BlockParams& g) {
    const int heads = cfg.heads;
    const int dh = cfg.embed_dim / heads;
    const double scale = 1.0 / std::sqrt(double(dh));

    const Tensor dmlp = use_adapters ? adapter_backward(b.mlp_adapter, c.mlp_adapter, dx2, g.mlp_adapter) : dx2;
    const Tensor dact = linear_backward(dmlp, c.act, b.w2, g.w2, g.b2);
    const Tensor dpre = gelu_backward(dact, c.pre);
    const Tensor dy2 = linear_backward(dpre, c.y2, b.w1, g.w1, g.b1);
    const Tensor dx1 = dx2 + layer_norm_backward(dy2, b.ln2_gain, c.ln2, g.ln2_gain, g.ln2_bias);

    const Tensor dattn = use_adapters ? adapter_backward(b.attn_adapter, c.attn_adapter, dx1, g.attn_adapter) : dx1;
    const Tensor d_o = linear_backward(dattn, c.o, b.wo, g.wo, g.bo);
    Tensor dq = Tensor::Zero(c.q.rows(), c.q.cols());
    Tensor dk = Tensor::Zero(c.k.rows(), c.k.cols());
    Tensor dv = Tensor::Zero(c.v.rows(), c.v.cols());
    for (int h = 0; h < heads; ++h) {
        const Tensor& a = c.probs[h];
        const auto doh = d_o.middleCols(h * dh, dh);
        const Tensor da = doh * c.v.middleCols(h * dh, dh).transpose();
        dv.middleCols(h * dh, dh) = a.transpose() * doh;
        const Eigen::VectorXd rowdot = (da.array() * a.array()).rowwise().sum();
        const Tensor ds = (a.array() * (da.colwise() - rowdot).array()) * scale;
        dq.middleCols(h * dh, dh) = ds * c.k.middleCols(h * dh, dh);
        dk.middleCols(h * dh, dh) = ds.transpose() * c.q.middleCols(h * dh, dh);
    }
    Tensor dy1 = linear_backward(dq, c.y1, b.wq, g.wq, g.bq);
    dy1 += linear_backward(dk, c.y1, b.wk, g.wk, g.bk);
    dy1 += linear_backward(dv, c.y1, b.wv, g.wv, g.bv);
    return dx1 + layer_norm_backward(dy1, b.ln1_gain, c.ln1, g.ln1_gain, g.ln1_bias);
}

template <typename Params, typename Ref>
std::vector<Ref> collect(Params& p) {
    std::vector<Ref> out;
    auto add = [&](std::string name, auto& t, TensorGroup g) { out.push_back(Ref{std::move(name), &t, g}); };
    add("text.token_embedding", p.token_embedding, TensorGroup::text);
    add("text.position_embedding", p.position_embedding, TensorGroup::text);
    for (std::size_t l = 0; l < p.blocks.size(); ++l) {
        auto& b = p.blocks[l];
        const std::string pre = "text.block" + std::to_string(l) + ".";
        add(pre + "ln1.gain", b.ln1_gain, TensorGroup::text);
        add(pre + "ln1.bias", b.ln1_bias, TensorGroup::text);
        add(pre + "attn.wq", b.wq, TensorGroup::text);
        add(pre + "attn.bq", b.bq, TensorGroup::text);
        add(pre + "attn.wk", b.wk, TensorGroup::text);
        add(pre + "attn.bk", b.bk, TensorGroup::text);
        add(pre + "attn.wv", b.wv, TensorGroup::text);
        add(pre + "attn.bv", b.bv, TensorGroup::text);
        add(pre + "attn.wo", b.wo, TensorGroup::text);
        add(pre + "attn.bo", b.bo, TensorGroup::text);
        add(pre + "ln2.gain", b.ln2_gain, TensorGroup::text);
        add(pre + "ln2.bias", b.ln2_bias, TensorGroup::text);
        add(pre + "mlp.w1", b.w1, TensorGroup::text);
        add(pre + "mlp.b1", b.b1, TensorGroup::text);
        add(pre + "mlp.w2", b.w2, TensorGroup::text);
        add(pre + "mlp.b2", b.b2, TensorGroup::text);
    }
    add("text.final_ln.gain", p.final_ln_gain, TensorGroup::text);
    add("text.final_ln.bias", p.final_ln_bias, TensorGroup::text);
    add("text.projection", p.text_projection, TensorGroup::text);
    if (p.has_adapters()) {
        for (std::size_t l = 0; l < p.blocks.size(); ++l) {
            auto& b = p.blocks[l];
            const std::string pre = "adapter.block" + std::to_string(l) + ".";
            for (auto [tag, a] : {std::pair{"attn", &b.attn_adapter}, std::pair{"mlp", &b.mlp_adapter}}) {
                add(pre + tag + ".down", a->down, TensorGroup::adapter);
                add(pre + tag + ".down_bias", a->down_bias, TensorGroup::adapter);
                add(pre + tag + ".up", a->up, TensorGroup::adapter);
                add(pre + tag + ".up_bias", a->up_bias, TensorGroup::adapter);
            }
        }
    }
    add("image.w1", p.image_w1, TensorGroup::image);
    add("image.b1", p.image_b1, TensorGroup::image);
    add("image.w2", p.image_w2, TensorGroup::image);
    add("image.b2", p.image_b2, TensorGroup::image);
    add("temperature.log_tau", p.log_tau, TensorGroup::temperature);
    return out;
}

}  // namespace

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0)); }

double gelu_grad(double x) {
    const double cdf = 0.5 * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
    const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
    return cdf + x * pdf;
}

void EncoderConfig::validate() const {
    auto require = [](bool ok, const char* what) {
        if (!ok) throw DataError(std::string("invalid encoder config: ") + what);
    };
    require(embed_dim > 0, "embed_dim must be positive");
    require(text_layers > 0, "text_layers must be positive");
    require(heads > 0 && embed_dim % heads == 0, "embed_dim must be divisible by heads");
    require(hidden > 0, "hidden must be positive");
    require(vocab_size > Vocabulary::kFirstBucket, "vocab_size too small");
    require(max_tokens > 1, "max_tokens must exceed 1");
    require(adapter_bottleneck > 0 && adapter_bottleneck < hidden, "adapter_bottleneck must be in (0, hidden)");
    require(image_input_dim > 0, "image_input_dim must be positive");
    require(image_hidden > 0, "image_hidden must be positive");
}

std::vector<TensorRef> list_tensors(ModelParams& params) { return collect<ModelParams, TensorRef>(params); }
std::vector<ConstTensorRef> list_tensors(const ModelParams& params) {
    return collect<const ModelParams, ConstTensorRef>(params);
}

ModelParams init_params(const EncoderConfig& config, std::uint64_t seed) {
    config.validate();
    Rng rng(seed);
    const int p = config.embed_dim;
    const double embed_bound = 1.0 / std::sqrt(double(p));

    ModelParams m;
    m.config = config;
    m.token_embedding = uniform_tensor(rng, config.vocab_size, p, embed_bound);
    m.position_embedding = uniform_tensor(rng, config.max_tokens, p, embed_bound);
    m.blocks.resize(config.text_layers);
    for (auto& b : m.blocks) {
        b.ln1_gain = ones_row(p);
        b.ln1_bias = zeros_row(p);
        b.wq = fan_in_weight(rng, p, p);
        b.bq = zeros_row(p);
        b.wk = fan_in_weight(rng, p, p);
        b.bk = zeros_row(p);
        b.wv = fan_in_weight(rng, p, p);
        b.bv = zeros_row(p);
        b.wo = fan_in_weight(rng, p, p);
        b.bo = zeros_row(p);
        b.ln2_gain = ones_row(p);
        b.ln2_bias = zeros_row(p);
        b.w1 = fan_in_weight(rng, p, config.hidden);
        b.b1 = zeros_row(config.hidden);
        b.w2 = fan_in_weight(rng, config.hidden, p);
        b.b2 = zeros_row(p);
    }
    m.final_ln_gain = ones_row(p);
    m.final_ln_bias = zeros_row(p);
    m.text_projection = fan_in_weight(rng, p, p);
    m.image_w1 = fan_in_weight(rng, config.image_input_dim, config.image_hidden);
    m.image_b1 = zeros_row(config.image_hidden);
    m.image_w2 = fan_in_weight(rng, config.image_hidden, p);
    m.image_b2 = zeros_row(p);
    m.log_tau = Tensor::Constant(1, 1, std::log(kInitialTau));
    return m;
}

void enable_adapters(ModelParams& params, std::uint64_t seed) {
    if (params.has_adapters()) return;
    Rng rng(seed ^ 0xada9'7e45ULL);
    for (auto& b : params.blocks) {
        b.attn_adapter = make_adapter(rng, params.config.embed_dim, params.config.adapter_bottleneck);
        b.mlp_adapter = make_adapter(rng, params.config.embed_dim, params.config.adapter_bottleneck);
    }
}

ModelParams zeros_like(const ModelParams& params) {
    ModelParams z = params;
    for (auto& ref : list_tensors(z)) ref.tensor->setZero();
    return z;
}

Vector encode_text(const ModelParams& params, std::span<const int> token_ids, Pooling pooling, bool use_adapters,
                   TextTrace* trace) {
    const auto& cfg = params.config;
    if (use_adapters && !params.has_adapters()) throw DataError("encode_text: model has no adapters");
    for (int id : token_ids) {
        if (id < 0 || id >= cfg.vocab_size) throw DataError("token id " + std::to_string(id) + " out of vocabulary range");
    }

    std::size_t length = 0;
    int pool = 0;
    if (pooling == Pooling::EOS) {
        const auto it = std::find(token_ids.begin(), token_ids.end(), Vocabulary::kEos);
        if (it == token_ids.end()) throw DataError("encode_text: sequence has no [EOS] token");
        length = static_cast<std::size_t>(it - token_ids.begin()) + 1;
        pool = static_cast<int>(length) - 1;
    } else {
        if (token_ids.empty() || token_ids.front() != Vocabulary::kCls) {
            throw DataError("encode_text: CLS pooling needs [CLS] at position 0");
        }
        const auto it = std::find(token_ids.begin(), token_ids.end(), Vocabulary::kPad);
        length = static_cast<std::size_t>(it - token_ids.begin());
    }
    if (length > static_cast<std::size_t>(cfg.max_tokens)) {
        throw DataError("encode_text: " + std::to_string(length) + " tokens exceed max_tokens=" +
                        std::to_string(cfg.max_tokens));
    }

    TextTrace local;
    TextTrace& t = trace ? *trace : local;
    t.ids.assign(token_ids.begin(), token_ids.begin() + static_cast<std::ptrdiff_t>(length));
    t.pool = pool;
    t.use_adapters = use_adapters;
    t.blocks.resize(params.blocks.size());

    Tensor x(static_cast<Eigen::Index>(length), cfg.embed_dim);
    for (std::size_t i = 0; i < length; ++i) {
        x.row(static_cast<Eigen::Index>(i)) =
            params.token_embedding.row(t.ids[i]) + params.position_embedding.row(static_cast<Eigen::Index>(i));
    }
    for (std::size_t l = 0; l < params.blocks.size(); ++l) {
        x = block_forward(cfg, params.blocks[l], x, use_adapters, t.blocks[l]);
    }
    t.pooled_norm = layer_norm(x.row(pool), params.final_ln_gain, params.final_ln_bias, t.final_ln);
    return (t.pooled_norm * params.text_projection).transpose();
}

void backprop_text(const ModelParams& params, const TextTrace& trace, const Vector& d_out, ModelParams& grads) {
    const auto& cfg = params.config;
    const Tensor dy = d_out.transpose();
    grads.text_projection.noalias() += trace.pooled_norm.transpose() * dy;
    const Tensor dpooled = layer_norm_backward(dy * params.text_projection.transpose(), params.final_ln_gain,
                                               trace.final_ln, grads.final_ln_gain, grads.final_ln_bias);

    Tensor dx = Tensor::Zero(static_cast<Eigen::Index>(trace.ids.size()), cfg.embed_dim);
    dx.row(trace.pool) = dpooled;
    for (std::size_t l = params.blocks.size(); l-- > 0;) {
        dx = block_backward(cfg, params.blocks[l], trace.blocks[l], dx, trace.use_adapters, grads.blocks[l]);
    }
    for (std::size_t i = 0; i < trace.ids.size(); ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        grads.token_embedding.row(trace.ids[i]) += dx.row(r);
        grads.position_embedding.row(r) += dx.row(r);
    }
}

Vector encode_image(const ModelParams& params, const Vector& image, ImageTrace* trace) {
    if (image.size() != params.config.image_input_dim) {
        throw DataError("encode_image: expected " + std::to_string(params.config.image_input_dim) +
                        " inputs, got " + std::to_string(image.size()));
    }
    ImageTrace local;
    ImageTrace& t = trace ? *trace : local;
    t.input = image.transpose();
    t.pre = linear(t.input, params.image_w1, params.image_b1);
    t.act = gelu_of(t.pre);
    return linear(t.act, params.image_w2, params.image_b2).transpose();
}

void backprop_image(const ModelParams& params, const ImageTrace& trace, const Vector& d_out, ModelParams& grads) {
    const Tensor dact = linear_backward(d_out.transpose(), trace.act, params.image_w2, grads.image_w2, grads.image_b2);
    linear_backward(gelu_backward(dact, trace.pre), trace.input, params.image_w1, grads.image_w1, grads.image_b1);
}

}  // namespace klite
