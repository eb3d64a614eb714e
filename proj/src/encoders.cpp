#include "man/encoders.hpp"

#include <cmath>
#include <stdexcept>

namespace man {

namespace {

TensorPtr xavier_param(ParameterStore& store, const std::string& name, std::size_t rows,
                       std::size_t cols, std::uint64_t seed) {
    Rng rng(seed, "init/" + name);
    return store.add(name, xavier_init(rows, cols, rng));
}

TensorPtr const_param(ParameterStore& store, const std::string& name, std::size_t rows,
                      std::size_t cols, double value) {
    return store.add(name, full(rows, cols, value));
}

}  // namespace

EncoderParams make_encoder(ParameterStore& store, const std::string& prefix,
                           const EncoderConfig& cfg, std::uint64_t seed) {
    if (cfg.input_dim == 0 || cfg.hidden == 0 || cfg.layers == 0)
        throw std::runtime_error("make_encoder: zero dimension");
    EncoderParams p;
    p.cfg = cfg;
    const std::size_t H = cfg.hidden;
    if (cfg.backbone == Backbone::SelfAttention) {
        if (cfg.heads == 0 || H % cfg.heads != 0)
            throw std::runtime_error("make_encoder: hidden must be divisible by heads");
        const std::size_t F = cfg.mlp_hidden ? cfg.mlp_hidden : H;
        p.in_w = xavier_param(store, prefix + "/in_w", cfg.input_dim, H, seed);
        p.in_b = const_param(store, prefix + "/in_b", 1, H, 0.0);
        for (std::size_t l = 0; l < cfg.layers; ++l) {
            const std::string lp = prefix + "/l" + std::to_string(l);
            SelfAttnLayer layer;
            layer.wq = xavier_param(store, lp + "/wq", H, H, seed);
            layer.wk = xavier_param(store, lp + "/wk", H, H, seed);
            layer.wv = xavier_param(store, lp + "/wv", H, H, seed);
            layer.wo = xavier_param(store, lp + "/wo", H, H, seed);
            layer.ln1_gain = const_param(store, lp + "/ln1_gain", 1, H, 1.0);
            layer.ln1_bias = const_param(store, lp + "/ln1_bias", 1, H, 0.0);
            layer.mlp_w1 = xavier_param(store, lp + "/mlp_w1", H, F, seed);
            layer.mlp_b1 = const_param(store, lp + "/mlp_b1", 1, F, 0.0);
            layer.mlp_w2 = xavier_param(store, lp + "/mlp_w2", F, H, seed);
            layer.mlp_b2 = const_param(store, lp + "/mlp_b2", 1, H, 0.0);
            layer.ln2_gain = const_param(store, lp + "/ln2_gain", 1, H, 1.0);
            layer.ln2_bias = const_param(store, lp + "/ln2_bias", 1, H, 0.0);
            p.attn_layers.push_back(std::move(layer));
        }
    } else {
        const std::string gp = prefix + "/gru";
        p.wz = xavier_param(store, gp + "/wz", cfg.input_dim, H, seed);
        p.uz = xavier_param(store, gp + "/uz", H, H, seed);
        p.bz = const_param(store, gp + "/bz", 1, H, 0.0);
        p.wr = xavier_param(store, gp + "/wr", cfg.input_dim, H, seed);
        p.ur = xavier_param(store, gp + "/ur", H, H, seed);
        p.br = const_param(store, gp + "/br", 1, H, 0.0);
        p.wh = xavier_param(store, gp + "/wh", cfg.input_dim, H, seed);
        p.uh = xavier_param(store, gp + "/uh", H, H, seed);
        p.bh = const_param(store, gp + "/bh", 1, H, 0.0);
    }
    return p;
}

namespace {

// additive bias with -1e9 at key positions that are padded or in the future
TensorPtr causal_mask_bias(const std::vector<std::uint8_t>& mask) {
    const std::size_t T = mask.size();
    auto bias = tensor(T, T);
    for (std::size_t t = 0; t < T; ++t)
        for (std::size_t k = 0; k < T; ++k)
            bias->at(t, k) = (k <= t && mask[k]) ? 0.0 : -1e9;
    return bias;
}

TensorPtr mask_column(const std::vector<std::uint8_t>& mask) {
    auto col = tensor(mask.size(), 1);
    for (std::size_t t = 0; t < mask.size(); ++t) col->data[t] = mask[t] ? 1.0 : 0.0;
    return col;
}

TensorPtr encode_self_attention(const EncoderParams& p, const TensorPtr& embedded,
                                const std::vector<std::uint8_t>& mask) {
    const std::size_t H = p.cfg.hidden;
    const std::size_t heads = p.cfg.heads;
    const std::size_t hd = H / heads;
    const auto bias = causal_mask_bias(mask);
    const auto mask_col = mask_column(mask);

    // padded rows are cleared immediately so their contents never reach a
    // real position (they are additionally excluded as keys by the bias)
    TensorPtr x = mul_colvec(add_rowvec(matmul(embedded, p.in_w), p.in_b), mask_col);
    for (const auto& layer : p.attn_layers) {
        auto q = matmul(x, layer.wq);
        auto k = matmul(x, layer.wk);
        auto v = matmul(x, layer.wv);
        std::vector<TensorPtr> head_outs;
        for (std::size_t h = 0; h < heads; ++h) {
            auto qh = heads == 1 ? q : slice_cols(q, h * hd, (h + 1) * hd);
            auto kh = heads == 1 ? k : slice_cols(k, h * hd, (h + 1) * hd);
            auto vh = heads == 1 ? v : slice_cols(v, h * hd, (h + 1) * hd);
            auto scores = scale(matmul(qh, transpose(kh)), 1.0 / std::sqrt(double(hd)));
            auto weights = softmax(add(scores, bias), 1);
            head_outs.push_back(matmul(weights, vh));
        }
        auto attn = matmul(heads == 1 ? head_outs[0] : concat_cols(head_outs), layer.wo);
        auto h1 = add(x, attn);
        auto normed = layer_norm(h1, layer.ln1_gain, layer.ln1_bias);
        auto ff = add_rowvec(
            matmul(relu(add_rowvec(matmul(normed, layer.mlp_w1), layer.mlp_b1)), layer.mlp_w2),
            layer.mlp_b2);
        x = mul_colvec(add(h1, layer_norm(ff, layer.ln2_gain, layer.ln2_bias)), mask_col);
    }
    return x;
}

TensorPtr encode_gru(const EncoderParams& p, const TensorPtr& embedded,
                     const std::vector<std::uint8_t>& mask) {
    const std::size_t T = embedded->rows;
    const std::size_t H = p.cfg.hidden;
    TensorPtr h = zeros(1, H);
    std::vector<TensorPtr> rows;
    rows.reserve(T);
    for (std::size_t t = 0; t < T; ++t) {
        if (!mask[t]) {
            rows.push_back(zeros(1, H));
            continue;  // hidden state passes through padding untouched
        }
        auto xt = slice_rows(embedded, t, t + 1);
        auto z = sigmoid(add_rowvec(add(matmul(xt, p.wz), matmul(h, p.uz)), p.bz));
        auto r = sigmoid(add_rowvec(add(matmul(xt, p.wr), matmul(h, p.ur)), p.br));
        auto hh = tanh_op(add_rowvec(add(matmul(xt, p.wh), matmul(mul(r, h), p.uh)), p.bh));
        auto one_minus_z = sub(full(1, H, 1.0), z);
        h = add(mul(one_minus_z, h), mul(z, hh));
        rows.push_back(h);
    }
    return concat_rows(rows);
}

}  // namespace

TensorPtr encode(const EncoderParams& p, const TensorPtr& embedded,
                 const std::vector<std::uint8_t>& mask) {
    if (embedded->cols != p.cfg.input_dim)
        throw std::runtime_error("encode: input width " + std::to_string(embedded->cols) +
                                 " != configured " + std::to_string(p.cfg.input_dim));
    if (mask.size() != embedded->rows)
        throw std::runtime_error("encode: mask length mismatch");
    return p.cfg.backbone == Backbone::SelfAttention ? encode_self_attention(p, embedded, mask)
                                                     : encode_gru(p, embedded, mask);
}

std::size_t encoder_parameter_count(const EncoderConfig& cfg) {
    const std::size_t H = cfg.hidden;
    if (cfg.backbone == Backbone::SelfAttention) {
        const std::size_t F = cfg.mlp_hidden ? cfg.mlp_hidden : H;
        const std::size_t per_layer = 4 * H * H              // wq, wk, wv, wo
                                      + (H * F + F + F * H + H)  // position-wise MLP
                                      + 4 * H;               // two layer norms
        return cfg.input_dim * H + H + cfg.layers * per_layer;
    }
    return 3 * (cfg.input_dim * H + H * H + H);
}

}  // namespace man
