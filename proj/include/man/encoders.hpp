#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "man/params.hpp"
#include "man/tensor.hpp"

namespace man {

enum class Backbone { SelfAttention, GatedRecurrent };

struct EncoderConfig {
    Backbone backbone = Backbone::SelfAttention;
    std::size_t layers = 2;
    std::size_t heads = 1;       // self-attention only
    std::size_t input_dim = 0;   // width of the embedded sequence
    std::size_t hidden = 0;      // output width
    std::size_t mlp_hidden = 0;  // position-wise MLP width; 0 = hidden
};

struct SelfAttnLayer {
    TensorPtr wq, wk, wv, wo;
    TensorPtr ln1_gain, ln1_bias, ln2_gain, ln2_bias;
    TensorPtr mlp_w1, mlp_b1, mlp_w2, mlp_b2;
};

struct EncoderParams {
    EncoderConfig cfg;
    // self-attention backbone
    TensorPtr in_w, in_b;
    std::vector<SelfAttnLayer> attn_layers;
    // gated-recurrent backbone
    TensorPtr wz, uz, bz, wr, ur, br, wh, uh, bh;
};

// Registers one encoder's parameters under `prefix` ("a/enc", "shared/enc", ...).
EncoderParams make_encoder(ParameterStore& store, const std::string& prefix,
                           const EncoderConfig& cfg, std::uint64_t seed);

// T x input_dim -> T x hidden. Padded positions produce zero rows, position t
// depends only on positions <= t, and both outputs and gradients are
// unaffected by the contents stored at padded positions.
TensorPtr encode(const EncoderParams& params, const TensorPtr& embedded,
                 const std::vector<std::uint8_t>& mask);

// Learnable entries for an encoder with this config (used by audits).
std::size_t encoder_parameter_count(const EncoderConfig& cfg);

}  // namespace man
