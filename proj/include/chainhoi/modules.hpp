#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "chainhoi/ops.hpp"
#include "chainhoi/rng.hpp"
#include "chainhoi/tensor.hpp"

namespace chainhoi {

struct NamedParam {
    std::string name;
    Tensor tensor;
};

using ParamList = std::vector<NamedParam>;

// Appends params under a dotted prefix and checks the no-aliasing invariant.
void register_param(ParamList& out, const std::string& name, const Tensor& t);
int64_t total_param_count(const ParamList& params);

struct Linear {
    Tensor w, b;  // w: [d_in, d_out]

    void init(int d_in, int d_out, Rng& rng);
    Tensor forward(const Tensor& x) const { return ops::linear(x, w, b); }
    void collect(ParamList& out, const std::string& prefix) const;
};

struct LayerNorm {
    Tensor gamma, beta;

    void init(int d);
    Tensor forward(const Tensor& x) const { return ops::layer_norm(x, gamma, beta); }
    void collect(ParamList& out, const std::string& prefix) const;
};

// Multi-head attention with projections. An empty mask means full attention;
// otherwise mask is row-major [n_q, n_k], 1 = may attend.
struct MultiHeadAttention {
    int heads = 1;
    Linear wq, wk, wv, wo;

    void init(int d_model, int n_heads, Rng& rng);
    Tensor forward(const Tensor& q_in, const Tensor& kv_in,
                   const std::vector<uint8_t>& mask = {}) const;
    // last computed attention weights [h, n_q, n_k], for inspection in tests
    mutable Tensor last_weights;
    void collect(ParamList& out, const std::string& prefix) const;
};

struct FeedForward {
    Linear fc1, fc2;

    void init(int d, int hidden, Rng& rng);
    Tensor forward(const Tensor& x) const { return fc2.forward(ops::gelu(fc1.forward(x))); }
    void collect(ParamList& out, const std::string& prefix) const;
};

// Pre-norm transformer decoder layer: self-attention, cross-attention, FFN,
// each wrapped in residual.
struct DecoderLayer {
    LayerNorm ln1, ln2, ln3;
    MultiHeadAttention self_attn, cross_attn;
    FeedForward ffn;

    void init(int d, int heads, Rng& rng);
    Tensor forward(const Tensor& x, const Tensor& memory,
                   const std::vector<uint8_t>& cross_mask = {},
                   const std::vector<uint8_t>& self_mask = {}) const;
    void collect(ParamList& out, const std::string& prefix) const;
};

// Pre-norm encoder layer: self-attention + FFN.
struct EncoderLayer {
    LayerNorm ln1, ln2;
    MultiHeadAttention self_attn;
    FeedForward ffn;

    void init(int d, int heads, Rng& rng);
    Tensor forward(const Tensor& x) const;
    void collect(ParamList& out, const std::string& prefix) const;
};

// Y[t] = A_hat X[t] W + b with optional GELU.
struct GraphConv {
    Linear proj;
    Tensor a_hat;  // [n, n], fixed (not a parameter)
    bool activation = true;

    void init(int d_in, int d_out, const Tensor& normalized_adjacency, Rng& rng);
    Tensor forward(const Tensor& x) const;
    void collect(ParamList& out, const std::string& prefix) const;
};

// Four branches at d/4 channels each: 1x1 bottleneck, k=3 convs at dilation 1
// and 2, and a k=3 max pool behind a 1x1. Concatenated back to d, residual add.
struct TemporalMultiBranch {
    int d = 0;
    Linear reduce1, reduce2, reduce3, reduce4;
    Tensor conv_w2, conv_b2;  // k=3, dilation 1
    Tensor conv_w3, conv_b3;  // k=3, dilation 2
    bool with_residual = true;

    void init(int channels, Rng& rng);
    Tensor forward(const Tensor& x) const;
    void collect(ParamList& out, const std::string& prefix) const;
};

// Sinusoidal position table, [max_len, d]. Not a parameter.
Tensor sinusoidal_positions(int max_len, int d);
Tensor sinusoidal_embedding(double position, int d);

struct AdamWConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-2;
};

class AdamW {
public:
    AdamW() = default;
    AdamW(ParamList params, AdamWConfig cfg);

    void zero_grad();
    void step();
    int64_t step_count() const { return step_; }

    const ParamList& params() const { return params_; }
    // moments exposed for checkpointing
    std::vector<std::vector<double>>& moment1() { return m_; }
    std::vector<std::vector<double>>& moment2() { return v_; }
    const std::vector<std::vector<double>>& moment1() const { return m_; }
    const std::vector<std::vector<double>>& moment2() const { return v_; }
    void set_step_count(int64_t s) { step_ = s; }
    const AdamWConfig& config() const { return cfg_; }
    // restrict updates to a subset of params (by index); empty = all
    void set_active(const std::vector<uint8_t>& active) { active_ = active; }

private:
    ParamList params_;
    AdamWConfig cfg_;
    std::vector<std::vector<double>> m_, v_;
    std::vector<uint8_t> active_;
    int64_t step_ = 0;
};

}  // namespace chainhoi
