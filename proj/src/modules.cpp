#include "chainhoi/modules.hpp"

#include <cmath>
#include <unordered_set>

namespace chainhoi {

void register_param(ParamList& out, const std::string& name, const Tensor& t) {
    for (const auto& p : out) {
        if (p.name == name) throw ConfigError("duplicate parameter name: " + name);
        if (p.tensor.node() == t.node())
            throw ConfigError("parameter aliased under two names: " + name + " / " + p.name);
    }
    out.push_back(NamedParam{name, t});
}

int64_t total_param_count(const ParamList& params) {
    int64_t n = 0;
    for (const auto& p : params) n += p.tensor.numel();
    return n;
}

namespace {
Tensor glorot(int d_in, int d_out, Rng& rng) {
    double bound = std::sqrt(6.0 / (d_in + d_out));
    Tensor t = Tensor::rand_uniform({d_in, d_out}, rng, -bound, bound);
    t.set_requires_grad(true);
    return t;
}

Tensor zeros_param(const Shape& s) {
    Tensor t = Tensor::zeros(s);
    t.set_requires_grad(true);
    return t;
}
}  // namespace

void Linear::init(int d_in, int d_out, Rng& rng) {
    w = glorot(d_in, d_out, rng);
    b = zeros_param({d_out});
}

void Linear::collect(ParamList& out, const std::string& prefix) const {
    register_param(out, prefix + ".w", w);
    register_param(out, prefix + ".b", b);
}

void LayerNorm::init(int d) {
    gamma = Tensor::full({d}, 1.0);
    gamma.set_requires_grad(true);
    beta = zeros_param({d});
}

void LayerNorm::collect(ParamList& out, const std::string& prefix) const {
    register_param(out, prefix + ".gamma", gamma);
    register_param(out, prefix + ".beta", beta);
}

void MultiHeadAttention::init(int d_model, int n_heads, Rng& rng) {
    if (d_model % n_heads != 0) throw ConfigError("attention width not divisible by heads");
    heads = n_heads;
    wq.init(d_model, d_model, rng);
    wk.init(d_model, d_model, rng);
    wv.init(d_model, d_model, rng);
    wo.init(d_model, d_model, rng);
}

Tensor MultiHeadAttention::forward(const Tensor& q_in, const Tensor& kv_in,
                                   const std::vector<uint8_t>& mask) const {
    if (q_in.ndim() != 2 || kv_in.ndim() != 2) throw ShapeError("attention expects [n, d] inputs");
    int n_q = q_in.dim(0);
    int n_k = kv_in.dim(0);
    int d = q_in.dim(1);
    if (!mask.empty() && static_cast<int>(mask.size()) != n_q * n_k)
        throw ShapeError("attention mask must be [n_q, n_k]");
    if (!mask.empty()) {
        for (int r = 0; r < n_q; ++r) {
            bool any = false;
            for (int c = 0; c < n_k; ++c) any = any || mask[static_cast<size_t>(r) * n_k + c];
            if (!any) throw MaskError("attention mask row " + std::to_string(r) + " allows no keys");
        }
    }
    int dh = d / heads;
    Tensor q = ops::split_heads(wq.forward(q_in), heads);   // [h, n_q, dh]
    Tensor k = ops::split_heads(wk.forward(kv_in), heads);  // [h, n_k, dh]
    Tensor v = ops::split_heads(wv.forward(kv_in), heads);
    Tensor scores = ops::scale(ops::matmul(q, ops::transpose_last2(k)), 1.0 / std::sqrt(double(dh)));
    Tensor weights = mask.empty() ? ops::softmax_lastdim(scores)
                                  : ops::masked_softmax_lastdim(scores, mask, n_q, n_k);
    last_weights = weights;
    Tensor ctx = ops::merge_heads(ops::matmul(weights, v));  // [n_q, d]
    return wo.forward(ctx);
}

void MultiHeadAttention::collect(ParamList& out, const std::string& prefix) const {
    wq.collect(out, prefix + ".wq");
    wk.collect(out, prefix + ".wk");
    wv.collect(out, prefix + ".wv");
    wo.collect(out, prefix + ".wo");
}

void FeedForward::init(int d, int hidden, Rng& rng) {
    fc1.init(d, hidden, rng);
    fc2.init(hidden, d, rng);
}

void FeedForward::collect(ParamList& out, const std::string& prefix) const {
    fc1.collect(out, prefix + ".fc1");
    fc2.collect(out, prefix + ".fc2");
}

void DecoderLayer::init(int d, int heads, Rng& rng) {
    ln1.init(d);
    ln2.init(d);
    ln3.init(d);
    self_attn.init(d, heads, rng);
    cross_attn.init(d, heads, rng);
    ffn.init(d, 4 * d, rng);
}

Tensor DecoderLayer::forward(const Tensor& x, const Tensor& memory,
                             const std::vector<uint8_t>& cross_mask,
                             const std::vector<uint8_t>& self_mask) const {
    Tensor n1 = ln1.forward(x);
    Tensor h = ops::add(x, self_attn.forward(n1, n1, self_mask));
    h = ops::add(h, cross_attn.forward(ln2.forward(h), memory, cross_mask));
    return ops::add(h, ffn.forward(ln3.forward(h)));
}

void DecoderLayer::collect(ParamList& out, const std::string& prefix) const {
    ln1.collect(out, prefix + ".ln1");
    ln2.collect(out, prefix + ".ln2");
    ln3.collect(out, prefix + ".ln3");
    self_attn.collect(out, prefix + ".self_attn");
    cross_attn.collect(out, prefix + ".cross_attn");
    ffn.collect(out, prefix + ".ffn");
}

void EncoderLayer::init(int d, int heads, Rng& rng) {
    ln1.init(d);
    ln2.init(d);
    self_attn.init(d, heads, rng);
    ffn.init(d, 4 * d, rng);
}

Tensor EncoderLayer::forward(const Tensor& x) const {
    Tensor n1 = ln1.forward(x);
    Tensor h = ops::add(x, self_attn.forward(n1, n1));
    return ops::add(h, ffn.forward(ln2.forward(h)));
}

void EncoderLayer::collect(ParamList& out, const std::string& prefix) const {
    ln1.collect(out, prefix + ".ln1");
    ln2.collect(out, prefix + ".ln2");
    self_attn.collect(out, prefix + ".self_attn");
    ffn.collect(out, prefix + ".ffn");
}

void GraphConv::init(int d_in, int d_out, const Tensor& normalized_adjacency, Rng& rng) {
    proj.init(d_in, d_out, rng);
    a_hat = normalized_adjacency.detached_copy();
}

Tensor GraphConv::forward(const Tensor& x) const {
    if (x.ndim() != 3) throw ShapeError("graph_conv expects [L, n, d]");
    if (x.dim(1) != a_hat.dim(0)) throw ShapeError("graph_conv node count mismatch");
    // per-frame A_hat X: treat A_hat as left operand per batch frame
    int L = x.dim(0);
    std::vector<Tensor> frames;
    frames.reserve(static_cast<size_t>(L));
    for (int t = 0; t < L; ++t) {
        Tensor xt = ops::reshape(ops::narrow(x, 0, t, 1), {x.dim(1), x.dim(2)});
        frames.push_back(ops::matmul(a_hat, xt));
    }
    Tensor mixed = ops::stack0(frames);  // [L, n, d_in]
    Tensor y = proj.forward(mixed);
    return activation ? ops::gelu(y) : y;
}

void GraphConv::collect(ParamList& out, const std::string& prefix) const {
    proj.collect(out, prefix + ".proj");
}

void TemporalMultiBranch::init(int channels, Rng& rng) {
    if (channels % 4 != 0) throw ConfigError("temporal block needs width divisible by 4 branches");
    d = channels;
    int q = channels / 4;
    reduce1.init(channels, q, rng);
    reduce2.init(channels, q, rng);
    reduce3.init(channels, q, rng);
    reduce4.init(channels, q, rng);
    double bound = std::sqrt(6.0 / (3 * q + q));
    conv_w2 = Tensor::rand_uniform({3, q, q}, rng, -bound, bound);
    conv_w2.set_requires_grad(true);
    conv_b2 = zeros_param({q});
    conv_w3 = Tensor::rand_uniform({3, q, q}, rng, -bound, bound);
    conv_w3.set_requires_grad(true);
    conv_b3 = zeros_param({q});
}

Tensor TemporalMultiBranch::forward(const Tensor& x) const {
    if (x.ndim() != 3 || x.dim(2) != d) throw ShapeError("temporal block expects [L, n, d]");
    Tensor b1 = reduce1.forward(x);
    Tensor b2 = ops::conv1d_time(reduce2.forward(x), conv_w2, conv_b2, 1);
    Tensor b3 = ops::conv1d_time(reduce3.forward(x), conv_w3, conv_b3, 2);
    Tensor b4 = ops::maxpool_time(reduce4.forward(x), 3);
    Tensor y = ops::concat(ops::concat(b1, b2, 2), ops::concat(b3, b4, 2), 2);
    return with_residual ? ops::add(y, x) : y;
}

void TemporalMultiBranch::collect(ParamList& out, const std::string& prefix) const {
    reduce1.collect(out, prefix + ".reduce1");
    reduce2.collect(out, prefix + ".reduce2");
    reduce3.collect(out, prefix + ".reduce3");
    reduce4.collect(out, prefix + ".reduce4");
    register_param(out, prefix + ".conv_w2", conv_w2);
    register_param(out, prefix + ".conv_b2", conv_b2);
    register_param(out, prefix + ".conv_w3", conv_w3);
    register_param(out, prefix + ".conv_b3", conv_b3);
}

Tensor sinusoidal_positions(int max_len, int d) {
    Tensor t = Tensor::zeros({max_len, d});
    for (int p = 0; p < max_len; ++p) {
        Tensor row = sinusoidal_embedding(static_cast<double>(p), d);
        for (int j = 0; j < d; ++j) t.data()[static_cast<int64_t>(p) * d + j] = row.data()[j];
    }
    return t;
}

Tensor sinusoidal_embedding(double position, int d) {
    Tensor t = Tensor::zeros({d});
    for (int j = 0; j + 1 < d; j += 2) {
        double freq = std::exp(-std::log(10000.0) * (j / 2) / std::max(1, d / 2));
        t.data()[j] = std::sin(position * freq);
        t.data()[j + 1] = std::cos(position * freq);
    }
    if (d % 2 == 1) t.data()[d - 1] = std::sin(position * std::exp(-std::log(10000.0)));
    return t;
}

AdamW::AdamW(ParamList params, AdamWConfig cfg) : params_(std::move(params)), cfg_(cfg) {
    m_.resize(params_.size());
    v_.resize(params_.size());
    for (size_t i = 0; i < params_.size(); ++i) {
        m_[i].assign(params_[i].tensor.values().size(), 0.0);
        v_[i].assign(params_[i].tensor.values().size(), 0.0);
    }
}

void AdamW::zero_grad() {
    for (auto& p : params_) p.tensor.zero_grad();
}

void AdamW::step() {
    ++step_;
    double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
    double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
    for (size_t i = 0; i < params_.size(); ++i) {
        if (!active_.empty() && !active_[i]) continue;
        Tensor& t = params_[i].tensor;
        const std::vector<double>& g = t.grad();
        double* w = t.data();
        std::vector<double>& m = m_[i];
        std::vector<double>& v = v_[i];
        for (size_t j = 0; j < g.size(); ++j) {
            m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g[j];
            v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g[j] * g[j];
            double mhat = m[j] / bc1;
            double vhat = v[j] / bc2;
            w[j] -= cfg_.lr * (mhat / (std::sqrt(vhat) + cfg_.eps) + cfg_.weight_decay * w[j]);
        }
    }
}

}  // namespace chainhoi
