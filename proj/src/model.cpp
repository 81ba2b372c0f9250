#include "chainhoi/model.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>

namespace chainhoi {

void ModelConfig::validate() const {
    if (n_blocks < 1) throw ConfigError("n_blocks must be >= 1");
    if (d_t % heads != 0) throw ConfigError("d_t must be divisible by heads");
    if (d_m % 4 != 0) throw ConfigError("d_m must be divisible by 4 (temporal branches)");
    if (object_point_tokens < 1) throw ConfigError("object_point_tokens must be >= 1");
    if (max_timesteps < 1) throw ConfigError("max_timesteps must be >= 1");
}

std::vector<std::string> split_words(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : text) {
        if (std::isalnum(static_cast<unsigned char>(ch))) {
            cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
        } else if (!cur.empty()) {
            out.push_back(cur);
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

std::vector<int> tokenize(const std::string& text, const std::vector<std::string>& vocab) {
    std::vector<int> ids;
    for (const std::string& w : split_words(text)) {
        auto it = std::find(vocab.begin(), vocab.end(), w);
        if (it == vocab.end()) throw VocabError("unknown token: '" + w + "'");
        ids.push_back(static_cast<int>(it - vocab.begin()));
    }
    return ids;
}

void TextEncoder::init(const ModelConfig& cfg, Rng& rng) {
    int v = std::max<int>(1, static_cast<int>(cfg.vocab.size()));
    embed = Tensor::randn({v, cfg.d_t}, rng, 0.02);
    embed.set_requires_grad(true);
    null_token = Tensor::randn({1, cfg.d_t}, rng, 0.02);
    null_token.set_requires_grad(true);
    layers.resize(static_cast<size_t>(cfg.text_encoder_layers));
    for (auto& l : layers) l.init(cfg.d_t, cfg.heads, rng);
    positions = sinusoidal_positions(64, cfg.d_t);
}

Tensor TextEncoder::forward(const std::vector<int>& ids) const {
    if (ids.empty()) return null_tokens();
    if (static_cast<int>(ids.size()) > positions.dim(0))
        throw ShapeError("text too long for the position table");
    Tensor x = ops::embedding(embed, ids);
    x = ops::add(x, ops::narrow(positions, 0, 0, static_cast<int>(ids.size())));
    for (const auto& l : layers) x = l.forward(x);
    return x;
}

Tensor TextEncoder::null_tokens() const { return null_token; }

void TextEncoder::collect(ParamList& out, const std::string& prefix) const {
    register_param(out, prefix + ".embed", embed);
    register_param(out, prefix + ".null_token", null_token);
    for (size_t i = 0; i < layers.size(); ++i)
        layers[i].collect(out, prefix + ".layer" + std::to_string(i));
}

void PointEncoder::init(const ModelConfig& cfg, Rng& rng) {
    tokens = cfg.object_point_tokens;
    mlp1.init(3, 64, rng);
    mlp2.init(64, cfg.d_t, rng);
}

std::vector<int> farthest_point_indices(const std::vector<Vec3>& points, int count) {
    int p = static_cast<int>(points.size());
    auto lex_less = [&](int i, int j) {
        const Vec3 &u = points[static_cast<size_t>(i)], &v = points[static_cast<size_t>(j)];
        if (u.x != v.x) return u.x < v.x;
        if (u.y != v.y) return u.y < v.y;
        return u.z < v.z;
    };
    // start at the point farthest from the centroid; ties resolve to the
    // lexicographically smallest point so the choice is permutation-invariant
    Vec3 centroid{0, 0, 0};
    for (const Vec3& q : points) centroid += q;
    centroid = centroid * (1.0 / p);
    int start = 0;
    double best = -1.0;
    for (int i = 0; i < p; ++i) {
        double d = (points[static_cast<size_t>(i)] - centroid).norm2();
        if (d > best || (d == best && lex_less(i, start))) {
            best = d;
            start = i;
        }
    }
    std::vector<int> seeds{start};
    std::vector<double> min_dist(static_cast<size_t>(p), 1e300);
    std::vector<uint8_t> taken(static_cast<size_t>(p), 0);
    taken[static_cast<size_t>(start)] = 1;
    while (static_cast<int>(seeds.size()) < count) {
        int last = seeds.back();
        for (int i = 0; i < p; ++i)
            min_dist[static_cast<size_t>(i)] = std::min(
                min_dist[static_cast<size_t>(i)],
                (points[static_cast<size_t>(i)] - points[static_cast<size_t>(last)]).norm2());
        int next = -1;
        double far = -1.0;
        for (int i = 0; i < p; ++i) {
            if (taken[static_cast<size_t>(i)]) continue;
            if (min_dist[static_cast<size_t>(i)] > far ||
                (min_dist[static_cast<size_t>(i)] == far && (next < 0 || lex_less(i, next)))) {
                far = min_dist[static_cast<size_t>(i)];
                next = i;
            }
        }
        if (next < 0) break;  // fewer distinct points than seeds requested
        seeds.push_back(next);
        taken[static_cast<size_t>(next)] = 1;
    }
    while (static_cast<int>(seeds.size()) < count) seeds.push_back(seeds.back());
    // canonical seed order: lexicographic by coordinates
    std::sort(seeds.begin(), seeds.end(), [&](int i, int j) {
        if (lex_less(i, j)) return true;
        if (lex_less(j, i)) return false;
        return i < j;
    });
    return seeds;
}

Tensor PointEncoder::forward(const std::vector<Vec3>& points) const {
    if (points.empty()) throw ShapeError("point encoder needs at least one point");
    for (const Vec3& q : points)
        if (!std::isfinite(q.x) || !std::isfinite(q.y) || !std::isfinite(q.z))
            throw InvalidFeatures("non-finite object point");
    std::vector<Vec3> pts = points;
    if (static_cast<int>(pts.size()) < tokens) {
        std::fprintf(stderr, "warning: %zu object points < %d tokens, resampling with replacement\n",
                     points.size(), tokens);
        size_t i = 0;
        while (static_cast<int>(pts.size()) < tokens) pts.push_back(points[i++ % points.size()]);
    }
    std::vector<int> seeds = farthest_point_indices(pts, tokens);
    int p = static_cast<int>(pts.size());

    // cluster assignment: nearest seed by value, ties to the lowest seed index;
    // each seed point anchors its own cluster
    std::vector<int> cluster(static_cast<size_t>(p));
    for (int i = 0; i < p; ++i) {
        int bestSeed = 0;
        double bestD = 1e300;
        for (int s = 0; s < tokens; ++s) {
            double d = (pts[static_cast<size_t>(i)] - pts[static_cast<size_t>(seeds[static_cast<size_t>(s)])]).norm2();
            if (d < bestD) {
                bestD = d;
                bestSeed = s;
            }
        }
        cluster[static_cast<size_t>(i)] = bestSeed;
    }
    for (int s = 0; s < tokens; ++s) cluster[static_cast<size_t>(seeds[static_cast<size_t>(s)])] = s;

    std::vector<double> coords;
    coords.reserve(static_cast<size_t>(p) * 3);
    for (const Vec3& q : pts) {
        coords.push_back(q.x);
        coords.push_back(q.y);
        coords.push_back(q.z);
    }
    Tensor x = Tensor::from({p, 3}, std::move(coords));
    Tensor feats = mlp2.forward(ops::gelu(mlp1.forward(x)));  // [P, d_t]
    return ops::segment_max(feats, cluster, tokens);
}

void PointEncoder::collect(ParamList& out, const std::string& prefix) const {
    mlp1.collect(out, prefix + ".mlp1");
    mlp2.collect(out, prefix + ".mlp2");
}

void ConditionedDecoder::init(int d_t, int heads, Rng& rng) {
    geometry_decoder.init(d_t, heads, rng);
    text_decoder.init(d_t, heads, rng);
}

Tensor ConditionedDecoder::forward(const Tensor& queries, const Tensor& geom_memory,
                                   const Tensor& text_memory,
                                   const std::vector<uint8_t>& text_key_valid) const {
    Tensor h = geometry_decoder.forward(queries, geom_memory);
    std::vector<uint8_t> mask;
    if (!text_key_valid.empty()) {
        int n_q = h.dim(0);
        int n_k = text_memory.dim(0);
        mask.assign(static_cast<size_t>(n_q) * n_k, 1);
        for (int r = 0; r < n_q; ++r)
            for (int c = 0; c < n_k; ++c)
                mask[static_cast<size_t>(r) * n_k + c] = text_key_valid[static_cast<size_t>(c)];
    }
    return text_decoder.forward(h, text_memory, mask);
}

void ConditionedDecoder::collect(ParamList& out, const std::string& prefix) const {
    geometry_decoder.collect(out, prefix + ".geom");
    text_decoder.collect(out, prefix + ".text");
}

void SemanticConsistentModule::init(const ModelConfig& cfg, Rng& rng) {
    node_proj.init(cfg.d_m, cfg.d_t, rng);
    decoder.init(cfg.d_t, cfg.heads, rng);
    positions = sinusoidal_positions(cfg.max_len, cfg.d_t);
}

Tensor SemanticConsistentModule::forward(const Tensor& z, const Tensor& geom_memory,
                                         const Tensor& text_memory,
                                         const std::vector<uint8_t>& text_key_valid) const {
    int L = z.dim(0);
    if (L > positions.dim(0)) throw ShapeError("sequence longer than the position table");
    Tensor tokens = ops::mean_axis1(node_proj.forward(z));  // [L, d_t]
    tokens = ops::add(tokens, ops::narrow(positions, 0, 0, L));
    return decoder.forward(tokens, geom_memory, text_memory, text_key_valid);
}

void SemanticConsistentModule::collect(ParamList& out, const std::string& prefix) const {
    node_proj.collect(out, prefix + ".node_proj");
    decoder.collect(out, prefix + ".decoder");
}

void GstGcnBlock::init(const ModelConfig& cfg, const Tensor& a_hat, Rng& rng) {
    gcn.init(cfg.d_m, cfg.d_m, a_hat, rng);
    temporal.init(cfg.d_m, rng);
    scm.init(cfg, rng);
    cond_proj.init(cfg.d_t, cfg.d_m, rng);
    fuse.init(2 * cfg.d_m, cfg.d_m, rng);
}

Tensor GstGcnBlock::forward(const Tensor& z, const Tensor& geom_memory, const Tensor& text_memory,
                            const std::vector<uint8_t>& text_key_valid, bool use_scm) const {
    Tensor z_s = temporal.forward(gcn.forward(z));  // [L, n, d_m]
    Tensor z_l;
    if (use_scm) {
        Tensor pooled = scm.forward(z, geom_memory, text_memory, text_key_valid);  // [L, d_t]
        z_l = ops::repeat_middle(cond_proj.forward(pooled), z.dim(1));             // [L, n, d_m]
    } else {
        z_l = Tensor::zeros(z_s.shape());
    }
    return fuse.forward(ops::concat(z_l, z_s, 2));
}

void GstGcnBlock::collect(ParamList& out, const std::string& prefix) const {
    gcn.collect(out, prefix + ".gcn");
    temporal.collect(out, prefix + ".temporal");
    scm.collect(out, prefix + ".scm");
    cond_proj.collect(out, prefix + ".cond_proj");
    fuse.collect(out, prefix + ".fuse");
}

void KinematicAwareDecoder::init(const ModelConfig& cfg, Rng& rng) {
    jt_proj.init(cfg.d_m, cfg.d_t, rng);
    ln1.init(cfg.d_t);
    ln2.init(cfg.d_t);
    ln3.init(cfg.d_t);
    self_attn.init(cfg.d_t, cfg.heads, rng);
    cross_attn.init(cfg.d_t, cfg.heads, rng);
    ffn.init(cfg.d_t, 4 * cfg.d_t, rng);
    fuse_fc.init(6 * cfg.d_t, cfg.node_count() * cfg.d_t, rng);
    fuse_out.init(2 * cfg.d_t, cfg.d_m, rng);
}

Tensor KinematicAwareDecoder::chain_tokens_after_attention(const Tensor& kt_ctx,
                                                           const Tensor& y_frame,
                                                           const std::vector<uint8_t>& mask) const {
    Tensor jt = jt_proj.forward(y_frame);  // [n, d_t]
    Tensor n1 = ln1.forward(kt_ctx);
    Tensor kt = ops::add(kt_ctx, self_attn.forward(n1, n1));        // KT'
    kt = ops::add(kt, cross_attn.forward(ln2.forward(kt), jt, mask));  // masked cross
    return ops::add(kt, ffn.forward(ln3.forward(kt)));
}

Tensor KinematicAwareDecoder::forward_frame(const Tensor& kt_ctx, const Tensor& y_frame,
                                            const std::vector<uint8_t>& mask,
                                            int chain_count) const {
    Tensor kt_out = chain_tokens_after_attention(kt_ctx, y_frame, mask);  // [6, d_t]
    int n = y_frame.dim(0);
    int d_t = kt_ctx.dim(1);
    Tensor flat = ops::reshape(kt_out, {1, chain_count * d_t});
    Tensor spread = ops::reshape(fuse_fc.forward(flat), {n, d_t});  // v''
    Tensor jt = jt_proj.forward(y_frame);                           // y bar
    return fuse_out.forward(ops::concat(spread, jt, 1));            // [n, d_m]
}

void KinematicAwareDecoder::collect(ParamList& out, const std::string& prefix) const {
    jt_proj.collect(out, prefix + ".jt_proj");
    ln1.collect(out, prefix + ".ln1");
    ln2.collect(out, prefix + ".ln2");
    ln3.collect(out, prefix + ".ln3");
    self_attn.collect(out, prefix + ".self_attn");
    cross_attn.collect(out, prefix + ".cross_attn");
    ffn.collect(out, prefix + ".ffn");
    fuse_fc.collect(out, prefix + ".fuse_fc");
    fuse_out.collect(out, prefix + ".fuse_out");
}

void ChainHoiBlock::init(const ModelConfig& cfg, const Tensor& a_hat, Rng& rng) {
    gstgcn.init(cfg, a_hat, rng);
    context_decoder.init(cfg.d_t, cfg.heads, rng);
    kim.init(cfg, rng);
}

void ChainHoiBlock::collect(ParamList& out, const std::string& prefix) const {
    gstgcn.collect(out, prefix + ".gstgcn");
    context_decoder.collect(out, prefix + ".context");
    kim.collect(out, prefix + ".kim");
}

void ChainHoiModel::init(const ModelConfig& config, const SkeletonSpec& skeleton, Rng& rng) {
    config.validate();
    skeleton.validate();
    if (config.joint_count != skeleton.joint_count)
        throw ConfigError("model joint_count disagrees with the skeleton");
    cfg = config;
    spec = skeleton;
    graph = build_hoi_graph(spec, cfg.object_connect_all);
    chains = build_kinetic_chains(spec);
    chain_mask = build_chain_attention_mask(chains, spec.node_count());

    text_encoder.init(cfg, rng);
    point_encoder.init(cfg, rng);
    chain_tokens = Tensor::randn({static_cast<int>(chains.chains.size()), cfg.d_t}, rng, 0.02);
    chain_tokens.set_requires_grad(true);
    input_proj.init(kFeatureWidth, cfg.d_m, rng);
    time_proj.init(cfg.d_t, cfg.d_t, rng);
    output_proj.init(cfg.d_m, kFeatureWidth, rng);
    blocks.resize(static_cast<size_t>(cfg.n_blocks));
    for (auto& b : blocks) b.init(cfg, graph.normalized, rng);
}

ConditionBundle ChainHoiModel::make_condition(const std::vector<int>& text_ids,
                                              const std::vector<Vec3>& object_points) const {
    ConditionBundle cond;
    cond.text_tokens = text_encoder.forward(text_ids);
    cond.text_valid.assign(static_cast<size_t>(cond.text_tokens.dim(0)), 1);
    cond.geometry_tokens = point_encoder.forward(object_points);
    return cond;
}

ConditionBundle ChainHoiModel::make_null_condition(const std::vector<Vec3>& object_points) const {
    ConditionBundle cond;
    cond.text_tokens = text_encoder.null_tokens();
    cond.text_valid.assign(1, 1);
    cond.geometry_tokens = point_encoder.forward(object_points);
    cond.null_condition = true;
    return cond;
}

std::vector<uint8_t> ChainHoiModel::active_chain_mask() const {
    if (!cfg.kim_mask_enabled)
        return std::vector<uint8_t>(chain_mask.m.size(), 1);  // "w/o mask in KIM"
    return chain_mask.m;
}

Tensor ChainHoiModel::forward(const Tensor& m_t, int t, const ConditionBundle& cond) const {
    if (t < 0 || t >= cfg.max_timesteps)
        throw TimestepError("timestep " + std::to_string(t) + " outside [0, " +
                            std::to_string(cfg.max_timesteps) + ")");
    if (m_t.ndim() != 3 || m_t.dim(1) != cfg.node_count() || m_t.dim(2) != kFeatureWidth)
        throw ShapeError("model input must be [L, J+2, 12], got " + shape_str(m_t.shape()));
    int L = m_t.dim(0);
    if (L > cfg.max_len) throw ShapeError("sequence longer than max_len");

    Tensor t_token =
        time_proj.forward(ops::reshape(sinusoidal_embedding(static_cast<double>(t), cfg.d_t),
                                       {1, cfg.d_t}));
    Tensor geom_memory = ops::concat(cond.geometry_tokens, t_token, 0);

    std::vector<uint8_t> mask = active_chain_mask();
    Tensor z = input_proj.forward(m_t);  // [L, n, d_m]
    for (const auto& block : blocks) {
        Tensor y = block.gstgcn.forward(z, geom_memory, cond.text_tokens, cond.text_valid,
                                        cfg.use_scm);
        if (!cfg.use_kim) {
            z = y;
            continue;
        }
        Tensor kt_ctx = block.context_decoder.forward(chain_tokens, geom_memory, cond.text_tokens,
                                                      cond.text_valid);
        std::vector<Tensor> frames;
        frames.reserve(static_cast<size_t>(L));
        for (int i = 0; i < L; ++i) {
            Tensor y_i = ops::reshape(ops::narrow(y, 0, i, 1), {cfg.node_count(), cfg.d_m});
            frames.push_back(block.kim.forward_frame(kt_ctx, y_i, mask,
                                                     static_cast<int>(chains.chains.size())));
        }
        z = ops::stack0(frames);
    }
    return output_proj.forward(z);
}

ParamList ChainHoiModel::params() {
    ParamList out;
    text_encoder.collect(out, "text_encoder");
    point_encoder.collect(out, "point_encoder");
    register_param(out, "chain_tokens", chain_tokens);
    input_proj.collect(out, "input_proj");
    time_proj.collect(out, "time_proj");
    output_proj.collect(out, "output_proj");
    for (size_t i = 0; i < blocks.size(); ++i)
        blocks[i].collect(out, "block" + std::to_string(i));
    return out;
}

int64_t ChainHoiModel::param_count() { return total_param_count(params()); }

}  // namespace chainhoi
