#pragma once

#include <string>
#include <vector>

#include "chainhoi/graph.hpp"
#include "chainhoi/hoi_repr.hpp"
#include "chainhoi/modules.hpp"
#include "chainhoi/skeleton.hpp"

namespace chainhoi {

struct ModelConfig {
    int n_blocks = 6;
    int d_m = 64;
    int d_t = 256;
    int heads = 4;
    int joint_count = 22;
    int object_point_tokens = 16;
    int text_encoder_layers = 2;
    int max_timesteps = 1000;
    int max_len = 512;
    double dropout = 0.0;
    double cfg_text_dropout = 0.1;  // chance of training with the null text token
    std::vector<std::string> vocab;

    // ablation hooks
    bool kim_mask_enabled = true;  // false = "w/o mask in KIM"
    bool use_kim = true;           // false together with use_scm=false = "ST-GCN only"
    bool use_scm = true;           // false = "w/o SCM"
    bool object_connect_all = false;  // graph design B

    int node_count() const { return joint_count + 2; }
    void validate() const;
};

// lowercase word tokenizer over a closed vocabulary
std::vector<std::string> split_words(const std::string& text);
std::vector<int> tokenize(const std::string& text, const std::vector<std::string>& vocab);

struct ConditionBundle {
    Tensor text_tokens;               // [n_text, d_t]
    std::vector<uint8_t> text_valid;  // per-row key validity
    Tensor geometry_tokens;           // [object_point_tokens, d_t]
    bool null_condition = false;
};

// Trainable stand-in for the pretrained text tower: embedding + sinusoidal
// positions + a small self-attention encoder.
struct TextEncoder {
    Tensor embed;       // [V, d_t]
    Tensor null_token;  // [1, d_t]
    std::vector<EncoderLayer> layers;
    Tensor positions;   // constant table

    void init(const ModelConfig& cfg, Rng& rng);
    Tensor forward(const std::vector<int>& ids) const;  // empty ids -> null token
    Tensor null_tokens() const;
    void collect(ParamList& out, const std::string& prefix) const;
};

// Point-cloud encoder: farthest-point sampling to seed tokens, a shared MLP
// per point, and a max-pool over each seed's nearest-neighbor cluster.
struct PointEncoder {
    int tokens = 16;
    Linear mlp1, mlp2;  // 3 -> 64 -> d_t

    void init(const ModelConfig& cfg, Rng& rng);
    Tensor forward(const std::vector<Vec3>& points) const;
    void collect(ParamList& out, const std::string& prefix) const;
};

// Deterministic, permutation-invariant FPS with canonical seed ordering.
std::vector<int> farthest_point_indices(const std::vector<Vec3>& points, int count);

// Two independent decoders: queries attend first to object geometry (plus the
// timestep token), then to text.
struct ConditionedDecoder {
    DecoderLayer geometry_decoder;
    DecoderLayer text_decoder;

    void init(int d_t, int heads, Rng& rng);
    Tensor forward(const Tensor& queries, const Tensor& geom_memory, const Tensor& text_memory,
                   const std::vector<uint8_t>& text_key_valid) const;
    void collect(ParamList& out, const std::string& prefix) const;
};

struct SemanticConsistentModule {
    Linear node_proj;  // d_m -> d_t, applied per node before mean pooling
    ConditionedDecoder decoder;
    Tensor positions;  // constant

    void init(const ModelConfig& cfg, Rng& rng);
    // z: [L, n, d_m] -> [L, d_t]
    Tensor forward(const Tensor& z, const Tensor& geom_memory, const Tensor& text_memory,
                   const std::vector<uint8_t>& text_key_valid) const;
    void collect(ParamList& out, const std::string& prefix) const;
};

struct GstGcnBlock {
    GraphConv gcn;
    TemporalMultiBranch temporal;
    SemanticConsistentModule scm;
    Linear cond_proj;  // d_t -> d_m
    Linear fuse;       // 2*d_m -> d_m

    void init(const ModelConfig& cfg, const Tensor& a_hat, Rng& rng);
    Tensor forward(const Tensor& z, const Tensor& geom_memory, const Tensor& text_memory,
                   const std::vector<uint8_t>& text_key_valid, bool use_scm) const;
    void collect(ParamList& out, const std::string& prefix) const;
};

struct KinematicAwareDecoder {
    Linear jt_proj;  // d_m -> d_t
    LayerNorm ln1, ln2, ln3;
    MultiHeadAttention self_attn;
    MultiHeadAttention cross_attn;
    FeedForward ffn;
    Linear fuse_fc;   // 6*d_t -> n*d_t
    Linear fuse_out;  // 2*d_t -> d_m

    void init(const ModelConfig& cfg, Rng& rng);
    // one frame: kt_ctx [6, d_t], y_frame [n, d_m] -> [n, d_m]
    Tensor forward_frame(const Tensor& kt_ctx, const Tensor& y_frame,
                         const std::vector<uint8_t>& mask, int chain_count) const;
    // exposed pieces for the mask-enforcement tests
    Tensor chain_tokens_after_attention(const Tensor& kt_ctx, const Tensor& y_frame,
                                        const std::vector<uint8_t>& mask) const;
    void collect(ParamList& out, const std::string& prefix) const;
};

struct ChainHoiBlock {
    GstGcnBlock gstgcn;
    ConditionedDecoder context_decoder;  // context-aware decoder over the chain tokens
    KinematicAwareDecoder kim;

    void init(const ModelConfig& cfg, const Tensor& a_hat, Rng& rng);
    void collect(ParamList& out, const std::string& prefix) const;
};

class ChainHoiModel {
public:
    ModelConfig cfg;
    SkeletonSpec spec;
    HoiGraph graph;
    KineticChains chains;
    ChainAttentionMask chain_mask;

    TextEncoder text_encoder;
    PointEncoder point_encoder;
    Tensor chain_tokens;  // [6, d_t] learnable
    Linear input_proj;    // 12 -> d_m
    Linear time_proj;     // d_t -> d_t
    Linear output_proj;   // d_m -> 12
    std::vector<ChainHoiBlock> blocks;

    void init(const ModelConfig& config, const SkeletonSpec& skeleton, Rng& rng);

    ConditionBundle make_condition(const std::vector<int>& text_ids,
                                   const std::vector<Vec3>& object_points) const;
    ConditionBundle make_null_condition(const std::vector<Vec3>& object_points) const;

    // m_t: [L, n, 12], t in [0, max_timesteps) -> predicted clean sample m0_hat
    Tensor forward(const Tensor& m_t, int t, const ConditionBundle& cond) const;

    ParamList params();
    int64_t param_count();

private:
    std::vector<uint8_t> active_chain_mask() const;
};

}  // namespace chainhoi
