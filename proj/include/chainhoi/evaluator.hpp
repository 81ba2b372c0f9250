#pragma once

#include <string>
#include <vector>

#include "chainhoi/hoi_repr.hpp"
#include "chainhoi/modules.hpp"

namespace chainhoi {

struct EvaluatorConfig {
    int width = 32;
    int layers = 2;
    int heads = 4;
    int proj_dim = 32;
    int max_len = 512;
    std::vector<std::string> vocab;
};

// Contrastive two-branch feature extractor used by FID / R-Precision. The
// motion branch pools per-frame node features under a CLS token; the text
// branch mirrors the stub text encoder. Output features are L2-normalized
// projections.
class ToyEvaluator {
public:
    EvaluatorConfig cfg;

    // motion branch
    Linear node_proj;  // 12 -> width, per node, mean-pooled over nodes
    Tensor cls_motion;
    std::vector<EncoderLayer> motion_layers;
    Tensor motion_positions;

    // text branch
    Tensor embed;
    Tensor cls_text;
    std::vector<EncoderLayer> text_layers;
    Tensor text_positions;

    Linear proj_motion, proj_text;  // width -> proj_dim
    Tensor log_scale;               // learnable InfoNCE temperature (scale = exp)

    void init(const EvaluatorConfig& config, Rng& rng);

    Tensor motion_features(const Tensor& frames) const;      // [L, n, 12] -> [1, proj]
    Tensor motion_features(const HoiSequence& seq) const;
    Tensor text_features(const std::vector<int>& ids) const;  // -> [1, proj]

    // symmetric InfoNCE over a batch of paired embeddings [B, proj]
    Tensor info_nce(const Tensor& motion_emb, const Tensor& text_emb) const;

    ParamList params();
    std::vector<uint8_t> motion_only_mask(const ParamList& params) const;
};

struct EvaluatorTrainStats {
    double initial_loss = 0.0;
    double final_loss = 0.0;
    int steps = 0;
};

// Two-stage contrastive training: the text branch (except its projection) is
// frozen for the first 5% of steps, then everything trains jointly.
EvaluatorTrainStats train_toy_evaluator(ToyEvaluator& evaluator,
                                        const std::vector<Tensor>& motions,
                                        const std::vector<std::vector<int>>& texts, int steps,
                                        int batch, double lr, Rng& rng);

// checkpoint with the config and vocabulary embedded
void save_evaluator(ToyEvaluator& evaluator, const std::string& path);
ToyEvaluator load_evaluator(const std::string& path);

}  // namespace chainhoi
