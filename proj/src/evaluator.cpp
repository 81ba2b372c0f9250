#include "chainhoi/evaluator.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include "chainhoi/checkpoint.hpp"

namespace chainhoi {

void ToyEvaluator::init(const EvaluatorConfig& config, Rng& rng) {
    if (config.width % config.heads != 0) throw ConfigError("evaluator width % heads != 0");
    cfg = config;
    node_proj.init(kFeatureWidth, cfg.width, rng);
    cls_motion = Tensor::randn({1, cfg.width}, rng, 0.02);
    cls_motion.set_requires_grad(true);
    motion_layers.resize(static_cast<size_t>(cfg.layers));
    for (auto& l : motion_layers) l.init(cfg.width, cfg.heads, rng);
    motion_positions = sinusoidal_positions(cfg.max_len + 1, cfg.width);

    int v = std::max<int>(1, static_cast<int>(cfg.vocab.size()));
    embed = Tensor::randn({v, cfg.width}, rng, 0.02);
    embed.set_requires_grad(true);
    cls_text = Tensor::randn({1, cfg.width}, rng, 0.02);
    cls_text.set_requires_grad(true);
    text_layers.resize(static_cast<size_t>(cfg.layers));
    for (auto& l : text_layers) l.init(cfg.width, cfg.heads, rng);
    text_positions = sinusoidal_positions(64, cfg.width);

    proj_motion.init(cfg.width, cfg.proj_dim, rng);
    proj_text.init(cfg.width, cfg.proj_dim, rng);
    log_scale = Tensor::zeros({1});
    log_scale.set_requires_grad(true);
}

Tensor ToyEvaluator::motion_features(const Tensor& frames) const {
    if (frames.ndim() != 3 || frames.dim(2) != kFeatureWidth)
        throw ShapeError("motion features expect [L, n, 12]");
    int L = frames.dim(0);
    if (L + 1 > motion_positions.dim(0)) throw ShapeError("motion longer than position table");
    Tensor tokens = ops::mean_axis1(node_proj.forward(frames));  // [L, width]
    Tensor x = ops::concat(cls_motion, tokens, 0);               // [L+1, width]
    x = ops::add(x, ops::narrow(motion_positions, 0, 0, L + 1));
    for (const auto& l : motion_layers) x = l.forward(x);
    Tensor cls = ops::narrow(x, 0, 0, 1);
    return ops::l2_normalize_rows(proj_motion.forward(cls));
}

Tensor ToyEvaluator::motion_features(const HoiSequence& seq) const {
    Tensor frames = Tensor::from({seq.length, seq.node_count, kFeatureWidth}, seq.frames);
    return motion_features(frames);
}

Tensor ToyEvaluator::text_features(const std::vector<int>& ids) const {
    Tensor x;
    if (ids.empty()) {
        x = cls_text;
    } else {
        Tensor words = ops::embedding(embed, ids);
        x = ops::concat(cls_text, words, 0);
    }
    x = ops::add(x, ops::narrow(text_positions, 0, 0, x.dim(0)));
    for (const auto& l : text_layers) x = l.forward(x);
    Tensor cls = ops::narrow(x, 0, 0, 1);
    return ops::l2_normalize_rows(proj_text.forward(cls));
}

Tensor ToyEvaluator::info_nce(const Tensor& motion_emb, const Tensor& text_emb) const {
    if (motion_emb.shape() != text_emb.shape() || motion_emb.ndim() != 2)
        throw ShapeError("info_nce expects paired [B, d] embeddings");
    int b = motion_emb.dim(0);
    Tensor scale = ops::exp_op(log_scale);
    Tensor sims = ops::matmul(motion_emb, ops::transpose_last2(text_emb));  // [B, B]
    // scale the logits by the learnable temperature
    Tensor scale_row = ops::reshape(ops::repeat_middle(ops::reshape(scale, {1, 1}), b), {1, b});
    Tensor scale_full = ops::reshape(ops::repeat_middle(scale_row, b), {b, b});
    Tensor logits = ops::mul(sims, scale_full);
    Tensor nll_m = ops::scale(ops::mean_all(ops::diag_rows(ops::log_softmax_lastdim(logits))), -1.0);
    Tensor nll_t = ops::scale(
        ops::mean_all(ops::diag_rows(ops::log_softmax_lastdim(ops::transpose_last2(logits)))), -1.0);
    return ops::scale(ops::add(nll_m, nll_t), 0.5);
}

ParamList ToyEvaluator::params() {
    ParamList out;
    node_proj.collect(out, "motion.node_proj");
    register_param(out, "motion.cls", cls_motion);
    for (size_t i = 0; i < motion_layers.size(); ++i)
        motion_layers[i].collect(out, "motion.layer" + std::to_string(i));
    register_param(out, "text.embed", embed);
    register_param(out, "text.cls", cls_text);
    for (size_t i = 0; i < text_layers.size(); ++i)
        text_layers[i].collect(out, "text.layer" + std::to_string(i));
    proj_motion.collect(out, "proj.motion");
    proj_text.collect(out, "proj.text");
    register_param(out, "log_scale", log_scale);
    return out;
}

std::vector<uint8_t> ToyEvaluator::motion_only_mask(const ParamList& params) const {
    // stage one trains everything except the text branch body; the text
    // projection stays live, mirroring the two-stage schedule
    std::vector<uint8_t> active(params.size(), 1);
    for (size_t i = 0; i < params.size(); ++i) {
        const std::string& n = params[i].name;
        if (n.rfind("text.", 0) == 0) active[i] = 0;
    }
    return active;
}

EvaluatorTrainStats train_toy_evaluator(ToyEvaluator& evaluator,
                                        const std::vector<Tensor>& motions,
                                        const std::vector<std::vector<int>>& texts, int steps,
                                        int batch, double lr, Rng& rng) {
    if (motions.size() != texts.size() || motions.size() < 2)
        throw DatasetError("evaluator training needs at least 2 paired samples");
    int n = static_cast<int>(motions.size());
    batch = std::min(batch, n);

    AdamWConfig ocfg;
    ocfg.lr = lr;
    ocfg.weight_decay = 0.0;  // pure overfit objective for the feature extractor
    AdamW opt(evaluator.params(), ocfg);
    std::vector<uint8_t> stage_one = evaluator.motion_only_mask(opt.params());
    int freeze_steps = std::max(1, steps / 20);  // first 5%

    auto batch_loss = [&](const std::vector<int>& idx) {
        std::vector<Tensor> m_rows, t_rows;
        for (int i : idx) {
            m_rows.push_back(evaluator.motion_features(motions[static_cast<size_t>(i)]));
            t_rows.push_back(evaluator.text_features(texts[static_cast<size_t>(i)]));
        }
        Tensor m = m_rows[0], t = t_rows[0];
        for (size_t i = 1; i < m_rows.size(); ++i) {
            m = ops::concat(m, m_rows[i], 0);
            t = ops::concat(t, t_rows[i], 0);
        }
        return evaluator.info_nce(m, t);
    };

    EvaluatorTrainStats stats;
    stats.steps = steps;
    std::vector<int> order(static_cast<size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    size_t cursor = order.size();
    for (int step = 0; step < steps; ++step) {
        // batches without replacement; duplicates would make InfoNCE targets ambiguous
        std::vector<int> idx;
        for (int i = 0; i < batch; ++i) {
            if (cursor == order.size()) {
                for (size_t k = order.size(); k > 1; --k) std::swap(order[k - 1], order[rng.index(k)]);
                cursor = 0;
            }
            idx.push_back(order[cursor++]);
        }
        opt.set_active(step < freeze_steps ? stage_one : std::vector<uint8_t>{});
        opt.zero_grad();
        Tensor loss = batch_loss(idx);
        if (step == 0) stats.initial_loss = loss.item();
        loss.backward();
        opt.step();
        stats.final_loss = loss.item();
    }
    return stats;
}

void save_evaluator(ToyEvaluator& evaluator, const std::string& path) {
    Checkpoint ck;
    ck.put_params(evaluator.params());
    std::ostringstream meta;
    meta << evaluator.cfg.width << ' ' << evaluator.cfg.layers << ' ' << evaluator.cfg.heads << ' '
         << evaluator.cfg.proj_dim << ' ' << evaluator.cfg.max_len;
    ck.put_bytes("evaluator.config", meta.str());
    std::ostringstream vocab;
    for (size_t i = 0; i < evaluator.cfg.vocab.size(); ++i)
        vocab << (i ? "," : "") << evaluator.cfg.vocab[i];
    ck.put_bytes("evaluator.vocab", vocab.str());
    ck.save(path);
}

ToyEvaluator load_evaluator(const std::string& path) {
    Checkpoint ck = Checkpoint::load(path);
    EvaluatorConfig cfg;
    std::istringstream meta(ck.get_bytes("evaluator.config"));
    meta >> cfg.width >> cfg.layers >> cfg.heads >> cfg.proj_dim >> cfg.max_len;
    std::istringstream vocab(ck.get_bytes("evaluator.vocab"));
    std::string word;
    while (std::getline(vocab, word, ','))
        if (!word.empty()) cfg.vocab.push_back(word);
    ToyEvaluator evaluator;
    Rng rng(0);
    evaluator.init(cfg, rng);
    ParamList params = evaluator.params();
    ck.load_params(params);
    return evaluator;
}

}  // namespace chainhoi
