#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "chainhoi/model.hpp"
#include "chainhoi/ops.hpp"
#include "test_util.hpp"

using namespace chainhoi;

namespace {

ModelConfig tiny_config() {
    ModelConfig cfg;
    cfg.n_blocks = 1;
    cfg.d_m = 8;
    cfg.d_t = 16;
    cfg.heads = 2;
    cfg.object_point_tokens = 4;
    cfg.vocab = {"a", "person", "grasps", "pushes", "the", "box", "ball", "with", "right", "left",
                 "hand"};
    return cfg;
}

ChainHoiModel make_model(const ModelConfig& cfg, uint64_t seed = 5) {
    ChainHoiModel model;
    Rng rng(seed);
    model.init(cfg, SkeletonSpec::smpl22(), rng);
    return model;
}

std::vector<Vec3> cube_corner_points() {
    std::vector<Vec3> pts;
    for (int i = 0; i < 8; ++i)
        pts.push_back({i & 1 ? 0.5 : -0.5, i & 2 ? 0.5 : -0.5, i & 4 ? 0.5 : -0.5});
    return pts;
}

}  // namespace

TEST_CASE("tokenizer and closed vocabulary") {
    std::vector<std::string> vocab = {"a", "person", "grasps", "the", "box"};
    auto ids = tokenize("A person grasps the box.", vocab);
    CHECK(ids == std::vector<int>{0, 1, 2, 3, 4});
    CHECK_THROWS_AS(tokenize("a person throws the box", vocab), VocabError);
}

TEST_CASE("text encoder: null fallback, determinism, distinguishability") {
    ModelConfig cfg = tiny_config();
    ChainHoiModel model = make_model(cfg);

    Tensor null1 = model.text_encoder.forward({});
    CHECK(null1.shape() == Shape{1, cfg.d_t});

    auto ids = tokenize("a person grasps the box", cfg.vocab);
    Tensor a = model.text_encoder.forward(ids);
    Tensor b = model.text_encoder.forward(ids);
    REQUIRE(a.shape() == b.shape());
    for (int64_t i = 0; i < a.numel(); ++i) CHECK(a.data()[i] == b.data()[i]);

    // one word different -> pooled embeddings not identical
    auto ids2 = tokenize("a person pushes the box", cfg.vocab);
    Tensor c = model.text_encoder.forward(ids2);
    auto pool = [](const Tensor& t) {
        std::vector<double> mean(static_cast<size_t>(t.dim(1)), 0.0);
        for (int r = 0; r < t.dim(0); ++r)
            for (int j = 0; j < t.dim(1); ++j) mean[static_cast<size_t>(j)] += t.at({r, j}) / t.dim(0);
        return mean;
    };
    auto pa = pool(a), pc = pool(c);
    double dot = 0, na = 0, nc = 0;
    for (size_t i = 0; i < pa.size(); ++i) {
        dot += pa[i] * pc[i];
        na += pa[i] * pa[i];
        nc += pc[i] * pc[i];
    }
    CHECK(dot / std::sqrt(na * nc) < 1.0 - 1e-9);
}

TEST_CASE("point encoder: degenerate cloud gives identical tokens") {
    ModelConfig cfg = tiny_config();
    ChainHoiModel model = make_model(cfg);
    std::vector<Vec3> same(20, Vec3{0.3, -0.1, 0.7});
    Tensor tok = model.point_encoder.forward(same);
    REQUIRE(tok.shape() == Shape{cfg.object_point_tokens, cfg.d_t});
    for (int s = 1; s < cfg.object_point_tokens; ++s)
        for (int j = 0; j < cfg.d_t; ++j) CHECK(tok.at({s, j}) == tok.at({0, j}));
}

TEST_CASE("FPS covers the cube corners") {
    std::vector<Vec3> pts = cube_corner_points();
    // upsample with duplicates; 8 distinct corners must all be chosen
    std::vector<Vec3> up = pts;
    for (int i = 0; i < 12; ++i) up.push_back(pts[static_cast<size_t>(i % 8)]);
    std::vector<int> seeds = farthest_point_indices(up, 8);
    std::set<std::array<double, 3>> coords;
    for (int s : seeds)
        coords.insert({up[static_cast<size_t>(s)].x, up[static_cast<size_t>(s)].y, up[static_cast<size_t>(s)].z});
    CHECK(coords.size() == 8);
}

TEST_CASE("point encoder is permutation invariant after canonicalization") {
    ModelConfig cfg = tiny_config();
    cfg.object_point_tokens = 16;
    ChainHoiModel model = make_model(cfg);
    Rng rng(61);
    std::vector<Vec3> pts;
    for (int i = 0; i < 48; ++i)
        pts.push_back({rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)});
    Tensor base = model.point_encoder.forward(pts);
    for (int rep = 0; rep < 5; ++rep) {
        std::vector<Vec3> shuffled = pts;
        for (size_t i = shuffled.size(); i > 1; --i)
            std::swap(shuffled[i - 1], shuffled[rng.index(i)]);
        Tensor perm = model.point_encoder.forward(shuffled);
        for (int64_t i = 0; i < base.numel(); ++i)
            CHECK(std::abs(base.data()[i] - perm.data()[i]) <= 1e-12);
    }
}

TEST_CASE("point encoder resamples small clouds with a warning") {
    ModelConfig cfg = tiny_config();
    cfg.object_point_tokens = 16;
    ChainHoiModel model = make_model(cfg);
    Tensor tok = model.point_encoder.forward(cube_corner_points());  // P=8 < 16
    CHECK(tok.shape() == Shape{16, cfg.d_t});
    CHECK(tok.all_finite());
}

TEST_CASE("forward contract: output shape equals input shape") {
    ModelConfig cfg = tiny_config();
    ChainHoiModel model = make_model(cfg);
    ConditionBundle cond =
        model.make_condition(tokenize("a person grasps the box", cfg.vocab), cube_corner_points());
    Rng rng(62);
    for (int L : {8, 16, 64}) {
        Tensor m_t = Tensor::randn({L, cfg.node_count(), kFeatureWidth}, rng);
        Tensor out = model.forward(m_t, 10, cond);
        CHECK(out.shape() == m_t.shape());
        CHECK(out.all_finite());
    }
    CHECK_THROWS_AS(model.forward(Tensor::zeros({4, cfg.node_count(), kFeatureWidth}), -1, cond),
                    TimestepError);
    CHECK_THROWS_AS(model.forward(Tensor::zeros({4, cfg.node_count(), kFeatureWidth}), 1000, cond),
                    TimestepError);
    CHECK_THROWS_AS(model.forward(Tensor::zeros({4, 5, kFeatureWidth}), 10, cond), ShapeError);
}

TEST_CASE("zeroed output projection gives constant bias output") {
    ModelConfig cfg = tiny_config();
    ChainHoiModel model = make_model(cfg);
    for (auto& v : model.output_proj.w.values()) v = 0.0;
    for (auto& v : model.output_proj.b.values()) v = 0.25;
    ConditionBundle cond = model.make_condition({}, cube_corner_points());
    Rng rng(63);
    Tensor out = model.forward(Tensor::randn({6, cfg.node_count(), kFeatureWidth}, rng), 3, cond);
    for (int64_t i = 0; i < out.numel(); ++i) CHECK(out.data()[i] == 0.25);
}

TEST_CASE("mask enforcement: outside-chain joints cannot influence chain tokens") {
    ModelConfig cfg = tiny_config();
    ChainHoiModel model = make_model(cfg);
    const auto& kim = model.blocks[0].kim;
    Rng rng(64);
    Tensor kt_ctx = Tensor::randn({6, cfg.d_t}, rng);
    Tensor y_frame = Tensor::randn({cfg.node_count(), cfg.d_m}, rng);
    Tensor base = kim.chain_tokens_after_attention(kt_ctx, y_frame, model.chain_mask.m);

    for (int c = 0; c < 6; ++c) {
        for (int node = 0; node < cfg.node_count(); ++node) {
            if (model.chain_mask.at(c, node)) continue;
            Tensor perturbed = y_frame.detached_copy();
            for (int j = 0; j < cfg.d_m; ++j)
                perturbed.data()[static_cast<int64_t>(node) * cfg.d_m + j] += 10.0;
            Tensor out = kim.chain_tokens_after_attention(kt_ctx, perturbed, model.chain_mask.m);
            for (int j = 0; j < cfg.d_t; ++j)
                CHECK(std::abs(out.at({c, j}) - base.at({c, j})) <= 1e-12);
        }
    }

    // analytic route: gradient of each chain token w.r.t. outside-chain rows is exactly zero
    for (int c = 0; c < 6; ++c) {
        Tensor y = y_frame.detached_copy();
        y.set_requires_grad(true);
        Tensor out = kim.chain_tokens_after_attention(kt_ctx, y, model.chain_mask.m);
        Tensor loss = ops::sum_all(ops::reshape(ops::narrow(out, 0, c, 1), {cfg.d_t}));
        loss.backward();
        const auto& g = y.grad();
        for (int node = 0; node < cfg.node_count(); ++node) {
            if (model.chain_mask.at(c, node)) continue;
            for (int j = 0; j < cfg.d_m; ++j)
                CHECK(g[static_cast<size_t>(node) * cfg.d_m + j] == 0.0);
        }
    }
}

TEST_CASE("human-object chain attends over exactly 9 keys") {
    ModelConfig cfg = tiny_config();
    ChainHoiModel model = make_model(cfg);
    const auto& kim = model.blocks[0].kim;
    Rng rng(65);
    Tensor kt_ctx = Tensor::randn({6, cfg.d_t}, rng);
    Tensor y_frame = Tensor::randn({cfg.node_count(), cfg.d_m}, rng);
    kim.chain_tokens_after_attention(kt_ctx, y_frame, model.chain_mask.m);
    const Tensor& w = kim.cross_attn.last_weights;  // [h, 6, n]
    REQUIRE(w.defined());
    int ho = KineticChains::kHumanObject;
    for (int h = 0; h < cfg.heads; ++h) {
        int nonzero = 0;
        for (int node = 0; node < cfg.node_count(); ++node) {
            double weight = w.at({h, ho, node});
            if (model.chain_mask.at(ho, node)) {
                CHECK(weight > 0.0);
                ++nonzero;
            } else {
                CHECK(weight == 0.0);
            }
        }
        CHECK(nonzero == 9);
    }
}

TEST_CASE("scm padding-mask invariance and null-condition difference") {
    ModelConfig cfg = tiny_config();
    ChainHoiModel model = make_model(cfg);
    Rng rng(66);
    Tensor z = Tensor::randn({5, cfg.node_count(), cfg.d_m}, rng);
    Tensor geom = Tensor::randn({4, cfg.d_t}, rng);

    auto ids = tokenize("a person grasps the box", cfg.vocab);
    Tensor text = model.text_encoder.forward(ids);
    // add a padding row marked invalid
    Tensor padded = ops::concat(text, Tensor::randn({1, cfg.d_t}, rng), 0);
    std::vector<uint8_t> valid(static_cast<size_t>(padded.dim(0)), 1);
    valid.back() = 0;

    const auto& scm = model.blocks[0].gstgcn.scm;
    Tensor base = scm.forward(z, geom, padded, valid);
    CHECK(base.shape() == Shape{5, cfg.d_t});

    // perturbing the ignored padding row leaves the output unchanged
    Tensor padded2 = padded.detached_copy();
    for (int j = 0; j < cfg.d_t; ++j)
        padded2.data()[static_cast<int64_t>(padded2.dim(0) - 1) * cfg.d_t + j] += 5.0;
    Tensor same = scm.forward(z, geom, padded2, valid);
    for (int64_t i = 0; i < base.numel(); ++i)
        CHECK(std::abs(base.data()[i] - same.data()[i]) <= 1e-12);

    // replacing real text with the null token changes the output
    std::vector<uint8_t> valid_one(1, 1);
    Tensor with_null = scm.forward(z, geom, model.text_encoder.null_tokens(), valid_one);
    double diff = 0;
    for (int64_t i = 0; i < base.numel(); ++i) diff += std::abs(base.data()[i] - with_null.data()[i]);
    CHECK(diff > 0.0);
}

TEST_CASE("L=1 semantic module and context decoder shape contracts") {
    ModelConfig cfg = tiny_config();
    ChainHoiModel model = make_model(cfg);
    Rng rng(67);
    Tensor z = Tensor::randn({1, cfg.node_count(), cfg.d_m}, rng);
    Tensor geom = Tensor::randn({4, cfg.d_t}, rng);
    Tensor text = model.text_encoder.forward({});
    std::vector<uint8_t> valid(1, 1);
    Tensor out = model.blocks[0].gstgcn.scm.forward(z, geom, text, valid);
    CHECK(out.shape() == Shape{1, cfg.d_t});
    CHECK(out.all_finite());

    Tensor kt = model.blocks[0].context_decoder.forward(model.chain_tokens, geom, text, valid);
    CHECK(kt.shape() == Shape{6, cfg.d_t});
    Tensor kt2 = model.blocks[0].context_decoder.forward(model.chain_tokens, geom, text, valid);
    for (int64_t i = 0; i < kt.numel(); ++i) CHECK(kt.data()[i] == kt2.data()[i]);
}

TEST_CASE("zeroed cross-attention output projection ignores the memory") {
    ModelConfig cfg = tiny_config();
    ChainHoiModel model = make_model(cfg);
    auto& dec = model.blocks[0].gstgcn.scm.decoder;
    for (auto& v : dec.geometry_decoder.cross_attn.wo.w.values()) v = 0.0;
    for (auto& v : dec.geometry_decoder.cross_attn.wo.b.values()) v = 0.0;
    for (auto& v : dec.text_decoder.cross_attn.wo.w.values()) v = 0.0;
    for (auto& v : dec.text_decoder.cross_attn.wo.b.values()) v = 0.0;
    Rng rng(68);
    Tensor z = Tensor::randn({4, cfg.node_count(), cfg.d_m}, rng);
    Tensor geom_a = Tensor::randn({4, cfg.d_t}, rng);
    Tensor geom_b = Tensor::randn({4, cfg.d_t}, rng);
    Tensor text = model.text_encoder.null_tokens();
    std::vector<uint8_t> valid(1, 1);
    Tensor a = model.blocks[0].gstgcn.scm.forward(z, geom_a, text, valid);
    Tensor b = model.blocks[0].gstgcn.scm.forward(z, geom_b, text, valid);
    for (int64_t i = 0; i < a.numel(); ++i) CHECK(a.data()[i] == b.data()[i]);
}

TEST_CASE("fusion: zero chain tokens leave only the joint-token half") {
    ModelConfig cfg = tiny_config();
    ChainHoiModel model = make_model(cfg);
    auto& kim = model.blocks[0].kim;
    Rng rng(69);
    Tensor y_frame = Tensor::randn({cfg.node_count(), cfg.d_m}, rng);
    // fuse_fc of a zero vector with zero bias is zero, so the first concat half
    // contributes nothing and the output tracks only y_frame
    for (auto& v : kim.fuse_fc.b.values()) v = 0.0;
    Tensor zero_kt = Tensor::zeros({1, 6 * cfg.d_t});
    Tensor spread = ops::reshape(kim.fuse_fc.forward(zero_kt), {cfg.node_count(), cfg.d_t});
    for (int64_t i = 0; i < spread.numel(); ++i) CHECK(spread.data()[i] == 0.0);

    // gradient reaches the chain-token embeddings through the fusion path
    Tensor kt_ctx = model.chain_tokens;
    Tensor out = kim.forward_frame(kt_ctx, y_frame, model.chain_mask.m, 6);
    CHECK(out.shape() == Shape{cfg.node_count(), cfg.d_m});
    model.chain_tokens.zero_grad();
    Tensor loss = ops::sum_all(ops::square(out));
    loss.backward();
    double gnorm = 0;
    for (double g : model.chain_tokens.grad()) gnorm += g * g;
    CHECK(gnorm > 0.0);
}

TEST_CASE("chain token gradients differ across chains under distinct losses") {
    ModelConfig cfg = tiny_config();
    ChainHoiModel model = make_model(cfg);
    Rng rng(70);
    Tensor y_frame = Tensor::randn({cfg.node_count(), cfg.d_m}, rng);
    model.chain_tokens.zero_grad();
    Tensor out = model.blocks[0].kim.chain_tokens_after_attention(model.chain_tokens, y_frame,
                                                                  model.chain_mask.m);
    // weight each chain's token differently
    std::vector<double> w(static_cast<size_t>(out.numel()));
    for (int c = 0; c < 6; ++c)
        for (int j = 0; j < cfg.d_t; ++j) w[static_cast<size_t>(c) * cfg.d_t + j] = c + 1.0;
    Tensor loss = ops::weighted_sum(out, w);
    loss.backward();
    const auto& g = model.chain_tokens.grad();
    double g0 = 0, g5 = 0;
    for (int j = 0; j < cfg.d_t; ++j) {
        g0 += std::abs(g[static_cast<size_t>(j)]);
        g5 += std::abs(g[static_cast<size_t>(5) * cfg.d_t + j]);
    }
    CHECK(g0 > 0.0);
    CHECK(g5 > 0.0);
    CHECK(g0 != doctest::Approx(g5).epsilon(1e-9));
}

TEST_CASE("ablation hooks produce runnable, different models") {
    ModelConfig cfg = tiny_config();
    cfg.n_blocks = 2;
    Rng data_rng(71);
    Tensor m_t = Tensor::randn({6, cfg.node_count(), kFeatureWidth}, data_rng);
    auto ids_points = cube_corner_points();

    ChainHoiModel full = make_model(cfg, 99);
    ConditionBundle cond = full.make_condition(tokenize("a person grasps the box", cfg.vocab),
                                               ids_points);
    Tensor base = full.forward(m_t, 7, cond);

    auto run_variant = [&](auto mutate) {
        ModelConfig c2 = cfg;
        mutate(c2);
        ChainHoiModel variant = make_model(c2, 99);  // same init stream
        ConditionBundle cv = variant.make_condition(tokenize("a person grasps the box", c2.vocab),
                                                    ids_points);
        Tensor out = variant.forward(m_t, 7, cv);
        CHECK(out.all_finite());
        double diff = 0;
        for (int64_t i = 0; i < out.numel(); ++i) diff += std::abs(out.data()[i] - base.data()[i]);
        return diff / static_cast<double>(out.numel());
    };

    CHECK(run_variant([](ModelConfig& c) { c.kim_mask_enabled = false; }) > 0.0);
    CHECK(run_variant([](ModelConfig& c) { c.use_scm = false; }) > 0.0);
    CHECK(run_variant([](ModelConfig& c) {
              c.use_scm = false;
              c.use_kim = false;
          }) > 0.0);
}

TEST_CASE("null condition and real text produce different outputs") {
    ModelConfig cfg = tiny_config();
    ChainHoiModel model = make_model(cfg);
    Rng rng(72);
    Tensor m_t = Tensor::randn({5, cfg.node_count(), kFeatureWidth}, rng);
    auto pts = cube_corner_points();
    ConditionBundle cond = model.make_condition(tokenize("a person grasps the box", cfg.vocab), pts);
    ConditionBundle uncond = model.make_null_condition(pts);
    Tensor a = model.forward(m_t, 11, cond);
    Tensor b = model.forward(m_t, 11, uncond);
    double diff = 0;
    for (int64_t i = 0; i < a.numel(); ++i) diff += std::abs(a.data()[i] - b.data()[i]);
    CHECK(diff / static_cast<double>(a.numel()) > 0.0);
}

TEST_CASE("parameter count matches the closed-form formula") {
    auto linear_params = [](int64_t in, int64_t out) { return in * out + out; };
    auto mha = [&](int64_t d) { return 4 * linear_params(d, d); };
    auto ffn = [&](int64_t d) { return linear_params(d, 4 * d) + linear_params(4 * d, d); };
    auto decoder_layer = [&](int64_t d) { return 6 * d + 2 * mha(d) + ffn(d); };
    auto encoder_layer = [&](int64_t d) { return 4 * d + mha(d) + ffn(d); };
    auto conditioned_decoder = [&](int64_t d) { return 2 * decoder_layer(d); };

    for (auto [blocks, dm, dt, heads, points] :
         {std::tuple{1, 8, 16, 2, 4}, std::tuple{2, 16, 32, 4, 16}, std::tuple{3, 64, 256, 4, 16}}) {
        ModelConfig cfg = tiny_config();
        cfg.n_blocks = blocks;
        cfg.d_m = dm;
        cfg.d_t = dt;
        cfg.heads = heads;
        cfg.object_point_tokens = points;
        ChainHoiModel model = make_model(cfg);

        int64_t d = dt, m = dm, n = cfg.node_count();
        int64_t v = static_cast<int64_t>(cfg.vocab.size());
        int64_t text = v * d + d + cfg.text_encoder_layers * encoder_layer(d);
        int64_t point = linear_params(3, 64) + linear_params(64, d);
        int64_t scm = linear_params(m, d) + conditioned_decoder(d);
        int64_t temporal = 4 * linear_params(m, m / 4) + 2 * (3 * (m / 4) * (m / 4) + m / 4);
        int64_t gstgcn = linear_params(m, m) + temporal + scm + linear_params(d, m) +
                         linear_params(2 * m, m);
        int64_t kim = linear_params(m, d) + 6 * d + 2 * mha(d) + ffn(d) +
                      linear_params(6 * d, n * d) + linear_params(2 * d, m);
        int64_t block = gstgcn + conditioned_decoder(d) + kim;
        int64_t expected = text + point + 6 * d + linear_params(12, m) + linear_params(d, d) +
                           linear_params(m, 12) + blocks * block;
        CHECK(model.param_count() == expected);
    }
}

TEST_CASE("gradient check through a one-block model") {
    ModelConfig cfg;
    cfg.n_blocks = 1;
    cfg.d_m = 4;
    cfg.d_t = 8;
    cfg.heads = 2;
    cfg.object_point_tokens = 2;
    cfg.vocab = {"hold", "it"};
    ChainHoiModel model = make_model(cfg, 7);
    Rng rng(73);
    Tensor m_t = Tensor::randn({3, cfg.node_count(), kFeatureWidth}, rng);
    m_t.set_requires_grad(true);
    std::vector<Vec3> pts = cube_corner_points();
    Tensor probe = Tensor::randn({3, cfg.node_count(), kFeatureWidth}, rng);

    auto loss_value = [&]() {
        ConditionBundle cond = model.make_condition({0, 1}, pts);
        return ops::sum_all(ops::mul(model.forward(m_t, 2, cond), probe)).item();
    };
    ConditionBundle cond = model.make_condition({0, 1}, pts);
    Tensor loss = ops::sum_all(ops::mul(model.forward(m_t, 2, cond), probe));
    m_t.zero_grad();
    for (auto& p : model.params()) p.tensor.zero_grad();
    loss.backward();

    // probe a subset of input coordinates
    std::vector<int64_t> idx;
    for (int64_t i = 0; i < m_t.numel(); i += 37) idx.push_back(i);
    auto r = chainhoi::testing::finite_diff_check(m_t, loss_value, m_t.grad(), idx);
    CHECK(r.max_rel_err < 1e-4);

    // and a few parameters from different submodules
    ParamList params = model.params();
    int checked = 0;
    for (auto& p : params) {
        if (p.name != "chain_tokens" && p.name.find("fuse_out.w") == std::string::npos &&
            p.name.find("embed") == std::string::npos)
            continue;
        std::vector<int64_t> pidx;
        for (int64_t i = 0; i < std::min<int64_t>(p.tensor.numel(), 6); ++i) pidx.push_back(i);
        auto pr = chainhoi::testing::finite_diff_check(p.tensor, loss_value, p.tensor.grad(), pidx);
        CHECK(pr.max_rel_err < 1e-4);
        ++checked;
    }
    CHECK(checked >= 2);
}
