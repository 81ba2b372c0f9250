#include "chainhoi/gradcheck.hpp"

#include <chrono>
#include <cmath>
#include <functional>
#include <sstream>

#include "chainhoi/graph.hpp"
#include "chainhoi/losses.hpp"
#include "chainhoi/model.hpp"
#include "chainhoi/modules.hpp"
#include "chainhoi/rng.hpp"

namespace chainhoi {

namespace {

constexpr double kEps = 1e-5;

double rel_err(double analytic, double numeric) {
    double denom = std::max({1.0, std::abs(analytic), std::abs(numeric)});
    return std::abs(analytic - numeric) / denom;
}

// one leaf checked against central differences; indices empty = all coords
double check_leaf(Tensor& leaf, const std::function<double()>& loss_value,
                  const std::vector<double>& analytic, const std::vector<int64_t>& indices,
                  int* coords) {
    double worst = 0.0;
    auto probe = [&](int64_t idx) {
        double saved = leaf.data()[idx];
        leaf.data()[idx] = saved + kEps;
        double up = loss_value();
        leaf.data()[idx] = saved - kEps;
        double down = loss_value();
        leaf.data()[idx] = saved;
        double numeric = (up - down) / (2.0 * kEps);
        worst = std::max(worst, rel_err(analytic[static_cast<size_t>(idx)], numeric));
        ++*coords;
    };
    if (indices.empty()) {
        for (int64_t i = 0; i < leaf.numel(); ++i) probe(i);
    } else {
        for (int64_t i : indices) probe(i);
    }
    return worst;
}

struct CaseRunner {
    std::vector<Tensor> leaves;
    std::vector<std::vector<int64_t>> subsets;  // parallel to leaves; empty = all
    std::function<Tensor()> build;

    double run(int* coords) {
        Tensor loss = build();
        for (auto& l : leaves) l.zero_grad();
        loss.backward();
        std::vector<std::vector<double>> grads;
        grads.reserve(leaves.size());
        for (auto& l : leaves) grads.push_back(l.grad());
        double worst = 0.0;
        auto value = [&]() { return build().item(); };
        for (size_t i = 0; i < leaves.size(); ++i)
            worst = std::max(worst, check_leaf(leaves[i], value, grads[i],
                                               i < subsets.size() ? subsets[i] : std::vector<int64_t>{},
                                               coords));
        return worst;
    }
};

GradCheckRow run_rows(const std::string& name, int cases,
                      const std::function<CaseRunner(int, Rng&)>& make_case, Rng& rng) {
    GradCheckRow row;
    row.op = name;
    row.cases = cases;
    auto start = std::chrono::steady_clock::now();
    for (int c = 0; c < cases; ++c) {
        CaseRunner runner = make_case(c, rng);
        row.max_rel_err = std::max(row.max_rel_err, runner.run(&row.coords));
    }
    row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return row;
}

Tensor probe_sum(const Tensor& x, const Tensor& probe) { return ops::sum_all(ops::mul(x, probe)); }

std::vector<int64_t> stride_subset(int64_t numel, int64_t step) {
    std::vector<int64_t> idx;
    for (int64_t i = 0; i < numel; i += step) idx.push_back(i);
    return idx;
}

}  // namespace

bool GradCheckReport::passed() const {
    for (const auto& r : rows)
        if (!(r.max_rel_err < tolerance)) return false;
    return !rows.empty();
}

std::string GradCheckReport::table() const {
    std::ostringstream os;
    os << "op                 cases   coords   max_rel_err   seconds   status\n";
    char buf[160];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof(buf), "%-18s %5d %8d   %11.3e   %7.2f   %s\n", r.op.c_str(),
                      r.cases, r.coords, r.max_rel_err, r.seconds,
                      r.max_rel_err < tolerance ? "ok" : "FAIL");
        os << buf;
    }
    return os.str();
}

GradCheckReport run_gradcheck_suite(uint64_t seed, int cases_per_op) {
    Rng rng(seed);
    GradCheckReport report;

    report.rows.push_back(run_rows(
        "linear", cases_per_op,
        [](int, Rng& r) {
            int m = 1 + static_cast<int>(r.index(5));
            int k = 1 + static_cast<int>(r.index(6));
            int n = 1 + static_cast<int>(r.index(5));
            CaseRunner c;
            Tensor x = Tensor::randn({m, k}, r).set_requires_grad(true);
            Tensor w = Tensor::randn({k, n}, r).set_requires_grad(true);
            Tensor b = Tensor::randn({n}, r).set_requires_grad(true);
            Tensor probe = Tensor::randn({m, n}, r);
            c.leaves = {x, w, b};
            c.build = [=]() { return probe_sum(ops::linear(x, w, b), probe); };
            return c;
        },
        rng));

    report.rows.push_back(run_rows(
        "attention", cases_per_op,
        [](int, Rng& r) {
            int heads = 1 + static_cast<int>(r.index(2));
            int d = 4 * heads;
            int n_q = 1 + static_cast<int>(r.index(4));
            int n_k = 1 + static_cast<int>(r.index(4));
            MultiHeadAttention mha;
            mha.init(d, heads, r);
            std::vector<uint8_t> mask(static_cast<size_t>(n_q) * n_k, 0);
            for (int i = 0; i < n_q; ++i) {
                for (int j = 0; j < n_k; ++j) mask[static_cast<size_t>(i) * n_k + j] = r.uniform() < 0.6;
                mask[static_cast<size_t>(i) * n_k + r.index(static_cast<uint64_t>(n_k))] = 1;
            }
            CaseRunner c;
            Tensor q = Tensor::randn({n_q, d}, r).set_requires_grad(true);
            Tensor kv = Tensor::randn({n_k, d}, r).set_requires_grad(true);
            Tensor probe = Tensor::randn({n_q, d}, r);
            c.leaves = {q, kv, mha.wq.w, mha.wk.w, mha.wv.w, mha.wo.w, mha.wo.b};
            for (auto& l : c.leaves) l.set_requires_grad(true);
            c.build = [=]() { return probe_sum(mha.forward(q, kv, mask), probe); };
            return c;
        },
        rng));

    report.rows.push_back(run_rows(
        "layer_norm", cases_per_op,
        [](int, Rng& r) {
            int rows = 1 + static_cast<int>(r.index(4));
            int d = 2 + static_cast<int>(r.index(7));
            CaseRunner c;
            Tensor x = Tensor::randn({rows, d}, r).set_requires_grad(true);
            Tensor g = Tensor::randn({d}, r).set_requires_grad(true);
            Tensor b = Tensor::randn({d}, r).set_requires_grad(true);
            Tensor probe = Tensor::randn({rows, d}, r);
            c.leaves = {x, g, b};
            c.build = [=]() { return probe_sum(ops::layer_norm(x, g, b), probe); };
            return c;
        },
        rng));

    report.rows.push_back(run_rows(
        "graph_conv", cases_per_op,
        [](int, Rng& r) {
            int n = 3 + static_cast<int>(r.index(4));
            int L = 2 + static_cast<int>(r.index(3));
            int din = 2 + static_cast<int>(r.index(4));
            int dout = 2 + static_cast<int>(r.index(4));
            Tensor adj = Tensor::zeros({n, n});
            for (int i = 0; i < n; ++i)
                for (int j = i + 1; j < n; ++j)
                    if (r.uniform() < 0.5) {
                        adj.data()[static_cast<int64_t>(i) * n + j] = 1.0;
                        adj.data()[static_cast<int64_t>(j) * n + i] = 1.0;
                    }
            GraphConv gc;
            gc.init(din, dout, normalize_adjacency(adj), r);
            CaseRunner c;
            Tensor x = Tensor::randn({L, n, din}, r).set_requires_grad(true);
            Tensor probe = Tensor::randn({L, n, dout}, r);
            c.leaves = {x, gc.proj.w, gc.proj.b};
            for (auto& l : c.leaves) l.set_requires_grad(true);
            c.build = [=]() { return probe_sum(gc.forward(x), probe); };
            return c;
        },
        rng));

    report.rows.push_back(run_rows(
        "temporal_conv", cases_per_op,
        [](int, Rng& r) {
            int d = 4 * (1 + static_cast<int>(r.index(2)));
            int L = 3 + static_cast<int>(r.index(5));
            int n = 1 + static_cast<int>(r.index(3));
            TemporalMultiBranch tmb;
            tmb.init(d, r);
            CaseRunner c;
            Tensor x = Tensor::randn({L, n, d}, r).set_requires_grad(true);
            Tensor probe = Tensor::randn({L, n, d}, r);
            c.leaves = {x, tmb.reduce1.w, tmb.reduce2.w, tmb.conv_w2, tmb.conv_b2, tmb.conv_w3};
            for (auto& l : c.leaves) l.set_requires_grad(true);
            c.build = [=]() { return probe_sum(tmb.forward(x), probe); };
            return c;
        },
        rng));

    report.rows.push_back(run_rows(
        "model_1block", cases_per_op,
        [](int, Rng& r) {
            ModelConfig cfg;
            cfg.n_blocks = 1;
            cfg.d_m = 4;
            cfg.d_t = 8;
            cfg.heads = 2;
            cfg.object_point_tokens = 2;
            cfg.vocab = {"push", "the", "box"};
            auto model = std::make_shared<ChainHoiModel>();
            model->init(cfg, SkeletonSpec::smpl22(), r);
            int L = 2 + static_cast<int>(r.index(2));
            auto points = std::make_shared<std::vector<Vec3>>();
            for (int i = 0; i < 6; ++i)
                points->push_back({r.uniform(-1, 1), r.uniform(-1, 1), r.uniform(-1, 1)});
            int t = static_cast<int>(r.index(1000));
            CaseRunner c;
            Tensor m_t = Tensor::randn({L, cfg.node_count(), kFeatureWidth}, r).set_requires_grad(true);
            Tensor probe = Tensor::randn({L, cfg.node_count(), kFeatureWidth}, r);
            c.leaves = {m_t};
            c.subsets = {stride_subset(m_t.numel(), 29)};
            // a few parameters spread across submodules
            ParamList params = model->params();
            for (auto& p : params) {
                if (p.name == "chain_tokens" || p.name == "block0.kim.fuse_out.w" ||
                    p.name == "block0.gstgcn.fuse.w" || p.name == "text_encoder.embed" ||
                    p.name == "input_proj.w") {
                    c.leaves.push_back(p.tensor);
                    c.subsets.push_back(stride_subset(std::min<int64_t>(p.tensor.numel(), 40), 7));
                }
            }
            c.build = [=]() {
                ConditionBundle cond = model->make_condition({0, 1, 2}, *points);
                return probe_sum(model->forward(m_t, t, cond), probe);
            };
            return c;
        },
        rng));

    report.rows.push_back(run_rows(
        "loss_h", cases_per_op,
        [](int caseno, Rng& r) {
            SkeletonSpec spec = SkeletonSpec::smpl22();
            TriangleMesh mesh = caseno % 2 ? TriangleMesh::box(0.4 + r.uniform(0, 0.3),
                                                               0.4 + r.uniform(0, 0.3),
                                                               0.4 + r.uniform(0, 0.3))
                                           : TriangleMesh::icosphere(0.3 + r.uniform(0, 0.2), 1);
            int L = 2 + static_cast<int>(r.index(3));
            std::vector<ObjectPose> poses;
            for (int t = 0; t < L; ++t)
                poses.push_back(ObjectPose{{r.uniform(-1, 1), r.uniform(-1, 1), r.uniform(-1, 1)},
                                           {r.uniform(-0.5, 0.5), 0.8 + r.uniform(-0.2, 0.2),
                                            0.7 + r.uniform(-0.2, 0.2)}});
            auto frames = std::make_shared<PosedMeshFrames>(mesh, poses);
            auto labels = std::make_shared<ContactLabels>();
            labels->length = L;
            labels->a.assign(static_cast<size_t>(L) * 8, 0);
            for (auto& b : labels->a) b = r.uniform() < 0.35 ? 1 : 0;
            labels->a[r.index(static_cast<uint64_t>(L) * 8)] = 1;
            CaseRunner c;
            Tensor pred = Tensor::randn({L, spec.node_count(), kFeatureWidth}, r);
            for (auto& v : pred.values()) v *= 0.3;
            pred.set_requires_grad(true);
            c.leaves = {pred};
            c.subsets = {stride_subset(pred.numel(), 17)};
            c.build = [=]() { return loss_h(pred, *labels, frames->queries(), spec); };
            return c;
        },
        rng));

    return report;
}

}  // namespace chainhoi
