#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "chainhoi/metrics.hpp"

using namespace chainhoi;

namespace {

// hand-built sequences with exact foot trajectories: we write global motion
// and encode it, keeping feet where we put them
HoiSequence feet_sequence(const SkeletonSpec& spec, const std::vector<double>& foot_height,
                          const std::vector<double>& foot_x, const ObjectPose& pose = {}) {
    std::vector<Vec3> rest = spec.rest_local_positions();
    GlobalMotion m;
    m.fps = 20.0;
    int L = static_cast<int>(foot_height.size());
    for (int t = 0; t < L; ++t) {
        std::vector<Vec3> pos(22);
        std::vector<Mat3> rots(22, Mat3::identity());
        for (int j = 0; j < 22; ++j) pos[static_cast<size_t>(j)] = Vec3{0, 0.95, 0} + rest[static_cast<size_t>(j)];
        for (int f : spec.foot_joints) {
            pos[static_cast<size_t>(f)].y = foot_height[static_cast<size_t>(t)];
            pos[static_cast<size_t>(f)].x += foot_x[static_cast<size_t>(t)];
        }
        m.positions.push_back(pos);
        m.rotations.push_back(rots);
        m.object_poses.push_back(pose);
    }
    return encode_sequence(m, spec);
}

Tensor gaussian_features(Rng& rng, int n, int d, double mean, double stddev) {
    Tensor t = Tensor::zeros({n, d});
    for (auto& v : t.values()) v = rng.normal(mean, stddev);
    return t;
}

}  // namespace

TEST_CASE("FSR: planted feet score zero") {
    SkeletonSpec spec = SkeletonSpec::smpl22();
    std::vector<double> h(12, 0.01), x(12, 0.0);
    HoiSequence seq = feet_sequence(spec, h, x);
    CHECK(metric_fsr(seq, spec) == 0.0);
}

TEST_CASE("FSR: constructed half-slide scores exactly one half") {
    SkeletonSpec spec = SkeletonSpec::smpl22();
    // 17 frames = 16 transitions; feet low in all; slide 0.04/frame in the
    // first 8 transitions, planted for the rest
    int L = 17;
    std::vector<double> h(static_cast<size_t>(L), 0.01);
    std::vector<double> x(static_cast<size_t>(L), 0.0);
    for (int t = 1; t < L; ++t)
        x[static_cast<size_t>(t)] = x[static_cast<size_t>(t - 1)] + (t <= 8 ? 0.04 : 0.0);
    HoiSequence seq = feet_sequence(spec, h, x);
    CHECK(metric_fsr(seq, spec) == 0.5);
}

TEST_CASE("FSR: airborne feet never gate") {
    SkeletonSpec spec = SkeletonSpec::smpl22();
    std::vector<double> h(10, 0.4);
    std::vector<double> x(10);
    for (int t = 0; t < 10; ++t) x[static_cast<size_t>(t)] = 0.1 * t;  // fast but high
    HoiSequence seq = feet_sequence(spec, h, x);
    CHECK(metric_fsr(seq, spec) == 0.0);

    HoiSequence short_seq = seq;
    short_seq.length = 1;
    short_seq.frames.resize(static_cast<size_t>(short_seq.node_count) * kFeatureWidth);
    CHECK_THROWS_AS(metric_fsr(short_seq, spec), TooShort);
}

TEST_CASE("CD: zero on surface, exact single-pair value, loop oracle") {
    SkeletonSpec spec = SkeletonSpec::smpl22();
    TriangleMesh cube = TriangleMesh::box(1, 1, 1);
    std::vector<double> h(4, 0.02), x(4, 0.0);

    // place the object so its face passes through the left wrist
    HoiSequence probe = feet_sequence(spec, h, x);
    DecodedMotion dec = decode_sequence(probe, spec);
    int lw = spec.interaction_joints[6];
    Vec3 wrist = dec.positions[0][static_cast<size_t>(lw)];
    ObjectPose touching{{0, 0, 0}, wrist + Vec3{0.5, 0, 0}};
    HoiSequence seq = feet_sequence(spec, h, x, touching);

    ContactLabels labels;
    labels.length = 4;
    labels.a.assign(4 * 8, 0);
    for (int t = 0; t < 4; ++t) labels.a[static_cast<size_t>(t) * 8 + 6] = 1;
    ContactDistanceResult cd = metric_cd(seq, labels, cube, spec);
    CHECK(cd.labeled_pairs == 4);
    CHECK(cd.value <= 1e-9);

    // single labeled pair at a known distance: move the object 0.2 further out
    ObjectPose away{{0, 0, 0}, wrist + Vec3{0.7, 0, 0}};
    HoiSequence seq2 = feet_sequence(spec, h, x, away);
    ContactLabels one;
    one.length = 4;
    one.a.assign(4 * 8, 0);
    one.a[6] = 1;
    ContactDistanceResult cd2 = metric_cd(seq2, one, cube, spec);
    CHECK(cd2.labeled_pairs == 1);
    CHECK(cd2.value == doctest::Approx(0.2).epsilon(1e-9));

    // multi-label vs naive double loop
    Rng rng(101);
    ContactLabels multi;
    multi.length = 4;
    multi.a.assign(4 * 8, 0);
    for (auto& b : multi.a) b = rng.uniform() < 0.4 ? 1 : 0;
    ContactDistanceResult got = metric_cd(seq2, multi, cube, spec);
    DecodedMotion dec2 = decode_sequence(seq2, spec);
    double sum = 0.0;
    int count = 0;
    for (int t = 0; t < 4; ++t) {
        PosedMesh posed(cube, dec2.object_poses[static_cast<size_t>(t)]);
        MeshDistanceQuery q(posed.mesh());
        for (int k = 0; k < 8; ++k) {
            if (!multi.at(t, k)) continue;
            sum += std::sqrt(q.sqdist(dec2.positions[static_cast<size_t>(t)][static_cast<size_t>(spec.interaction_joints[static_cast<size_t>(k)])]));
            ++count;
        }
    }
    REQUIRE(count == got.labeled_pairs);
    CHECK(got.value == doctest::Approx(sum / count).epsilon(1e-12));

    // no labels -> value 0 with flag
    ContactLabels empty;
    empty.length = 4;
    empty.a.assign(4 * 8, 0);
    ContactDistanceResult none = metric_cd(seq2, empty, cube, spec);
    CHECK(none.labeled_pairs == 0);
    CHECK(none.value == 0.0);
}

TEST_CASE("OCD: singleton, exact-satisfaction, and min-of-three") {
    SkeletonSpec spec = SkeletonSpec::smpl22();
    TriangleMesh cube = TriangleMesh::box(1, 1, 1);
    std::vector<double> h(3, 0.02), x(3, 0.0);
    HoiSequence probe = feet_sequence(spec, h, x);
    DecodedMotion dec = decode_sequence(probe, spec);
    Vec3 wrist = dec.positions[0][static_cast<size_t>(spec.interaction_joints[6])];
    HoiSequence seq = feet_sequence(spec, h, x, ObjectPose{{0, 0, 0}, wrist + Vec3{0.5, 0, 0}});

    auto labels_for = [&](int slot) {
        ContactLabels l;
        l.length = 3;
        l.a.assign(3 * 8, 0);
        for (int t = 0; t < 3; ++t) l.a[static_cast<size_t>(t) * 8 + static_cast<size_t>(slot)] = 1;
        return l;
    };
    ContactLabels exact = labels_for(6);   // satisfied exactly (distance 0)
    ContactLabels other = labels_for(7);   // right wrist, not touching
    ContactLabels far = labels_for(1);     // neck

    double cd_exact = metric_cd(seq, exact, cube, spec).value;
    double cd_other = metric_cd(seq, other, cube, spec).value;
    double cd_far = metric_cd(seq, far, cube, spec).value;

    CHECK(metric_ocd(seq, {other}, cube, spec) == doctest::Approx(cd_other));
    CHECK(metric_ocd(seq, {other, exact, far}, cube, spec) <= 1e-9);
    CHECK(metric_ocd(seq, {other, far}, cube, spec) ==
          doctest::Approx(std::min(cd_other, cd_far)));
    CHECK_THROWS_AS(metric_ocd(seq, {}, cube, spec), EmptyGroup);
    CHECK(cd_exact <= 1e-9);
}

TEST_CASE("PS: disjoint zero, enclosing one, constructed half") {
    SkeletonSpec spec = SkeletonSpec::smpl22();
    std::vector<double> h(2, 0.02), x(2, 0.0);

    // small cube far away
    HoiSequence far = feet_sequence(spec, h, x, ObjectPose{{0, 0, 0}, {30, 0, 30}});
    CHECK(metric_ps(far, TriangleMesh::box(0.3, 0.3, 0.3), spec) == 0.0);

    // huge enclosing sphere
    HoiSequence inside = feet_sequence(spec, h, x, ObjectPose{{0, 0, 0}, {0, 1, 0}});
    CHECK(metric_ps(inside, TriangleMesh::icosphere(20.0, 1), spec) == 1.0);

    // non-watertight mesh rejected
    TriangleMesh open = TriangleMesh::from_data({{0, 0, 0}, {1, 0, 0}, {0, 1, 0}}, {{0, 1, 2}});
    CHECK_THROWS_AS(metric_ps(inside, open, spec), NotWatertight);
}

TEST_CASE("PS: exactly half the points inside by construction") {
    // split the standing body's proxy points on height with a big box whose
    // bottom face sits between the 53rd and 54th sorted point
    SkeletonSpec spec = SkeletonSpec::smpl22();
    std::vector<double> h(2, 0.02), x(2, 0.0);
    HoiSequence probe = feet_sequence(spec, h, x);
    DecodedMotion dec = decode_sequence(probe, spec);
    std::vector<Vec3> pts = body_proxy_points(dec.positions[0], spec);
    std::vector<double> ys;
    for (const Vec3& p : pts) ys.push_back(p.y);
    std::sort(ys.begin(), ys.end());
    size_t half = ys.size() / 2;  // 106 points -> 53
    REQUIRE(ys[half - 1] < ys[half]);
    double split = 0.5 * (ys[half - 1] + ys[half]);

    HoiSequence seq = feet_sequence(spec, h, x, ObjectPose{{0, 0, 0}, {0, split + 5.0, 0}});
    double frac = metric_ps(seq, TriangleMesh::box(20, 10, 20), spec);
    CHECK(frac == 0.5);
}

TEST_CASE("FID: identical sets, known shift, symmetry, rotation invariance") {
    Rng rng(102);
    Tensor x = gaussian_features(rng, 400, 6, 0.0, 1.0);
    CHECK(metric_fid(x, x) < 1e-6);

    // two unit-variance 1-d gaussians with means 0 and 3 -> about 9
    Tensor a = gaussian_features(rng, 20000, 1, 0.0, 1.0);
    Tensor b = gaussian_features(rng, 20000, 1, 3.0, 1.0);
    double fid = metric_fid(a, b);
    CHECK(fid == doctest::Approx(9.0).epsilon(0.03));

    // symmetry
    Tensor c = gaussian_features(rng, 500, 4, 0.5, 2.0);
    Tensor d2 = gaussian_features(rng, 600, 4, -0.3, 0.7);
    CHECK(std::abs(metric_fid(c, d2) - metric_fid(d2, c)) < 1e-8);

    // rotation invariance: same orthogonal matrix applied to both sets
    int d = 4;
    // Gram-Schmidt on a random matrix
    std::vector<double> q(static_cast<size_t>(d) * d);
    for (auto& v : q) v = rng.normal();
    for (int i = 0; i < d; ++i) {
        for (int j = 0; j < i; ++j) {
            double dot = 0;
            for (int k = 0; k < d; ++k) dot += q[static_cast<size_t>(i) * d + k] * q[static_cast<size_t>(j) * d + k];
            for (int k = 0; k < d; ++k) q[static_cast<size_t>(i) * d + k] -= dot * q[static_cast<size_t>(j) * d + k];
        }
        double norm = 0;
        for (int k = 0; k < d; ++k) norm += q[static_cast<size_t>(i) * d + k] * q[static_cast<size_t>(i) * d + k];
        norm = std::sqrt(norm);
        for (int k = 0; k < d; ++k) q[static_cast<size_t>(i) * d + k] /= norm;
    }
    auto rotate = [&](const Tensor& t) {
        Tensor out = Tensor::zeros(t.shape());
        for (int i = 0; i < t.dim(0); ++i)
            for (int j = 0; j < d; ++j) {
                double s = 0;
                for (int k = 0; k < d; ++k) s += t.at({i, k}) * q[static_cast<size_t>(j) * d + k];
                out.data()[static_cast<int64_t>(i) * d + j] = s;
            }
        return out;
    };
    double base = metric_fid(c, d2);
    double rotated = metric_fid(rotate(c), rotate(d2));
    CHECK(std::abs(base - rotated) < 1e-8);

    Tensor bad = x.detached_copy();
    bad.data()[0] = std::nan("");
    CHECK_THROWS_AS(metric_fid(bad, x), InvalidFeatures);
}

TEST_CASE("R-Precision: identity alignment, chance level, nesting") {
    Rng rng(103);
    // distinct vectors aligned identically -> top1 = 1
    Tensor feats = gaussian_features(rng, 64, 8, 0.0, 1.0);
    RPrecisionResult ident = metric_r_precision(feats, feats, 7, 32, 10);
    CHECK(ident.top1 == 1.0);

    // independent random features -> top1 about 1/32 within 3 sigma
    Tensor m = gaussian_features(rng, 320, 8, 0.0, 1.0);
    Tensor t = gaussian_features(rng, 320, 8, 0.0, 1.0);
    RPrecisionResult rand = metric_r_precision(m, t, 8, 32, 32);
    double p = 1.0 / 32.0;
    double sigma = std::sqrt(p * (1 - p) / rand.trials);
    CHECK(std::abs(rand.top1 - p) <= 3 * sigma);
    CHECK(rand.top1 <= rand.top2);
    CHECK(rand.top2 <= rand.top3);

    CHECK_THROWS_AS(metric_r_precision(gaussian_features(rng, 8, 4, 0, 1),
                                       gaussian_features(rng, 8, 4, 0, 1), 9),
                    PoolError);
}

TEST_CASE("instruction groups lookup") {
    InstructionGroups g;
    g.groups["grasp_box"] = {"seq_1", "seq_2"};
    g.groups["push_ball"] = {"seq_3"};
    CHECK(g.group_of("seq_2") == std::string("grasp_box"));
    CHECK(g.group_of("seq_3") == std::string("push_ball"));
    CHECK_FALSE(g.group_of("seq_9").has_value());
}

TEST_CASE("jacobi eigensolver reconstructs symmetric matrices") {
    Rng rng(104);
    int n = 6;
    std::vector<double> m(static_cast<size_t>(n) * n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j <= i; ++j) {
            double v = rng.normal();
            m[static_cast<size_t>(i) * n + j] = v;
            m[static_cast<size_t>(j) * n + i] = v;
        }
    std::vector<double> evals, evecs;
    symmetric_eigen(m, n, evals, evecs);
    // reconstruct V diag(l) V^T
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            double s = 0;
            for (int k = 0; k < n; ++k)
                s += evecs[static_cast<size_t>(i) * n + k] * evals[static_cast<size_t>(k)] *
                     evecs[static_cast<size_t>(j) * n + k];
            CHECK(s == doctest::Approx(m[static_cast<size_t>(i) * n + j]).epsilon(1e-9));
        }
}
