#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "chainhoi/losses.hpp"
#include "chainhoi/rng.hpp"
#include "test_util.hpp"

using namespace chainhoi;

namespace {

// builds an encoded standing sequence whose decode is exactly known
HoiSequence standing_sequence(const SkeletonSpec& spec, int frames, const ObjectPose& pose) {
    std::vector<Vec3> rest = spec.rest_local_positions();
    GlobalMotion m;
    m.fps = 20.0;
    for (int t = 0; t < frames; ++t) {
        std::vector<Vec3> pos(static_cast<size_t>(spec.joint_count));
        std::vector<Mat3> rots(static_cast<size_t>(spec.joint_count), Mat3::identity());
        for (int j = 0; j < spec.joint_count; ++j)
            pos[static_cast<size_t>(j)] = Vec3{0, 0.95, 0} + rest[static_cast<size_t>(j)];
        m.positions.push_back(std::move(pos));
        m.rotations.push_back(std::move(rots));
        m.object_poses.push_back(pose);
    }
    return encode_sequence(m, spec);
}

Tensor seq_tensor(const HoiSequence& seq) {
    return Tensor::from({seq.length, seq.node_count, kFeatureWidth}, seq.frames);
}

}  // namespace

TEST_CASE("interaction joint positions agree with decode_sequence") {
    SkeletonSpec spec = SkeletonSpec::smpl22();
    Rng rng(91);
    // wiggly motion through encode; the differentiable path must match decode
    std::vector<Vec3> rest = spec.rest_local_positions();
    GlobalMotion m;
    m.fps = 20.0;
    double yaw = 0.4;
    Vec3 root{0.2, 0.93, -0.5};
    for (int t = 0; t < 10; ++t) {
        yaw += rng.uniform(-0.3, 0.3);
        root += Vec3{rng.uniform(-0.1, 0.1), rng.uniform(-0.02, 0.02), rng.uniform(-0.1, 0.1)};
        Mat3 rot = rot_y(yaw);
        std::vector<Vec3> pos(22);
        std::vector<Mat3> rots(22, rot);
        pos[0] = root;
        for (int j = 1; j < 22; ++j)
            pos[static_cast<size_t>(j)] =
                root + rot * (rest[static_cast<size_t>(j)] +
                              Vec3{rng.uniform(-0.05, 0.05), rng.uniform(-0.05, 0.05),
                                   rng.uniform(-0.05, 0.05)});
        m.positions.push_back(pos);
        m.rotations.push_back(rots);
        m.object_poses.push_back(ObjectPose{});
    }
    HoiSequence seq = encode_sequence(m, spec);
    DecodedMotion dec = decode_sequence(seq, spec);
    std::vector<Tensor> joints = interaction_joint_positions(seq_tensor(seq), spec);
    for (int k = 0; k < 8; ++k) {
        int joint = spec.interaction_joints[static_cast<size_t>(k)];
        for (int t = 0; t < 10; ++t) {
            const Vec3& expect = dec.positions[static_cast<size_t>(t)][static_cast<size_t>(joint)];
            CHECK(joints[static_cast<size_t>(k)].at({t, 0}) == doctest::Approx(expect.x).epsilon(1e-12));
            CHECK(joints[static_cast<size_t>(k)].at({t, 1}) == doctest::Approx(expect.y).epsilon(1e-12));
            CHECK(joints[static_cast<size_t>(k)].at({t, 2}) == doctest::Approx(expect.z).epsilon(1e-12));
        }
    }
}

TEST_CASE("loss_h trivial cases") {
    SkeletonSpec spec = SkeletonSpec::smpl22();
    TriangleMesh cube = TriangleMesh::box(1, 1, 1);
    ObjectPose pose{{0, 0, 0}, {3, 0.5, 0}};
    HoiSequence seq = standing_sequence(spec, 4, pose);
    PosedMeshFrames frames(cube, std::vector<ObjectPose>(4, pose));

    // all labels zero -> exactly zero loss
    ContactLabels none;
    none.length = 4;
    none.a.assign(4 * 8, 0);
    Tensor zero = loss_h(seq_tensor(seq), none, frames.queries(), spec);
    CHECK(zero.item() == 0.0);

    // single labeled joint at a hand-computed distance
    ContactLabels one = none;
    one.a[0 * 8 + 0] = 1;  // pelvis, frame 0
    DecodedMotion dec = decode_sequence(seq, spec);
    PosedMesh posed(cube, pose);
    MeshDistanceQuery q(posed.mesh());
    double expect = q.sqdist(dec.positions[0][0]);
    Tensor lh = loss_h(seq_tensor(seq), one, frames.queries(), spec);
    CHECK(lh.item() == doctest::Approx(expect).epsilon(1e-12));

    // joint exactly on the surface contributes zero: move object so its face
    // touches the pelvis
    Vec3 pelvis = dec.positions[0][0];
    ObjectPose touching{{0, 0, 0}, pelvis + Vec3{0.5, 0, 0}};  // face x=-0.5 hits pelvis
    PosedMeshFrames touch_frames(cube, std::vector<ObjectPose>(4, touching));
    Tensor lh_touch = loss_h(seq_tensor(seq), one, touch_frames.queries(), spec);
    CHECK(lh_touch.item() <= 1e-20);
}

TEST_CASE("loss_h hand-computed two-frame sum") {
    SkeletonSpec spec = SkeletonSpec::smpl22();
    TriangleMesh cube = TriangleMesh::box(1, 1, 1);
    ObjectPose pose{{0, 0, 0}, {0.0, 0.5, 2.0}};
    HoiSequence seq = standing_sequence(spec, 2, pose);
    DecodedMotion dec = decode_sequence(seq, spec);
    PosedMeshFrames frames(cube, std::vector<ObjectPose>(2, pose));

    ContactLabels labels;
    labels.length = 2;
    labels.a.assign(2 * 8, 0);
    labels.a[0 * 8 + 6] = 1;  // left wrist frame 0
    labels.a[1 * 8 + 7] = 1;  // right wrist frame 1

    PosedMesh posed(cube, pose);
    MeshDistanceQuery q(posed.mesh());
    double expect = q.sqdist(dec.positions[0][spec.interaction_joints[6]]) +
                    q.sqdist(dec.positions[1][spec.interaction_joints[7]]);
    Tensor lh = loss_h(seq_tensor(seq), labels, frames.queries(), spec);
    CHECK(lh.item() == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("loss_h gradient matches finite differences") {
    SkeletonSpec spec = SkeletonSpec::smpl22();
    TriangleMesh cube = TriangleMesh::box(0.8, 0.8, 0.8);
    ObjectPose pose{{0.2, 0.4, -0.1}, {0.6, 0.9, 0.7}};
    HoiSequence seq = standing_sequence(spec, 3, pose);
    PosedMeshFrames frames(cube, std::vector<ObjectPose>(3, pose));
    ContactLabels labels;
    labels.length = 3;
    labels.a.assign(3 * 8, 0);
    labels.a[0 * 8 + 6] = 1;
    labels.a[1 * 8 + 0] = 1;
    labels.a[2 * 8 + 7] = 1;

    Tensor pred = seq_tensor(seq);
    // push values a bit off the encoded sequence so distances are generic
    Rng rng(92);
    for (auto& v : pred.values()) v += rng.uniform(-0.03, 0.03);
    pred.set_requires_grad(true);

    auto loss_value = [&]() { return loss_h(pred, labels, frames.queries(), spec).item(); };
    pred.zero_grad();
    Tensor loss = loss_h(pred, labels, frames.queries(), spec);
    loss.backward();

    std::vector<int64_t> idx;
    for (int64_t i = 0; i < pred.numel(); i += 23) idx.push_back(i);
    auto r = chainhoi::testing::finite_diff_check(pred, loss_value, pred.grad(), idx);
    CHECK(r.max_rel_err < 1e-4);
}

TEST_CASE("loss_o closed forms and oracle") {
    SkeletonSpec spec = SkeletonSpec::smpl22();
    HoiSequence seq = standing_sequence(spec, 10, ObjectPose{{0, 0, 0}, {1, 2, 3}});
    Tensor gt = seq_tensor(seq);
    Tensor pred = gt.detached_copy();
    CHECK(loss_o(pred, gt, spec).item() == 0.0);

    // constant offset 0.1 on one translation channel over 10 frames
    int on = spec.object_node();
    for (int t = 0; t < 10; ++t)
        pred.data()[(static_cast<int64_t>(t) * seq.node_count + on) * kFeatureWidth + 3] += 0.1;
    CHECK(loss_o(pred, gt, spec).item() == doctest::Approx(10 * 0.01).epsilon(1e-12));

    // random pair vs elementwise summation oracle
    Rng rng(93);
    Tensor a = gt.detached_copy(), b = gt.detached_copy();
    for (auto& v : a.values()) v = rng.normal();
    for (auto& v : b.values()) v = rng.normal();
    double naive = 0.0;
    for (int t = 0; t < 10; ++t)
        for (int c = 0; c < 6; ++c) {
            int64_t i = (static_cast<int64_t>(t) * seq.node_count + on) * kFeatureWidth + c;
            double diff = a.data()[i] - b.data()[i];
            naive += diff * diff;
        }
    CHECK(loss_o(a, b, spec).item() == doctest::Approx(naive).epsilon(1e-12));
}

TEST_CASE("total_loss composition") {
    SkeletonSpec spec = SkeletonSpec::smpl22();
    TriangleMesh cube = TriangleMesh::box(1, 1, 1);
    ObjectPose pose{{0, 0, 0}, {1.5, 0.5, 0}};
    HoiSequence seq = standing_sequence(spec, 3, pose);
    PosedMeshFrames frames(cube, std::vector<ObjectPose>(3, pose));
    ContactLabels labels;
    labels.length = 3;
    labels.a.assign(3 * 8, 0);
    labels.a[5] = 1;

    Tensor gt = seq_tensor(seq);
    Tensor pred = gt.detached_copy();
    Rng rng(94);
    for (auto& v : pred.values()) v += rng.uniform(-0.05, 0.05);

    LossWeights w;
    TotalLoss tl = total_loss(pred, gt, labels, frames.queries(), spec, w);
    CHECK(tl.total.item() ==
          doctest::Approx(tl.l_diff.item() + 2.0 * tl.l_h.item() + 1.0 * tl.l_o.item())
              .epsilon(1e-12));

    // lambda = 0 reduces the value to l_diff exactly
    LossWeights zero{0.0, 0.0};
    TotalLoss tz = total_loss(pred, gt, labels, frames.queries(), spec, zero);
    CHECK(tz.total.item() == tz.l_diff.item());

    // perfect prediction gives zero everywhere the labels touch the surface...
    TotalLoss perfect = total_loss(gt, gt, labels, frames.queries(), spec, w);
    CHECK(perfect.l_diff.item() == 0.0);
    CHECK(perfect.l_o.item() == 0.0);
    // (l_h measures distance to the mesh, zero only when labeled joints touch)
}
