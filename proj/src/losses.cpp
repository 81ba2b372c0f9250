#include "chainhoi/losses.hpp"

#include <cmath>

namespace chainhoi {

namespace {

// channel slice of one node across all frames: [L, n, 12] -> [L]
Tensor node_channel(const Tensor& x, int node, int channel) {
    Tensor rows = ops::narrow(x, 1, node, 1);          // [L, 1, 12]
    Tensor chan = ops::narrow(rows, 2, channel, 1);    // [L, 1, 1]
    return ops::reshape(chan, {x.dim(0)});
}

Tensor first_element(const Tensor& x) { return ops::narrow(x, 0, 0, 1); }

Tensor broadcast_scalar(const Tensor& s, int len) {
    // [1] -> [len] via repeat; gradient sums back
    Tensor m = ops::reshape(s, {1, 1});
    return ops::reshape(ops::repeat_middle(m, len), {len});
}

}  // namespace

std::vector<Tensor> interaction_joint_positions(const Tensor& pred, const SkeletonSpec& spec) {
    if (pred.ndim() != 3 || pred.dim(1) != spec.node_count() || pred.dim(2) != kFeatureWidth)
        throw ShapeError("prediction must be [L, J+2, 12]");
    int L = pred.dim(0);
    std::vector<Vec3> rest = spec.rest_local_positions();

    Tensor r_a = node_channel(pred, 0, 0);
    Tensor r_vx = node_channel(pred, 0, 1);
    Tensor r_vz = node_channel(pred, 0, 2);
    Tensor r_y = node_channel(pred, 0, 3);
    Tensor heading = ops::cumsum_exclusive(r_a);
    Tensor cos_h = ops::cos_op(heading);
    Tensor sin_h = ops::sin_op(heading);

    // root planar trajectory: r_p[0] anchor plus integrated rotated velocity
    Tensor step_x = ops::add(ops::mul(cos_h, r_vx), ops::mul(sin_h, r_vz));
    Tensor step_z = ops::sub(ops::mul(cos_h, r_vz), ops::mul(sin_h, r_vx));
    Tensor root_x = ops::add(ops::cumsum_exclusive(step_x),
                             broadcast_scalar(first_element(node_channel(pred, 0, 4)), L));
    Tensor root_z = ops::add(ops::cumsum_exclusive(step_z),
                             broadcast_scalar(first_element(node_channel(pred, 0, 6)), L));
    Tensor root_y = r_y;

    std::vector<Tensor> out;
    out.reserve(spec.interaction_joints.size());
    for (int joint : spec.interaction_joints) {
        Tensor gx, gy, gz;
        if (joint == 0) {
            gx = root_x;
            gy = root_y;
            gz = root_z;
        } else {
            const Vec3& r = rest[static_cast<size_t>(joint)];
            Tensor lx = ops::add_scalar(node_channel(pred, joint, 0), r.x);
            Tensor ly = ops::add_scalar(node_channel(pred, joint, 1), r.y);
            Tensor lz = ops::add_scalar(node_channel(pred, joint, 2), r.z);
            gx = ops::add(root_x, ops::add(ops::mul(cos_h, lx), ops::mul(sin_h, lz)));
            gy = ops::add(root_y, ly);
            gz = ops::add(root_z, ops::sub(ops::mul(cos_h, lz), ops::mul(sin_h, lx)));
        }
        Tensor xyz = ops::concat(ops::concat(ops::reshape(gx, {L, 1}), ops::reshape(gy, {L, 1}), 1),
                                 ops::reshape(gz, {L, 1}), 1);
        out.push_back(xyz);
    }
    return out;
}

Tensor point_mesh_sqdist_op(const Tensor& xyz,
                            const std::vector<const MeshDistanceQuery*>& queries) {
    if (xyz.ndim() != 2 || xyz.dim(1) != 3) throw ShapeError("point_mesh_sqdist_op expects [L, 3]");
    int L = xyz.dim(0);
    if (static_cast<int>(queries.size()) != L)
        throw ShapeError("one distance query per frame required");
    std::vector<double> values(static_cast<size_t>(L));
    std::vector<double> closest(static_cast<size_t>(L) * 3);
    for (int t = 0; t < L; ++t) {
        Vec3 p{xyz.at({t, 0}), xyz.at({t, 1}), xyz.at({t, 2})};
        ClosestPointResult r = queries[static_cast<size_t>(t)]->closest(p);
        values[static_cast<size_t>(t)] = r.sqdist;
        closest[static_cast<size_t>(t) * 3 + 0] = r.point.x;
        closest[static_cast<size_t>(t) * 3 + 1] = r.point.y;
        closest[static_cast<size_t>(t) * 3 + 2] = r.point.z;
    }
    Tensor res = Tensor::from_op({L}, std::move(values), {xyz});
    if (res.requires_grad()) {
        TensorNode *xn = xyz.node(), *rn = res.node();
        res.set_backward([xn, rn, L, closest = std::move(closest)]() {
            xn->ensure_grad();
            for (int t = 0; t < L; ++t) {
                double g = rn->grad[static_cast<size_t>(t)];
                for (int k = 0; k < 3; ++k) {
                    double p = xn->value[static_cast<size_t>(t) * 3 + static_cast<size_t>(k)];
                    double c = closest[static_cast<size_t>(t) * 3 + static_cast<size_t>(k)];
                    xn->grad[static_cast<size_t>(t) * 3 + static_cast<size_t>(k)] += g * 2.0 * (p - c);
                }
            }
        });
    }
    return res;
}

Tensor loss_h(const Tensor& pred, const ContactLabels& labels,
              const std::vector<const MeshDistanceQuery*>& gt_mesh_frames,
              const SkeletonSpec& spec) {
    int L = pred.dim(0);
    if (labels.length != L) throw ShapeError("contact label length mismatch");
    if (static_cast<int>(gt_mesh_frames.size()) != L)
        throw ShapeError("posed mesh frame count mismatch");
    std::vector<Tensor> joints = interaction_joint_positions(pred, spec);
    Tensor acc = Tensor::scalar(0.0);
    for (int k = 0; k < 8; ++k) {
        bool any = false;
        std::vector<double> w(static_cast<size_t>(L));
        for (int t = 0; t < L; ++t) {
            w[static_cast<size_t>(t)] = labels.at(t, k);
            any = any || labels.at(t, k);
        }
        if (!any) continue;  // no labeled frames for this joint
        Tensor sq = point_mesh_sqdist_op(joints[static_cast<size_t>(k)], gt_mesh_frames);
        acc = ops::add(acc, ops::weighted_sum(sq, w));
    }
    return acc;
}

Tensor loss_o(const Tensor& pred, const Tensor& target, const SkeletonSpec& spec) {
    if (pred.shape() != target.shape()) throw ShapeError("loss_o: shape mismatch");
    int on = spec.object_node();
    Tensor p6 = ops::narrow(ops::narrow(pred, 1, on, 1), 2, 0, 6);
    Tensor g6 = ops::narrow(ops::narrow(target, 1, on, 1), 2, 0, 6);
    return ops::sum_all(ops::square(ops::sub(p6, g6)));
}

TotalLoss total_loss(const Tensor& pred, const Tensor& target, const ContactLabels& labels,
                     const std::vector<const MeshDistanceQuery*>& gt_mesh_frames,
                     const SkeletonSpec& spec, const LossWeights& weights) {
    if (weights.lambda_h < 0.0 || weights.lambda_o < 0.0)
        throw ConfigError("loss weights must be nonnegative");
    TotalLoss out;
    out.l_diff = ops::mse(pred, target);
    out.l_h = loss_h(pred, labels, gt_mesh_frames, spec);
    out.l_o = loss_o(pred, target, spec);
    out.total = ops::add(out.l_diff,
                         ops::add(ops::scale(out.l_h, weights.lambda_h),
                                  ops::scale(out.l_o, weights.lambda_o)));
    return out;
}

PosedMeshFrames::PosedMeshFrames(const TriangleMesh& mesh, const std::vector<ObjectPose>& poses) {
    queries_.reserve(poses.size());
    for (const ObjectPose& pose : poses) {
        PosedMesh posed(mesh, pose);
        queries_.push_back(std::make_unique<MeshDistanceQuery>(posed.mesh()));
    }
}

std::vector<const MeshDistanceQuery*> PosedMeshFrames::queries() const {
    std::vector<const MeshDistanceQuery*> out;
    out.reserve(queries_.size());
    for (const auto& q : queries_) out.push_back(q.get());
    return out;
}

}  // namespace chainhoi
