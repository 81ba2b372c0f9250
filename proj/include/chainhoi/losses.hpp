#pragma once

#include <memory>
#include <vector>

#include "chainhoi/geometry.hpp"
#include "chainhoi/hoi_repr.hpp"
#include "chainhoi/ops.hpp"
#include "chainhoi/skeleton.hpp"

namespace chainhoi {

struct LossWeights {
    double lambda_h = 2.0;  // human-contact loss
    double lambda_o = 1.0;  // object 6-DoF loss
};

// Differentiable decode of global interaction-joint positions from a
// [L, n, 12] prediction tensor: heading from cumulative r_a, root trajectory
// from integrated r_v, joints from rest offsets plus j_p.
// Returns 8 tensors of shape [L, 3], ordered as spec.interaction_joints.
std::vector<Tensor> interaction_joint_positions(const Tensor& pred, const SkeletonSpec& spec);

// Squared point-to-mesh distance as a tape op. xyz: [L, 3]; queries: one
// distance structure per frame. Gradient is 2 (p - closest_point).
Tensor point_mesh_sqdist_op(const Tensor& xyz,
                            const std::vector<const MeshDistanceQuery*>& queries);

// Eq-style contact loss: sum over frames and the 8 interaction joints of
// label * squared distance to the GT-posed object mesh.
Tensor loss_h(const Tensor& pred, const ContactLabels& labels,
              const std::vector<const MeshDistanceQuery*>& gt_mesh_frames,
              const SkeletonSpec& spec);

// Sum of squared 6-DoF errors on the object node.
Tensor loss_o(const Tensor& pred, const Tensor& target, const SkeletonSpec& spec);

// l_diff = MSE over all entries; total = l_diff + l1 * l_h + l2 * l_o
struct TotalLoss {
    Tensor total, l_diff, l_h, l_o;
};
TotalLoss total_loss(const Tensor& pred, const Tensor& target, const ContactLabels& labels,
                     const std::vector<const MeshDistanceQuery*>& gt_mesh_frames,
                     const SkeletonSpec& spec, const LossWeights& weights);

// Frame-wise distance queries for a sequence's GT object poses.
class PosedMeshFrames {
public:
    PosedMeshFrames(const TriangleMesh& mesh, const std::vector<ObjectPose>& poses);
    std::vector<const MeshDistanceQuery*> queries() const;

private:
    std::vector<std::unique_ptr<MeshDistanceQuery>> queries_;
};

}  // namespace chainhoi
