#include "chainhoi/skeleton.hpp"

#include <set>

#include "chainhoi/errors.hpp"

namespace chainhoi {

SkeletonSpec SkeletonSpec::smpl22() {
    SkeletonSpec s;
    s.joint_count = 22;
    s.joint_names = {"pelvis",     "left_hip",      "right_hip",      "spine1",
                     "left_knee",  "right_knee",    "spine2",         "left_ankle",
                     "right_ankle", "spine3",       "left_foot",      "right_foot",
                     "neck",       "left_collar",   "right_collar",   "head",
                     "left_shoulder", "right_shoulder", "left_elbow", "right_elbow",
                     "left_wrist", "right_wrist"};
    s.parent_of = {-1, 0, 0, 0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 9, 9, 12, 13, 14, 16, 17, 18, 19};
    // pelvis, neck, both feet, both shoulders, both hands
    s.interaction_joints = {0, 12, 10, 11, 16, 17, 20, 21};
    // ankles and toe ends
    s.foot_joints = {7, 8, 10, 11};
    s.bone_offsets = {
        {0.00, 0.00, 0.00},    // pelvis (root, unused)
        {0.09, -0.08, 0.00},   // left_hip
        {-0.09, -0.08, 0.00},  // right_hip
        {0.00, 0.11, 0.00},    // spine1
        {0.00, -0.38, 0.00},   // left_knee
        {0.00, -0.38, 0.00},   // right_knee
        {0.00, 0.13, 0.00},    // spine2
        {0.00, -0.40, 0.00},   // left_ankle
        {0.00, -0.40, 0.00},   // right_ankle
        {0.00, 0.05, 0.00},    // spine3
        {0.00, -0.06, 0.12},   // left_foot
        {0.00, -0.06, 0.12},   // right_foot
        {0.00, 0.21, 0.00},    // neck
        {0.07, 0.11, 0.00},    // left_collar
        {-0.07, 0.11, 0.00},   // right_collar
        {0.00, 0.09, 0.00},    // head
        {0.09, 0.03, 0.00},    // left_shoulder
        {-0.09, 0.03, 0.00},   // right_shoulder
        {0.26, 0.00, 0.00},    // left_elbow
        {-0.26, 0.00, 0.00},   // right_elbow
        {0.25, 0.00, 0.00},    // left_wrist
        {-0.25, 0.00, 0.00},   // right_wrist
    };
    return s;
}

void SkeletonSpec::validate() const {
    int j = joint_count;
    if (j < 2) throw InvalidSpec("skeleton needs at least two joints");
    if (static_cast<int>(parent_of.size()) != j || static_cast<int>(bone_offsets.size()) != j ||
        static_cast<int>(joint_names.size()) != j)
        throw InvalidSpec("skeleton field sizes disagree with joint_count");
    if (parent_of[0] != -1) throw InvalidSpec("pelvis (joint 0) must be the root");
    for (int i = 1; i < j; ++i) {
        // parents must come earlier, which makes the graph a tree rooted at 0
        if (parent_of[static_cast<size_t>(i)] < 0 || parent_of[static_cast<size_t>(i)] >= i)
            throw InvalidSpec("joint " + std::to_string(i) + " has an invalid parent");
    }
    std::set<int> inter(interaction_joints.begin(), interaction_joints.end());
    if (interaction_joints.size() != 8 || inter.size() != 8)
        throw InvalidSpec("exactly 8 distinct interaction joints required");
    std::set<int> feet(foot_joints.begin(), foot_joints.end());
    if (foot_joints.size() != 4 || feet.size() != 4)
        throw InvalidSpec("exactly 4 distinct foot joints required");
    for (int k : interaction_joints)
        if (k < 0 || k >= j) throw InvalidSpec("interaction joint out of range");
    for (int k : foot_joints)
        if (k < 0 || k >= j) throw InvalidSpec("foot joint out of range");
    if (!inter.count(0)) throw InvalidSpec("interaction joints must include the pelvis");
}

std::vector<Vec3> SkeletonSpec::rest_local_positions() const {
    std::vector<Vec3> rest(static_cast<size_t>(joint_count));
    rest[0] = Vec3{0, 0, 0};
    for (int i = 1; i < joint_count; ++i)
        rest[static_cast<size_t>(i)] =
            rest[static_cast<size_t>(parent_of[static_cast<size_t>(i)])] + bone_offsets[static_cast<size_t>(i)];
    return rest;
}

}  // namespace chainhoi
