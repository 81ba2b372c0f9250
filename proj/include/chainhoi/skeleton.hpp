#pragma once

#include <string>
#include <vector>

#include "chainhoi/vec3.hpp"

namespace chainhoi {

// Joint-tree description plus the designated interaction and foot joints.
// The default is a 22-joint SMPL-style skeleton; alternate skeletons are a
// configuration change only.
struct SkeletonSpec {
    int joint_count = 0;
    std::vector<int> parent_of;          // -1 for the root (pelvis, index 0)
    std::vector<std::string> joint_names;
    std::vector<int> interaction_joints;  // exactly 8
    std::vector<int> foot_joints;         // exactly 4
    std::vector<Vec3> bone_offsets;       // rest offset from parent, meters (root: none)

    static SkeletonSpec smpl22();

    void validate() const;  // throws InvalidSpec

    // rest position of each joint relative to the pelvis (sum of offsets)
    std::vector<Vec3> rest_local_positions() const;

    int node_count() const { return joint_count + 2; }
    int foot_contact_node() const { return joint_count; }
    int object_node() const { return joint_count + 1; }
};

}  // namespace chainhoi
