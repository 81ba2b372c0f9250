#pragma once

#include <vector>

#include "chainhoi/geometry.hpp"
#include "chainhoi/skeleton.hpp"
#include "chainhoi/vec3.hpp"

namespace chainhoi {

// Feature layout inside each 12-wide node row.
//
// Root node (joint 0):   [r_a, r_vx, r_vz, r_y, r_px, r_py, r_pz, 0 x5]
//   r_a  angular velocity about Y (rad/frame, forward difference)
//   r_v  planar velocity in the integrated-heading frame (m/frame)
//   r_y  root height; r_p global root position
// Non-root joints:       [j_p x3, j_v x3, j_r x6]
//   j_p  local position offset from the rest pose, expressed in the heading
//        frame integrated from r_a (zero heading at frame 0)
//   j_v  forward difference of j_p; j_r 6-value rotation (first two matrix
//        columns) in the same frame
// Foot-contact node:     [c_f x4, 0 x8]
// Object node:           [axis-angle x3, translation x3, 0 x6]
constexpr int kFeatureWidth = 12;

struct HoiSequence {
    int length = 0;
    int node_count = 0;  // J + 2
    double fps = 20.0;
    std::vector<double> frames;  // [length][node_count][12]

    double& at(int t, int node, int c) {
        return frames[(static_cast<size_t>(t) * node_count + node) * kFeatureWidth +
                      static_cast<size_t>(c)];
    }
    double at(int t, int node, int c) const {
        return frames[(static_cast<size_t>(t) * node_count + node) * kFeatureWidth +
                      static_cast<size_t>(c)];
    }

    void validate(const SkeletonSpec& spec) const;  // throws InvalidSequence
};

// Per-frame global motion: positions and rotations per joint plus object pose.
struct GlobalMotion {
    std::vector<std::vector<Vec3>> positions;  // [L][J]
    std::vector<std::vector<Mat3>> rotations;  // [L][J], global
    std::vector<ObjectPose> object_poses;      // [L]
    double fps = 20.0;

    int length() const { return static_cast<int>(positions.size()); }
};

struct DecodedMotion {
    std::vector<std::vector<Vec3>> positions;  // [L][J] global
    std::vector<ObjectPose> object_poses;      // [L]
    std::vector<double> headings;              // integrated heading per frame
};

struct ContactLabels {
    int length = 0;
    std::vector<uint8_t> a;  // [L][8]
    double tau_c = 0.05;

    uint8_t at(int t, int k) const { return a[static_cast<size_t>(t) * 8 + static_cast<size_t>(k)]; }
};

// L x 4 binary: contact iff height < height_thresh and speed < velocity_thresh
std::vector<uint8_t> derive_foot_contacts(const std::vector<std::vector<Vec3>>& positions,
                                          const SkeletonSpec& spec, double height_thresh = 0.05,
                                          double velocity_thresh = 0.01);

HoiSequence encode_sequence(const GlobalMotion& motion, const SkeletonSpec& spec);
DecodedMotion decode_sequence(const HoiSequence& seq, const SkeletonSpec& spec);

ContactLabels compute_contact_labels(const HoiSequence& seq, const TriangleMesh& mesh,
                                     const SkeletonSpec& spec, double tau_c = 0.05);

// Object pose stored in a frame's object-node row.
ObjectPose object_pose_from_frame(const HoiSequence& seq, int t);

}  // namespace chainhoi
