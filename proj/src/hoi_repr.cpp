#include "chainhoi/hoi_repr.hpp"

#include <cmath>

#include "chainhoi/errors.hpp"

namespace chainhoi {

namespace {

// Heading = yaw of the pelvis rotation, from its forward (+Z) axis projected
// onto the ground plane; falls back to the +X axis near gimbal alignment.
double pelvis_yaw(const Mat3& rot) {
    Vec3 fwd{rot.m[2], rot.m[5], rot.m[8]};  // R * (0,0,1)
    double len = std::hypot(fwd.x, fwd.z);
    if (len > 1e-8) return std::atan2(fwd.x, fwd.z);
    Vec3 side{rot.m[0], rot.m[3], rot.m[6]};  // R * (1,0,0)
    return std::atan2(side.x, side.z) - M_PI / 2.0;
}

}  // namespace

void HoiSequence::validate(const SkeletonSpec& spec) const {
    if (node_count != spec.node_count())
        throw InvalidSequence("node count " + std::to_string(node_count) + " != J+2");
    if (length < 1) throw InvalidSequence("empty sequence");
    if (frames.size() != static_cast<size_t>(length) * node_count * kFeatureWidth)
        throw InvalidSequence("frame buffer size mismatch");
    for (double v : frames)
        if (!std::isfinite(v)) throw InvalidSequence("non-finite value in sequence");
    int fc = spec.foot_contact_node();
    for (int t = 0; t < length; ++t) {
        for (int c = 0; c < 4; ++c) {
            double b = at(t, fc, c);
            if (b != 0.0 && b != 1.0) throw InvalidSequence("foot-contact bit not binary");
        }
        for (int c = 4; c < kFeatureWidth; ++c)
            if (at(t, fc, c) != 0.0) throw InvalidSequence("foot-contact padding not zero");
        for (int c = 7; c < kFeatureWidth; ++c)
            if (at(t, 0, c) != 0.0) throw InvalidSequence("root padding not zero");
        for (int c = 6; c < kFeatureWidth; ++c)
            if (at(t, spec.object_node(), c) != 0.0) throw InvalidSequence("object padding not zero");
    }
}

std::vector<uint8_t> derive_foot_contacts(const std::vector<std::vector<Vec3>>& positions,
                                          const SkeletonSpec& spec, double height_thresh,
                                          double velocity_thresh) {
    int L = static_cast<int>(positions.size());
    std::vector<uint8_t> out(static_cast<size_t>(L) * 4, 0);
    for (int t = 0; t < L; ++t) {
        for (const auto& p : positions[static_cast<size_t>(t)])
            if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z))
                throw InvalidMotion("non-finite joint position");
        int tv = std::min(t, L - 2);  // last frame repeats the previous velocity
        for (int f = 0; f < 4; ++f) {
            int joint = spec.foot_joints[static_cast<size_t>(f)];
            const Vec3& p = positions[static_cast<size_t>(t)][static_cast<size_t>(joint)];
            double speed = 0.0;
            if (L >= 2) {
                const Vec3& a = positions[static_cast<size_t>(tv)][static_cast<size_t>(joint)];
                const Vec3& b = positions[static_cast<size_t>(tv + 1)][static_cast<size_t>(joint)];
                speed = (b - a).norm();
            }
            out[static_cast<size_t>(t) * 4 + static_cast<size_t>(f)] =
                (p.y < height_thresh && speed < velocity_thresh) ? 1 : 0;
        }
    }
    return out;
}

HoiSequence encode_sequence(const GlobalMotion& motion, const SkeletonSpec& spec) {
    spec.validate();
    int L = motion.length();
    if (L < 2) throw TooShort("encode needs at least 2 frames");
    int J = spec.joint_count;
    if (static_cast<int>(motion.rotations.size()) != L ||
        static_cast<int>(motion.object_poses.size()) != L)
        throw InvalidMotion("motion field lengths disagree");
    for (int t = 0; t < L; ++t) {
        if (static_cast<int>(motion.positions[static_cast<size_t>(t)].size()) != J ||
            static_cast<int>(motion.rotations[static_cast<size_t>(t)].size()) != J)
            throw InvalidMotion("joint count mismatch in frame " + std::to_string(t));
        for (const Vec3& p : motion.positions[static_cast<size_t>(t)])
            if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z))
                throw InvalidMotion("non-finite position in frame " + std::to_string(t));
    }

    std::vector<Vec3> rest = spec.rest_local_positions();

    // yaw differences define r_a; the heading used for local frames is the
    // integral of r_a starting at zero, so decode can reproduce it without
    // storing the absolute initial yaw
    std::vector<double> yaw(static_cast<size_t>(L));
    for (int t = 0; t < L; ++t)
        yaw[static_cast<size_t>(t)] = pelvis_yaw(motion.rotations[static_cast<size_t>(t)][0]);
    std::vector<double> r_a(static_cast<size_t>(L));
    for (int t = 0; t + 1 < L; ++t)
        r_a[static_cast<size_t>(t)] = wrap_angle(yaw[static_cast<size_t>(t + 1)] - yaw[static_cast<size_t>(t)]);
    r_a[static_cast<size_t>(L - 1)] = r_a[static_cast<size_t>(L - 2)];
    std::vector<double> heading(static_cast<size_t>(L), 0.0);
    for (int t = 1; t < L; ++t)
        heading[static_cast<size_t>(t)] = heading[static_cast<size_t>(t - 1)] + r_a[static_cast<size_t>(t - 1)];

    HoiSequence seq;
    seq.length = L;
    seq.node_count = spec.node_count();
    seq.fps = motion.fps;
    seq.frames.assign(static_cast<size_t>(L) * seq.node_count * kFeatureWidth, 0.0);

    // local joint offsets j_p per frame, needed for forward-difference j_v
    std::vector<std::vector<Vec3>> local(static_cast<size_t>(L), std::vector<Vec3>(static_cast<size_t>(J)));
    for (int t = 0; t < L; ++t) {
        Mat3 unrot = rot_y(-heading[static_cast<size_t>(t)]);
        const Vec3& root = motion.positions[static_cast<size_t>(t)][0];
        for (int j = 1; j < J; ++j) {
            Vec3 rel = motion.positions[static_cast<size_t>(t)][static_cast<size_t>(j)] - root;
            local[static_cast<size_t>(t)][static_cast<size_t>(j)] = unrot * rel - rest[static_cast<size_t>(j)];
        }
    }

    for (int t = 0; t < L; ++t) {
        const Vec3& root = motion.positions[static_cast<size_t>(t)][0];
        Mat3 unrot = rot_y(-heading[static_cast<size_t>(t)]);

        // root features
        int tv = std::min(t, L - 2);
        Vec3 step = motion.positions[static_cast<size_t>(tv + 1)][0] - motion.positions[static_cast<size_t>(tv)][0];
        Vec3 v_local = rot_y(-heading[static_cast<size_t>(tv)]) * step;
        seq.at(t, 0, 0) = r_a[static_cast<size_t>(t)];
        seq.at(t, 0, 1) = v_local.x;
        seq.at(t, 0, 2) = v_local.z;
        seq.at(t, 0, 3) = root.y;
        seq.at(t, 0, 4) = root.x;
        seq.at(t, 0, 5) = root.y;
        seq.at(t, 0, 6) = root.z;

        // non-root joints
        for (int j = 1; j < J; ++j) {
            const Vec3& jp = local[static_cast<size_t>(t)][static_cast<size_t>(j)];
            Vec3 jv = local[static_cast<size_t>(std::min(t, L - 2) + 1)][static_cast<size_t>(j)] -
                      local[static_cast<size_t>(std::min(t, L - 2))][static_cast<size_t>(j)];
            Mat3 r_local = unrot * motion.rotations[static_cast<size_t>(t)][static_cast<size_t>(j)];
            seq.at(t, j, 0) = jp.x;
            seq.at(t, j, 1) = jp.y;
            seq.at(t, j, 2) = jp.z;
            seq.at(t, j, 3) = jv.x;
            seq.at(t, j, 4) = jv.y;
            seq.at(t, j, 5) = jv.z;
            // 6-value rotation: first two matrix columns
            seq.at(t, j, 6) = r_local.m[0];
            seq.at(t, j, 7) = r_local.m[3];
            seq.at(t, j, 8) = r_local.m[6];
            seq.at(t, j, 9) = r_local.m[1];
            seq.at(t, j, 10) = r_local.m[4];
            seq.at(t, j, 11) = r_local.m[7];
        }

        // object node
        const ObjectPose& op = motion.object_poses[static_cast<size_t>(t)];
        int on = spec.object_node();
        seq.at(t, on, 0) = op.rotation.x;
        seq.at(t, on, 1) = op.rotation.y;
        seq.at(t, on, 2) = op.rotation.z;
        seq.at(t, on, 3) = op.translation.x;
        seq.at(t, on, 4) = op.translation.y;
        seq.at(t, on, 5) = op.translation.z;
    }

    // foot-contact node
    std::vector<uint8_t> contacts = derive_foot_contacts(motion.positions, spec);
    int fc = spec.foot_contact_node();
    for (int t = 0; t < L; ++t)
        for (int c = 0; c < 4; ++c)
            seq.at(t, fc, c) = contacts[static_cast<size_t>(t) * 4 + static_cast<size_t>(c)];

    return seq;
}

DecodedMotion decode_sequence(const HoiSequence& seq, const SkeletonSpec& spec) {
    seq.validate(spec);
    int L = seq.length;
    int J = spec.joint_count;
    std::vector<Vec3> rest = spec.rest_local_positions();

    DecodedMotion out;
    out.positions.assign(static_cast<size_t>(L), std::vector<Vec3>(static_cast<size_t>(J)));
    out.object_poses.resize(static_cast<size_t>(L));
    out.headings.resize(static_cast<size_t>(L));

    // integrate r_a for heading and r_v for the planar root trajectory
    double heading = 0.0;
    Vec3 root{seq.at(0, 0, 4), seq.at(0, 0, 3), seq.at(0, 0, 6)};
    for (int t = 0; t < L; ++t) {
        out.headings[static_cast<size_t>(t)] = heading;
        root.y = seq.at(t, 0, 3);  // height channel is authoritative per frame
        Mat3 rot = rot_y(heading);
        out.positions[static_cast<size_t>(t)][0] = root;
        for (int j = 1; j < J; ++j) {
            Vec3 jp{seq.at(t, j, 0), seq.at(t, j, 1), seq.at(t, j, 2)};
            out.positions[static_cast<size_t>(t)][static_cast<size_t>(j)] =
                root + rot * (rest[static_cast<size_t>(j)] + jp);
        }
        out.object_poses[static_cast<size_t>(t)] =
            ObjectPose{{seq.at(t, spec.object_node(), 0), seq.at(t, spec.object_node(), 1),
                        seq.at(t, spec.object_node(), 2)},
                       {seq.at(t, spec.object_node(), 3), seq.at(t, spec.object_node(), 4),
                        seq.at(t, spec.object_node(), 5)}};
        if (t + 1 < L) {
            Vec3 v_local{seq.at(t, 0, 1), 0.0, seq.at(t, 0, 2)};
            Vec3 step = rot * v_local;
            root.x += step.x;
            root.z += step.z;
            heading += seq.at(t, 0, 0);
        }
    }
    return out;
}

ContactLabels compute_contact_labels(const HoiSequence& seq, const TriangleMesh& mesh,
                                     const SkeletonSpec& spec, double tau_c) {
    if (mesh.triangles.empty())
        throw DegenerateMesh("contact labels need a mesh with at least one non-degenerate face");
    DecodedMotion dec = decode_sequence(seq, spec);
    ContactLabels labels;
    labels.length = seq.length;
    labels.tau_c = tau_c;
    labels.a.assign(static_cast<size_t>(seq.length) * 8, 0);
    for (int t = 0; t < seq.length; ++t) {
        PosedMesh posed(mesh, dec.object_poses[static_cast<size_t>(t)]);
        MeshDistanceQuery query(posed.mesh());
        for (int k = 0; k < 8; ++k) {
            int joint = spec.interaction_joints[static_cast<size_t>(k)];
            double d2 = query.sqdist(dec.positions[static_cast<size_t>(t)][static_cast<size_t>(joint)]);
            labels.a[static_cast<size_t>(t) * 8 + static_cast<size_t>(k)] = d2 <= tau_c * tau_c ? 1 : 0;
        }
    }
    return labels;
}

ObjectPose object_pose_from_frame(const HoiSequence& seq, int t) {
    int on = seq.node_count - 1;
    return ObjectPose{{seq.at(t, on, 0), seq.at(t, on, 1), seq.at(t, on, 2)},
                      {seq.at(t, on, 3), seq.at(t, on, 4), seq.at(t, on, 5)}};
}

}  // namespace chainhoi
