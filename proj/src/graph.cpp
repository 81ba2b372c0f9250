#include "chainhoi/graph.hpp"

#include <algorithm>
#include <cmath>

#include "chainhoi/errors.hpp"

namespace chainhoi {

HoiGraph build_hoi_graph(const SkeletonSpec& spec, bool connect_object_to_all_joints) {
    spec.validate();
    HoiGraph g;
    g.node_count = spec.node_count();
    for (int j = 1; j < spec.joint_count; ++j)
        g.edges.emplace_back(spec.parent_of[static_cast<size_t>(j)], j);
    int object = spec.object_node();
    if (connect_object_to_all_joints) {
        for (int j = 0; j < spec.joint_count; ++j) g.edges.emplace_back(object, j);
    } else {
        for (int j : spec.interaction_joints) g.edges.emplace_back(object, j);
    }
    int foot_contact = spec.foot_contact_node();
    for (int f : spec.foot_joints) g.edges.emplace_back(foot_contact, f);

    g.adjacency = Tensor::zeros({g.node_count, g.node_count});
    for (auto [u, v] : g.edges) {
        g.adjacency.data()[static_cast<int64_t>(u) * g.node_count + v] = 1.0;
        g.adjacency.data()[static_cast<int64_t>(v) * g.node_count + u] = 1.0;
    }
    g.normalized = normalize_adjacency(g.adjacency);
    return g;
}

Tensor normalize_adjacency(const Tensor& adjacency) {
    if (adjacency.ndim() != 2 || adjacency.dim(0) != adjacency.dim(1))
        throw ShapeError("adjacency must be square");
    int n = adjacency.dim(0);
    const double* a = adjacency.data();
    for (int i = 0; i < n; ++i) {
        if (a[static_cast<int64_t>(i) * n + i] != 0.0)
            throw ShapeError("adjacency must have a zero diagonal");
        for (int j = 0; j < n; ++j) {
            double v = a[static_cast<int64_t>(i) * n + j];
            if (v != 0.0 && v != 1.0) throw ShapeError("adjacency must be binary");
            if (v != a[static_cast<int64_t>(j) * n + i]) throw ShapeError("adjacency must be symmetric");
        }
    }
    // A_hat = D^-1/2 (A + I) D^-1/2 with D the degree of A + I
    std::vector<double> inv_sqrt_deg(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        double deg = 1.0;  // self loop
        for (int j = 0; j < n; ++j) deg += a[static_cast<int64_t>(i) * n + j];
        inv_sqrt_deg[static_cast<size_t>(i)] = 1.0 / std::sqrt(deg);
    }
    Tensor out = Tensor::zeros({n, n});
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            double aij = a[static_cast<int64_t>(i) * n + j] + (i == j ? 1.0 : 0.0);
            out.data()[static_cast<int64_t>(i) * n + j] =
                inv_sqrt_deg[static_cast<size_t>(i)] * aij * inv_sqrt_deg[static_cast<size_t>(j)];
        }
    return out;
}

KineticChains build_kinetic_chains(const SkeletonSpec& spec) {
    spec.validate();
    // The membership table assumes the SMPL-22 topology. Hips and shoulders
    // are shared with the torso chain; collars travel with their arms so the
    // five internal chains cover every joint.
    if (spec.joint_count != 22)
        throw InvalidSpec("kinetic chain table is defined for the 22-joint skeleton");
    KineticChains k;
    k.chains = {
        {0, 1, 2, 3, 6, 9, 12, 13, 14, 15, 16, 17},  // torso + head + shared roots
        {13, 16, 18, 20},                            // left arm (collar->wrist)
        {14, 17, 19, 21},                            // right arm
        {1, 4, 7, 10},                               // left leg (hip->toe)
        {2, 5, 8, 11},                               // right leg
    };
    std::vector<int> human_object{spec.object_node()};
    for (int j : spec.interaction_joints) human_object.push_back(j);
    k.chains.push_back(std::move(human_object));
    return k;
}

ChainAttentionMask build_chain_attention_mask(const KineticChains& chains, int node_count) {
    ChainAttentionMask mask;
    mask.chain_count = static_cast<int>(chains.chains.size());
    mask.node_count = node_count;
    mask.m.assign(static_cast<size_t>(mask.chain_count) * node_count, 0);
    for (int c = 0; c < mask.chain_count; ++c) {
        const auto& chain = chains.chains[static_cast<size_t>(c)];
        if (chain.size() < 2) throw InvalidChains("chain " + std::to_string(c) + " too small");
        for (int node : chain) {
            if (node < 0 || node >= node_count)
                throw InvalidChains("chain index " + std::to_string(node) + " out of range");
            mask.m[static_cast<size_t>(c) * node_count + static_cast<size_t>(node)] = 1;
        }
    }
    return mask;
}

}  // namespace chainhoi
