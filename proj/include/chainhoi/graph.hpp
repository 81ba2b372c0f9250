#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "chainhoi/skeleton.hpp"
#include "chainhoi/tensor.hpp"

namespace chainhoi {

// Skeleton tree plus an object node wired to the 8 interaction joints and a
// foot-contact node wired to the 4 foot joints.
struct HoiGraph {
    int node_count = 0;
    std::vector<std::pair<int, int>> edges;  // undirected, no self loops
    Tensor adjacency;                        // [n, n] binary, symmetric
    Tensor normalized;                       // D^-1/2 (A + I) D^-1/2
};

// When connect_object_to_all_joints is set, the object node gets an edge to
// every human joint instead of only the interaction joints (an ablation from
// the appendix; off by default).
HoiGraph build_hoi_graph(const SkeletonSpec& spec, bool connect_object_to_all_joints = false);

Tensor normalize_adjacency(const Tensor& adjacency);

// Five internal chains (torso+head with shared hips/shoulders, arms with
// collars, legs) plus the human-object chain.
struct KineticChains {
    std::vector<std::vector<int>> chains;  // ordered node index lists

    static constexpr int kTorsoHead = 0;
    static constexpr int kLeftArm = 1;
    static constexpr int kRightArm = 2;
    static constexpr int kLeftLeg = 3;
    static constexpr int kRightLeg = 4;
    static constexpr int kHumanObject = 5;
};

KineticChains build_kinetic_chains(const SkeletonSpec& spec);

struct ChainAttentionMask {
    int chain_count = 0;
    int node_count = 0;
    std::vector<uint8_t> m;  // [chains][nodes], 1 = attend allowed

    uint8_t at(int chain, int node) const {
        return m[static_cast<size_t>(chain) * node_count + static_cast<size_t>(node)];
    }
};

ChainAttentionMask build_chain_attention_mask(const KineticChains& chains, int node_count);

}  // namespace chainhoi
