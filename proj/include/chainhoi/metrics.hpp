#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "chainhoi/geometry.hpp"
#include "chainhoi/hoi_repr.hpp"
#include "chainhoi/rng.hpp"
#include "chainhoi/skeleton.hpp"
#include "chainhoi/tensor.hpp"

namespace chainhoi {

// Foot skating ratio: over frames with any gated foot (height < height_gate),
// the fraction where a gated foot slides more than skid_thresh to the next
// frame. No gated frames = 0.
double metric_fsr(const HoiSequence& seq, const SkeletonSpec& spec, double height_gate = 0.05,
                  double skid_thresh = 0.025);

struct ContactDistanceResult {
    double value = 0.0;
    int labeled_pairs = 0;  // 0 means "no labels" (value forced to 0)
};

// Mean distance over labeled (frame, joint) pairs against the generated-posed
// mesh. Labels shorter/longer than the sequence are clipped to the overlap.
ContactDistanceResult metric_cd(const HoiSequence& gen, const ContactLabels& labels,
                                const TriangleMesh& mesh, const SkeletonSpec& spec);

// Smallest CD over a group of semantically equivalent label sources.
double metric_ocd(const HoiSequence& gen, const std::vector<ContactLabels>& group,
                  const TriangleMesh& mesh, const SkeletonSpec& spec);

// Fraction of body proxy points (all frames pooled) strictly inside the
// generated-posed mesh. Requires a watertight mesh.
double metric_ps(const HoiSequence& gen, const TriangleMesh& mesh, const SkeletonSpec& spec);

// Frechet distance between Gaussians fitted to the feature rows.
double metric_fid(const Tensor& feat_a, const Tensor& feat_b);

struct RPrecisionResult {
    double top1 = 0.0, top2 = 0.0, top3 = 0.0;
    int trials = 0;
};

RPrecisionResult metric_r_precision(const Tensor& motion_feats, const Tensor& text_feats,
                                    uint64_t seed, int pool = 32, int rounds = 10);

// feature-space extras reported alongside the headline metrics
double metric_multimodal_distance(const Tensor& motion_feats, const Tensor& text_feats);
double metric_diversity(const Tensor& feats, uint64_t seed, int subset = 0);

struct InstructionGroups {
    // group id -> member reference-sequence ids
    std::map<std::string, std::vector<std::string>> groups;

    // group containing the id, if any
    std::optional<std::string> group_of(const std::string& member_id) const;
};

struct SequenceMetrics {
    std::string id;
    double fsr = 0.0;
    double cd = 0.0;
    double ocd = 0.0;
    double ps = 0.0;
};

struct MetricReport {
    double fsr = 0.0, cd = 0.0, ocd = 0.0, ps = 0.0;
    std::optional<double> fid;
    std::optional<double> r_top1, r_top2, r_top3;
    std::optional<double> mm_dist, diversity;
    std::vector<SequenceMetrics> per_sequence;
    bool invariants_ok = true;  // e.g. OCD <= CD wherever the reference is in the group

    std::string text_table() const;
};

// symmetric eigendecomposition (Jacobi); exposed for tests
void symmetric_eigen(const std::vector<double>& m, int n, std::vector<double>& eigenvalues,
                     std::vector<double>& eigenvectors);

}  // namespace chainhoi
