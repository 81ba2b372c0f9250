#pragma once

#include <map>
#include <string>
#include <vector>

#include "chainhoi/hoi_repr.hpp"
#include "chainhoi/metrics.hpp"
#include "chainhoi/skeleton.hpp"

namespace chainhoi {

struct SequenceRecord {
    std::string id;
    std::string text;
    std::string object_id;
    HoiSequence seq;
    ContactLabels labels;
};

// JSON Lines, one record per line with fixed field order:
// id, text, object_id, fps, frames, contact_labels
void save_jsonl(const std::vector<SequenceRecord>& records, const std::string& path);
std::vector<SequenceRecord> load_jsonl(const std::string& path, const SkeletonSpec& spec);

void save_groups(const InstructionGroups& groups, const std::string& path);
InstructionGroups load_groups(const std::string& path);

// deterministic area-weighted surface samples, used as the PointNet input
std::vector<Vec3> sample_mesh_surface(const TriangleMesh& mesh, int count, uint64_t seed);

enum class ScenarioKind { Grasp, Carry, Push, SitOn };

struct GeneratorOptions {
    int count = 8;
    uint64_t seed = 0;
    int min_frames = 24;
    int max_frames = 48;
    double fps = 20.0;
    double tau_c = 0.05;
    std::vector<ScenarioKind> scenarios = {ScenarioKind::Grasp, ScenarioKind::Carry,
                                           ScenarioKind::Push, ScenarioKind::SitOn};
};

struct GeneratedDataset {
    std::vector<SequenceRecord> records;
    std::map<std::string, TriangleMesh> meshes;  // object_id -> mesh
    InstructionGroups groups;
    // template-intent labels per record, for the label/geometry cross-check
    std::vector<ContactLabels> intent_labels;
};

GeneratedDataset generate_dataset(const GeneratorOptions& options, const SkeletonSpec& spec);

// writes dataset.jsonl, meshes/*.obj and groups.json under out_dir
void write_dataset(const GeneratedDataset& data, const std::string& out_dir);

// collects the closed vocabulary over all record texts
std::vector<std::string> build_vocabulary(const std::vector<SequenceRecord>& records);

}  // namespace chainhoi
