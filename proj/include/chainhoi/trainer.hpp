#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

#include "chainhoi/config.hpp"
#include "chainhoi/dataset.hpp"
#include "chainhoi/diffusion.hpp"
#include "chainhoi/losses.hpp"
#include "chainhoi/model.hpp"

namespace chainhoi {

struct EpochLoss {
    int epoch = 0;
    double l_diff = 0.0, l_h = 0.0, l_o = 0.0, total = 0.0;
};

struct EvalLoss {
    double l_diff = 0.0, l_h = 0.0, l_o = 0.0, total = 0.0;
};

// Diffusion training over a fixed in-memory dataset. Deterministic from
// (config, seed); full optimizer and RNG state travel with checkpoints so a
// resumed run continues bit-for-bit.
class Trainer {
public:
    Trainer(ChainHoiModel& model, const RunConfig& run,
            const std::vector<SequenceRecord>& records,
            const std::map<std::string, TriangleMesh>& meshes, bool diffusion_only = false);

    void run_epoch();
    int epochs_done() const { return epoch_; }
    const std::vector<EpochLoss>& history() const { return history_; }

    // loss over a fixed, seeded set of (t, noise) draws; no condition dropout
    EvalLoss evaluate_fixed() const;

    void save_checkpoint(const std::string& path) const;
    void load_checkpoint(const std::string& path);

    static void write_loss_csv(const std::vector<EpochLoss>& history, const std::string& path);

private:
    struct Prepared {
        Tensor gt;
        std::vector<int> text_ids;
        std::vector<Vec3> object_points;
        const TriangleMesh* mesh = nullptr;
        std::shared_ptr<PosedMeshFrames> gt_frames;
        ContactLabels labels;
    };

    TotalLoss sequence_loss(const Prepared& p, int t, const Tensor& noise, bool drop_text) const;

    ChainHoiModel& model_;
    RunConfig run_;
    DiffusionSchedule schedule_;
    bool diffusion_only_ = false;
    std::vector<Prepared> prepared_;
    AdamW optimizer_;
    Rng rng_;
    int epoch_ = 0;
    std::vector<EpochLoss> history_;
};

}  // namespace chainhoi
