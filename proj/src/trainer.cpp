#include "chainhoi/trainer.hpp"

#include <cstdio>
#include <fstream>
#include <numeric>

#include "chainhoi/checkpoint.hpp"

namespace chainhoi {

Trainer::Trainer(ChainHoiModel& model, const RunConfig& run,
                 const std::vector<SequenceRecord>& records,
                 const std::map<std::string, TriangleMesh>& meshes, bool diffusion_only)
    : model_(model),
      run_(run),
      schedule_(DiffusionSchedule::linear(run.timesteps, run.beta_start, run.beta_end)),
      diffusion_only_(diffusion_only),
      rng_(run.seed) {
    if (records.empty()) throw DatasetError("training needs at least one sequence");
    if (model_.cfg.max_timesteps != run.timesteps)
        throw ConfigError("model max_timesteps disagrees with the schedule");
    prepared_.reserve(records.size());
    for (const SequenceRecord& r : records) {
        auto mesh_it = meshes.find(r.object_id);
        if (mesh_it == meshes.end()) throw DataError("missing mesh for object " + r.object_id);
        Prepared p;
        p.gt = Tensor::from({r.seq.length, r.seq.node_count, kFeatureWidth}, r.seq.frames);
        p.text_ids = tokenize(r.text, model_.cfg.vocab);
        p.object_points = sample_mesh_surface(mesh_it->second, 64, fnv1a(r.object_id));
        p.mesh = &mesh_it->second;
        std::vector<ObjectPose> poses;
        for (int t = 0; t < r.seq.length; ++t) poses.push_back(object_pose_from_frame(r.seq, t));
        p.gt_frames = std::make_shared<PosedMeshFrames>(mesh_it->second, poses);
        p.labels = r.labels;
        prepared_.push_back(std::move(p));
    }
    AdamWConfig ocfg;
    ocfg.lr = run.lr;
    ocfg.beta1 = run.adam_beta1;
    ocfg.beta2 = run.adam_beta2;
    ocfg.eps = run.adam_eps;
    ocfg.weight_decay = run.weight_decay;
    optimizer_ = AdamW(model_.params(), ocfg);
}

TotalLoss Trainer::sequence_loss(const Prepared& p, int t, const Tensor& noise,
                                 bool drop_text) const {
    Tensor m_t = q_sample(p.gt, t, noise, schedule_);
    ConditionBundle cond = drop_text ? model_.make_null_condition(p.object_points)
                                     : model_.make_condition(p.text_ids, p.object_points);
    Tensor pred = model_.forward(m_t, t, cond);
    TotalLoss out;
    out.l_diff = ops::mse(pred, p.gt);
    if (diffusion_only_) {
        out.l_h = Tensor::scalar(0.0);
        out.l_o = Tensor::scalar(0.0);
        out.total = out.l_diff;
        return out;
    }
    out.l_h = loss_h(pred, p.labels, p.gt_frames->queries(), model_.spec);
    out.l_o = loss_o(pred, p.gt, model_.spec);
    out.total = ops::add(out.l_diff, ops::add(ops::scale(out.l_h, run_.lambda_h),
                                              ops::scale(out.l_o, run_.lambda_o)));
    return out;
}

void Trainer::run_epoch() {
    int n = static_cast<int>(prepared_.size());
    std::vector<int> order(static_cast<size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    for (size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng_.index(i)]);

    EpochLoss epoch_loss;
    epoch_loss.epoch = epoch_;
    int batch_size = std::max(1, std::min(run_.batch_size, n));
    for (int start = 0; start < n; start += batch_size) {
        int count = std::min(batch_size, n - start);
        optimizer_.zero_grad();
        Tensor batch_total;
        for (int b = 0; b < count; ++b) {
            const Prepared& p = prepared_[static_cast<size_t>(order[static_cast<size_t>(start + b)])];
            int t = static_cast<int>(rng_.index(static_cast<uint64_t>(run_.timesteps)));
            Tensor noise = Tensor::randn(p.gt.shape(), rng_);
            bool drop = rng_.uniform() < model_.cfg.cfg_text_dropout;
            TotalLoss tl = sequence_loss(p, t, noise, drop);
            epoch_loss.l_diff += tl.l_diff.item();
            epoch_loss.l_h += tl.l_h.item();
            epoch_loss.l_o += tl.l_o.item();
            epoch_loss.total += tl.total.item();
            Tensor scaled = ops::scale(tl.total, 1.0 / count);
            batch_total = batch_total.defined() ? ops::add(batch_total, scaled) : scaled;
        }
        batch_total.backward();
        optimizer_.step();
    }
    epoch_loss.l_diff /= n;
    epoch_loss.l_h /= n;
    epoch_loss.l_o /= n;
    epoch_loss.total /= n;
    history_.push_back(epoch_loss);
    ++epoch_;
}

EvalLoss Trainer::evaluate_fixed() const {
    Rng eval_rng(run_.seed ^ 0x5deece66dull);
    EvalLoss out;
    for (const Prepared& p : prepared_) {
        int t = static_cast<int>(eval_rng.index(static_cast<uint64_t>(run_.timesteps)));
        Tensor noise = Tensor::randn(p.gt.shape(), eval_rng);
        TotalLoss tl = sequence_loss(p, t, noise, false);
        out.l_diff += tl.l_diff.item();
        out.l_h += tl.l_h.item();
        out.l_o += tl.l_o.item();
        out.total += tl.total.item();
    }
    int n = static_cast<int>(prepared_.size());
    out.l_diff /= n;
    out.l_h /= n;
    out.l_o /= n;
    out.total /= n;
    return out;
}

void Trainer::save_checkpoint(const std::string& path) const {
    Checkpoint ck;
    ParamList params = model_.params();
    ck.put_params(params);
    for (size_t i = 0; i < params.size(); ++i) {
        ck.put_tensor("adamw.m." + params[i].name,
                      Tensor::from(params[i].tensor.shape(), optimizer_.moment1()[i]));
        ck.put_tensor("adamw.v." + params[i].name,
                      Tensor::from(params[i].tensor.shape(), optimizer_.moment2()[i]));
    }
    ck.put_bytes("trainer.step", std::to_string(optimizer_.step_count()));
    ck.put_bytes("trainer.epoch", std::to_string(epoch_));
    ck.put_bytes("trainer.rng", rng_.save_state());
    ck.save(path);
}

void Trainer::load_checkpoint(const std::string& path) {
    Checkpoint ck = Checkpoint::load(path);
    ParamList params = model_.params();
    ck.load_params(params);
    for (size_t i = 0; i < params.size(); ++i) {
        const auto& m = ck.entry("adamw.m." + params[i].name);
        const auto& v = ck.entry("adamw.v." + params[i].name);
        optimizer_.moment1()[i] = m.f64;
        optimizer_.moment2()[i] = v.f64;
    }
    optimizer_.set_step_count(std::stoll(ck.get_bytes("trainer.step")));
    epoch_ = std::stoi(ck.get_bytes("trainer.epoch"));
    rng_.load_state(ck.get_bytes("trainer.rng"));
}

void Trainer::write_loss_csv(const std::vector<EpochLoss>& history, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw DataError("cannot write loss curve: " + path);
    os << "epoch,l_diff,l_h,l_o,total\n";
    char buf[256];
    for (const EpochLoss& e : history) {
        std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g,%.17g\n", e.epoch, e.l_diff, e.l_h,
                      e.l_o, e.total);
        os << buf;
    }
}

}  // namespace chainhoi
