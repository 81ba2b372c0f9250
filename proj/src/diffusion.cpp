#include "chainhoi/diffusion.hpp"

#include <cmath>

namespace chainhoi {

DiffusionSchedule DiffusionSchedule::linear(int timesteps, double beta_start, double beta_end) {
    if (timesteps < 2) throw ConfigError("schedule needs at least 2 timesteps");
    DiffusionSchedule s;
    s.timesteps = timesteps;
    s.beta_start = beta_start;
    s.beta_end = beta_end;
    s.beta.resize(static_cast<size_t>(timesteps));
    s.alpha_bar.resize(static_cast<size_t>(timesteps));
    double prod = 1.0;
    for (int t = 0; t < timesteps; ++t) {
        double b = beta_start + (beta_end - beta_start) * t / (timesteps - 1);
        s.beta[static_cast<size_t>(t)] = b;
        prod *= 1.0 - b;
        s.alpha_bar[static_cast<size_t>(t)] = prod;
    }
    return s;
}

double DiffusionSchedule::abar(int t) const {
    if (t < 0 || t >= timesteps)
        throw TimestepError("timestep " + std::to_string(t) + " outside [0, " +
                            std::to_string(timesteps) + ")");
    return alpha_bar[static_cast<size_t>(t)];
}

std::vector<int> DiffusionSchedule::ddim_plan(int steps) const {
    if (steps < 1 || steps > timesteps) throw ConfigError("invalid DDIM step count");
    std::vector<int> plan(static_cast<size_t>(steps));
    if (steps == 1) {
        plan[0] = timesteps - 1;
        return plan;
    }
    for (int i = 0; i < steps; ++i) {
        double frac = static_cast<double>(steps - 1 - i) / (steps - 1);
        plan[static_cast<size_t>(i)] = static_cast<int>(std::lround(frac * (timesteps - 1)));
    }
    return plan;  // descending from T-1 to 0
}

Tensor q_sample(const Tensor& m0, int t, const Tensor& noise, const DiffusionSchedule& sched) {
    if (m0.shape() != noise.shape()) throw ShapeError("q_sample: noise shape mismatch");
    double ab = sched.abar(t);
    return ops::add(ops::scale(m0, std::sqrt(ab)), ops::scale(noise, std::sqrt(1.0 - ab)));
}

Tensor ddim_step(const Tensor& m_t, const Tensor& m0_hat, int t, int t_prev,
                 const DiffusionSchedule& sched) {
    if (m_t.shape() != m0_hat.shape()) throw ShapeError("ddim_step: shape mismatch");
    if (t_prev >= t) throw StepOrderError("ddim_step needs t_prev < t");
    double ab_t = sched.abar(t);
    if (t_prev <= 0) return m0_hat;  // terminal step: abar treated as 1
    double ab_prev = sched.abar(t_prev);
    // eps_hat = (m_t - sqrt(ab_t) m0_hat) / sqrt(1 - ab_t)
    Tensor eps = ops::scale(ops::sub(m_t, ops::scale(m0_hat, std::sqrt(ab_t))),
                            1.0 / std::sqrt(1.0 - ab_t));
    return ops::add(ops::scale(m0_hat, std::sqrt(ab_prev)),
                    ops::scale(eps, std::sqrt(1.0 - ab_prev)));
}

Tensor cfg_combine(const Tensor& pred_cond, const Tensor& pred_uncond, double w) {
    if (pred_cond.shape() != pred_uncond.shape()) throw ShapeError("cfg_combine: shape mismatch");
    // uncond + w (cond - uncond)
    return ops::add(pred_uncond, ops::scale(ops::sub(pred_cond, pred_uncond), w));
}

Tensor ddim_sample_loop(const DenoiseFn& denoise, const Shape& shape,
                        const DiffusionSchedule& sched, int steps, Rng& rng) {
    std::vector<int> plan = sched.ddim_plan(steps);
    Tensor m = Tensor::randn(shape, rng);
    for (size_t i = 0; i < plan.size(); ++i) {
        int t = plan[i];
        Tensor m0_hat = denoise(m, t);
        int t_prev = i + 1 < plan.size() ? plan[i + 1] : -1;
        m = ddim_step(m, m0_hat, t, t_prev, sched);
    }
    return m;
}

Tensor sample(const ChainHoiModel& model, const ConditionBundle& cond,
              const ConditionBundle& uncond, int length, const DiffusionSchedule& sched, int steps,
              const GuidanceConfig& guidance, Rng& rng) {
    Shape shape{length, model.cfg.node_count(), kFeatureWidth};
    DenoiseFn denoise = [&](const Tensor& m_t, int t) {
        Tensor pred_cond = model.forward(m_t, t, cond);
        if (!guidance.enabled || guidance.scale == 1.0) return pred_cond;
        Tensor pred_uncond = model.forward(m_t, t, uncond);
        return cfg_combine(pred_cond, pred_uncond, guidance.scale);
    };
    return ddim_sample_loop(denoise, shape, sched, steps, rng);
}

HoiSequence normalize_sampled_tensor(const Tensor& raw, const SkeletonSpec& spec, double fps) {
    if (raw.ndim() != 3 || raw.dim(1) != spec.node_count() || raw.dim(2) != kFeatureWidth)
        throw ShapeError("sampled tensor must be [L, J+2, 12]");
    HoiSequence seq;
    seq.length = raw.dim(0);
    seq.node_count = spec.node_count();
    seq.fps = fps;
    seq.frames = raw.values();
    int fc = spec.foot_contact_node();
    int on = spec.object_node();
    for (int t = 0; t < seq.length; ++t) {
        for (int c = 7; c < kFeatureWidth; ++c) seq.at(t, 0, c) = 0.0;  // root padding
        for (int c = 0; c < 4; ++c) seq.at(t, fc, c) = seq.at(t, fc, c) > 0.5 ? 1.0 : 0.0;
        for (int c = 4; c < kFeatureWidth; ++c) seq.at(t, fc, c) = 0.0;
        for (int c = 6; c < kFeatureWidth; ++c) seq.at(t, on, c) = 0.0;
    }
    return seq;
}

}  // namespace chainhoi
