#pragma once

#include <vector>

#include "chainhoi/model.hpp"
#include "chainhoi/tensor.hpp"

namespace chainhoi {

struct DiffusionSchedule {
    int timesteps = 1000;
    double beta_start = 1e-4;
    double beta_end = 0.02;
    std::vector<double> beta;       // [T]
    std::vector<double> alpha_bar;  // [T], strictly decreasing cumulative product

    static DiffusionSchedule linear(int timesteps = 1000, double beta_start = 1e-4,
                                    double beta_end = 0.02);

    double abar(int t) const;  // throws TimestepError outside [0, T)

    // evenly spaced DDIM plan, descending, includes T-1 and ends at 0
    std::vector<int> ddim_plan(int steps) const;
};

struct GuidanceConfig {
    double scale = 2.0;
    bool enabled = true;
};

// m_t = sqrt(abar_t) m_0 + sqrt(1 - abar_t) noise
Tensor q_sample(const Tensor& m0, int t, const Tensor& noise, const DiffusionSchedule& sched);

// Deterministic (eta = 0) DDIM update from t to t_prev given the model's clean
// prediction. t_prev <= 0 is the terminal step (abar treated as 1): returns
// m0_hat itself.
Tensor ddim_step(const Tensor& m_t, const Tensor& m0_hat, int t, int t_prev,
                 const DiffusionSchedule& sched);

Tensor cfg_combine(const Tensor& pred_cond, const Tensor& pred_uncond, double w);

// Any callable denoiser; lets tests drive the chain with an oracle.
using DenoiseFn = std::function<Tensor(const Tensor& m_t, int t)>;

Tensor ddim_sample_loop(const DenoiseFn& denoise, const Shape& shape, const DiffusionSchedule& sched,
                        int steps, Rng& rng);

// Full guided sampling with the ChainHOI model; returns the raw [L, n, 12]
// prediction (callers normalize into a HoiSequence).
Tensor sample(const ChainHoiModel& model, const ConditionBundle& cond,
              const ConditionBundle& uncond, int length, const DiffusionSchedule& sched, int steps,
              const GuidanceConfig& guidance, Rng& rng);

// Snap a raw sampled tensor into a schema-valid HoiSequence: zero padding
// channels, threshold the foot-contact bits.
HoiSequence normalize_sampled_tensor(const Tensor& raw, const SkeletonSpec& spec, double fps);

}  // namespace chainhoi
