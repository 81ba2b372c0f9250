#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "chainhoi/diffusion.hpp"

using namespace chainhoi;

TEST_CASE("schedule: monotone alpha_bar, endpoints, algebraic identity") {
    DiffusionSchedule s = DiffusionSchedule::linear();
    CHECK(s.timesteps == 1000);
    CHECK(s.beta[0] == doctest::Approx(1e-4));
    CHECK(s.beta[999] == doctest::Approx(0.02));
    CHECK(s.abar(0) == doctest::Approx(1.0 - 1e-4));
    for (int t = 1; t < 1000; ++t) {
        CHECK(s.abar(t) < s.abar(t - 1));
        CHECK(s.abar(t) > 0.0);
        CHECK(s.abar(t) < 1.0);
        double root = std::sqrt(s.abar(t));
        CHECK(root * root + (1.0 - s.abar(t)) == doctest::Approx(1.0).epsilon(1e-15));
    }
    CHECK_THROWS_AS(s.abar(-1), TimestepError);
    CHECK_THROWS_AS(s.abar(1000), TimestepError);
}

TEST_CASE("ddim plan is evenly spaced, descending, covering both ends") {
    DiffusionSchedule s = DiffusionSchedule::linear();
    std::vector<int> plan = s.ddim_plan(50);
    REQUIRE(plan.size() == 50);
    CHECK(plan.front() == 999);
    CHECK(plan.back() == 0);
    for (size_t i = 1; i < plan.size(); ++i) {
        CHECK(plan[i] < plan[i - 1]);
        int gap = plan[i - 1] - plan[i];
        CHECK(gap >= 19);
        CHECK(gap <= 21);
    }
}

TEST_CASE("q_sample with zero noise scales by sqrt(abar)") {
    DiffusionSchedule s = DiffusionSchedule::linear();
    Tensor m0 = Tensor::from({2, 3}, {1, -2, 3, -4, 5, -6});
    Tensor zero = Tensor::zeros({2, 3});
    for (int t : {0, 250, 999}) {
        Tensor mt = q_sample(m0, t, zero, s);
        double root = std::sqrt(s.abar(t));
        for (int64_t i = 0; i < m0.numel(); ++i)
            CHECK(mt.data()[i] == doctest::Approx(root * m0.data()[i]).epsilon(1e-15));
    }
}

TEST_CASE("q_sample near t=0 stays within 1.5 percent of m0") {
    DiffusionSchedule s = DiffusionSchedule::linear();
    Rng rng(81);
    Tensor m0 = Tensor::full({4}, 1.0);
    Tensor noise = Tensor::randn({4}, rng);
    Tensor mt = q_sample(m0, 0, noise, s);
    for (int64_t i = 0; i < 4; ++i)
        CHECK(std::abs(mt.data()[i] - m0.data()[i]) < 0.015 * (1.0 + std::abs(noise.data()[i])));
    CHECK_THROWS_AS(q_sample(m0, 1000, noise, s), TimestepError);
}

TEST_CASE("q_sample is affine in m0 and noise (superposition)") {
    DiffusionSchedule s = DiffusionSchedule::linear();
    Rng rng(82);
    Tensor a = Tensor::randn({8}, rng), b = Tensor::randn({8}, rng);
    Tensor na = Tensor::randn({8}, rng), nb = Tensor::randn({8}, rng);
    int t = 417;
    Tensor lhs = q_sample(ops::add(a, b), t, ops::add(na, nb), s);
    Tensor rhs = ops::add(q_sample(a, t, na, s), q_sample(b, t, nb, s));
    for (int64_t i = 0; i < 8; ++i) CHECK(std::abs(lhs.data()[i] - rhs.data()[i]) <= 1e-12);
}

TEST_CASE("q_sample Monte-Carlo moments at t=500") {
    DiffusionSchedule s = DiffusionSchedule::linear();
    Rng rng(83);
    Tensor m0 = Tensor::from({2}, {0.7, -1.3});
    const int draws = 100000;
    std::vector<double> mean(2, 0.0), m2(2, 0.0);
    for (int d = 0; d < draws; ++d) {
        Tensor noise = Tensor::randn({2}, rng);
        Tensor mt = q_sample(m0, 500, noise, s);
        for (int i = 0; i < 2; ++i) {
            double x = mt.data()[i];
            mean[static_cast<size_t>(i)] += x;
            m2[static_cast<size_t>(i)] += x * x;
        }
    }
    double ab = s.abar(500);
    for (int i = 0; i < 2; ++i) {
        double mu = mean[static_cast<size_t>(i)] / draws;
        double var = m2[static_cast<size_t>(i)] / draws - mu * mu;
        CHECK(std::abs(mu - std::sqrt(ab) * m0.data()[i]) < 0.01 * std::max(1.0, std::abs(m0.data()[i])));
        CHECK(std::abs(var - (1.0 - ab)) < 0.01 * (1.0 - ab));
    }
}

TEST_CASE("ddim_step: algebraic identity with the true m0") {
    DiffusionSchedule s = DiffusionSchedule::linear();
    Rng rng(84);
    Tensor m0 = Tensor::randn({3, 4}, rng);
    Tensor noise = Tensor::randn({3, 4}, rng);
    for (auto [t, t_prev] : {std::pair{999, 500}, std::pair{500, 100}, std::pair{100, 1}}) {
        Tensor m_t = q_sample(m0, t, noise, s);
        Tensor stepped = ddim_step(m_t, m0, t, t_prev, s);
        Tensor expect = q_sample(m0, t_prev, noise, s);
        for (int64_t i = 0; i < m0.numel(); ++i)
            CHECK(std::abs(stepped.data()[i] - expect.data()[i]) < 1e-9);
    }
}

TEST_CASE("ddim_step terminal and error cases") {
    DiffusionSchedule s = DiffusionSchedule::linear();
    Rng rng(85);
    Tensor m0 = Tensor::randn({5}, rng);
    Tensor m_t = Tensor::randn({5}, rng);
    Tensor out = ddim_step(m_t, m0, 40, 0, s);
    for (int64_t i = 0; i < 5; ++i) CHECK(out.data()[i] == m0.data()[i]);
    CHECK_THROWS_AS(ddim_step(m_t, m0, 10, 10, s), StepOrderError);
    CHECK_THROWS_AS(ddim_step(m_t, m0, 10, 20, s), StepOrderError);
}

TEST_CASE("cfg_combine closed forms") {
    Tensor c = Tensor::from({3}, {1, 2, 3});
    Tensor u = Tensor::from({3}, {0.5, -1, 4});
    Tensor w1 = cfg_combine(c, u, 1.0);
    Tensor w0 = cfg_combine(c, u, 0.0);
    Tensor w2 = cfg_combine(c, u, 2.0);
    for (int i = 0; i < 3; ++i) {
        CHECK(w1.data()[i] == c.data()[i]);
        CHECK(w0.data()[i] == u.data()[i]);
        CHECK(w2.data()[i] == doctest::Approx(2 * c.data()[i] - u.data()[i]));
    }
}

TEST_CASE("oracle denoiser: 50-step chain reproduces the target") {
    DiffusionSchedule s = DiffusionSchedule::linear();
    Rng rng(86);
    Tensor target = Tensor::randn({4, 6}, rng);
    DenoiseFn oracle = [&](const Tensor&, int) { return target; };
    Rng chain_rng(4242);
    Tensor out = ddim_sample_loop(oracle, {4, 6}, s, 50, chain_rng);
    for (int64_t i = 0; i < target.numel(); ++i)
        CHECK(std::abs(out.data()[i] - target.data()[i]) < 1e-6);
}

TEST_CASE("sampling is bitwise deterministic under a fixed seed") {
    DiffusionSchedule s = DiffusionSchedule::linear();
    Rng rng(87);
    Tensor target = Tensor::randn({4, 6}, rng);
    // denoiser that actually depends on its input, so the chain matters
    DenoiseFn denoise = [&](const Tensor& m_t, int t) {
        return ops::add(ops::scale(target, 0.9), ops::scale(m_t, 1e-3 * (t % 7)));
    };
    Rng r1(555), r2(555);
    Tensor a = ddim_sample_loop(denoise, {4, 6}, s, 50, r1);
    Tensor b = ddim_sample_loop(denoise, {4, 6}, s, 50, r2);
    for (int64_t i = 0; i < a.numel(); ++i) CHECK(a.data()[i] == b.data()[i]);
}

TEST_CASE("normalize_sampled_tensor repairs padding and contact bits") {
    SkeletonSpec spec = SkeletonSpec::smpl22();
    Rng rng(88);
    Tensor raw = Tensor::randn({3, spec.node_count(), kFeatureWidth}, rng);
    HoiSequence seq = normalize_sampled_tensor(raw, spec, 20.0);
    seq.validate(spec);  // padding zeroed, bits binary
}
