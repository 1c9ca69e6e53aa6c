#include "nadb/env.hpp"

#include <cmath>

#include "doctest.h"
#include "nadb/errors.hpp"
#include "nadb/rng.hpp"

using namespace nadb;
using env::FeatureGrid;
using env::RewardFunction;
using env::RewardKind;

TEST_CASE("sample_grid: range, shape and determinism") {
    Rng rng(100);
    const FeatureGrid g = env::sample_grid(rng, 1, 1, 3);
    CHECK(g.contexts() == 1);
    CHECK(g.arms() == 1);
    CHECK(g.dim() == 3);
    for (double v : g.at(0, 0)) {
        CHECK(v > -1.0);
        CHECK(v < 1.0);
    }

    Rng r1(7), r2(7);
    CHECK(env::sample_grid(r1, 4, 3, 5) == env::sample_grid(r2, 4, 3, 5));
}

TEST_CASE("sample_grid moments match uniform(-1,1)") {
    Rng rng(2024);
    const FeatureGrid g = env::sample_grid(rng, 100, 10, 100);  // 1e5 coordinates
    double sum = 0.0, sq = 0.0;
    int n = 0;
    for (int c = 0; c < g.contexts(); ++c)
        for (int a = 0; a < g.arms(); ++a)
            for (double v : g.at(c, a)) {
                sum += v;
                sq += v * v;
                ++n;
            }
    const double mean = sum / n;
    const double var = sq / n - mean * mean;
    CHECK(std::abs(mean) < 0.02);
    CHECK(std::abs(var - 1.0 / 3.0) < 0.02);
}

TEST_CASE("latent reward formulas") {
    RewardFunction square{RewardKind::Square, Vec{1.0, 0.0, 0.0}};
    CHECK(env::latent_reward(square, Vec{0.0, 0.7, -0.3}) == 0.0);
    CHECK(env::latent_reward(square, Vec{0.5, 0.2, 0.9}) == doctest::Approx(2.5));

    RewardFunction sine{RewardKind::Sine, Vec{0.5, 0.5, 0.5, 0.5}};
    const double quarter_pi = M_PI / 4.0;
    CHECK(env::latent_reward(sine, Vec{quarter_pi, quarter_pi, quarter_pi, quarter_pi}) ==
          doctest::Approx(2.0));

    CHECK_THROWS_AS(env::latent_reward(square, Vec{1.0}), DimensionMismatch);
}

TEST_CASE("reward stays inside the analytic bounds on random inputs") {
    Rng rng(55);
    const Vec theta = env::draw_theta_star(rng, 6);
    RewardFunction square{RewardKind::Square, theta};
    RewardFunction sine{RewardKind::Sine, theta};
    const FeatureGrid g = env::sample_grid(rng, 50, 4, 6);
    for (int c = 0; c < g.contexts(); ++c)
        for (int a = 0; a < g.arms(); ++a) {
            const double fs = env::latent_reward(square, g.at(c, a));
            CHECK(fs >= 0.0);
            CHECK(fs <= square.bound());
            const double fn = env::latent_reward(sine, g.at(c, a));
            CHECK(fn >= -2.0);
            CHECK(fn <= 2.0);
        }
}

TEST_CASE("btl_sample frequencies follow the logistic link") {
    const auto frequency = [](double diff, int n) {
        Rng rng(999);
        int wins = 0;
        for (int i = 0; i < n; ++i) wins += env::btl_sample(rng, diff, 0.0);
        return static_cast<double>(wins) / n;
    };

    const int n = 10000;
    // 3 binomial standard errors around mu(delta)
    const auto check_bin = [&](double delta) {
        const double mu = 1.0 / (1.0 + std::exp(-delta));
        const double se = std::sqrt(mu * (1.0 - mu) / n);
        CHECK(std::abs(frequency(delta, n) - mu) < 3.0 * se);
    };
    check_bin(0.0);
    check_bin(2.0);

    CHECK(frequency(50.0, n) == 1.0);  // saturated preference
}

TEST_CASE("btl calibration across the +-3 difference range") {
    const int n = 10000;
    Rng rng(31337);
    for (double delta = -3.0; delta <= 3.0; delta += 1.0) {
        int wins = 0;
        for (int i = 0; i < n; ++i) wins += env::btl_sample(rng, delta, 0.0);
        const double mu = 1.0 / (1.0 + std::exp(-delta));
        const double se = std::sqrt(mu * (1.0 - mu) / n);
        CHECK(std::abs(static_cast<double>(wins) / n - mu) < 3.0 * se);
    }
}

TEST_CASE("make_eval_set is frozen and disjoint from the training stream") {
    const FeatureGrid a = env::make_eval_set(5, 500, 10, 20);
    const FeatureGrid b = env::make_eval_set(5, 500, 10, 20);
    CHECK(a == b);
    CHECK(a.contexts() == 500);
    CHECK(a.arms() == 10);
    for (double v : a.at(499, 9)) {
        CHECK(v > -1.0);
        CHECK(v < 1.0);
    }

    // same integer seed must not reproduce the training stream
    Rng train_rng(5);
    const FeatureGrid train = env::sample_grid(train_rng, 500, 10, 20);
    CHECK(train != a);

    CHECK(env::make_eval_set(6, 500, 10, 20) != a);
}

TEST_CASE("consuming the eval stream leaves the training stream unchanged") {
    Rng baseline(77);
    const FeatureGrid first = env::sample_grid(baseline, 3, 2, 4);
    const FeatureGrid second = env::sample_grid(baseline, 3, 2, 4);

    Rng interleaved(77);
    const FeatureGrid first_again = env::sample_grid(interleaved, 3, 2, 4);
    (void)env::make_eval_set(123, 10, 2, 4);
    const FeatureGrid second_again = env::sample_grid(interleaved, 3, 2, 4);

    CHECK(first == first_again);
    CHECK(second == second_again);
}

TEST_CASE("theta star lies on the unit sphere") {
    Rng rng(4);
    for (int d : {1, 3, 20}) {
        const Vec theta = env::draw_theta_star(rng, d);
        double nrm = 0.0;
        for (double v : theta) nrm += v * v;
        CHECK(std::sqrt(nrm) == doctest::Approx(1.0).epsilon(1e-12));
    }
}
