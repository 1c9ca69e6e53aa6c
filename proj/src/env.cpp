#include "nadb/env.hpp"

#include <cmath>

#include "nadb/errors.hpp"

namespace nadb::env {

namespace {
constexpr std::uint64_t kEvalStreamTag = 0x7A5E0FEED5E7ULL;
}

FeatureGrid sample_grid(Rng& rng, int m, int k, int d) {
    if (m < 1 || k < 1 || d < 1)
        throw ConfigError("sample_grid: m, k, d must all be >= 1");
    FeatureGrid grid(m, k, d);
    for (int c = 0; c < m; ++c)
        for (int a = 0; a < k; ++a)
            for (auto& coord : grid.at(c, a)) coord = rng.uniform_sym();
    return grid;
}

double latent_reward(const RewardFunction& f, std::span<const double> x) {
    if (x.size() != f.theta_star.size())
        throw DimensionMismatch("latent_reward: |x| != |theta_star|");
    double dot = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) dot += x[i] * f.theta_star[i];
    return f.kind == RewardKind::Square ? 10.0 * dot * dot : 2.0 * std::sin(dot);
}

int btl_sample(Rng& rng, double r1, double r2) {
    const double diff = r1 - r2;
    double p;
    if (diff >= 0.0) {
        p = 1.0 / (1.0 + std::exp(-diff));
    } else {
        const double e = std::exp(diff);
        p = e / (1.0 + e);
    }
    return rng.uniform01() < p ? 1 : 0;
}

FeatureGrid make_eval_set(std::uint64_t seed, int n_eval, int k, int d) {
    Rng rng(splitmix64(seed ^ kEvalStreamTag));
    return sample_grid(rng, n_eval, k, d);
}

Vec draw_theta_star(Rng& rng, int d) {
    Vec theta(d);
    double norm_sq = 0.0;
    do {
        norm_sq = 0.0;
        for (auto& v : theta) {
            v = rng.normal();
            norm_sq += v * v;
        }
    } while (norm_sq == 0.0);
    const double inv = 1.0 / std::sqrt(norm_sq);
    for (auto& v : theta) v *= inv;
    return theta;
}

}  // namespace nadb::env
