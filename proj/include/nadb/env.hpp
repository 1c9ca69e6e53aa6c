#pragma once

// Synthetic active-dueling environment: seeded context-arm feature grids,
// latent reward functions, and the Bernoulli preference oracle with a
// logistic link.

#include <cstdint>
#include <span>

#include "nadb/rng.hpp"
#include "nadb/types.hpp"

namespace nadb::env {

enum class RewardKind { Square, Sine };

/// Latent reward. Square: 10 (x . theta)^2, Sine: 2 sin(x . theta).
struct RewardFunction {
    RewardKind kind = RewardKind::Square;
    Vec theta_star;

    /// Analytic bound on |f| given ||theta*|| = 1 and coordinates in (-1, 1).
    double bound() const {
        return kind == RewardKind::Square ? 10.0 * static_cast<double>(theta_star.size())
                                          : 2.0;
    }
};

/// M x K grid of d-dimensional context-arm feature vectors.
class FeatureGrid {
  public:
    FeatureGrid() = default;
    FeatureGrid(int contexts, int arms, int dim)
        : m_(contexts), k_(arms), d_(dim),
          data_(static_cast<std::size_t>(contexts) * arms * dim, 0.0) {}

    int contexts() const { return m_; }
    int arms() const { return k_; }
    int dim() const { return d_; }

    std::span<double> at(int c, int a) {
        return {data_.data() + (static_cast<std::size_t>(c) * k_ + a) * d_,
                static_cast<std::size_t>(d_)};
    }
    std::span<const double> at(int c, int a) const {
        return {data_.data() + (static_cast<std::size_t>(c) * k_ + a) * d_,
                static_cast<std::size_t>(d_)};
    }

    bool operator==(const FeatureGrid&) const = default;

  private:
    int m_ = 0;
    int k_ = 0;
    int d_ = 0;
    Vec data_;
};

/// i.i.d. uniform(-1, 1) coordinates, row-major draw order (context, arm, coord).
FeatureGrid sample_grid(Rng& rng, int m, int k, int d);

double latent_reward(const RewardFunction& f, std::span<const double> x);

/// 1 with probability sigmoid(r1 - r2); consumes exactly one uniform draw.
int btl_sample(Rng& rng, double r1, double r2);

/// Frozen evaluation grid on a dedicated stream: the given seed is mixed
/// with a fixed tag, so the stream is disjoint from Rng(seed) itself.
FeatureGrid make_eval_set(std::uint64_t seed, int n_eval, int k, int d);

/// Hidden parameter, uniform on the unit sphere.
Vec draw_theta_star(Rng& rng, int d);

}  // namespace nadb::env
