#pragma once

// Evaluation quantities and theory diagnostics: worst/mean sub-optimality
// gap over a frozen evaluation grid, dueling regret, effective dimension,
// and the Monte-Carlo probe for the Mahalanobis-norm decay bound.

#include <cstdint>
#include <vector>

#include "nadb/env.hpp"
#include "nadb/linalg.hpp"
#include "nadb/policy.hpp"
#include "nadb/types.hpp"

namespace nadb::metrics {

struct RoundMetrics {
    std::int64_t t = 0;
    double worst_gap = 0.0;
    double mae = 0.0;
    double cum_regret = 0.0;
    double avg_regret = 0.0;
    double d_tilde = 0.0;
    double max_maha_norm = 0.0;  // norm of the round's observed duel direction
    double min_eig_v = 0.0;      // refreshed sparsely (power-of-two rounds)
};

struct GapStats {
    double worst = 0.0;
    double mae = 0.0;
};

/// Per-context gap max_a f - f(policy choice), reduced over the grid.
GapStats eval_gaps(const policy::GreedyPolicy& pol, const env::FeatureGrid& eval_grid,
                   const env::RewardFunction& f);
double worst_gap(const policy::GreedyPolicy& pol, const env::FeatureGrid& eval_grid,
                 const env::RewardFunction& f);
double mae_gap(const policy::GreedyPolicy& pol, const env::FeatureGrid& eval_grid,
               const env::RewardFunction& f);

/// f(best arm) - (f(a1) + f(a2)) / 2 over the round's candidate arms.
double regret_increment(const env::RewardFunction& f, const env::FeatureGrid& grid, int c,
                        int a1, int a2);

/// Running effective-dimension estimate: the maintained log-determinant of
/// the rescaled design matrix over selected pairs.
double effective_dim(const linalg::DesignState& design);

struct TheoremOneDiag {
    std::int64_t t = 0;
    double lambda_min = 0.0;
    double bound = 0.0;  // L / G_t with estimated covariance floor; +inf when vacuous
    double observed_max_norm = 0.0;
};

/// Feeds the z stream into V_t = lambda I + sum z z^T and, at t = 0 and
/// every power of two, records lambda_min(V_t), the max Mahalanobis norm of
/// sample_set under V_t^{-1}, and the concentration-based decay bound with
/// empirically estimated constants.
std::vector<TheoremOneDiag> theorem_one_probe(const std::vector<Vec>& history,
                                              const std::vector<Vec>& sample_set,
                                              double lambda, double delta = 0.05);

/// Least-squares slope of log(observed_max_norm) vs log(t) over checkpoints
/// with t in [t_min, t_max].
double fit_loglog_slope(const std::vector<TheoremOneDiag>& series, std::int64_t t_min,
                        std::int64_t t_max);

}  // namespace nadb::metrics
