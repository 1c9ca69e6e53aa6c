#include "nadb/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "nadb/errors.hpp"

namespace nadb::metrics {

GapStats eval_gaps(const policy::GreedyPolicy& pol, const env::FeatureGrid& eval_grid,
                   const env::RewardFunction& f) {
    GapStats stats;
    double total = 0.0;
    for (int c = 0; c < eval_grid.contexts(); ++c) {
        double best = -std::numeric_limits<double>::infinity();
        for (int a = 0; a < eval_grid.arms(); ++a)
            best = std::max(best, env::latent_reward(f, eval_grid.at(c, a)));
        const int chosen = pol.choose(eval_grid, c);
        const double gap = best - env::latent_reward(f, eval_grid.at(c, chosen));
        stats.worst = std::max(stats.worst, gap);
        total += gap;
    }
    stats.mae = total / eval_grid.contexts();
    return stats;
}

double worst_gap(const policy::GreedyPolicy& pol, const env::FeatureGrid& eval_grid,
                 const env::RewardFunction& f) {
    return eval_gaps(pol, eval_grid, f).worst;
}

double mae_gap(const policy::GreedyPolicy& pol, const env::FeatureGrid& eval_grid,
               const env::RewardFunction& f) {
    return eval_gaps(pol, eval_grid, f).mae;
}

double regret_increment(const env::RewardFunction& f, const env::FeatureGrid& grid, int c,
                        int a1, int a2) {
    double best = -std::numeric_limits<double>::infinity();
    for (int a = 0; a < grid.arms(); ++a)
        best = std::max(best, env::latent_reward(f, grid.at(c, a)));
    const double r1 = env::latent_reward(f, grid.at(c, a1));
    const double r2 = env::latent_reward(f, grid.at(c, a2));
    return best - 0.5 * (r1 + r2);
}

double effective_dim(const linalg::DesignState& design) { return design.log_det(); }

namespace {

double max_sample_norm(const linalg::SymMatrix& inverse, const std::vector<Vec>& sample) {
    double worst = 0.0;
    for (const auto& z : sample)
        worst = std::max(worst, linalg::mahalanobis_norm(inverse, z));
    return worst;
}

}  // namespace

std::vector<TheoremOneDiag> theorem_one_probe(const std::vector<Vec>& history,
                                              const std::vector<Vec>& sample_set,
                                              double lambda, double delta) {
    if (history.empty() || sample_set.empty())
        throw ConfigError("theorem_one_probe: empty inputs");
    const int d = static_cast<int>(history.front().size());

    double big_l = 0.0;
    for (const auto& z : sample_set) {
        double nrm = 0.0;
        for (double v : z) nrm += v * v;
        big_l = std::max(big_l, std::sqrt(nrm));
    }

    linalg::DesignState state(d, lambda);
    linalg::SymMatrix v_mat(d, lambda);
    double c_max = 0.0;  // running max ||z_s||^4 surrogate for the increment bound

    std::vector<TheoremOneDiag> series;
    const auto record = [&](std::int64_t t) {
        TheoremOneDiag diag;
        diag.t = t;
        diag.lambda_min = linalg::min_eigenvalue(v_mat, 1e-10);
        diag.observed_max_norm = max_sample_norm(state.inverse(), sample_set);
        diag.bound = std::numeric_limits<double>::infinity();
        if (t > 0) {
            // Sigma_hat = (V_t - lambda I) / t; its min eigenvalue feeds the
            // concentration lower bound on lambda_min(V_t).
            linalg::SymMatrix sigma_hat = v_mat;
            for (int i = 0; i < d; ++i) sigma_hat.add(i, i, -lambda);
            sigma_hat.scale(1.0 / static_cast<double>(t));
            double min_eig_sigma = 0.0;
            try {
                min_eig_sigma = linalg::min_eigenvalue(sigma_hat, 1e-10);
            } catch (const NotPositiveDefinite&) {
                min_eig_sigma = 0.0;  // rank-deficient early covariance
            }
            const double slack =
                std::sqrt(8.0 * t * c_max * std::log(static_cast<double>(d) / delta));
            const double g_sq = static_cast<double>(t) * min_eig_sigma - slack;
            if (g_sq > 0.0) diag.bound = big_l / std::sqrt(g_sq);
        }
        series.push_back(diag);
    };

    record(0);
    std::int64_t next_checkpoint = 1;
    for (std::size_t s = 0; s < history.size(); ++s) {
        const Vec& z = history[s];
        if (static_cast<int>(z.size()) != d)
            throw DimensionMismatch("theorem_one_probe: inconsistent z dimension");
        state.update(z);
        for (int i = 0; i < d; ++i)
            for (int j = i; j < d; ++j) v_mat.add(i, j, z[i] * z[j]);
        double nrm_sq = 0.0;
        for (double x : z) nrm_sq += x * x;
        c_max = std::max(c_max, nrm_sq * nrm_sq);

        const auto t = static_cast<std::int64_t>(s + 1);
        if (t == next_checkpoint) {
            record(t);
            next_checkpoint *= 2;
        }
    }
    return series;
}

double fit_loglog_slope(const std::vector<TheoremOneDiag>& series, std::int64_t t_min,
                        std::int64_t t_max) {
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    int n = 0;
    for (const auto& diag : series) {
        if (diag.t < t_min || diag.t > t_max || diag.observed_max_norm <= 0.0) continue;
        const double x = std::log(static_cast<double>(diag.t));
        const double y = std::log(diag.observed_max_norm);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
        ++n;
    }
    if (n < 2) throw ConfigError("fit_loglog_slope: need at least two checkpoints in range");
    const double denom = n * sxx - sx * sx;
    return (n * sxy - sx * sy) / denom;
}

}  // namespace nadb::metrics
