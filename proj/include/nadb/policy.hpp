#pragma once

// Selection logic for active preference collection: uncertainty-driven
// context selection over the gradient-feature Gram matrix, greedy first
// arm, UCB/TS second arm, APO-style and random baselines, and greedy
// policy extraction.
//
// The agent keeps two coupled views of the design matrix:
//   - the dense p x p inverse (DesignState, rank-1 Sherman-Morrison), the
//     definitional object behind pair_uncertainty;
//   - while t stays well below p, a factored companion (feature rows Z and
//     the t x t inverse of lambda/kappa I + Z Z^T) that prices a whole
//     candidate grid in O(t p + t^2) per vector instead of O(p^2).
// Both are updated from the same feature stream; property tests pin their
// agreement.

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "nadb/env.hpp"
#include "nadb/linalg.hpp"
#include "nadb/mlp.hpp"
#include "nadb/rng.hpp"
#include "nadb/types.hpp"

namespace nadb::policy {

/// Link-function constants: kappa_mu is the minimum derivative of the
/// logistic link over the reachable reward-difference range, l_mu its
/// Lipschitz constant (<= 1/4), reward_bound the latent-reward bound B.
struct LinkSpec {
    double kappa_mu = 0.25;
    double l_mu = 0.25;
    double reward_bound = 1.0;
};

enum class NuMode { Fixed, Theory };

struct ExplorationSpec {
    NuMode mode = NuMode::Fixed;
    double nu_fixed = 1.0;
    double delta = 0.05;
    double lambda = 1.0;
};

/// Feature map feeding the Gram matrix: the network gradient at its frozen
/// initialization (scaled by 1/sqrt(width)), or the raw phi vector for the
/// linear baseline.
enum class FeatureMap { GradientAtInit, RawPhi };

struct AgentConfig {
    LinkSpec link;
    ExplorationSpec explore;
    mlp::TrainConfig train;
    int train_every = 20;
    FeatureMap feature_map = FeatureMap::GradientAtInit;
};

/// scale * g(x; theta0), the random-features surrogate for x.
Vec gradient_feature(const mlp::MlpParams& theta0, std::span<const double> x, double scale);

/// beta = (1/kappa) sqrt(d_tilde + 2 log(1/delta));
/// nu = (beta + B sqrt(lambda/kappa) + 1) sqrt(kappa/lambda).
double theory_nu(const ExplorationSpec& spec, const LinkSpec& link, double d_tilde);

class AgentState {
  public:
    AgentState(const mlp::MlpArch& arch, std::uint64_t init_seed, const AgentConfig& cfg);

    /// Rebuilds an agent from checkpointed parameters plus history; the
    /// design views are reconstructed by replaying the feature stream, which
    /// is exact because the stream is a pure function of theta0.
    static AgentState restore(const mlp::MlpArch& arch, const AgentConfig& cfg,
                              mlp::MlpParams params, mlp::MlpParams theta0,
                              const std::vector<PreferenceRecord>& history);

    const mlp::MlpParams& params() const { return params_; }
    const mlp::MlpParams& theta0() const { return theta0_; }
    const linalg::DesignState& design() const { return design_; }
    const std::vector<PreferenceRecord>& history() const { return history_; }
    const AgentConfig& config() const { return cfg_; }
    const mlp::MlpArch& arch() const { return arch_; }

    double feature_scale() const { return scale_; }
    int feature_dim() const { return feature_dim_; }

    /// Exploration multiplier for the current round (fixed, or the theory
    /// plug-in evaluated at the running effective-dimension estimate).
    double nu() const;

    Vec feature(std::span<const double> x) const;
    void feature(std::span<const double> x, std::span<double> out, mlp::MlpWorkspace& ws) const;

    /// Appends the record, updates both design views with the winner-loser
    /// feature difference, and retrains the network on the configured
    /// cadence. Returns the Mahalanobis norm of the update direction under
    /// the pre-update inverse.
    double observe(const PreferenceRecord& rec);

    /// Norm reported by the most recent observe().
    double last_update_norm() const { return last_update_norm_; }

    /// Result of the most recent retraining pass (loss_increased stays
    /// false until the first retrain).
    bool last_train_loss_increased() const { return last_train_increased_; }

    // --- factored companion, exposed for the context scan ---
    bool companion_active() const { return companion_active_; }
    std::int64_t companion_rows() const { return design_.t(); }
    const double* companion_z() const { return zrows_.data(); }
    const double* companion_w() const { return wmat_.data(); }
    int companion_w_stride() const { return w_stride_; }

  private:
    AgentState(const mlp::MlpArch& arch, const AgentConfig& cfg, mlp::MlpParams params,
               mlp::MlpParams theta0);
    void companion_update(std::span<const double> z);
    double ingest(const PreferenceRecord& rec);

    mlp::MlpArch arch_;
    AgentConfig cfg_;
    mlp::MlpParams params_;
    mlp::MlpParams theta0_;
    linalg::DesignState design_;
    std::vector<PreferenceRecord> history_;
    double scale_ = 1.0;
    int feature_dim_ = 0;
    double last_update_norm_ = 0.0;
    bool last_train_increased_ = false;

    bool companion_active_ = true;
    std::int64_t companion_limit_ = 0;
    std::vector<double> zrows_;  // t x p, row s holds z_s
    std::vector<double> wmat_;   // upper triangle of (alpha I + Z Z^T)^{-1}, strided
    int w_stride_ = 0;
};

// =============================================================================
// Selection operations
// =============================================================================

/// Output of the per-round context scan: the selected context, the value of
/// the selection objective (max pairwise Mahalanobis norm), and the full
/// K x K pair-uncertainty matrix of the selected context.
struct ContextScan {
    int context = 0;
    double max_norm = 0.0;
    linalg::Matrix sigma;
};

/// Scans all contexts of the grid for the argmax of
/// max_{a<b} || feature(a) - feature(b) ||_{V^{-1}}; ties break to the
/// lowest context index.
ContextScan scan_contexts(const AgentState& state, const env::FeatureGrid& grid);

int select_context(const AgentState& state, const env::FeatureGrid& grid);

/// K x K matrix of pair uncertainties for one context, via the same
/// accelerated route as the scan.
linalg::Matrix context_sigma(const AgentState& state, const env::FeatureGrid& grid, int c);

/// Greedy arm under the current network; ties break to the lowest index.
int select_first_arm(const AgentState& state, const env::FeatureGrid& grid, int c);

/// sigma_{t-1}(c,a,b) = sqrt(lambda/kappa) ||feature(xa) - feature(xb)||_{V^{-1}}.
double pair_uncertainty(const AgentState& state, std::span<const double> xa,
                        std::span<const double> xb);

int ucb_second_arm(const AgentState& state, const env::FeatureGrid& grid, int c, int first);
int ucb_second_arm(const AgentState& state, const env::FeatureGrid& grid, int c, int first,
                   const linalg::Matrix& sigma);

int ts_second_arm(const AgentState& state, const env::FeatureGrid& grid, int c, int first,
                  Rng& rng);
int ts_second_arm(const AgentState& state, const env::FeatureGrid& grid, int c, int first,
                  const linalg::Matrix& sigma, Rng& rng);

/// Arm pair maximizing pair uncertainty; lexicographic tie-break.
std::pair<int, int> apo_pair(const AgentState& state, const env::FeatureGrid& grid, int c);
std::pair<int, int> apo_pair(const AgentState& state, const env::FeatureGrid& grid, int c,
                             const linalg::Matrix& sigma);

/// Uniform over ordered pairs of distinct arms.
std::pair<int, int> random_pair(Rng& rng, int k);

// =============================================================================
// Policy extraction and checkpointing
// =============================================================================

/// Greedy policy over a parameter snapshot; later observe() calls on the
/// source agent do not affect it.
class GreedyPolicy {
  public:
    explicit GreedyPolicy(mlp::MlpParams params) : params_(std::move(params)) {}

    int choose(const env::FeatureGrid& grid, int c) const;
    double value(std::span<const double> x) const;
    const mlp::MlpParams& params() const { return params_; }

  private:
    mlp::MlpParams params_;
};

GreedyPolicy extract_policy(const AgentState& state);

/// Checkpoint: JSON manifest line (config, seed, round) followed by the
/// theta, theta0 and history blobs; the design matrix is rebuilt on load by
/// replaying the history, which reproduces it bit-for-bit.
void save_agent(const AgentState& state, std::uint64_t master_seed, const std::string& path);

struct AgentCheckpoint {
    AgentState state;
    std::uint64_t master_seed = 0;
};
AgentCheckpoint load_agent(const std::string& path);

}  // namespace nadb::policy
