#pragma once

// Experiment runner: the per-round loop (sample grid, pick context and arm
// pair per algorithm, draw the preference label, update the agent), metric
// checkpointing, multi-seed sweeps with mean / 95% CI aggregation, and the
// CSV + JSON manifest on-disk layout.
//
// Determinism: every random quantity of a run comes from named sub-streams
// of the run seed (1 theta-star, 2 network init, 3 environment, 4 selection,
// 5 evaluation set), so (config, seed) reproduces output files byte-for-byte.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "nadb/config.hpp"
#include "nadb/env.hpp"
#include "nadb/metrics.hpp"
#include "nadb/policy.hpp"

namespace nadb::harness {

struct RunResult {
    std::uint64_t seed = 0;
    std::vector<metrics::RoundMetrics> rows;
    Vec theta_star;
    mlp::MlpParams final_policy;  // greedy-policy parameter snapshot at t = T
    bool failed = false;
    std::string error;
};

/// Executes one seeded run in memory.
RunResult run_single(const RunConfig& cfg, std::uint64_t seed);

/// run_single plus the on-disk artifacts: out_dir/seed_<s>.csv and the final
/// greedy-policy parameter checkpoint out_dir/policy_seed_<s>.bin.
RunResult run_single_to_dir(const RunConfig& cfg, std::uint64_t seed,
                            const std::string& out_dir);

struct AggregateRow {
    std::int64_t t = 0;
    double mean[5] = {0, 0, 0, 0, 0};  // worst_gap, mae, cum_regret, avg_regret, d_tilde
    double ci95[5] = {0, 0, 0, 0, 0};
    int n = 0;
};

struct SweepSummary {
    std::vector<RunResult> runs;
    std::vector<AggregateRow> aggregate;
    std::vector<std::string> warnings;  // one per failed seed
};

/// Mean and 1.96 sd/sqrt(n) half-width per checkpoint, failed runs excluded.
std::vector<AggregateRow> aggregate_runs(const std::vector<RunResult>& runs);

/// Runs every seed of the config, writes per-seed CSVs, aggregate.csv and
/// manifest.json under cfg.out_dir. A failed seed is excluded from the
/// aggregate and recorded as a warning.
SweepSummary run_sweep(const RunConfig& cfg);

/// Re-aggregates previously written per-seed CSVs found in `dir`.
SweepSummary summarize_dir(const std::string& dir);

// --- CSV / manifest plumbing ---

/// %.17g formatting; CSVs use UTF-8, LF line endings and '.' decimals.
std::string format_double(double v);

void write_run_csv(const std::string& path, const std::vector<metrics::RoundMetrics>& rows);
std::vector<metrics::RoundMetrics> read_run_csv(const std::string& path);
void write_aggregate_csv(const std::string& path, const std::vector<AggregateRow>& rows,
                         const std::vector<std::string>& warnings);

/// Written before the first round of a sweep or run; immutable afterwards.
void write_manifest(const RunConfig& cfg, const std::vector<std::uint64_t>& seeds,
                    const std::string& out_dir);

std::string version_string();

}  // namespace nadb::harness
