// Command-line harness around the library: single runs, multi-seed sweeps,
// the concentration-decay probe, and CSV re-aggregation.
//
// Exit codes: 0 success, 2 configuration/usage error, 1 runtime failure.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "nadb/errors.hpp"
#include "nadb/harness.hpp"
#include "nadb/metrics.hpp"
#include "nadb/rng.hpp"

namespace {

using namespace nadb;

struct RunArgs {
    std::string config_path = "default";
    std::string algo_override;
    std::string function_override;
    std::optional<std::uint64_t> seed_override;
    std::string out_override;
};

harness::RunConfig load_with_overrides(const RunArgs& args) {
    harness::RunConfig cfg = harness::parse_config_file(args.config_path);
    if (!args.algo_override.empty())
        cfg.algorithm = harness::algorithm_from_name(args.algo_override);
    if (!args.function_override.empty())
        cfg.function = harness::function_from_name(args.function_override);
    if (args.seed_override) cfg.seeds = {*args.seed_override};
    if (!args.out_override.empty()) cfg.out_dir = args.out_override;
    harness::validate(cfg);
    return cfg;
}

int cmd_run(const RunArgs& args) {
    const harness::RunConfig cfg = load_with_overrides(args);
    const std::uint64_t seed = cfg.seeds.front();
    std::filesystem::create_directories(cfg.out_dir);
    harness::write_manifest(cfg, {seed}, cfg.out_dir);
    const harness::RunResult result = harness::run_single_to_dir(cfg, seed, cfg.out_dir);
    if (!result.rows.empty()) {
        const auto& last = result.rows.back();
        std::cout << "seed " << seed << ": t=" << last.t
                  << " worst_gap=" << harness::format_double(last.worst_gap)
                  << " mae=" << harness::format_double(last.mae)
                  << " avg_regret=" << harness::format_double(last.avg_regret) << '\n';
    }
    std::cout << "wrote " << cfg.out_dir << "/seed_" << seed << ".csv\n";
    return 0;
}

int cmd_sweep(const RunArgs& args) {
    const harness::RunConfig cfg = load_with_overrides(args);
    const harness::SweepSummary summary = harness::run_sweep(cfg);
    int failures = 0;
    for (const auto& r : summary.runs)
        if (r.failed) ++failures;
    std::cout << "sweep: " << summary.runs.size() - failures << "/" << summary.runs.size()
              << " seeds succeeded; aggregate at " << cfg.out_dir << "/aggregate.csv\n";
    for (const auto& w : summary.warnings) std::cerr << "warning: " << w << '\n';
    if (!summary.aggregate.empty()) {
        const auto& last = summary.aggregate.back();
        std::cout << "final checkpoint t=" << last.t
                  << " worst_gap=" << harness::format_double(last.mean[0]) << " +/- "
                  << harness::format_double(last.ci95[0]) << '\n';
    }
    return failures == 0 ? 0 : 1;
}

int cmd_probe(int d, std::int64_t t_max, int trials, double lambda, double delta,
              int sample_size, const std::string& out_path) {
    if (d < 1 || t_max < 1 || trials < 1 || sample_size < 1)
        throw ConfigError("probe-theorem1: d, t-max, trials, sample must be >= 1");

    std::ofstream out(out_path, std::ios::binary);
    if (!out) throw IoError("probe-theorem1: cannot open " + out_path);
    out << "trial,t,lambda_min,observed_max_norm,bound,slope\n";

    const auto unit_vec = [](Rng& rng, int dim) {
        Vec z(dim);
        double nrm = 0.0;
        do {
            nrm = 0.0;
            for (auto& v : z) {
                v = rng.normal();
                nrm += v * v;
            }
        } while (nrm == 0.0);
        nrm = std::sqrt(nrm);
        for (auto& v : z) v /= nrm;
        return z;
    };

    double slope_sum = 0.0;
    for (int trial = 0; trial < trials; ++trial) {
        Rng rng(derive_stream(0xD1A6ULL, static_cast<std::uint64_t>(trial)));
        std::vector<Vec> history(t_max), sample(sample_size);
        for (auto& z : history) z = unit_vec(rng, d);
        for (auto& z : sample) z = unit_vec(rng, d);

        const auto series = metrics::theorem_one_probe(history, sample, lambda, delta);
        const double slope = metrics::fit_loglog_slope(series, 32, t_max);
        slope_sum += slope;
        for (const auto& diag : series) {
            out << trial << ',' << diag.t << ',' << harness::format_double(diag.lambda_min)
                << ',' << harness::format_double(diag.observed_max_norm) << ','
                << harness::format_double(diag.bound) << ','
                << harness::format_double(slope) << '\n';
        }
    }
    std::cout << "mean log-log slope over " << trials
              << " trials: " << harness::format_double(slope_sum / trials) << " (wrote "
              << out_path << ")\n";
    return 0;
}

int cmd_summarize(const std::string& dir) {
    const harness::SweepSummary summary = harness::summarize_dir(dir);
    std::cout << "aggregated " << summary.runs.size() << " seed files into " << dir
              << "/aggregate.csv\n";
    if (!summary.aggregate.empty()) {
        const auto& last = summary.aggregate.back();
        std::cout << "final checkpoint t=" << last.t
                  << " worst_gap=" << harness::format_double(last.mean[0]) << " +/- "
                  << harness::format_double(last.ci95[0])
                  << " mae=" << harness::format_double(last.mean[1])
                  << " avg_regret=" << harness::format_double(last.mean[3]) << '\n';
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Active neural dueling-bandit experiment harness"};
    app.set_version_flag("--version", harness::version_string());
    app.require_subcommand(1);

    RunArgs run_args;
    CLI::App* run = app.add_subcommand("run", "Execute one seeded run");
    run->add_option("--config", run_args.config_path,
                    "Config file path, or 'default' for built-in defaults");
    run->add_option("--algo", run_args.algo_override, "Algorithm override");
    run->add_option("--function", run_args.function_override, "Reward function override");
    run->add_option("--seed", run_args.seed_override, "Seed override (single run)");
    run->add_option("--out", run_args.out_override, "Output directory override");

    RunArgs sweep_args;
    CLI::App* sweep = app.add_subcommand("sweep", "Run all configured seeds and aggregate");
    sweep->add_option("--config", sweep_args.config_path,
                      "Config file path, or 'default' for built-in defaults");
    sweep->add_option("--algo", sweep_args.algo_override, "Algorithm override");
    sweep->add_option("--function", sweep_args.function_override,
                      "Reward function override");
    sweep->add_option("--out", sweep_args.out_override, "Output directory override");

    int probe_d = 20;
    std::int64_t probe_tmax = 4096;
    int probe_trials = 5;
    double probe_lambda = 1.0;
    double probe_delta = 0.05;
    int probe_sample = 200;
    std::string probe_out = "theorem1_probe.csv";
    CLI::App* probe = app.add_subcommand(
        "probe-theorem1", "Monte-Carlo probe of the Mahalanobis-norm decay bound");
    probe->add_option("--d", probe_d, "Feature dimension");
    probe->add_option("--t-max", probe_tmax, "Stream length (checkpoints at powers of 2)");
    probe->add_option("--trials", probe_trials, "Independent trials");
    probe->add_option("--lambda", probe_lambda, "Regularizer");
    probe->add_option("--delta", probe_delta, "Failure probability in the bound");
    probe->add_option("--sample", probe_sample, "Probe sample-set size");
    probe->add_option("--out", probe_out, "Output CSV path");

    std::string summarize_dir;
    CLI::App* summarize = app.add_subcommand("summarize", "Re-aggregate per-seed CSVs");
    summarize->add_option("--in", summarize_dir, "Directory with seed_*.csv files")
        ->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);  // prints the usage message
        return 2;
    }

    try {
        if (run->parsed()) return cmd_run(run_args);
        if (sweep->parsed()) return cmd_sweep(sweep_args);
        if (probe->parsed())
            return cmd_probe(probe_d, probe_tmax, probe_trials, probe_lambda, probe_delta,
                             probe_sample, probe_out);
        if (summarize->parsed()) return cmd_summarize(summarize_dir);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
