#include "nadb/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "nadb/errors.hpp"
#include "nadb/rng.hpp"

extern "C" void openblas_set_num_threads(int);

namespace nadb::harness {

namespace {

// Sub-stream tags of the run seed.
enum Stream : std::uint64_t {
    kThetaStar = 1,
    kNetworkInit = 2,
    kEnvironment = 3,
    kSelection = 4,
    kEvalSet = 5,
};

// Logistic derivative mu(x) mu(-x), computed factored so extreme arguments
// underflow gracefully instead of cancelling to zero.
double logistic_derivative(double x) {
    const double a = 1.0 / (1.0 + std::exp(-x));
    const double b = 1.0 / (1.0 + std::exp(x));
    return a * b;
}

policy::AgentConfig agent_config(const RunConfig& cfg, const env::RewardFunction& f) {
    policy::AgentConfig acfg;
    acfg.link.reward_bound = f.bound();
    acfg.link.l_mu = 0.25;
    acfg.link.kappa_mu = cfg.nu_mode == policy::NuMode::Theory
                             ? logistic_derivative(2.0 * f.bound())
                             : 0.25;
    acfg.explore.mode = cfg.nu_mode;
    acfg.explore.nu_fixed = cfg.nu;
    acfg.explore.delta = cfg.delta;
    acfg.explore.lambda = cfg.lambda;
    acfg.train.learning_rate = cfg.lr;
    acfg.train.steps = cfg.train_steps;
    acfg.train.reg_lambda = cfg.lambda;
    acfg.train.reg_mode = mlp::RegMode::Practical;
    acfg.train_every = cfg.train_every;
    acfg.feature_map = cfg.algorithm == Algorithm::ApoLinear ? policy::FeatureMap::RawPhi
                                                             : policy::FeatureMap::GradientAtInit;
    return acfg;
}

bool uses_context_scan(Algorithm a) {
    return a == Algorithm::NeuralAdbUcb || a == Algorithm::NeuralAdbTs ||
           a == Algorithm::ApoNeural || a == Algorithm::ApoLinear;
}

bool is_power_of_two(std::int64_t t) { return t > 0 && (t & (t - 1)) == 0; }

struct BlasSingleThread {
    BlasSingleThread() { openblas_set_num_threads(1); }
};

}  // namespace

RunResult run_single(const RunConfig& cfg, std::uint64_t seed) {
    validate(cfg);
    static BlasSingleThread blas_guard;  // keep results independent of machine threading

    Rng theta_rng(derive_stream(seed, kThetaStar));
    Rng env_rng(derive_stream(seed, kEnvironment));
    Rng sel_rng(derive_stream(seed, kSelection));

    env::RewardFunction f{cfg.function, env::draw_theta_star(theta_rng, cfg.d)};
    const env::FeatureGrid eval_grid =
        env::make_eval_set(derive_stream(seed, kEvalSet), cfg.n_eval, cfg.k, cfg.d);

    const mlp::MlpArch arch{cfg.d, cfg.depth + 1, cfg.width};
    policy::AgentState agent(arch, derive_stream(seed, kNetworkInit), agent_config(cfg, f));

    RunResult result;
    result.seed = seed;
    result.theta_star = f.theta_star;

    double cum_regret = 0.0;
    double min_eig_v = 1.0 / linalg::max_eigenvalue(agent.design().inverse(), 1e-8);

    for (std::int64_t round = 1; round <= cfg.t; ++round) {
        const env::FeatureGrid grid = env::sample_grid(env_rng, cfg.m, cfg.k, cfg.d);

        std::optional<policy::ContextScan> scan;
        int c;
        if (uses_context_scan(cfg.algorithm)) {
            scan = policy::scan_contexts(agent, grid);
            c = scan->context;
        } else {
            c = static_cast<int>(sel_rng.below(cfg.m));
        }

        int a1, a2;
        switch (cfg.algorithm) {
            case Algorithm::NeuralAdbUcb:
                a1 = policy::select_first_arm(agent, grid, c);
                a2 = policy::ucb_second_arm(agent, grid, c, a1, scan->sigma);
                break;
            case Algorithm::NeuralAdbTs:
                a1 = policy::select_first_arm(agent, grid, c);
                a2 = policy::ts_second_arm(agent, grid, c, a1, scan->sigma, sel_rng);
                break;
            case Algorithm::UniformContextUcb:
                a1 = policy::select_first_arm(agent, grid, c);
                a2 = policy::ucb_second_arm(agent, grid, c, a1,
                                            policy::context_sigma(agent, grid, c));
                break;
            case Algorithm::ApoNeural:
            case Algorithm::ApoLinear:
                std::tie(a1, a2) = policy::apo_pair(agent, grid, c, scan->sigma);
                break;
            case Algorithm::Random:
                std::tie(a1, a2) = policy::random_pair(sel_rng, cfg.k);
                break;
        }

        const double r1 = env::latent_reward(f, grid.at(c, a1));
        const double r2 = env::latent_reward(f, grid.at(c, a2));
        const int y = env::btl_sample(env_rng, r1, r2);

        PreferenceRecord rec;
        rec.label_round = round;
        const auto winner = grid.at(c, y == 1 ? a1 : a2);
        const auto loser = grid.at(c, y == 1 ? a2 : a1);
        rec.winner_features.assign(winner.begin(), winner.end());
        rec.loser_features.assign(loser.begin(), loser.end());
        agent.observe(rec);

        cum_regret += metrics::regret_increment(f, grid, c, a1, a2);

        if (is_power_of_two(round)) {
            try {
                min_eig_v = 1.0 / linalg::max_eigenvalue(agent.design().inverse(), 1e-6);
            } catch (const ConvergenceFailure&) {
                // keep the previous estimate; this field is diagnostic only
            }
        }

        if (round % cfg.eval_every == 0 || round == cfg.t) {
            const policy::GreedyPolicy pol = policy::extract_policy(agent);
            const metrics::GapStats gaps = metrics::eval_gaps(pol, eval_grid, f);
            metrics::RoundMetrics row;
            row.t = round;
            row.worst_gap = gaps.worst;
            row.mae = gaps.mae;
            row.cum_regret = cum_regret;
            row.avg_regret = cum_regret / static_cast<double>(round);
            row.d_tilde = metrics::effective_dim(agent.design());
            row.max_maha_norm = agent.last_update_norm();
            row.min_eig_v = min_eig_v;
            result.rows.push_back(row);
        }
    }
    result.final_policy = agent.params();
    return result;
}

RunResult run_single_to_dir(const RunConfig& cfg, std::uint64_t seed,
                            const std::string& out_dir) {
    std::filesystem::create_directories(out_dir);
    RunResult result = run_single(cfg, seed);
    write_run_csv(out_dir + "/seed_" + std::to_string(seed) + ".csv", result.rows);
    mlp::save_params_file(result.final_policy,
                          out_dir + "/policy_seed_" + std::to_string(seed) + ".bin");
    return result;
}

std::vector<AggregateRow> aggregate_runs(const std::vector<RunResult>& runs) {
    std::vector<const RunResult*> ok;
    for (const auto& r : runs)
        if (!r.failed) ok.push_back(&r);
    if (ok.empty()) return {};

    const std::size_t n_rows = ok.front()->rows.size();
    for (const auto* r : ok)
        if (r->rows.size() != n_rows)
            throw ConfigError("aggregate_runs: checkpoint counts differ across seeds");

    std::vector<AggregateRow> out(n_rows);
    for (std::size_t i = 0; i < n_rows; ++i) {
        AggregateRow& row = out[i];
        row.t = ok.front()->rows[i].t;
        row.n = static_cast<int>(ok.size());
        for (const auto* r : ok) {
            const auto& m = r->rows[i];
            if (m.t != row.t)
                throw ConfigError("aggregate_runs: checkpoint rounds differ across seeds");
            const double vals[5] = {m.worst_gap, m.mae, m.cum_regret, m.avg_regret, m.d_tilde};
            for (int j = 0; j < 5; ++j) row.mean[j] += vals[j];
        }
        for (int j = 0; j < 5; ++j) row.mean[j] /= row.n;
        if (row.n > 1) {
            double var[5] = {0, 0, 0, 0, 0};
            for (const auto* r : ok) {
                const auto& m = r->rows[i];
                const double vals[5] = {m.worst_gap, m.mae, m.cum_regret, m.avg_regret,
                                        m.d_tilde};
                for (int j = 0; j < 5; ++j) {
                    const double dev = vals[j] - row.mean[j];
                    var[j] += dev * dev;
                }
            }
            for (int j = 0; j < 5; ++j) {
                const double sd = std::sqrt(var[j] / (row.n - 1));
                row.ci95[j] = 1.96 * sd / std::sqrt(static_cast<double>(row.n));
            }
        }
    }
    return out;
}

SweepSummary run_sweep(const RunConfig& cfg) {
    validate(cfg);
    std::filesystem::create_directories(cfg.out_dir);
    write_manifest(cfg, cfg.seeds, cfg.out_dir);

    SweepSummary summary;
    for (const std::uint64_t seed : cfg.seeds) {
        try {
            summary.runs.push_back(run_single_to_dir(cfg, seed, cfg.out_dir));
        } catch (const std::exception& e) {
            RunResult failed;
            failed.seed = seed;
            failed.failed = true;
            failed.error = e.what();
            summary.runs.push_back(failed);
            summary.warnings.push_back("seed " + std::to_string(seed) + " failed: " +
                                       e.what());
        }
    }
    summary.aggregate = aggregate_runs(summary.runs);
    write_aggregate_csv(cfg.out_dir + "/aggregate.csv", summary.aggregate, summary.warnings);
    return summary;
}

SweepSummary summarize_dir(const std::string& dir) {
    SweepSummary summary;
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        const std::string name = entry.path().filename().string();
        if (name.rfind("seed_", 0) == 0 && entry.path().extension() == ".csv")
            files.push_back(entry.path());
    }
    if (files.empty()) throw ConfigError("summarize: no seed_*.csv files in " + dir);
    std::sort(files.begin(), files.end());
    for (const auto& path : files) {
        RunResult r;
        const std::string stem = path.stem().string();
        r.seed = std::stoull(stem.substr(5));
        r.rows = read_run_csv(path.string());
        summary.runs.push_back(std::move(r));
    }
    summary.aggregate = aggregate_runs(summary.runs);
    write_aggregate_csv(dir + "/aggregate.csv", summary.aggregate, summary.warnings);
    return summary;
}

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void write_run_csv(const std::string& path, const std::vector<metrics::RoundMetrics>& rows) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("write_run_csv: cannot open " + path);
    out << "t,worst_gap,mae,cum_regret,avg_regret,d_tilde\n";
    for (const auto& r : rows) {
        out << r.t << ',' << format_double(r.worst_gap) << ',' << format_double(r.mae)
            << ',' << format_double(r.cum_regret) << ',' << format_double(r.avg_regret)
            << ',' << format_double(r.d_tilde) << '\n';
    }
    if (!out) throw IoError("write_run_csv: write failed for " + path);
}

std::vector<metrics::RoundMetrics> read_run_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("read_run_csv: cannot open " + path);
    std::string line;
    if (!std::getline(in, line) || line != "t,worst_gap,mae,cum_regret,avg_regret,d_tilde")
        throw IoError("read_run_csv: bad header in " + path);
    std::vector<metrics::RoundMetrics> rows;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::stringstream ss(line);
        std::string field;
        metrics::RoundMetrics m;
        std::getline(ss, field, ',');
        m.t = std::stoll(field);
        std::getline(ss, field, ',');
        m.worst_gap = std::stod(field);
        std::getline(ss, field, ',');
        m.mae = std::stod(field);
        std::getline(ss, field, ',');
        m.cum_regret = std::stod(field);
        std::getline(ss, field, ',');
        m.avg_regret = std::stod(field);
        std::getline(ss, field, ',');
        m.d_tilde = std::stod(field);
        rows.push_back(m);
    }
    return rows;
}

void write_aggregate_csv(const std::string& path, const std::vector<AggregateRow>& rows,
                         const std::vector<std::string>& warnings) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("write_aggregate_csv: cannot open " + path);
    static const char* kMetrics[5] = {"worst_gap", "mae", "cum_regret", "avg_regret",
                                      "d_tilde"};
    out << 't';
    for (const char* m : kMetrics) out << ',' << m << "_mean," << m << "_ci95";
    out << '\n';
    for (const auto& r : rows) {
        out << r.t;
        for (int j = 0; j < 5; ++j)
            out << ',' << format_double(r.mean[j]) << ',' << format_double(r.ci95[j]);
        out << '\n';
    }
    for (const auto& w : warnings) out << "# warning: " << w << '\n';
    if (!out) throw IoError("write_aggregate_csv: write failed for " + path);
}

std::string version_string() { return "nadb 1.0.0"; }

void write_manifest(const RunConfig& cfg, const std::vector<std::uint64_t>& seeds,
                    const std::string& out_dir) {
    nlohmann::json per_seed = nlohmann::json::object();
    for (const std::uint64_t seed : seeds) {
        Rng theta_rng(derive_stream(seed, kThetaStar));
        const Vec theta = env::draw_theta_star(theta_rng, cfg.d);
        per_seed[std::to_string(seed)] = {
            {"theta_star", theta},
            {"csv", "seed_" + std::to_string(seed) + ".csv"},
            {"policy", "policy_seed_" + std::to_string(seed) + ".bin"},
        };
    }

    char stamp[64];
    const std::time_t now = std::time(nullptr);
    std::tm tm_utc{};
    gmtime_r(&now, &tm_utc);
    std::strftime(stamp, sizeof(stamp), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);

    nlohmann::json manifest = {
        {"build", version_string()},
        {"started_at", stamp},
        {"config",
         {{"algorithm", algorithm_name(cfg.algorithm)},
          {"function", function_name(cfg.function)},
          {"d", cfg.d},
          {"k", cfg.k},
          {"m", cfg.m},
          {"t", cfg.t},
          {"n_eval", cfg.n_eval},
          {"lambda", cfg.lambda},
          {"delta", cfg.delta},
          {"nu", cfg.nu},
          {"nu_mode", cfg.nu_mode == policy::NuMode::Fixed ? "fixed" : "theory"},
          {"lr", cfg.lr},
          {"depth", cfg.depth},
          {"width", cfg.width},
          {"train_every", cfg.train_every},
          {"train_steps", cfg.train_steps},
          {"eval_every", cfg.eval_every},
          {"seeds", cfg.seeds},
          {"out_dir", cfg.out_dir}}},
        {"runs", per_seed},
    };

    std::ofstream out(out_dir + "/manifest.json", std::ios::binary);
    if (!out) throw IoError("write_manifest: cannot open " + out_dir + "/manifest.json");
    out << manifest.dump(2) << '\n';
}

}  // namespace nadb::harness
