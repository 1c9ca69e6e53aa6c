#pragma once

// Experiment configuration: defaults mirroring the synthetic protocol,
// a flat key = value config-file format, and name/enum mappings shared by
// the CLI and the sweep runner.
//
// Config grammar: one `key = value` per line; `#` starts a comment; blank
// lines ignored; `seeds` is a comma-separated list. Unknown keys are errors.

#include <cstdint>
#include <string>
#include <vector>

#include "nadb/env.hpp"
#include "nadb/policy.hpp"

namespace nadb::harness {

enum class Algorithm {
    NeuralAdbUcb,
    NeuralAdbTs,
    Random,
    UniformContextUcb,
    ApoNeural,
    ApoLinear,
};

struct RunConfig {
    Algorithm algorithm = Algorithm::NeuralAdbUcb;
    env::RewardKind function = env::RewardKind::Square;
    int d = 20;
    int k = 10;
    int m = 20;           // candidate contexts offered per round
    std::int64_t t = 1000;
    int n_eval = 500;
    double lambda = 1.0;
    double delta = 0.05;
    double nu = 1.0;
    policy::NuMode nu_mode = policy::NuMode::Fixed;
    double lr = 0.01;
    int depth = 2;        // hidden ReLU layers; the network has depth+1 weight layers
    int width = 50;
    int train_every = 20;
    int train_steps = 50;
    int eval_every = 20;
    std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
    std::string out_dir = "out";
};

/// Throws ConfigError on out-of-range values.
void validate(const RunConfig& cfg);

/// Reads a config file; the literal path "default" yields the built-in
/// defaults without touching the filesystem.
RunConfig parse_config_file(const std::string& path);

/// Applies one `key = value` assignment (shared by file parsing and tests).
void apply_config_entry(RunConfig& cfg, const std::string& key, const std::string& value);

std::string algorithm_name(Algorithm a);
Algorithm algorithm_from_name(const std::string& name);
std::string function_name(env::RewardKind f);
env::RewardKind function_from_name(const std::string& name);

}  // namespace nadb::harness
