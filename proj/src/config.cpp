#include "nadb/config.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "nadb/errors.hpp"

namespace nadb::harness {

namespace {

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r");
    if (begin == std::string::npos) return "";
    const auto end = s.find_last_not_of(" \t\r");
    return s.substr(begin, end - begin + 1);
}

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

int parse_int(const std::string& key, const std::string& value) {
    try {
        std::size_t pos = 0;
        const long long v = std::stoll(value, &pos);
        if (pos != value.size()) throw std::invalid_argument(value);
        return static_cast<int>(v);
    } catch (const std::exception&) {
        throw ConfigError("config: bad integer for '" + key + "': " + value);
    }
}

std::int64_t parse_i64(const std::string& key, const std::string& value) {
    try {
        std::size_t pos = 0;
        const long long v = std::stoll(value, &pos);
        if (pos != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config: bad integer for '" + key + "': " + value);
    }
}

double parse_real(const std::string& key, const std::string& value) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(value, &pos);
        if (pos != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config: bad real for '" + key + "': " + value);
    }
}

std::vector<std::uint64_t> parse_seeds(const std::string& value) {
    std::vector<std::uint64_t> seeds;
    std::stringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (item.empty()) continue;
        try {
            seeds.push_back(std::stoull(item));
        } catch (const std::exception&) {
            throw ConfigError("config: bad seed value: " + item);
        }
    }
    if (seeds.empty()) throw ConfigError("config: seeds list is empty");
    return seeds;
}

}  // namespace

std::string algorithm_name(Algorithm a) {
    switch (a) {
        case Algorithm::NeuralAdbUcb: return "neural_adb_ucb";
        case Algorithm::NeuralAdbTs: return "neural_adb_ts";
        case Algorithm::Random: return "random";
        case Algorithm::UniformContextUcb: return "uniform_context_ucb";
        case Algorithm::ApoNeural: return "apo_neural";
        case Algorithm::ApoLinear: return "apo_linear";
    }
    return "unknown";
}

Algorithm algorithm_from_name(const std::string& name) {
    const std::string n = lower(name);
    if (n == "neural_adb_ucb") return Algorithm::NeuralAdbUcb;
    if (n == "neural_adb_ts") return Algorithm::NeuralAdbTs;
    if (n == "random") return Algorithm::Random;
    if (n == "uniform_context_ucb") return Algorithm::UniformContextUcb;
    if (n == "apo_neural") return Algorithm::ApoNeural;
    if (n == "apo_linear") return Algorithm::ApoLinear;
    throw ConfigError("config: unknown algorithm '" + name + "'");
}

std::string function_name(env::RewardKind f) {
    return f == env::RewardKind::Square ? "square" : "sine";
}

env::RewardKind function_from_name(const std::string& name) {
    const std::string n = lower(name);
    if (n == "square") return env::RewardKind::Square;
    if (n == "sine") return env::RewardKind::Sine;
    throw ConfigError("config: unknown function '" + name + "'");
}

void apply_config_entry(RunConfig& cfg, const std::string& raw_key, const std::string& raw_value) {
    const std::string key = lower(trim(raw_key));
    const std::string value = trim(raw_value);
    if (key == "algorithm") cfg.algorithm = algorithm_from_name(value);
    else if (key == "function") cfg.function = function_from_name(value);
    else if (key == "d") cfg.d = parse_int(key, value);
    else if (key == "k") cfg.k = parse_int(key, value);
    else if (key == "m") cfg.m = parse_int(key, value);
    else if (key == "t") cfg.t = parse_i64(key, value);
    else if (key == "n_eval") cfg.n_eval = parse_int(key, value);
    else if (key == "lambda") cfg.lambda = parse_real(key, value);
    else if (key == "delta") cfg.delta = parse_real(key, value);
    else if (key == "nu") cfg.nu = parse_real(key, value);
    else if (key == "nu_mode") {
        const std::string mode = lower(value);
        if (mode == "fixed") cfg.nu_mode = policy::NuMode::Fixed;
        else if (mode == "theory") cfg.nu_mode = policy::NuMode::Theory;
        else throw ConfigError("config: nu_mode must be 'fixed' or 'theory'");
    }
    else if (key == "lr") cfg.lr = parse_real(key, value);
    else if (key == "depth") cfg.depth = parse_int(key, value);
    else if (key == "width") cfg.width = parse_int(key, value);
    else if (key == "train_every") cfg.train_every = parse_int(key, value);
    else if (key == "train_steps") cfg.train_steps = parse_int(key, value);
    else if (key == "eval_every") cfg.eval_every = parse_int(key, value);
    else if (key == "seeds") cfg.seeds = parse_seeds(value);
    else if (key == "out_dir") cfg.out_dir = value;
    else throw ConfigError("config: unknown key '" + raw_key + "'");
}

RunConfig parse_config_file(const std::string& path) {
    RunConfig cfg;
    if (path == "default") return cfg;
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open file '" + path + "'");
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config: line " + std::to_string(line_no) +
                              " is not 'key = value': " + line);
        apply_config_entry(cfg, line.substr(0, eq), line.substr(eq + 1));
    }
    return cfg;
}

void validate(const RunConfig& cfg) {
    if (cfg.t < 1) throw ConfigError("config: t must be >= 1");
    if (cfg.k < 2) throw ConfigError("config: k must be >= 2");
    if (cfg.d < 1) throw ConfigError("config: d must be >= 1");
    if (cfg.m < 1) throw ConfigError("config: m must be >= 1");
    if (cfg.n_eval < 1) throw ConfigError("config: n_eval must be >= 1");
    if (cfg.lambda <= 0.0) throw ConfigError("config: lambda must be > 0");
    if (cfg.delta <= 0.0 || cfg.delta >= 1.0)
        throw ConfigError("config: delta must lie in (0, 1)");
    if (cfg.nu < 0.0) throw ConfigError("config: nu must be >= 0");
    if (cfg.lr < 0.0) throw ConfigError("config: lr must be >= 0");
    if (cfg.depth < 1) throw ConfigError("config: depth must be >= 1");
    if (cfg.width < 1) throw ConfigError("config: width must be >= 1");
    if (cfg.train_every < 1) throw ConfigError("config: train_every must be >= 1");
    if (cfg.train_steps < 1) throw ConfigError("config: train_steps must be >= 1");
    if (cfg.eval_every < 1) throw ConfigError("config: eval_every must be >= 1");
    if (cfg.seeds.empty()) throw ConfigError("config: seeds must be nonempty");
    if (cfg.out_dir.empty()) throw ConfigError("config: out_dir must be nonempty");
}

}  // namespace nadb::harness
