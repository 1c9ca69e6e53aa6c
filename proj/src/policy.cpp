#include "nadb/policy.hpp"

#include <cblas.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include "json.hpp"
#include "nadb/errors.hpp"

namespace nadb::policy {

using linalg::Matrix;

Vec gradient_feature(const mlp::MlpParams& theta0, std::span<const double> x, double scale) {
    Vec g = mlp::param_gradient(theta0, x);
    for (auto& v : g) v *= scale;
    return g;
}

double theory_nu(const ExplorationSpec& spec, const LinkSpec& link, double d_tilde) {
    const double beta =
        (1.0 / link.kappa_mu) * std::sqrt(d_tilde + 2.0 * std::log(1.0 / spec.delta));
    return (beta + link.reward_bound * std::sqrt(spec.lambda / link.kappa_mu) + 1.0) *
           std::sqrt(link.kappa_mu / spec.lambda);
}

// =============================================================================
// AgentState
// =============================================================================

AgentState::AgentState(const mlp::MlpArch& arch, const AgentConfig& cfg,
                       mlp::MlpParams params, mlp::MlpParams theta0)
    : arch_(arch), cfg_(cfg), params_(std::move(params)), theta0_(std::move(theta0)) {
    scale_ = cfg.feature_map == FeatureMap::GradientAtInit
                 ? 1.0 / std::sqrt(static_cast<double>(arch.width))
                 : 1.0;
    feature_dim_ = cfg.feature_map == FeatureMap::GradientAtInit ? arch.param_count()
                                                                 : arch.input_dim;
    design_ = linalg::DesignState(feature_dim_, cfg.explore.lambda / cfg.link.kappa_mu);
    companion_limit_ = static_cast<std::int64_t>(0.6 * feature_dim_);
    companion_active_ = companion_limit_ >= 1;
}

AgentState::AgentState(const mlp::MlpArch& arch, std::uint64_t init_seed,
                       const AgentConfig& cfg)
    : AgentState(arch, cfg, mlp::init_params(arch, init_seed),
                 mlp::init_params(arch, init_seed)) {}

AgentState AgentState::restore(const mlp::MlpArch& arch, const AgentConfig& cfg,
                               mlp::MlpParams params, mlp::MlpParams theta0,
                               const std::vector<PreferenceRecord>& history) {
    AgentState state(arch, cfg, std::move(params), std::move(theta0));
    for (const auto& rec : history) state.ingest(rec);
    return state;
}

double AgentState::nu() const {
    if (cfg_.explore.mode == NuMode::Fixed) return cfg_.explore.nu_fixed;
    return theory_nu(cfg_.explore, cfg_.link, design_.log_det());
}

void AgentState::feature(std::span<const double> x, std::span<double> out,
                         mlp::MlpWorkspace& ws) const {
    if (cfg_.feature_map == FeatureMap::RawPhi) {
        if (x.size() != out.size())
            throw DimensionMismatch("feature: raw map size mismatch");
        std::copy(x.begin(), x.end(), out.begin());
        return;
    }
    mlp::param_gradient(theta0_, x, out, ws);
    cblas_dscal(static_cast<int>(out.size()), scale_, out.data(), 1);
}

Vec AgentState::feature(std::span<const double> x) const {
    Vec out(feature_dim_);
    mlp::MlpWorkspace ws(arch_);
    feature(x, out, ws);
    return out;
}

void AgentState::companion_update(std::span<const double> z) {
    const auto t = static_cast<int>(design_.t());
    if (static_cast<std::int64_t>(t) >= companion_limit_) {
        companion_active_ = false;
        std::vector<double>().swap(zrows_);
        std::vector<double>().swap(wmat_);
        w_stride_ = 0;
        return;
    }
    const int p = feature_dim_;
    const double alpha = design_.lambda_over_kappa();

    Vec s(std::max(t, 1)), y(std::max(t, 1));
    double sy = 0.0;
    if (t > 0) {
        cblas_dgemv(CblasRowMajor, CblasNoTrans, t, p, 1.0, zrows_.data(), p, z.data(), 1,
                    0.0, s.data(), 1);
        cblas_dsymv(CblasRowMajor, CblasUpper, t, 1.0, wmat_.data(), w_stride_, s.data(), 1,
                    0.0, y.data(), 1);
        sy = cblas_ddot(t, s.data(), 1, y.data(), 1);
    }
    const double zz = cblas_ddot(p, z.data(), 1, z.data(), 1);
    const double schur = alpha + zz - sy;
    if (!std::isfinite(schur) || schur <= 0.0)
        throw NumericalFailure("companion_update: degenerate Schur complement");

    if (t + 1 > w_stride_) {
        const int next = std::max({2 * w_stride_, t + 1, 64});
        std::vector<double> grown(static_cast<std::size_t>(next) * next, 0.0);
        for (int i = 0; i < t; ++i)
            std::memcpy(grown.data() + static_cast<std::size_t>(i) * next + i,
                        wmat_.data() + static_cast<std::size_t>(i) * w_stride_ + i,
                        static_cast<std::size_t>(t - i) * sizeof(double));
        wmat_ = std::move(grown);
        w_stride_ = next;
    }

    if (t > 0)
        cblas_dsyr(CblasRowMajor, CblasUpper, t, 1.0 / schur, y.data(), 1, wmat_.data(),
                   w_stride_);
    for (int i = 0; i < t; ++i)
        wmat_[static_cast<std::size_t>(i) * w_stride_ + t] = -y[i] / schur;
    wmat_[static_cast<std::size_t>(t) * w_stride_ + t] = 1.0 / schur;

    zrows_.insert(zrows_.end(), z.begin(), z.end());
}

double AgentState::ingest(const PreferenceRecord& rec) {
    Vec zw(feature_dim_), zl(feature_dim_);
    {
        mlp::MlpWorkspace ws(arch_);
        feature(rec.winner_features, zw, ws);
        feature(rec.loser_features, zl, ws);
    }
    for (int i = 0; i < feature_dim_; ++i) zw[i] -= zl[i];

    if (companion_active_) companion_update(zw);
    const double q = design_.update(zw);
    last_update_norm_ = std::sqrt(std::max(q, 0.0));
    history_.push_back(rec);
    return last_update_norm_;
}

double AgentState::observe(const PreferenceRecord& rec) {
    const double norm = ingest(rec);
    if (cfg_.train_every > 0 && design_.t() % cfg_.train_every == 0) {
        auto result = mlp::train(params_, theta0_, history_, cfg_.train);
        params_ = std::move(result.params);
        last_train_increased_ = result.loss_increased;
    }
    return norm;
}

// =============================================================================
// Context scan
// =============================================================================

namespace {

// Pair quadratic forms from the factored representation:
// q_ab = (||z||^2 - (Z z)^T W (Z z)) / alpha with z = f_a - f_b.
// Fills sigma_ab = sqrt(alpha * q_ab) and returns the max q over pairs.
double fill_sigma_factored(const double* f, const double* s, const double* y, int k, int p,
                           int t, double alpha, Matrix& sigma) {
    double max_q = 0.0;
    for (int a = 0; a < k; ++a) {
        sigma.at(a, a) = 0.0;
        for (int b = a + 1; b < k; ++b) {
            double zz = 0.0;
            const double* fa = f + static_cast<std::size_t>(a) * p;
            const double* fb = f + static_cast<std::size_t>(b) * p;
            for (int j = 0; j < p; ++j) {
                const double d = fa[j] - fb[j];
                zz += d * d;
            }
            double corr = 0.0;
            if (t > 0) {
                const double* sa = s + static_cast<std::size_t>(a) * t;
                const double* sb = s + static_cast<std::size_t>(b) * t;
                const double* ya = y + static_cast<std::size_t>(a) * t;
                const double* yb = y + static_cast<std::size_t>(b) * t;
                for (int j = 0; j < t; ++j) corr += (sa[j] - sb[j]) * (ya[j] - yb[j]);
            }
            const double q = std::max((zz - corr) / alpha, 0.0);
            const double sig = std::sqrt(alpha * q);
            sigma.at(a, b) = sig;
            sigma.at(b, a) = sig;
            max_q = std::max(max_q, q);
        }
    }
    return max_q;
}

// Pair quadratic forms from the dense inverse: q_ab = (f_a-f_b).(u_a-u_b)
// with u = V^{-1} f.
double fill_sigma_dense(const double* f, const double* u, int k, int p, double alpha,
                        Matrix& sigma) {
    double max_q = 0.0;
    for (int a = 0; a < k; ++a) {
        sigma.at(a, a) = 0.0;
        for (int b = a + 1; b < k; ++b) {
            const double* fa = f + static_cast<std::size_t>(a) * p;
            const double* fb = f + static_cast<std::size_t>(b) * p;
            const double* ua = u + static_cast<std::size_t>(a) * p;
            const double* ub = u + static_cast<std::size_t>(b) * p;
            double q = 0.0;
            for (int j = 0; j < p; ++j) q += (fa[j] - fb[j]) * (ua[j] - ub[j]);
            q = std::max(q, 0.0);
            const double sig = std::sqrt(alpha * q);
            sigma.at(a, b) = sig;
            sigma.at(b, a) = sig;
            max_q = std::max(max_q, q);
        }
    }
    return max_q;
}

struct BlockProjection {
    Matrix f;  // rows x p feature rows
    Matrix s;  // rows x t (factored route)
    Matrix y;  // rows x t (factored route)
    Matrix u;  // rows x p (dense route)
    bool factored = false;
    int t = 0;
};

// Computes gradient features and the projections needed for pair forms for
// `rows` consecutive context-arm entries starting at (c0, 0).
BlockProjection project_block(const AgentState& state, const env::FeatureGrid& grid,
                              int c0, int n_contexts) {
    const int k = grid.arms();
    const int p = state.feature_dim();
    const int rows = n_contexts * k;
    BlockProjection out;
    out.f = Matrix(rows, p);
    mlp::MlpWorkspace ws(state.arch());
    for (int c = 0; c < n_contexts; ++c)
        for (int a = 0; a < k; ++a)
            state.feature(grid.at(c0 + c, a), out.f.row(c * k + a), ws);

    out.factored = state.companion_active();
    out.t = static_cast<int>(state.companion_rows());
    if (out.factored) {
        if (out.t > 0) {
            out.s = Matrix(rows, out.t);
            out.y = Matrix(rows, out.t);
            cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasTrans, rows, out.t, p, 1.0,
                        out.f.data(), p, state.companion_z(), p, 0.0, out.s.data(), out.t);
            cblas_dsymm(CblasRowMajor, CblasRight, CblasUpper, rows, out.t, 1.0,
                        state.companion_w(), state.companion_w_stride(), out.s.data(),
                        out.t, 0.0, out.y.data(), out.t);
        }
    } else {
        out.u = Matrix(rows, p);
        const auto& inv = state.design().inverse();
        for (int r = 0; r < rows; ++r)
            cblas_dspmv(CblasRowMajor, CblasUpper, p, 1.0, inv.packed(), out.f.row(r).data(),
                        1, 0.0, out.u.row(r).data(), 1);
    }
    return out;
}

double sigma_of_block(const BlockProjection& proj, int block, int k, int p, double alpha,
                      Matrix& sigma) {
    const std::size_t f_off = static_cast<std::size_t>(block) * k * p;
    if (proj.factored) {
        const std::size_t st_off = static_cast<std::size_t>(block) * k * proj.t;
        return fill_sigma_factored(proj.f.data() + f_off, proj.s.data() + st_off,
                                   proj.y.data() + st_off, k, p, proj.t, alpha, sigma);
    }
    return fill_sigma_dense(proj.f.data() + f_off, proj.u.data() + f_off, k, p, alpha,
                            sigma);
}

Vec arm_values(const mlp::MlpParams& params, const env::FeatureGrid& grid, int c) {
    mlp::MlpWorkspace ws(params.arch());
    Vec h(grid.arms());
    for (int a = 0; a < grid.arms(); ++a) h[a] = mlp::forward(params, grid.at(c, a), ws);
    return h;
}

int argmax_lowest(const Vec& v) {
    int best = 0;
    for (int i = 1; i < static_cast<int>(v.size()); ++i)
        if (v[i] > v[best]) best = i;
    return best;
}

}  // namespace

ContextScan scan_contexts(const AgentState& state, const env::FeatureGrid& grid) {
    const int m = grid.contexts();
    const int k = grid.arms();
    const int p = state.feature_dim();
    const double alpha = state.design().lambda_over_kappa();

    const BlockProjection proj = project_block(state, grid, 0, m);

    ContextScan scan;
    scan.sigma = Matrix(k, k);
    Matrix scratch(k, k);
    double best_q = -1.0;
    for (int c = 0; c < m; ++c) {
        const double q = sigma_of_block(proj, c, k, p, alpha, scratch);
        if (q > best_q) {
            best_q = q;
            scan.context = c;
            scan.sigma = scratch;
        }
    }
    scan.max_norm = std::sqrt(std::max(best_q, 0.0));
    return scan;
}

int select_context(const AgentState& state, const env::FeatureGrid& grid) {
    return scan_contexts(state, grid).context;
}

Matrix context_sigma(const AgentState& state, const env::FeatureGrid& grid, int c) {
    const int k = grid.arms();
    const BlockProjection proj = project_block(state, grid, c, 1);
    Matrix sigma(k, k);
    sigma_of_block(proj, 0, k, state.feature_dim(), state.design().lambda_over_kappa(),
                   sigma);
    return sigma;
}

int select_first_arm(const AgentState& state, const env::FeatureGrid& grid, int c) {
    return argmax_lowest(arm_values(state.params(), grid, c));
}

double pair_uncertainty(const AgentState& state, std::span<const double> xa,
                        std::span<const double> xb) {
    Vec fa = state.feature(xa);
    const Vec fb = state.feature(xb);
    for (int i = 0; i < state.feature_dim(); ++i) fa[i] -= fb[i];
    const double norm = linalg::mahalanobis_norm(state.design().inverse(), fa);
    return std::sqrt(state.design().lambda_over_kappa()) * norm;
}

namespace {

Matrix sigma_via_pair_uncertainty(const AgentState& state, const env::FeatureGrid& grid,
                                  int c) {
    const int k = grid.arms();
    Matrix sigma(k, k);
    for (int a = 0; a < k; ++a)
        for (int b = a + 1; b < k; ++b) {
            const double s = pair_uncertainty(state, grid.at(c, a), grid.at(c, b));
            sigma.at(a, b) = s;
            sigma.at(b, a) = s;
        }
    return sigma;
}

}  // namespace

int ucb_second_arm(const AgentState& state, const env::FeatureGrid& grid, int c, int first,
                   const Matrix& sigma) {
    const Vec h = arm_values(state.params(), grid, c);
    const double nu = state.nu();
    int best = -1;
    double best_score = -std::numeric_limits<double>::infinity();
    for (int b = 0; b < grid.arms(); ++b) {
        if (b == first) continue;
        const double score = h[b] + nu * sigma.at(first, b);
        if (score > best_score) {
            best_score = score;
            best = b;
        }
    }
    return best;
}

int ucb_second_arm(const AgentState& state, const env::FeatureGrid& grid, int c, int first) {
    return ucb_second_arm(state, grid, c, first, sigma_via_pair_uncertainty(state, grid, c));
}

int ts_second_arm(const AgentState& state, const env::FeatureGrid& grid, int c, int first,
                  const Matrix& sigma, Rng& rng) {
    const Vec h = arm_values(state.params(), grid, c);
    const double nu = state.nu();
    int best = -1;
    double best_score = -std::numeric_limits<double>::infinity();
    for (int b = 0; b < grid.arms(); ++b) {
        if (b == first) continue;
        const double mean = h[b] - h[first];
        const double stddev = nu * sigma.at(first, b);
        const double score = stddev > 0.0 ? rng.normal(mean, stddev) : mean;
        if (score > best_score) {
            best_score = score;
            best = b;
        }
    }
    return best;
}

int ts_second_arm(const AgentState& state, const env::FeatureGrid& grid, int c, int first,
                  Rng& rng) {
    return ts_second_arm(state, grid, c, first, sigma_via_pair_uncertainty(state, grid, c),
                         rng);
}

std::pair<int, int> apo_pair([[maybe_unused]] const AgentState& state,
                             const env::FeatureGrid& grid, [[maybe_unused]] int c,
                             const Matrix& sigma) {
    std::pair<int, int> best{0, 1};
    double best_sigma = -std::numeric_limits<double>::infinity();
    for (int a = 0; a < grid.arms(); ++a)
        for (int b = a + 1; b < grid.arms(); ++b)
            if (sigma.at(a, b) > best_sigma) {
                best_sigma = sigma.at(a, b);
                best = {a, b};
            }
    return best;
}

std::pair<int, int> apo_pair(const AgentState& state, const env::FeatureGrid& grid, int c) {
    return apo_pair(state, grid, c, sigma_via_pair_uncertainty(state, grid, c));
}

std::pair<int, int> random_pair(Rng& rng, int k) {
    const int i = static_cast<int>(rng.below(k));
    int j = static_cast<int>(rng.below(k - 1));
    if (j >= i) ++j;
    return {i, j};
}

// =============================================================================
// Policy extraction and checkpointing
// =============================================================================

int GreedyPolicy::choose(const env::FeatureGrid& grid, int c) const {
    return argmax_lowest(arm_values(params_, grid, c));
}

double GreedyPolicy::value(std::span<const double> x) const {
    return mlp::forward(params_, x);
}

GreedyPolicy extract_policy(const AgentState& state) {
    return GreedyPolicy(state.params());
}

namespace {

void write_doubles(std::ostream& out, std::span<const double> v) {
    out.write(reinterpret_cast<const char*>(v.data()),
              static_cast<std::streamsize>(v.size() * sizeof(double)));
}

void read_doubles(std::istream& in, std::span<double> v) {
    in.read(reinterpret_cast<char*>(v.data()),
            static_cast<std::streamsize>(v.size() * sizeof(double)));
}

}  // namespace

void save_agent(const AgentState& state, std::uint64_t master_seed,
                const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("save_agent: cannot open " + path);

    const AgentConfig& cfg = state.config();
    nlohmann::json manifest = {
        {"format", "nadb-agent-1"},
        {"seed", master_seed},
        {"round", state.design().t()},
        {"arch",
         {{"input_dim", state.arch().input_dim},
          {"depth", state.arch().depth},
          {"width", state.arch().width}}},
        {"feature_map", cfg.feature_map == FeatureMap::GradientAtInit ? "gradient" : "raw"},
        {"link",
         {{"kappa_mu", cfg.link.kappa_mu},
          {"l_mu", cfg.link.l_mu},
          {"reward_bound", cfg.link.reward_bound}}},
        {"explore",
         {{"mode", cfg.explore.mode == NuMode::Fixed ? "fixed" : "theory"},
          {"nu_fixed", cfg.explore.nu_fixed},
          {"delta", cfg.explore.delta},
          {"lambda", cfg.explore.lambda}}},
        {"train",
         {{"learning_rate", cfg.train.learning_rate},
          {"steps", cfg.train.steps},
          {"reg_lambda", cfg.train.reg_lambda},
          {"reg_mode", cfg.train.reg_mode == mlp::RegMode::Practical ? "practical" : "theory"}}},
        {"train_every", cfg.train_every},
        {"history_count", state.history().size()},
    };
    out << manifest.dump() << '\n';

    write_doubles(out, state.params().flatten());
    write_doubles(out, state.theta0().flatten());
    for (const auto& rec : state.history()) {
        const std::int64_t round = rec.label_round;
        out.write(reinterpret_cast<const char*>(&round), sizeof(round));
        write_doubles(out, rec.winner_features);
        write_doubles(out, rec.loser_features);
    }
    if (!out) throw IoError("save_agent: write failed");
}

AgentCheckpoint load_agent(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("load_agent: cannot open " + path);

    std::string line;
    if (!std::getline(in, line)) throw IoError("load_agent: missing manifest");
    const auto manifest = nlohmann::json::parse(line);
    if (manifest.value("format", "") != "nadb-agent-1")
        throw IoError("load_agent: unrecognized format");

    mlp::MlpArch arch{manifest.at("arch").at("input_dim").get<int>(),
                      manifest.at("arch").at("depth").get<int>(),
                      manifest.at("arch").at("width").get<int>()};
    AgentConfig cfg;
    cfg.feature_map = manifest.at("feature_map") == "gradient" ? FeatureMap::GradientAtInit
                                                               : FeatureMap::RawPhi;
    cfg.link.kappa_mu = manifest.at("link").at("kappa_mu").get<double>();
    cfg.link.l_mu = manifest.at("link").at("l_mu").get<double>();
    cfg.link.reward_bound = manifest.at("link").at("reward_bound").get<double>();
    cfg.explore.mode =
        manifest.at("explore").at("mode") == "fixed" ? NuMode::Fixed : NuMode::Theory;
    cfg.explore.nu_fixed = manifest.at("explore").at("nu_fixed").get<double>();
    cfg.explore.delta = manifest.at("explore").at("delta").get<double>();
    cfg.explore.lambda = manifest.at("explore").at("lambda").get<double>();
    cfg.train.learning_rate = manifest.at("train").at("learning_rate").get<double>();
    cfg.train.steps = manifest.at("train").at("steps").get<int>();
    cfg.train.reg_lambda = manifest.at("train").at("reg_lambda").get<double>();
    cfg.train.reg_mode = manifest.at("train").at("reg_mode") == "practical"
                             ? mlp::RegMode::Practical
                             : mlp::RegMode::Theory;
    cfg.train_every = manifest.at("train_every").get<int>();

    const int p = arch.param_count();
    Vec theta(p), theta0(p);
    read_doubles(in, theta);
    read_doubles(in, theta0);

    const auto count = manifest.at("history_count").get<std::size_t>();
    std::vector<PreferenceRecord> history(count);
    for (auto& rec : history) {
        std::int64_t round = 0;
        in.read(reinterpret_cast<char*>(&round), sizeof(round));
        rec.label_round = round;
        rec.winner_features.resize(arch.input_dim);
        rec.loser_features.resize(arch.input_dim);
        read_doubles(in, rec.winner_features);
        read_doubles(in, rec.loser_features);
    }
    if (!in) throw IoError("load_agent: truncated checkpoint");

    AgentCheckpoint ckpt{
        AgentState::restore(arch, cfg, mlp::MlpParams::unflatten(arch, theta),
                            mlp::MlpParams::unflatten(arch, theta0), history),
        manifest.at("seed").get<std::uint64_t>()};
    return ckpt;
}

}  // namespace nadb::policy
