#include "nadb/mlp.hpp"

#include <cblas.h>

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>

#include "json.hpp"
#include "nadb/errors.hpp"
#include "nadb/rng.hpp"

static_assert(std::endian::native == std::endian::little,
              "parameter checkpoints assume a little-endian host");

namespace nadb::mlp {

namespace {

// -log(sigmoid(x)), computed without overflow on either tail.
double neg_log_sigmoid(double x) {
    if (x >= 0.0) return std::log1p(std::exp(-x));
    return -x + std::log1p(std::exp(x));
}

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

int layer_rows(const MlpArch& a, int l) { return l == a.depth - 1 ? 1 : a.width; }
int layer_cols(const MlpArch& a, int l) { return l == 0 ? a.input_dim : a.width; }

}  // namespace

MlpParams::MlpParams(const MlpArch& arch) : arch_(arch) {
    if (arch.depth < 2 || arch.width < 1 || arch.input_dim < 1)
        throw ConfigError("MlpArch: require depth >= 2, width >= 1, input_dim >= 1");
    weights_.reserve(arch.depth);
    for (int l = 0; l < arch.depth; ++l)
        weights_.emplace_back(layer_rows(arch, l), layer_cols(arch, l));
}

Vec MlpParams::flatten() const {
    Vec theta;
    theta.reserve(arch_.param_count());
    for (const auto& w : weights_)
        theta.insert(theta.end(), w.data(), w.data() + static_cast<std::size_t>(w.rows()) * w.cols());
    return theta;
}

MlpParams MlpParams::unflatten(const MlpArch& arch, std::span<const double> theta) {
    if (static_cast<int>(theta.size()) != arch.param_count())
        throw DimensionMismatch("unflatten: |theta| != param_count");
    MlpParams p(arch);
    std::size_t off = 0;
    for (auto& w : p.weights_) {
        const std::size_t n = static_cast<std::size_t>(w.rows()) * w.cols();
        std::memcpy(w.data(), theta.data() + off, n * sizeof(double));
        off += n;
    }
    return p;
}

double MlpParams::squared_norm() const {
    double acc = 0.0;
    for (const auto& w : weights_) {
        const std::size_t n = static_cast<std::size_t>(w.rows()) * w.cols();
        acc += cblas_ddot(static_cast<int>(n), w.data(), 1, w.data(), 1);
    }
    return acc;
}

double MlpParams::squared_distance(const MlpParams& other) const {
    double acc = 0.0;
    for (int l = 0; l < layer_count(); ++l) {
        const auto& a = weights_[l];
        const auto& b = other.weights_[l];
        const std::size_t n = static_cast<std::size_t>(a.rows()) * a.cols();
        for (std::size_t i = 0; i < n; ++i) {
            const double d = a.data()[i] - b.data()[i];
            acc += d * d;
        }
    }
    return acc;
}

MlpWorkspace::MlpWorkspace(const MlpArch& arch) {
    pre.assign(arch.depth - 1, Vec(arch.width));
    act.assign(arch.depth - 1, Vec(arch.width));
    delta.assign(arch.width, 0.0);
    delta_next.assign(arch.width, 0.0);
}

MlpParams init_params(const MlpArch& arch, std::uint64_t seed) {
    MlpParams p(arch);
    Rng rng(seed);
    for (int l = 0; l < arch.depth; ++l) {
        auto& w = p.layer(l);
        const double stddev = std::sqrt(2.0 / w.cols());
        const std::size_t n = static_cast<std::size_t>(w.rows()) * w.cols();
        for (std::size_t i = 0; i < n; ++i) w.data()[i] = stddev * rng.normal();
    }
    return p;
}

namespace {

// Runs the forward pass, leaving pre/act filled for backprop.
double forward_pass(const MlpParams& p, std::span<const double> x, MlpWorkspace& ws) {
    const MlpArch& a = p.arch();
    if (static_cast<int>(x.size()) != a.input_dim)
        throw DimensionMismatch("forward: |x| != input_dim");

    std::span<const double> in = x;
    for (int l = 0; l < a.depth - 1; ++l) {
        const Matrix& w = p.layer(l);
        cblas_dgemv(CblasRowMajor, CblasNoTrans, w.rows(), w.cols(), 1.0, w.data(),
                    w.cols(), in.data(), 1, 0.0, ws.pre[l].data(), 1);
        for (int i = 0; i < a.width; ++i)
            ws.act[l][i] = ws.pre[l][i] > 0.0 ? ws.pre[l][i] : 0.0;
        in = ws.act[l];
    }
    const Matrix& last = p.layer(a.depth - 1);
    return cblas_ddot(last.cols(), last.data(), 1, in.data(), 1);
}

}  // namespace

double forward(const MlpParams& params, std::span<const double> x, MlpWorkspace& ws) {
    return forward_pass(params, x, ws);
}

double forward(const MlpParams& params, std::span<const double> x) {
    MlpWorkspace ws(params.arch());
    return forward_pass(params, x, ws);
}

void param_gradient(const MlpParams& params, std::span<const double> x,
                    std::span<double> out, MlpWorkspace& ws) {
    const MlpArch& a = params.arch();
    if (static_cast<int>(out.size()) != a.param_count())
        throw DimensionMismatch("param_gradient: |out| != param_count");
    forward_pass(params, x, ws);

    // Output layer block: dh/dW_D = a_{D-1}.
    const std::size_t last_off = static_cast<std::size_t>(out.size()) - a.width;
    std::memcpy(out.data() + last_off, ws.act[a.depth - 2].data(),
                static_cast<std::size_t>(a.width) * sizeof(double));

    // delta = W_D^T masked by ReLU'(pre_{D-1}); subgradient 0 at the kink.
    const Matrix& wd = params.layer(a.depth - 1);
    for (int i = 0; i < a.width; ++i)
        ws.delta[i] = ws.pre[a.depth - 2][i] > 0.0 ? wd.at(0, i) : 0.0;

    std::size_t off = last_off;
    for (int l = a.depth - 2; l >= 0; --l) {
        const std::span<const double> below =
            l == 0 ? x : std::span<const double>(ws.act[l - 1]);
        const Matrix& w = params.layer(l);
        off -= static_cast<std::size_t>(w.rows()) * w.cols();
        double* block = out.data() + off;
        for (int i = 0; i < w.rows(); ++i)
            for (int j = 0; j < w.cols(); ++j)
                block[static_cast<std::size_t>(i) * w.cols() + j] = ws.delta[i] * below[j];

        if (l > 0) {
            cblas_dgemv(CblasRowMajor, CblasTrans, w.rows(), w.cols(), 1.0, w.data(),
                        w.cols(), ws.delta.data(), 1, 0.0, ws.delta_next.data(), 1);
            for (int i = 0; i < a.width; ++i)
                ws.delta[i] = ws.pre[l - 1][i] > 0.0 ? ws.delta_next[i] : 0.0;
        }
    }
}

Vec param_gradient(const MlpParams& params, std::span<const double> x) {
    Vec out(params.arch().param_count());
    MlpWorkspace ws(params.arch());
    param_gradient(params, x, out, ws);
    return out;
}

namespace {

double regularizer(const MlpParams& p, const MlpParams& ref, const TrainConfig& cfg) {
    if (cfg.reg_mode == RegMode::Theory)
        return 0.5 * cfg.reg_lambda * p.squared_distance(ref);
    return cfg.reg_lambda * p.squared_norm();
}

}  // namespace

double pair_loss(const MlpParams& params, const MlpParams& ref_params,
                 std::span<const PreferenceRecord> data, const TrainConfig& cfg) {
    MlpWorkspace ws(params.arch());
    double nll = 0.0;
    for (const auto& rec : data) {
        const double delta = forward_pass(params, rec.winner_features, ws) -
                             forward_pass(params, rec.loser_features, ws);
        nll += neg_log_sigmoid(delta);
    }
    const double data_scale =
        cfg.reg_mode == RegMode::Theory ? 1.0 / params.arch().width : 1.0;
    return data_scale * nll + regularizer(params, ref_params, cfg);
}

TrainResult train(const MlpParams& params, const MlpParams& ref_params,
                  std::span<const PreferenceRecord> data, const TrainConfig& cfg) {
    if (cfg.steps < 1 || cfg.learning_rate < 0.0)
        throw ConfigError("train: require steps >= 1 and learning_rate >= 0");

    const MlpArch& arch = params.arch();
    const int p = arch.param_count();
    const double data_scale = cfg.reg_mode == RegMode::Theory ? 1.0 / arch.width : 1.0;

    Vec theta = params.flatten();
    const Vec theta0 = ref_params.flatten();
    Vec grad(p), g_scratch(p);
    MlpWorkspace ws(arch);

    TrainResult result;
    Vec g_loser(p);
    for (int step = 0; step < cfg.steps; ++step) {
        MlpParams cur = MlpParams::unflatten(arch, theta);
        std::fill(grad.begin(), grad.end(), 0.0);
        double nll = 0.0;
        for (const auto& rec : data) {
            param_gradient(cur, rec.winner_features, g_scratch, ws);
            const double hw = cblas_ddot(arch.width, cur.layer(arch.depth - 1).data(), 1,
                                         ws.act[arch.depth - 2].data(), 1);
            param_gradient(cur, rec.loser_features, g_loser, ws);
            const double hl = cblas_ddot(arch.width, cur.layer(arch.depth - 1).data(), 1,
                                         ws.act[arch.depth - 2].data(), 1);
            const double coeff = data_scale * (sigmoid(hw - hl) - 1.0);
            cblas_daxpy(p, coeff, g_scratch.data(), 1, grad.data(), 1);
            cblas_daxpy(p, -coeff, g_loser.data(), 1, grad.data(), 1);
            nll += neg_log_sigmoid(hw - hl);
        }
        double loss;
        if (cfg.reg_mode == RegMode::Theory) {
            double dist = 0.0;
            for (int i = 0; i < p; ++i) {
                grad[i] += cfg.reg_lambda * (theta[i] - theta0[i]);
                const double d = theta[i] - theta0[i];
                dist += d * d;
            }
            loss = data_scale * nll + 0.5 * cfg.reg_lambda * dist;
        } else {
            for (int i = 0; i < p; ++i) grad[i] += 2.0 * cfg.reg_lambda * theta[i];
            loss = nll + cfg.reg_lambda * cblas_ddot(p, theta.data(), 1, theta.data(), 1);
        }
        if (!std::isfinite(loss))
            throw NumericalFailure("train: non-finite loss at step " + std::to_string(step));
        if (step == 0) result.loss_before = loss;
        cblas_daxpy(p, -cfg.learning_rate, grad.data(), 1, theta.data(), 1);
    }

    result.params = MlpParams::unflatten(arch, theta);
    result.loss_after = pair_loss(result.params, ref_params, data, cfg);
    if (!std::isfinite(result.loss_after))
        throw NumericalFailure("train: non-finite final loss");
    result.loss_increased = result.loss_after > result.loss_before;
    return result;
}

void save_params(const MlpParams& params, std::ostream& out) {
    const MlpArch& a = params.arch();
    nlohmann::json header = {{"format", "nadb-mlp-1"},
                             {"input_dim", a.input_dim},
                             {"depth", a.depth},
                             {"width", a.width},
                             {"count", a.param_count()}};
    out << header.dump() << '\n';
    const Vec theta = params.flatten();
    out.write(reinterpret_cast<const char*>(theta.data()),
              static_cast<std::streamsize>(theta.size() * sizeof(double)));
    if (!out) throw IoError("save_params: write failed");
}

MlpParams load_params(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw IoError("load_params: missing header line");
    const auto header = nlohmann::json::parse(line);
    if (header.value("format", "") != "nadb-mlp-1")
        throw IoError("load_params: unrecognized format");
    MlpArch arch{header.at("input_dim").get<int>(), header.at("depth").get<int>(),
                 header.at("width").get<int>()};
    const int count = header.at("count").get<int>();
    if (count != arch.param_count())
        throw IoError("load_params: count does not match shape");
    Vec theta(count);
    in.read(reinterpret_cast<char*>(theta.data()),
            static_cast<std::streamsize>(theta.size() * sizeof(double)));
    if (!in) throw IoError("load_params: truncated parameter blob");
    return MlpParams::unflatten(arch, theta);
}

void save_params_file(const MlpParams& params, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("save_params_file: cannot open " + path);
    save_params(params, out);
}

MlpParams load_params_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("load_params_file: cannot open " + path);
    return load_params(in);
}

}  // namespace nadb::mlp
