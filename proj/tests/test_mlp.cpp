#include "nadb/mlp.hpp"

#include <cmath>
#include <sstream>

#include "doctest.h"
#include "nadb/errors.hpp"
#include "nadb/rng.hpp"
#include "oracles.hpp"

using namespace nadb;
using mlp::MlpArch;
using mlp::MlpParams;
using mlp::RegMode;
using mlp::TrainConfig;

namespace {

PreferenceRecord record(Vec winner, Vec loser, int round = 1) {
    return PreferenceRecord{std::move(winner), std::move(loser), round};
}

// 2-2-1 network with fixed weights for hand computations:
// W1 = [[1,2],[3,4]], W2 = [[0.5, 0.25]]
MlpParams hand_net() {
    const MlpArch arch{2, 2, 2};
    return MlpParams::unflatten(arch, Vec{1.0, 2.0, 3.0, 4.0, 0.5, 0.25});
}

}  // namespace

TEST_CASE("init is deterministic and shaped per the architecture") {
    const MlpArch arch{2, 2, 4};
    const MlpParams a = mlp::init_params(arch, 42);
    const MlpParams b = mlp::init_params(arch, 42);
    CHECK(a == b);
    CHECK(arch.param_count() == 12);
    CHECK(a.layer(0).rows() == 4);
    CHECK(a.layer(0).cols() == 2);
    CHECK(a.layer(1).rows() == 1);
    CHECK(a.layer(1).cols() == 4);
    CHECK(mlp::init_params(arch, 43) != a);
}

TEST_CASE("first-layer entries follow the 2/fan_in variance") {
    const MlpArch arch{10, 2, 1000};  // 10^4 first-layer entries
    const MlpParams p = mlp::init_params(arch, 5);
    const auto& w1 = p.layer(0);
    double mean = 0.0, sq = 0.0;
    const int n = w1.rows() * w1.cols();
    for (int i = 0; i < w1.rows(); ++i)
        for (int j = 0; j < w1.cols(); ++j) {
            mean += w1.at(i, j);
            sq += w1.at(i, j) * w1.at(i, j);
        }
    mean /= n;
    const double var = sq / n - mean * mean;
    CHECK(var == doctest::Approx(0.2).epsilon(0.10));
}

TEST_CASE("forward: zero input gives zero output") {
    const MlpParams p = mlp::init_params({3, 3, 5}, 9);
    CHECK(mlp::forward(p, Vec{0.0, 0.0, 0.0}) == 0.0);
}

TEST_CASE("forward matches hand evaluation on the 2-2-1 network") {
    const MlpParams p = hand_net();
    // x=(1,1): pre = (3, 7), ReLU keeps both, h = 0.5*3 + 0.25*7 = 3.25
    CHECK(mlp::forward(p, Vec{1.0, 1.0}) == doctest::Approx(3.25));
    // x=(1,-1): pre = (-1, -1) -> ReLU zeroes both -> 0
    CHECK(mlp::forward(p, Vec{1.0, -1.0}) == 0.0);
}

TEST_CASE("scaling the output layer scales the output") {
    MlpParams p = mlp::init_params({4, 3, 6}, 21);
    const Vec x{0.3, -0.7, 0.2, 0.9};
    const double base = mlp::forward(p, x);
    auto& last = p.layer(2);
    for (int j = 0; j < last.cols(); ++j) last.at(0, j) *= 3.0;
    CHECK(mlp::forward(p, x) == doctest::Approx(3.0 * base));
}

TEST_CASE("gradient blocks: zero input zeroes the first layer block") {
    const MlpArch arch{3, 2, 4};
    const MlpParams p = mlp::init_params(arch, 77);
    const Vec g = mlp::param_gradient(p, Vec{0.0, 0.0, 0.0});
    for (int i = 0; i < arch.input_dim * arch.width; ++i) CHECK(g[i] == 0.0);
}

TEST_CASE("gradient of the output layer equals the last hidden activation") {
    const MlpParams p = hand_net();
    const Vec x{1.0, 1.0};
    const Vec g = mlp::param_gradient(p, x);
    // last hidden activation is (3, 7); output block is the final two slots
    CHECK(g[4] == doctest::Approx(3.0));
    CHECK(g[5] == doctest::Approx(7.0));
}

TEST_CASE("analytic gradient matches central finite differences") {
    Rng rng(1234);
    int done = 0;
    while (done < 20) {
        const int d = 2 + static_cast<int>(rng.below(7));
        const int w = 2 + static_cast<int>(rng.below(7));
        const int depth = 2 + static_cast<int>(rng.below(2));
        const MlpArch arch{d, depth, w};
        const MlpParams p = mlp::init_params(arch, rng.next());
        Vec x(d);
        for (auto& v : x) v = rng.uniform_sym();

        // keep away from ReLU kinks so the finite difference is clean
        mlp::MlpWorkspace ws(arch);
        mlp::forward(p, x, ws);
        bool near_kink = false;
        for (const auto& pre : ws.pre)
            for (double v : pre)
                if (std::abs(v) < 1e-3) near_kink = true;
        if (near_kink) continue;

        const Vec analytic = mlp::param_gradient(p, x);
        const Vec fd = oracles::fd_gradient(p, x);
        for (std::size_t i = 0; i < analytic.size(); ++i) {
            if (std::abs(fd[i]) < 1e-6) {
                CHECK(std::abs(analytic[i] - fd[i]) < 1e-7);
            } else {
                CHECK(std::abs(analytic[i] - fd[i]) / std::abs(fd[i]) < 1e-4);
            }
        }
        ++done;
    }
}

TEST_CASE("pair loss: zero network output gives |data| log 2, zero theory regularizer") {
    MlpParams p = mlp::init_params({2, 2, 3}, 4);
    auto& last = p.layer(1);
    for (int j = 0; j < last.cols(); ++j) last.at(0, j) = 0.0;

    std::vector<PreferenceRecord> data;
    data.push_back(record({0.5, 0.1}, {-0.2, 0.3}));
    data.push_back(record({0.9, -0.4}, {0.2, 0.2}));

    TrainConfig cfg;
    cfg.reg_mode = RegMode::Theory;
    cfg.reg_lambda = 1.0;
    const double loss = mlp::pair_loss(p, p, data, cfg);
    CHECK(loss == doctest::Approx((2.0 * std::log(2.0)) / 3.0));  // 1/width scaling
}

TEST_CASE("pair loss: empty data leaves only the practical regularizer") {
    const MlpArch arch{1, 2, 1};
    const MlpParams p = MlpParams::unflatten(arch, Vec{2.0, 0.0});  // ||theta||^2 = 4
    TrainConfig cfg;
    cfg.reg_mode = RegMode::Practical;
    cfg.reg_lambda = 1.0;
    CHECK(mlp::pair_loss(p, p, {}, cfg) == doctest::Approx(4.0));
}

TEST_CASE("pair loss matches scalar arithmetic on one record") {
    const MlpParams p = hand_net();
    std::vector<PreferenceRecord> data{record({1.0, 1.0}, {1.0, 0.0})};
    // h(winner) = 3.25; x=(1,0): pre=(1,3) -> h = 0.5 + 0.75 = 1.25; delta = 2
    TrainConfig cfg;
    cfg.reg_mode = RegMode::Practical;
    cfg.reg_lambda = 0.5;
    const double expected =
        -std::log(1.0 / (1.0 + std::exp(-2.0))) + 0.5 * p.squared_norm();
    CHECK(mlp::pair_loss(p, p, data, cfg) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("training on empty data is plain ridge shrinkage") {
    const MlpParams p0 = mlp::init_params({3, 2, 4}, 11);
    TrainConfig cfg;
    cfg.reg_mode = RegMode::Practical;
    cfg.reg_lambda = 0.8;
    cfg.learning_rate = 0.05;
    cfg.steps = 5;
    const auto result = mlp::train(p0, p0, {}, cfg);
    const double factor = std::pow(1.0 - 2.0 * cfg.learning_rate * cfg.reg_lambda, 5);
    const Vec got = result.params.flatten();
    const Vec init = p0.flatten();
    for (std::size_t i = 0; i < got.size(); ++i)
        CHECK(got[i] == doctest::Approx(factor * init[i]).epsilon(1e-12));
    CHECK_FALSE(result.loss_increased);
}

TEST_CASE("a strongly preferred pair drives its margin up step by step") {
    const MlpArch arch{2, 3, 6};
    MlpParams p = mlp::init_params(arch, 3);
    const Vec winner{0.9, 0.4}, loser{-0.8, 0.1};
    std::vector<PreferenceRecord> data{record(winner, loser)};

    TrainConfig cfg;
    cfg.reg_mode = RegMode::Practical;
    cfg.reg_lambda = 0.01;
    cfg.learning_rate = 0.02;
    cfg.steps = 1;

    double margin = mlp::forward(p, winner) - mlp::forward(p, loser);
    for (int step = 0; step < 10; ++step) {
        p = mlp::train(p, p, data, cfg).params;
        const double next = mlp::forward(p, winner) - mlp::forward(p, loser);
        CHECK(next > margin);
        margin = next;
    }
}

TEST_CASE("zero learning rate leaves parameters untouched") {
    const MlpParams p = mlp::init_params({2, 2, 3}, 8);
    std::vector<PreferenceRecord> data{record({1.0, 0.0}, {0.0, 1.0})};
    TrainConfig cfg;
    cfg.learning_rate = 0.0;
    cfg.steps = 3;
    CHECK(mlp::train(p, p, data, cfg).params == p);
}

TEST_CASE("training is deterministic") {
    const MlpParams p = mlp::init_params({3, 3, 5}, 6);
    std::vector<PreferenceRecord> data{record({0.1, 0.2, 0.3}, {0.3, 0.2, 0.1}),
                                       record({0.5, -0.5, 0.0}, {0.0, 0.5, -0.5})};
    TrainConfig cfg;
    cfg.steps = 25;
    const auto a = mlp::train(p, p, data, cfg);
    const auto b = mlp::train(p, p, data, cfg);
    CHECK(a.params == b.params);
    CHECK(a.loss_after == b.loss_after);
}

TEST_CASE("divergent step size is reported, not hidden") {
    const MlpParams p = mlp::init_params({2, 2, 2}, 15);
    TrainConfig cfg;
    cfg.reg_mode = RegMode::Practical;
    cfg.reg_lambda = 1.0;
    cfg.learning_rate = 1.1;  // |1 - 2 lr lambda| > 1: ridge iteration expands
    cfg.steps = 3;
    const auto result = mlp::train(p, p, {}, cfg);
    CHECK(result.loss_increased);
    CHECK(result.loss_after > result.loss_before);
}

TEST_CASE("runaway divergence raises NumericalFailure") {
    const MlpParams p = mlp::init_params({2, 2, 2}, 16);
    TrainConfig cfg;
    cfg.reg_mode = RegMode::Practical;
    cfg.reg_lambda = 1.0;
    cfg.learning_rate = 1e200;
    cfg.steps = 4;
    CHECK_THROWS_AS(mlp::train(p, p, {}, cfg), NumericalFailure);
}

TEST_CASE("flatten and unflatten round-trip exactly") {
    Rng rng(91);
    for (int trial = 0; trial < 10; ++trial) {
        const MlpArch arch{1 + static_cast<int>(rng.below(6)),
                           2 + static_cast<int>(rng.below(3)),
                           1 + static_cast<int>(rng.below(6))};
        const MlpParams p = mlp::init_params(arch, rng.next());
        const Vec theta = p.flatten();
        CHECK(static_cast<int>(theta.size()) == arch.param_count());
        CHECK(MlpParams::unflatten(arch, theta) == p);
    }
}

TEST_CASE("parameter serialization round-trips bitwise") {
    const MlpParams p = mlp::init_params({4, 3, 7}, 123);
    std::stringstream buf(std::ios::in | std::ios::out | std::ios::binary);
    mlp::save_params(p, buf);
    const MlpParams loaded = mlp::load_params(buf);
    CHECK(loaded == p);
}
