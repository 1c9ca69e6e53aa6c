#include "nadb/linalg.hpp"

#include <cmath>

#include "doctest.h"
#include "nadb/errors.hpp"
#include "nadb/rng.hpp"
#include "oracles.hpp"

using namespace nadb;
using linalg::DesignState;
using linalg::Matrix;
using linalg::SymMatrix;

namespace {

SymMatrix accumulate_v(double alpha, const std::vector<Vec>& zs, int p) {
    SymMatrix v(p, alpha);
    for (const auto& z : zs)
        for (int i = 0; i < p; ++i)
            for (int j = i; j < p; ++j) v.add(i, j, z[i] * z[j]);
    return v;
}

}  // namespace

TEST_CASE("cholesky of identity is identity") {
    const SymMatrix eye = SymMatrix::identity(3);
    const Matrix l = linalg::cholesky(eye);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) CHECK(l.at(i, j) == doctest::Approx(i == j ? 1.0 : 0.0));
}

TEST_CASE("cholesky 2x2 hand case and reconstruction") {
    SymMatrix a(2);
    a.set(0, 0, 4.0);
    a.set(0, 1, 2.0);
    a.set(1, 1, 3.0);
    const Matrix l = linalg::cholesky(a);
    CHECK(l.at(0, 0) == doctest::Approx(2.0));
    CHECK(l.at(1, 0) == doctest::Approx(1.0));
    CHECK(l.at(1, 1) == doctest::Approx(std::sqrt(2.0)));
    CHECK(l.at(0, 1) == 0.0);
    // L L^T reproduces the input entrywise
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) {
            double acc = 0.0;
            for (int k = 0; k < 2; ++k) acc += l.at(i, k) * l.at(j, k);
            CHECK(acc == doctest::Approx(a.at(i, j)).epsilon(1e-12));
        }
}

TEST_CASE("cholesky rejects indefinite input") {
    SymMatrix a(2);
    a.set(0, 0, 1.0);
    a.set(0, 1, 2.0);
    a.set(1, 1, 1.0);
    CHECK_THROWS_AS(linalg::cholesky(a), NotPositiveDefinite);
}

TEST_CASE("design state starts at the regularized identity") {
    const DesignState state(3, 4.0);
    CHECK(state.t() == 0);
    CHECK(state.log_det() == 0.0);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            CHECK(state.inverse().at(i, j) == doctest::Approx(i == j ? 0.25 : 0.0));
}

TEST_CASE("rank-1 update with zero vector changes nothing but the counter") {
    DesignState state(2, 1.0);
    const Vec z{0.0, 0.0};
    state.update(z);
    CHECK(state.t() == 1);
    CHECK(state.log_det() == 0.0);
    CHECK(state.inverse().at(0, 0) == 1.0);
    CHECK(state.inverse().at(0, 1) == 0.0);
}

TEST_CASE("scalar rank-1 update matches closed form") {
    DesignState state(1, 1.0);
    state.update(Vec{1.0});
    CHECK(state.inverse().at(0, 0) == doctest::Approx(0.5));
    CHECK(state.log_det() == doctest::Approx(std::log(2.0)));
}

TEST_CASE("value-semantics update leaves the input state untouched") {
    const DesignState before(2, 1.0);
    const DesignState after = linalg::sherman_morrison_update(before, Vec{1.0, 2.0});
    CHECK(before.t() == 0);
    CHECK(before.inverse().at(0, 0) == 1.0);
    CHECK(after.t() == 1);
    CHECK(after.log_det() > 0.0);
}

TEST_CASE("100 random updates agree with direct inversion and cholesky log-det") {
    const int p = 20;
    const double alpha = 2.5;
    Rng rng(7);
    DesignState state(p, alpha);
    std::vector<Vec> zs;
    for (int s = 0; s < 100; ++s) {
        Vec z(p);
        for (auto& v : z) v = rng.uniform_sym();
        zs.push_back(z);
        state.update(z);
    }

    const SymMatrix v = accumulate_v(alpha, zs, p);
    const Matrix direct = oracles::invert(v);
    double max_err = 0.0;
    for (int i = 0; i < p; ++i)
        for (int j = 0; j < p; ++j)
            max_err = std::max(max_err, std::abs(direct.at(i, j) - state.inverse().at(i, j)));
    CHECK(max_err < 1e-8);

    // log det of (1/alpha) V via an independent factorization
    SymMatrix scaled = v;
    scaled.scale(1.0 / alpha);
    CHECK(std::abs(linalg::log_det(scaled) - state.log_det()) < 1e-8);
}

TEST_CASE("log-det is nondecreasing and min eigenvalue grows with updates") {
    const int p = 8;
    Rng rng(11);
    DesignState state(p, 1.0);
    std::vector<Vec> zs;
    double prev_log_det = 0.0;
    double prev_min_eig = 1.0;
    for (int s = 0; s < 30; ++s) {
        Vec z(p);
        for (auto& v : z) v = rng.uniform_sym();
        zs.push_back(z);
        state.update(z);
        CHECK(state.log_det() >= prev_log_det);
        prev_log_det = state.log_det();

        const double min_eig = linalg::min_eigenvalue(accumulate_v(1.0, zs, p), 1e-10);
        CHECK(min_eig >= prev_min_eig - 1e-6);
        prev_min_eig = min_eig;
    }
}

TEST_CASE("mahalanobis norm: identity and scaled identity") {
    const SymMatrix eye = SymMatrix::identity(2);
    CHECK(linalg::mahalanobis_norm(eye, Vec{3.0, 4.0}) == doctest::Approx(5.0));

    const SymMatrix quarter = SymMatrix::identity(2, 0.25);  // (1/lambda) I, lambda = 4
    CHECK(linalg::mahalanobis_norm(quarter, Vec{2.0, 0.0}) == doctest::Approx(1.0));
}

TEST_CASE("mahalanobis norm matches the naive triple loop") {
    Rng rng(3);
    const SymMatrix a = oracles::random_pd(rng, 7);
    for (int trial = 0; trial < 10; ++trial) {
        Vec z(7);
        for (auto& v : z) v = rng.uniform_sym();
        const double expected = std::sqrt(oracles::quadform(a, z));
        CHECK(linalg::mahalanobis_norm(a, z) == doctest::Approx(expected).epsilon(1e-12));
    }
}

TEST_CASE("mahalanobis norm rejects dimension mismatch") {
    const SymMatrix eye = SymMatrix::identity(3);
    CHECK_THROWS_AS(linalg::mahalanobis_norm(eye, Vec{1.0, 2.0}), DimensionMismatch);
}

TEST_CASE("mahalanobis scaling: inverse scaled by a gives sqrt(a) times the norm") {
    Rng rng(17);
    SymMatrix a = oracles::random_pd(rng, 5);
    Vec z(5);
    for (auto& v : z) v = rng.uniform_sym();
    const double base = linalg::mahalanobis_norm(a, z);
    SymMatrix scaled = a;
    scaled.scale(3.0);
    CHECK(linalg::mahalanobis_norm(scaled, z) ==
          doctest::Approx(std::sqrt(3.0) * base).epsilon(1e-12));
}

TEST_CASE("norm is bounded by ||z|| / sqrt(min eigenvalue)") {
    Rng rng(23);
    for (int trial = 0; trial < 5; ++trial) {
        const SymMatrix v = oracles::random_pd(rng, 6);
        const Matrix inv_dense = oracles::invert(v);
        SymMatrix inv(6);
        for (int i = 0; i < 6; ++i)
            for (int j = i; j < 6; ++j) inv.set(i, j, inv_dense.at(i, j));
        const double min_eig = linalg::min_eigenvalue(v, 1e-10);
        Vec z(6);
        for (auto& x : z) x = rng.uniform_sym();
        double nrm = 0.0;
        for (double x : z) nrm += x * x;
        nrm = std::sqrt(nrm);
        CHECK(linalg::mahalanobis_norm(inv, z) <= nrm / std::sqrt(min_eig) + 1e-9);
    }
}

TEST_CASE("min eigenvalue: diagonal and identity cases") {
    SymMatrix diag(3);
    diag.set(0, 0, 1.0);
    diag.set(1, 1, 5.0);
    diag.set(2, 2, 9.0);
    CHECK(linalg::min_eigenvalue(diag, 1e-10) == doctest::Approx(1.0));
    CHECK(linalg::min_eigenvalue(SymMatrix::identity(6), 1e-10) == doctest::Approx(1.0));
}

TEST_CASE("min eigenvalue matches the 2x2 closed form") {
    SymMatrix a(2);
    a.set(0, 0, 3.0);
    a.set(0, 1, 1.0);
    a.set(1, 1, 2.0);
    const double mean = 2.5, radius = std::sqrt(0.25 + 1.0);
    CHECK(linalg::min_eigenvalue(a, 1e-12) == doctest::Approx(mean - radius));
}

TEST_CASE("min eigenvalue agrees with Rayleigh minimization on random PD matrices") {
    Rng rng(31);
    for (int trial = 0; trial < 3; ++trial) {
        const SymMatrix a = oracles::random_pd(rng, 10);
        const double via_iteration = linalg::min_eigenvalue(a, 1e-10);
        const double via_rayleigh = oracles::rayleigh_min(a);
        CHECK(via_iteration == doctest::Approx(via_rayleigh).epsilon(1e-4));
    }
}

TEST_CASE("max eigenvalue of a diagonal matrix") {
    SymMatrix diag(3);
    diag.set(0, 0, 1.0);
    diag.set(1, 1, 5.0);
    diag.set(2, 2, 9.0);
    CHECK(linalg::max_eigenvalue(diag, 1e-10) == doctest::Approx(9.0));
}
