#include "nadb/linalg.hpp"

#include <cblas.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace nadb::linalg {

Matrix cholesky(const SymMatrix& a) {
    const int n = a.order();
    Matrix l(n, n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j <= i; ++j) {
            double sum = a.at(i, j);
            for (int k = 0; k < j; ++k) sum -= l.at(i, k) * l.at(j, k);
            if (i == j) {
                if (sum <= 0.0 || !std::isfinite(sum))
                    throw NotPositiveDefinite("cholesky: pivot " + std::to_string(i) +
                                              " is " + std::to_string(sum));
                l.at(i, i) = std::sqrt(sum);
            } else {
                l.at(i, j) = sum / l.at(j, j);
            }
        }
    }
    return l;
}

double log_det(const SymMatrix& a) {
    const Matrix l = cholesky(a);
    double acc = 0.0;
    for (int i = 0; i < a.order(); ++i) acc += std::log(l.at(i, i));
    return 2.0 * acc;
}

void sym_apply(const SymMatrix& a, std::span<const double> x, std::span<double> y) {
    if (static_cast<int>(x.size()) != a.order() || x.size() != y.size())
        throw DimensionMismatch("sym_apply: vector length does not match order");
    cblas_dspmv(CblasRowMajor, CblasUpper, a.order(), 1.0, a.packed(), x.data(), 1,
                0.0, y.data(), 1);
}

double mahalanobis_norm(const SymMatrix& inverse, std::span<const double> z) {
    if (static_cast<int>(z.size()) != inverse.order())
        throw DimensionMismatch("mahalanobis_norm: |z| = " + std::to_string(z.size()) +
                                ", order = " + std::to_string(inverse.order()));
    std::vector<double> u(z.size());
    cblas_dspmv(CblasRowMajor, CblasUpper, inverse.order(), 1.0, inverse.packed(),
                z.data(), 1, 0.0, u.data(), 1);
    const double q = cblas_ddot(static_cast<int>(z.size()), z.data(), 1, u.data(), 1);
    return std::sqrt(std::max(q, 0.0));
}

namespace {

void solve_lower(const Matrix& l, std::vector<double>& x) {
    const int n = l.rows();
    for (int i = 0; i < n; ++i) {
        double sum = x[i];
        for (int k = 0; k < i; ++k) sum -= l.at(i, k) * x[k];
        x[i] = sum / l.at(i, i);
    }
}

void solve_upper_from_lower_transpose(const Matrix& l, std::vector<double>& x) {
    const int n = l.rows();
    for (int i = n - 1; i >= 0; --i) {
        double sum = x[i];
        for (int k = i + 1; k < n; ++k) sum -= l.at(k, i) * x[k];
        x[i] = sum / l.at(i, i);
    }
}

double rayleigh(const SymMatrix& a, const std::vector<double>& x) {
    std::vector<double> y(x.size());
    sym_apply(a, x, y);
    return cblas_ddot(static_cast<int>(x.size()), x.data(), 1, y.data(), 1);
}

void normalize(std::vector<double>& x) {
    const double nrm = cblas_dnrm2(static_cast<int>(x.size()), x.data(), 1);
    cblas_dscal(static_cast<int>(x.size()), 1.0 / nrm, x.data(), 1);
}

}  // namespace

double min_eigenvalue(const SymMatrix& a, double tol) {
    const int n = a.order();
    if (n == 1) return a.at(0, 0);
    const Matrix l = cholesky(a);

    std::vector<double> x(n, 1.0 / std::sqrt(static_cast<double>(n)));
    double lambda = rayleigh(a, x);
    const int max_iters = 10 * n;
    for (int iter = 0; iter < max_iters; ++iter) {
        solve_lower(l, x);
        solve_upper_from_lower_transpose(l, x);
        normalize(x);
        const double next = rayleigh(a, x);
        if (std::abs(next - lambda) <= tol * std::max(std::abs(next), 1e-300)) return next;
        lambda = next;
    }
    throw ConvergenceFailure("min_eigenvalue: no convergence after " +
                             std::to_string(max_iters) + " iterations");
}

double max_eigenvalue(const SymMatrix& a, double tol) {
    const int n = a.order();
    if (n == 1) return a.at(0, 0);

    std::vector<double> x(n, 1.0 / std::sqrt(static_cast<double>(n)));
    std::vector<double> y(n);
    double lambda = rayleigh(a, x);
    const int max_iters = 10 * n;
    for (int iter = 0; iter < max_iters; ++iter) {
        sym_apply(a, x, y);
        x = y;
        normalize(x);
        const double next = rayleigh(a, x);
        if (std::abs(next - lambda) <= tol * std::max(std::abs(next), 1e-300)) return next;
        lambda = next;
    }
    throw ConvergenceFailure("max_eigenvalue: no convergence after " +
                             std::to_string(max_iters) + " iterations");
}

DesignState::DesignState(int feature_dim, double lambda_over_kappa)
    : dim_(feature_dim),
      alpha_(lambda_over_kappa),
      inv_(feature_dim, 1.0 / lambda_over_kappa),
      work_(feature_dim) {}

double DesignState::update(std::span<const double> z) {
    if (static_cast<int>(z.size()) != dim_)
        throw DimensionMismatch("DesignState::update: |z| does not match feature_dim");

    // u = V^{-1} z, q = z^T V^{-1} z
    cblas_dspmv(CblasRowMajor, CblasUpper, dim_, 1.0, inv_.packed(), z.data(), 1, 0.0,
                work_.data(), 1);
    const double q = cblas_ddot(dim_, z.data(), 1, work_.data(), 1);
    const double denom = 1.0 + q;
    if (!std::isfinite(denom) || denom <= 0.0)
        throw NumericalFailure("DesignState::update: degenerate denominator " +
                               std::to_string(denom));

    // (V + z z^T)^{-1} = V^{-1} - u u^T / (1 + q); writes one packed triangle,
    // so the result stays exactly symmetric.
    cblas_dspr(CblasRowMajor, CblasUpper, dim_, -1.0 / denom, work_.data(), 1,
               inv_.packed());

    // det(V + z z^T) = det(V) (1 + q); the kappa/lambda rescaling cancels in
    // the increment because q is computed with the scaled inverse.
    log_det_ += std::log1p(std::max(q, 0.0));
    ++t_;
    return q;
}

DesignState sherman_morrison_update(const DesignState& state, std::span<const double> z) {
    DesignState next = state;
    next.update(z);
    return next;
}

}  // namespace nadb::linalg
