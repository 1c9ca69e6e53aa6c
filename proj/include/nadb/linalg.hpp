#pragma once

// Dense symmetric kernels backing the design-matrix machinery: packed
// symmetric storage, Cholesky, incremental rank-1 inverse and log-det
// maintenance, Mahalanobis norms, and extremal-eigenvalue estimates.

#include <cstddef>
#include <span>
#include <vector>

#include "nadb/errors.hpp"
#include "nadb/types.hpp"

namespace nadb::linalg {

// =============================================================================
// Dense rectangular matrix, row-major
// =============================================================================
class Matrix {
  public:
    Matrix() = default;
    Matrix(int rows, int cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(static_cast<std::size_t>(rows) * cols, fill) {}

    int rows() const { return rows_; }
    int cols() const { return cols_; }

    double& at(int i, int j) { return data_[static_cast<std::size_t>(i) * cols_ + j]; }
    double at(int i, int j) const { return data_[static_cast<std::size_t>(i) * cols_ + j]; }

    std::span<double> row(int i) {
        return {data_.data() + static_cast<std::size_t>(i) * cols_, static_cast<std::size_t>(cols_)};
    }
    std::span<const double> row(int i) const {
        return {data_.data() + static_cast<std::size_t>(i) * cols_, static_cast<std::size_t>(cols_)};
    }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    bool operator==(const Matrix&) const = default;

  private:
    int rows_ = 0;
    int cols_ = 0;
    std::vector<double> data_;
};

// =============================================================================
// Symmetric matrix, packed upper triangle (row-major packed layout).
// Storage holds one canonical copy of each (i,j) pair, so the symmetry
// invariant cannot drift.
// =============================================================================
class SymMatrix {
  public:
    SymMatrix() = default;
    explicit SymMatrix(int order, double diag = 0.0)
        : n_(order), packed_(static_cast<std::size_t>(order) * (order + 1) / 2, 0.0) {
        for (int i = 0; i < order; ++i) packed_[slot(i, i)] = diag;
    }

    static SymMatrix identity(int order, double scale = 1.0) { return SymMatrix(order, scale); }

    int order() const { return n_; }

    double at(int i, int j) const { return packed_[slot(i, j)]; }
    void set(int i, int j, double v) { packed_[slot(i, j)] = v; }
    void add(int i, int j, double v) { packed_[slot(i, j)] += v; }

    /// Packed upper triangle as consumed by cblas_dsp* routines.
    double* packed() { return packed_.data(); }
    const double* packed() const { return packed_.data(); }

    void scale(double a) {
        for (auto& v : packed_) v *= a;
    }

    bool operator==(const SymMatrix&) const = default;

  private:
    std::size_t slot(int i, int j) const {
        if (i > j) std::swap(i, j);
        return static_cast<std::size_t>(i) * n_ - static_cast<std::size_t>(i) * (i - 1) / 2 + (j - i);
    }

    int n_ = 0;
    std::vector<double> packed_;
};

// =============================================================================
// Factorizations and norms
// =============================================================================

/// Lower-triangular L with L*L^T == a. Throws NotPositiveDefinite when a
/// pivot is <= 0.
Matrix cholesky(const SymMatrix& a);

/// 2 * sum(log diag L) for a PD matrix, via its Cholesky factor.
double log_det(const SymMatrix& a);

/// sqrt(z^T * inverse * z). Throws DimensionMismatch.
double mahalanobis_norm(const SymMatrix& inverse, std::span<const double> z);

/// y = a * x for symmetric a.
void sym_apply(const SymMatrix& a, std::span<const double> x, std::span<double> y);

/// Smallest eigenvalue via inverse power iteration (shift 0), started from
/// the normalized all-ones vector, at most 10*order iterations. Throws
/// ConvergenceFailure if the Rayleigh quotient has not settled to relative
/// tolerance tol, NotPositiveDefinite if the matrix is not PD.
double min_eigenvalue(const SymMatrix& a, double tol);

/// Largest eigenvalue via power iteration, same starting convention.
double max_eigenvalue(const SymMatrix& a, double tol);

// =============================================================================
// Incrementally maintained design matrix: V_t = (lambda/kappa) I + sum z z^T.
// Holds V_t^{-1} (rank-1 Sherman-Morrison updates) and the log-determinant
// of the rescaled matrix (kappa/lambda) V_t, which is the effective-dimension
// accumulator. Single writer; snapshots are freely shareable.
// =============================================================================
class DesignState {
  public:
    DesignState() = default;
    DesignState(int feature_dim, double lambda_over_kappa);

    const SymMatrix& inverse() const { return inv_; }
    double log_det() const { return log_det_; }
    std::int64_t t() const { return t_; }
    double lambda_over_kappa() const { return alpha_; }
    int feature_dim() const { return dim_; }

    /// In-place rank-1 update: V <- V + z z^T. Returns the quadratic form
    /// z^T V^{-1} z evaluated with the pre-update inverse.
    double update(std::span<const double> z);

  private:
    int dim_ = 0;
    double alpha_ = 1.0;
    SymMatrix inv_;
    double log_det_ = 0.0;
    std::int64_t t_ = 0;
    std::vector<double> work_;
};

/// Value-semantics form of DesignState::update.
DesignState sherman_morrison_update(const DesignState& state, std::span<const double> z);

}  // namespace nadb::linalg
