#pragma once

// Independent reference computations used by the tests. Nothing here calls
// into the library's estimators; they are written from the definitions with
// dense linear algebra and plain loops.

#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "mefm/dafl.hpp"

namespace oracle {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline Matrix centering(Eigen::Index n) {
    return Matrix::Identity(n, n) - Matrix::Constant(n, n, 1.0 / static_cast<double>(n));
}

struct Effects {
    double mu;
    std::vector<double> alpha;
    std::vector<double> beta;
};

// Cell-by-cell evaluation of the closed-form initial estimators.
inline Effects spreadsheet_effects(const Matrix& x) {
    const auto p = x.rows();
    const auto q = x.cols();
    std::vector<double> row_sum(p, 0.0);
    std::vector<double> col_sum(q, 0.0);
    double total = 0.0;
    for (Eigen::Index i = 0; i < p; ++i) {
        for (Eigen::Index j = 0; j < q; ++j) {
            row_sum[i] += x(i, j);
            col_sum[j] += x(i, j);
            total += x(i, j);
        }
    }
    double row_min = row_sum[0];
    for (double v : row_sum) row_min = std::min(row_min, v);
    double col_min = col_sum[0];
    for (double v : col_sum) col_min = std::min(col_min, v);
    Effects e;
    double sa = 0.0;
    double sb = 0.0;
    for (double v : row_sum) {
        e.alpha.push_back(v / q - row_min / q);
        sa += e.alpha.back();
    }
    for (double v : col_sum) {
        e.beta.push_back(v / p - col_min / p);
        sb += e.beta.back();
    }
    e.mu = total / (p * q) - sa / p - sb / q;
    return e;
}

// Explicit (2T-1) x T penalty matrix; infinite weights are left as inf.
inline Matrix dense_d(const mefm::dafl::PenaltyMatrix& pen) {
    const auto T = pen.length();
    Matrix d = Matrix::Zero(2 * T - 1, T);
    for (Eigen::Index t = 0; t + 1 < T; ++t) {
        d(t, t) = -pen.fused_weights(t);
        d(t, t + 1) = pen.fused_weights(t);
    }
    for (Eigen::Index t = 0; t < T; ++t) d(T - 1 + t, t) = pen.lasso_weights(t);
    return d;
}

/// FISTA on the box-constrained dual of the reduced problem.
///
/// Hard zeros are removed as variables; a fused row touching one hard zero
/// keeps only its free entry, a fused row between two hard zeros vanishes.
/// Rows are scaled to unit norm (the box widens to lambda |d_k|), momentum
/// restarts when the dual objective rises, and iteration stops once the
/// primal-dual gap falls below gap_tol. Returns theta on the full index set
/// (zeros at hard_zero).
inline Vector dual_projected_gradient(const Vector& y, const mefm::dafl::PenaltyMatrix& pen,
                                      double lambda, double gap_tol = 1e-14,
                                      int max_iter = 2000000) {
    const auto T = y.size();
    std::vector<Eigen::Index> free;
    for (Eigen::Index t = 0; t < T; ++t) {
        if (!pen.hard_zero[t]) free.push_back(t);
    }
    const auto n = static_cast<Eigen::Index>(free.size());
    Vector out = Vector::Zero(T);
    if (n == 0) return out;
    std::vector<Eigen::RowVectorXd> rows;
    for (Eigen::Index t = 0; t + 1 < T; ++t) {
        if (pen.hard_fuse[t]) continue;
        Eigen::RowVectorXd r = Eigen::RowVectorXd::Zero(n);
        for (Eigen::Index k = 0; k < n; ++k) {
            if (free[k] == t) r(k) = -pen.fused_weights(t);
            if (free[k] == t + 1) r(k) = pen.fused_weights(t);
        }
        if (r.norm() > 0) rows.push_back(r);
    }
    for (Eigen::Index k = 0; k < n; ++k) {
        Eigen::RowVectorXd r = Eigen::RowVectorXd::Zero(n);
        r(k) = pen.lasso_weights(free[k]);
        rows.push_back(r);
    }
    const auto m = static_cast<Eigen::Index>(rows.size());
    Matrix d(m, n);
    Vector bound(m);
    for (Eigen::Index i = 0; i < m; ++i) {
        const double norm = rows[static_cast<std::size_t>(i)].norm();
        d.row(i) = rows[static_cast<std::size_t>(i)] / norm;
        bound(i) = lambda * norm;
    }
    Vector yr(n);
    for (Eigen::Index k = 0; k < n; ++k) yr(k) = y(free[k]);

    auto dual_value = [&](const Vector& u) {
        return 0.5 * yr.squaredNorm() - 0.5 * (yr - d.transpose() * u).squaredNorm();
    };
    auto primal_value = [&](const Vector& th) {
        return 0.5 * (yr - th).squaredNorm() + (bound.array() * (d * th).array().abs()).sum();
    };
    const double lip = Eigen::SelfAdjointEigenSolver<Matrix>(d * d.transpose()).eigenvalues().maxCoeff();
    Vector u = Vector::Zero(m);
    Vector z = u;
    double tk = 1.0;
    double last = dual_value(u);
    for (int it = 0; it < max_iter; ++it) {
        const Vector grad = -d * (yr - d.transpose() * z);
        const Vector un = (z - grad / lip).cwiseMax(-bound).cwiseMin(bound);
        const double value = dual_value(un);
        if (value < last) {
            tk = 1.0;  // restart
            z = u;
            continue;
        }
        const double tn = (1.0 + std::sqrt(1.0 + 4.0 * tk * tk)) / 2.0;
        z = un + ((tk - 1.0) / tn) * (un - u);
        u = un;
        tk = tn;
        last = value;
        const double gap = primal_value(yr - d.transpose() * u) - value;
        if (it % 50 == 0 && gap < gap_tol * (1.0 + yr.squaredNorm())) break;
    }
    const Vector th = yr - d.transpose() * u;
    for (Eigen::Index k = 0; k < n; ++k) out(free[k]) = th(k);
    return out;
}

inline double primal_objective(const Vector& y, const mefm::dafl::PenaltyMatrix& pen, double lambda,
                               const Vector& theta) {
    double pen_sum = 0.0;
    const auto T = y.size();
    for (Eigen::Index t = 0; t + 1 < T; ++t) {
        const double diff = std::abs(theta(t + 1) - theta(t));
        if (std::isfinite(pen.fused_weights(t))) pen_sum += pen.fused_weights(t) * diff;
    }
    for (Eigen::Index t = 0; t < T; ++t) {
        if (std::isfinite(pen.lasso_weights(t))) pen_sum += pen.lasso_weights(t) * std::abs(theta(t));
    }
    return 0.5 * (y - theta).squaredNorm() + lambda * pen_sum;
}

// T minus the numerical rank of the listed rows of the explicit D (rows with
// infinite weight replaced by their unit direction).
inline int dense_nullity(const mefm::dafl::PenaltyMatrix& pen,
                         const std::vector<Eigen::Index>& rows) {
    const Matrix d = dense_d(pen);
    const auto T = pen.length();
    if (rows.empty()) return static_cast<int>(T);
    Matrix sub(static_cast<Eigen::Index>(rows.size()), T);
    for (std::size_t k = 0; k < rows.size(); ++k) {
        Eigen::RowVectorXd r = d.row(rows[k]);
        for (Eigen::Index c = 0; c < T; ++c) {
            if (!std::isfinite(r(c))) r(c) = r(c) > 0 ? 1.0 : -1.0;
        }
        sub.row(static_cast<Eigen::Index>(k)) = r / r.norm();
    }
    Eigen::JacobiSVD<Matrix> svd(sub);
    const Vector s = svd.singularValues();
    int rank = 0;
    for (Eigen::Index k = 0; k < s.size(); ++k) {
        if (s(k) > 1e-10 * s(0)) ++rank;
    }
    return static_cast<int>(T) - rank;
}

// Spectral norm of the difference of projectors formed by normal equations.
inline double projector_distance(const Matrix& a, const Matrix& b) {
    const Matrix pa = a * (a.transpose() * a).inverse() * a.transpose();
    const Matrix pb = b * (b.transpose() * b).inverse() * b.transpose();
    Eigen::JacobiSVD<Matrix> svd(pa - pb);
    return svd.singularValues()(0);
}

inline Matrix random_matrix(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    Matrix m(r, c);
    for (Eigen::Index j = 0; j < c; ++j)
        for (Eigen::Index i = 0; i < r; ++i) m(i, j) = n(rng);
    return m;
}

}  // namespace oracle
