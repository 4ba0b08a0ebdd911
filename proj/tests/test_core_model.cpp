#include "doctest.h"

#include <algorithm>
#include <limits>
#include <numeric>

#include "mefm/core_model.hpp"
#include "mefm/metrics.hpp"
#include "oracles.hpp"

using namespace mefm;

namespace {

MatrixSeries random_series(int T, int p, int q, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    Slices s;
    for (int t = 0; t < T; ++t) s.push_back(oracle::random_matrix(p, q, rng));
    return MatrixSeries(std::move(s));
}

// Orthonormal p x k basis orthogonal to the ones vector.
Matrix centred_basis(int p, int k, std::mt19937_64& rng) {
    Matrix u = oracle::centering(p) * oracle::random_matrix(p, k, rng);
    Eigen::HouseholderQR<Matrix> qr(u);
    return qr.householderQ() * Matrix::Identity(p, k);
}

}  // namespace

TEST_SUITE("core_model") {

TEST_CASE("MatrixSeries rejects bad data") {
    Matrix ok = Matrix::Ones(2, 2);
    CHECK_THROWS_AS(MatrixSeries(Slices{ok}), DataError);
    CHECK_THROWS_AS(MatrixSeries(Slices{ok, Matrix::Ones(2, 3)}), DataError);
    CHECK_THROWS_AS(MatrixSeries(Slices{Matrix::Ones(1, 2), Matrix::Ones(1, 2)}), DataError);
    Matrix bad = ok;
    bad(1, 0) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(MatrixSeries(Slices{ok, bad}), DataError);
    bad(1, 0) = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(MatrixSeries(Slices{ok, bad}), DataError);
    CHECK_NOTHROW(MatrixSeries(Slices{ok, ok}));
}

TEST_CASE("initial effects of a noiseless 2x2 series") {
    Matrix x(2, 2);
    x << 1, 4, 3, 6;
    const InitialEffects e = initial_effects(MatrixSeries(Slices{x, x}));
    for (int t = 0; t < 2; ++t) {
        CHECK(e.alpha(t, 0) == doctest::Approx(0.0));
        CHECK(e.alpha(t, 1) == doctest::Approx(2.0));
        CHECK(e.beta(t, 0) == doctest::Approx(0.0));
        CHECK(e.beta(t, 1) == doctest::Approx(3.0));
        CHECK(e.mu(t) == doctest::Approx(1.0));
    }
}

TEST_CASE("constant matrix is a pure base effect") {
    const Matrix x = Matrix::Constant(3, 5, 2.5);
    const InitialEffects e = initial_effects(MatrixSeries(Slices{x, x, x}));
    CHECK(e.alpha.cwiseAbs().maxCoeff() == 0.0);
    CHECK(e.beta.cwiseAbs().maxCoeff() == 0.0);
    CHECK((e.mu.array() - 2.5).abs().maxCoeff() < 1e-14);
}

TEST_CASE("initial effects match a cell-by-cell evaluation") {
    Matrix a(3, 4);
    a << 0.3, -1.2, 2.2, 0.7,
         1.9, 0.4, -0.8, 1.1,
         -0.5, 2.6, 0.05, -1.4;
    Matrix b = a.reverse();
    const MatrixSeries x(Slices{a, b});
    const InitialEffects e = initial_effects(x);
    for (int t = 0; t < 2; ++t) {
        const oracle::Effects o = oracle::spreadsheet_effects(x[t]);
        CHECK(e.mu(t) == doctest::Approx(o.mu).epsilon(1e-13));
        for (int i = 0; i < 3; ++i) CHECK(std::abs(e.alpha(t, i) - o.alpha[i]) < 1e-13);
        for (int j = 0; j < 4; ++j) CHECK(std::abs(e.beta(t, j) - o.beta[j]) < 1e-13);
    }
}

TEST_CASE("initial effects have exact zero minima and are non-negative") {
    const MatrixSeries x = random_series(7, 6, 5, 11);
    const InitialEffects e = initial_effects(x);
    for (Eigen::Index t = 0; t < 7; ++t) {
        CHECK(e.alpha.row(t).minCoeff() == 0.0);
        CHECK(e.beta.row(t).minCoeff() == 0.0);
    }
}

TEST_CASE("residuals equal the double-centred observations") {
    const MatrixSeries x = random_series(5, 4, 3, 3);
    const Slices l = residual_series(x, initial_effects(x));
    const Matrix mp = oracle::centering(4);
    const Matrix mq = oracle::centering(3);
    for (std::size_t t = 0; t < 5; ++t) {
        CHECK((l[t] - mp * x[t] * mq).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("residuals vanish for pure effects") {
    Matrix x(2, 2);
    x << 1, 4, 3, 6;
    const MatrixSeries s(Slices{x, 2 * x});
    for (const Matrix& l : residual_series(s, initial_effects(s))) {
        CHECK(l.cwiseAbs().maxCoeff() < 1e-14);
    }
}

TEST_CASE("residual_series rejects mismatched effects") {
    const MatrixSeries x = random_series(4, 3, 3, 1);
    InitialEffects e = initial_effects(x);
    e.alpha.conservativeResize(4, 2);
    CHECK_THROWS_AS(residual_series(x, e), DimensionError);
}

TEST_CASE("rank-one residuals give back the row direction") {
    std::mt19937_64 rng(5);
    const Matrix u = centred_basis(6, 1, rng);
    const Matrix v = centred_basis(5, 1, rng);
    Slices l;
    for (int t = 0; t < 8; ++t) l.push_back((1.0 + t) * u * v.transpose());
    ModelConfig cfg;
    const FactorEstimate fe = estimate_loadings(l, cfg);
    CHECK(metrics::space_distance(u, fe.q_r) < 1e-10);
    CHECK(metrics::space_distance(v, fe.q_c) < 1e-10);
}

TEST_CASE("loadings match a dense eigensolver on the scatter matrix") {
    std::mt19937_64 rng(20);
    Slices l;
    for (int t = 0; t < 30; ++t) {
        l.push_back(oracle::centering(20) * oracle::random_matrix(20, 15, rng) *
                    oracle::centering(15));
    }
    ModelConfig cfg;
    cfg.k_r = 2;
    cfg.k_c = 3;
    const FactorEstimate fe = estimate_loadings(l, cfg);

    Matrix s = Matrix::Zero(20, 20);
    for (const Matrix& m : l) s += m * m.transpose();
    s /= 30.0;
    Eigen::EigenSolver<Matrix> general(s);
    std::vector<double> ev;
    for (Eigen::Index k = 0; k < 20; ++k) ev.push_back(general.eigenvalues()(k).real());
    std::sort(ev.rbegin(), ev.rend());
    for (int k = 0; k < 2; ++k) {
        CHECK(std::abs(fe.eig_r(k) - ev[k]) <= 1e-8 * ev[k]);
    }
    CHECK(fe.eig_r(0) >= fe.eig_r(1));
    CHECK((fe.q_r.transpose() * fe.q_r - Matrix::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((fe.q_c.transpose() * fe.q_c - Matrix::Identity(3, 3)).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((Vector::Ones(20).transpose() * fe.q_r).cwiseAbs().maxCoeff() < 1e-8);
    CHECK((Vector::Ones(15).transpose() * fe.q_c).cwiseAbs().maxCoeff() < 1e-8);
    // each column is an eigenvector of s
    for (int k = 0; k < 2; ++k) {
        CHECK((s * fe.q_r.col(k) - fe.eig_r(k) * fe.q_r.col(k)).norm() < 1e-9 * fe.eig_r(0));
    }
}

TEST_CASE("sign convention: largest-magnitude entry is positive") {
    Matrix v(3, 2);
    v << 0.1, 0.6, -0.9, -0.6, 0.2, 0.3;
    fix_signs(v);
    CHECK(v(1, 0) == doctest::Approx(0.9));
    // tie between rows 0 and 1 resolves to the lower index
    CHECK(v(0, 1) == doctest::Approx(0.6));
}

TEST_CASE("zero residuals are rejected") {
    Slices l(3, Matrix::Zero(4, 4));
    CHECK_THROWS_AS(estimate_loadings(l, ModelConfig{}), NumericalError);
}

TEST_CASE("factor counts must be below the dimensions") {
    Slices l(3, Matrix::Identity(3, 3));
    ModelConfig cfg;
    cfg.k_r = 3;
    CHECK_THROWS_AS(estimate_loadings(l, cfg), PreconditionError);
}

TEST_CASE("repeated eigenvalues raise a warning") {
    // Identity-like scatter: every eigenvalue equal
    Slices l;
    const Matrix m = oracle::centering(4);
    l.push_back(m);
    l.push_back(m);
    const FactorEstimate fe = estimate_loadings(l, ModelConfig{});
    CHECK_FALSE(fe.warnings.empty());
}

TEST_CASE("column permutations leave the row loading space unchanged") {
    const MatrixSeries x = random_series(25, 8, 6, 31);
    std::vector<int> perm{3, 0, 5, 1, 4, 2};
    Slices permuted;
    for (const Matrix& m : x) {
        Matrix y(m.rows(), m.cols());
        for (int j = 0; j < 6; ++j) y.col(j) = m.col(perm[j]);
        permuted.push_back(y);
    }
    const MatrixSeries xp(std::move(permuted));
    ModelConfig cfg;
    cfg.k_r = 2;
    const FactorEstimate a = estimate_loadings(residual_series(x, initial_effects(x)), cfg);
    const FactorEstimate b = estimate_loadings(residual_series(xp, initial_effects(xp)), cfg);
    CHECK(metrics::space_distance(a.q_r, b.q_r) < 1e-8);
}

TEST_CASE("common component of a noiseless factor series is exact") {
    std::mt19937_64 rng(8);
    const Matrix qr = centred_basis(7, 2, rng);
    const Matrix qc = centred_basis(6, 2, rng);
    Slices xs;
    for (int t = 0; t < 12; ++t) xs.push_back(qr * oracle::random_matrix(2, 2, rng) * qc.transpose());
    const MatrixSeries x(xs);
    const Slices l = residual_series(x, initial_effects(x));
    ModelConfig cfg;
    cfg.k_r = 2;
    cfg.k_c = 2;
    const FactorEstimate fe = estimate_loadings(l, cfg);
    const FactorComponents fc = estimate_factors(x, l, fe);
    for (std::size_t t = 0; t < 12; ++t) {
        CHECK((fc.common[t] - x[t]).cwiseAbs().maxCoeff() < 1e-10);
        const Matrix direct = fe.q_r.transpose() * x[t] * fe.q_c;
        CHECK((fc.f_z[t] - direct).cwiseAbs().maxCoeff() < 1e-8);
    }
}

TEST_CASE("common component matches the projector product on noisy data") {
    const MatrixSeries x = random_series(10, 9, 7, 77);
    const Slices l = residual_series(x, initial_effects(x));
    ModelConfig cfg;
    cfg.k_r = 2;
    cfg.k_c = 2;
    const FactorEstimate fe = estimate_loadings(l, cfg);
    const FactorComponents fc = estimate_factors(x, l, fe);
    for (std::size_t t = 0; t < 10; ++t) {
        Matrix expected = Matrix::Zero(9, 7);
        for (int a = 0; a < 2; ++a)
            for (int b = 0; b < 2; ++b) {
                const double w = fe.q_r.col(a).dot(x[t] * fe.q_c.col(b));
                expected += w * fe.q_r.col(a) * fe.q_c.col(b).transpose();
            }
        CHECK((fc.common[t] - expected).cwiseAbs().maxCoeff() < 1e-10);
    }
}

TEST_CASE("reconstruct: zero components give a zero series") {
    MEFMComponents c{Vector::Zero(3), Matrix::Zero(3, 2), Matrix::Zero(3, 4),
                     Slices(3, Matrix::Zero(2, 4))};
    for (const Matrix& m : reconstruct(c)) CHECK(m.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("reconstruct rejects unidentified effects") {
    MEFMComponents c{Vector::Zero(2), Matrix::Ones(2, 2), Matrix::Zero(2, 2),
                     Slices(2, Matrix::Zero(2, 2))};
    CHECK_THROWS_AS(reconstruct(c), IdentificationError);
    c.alpha << 0, 1, -0.5, 0;
    CHECK_THROWS_AS(reconstruct(c), IdentificationError);
    c.common.pop_back();
    CHECK_THROWS_AS(reconstruct(c), DimensionError);
}

TEST_CASE("decompose then reconstruct recovers a Tucker series") {
    std::mt19937_64 rng(9);
    const Matrix ar = oracle::random_matrix(5, 2, rng);
    const Matrix ac = oracle::random_matrix(4, 1, rng);
    Slices c;
    for (int t = 0; t < 6; ++t) c.push_back(ar * oracle::random_matrix(2, 1, rng) * ac.transpose());
    const MEFMComponents d = decompose(c);
    const MatrixSeries back = reconstruct(d);
    for (std::size_t t = 0; t < 6; ++t) CHECK((back[t] - c[t]).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("initial_effects inverts reconstruct without noise") {
    std::mt19937_64 rng(10);
    const int T = 9, p = 6, q = 5;
    std::uniform_real_distribution<double> u(0.0, 3.0);
    MEFMComponents c;
    c.mu = oracle::random_matrix(T, 1, rng);
    c.alpha = Matrix(T, p);
    c.beta = Matrix(T, q);
    for (int t = 0; t < T; ++t) {
        for (int i = 0; i < p; ++i) c.alpha(t, i) = u(rng);
        for (int j = 0; j < q; ++j) c.beta(t, j) = u(rng);
        c.alpha(t, t % p) = 0.0;
        c.alpha.row(t).array() -= c.alpha.row(t).minCoeff();
        c.beta.row(t).array() -= c.beta.row(t).minCoeff();
    }
    const Matrix qr = centred_basis(p, 1, rng);
    const Matrix qc = centred_basis(q, 2, rng);
    for (int t = 0; t < T; ++t) c.common.push_back(qr * oracle::random_matrix(1, 2, rng) * qc.transpose());
    const InitialEffects e = initial_effects(reconstruct(c));
    CHECK((e.mu - c.mu).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((e.alpha - c.alpha).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((e.beta - c.beta).cwiseAbs().maxCoeff() < 1e-12);
}

}  // TEST_SUITE
