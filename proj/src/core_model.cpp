#include "mefm/core_model.hpp"

#include <cmath>
#include <string>

namespace mefm {

namespace {

constexpr double kIdentificationTol = 1e-12;

void check_effect_rows(const Matrix& effects, const char* name) {
    for (Eigen::Index t = 0; t < effects.rows(); ++t) {
        const double lo = effects.row(t).minCoeff();
        if (!std::isfinite(lo) || std::abs(lo) > kIdentificationTol) {
            throw IdentificationError(std::string(name) + " at t = " + std::to_string(t + 1) +
                                      " has minimum " + std::to_string(lo) + ", expected 0");
        }
    }
}

// Eigenvectors for the k largest eigenvalues, largest first.
void top_eigenpairs(const Matrix& scatter, int k, Matrix& vectors, Vector& values,
                    std::vector<std::string>& warnings, const char* side) {
    Eigen::SelfAdjointEigenSolver<Matrix> solver(scatter);
    if (solver.info() != Eigen::Success) {
        throw NumericalError(std::string("eigensolver did not converge for the ") + side +
                             " scatter matrix");
    }
    const Eigen::Index n = scatter.rows();
    // Eigen orders eigenvalues ascending.
    vectors = solver.eigenvectors().rightCols(k).rowwise().reverse();
    values = solver.eigenvalues().tail(k).reverse();
    for (Eigen::Index i = 0; i < k; ++i) {
        values(i) = std::max(values(i), 0.0);
    }
    if (k < n) {
        const double next = solver.eigenvalues()(n - k - 1);
        const double gap = values(k - 1) - next;
        if (std::abs(gap) <= 1e-12 * std::max(1.0, values(0))) {
            warnings.push_back(std::string(side) + " eigenvalues " + std::to_string(k) + " and " +
                               std::to_string(k + 1) +
                               " coincide; the loading space is not unique");
        }
    }
    fix_signs(vectors);
}

}  // namespace

void MEFMComponents::validate() const {
    const auto T = mu.size();
    if (alpha.rows() != T || beta.rows() != T || static_cast<Eigen::Index>(common.size()) != T) {
        throw DimensionError("components disagree on the series length");
    }
    require_shape(common, alpha.cols(), beta.cols(), "common component");
    if ((alpha.array() < -kIdentificationTol).any() || (beta.array() < -kIdentificationTol).any()) {
        throw IdentificationError("main effects must be non-negative");
    }
    check_effect_rows(alpha, "alpha");
    check_effect_rows(beta, "beta");
}

InitialEffects initial_effects(const MatrixSeries& x) {
    const auto T = static_cast<Eigen::Index>(x.length());
    const Eigen::Index p = x.rows();
    const Eigen::Index q = x.cols();
    InitialEffects out{Vector(T), Matrix(T, p), Matrix(T, q)};
    for (Eigen::Index t = 0; t < T; ++t) {
        const Matrix& xt = x[static_cast<std::size_t>(t)];
        if (!xt.allFinite()) {
            throw DataError("non-finite observation at t = " + std::to_string(t + 1));
        }
        const Vector row_means = xt.rowwise().sum() / static_cast<double>(q);
        const Vector col_means = xt.colwise().sum().transpose() / static_cast<double>(p);
        out.alpha.row(t) = (row_means.array() - row_means.minCoeff()).matrix().transpose();
        out.beta.row(t) = (col_means.array() - col_means.minCoeff()).matrix().transpose();
        out.mu(t) = xt.sum() / static_cast<double>(p * q) - out.alpha.row(t).sum() / p -
                    out.beta.row(t).sum() / q;
    }
    return out;
}

Slices residual_series(const MatrixSeries& x, const InitialEffects& effects) {
    const auto T = static_cast<Eigen::Index>(x.length());
    const Eigen::Index p = x.rows();
    const Eigen::Index q = x.cols();
    if (effects.mu.size() != T || effects.alpha.rows() != T || effects.beta.rows() != T ||
        effects.alpha.cols() != p || effects.beta.cols() != q) {
        throw DimensionError("effect arrays do not match the " + std::to_string(T) + " x " +
                             std::to_string(p) + " x " + std::to_string(q) + " series");
    }
    Slices out(x.length());
    for (Eigen::Index t = 0; t < T; ++t) {
        Matrix l = x[static_cast<std::size_t>(t)];
        l.array() -= effects.mu(t);
        l.colwise() -= effects.alpha.row(t).transpose();
        l.rowwise() -= effects.beta.row(t);
        out[static_cast<std::size_t>(t)] = std::move(l);
    }
    return out;
}

FactorEstimate estimate_loadings(const Slices& residuals, const ModelConfig& cfg) {
    if (residuals.empty()) {
        throw DimensionError("no residual matrices");
    }
    const Eigen::Index p = residuals.front().rows();
    const Eigen::Index q = residuals.front().cols();
    require_shape(residuals, p, q, "residual series");
    if (cfg.k_r < 1 || cfg.k_r >= p || cfg.k_c < 1 || cfg.k_c >= q) {
        throw PreconditionError("need 1 <= k_r < p and 1 <= k_c < q, got k_r = " +
                                std::to_string(cfg.k_r) + ", k_c = " + std::to_string(cfg.k_c) +
                                " for p = " + std::to_string(p) + ", q = " + std::to_string(q));
    }

    Matrix row_scatter = Matrix::Zero(p, p);
    Matrix col_scatter = Matrix::Zero(q, q);
    for (const Matrix& l : residuals) {
        row_scatter.noalias() += l * l.transpose();
        col_scatter.noalias() += l.transpose() * l;
    }
    const double T = static_cast<double>(residuals.size());
    row_scatter /= T;
    col_scatter /= T;
    if (row_scatter.trace() <= 0.0) {
        throw NumericalError("residual series is identically zero; loadings are undefined");
    }

    FactorEstimate fe;
    top_eigenpairs(row_scatter, cfg.k_r, fe.q_r, fe.eig_r, fe.warnings, "row");
    top_eigenpairs(col_scatter, cfg.k_c, fe.q_c, fe.eig_c, fe.warnings, "column");
    return fe;
}

FactorComponents estimate_factors(const MatrixSeries& x, const Slices& residuals,
                                  const FactorEstimate& fe) {
    if (residuals.size() != x.length()) {
        throw DimensionError("residual series length differs from the observations");
    }
    require_shape(residuals, x.rows(), x.cols(), "residual series");
    if (fe.q_r.rows() != x.rows() || fe.q_c.rows() != x.cols()) {
        throw DimensionError("loading matrices do not match the observation dimensions");
    }
    const Matrix proj_r = fe.q_r * fe.q_r.transpose();
    const Matrix proj_c = fe.q_c * fe.q_c.transpose();
    FactorComponents out;
    out.f_z.reserve(x.length());
    out.common.reserve(x.length());
    for (std::size_t t = 0; t < x.length(); ++t) {
        out.f_z.push_back(fe.q_r.transpose() * residuals[t] * fe.q_c);
        out.common.push_back(proj_r * x[t] * proj_c);
    }
    return out;
}

MatrixSeries reconstruct(const MEFMComponents& components) {
    components.validate();
    Slices out(components.common.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const auto t = static_cast<Eigen::Index>(i);
        Matrix x = components.common[i];
        x.array() += components.mu(t);
        x.colwise() += components.alpha.row(t).transpose();
        x.rowwise() += components.beta.row(t);
        out[i] = std::move(x);
    }
    return MatrixSeries(std::move(out));
}

MEFMComponents decompose(const Slices& noiseless) {
    MatrixSeries x(noiseless);
    InitialEffects eff = initial_effects(x);
    MEFMComponents out{std::move(eff.mu), std::move(eff.alpha), std::move(eff.beta), {}};
    out.common.reserve(noiseless.size());
    for (const Matrix& c : noiseless) {
        out.common.push_back(double_center(c));
    }
    return out;
}

Matrix double_center(const Matrix& x) {
    Matrix out = x;
    out.rowwise() -= x.colwise().mean();
    const Vector row_means = out.rowwise().mean();
    out.colwise() -= row_means;
    return out;
}

void fix_signs(Matrix& vectors) {
    for (Eigen::Index k = 0; k < vectors.cols(); ++k) {
        Eigen::Index best = 0;
        for (Eigen::Index i = 1; i < vectors.rows(); ++i) {
            if (std::abs(vectors(i, k)) > std::abs(vectors(best, k))) {
                best = i;
            }
        }
        if (vectors(best, k) < 0.0) {
            vectors.col(k) *= -1.0;
        }
    }
}

}  // namespace mefm
