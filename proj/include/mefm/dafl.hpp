#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mefm/types.hpp"

// Doubly adaptive fused lasso for one main-effect series y (length T):
//
//   minimise  1/2 |y - theta|^2 + lambda |D theta|_1,   D = [D_F; D_L]
//
// D_F has T-1 rows u_t (e_{t+1} - e_t) with u_t = 1 / max(y_t, y_{t+1}),
// D_L = diag(1 / y_t). Rows are numbered fused first, then lasso, so fused
// row k couples (k, k+1) and lasso row T-1+t acts on t.
namespace mefm::dafl {

/// Adaptive weights of D. A zero initial estimate makes its weight infinite;
/// such rows are hard constraints rather than penalties.
struct PenaltyMatrix {
    Vector fused_weights;          // length T-1, +inf where hard_fuse
    Vector lasso_weights;          // length T, +inf where hard_zero
    std::vector<bool> hard_zero;   // theta_t pinned to 0
    std::vector<bool> hard_fuse;   // theta_t == theta_{t+1} enforced

    Eigen::Index length() const { return lasso_weights.size(); }
    Eigen::Index row_count() const { return 2 * length() - 1; }
    bool is_hard_row(Eigen::Index row) const;
    double row_weight(Eigen::Index row) const;
};

struct GenLassoSolution {
    Vector theta;
    // Box-constrained dual, |dual_k| <= lambda. Hard rows carry 0: their
    // multiplier is unbounded and not part of the certificate.
    Vector dual;
    std::vector<Eigen::Index> active_set;  // rows with (D theta)_k == 0, hard rows included
    double kkt_residual = 0.0;
    double objective = 0.0;
    double lambda = 0.0;
};

enum class TuningMode { PerIndex, Aggregated };
enum class RankMethod { Structural, Svd };

struct TuningConfig {
    int grid_size = 30;
    double lambda_min = 1e-4;
    std::optional<double> lambda_max;  // default: largest single-row correlation
    double tol = 1e-8;
    TuningMode mode = TuningMode::PerIndex;
};

struct TuningResult {
    std::vector<double> lambda_grid;
    std::vector<double> cp_values;
    std::vector<int> dof;
    double chosen_lambda = 0.0;
    double sigma2_hat = 0.0;
    GenLassoSolution solution;  // at chosen_lambda
};

struct NullityResult {
    int nullity = 0;
    bool ambiguous = false;  // a singular value sits within 10x of the threshold
};

// Entries must be >= 0; throws PreconditionError otherwise.
PenaltyMatrix build_penalty(const Vector& y);

/// Exact minimiser of the penalised problem with hard rows as constraints.
///
/// The fused chain is solved by dynamic programming over piecewise-linear
/// derivatives of the cost-to-go, then a dual certificate is rebuilt from the
/// primal by interval propagation. Throws ConvergenceError (carrying theta)
/// when the certificate residual exceeds tol.
GenLassoSolution solve_genlasso(const Vector& y, const PenaltyMatrix& pen, double lambda,
                                double tol = 1e-8);

// Stationarity, box and sign residuals of (theta, dual); the maximum of the three.
double kkt_residual(const Vector& y, const PenaltyMatrix& pen, double lambda, const Vector& theta,
                    const Vector& dual);

// |(D theta)_k| <= 1e-8 (1 + max|y|) plus every hard row.
std::vector<Eigen::Index> active_rows(const Vector& y, const PenaltyMatrix& pen,
                                      const Vector& theta);

/// Realised nullity of D restricted to the active rows.
///
/// Structural: T minus the number of fused groups (components linked by
/// active fused rows) that contain no active lasso row. Svd: rank of the
/// unit-normalised active rows by singular-value thresholding at
/// 1e-10 * sigma_max. Both give the same count; the structural one is O(T).
int degrees_of_freedom(const GenLassoSolution& sol, const PenaltyMatrix& pen,
                       RankMethod method = RankMethod::Structural);

NullityResult nullity_svd(const Matrix& rows, Eigen::Index columns);

// Unit-normalised rows of D listed in `rows`.
Matrix normalized_rows(const PenaltyMatrix& pen, const std::vector<Eigen::Index>& rows);

double cp_statistic(const Vector& y, const GenLassoSolution& sol, const PenaltyMatrix& pen,
                    double sigma2_hat);

// Sample variance with denominator T - 1.
double sample_variance(const Vector& y);

// Largest |<d_k, y>| / |d_k|^2 over finite rows of D.
double default_lambda_max(const Vector& y, const PenaltyMatrix& pen);

std::vector<double> log_grid(double lo, double hi, int size);

TuningResult tune_lambda(const Vector& y, const TuningConfig& cfg);

BlockSets extract_blocks(const Vector& theta, double zero_tol = 1e-10);

Vector final_effects(const Vector& y, const BlockSets& blocks);

struct SeriesFailure {
    char axis;  // 'r' for row effects, 'c' for column effects
    Eigen::Index index;
    std::string message;
};

struct SparseEffectsFit {
    Matrix alpha_dafl;   // T x p DAFL estimates at the chosen lambdas
    Matrix beta_dafl;
    Matrix alpha_final;  // initial estimates zeroed outside the dense blocks
    Matrix beta_final;
    std::vector<BlockSets> row_blocks;
    std::vector<BlockSets> col_blocks;
    std::vector<TuningResult> row_tuning;
    std::vector<TuningResult> col_tuning;
    std::vector<SeriesFailure> failures;

    // One line listing failed indices, empty when every series succeeded.
    std::string failure_summary() const;
};

/// Runs penalty construction, tuning, block extraction and the final
/// estimator for every column of alpha (rows of the data) and beta.
/// A failing series keeps its initial estimate and is listed in `failures`.
SparseEffectsFit fit_sparse_effects(const Matrix& alpha, const Matrix& beta,
                                    const TuningConfig& cfg);

}  // namespace mefm::dafl
