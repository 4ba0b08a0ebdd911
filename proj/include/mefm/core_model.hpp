#pragma once

#include <string>
#include <vector>

#include "mefm/types.hpp"

namespace mefm {

/// Closed-form effect estimates, one row per time point.
struct InitialEffects {
    Vector mu;     // length T
    Matrix alpha;  // T x p, each row has minimum exactly 0
    Matrix beta;   // T x q, each row has minimum exactly 0
};

/// Noise-free components of the model
///   X_t = mu_t 1 1' + alpha_t 1' + 1 beta_t' + C_t.
struct MEFMComponents {
    Vector mu;
    Matrix alpha;  // T x p
    Matrix beta;   // T x q
    Slices common;

    // Throws IdentificationError if some alpha_t or beta_t has a negative
    // entry or a nonzero minimum, DimensionError on inconsistent shapes.
    void validate() const;
};

enum class SignConvention { LargestMagnitudePositive };

struct ModelConfig {
    int k_r = 1;
    int k_c = 1;
    SignConvention sign = SignConvention::LargestMagnitudePositive;
};

/// Loadings and factors recovered from the double-centred residuals.
struct FactorEstimate {
    Matrix q_r;   // p x k_r, orthonormal columns
    Matrix q_c;   // q x k_c, orthonormal columns
    Slices f_z;   // k_r x k_c per t; empty until estimate_factors runs
    Vector eig_r; // top k_r eigenvalues, nonincreasing
    Vector eig_c;
    std::vector<std::string> warnings;
};

struct FactorComponents {
    Slices f_z;     // Q_r' L_t Q_c
    Slices common;  // Q_r Q_r' X_t Q_c Q_c'
};

InitialEffects initial_effects(const MatrixSeries& x);

// L_t = X_t - mu_t 1 1' - alpha_t 1' - 1 beta_t'. Equals M_p X_t M_q.
Slices residual_series(const MatrixSeries& x, const InitialEffects& effects);

/// Top eigenvectors of T^-1 sum L_t L_t' (rows) and T^-1 sum L_t' L_t (columns).
///
/// The scatter matrices are accumulated in ascending t. Each eigenvector is
/// sign-normalised so that its largest-magnitude entry is positive (lowest
/// index wins ties). A warning is attached when the k-th and (k+1)-th
/// eigenvalues coincide, since the subspace is then not unique.
///
/// Throws PreconditionError when k_r >= p or k_c >= q and NumericalError
/// when every residual is zero.
FactorEstimate estimate_loadings(const Slices& residuals, const ModelConfig& cfg);

FactorComponents estimate_factors(const MatrixSeries& x, const Slices& residuals,
                                  const FactorEstimate& fe);

// Builds X_t from its components. Validates identification first.
MatrixSeries reconstruct(const MEFMComponents& components);

// Splits a noiseless series into identified components: effects from the
// row/column means, common part from double centring.
MEFMComponents decompose(const Slices& noiseless);

// M_a X M_b with M_a = I - 1 1'/a.
Matrix double_center(const Matrix& x);

// Flips columns so that each one's largest-magnitude entry is positive.
void fix_signs(Matrix& vectors);

}  // namespace mefm
