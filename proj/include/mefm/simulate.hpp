#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "mefm/core_model.hpp"
#include "mefm/types.hpp"

namespace mefm::sim {

// SplitMix64 finaliser; used to derive independent seeds.
std::uint64_t mix64(std::uint64_t x);

// Seed for stream `stream` of replication `replication` under `master`.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t replication, std::uint64_t stream);

// Component streams of one dataset. Each draws from its own generator so
// that switching a component off leaves the others unchanged.
enum class Stream : std::uint64_t {
    BaseEffect = 1,
    RowEffects = 2,
    ColEffects = 3,
    Loadings = 4,
    Factors = 5,
    Noise = 6,
};

/// 64-bit Mersenne twister with the distributions the generator needs.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    double normal() { return normal_(engine_); }
    double normal(double mean, double sd) { return mean + sd * normal_(engine_); }
    double uniform() { return uniform_(engine_); }
    bool bernoulli(double p) { return uniform() < p; }

private:
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
    std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

struct Ar2 {
    double phi1 = 0.0;
    double phi2 = 0.0;

    bool stationary() const;
    // Stationary standard deviation for unit innovation variance.
    double stationary_sd() const;
};

struct DGPConfig {
    std::string name = "custom";
    int T = 100;
    int p = 40;
    int q = 40;
    int k_r = 1;
    int k_c = 2;
    int k_er = 2;
    int k_ec = 2;
    Ar2 ar_f{0.5, -0.3};
    Ar2 ar_e{-0.4, 0.4};
    Ar2 ar_eps{0.6, 0.2};
    std::vector<double> zeta_r{0.0};
    std::vector<double> zeta_c{0.0, 0.0};
    double m_alpha = 1.0;
    double m_beta = 1.0;
    double sigma_alpha = 1.0;
    double sigma_beta = 1.0;
    double pi_s = 0.4;
    double pi_b = 0.8;
    double noise_loading_sparsity = 0.95;
    double mu_mean = 2.0;
    double mu_sd = 1.0;
    std::uint64_t seed = 1;
    bool temporal_independence = false;
    bool include_factors = true;
    bool include_noise = true;

    // Throws PreconditionError describing the first violated constraint.
    void validate() const;
};

struct SimulatedDataset {
    MatrixSeries x;
    MEFMComponents truth;
    std::vector<BlockSets> row_blocks;  // per row index i, from alpha*
    std::vector<BlockSets> col_blocks;  // per column index j, from beta*
    Matrix a_r;
    Matrix a_c;
    Matrix a_er;
    Matrix a_ec;
    Matrix sigma_eps;
};

struct NoiseDraw {
    Slices noise;
    Matrix a_er;
    Matrix a_ec;
    Matrix sigma_eps;
};

struct Prop1Oracles {
    double p_star;              // stationary probability of the zero state
    double expected_block_len;  // mean length of a run of zeros
};

// Unit-variance stationary AR(2): 100 burn-in steps, then division by the
// theoretical stationary sd. Throws PreconditionError if not stationary.
Vector gen_ar2_standardized(int n, const Ar2& coeffs, Rng& rng);

// M_dim U B with U iid N(0,1) and B = diag(dim^-zeta_k).
Matrix gen_loadings(int dim, const std::vector<double>& zeta, Rng& rng);

// E_t = A_er F_et A_ec' + Sigma_eps o eps_t with sparse noise loadings.
NoiseDraw gen_noise(int T, int p, int q, const DGPConfig& cfg, Rng& rng);

/// Sparse non-negative effect series from a two-state Markov chain.
///
/// The chain starts from its stationary law (zero with probability p*),
/// stays at zero with probability pi_s and stays dense with probability
/// pi_b. Dense values are |N(m, sigma^2)|; values below `threshold` are
/// then set to zero.
Vector gen_sparse_effect_series(int T, double pi_s, double pi_b, double m, double sigma,
                                double threshold, Rng& rng);

SimulatedDataset assemble_dataset(const DGPConfig& cfg);

// As assemble_dataset, with every stream seeded from (master, replication).
SimulatedDataset assemble_dataset(const DGPConfig& cfg, std::uint64_t replication);

Prop1Oracles prop1_oracles(double pi_s, double pi_b);

// Replaces the minimum of each row by zero if it is not zero already
// (lowest index on ties).
void enforce_zero_minimum(Matrix& effects);

// Named presets Ia..Ie, IIa..IIe, IIIa..IIIg.
std::vector<std::string> scenario_names();
DGPConfig scenario(const std::string& name);

std::map<std::string, std::string> to_key_values(const DGPConfig& cfg);
// Starts from the preset named by "scenario" (if present), then applies keys.
DGPConfig from_key_values(const std::map<std::string, std::string>& kv);

}  // namespace mefm::sim
