#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "mefm/core_model.hpp"
#include "mefm/dafl.hpp"
#include "mefm/metrics.hpp"
#include "mefm/simulate.hpp"

namespace mefm {

struct FitConfig {
    ModelConfig model;
    dafl::TuningConfig tuning;
};

struct FitResult {
    InitialEffects initial;
    Slices residuals;
    FactorEstimate factors;
    FactorComponents components;
    dafl::SparseEffectsFit sparse;
};

// Initial effects, loadings, factors and DAFL sparse effects in one pass.
FitResult fit(const MatrixSeries& x, const FitConfig& cfg);

/// Everything evaluate() compares; loadable from the files cmd_fit writes.
struct Estimates {
    Vector mu;
    Matrix alpha_init;
    Matrix beta_init;
    Matrix alpha_final;
    Matrix beta_final;
    Matrix q_r;
    Matrix q_c;
    Slices common;
    std::vector<double> lambda_rows;
    std::vector<double> lambda_cols;
};

struct Truth {
    MEFMComponents components;
    Matrix a_r;  // may be empty, then no space distance is reported
    Matrix a_c;
};

Estimates estimates_of(const FitResult& fit);
Truth truth_of(const sim::SimulatedDataset& data);

// True blocks are read off the zeros of the true effects.
metrics::ReplicationReport evaluate(const Estimates& est, const Truth& truth);

// Simulate replication `rep`, fit with k_r/k_c taken from the DGP, evaluate.
// Errors are caught and recorded in the report's failure field.
metrics::ReplicationReport run_replication(const sim::DGPConfig& dgp,
                                           const dafl::TuningConfig& tuning, std::size_t rep);

struct ExperimentSpec {
    sim::DGPConfig dgp;
    std::size_t reps = 1;
    dafl::TuningConfig tuning;
    unsigned threads = 0;  // 0: hardware concurrency
    std::filesystem::path output;  // empty: keep reports in memory only
    bool resume = false;
};

struct ExperimentResult {
    std::vector<metrics::ReplicationReport> reports;  // indexed by replication
    std::vector<metrics::MetricSummary> summary;
    std::size_t failures = 0;
    std::size_t resumed = 0;
};

/// Runs every replication (concurrently), writes output/reps/rep_NNNN.json
/// per replication and output/summary.csv. With `resume`, replications
/// whose report file already parses are loaded instead of rerun. The
/// summary does not depend on thread count or scheduling.
ExperimentResult run_experiment(const ExperimentSpec& spec);

std::filesystem::path report_path(const std::filesystem::path& output, std::size_t rep);

}  // namespace mefm
