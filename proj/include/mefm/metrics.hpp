#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mefm/types.hpp"

namespace mefm::metrics {

// sum_t |theta_t - theta_hat_t|^2 / (T d). A vector counts as d = 1,
// a T x d matrix stores theta_t in row t.
double mse(const Vector& truth, const Vector& estimate);
double mse(const Matrix& truth, const Matrix& estimate);
double mse(const Slices& truth, const Slices& estimate);

/// Spectral norm of the difference between the orthogonal projectors onto
/// span(q) and span(q_hat). Throws NumericalError for rank-deficient input.
double space_distance(const Matrix& q, const Matrix& q_hat);

struct BlockScores {
    std::optional<double> sensitivity;  // empty when no entry is truly dense
    std::optional<double> specificity;  // empty when no entry is truly sparse
    std::size_t dense_count = 0;
    std::size_t sparse_count = 0;
};

// truth[i] describes column i of the T x d estimate.
BlockScores block_scores(const std::vector<BlockSets>& truth, const Matrix& estimate,
                         double zero_tol = 1e-10);

/// Scores of one replication. Metrics keep insertion order; an empty value
/// marks an undefined score.
struct ReplicationReport {
    std::size_t replication = 0;
    std::vector<std::pair<std::string, std::optional<double>>> metrics;
    std::vector<double> lambda_rows;  // chosen lambda per row-effect series
    std::vector<double> lambda_cols;
    double seconds = 0.0;
    std::string failure;  // nonempty when the replication did not finish

    void set(const std::string& name, std::optional<double> value);
    std::optional<double> get(const std::string& name) const;
};

struct MetricSummary {
    std::string metric;
    double mean = 0.0;
    std::optional<double> sd;  // needs n >= 2
    double median = 0.0;
    std::size_t n = 0;
    std::size_t excluded = 0;  // reports where the metric was undefined
};

/// Mean, sd (denominator n - 1) and median of every metric, in the order
/// metrics first appear. Failed reports are skipped. Throws
/// PreconditionError on an empty list.
std::vector<MetricSummary> aggregate(const std::vector<ReplicationReport>& reports);

double median(std::vector<double> values);

}  // namespace mefm::metrics
