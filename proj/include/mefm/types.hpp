#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Dense>

#include "mefm/errors.hpp"

namespace mefm {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// A T-long sequence of equally sized matrices, indexed by time first.
using Slices = std::vector<Matrix>;

/// Observed matrix-valued time series X_1, ..., X_T with X_t of size p x q.
///
/// Construction validates the data: T, p, q >= 2, all slices the same shape
/// and every entry finite. Instances are immutable afterwards.
class MatrixSeries {
public:
    MatrixSeries() = default;
    explicit MatrixSeries(Slices slices);

    std::size_t length() const { return slices_.size(); }
    Eigen::Index rows() const { return slices_.empty() ? 0 : slices_.front().rows(); }
    Eigen::Index cols() const { return slices_.empty() ? 0 : slices_.front().cols(); }

    const Matrix& operator[](std::size_t t) const { return slices_[t]; }
    const Slices& slices() const { return slices_; }

    auto begin() const { return slices_.begin(); }
    auto end() const { return slices_.end(); }

private:
    Slices slices_;
};

/// Sparse (zero) and dense time points of one main-effect series.
struct BlockSets {
    std::vector<bool> sparse;  // sparse[t] <=> effect is zero at t; dense is the complement

    Eigen::Index length() const { return static_cast<Eigen::Index>(sparse.size()); }
    std::vector<Eigen::Index> sparse_indices() const;
    std::vector<Eigen::Index> dense_indices() const;
};

// Throws DimensionError unless all slices are rows x cols.
void require_shape(const Slices& slices, Eigen::Index rows, Eigen::Index cols, const char* what);

}  // namespace mefm
