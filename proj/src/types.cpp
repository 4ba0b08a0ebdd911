#include "mefm/types.hpp"

#include <string>

namespace mefm {

MatrixSeries::MatrixSeries(Slices slices) : slices_(std::move(slices)) {
    if (slices_.size() < 2) {
        throw DataError("matrix series needs T >= 2, got T = " + std::to_string(slices_.size()));
    }
    const Eigen::Index p = slices_.front().rows();
    const Eigen::Index q = slices_.front().cols();
    if (p < 2 || q < 2) {
        throw DataError("matrix series needs p, q >= 2, got " + std::to_string(p) + " x " +
                        std::to_string(q));
    }
    for (std::size_t t = 0; t < slices_.size(); ++t) {
        const Matrix& x = slices_[t];
        if (x.rows() != p || x.cols() != q) {
            throw DataError("slice " + std::to_string(t + 1) + " has shape " +
                            std::to_string(x.rows()) + " x " + std::to_string(x.cols()) +
                            ", expected " + std::to_string(p) + " x " + std::to_string(q));
        }
        if (!x.allFinite()) {
            throw DataError("slice " + std::to_string(t + 1) + " contains non-finite values");
        }
    }
}

void require_shape(const Slices& slices, Eigen::Index rows, Eigen::Index cols, const char* what) {
    for (std::size_t t = 0; t < slices.size(); ++t) {
        if (slices[t].rows() != rows || slices[t].cols() != cols) {
            throw DimensionError(std::string(what) + ": slice " + std::to_string(t + 1) +
                                 " is " + std::to_string(slices[t].rows()) + " x " +
                                 std::to_string(slices[t].cols()) + ", expected " +
                                 std::to_string(rows) + " x " + std::to_string(cols));
        }
    }
}

std::vector<Eigen::Index> BlockSets::sparse_indices() const {
    std::vector<Eigen::Index> out;
    for (std::size_t t = 0; t < sparse.size(); ++t) {
        if (sparse[t]) out.push_back(static_cast<Eigen::Index>(t));
    }
    return out;
}

std::vector<Eigen::Index> BlockSets::dense_indices() const {
    std::vector<Eigen::Index> out;
    for (std::size_t t = 0; t < sparse.size(); ++t) {
        if (!sparse[t]) out.push_back(static_cast<Eigen::Index>(t));
    }
    return out;
}

}  // namespace mefm
