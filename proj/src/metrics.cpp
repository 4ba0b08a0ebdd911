#include "mefm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace mefm::metrics {

double mse(const Vector& truth, const Vector& estimate) {
    if (truth.size() != estimate.size() || truth.size() == 0) {
        throw DimensionError("mse: lengths differ or are zero");
    }
    return (truth - estimate).squaredNorm() / static_cast<double>(truth.size());
}

double mse(const Matrix& truth, const Matrix& estimate) {
    if (truth.rows() != estimate.rows() || truth.cols() != estimate.cols() || truth.size() == 0) {
        throw DimensionError("mse: shapes differ or are empty");
    }
    return (truth - estimate).squaredNorm() / static_cast<double>(truth.size());
}

double mse(const Slices& truth, const Slices& estimate) {
    if (truth.size() != estimate.size() || truth.empty()) {
        throw DimensionError("mse: series lengths differ or are zero");
    }
    require_shape(estimate, truth.front().rows(), truth.front().cols(), "mse estimate");
    require_shape(truth, truth.front().rows(), truth.front().cols(), "mse truth");
    double total = 0.0;
    for (std::size_t t = 0; t < truth.size(); ++t) {
        total += (truth[t] - estimate[t]).squaredNorm();
    }
    return total / static_cast<double>(truth.size() * truth.front().size());
}

namespace {

Matrix projector(const Matrix& q, const char* what) {
    Eigen::ColPivHouseholderQR<Matrix> qr(q);
    if (q.cols() == 0 || qr.rank() < q.cols()) {
        throw NumericalError(std::string("space_distance: ") + what + " is rank deficient");
    }
    const Matrix basis = qr.householderQ() * Matrix::Identity(q.rows(), q.cols());
    return basis * basis.transpose();
}

}  // namespace

double space_distance(const Matrix& q, const Matrix& q_hat) {
    if (q.rows() != q_hat.rows()) {
        throw DimensionError("space_distance: row counts differ");
    }
    const Matrix diff = projector(q, "Q") - projector(q_hat, "Q_hat");
    Eigen::JacobiSVD<Matrix> svd(diff);
    return svd.singularValues()(0);
}

BlockScores block_scores(const std::vector<BlockSets>& truth, const Matrix& estimate,
                         double zero_tol) {
    if (static_cast<Eigen::Index>(truth.size()) != estimate.cols()) {
        throw DimensionError("block_scores: one block set per estimate column required");
    }
    std::size_t dense_hit = 0;
    std::size_t sparse_hit = 0;
    BlockScores out;
    for (Eigen::Index i = 0; i < estimate.cols(); ++i) {
        const BlockSets& b = truth[static_cast<std::size_t>(i)];
        if (b.length() != estimate.rows()) {
            throw DimensionError("block_scores: block length differs from T");
        }
        for (Eigen::Index t = 0; t < estimate.rows(); ++t) {
            const double v = estimate(t, i);
            if (b.sparse[static_cast<std::size_t>(t)]) {
                ++out.sparse_count;
                if (std::abs(v) <= zero_tol) ++sparse_hit;
            } else {
                ++out.dense_count;
                if (v > 0.0) ++dense_hit;
            }
        }
    }
    if (out.dense_count > 0) {
        out.sensitivity = static_cast<double>(dense_hit) / static_cast<double>(out.dense_count);
    }
    if (out.sparse_count > 0) {
        out.specificity = static_cast<double>(sparse_hit) / static_cast<double>(out.sparse_count);
    }
    return out;
}

void ReplicationReport::set(const std::string& name, std::optional<double> value) {
    for (auto& [key, v] : metrics) {
        if (key == name) {
            v = value;
            return;
        }
    }
    metrics.emplace_back(name, value);
}

std::optional<double> ReplicationReport::get(const std::string& name) const {
    for (const auto& [key, v] : metrics) {
        if (key == name) return v;
    }
    return std::nullopt;
}

double median(std::vector<double> values) {
    if (values.empty()) {
        throw PreconditionError("median of an empty list");
    }
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

std::vector<MetricSummary> aggregate(const std::vector<ReplicationReport>& reports) {
    if (reports.empty()) {
        throw PreconditionError("aggregate needs at least one report");
    }
    std::vector<std::string> names;
    for (const ReplicationReport& r : reports) {
        if (!r.failure.empty()) continue;
        for (const auto& entry : r.metrics) {
            if (std::find(names.begin(), names.end(), entry.first) == names.end()) {
                names.push_back(entry.first);
            }
        }
    }
    std::vector<MetricSummary> out;
    for (const std::string& name : names) {
        MetricSummary s;
        s.metric = name;
        std::vector<double> values;
        for (const ReplicationReport& r : reports) {
            if (!r.failure.empty()) continue;
            const std::optional<double> v = r.get(name);
            if (v) {
                values.push_back(*v);
            } else {
                ++s.excluded;
            }
        }
        s.n = values.size();
        if (!values.empty()) {
            s.mean = std::accumulate(values.begin(), values.end(), 0.0) /
                     static_cast<double>(values.size());
            s.median = median(values);
        }
        if (values.size() >= 2) {
            double ss = 0.0;
            for (double v : values) ss += (v - s.mean) * (v - s.mean);
            s.sd = std::sqrt(ss / static_cast<double>(values.size() - 1));
        }
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace mefm::metrics
