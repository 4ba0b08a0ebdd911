#include "mefm/dafl.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace mefm::dafl {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double sign_of(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

// ---------------------------------------------------------------------------
// Monotone piecewise-linear functions for the chain dynamic program.
//
// The function is linear between consecutive knots and may jump at a knot
// from `lo` (left limit) to `hi` (right limit). Outside the knots it is
// extended with the tail slopes.

struct Knot {
    double x;
    double lo;
    double hi;
};

struct Crossing {
    double x;
    std::ptrdiff_t knot;  // index of the knot hit, -1 when inside a segment
};

class MonotonePwl {
public:
    static MonotonePwl zero() { return MonotonePwl({{0.0, 0.0, 0.0}}); }
    // c * sign(x): the message left behind by a coefficient pinned at zero.
    static MonotonePwl step(double c) { return MonotonePwl({{0.0, -c, c}}); }

    // Adds x - y + c sign(x).
    void add_data_term(double y, double c) {
        auto it = std::lower_bound(knots_.begin(), knots_.end(), 0.0,
                                   [](const Knot& k, double x) { return k.x < x; });
        if (it == knots_.end() || it->x != 0.0) {
            const double v = value_between(0.0);
            it = knots_.insert(it, Knot{0.0, v, v});
        }
        for (Knot& k : knots_) {
            const double base = k.x - y;
            if (k.x < 0.0) {
                k.lo += base - c;
                k.hi += base - c;
            } else if (k.x > 0.0) {
                k.lo += base + c;
                k.hi += base + c;
            } else {
                k.lo += base - c;
                k.hi += base + c;
            }
        }
        left_slope_ += 1.0;
        right_slope_ += 1.0;
    }

    // Point where the function passes `level`. Requires positive tail slopes.
    Crossing crossing(double level) const {
        const Knot& first = knots_.front();
        if (level < first.lo) {
            return {first.x - (first.lo - level) / left_slope_, -1};
        }
        for (std::size_t k = 0; k < knots_.size(); ++k) {
            const Knot& cur = knots_[k];
            if (level <= cur.hi) {
                if (level >= cur.lo) {
                    return {cur.x, static_cast<std::ptrdiff_t>(k)};
                }
                const Knot& prev = knots_[k - 1];
                const double frac = (level - prev.hi) / (cur.lo - prev.hi);
                return {prev.x + frac * (cur.x - prev.x), -1};
            }
        }
        const Knot& last = knots_.back();
        return {last.x + (level - last.hi) / right_slope_, -1};
    }

    // Infimal convolution with c|.|, i.e. the derivative clipped to [-c, c].
    // Reports the interval [x_lo, x_hi] on which the function was left intact.
    MonotonePwl clipped(double c, double& x_lo, double& x_hi) const {
        if (!std::isfinite(c)) {
            x_lo = -kInf;
            x_hi = kInf;
            return *this;
        }
        const Crossing lower = crossing(-c);
        const Crossing upper = crossing(c);
        x_lo = lower.x;
        x_hi = upper.x;
        if (lower.knot >= 0 && lower.knot == upper.knot) {
            return MonotonePwl({{x_lo, -c, c}});
        }
        std::vector<Knot> out;
        out.reserve(knots_.size() + 2);
        const double lo_right =
            lower.knot >= 0 ? std::min(knots_[static_cast<std::size_t>(lower.knot)].hi, c) : -c;
        out.push_back({x_lo, -c, lo_right});
        for (const Knot& k : knots_) {
            if (k.x > x_lo && k.x < x_hi) {
                out.push_back(k);
            }
        }
        const double hi_left =
            upper.knot >= 0 ? std::max(knots_[static_cast<std::size_t>(upper.knot)].lo, -c) : c;
        out.push_back({x_hi, hi_left, c});
        return MonotonePwl(std::move(out));
    }

private:
    explicit MonotonePwl(std::vector<Knot> knots) : knots_(std::move(knots)) {}

    // Value at a point that is not a knot.
    double value_between(double x) const {
        const Knot& first = knots_.front();
        if (x < first.x) {
            return first.lo + left_slope_ * (x - first.x);
        }
        const Knot& last = knots_.back();
        if (x > last.x) {
            return last.hi + right_slope_ * (x - last.x);
        }
        auto next = std::lower_bound(knots_.begin(), knots_.end(), x,
                                     [](const Knot& k, double v) { return k.x < v; });
        const Knot& prev = *(next - 1);
        return prev.hi + (next->lo - prev.hi) * (x - prev.x) / (next->x - prev.x);
    }

    std::vector<Knot> knots_;
    double left_slope_ = 0.0;
    double right_slope_ = 0.0;
};

Vector solve_chain(const Vector& y, const PenaltyMatrix& pen, double lambda) {
    const Eigen::Index T = y.size();
    std::vector<double> keep_lo(static_cast<std::size_t>(T), 0.0);
    std::vector<double> keep_hi(static_cast<std::size_t>(T), 0.0);
    std::vector<bool> pinned(static_cast<std::size_t>(T), false);
    Vector theta = Vector::Zero(T);

    MonotonePwl message = MonotonePwl::zero();
    double last = 0.0;
    for (Eigen::Index t = 0; t < T; ++t) {
        const auto ut = static_cast<std::size_t>(t);
        const double lasso = lambda * pen.lasso_weights(t);
        const double fused = t + 1 < T ? lambda * pen.fused_weights(t) : 0.0;
        if (pen.hard_zero[ut] || !std::isfinite(lasso)) {
            pinned[ut] = true;
            if (t + 1 < T) {
                message = MonotonePwl::step(fused);
            }
            continue;
        }
        MonotonePwl g = message;
        g.add_data_term(y(t), lasso);
        if (t + 1 == T) {
            last = g.crossing(0.0).x;
        } else {
            message = g.clipped(fused, keep_lo[ut], keep_hi[ut]);
        }
    }

    theta(T - 1) = pinned.back() ? 0.0 : last;
    for (Eigen::Index t = T - 2; t >= 0; --t) {
        const auto ut = static_cast<std::size_t>(t);
        theta(t) = pinned[ut] ? 0.0 : std::clamp(theta(t + 1), keep_lo[ut], keep_hi[ut]);
    }
    return theta;
}

// ---------------------------------------------------------------------------
// Dual certificate. With m_t the fused multiplier scaled by its weight,
// stationarity reads m_t = m_{t-1} + w_t a_t - (y_t - theta_t), m_{-1} = m_{T-1} = 0.

struct Interval {
    double lo;
    double hi;

    bool empty() const { return lo > hi; }
    Interval operator+(double s) const { return {lo + s, hi + s}; }
    Interval operator+(const Interval& o) const { return {lo + o.lo, hi + o.hi}; }
    Interval intersect(const Interval& o) const {
        return {std::max(lo, o.lo), std::min(hi, o.hi)};
    }
    double clamp(double v) const { return std::clamp(v, lo, hi); }
    // Representative point: midpoint when bounded, otherwise the point nearest 0.
    double pick() const {
        if (std::isfinite(lo) && std::isfinite(hi)) {
            return 0.5 * (lo + hi);
        }
        return clamp(0.0);
    }
};

// Nearest point of `target` to the (disjoint) interval `from`.
double nearest(const Interval& target, const Interval& from) {
    return from.hi < target.lo ? target.lo : target.hi;
}

double active_tolerance(const Vector& y) {
    return 1e-8 * (1.0 + (y.size() ? y.cwiseAbs().maxCoeff() : 0.0));
}

Vector recover_dual(const Vector& y, const PenaltyMatrix& pen, double lambda,
                    const Vector& theta) {
    const Eigen::Index T = y.size();
    const double atol = active_tolerance(y);
    const Vector r = y - theta;

    std::vector<Interval> lasso_set(static_cast<std::size_t>(T));
    for (Eigen::Index t = 0; t < T; ++t) {
        const double w = pen.lasso_weights(t);
        const double c = lambda * w;
        Interval& a = lasso_set[static_cast<std::size_t>(t)];
        if (pen.hard_zero[static_cast<std::size_t>(t)] || !std::isfinite(c)) {
            a = {-kInf, kInf};
        } else if (std::abs(w * theta(t)) <= atol) {
            a = {-c, c};
        } else {
            a = {c * sign_of(theta(t)), c * sign_of(theta(t))};
        }
    }
    std::vector<Interval> fused_set(static_cast<std::size_t>(std::max<Eigen::Index>(T - 1, 0)));
    for (Eigen::Index t = 0; t + 1 < T; ++t) {
        const double v = pen.fused_weights(t);
        const double c = lambda * v;
        const double diff = theta(t + 1) - theta(t);
        Interval& m = fused_set[static_cast<std::size_t>(t)];
        if (pen.hard_fuse[static_cast<std::size_t>(t)] || !std::isfinite(c)) {
            m = {-kInf, kInf};
        } else if (std::abs(v * diff) <= atol) {
            m = {-c, c};
        } else {
            m = {c * sign_of(diff), c * sign_of(diff)};
        }
    }

    // Forward: feasible values of m_t given the equations up to t.
    std::vector<Interval> feasible(fused_set.size());
    Interval prev{0.0, 0.0};
    for (std::size_t t = 0; t < fused_set.size(); ++t) {
        const Interval reach = prev + lasso_set[t] + (-r(static_cast<Eigen::Index>(t)));
        Interval cur = reach.intersect(fused_set[t]);
        if (cur.empty()) {
            const double v = nearest(fused_set[t], reach);
            cur = {v, v};
        }
        feasible[t] = cur;
        prev = cur;
    }

    // Backward: pick m_{t-1} consistent with m_t and a_t in its set.
    Vector m = Vector::Zero(std::max<Eigen::Index>(T - 1, 0));
    Vector wa = Vector::Zero(T);
    double m_next = 0.0;
    for (Eigen::Index t = T - 1; t >= 1; --t) {
        const Interval& a = lasso_set[static_cast<std::size_t>(t)];
        const Interval allowed{m_next + r(t) - a.hi, m_next + r(t) - a.lo};
        const Interval& f = feasible[static_cast<std::size_t>(t - 1)];
        const Interval both = f.intersect(allowed);
        const double m_prev = both.empty() ? nearest(f, allowed) : both.pick();
        wa(t) = a.clamp(m_next - m_prev + r(t));
        m(t - 1) = m_prev;
        m_next = m_prev;
    }
    if (T > 0) {
        wa(0) = lasso_set[0].clamp(m_next + r(0));
    }

    Vector dual = Vector::Zero(pen.row_count());
    for (Eigen::Index t = 0; t + 1 < T; ++t) {
        const double v = pen.fused_weights(t);
        if (!pen.hard_fuse[static_cast<std::size_t>(t)] && std::isfinite(lambda * v)) {
            dual(t) = std::clamp(m(t) / v, -lambda, lambda);
        }
    }
    for (Eigen::Index t = 0; t < T; ++t) {
        const double w = pen.lasso_weights(t);
        if (!pen.hard_zero[static_cast<std::size_t>(t)] && std::isfinite(lambda * w)) {
            dual(T - 1 + t) = std::clamp(wa(t) / w, -lambda, lambda);
        }
    }
    return dual;
}

double objective_value(const Vector& y, const PenaltyMatrix& pen, double lambda,
                       const Vector& theta) {
    const Eigen::Index T = y.size();
    double penalty = 0.0;
    for (Eigen::Index t = 0; t + 1 < T; ++t) {
        if (!pen.hard_fuse[static_cast<std::size_t>(t)]) {
            penalty += pen.fused_weights(t) * std::abs(theta(t + 1) - theta(t));
        }
    }
    for (Eigen::Index t = 0; t < T; ++t) {
        if (!pen.hard_zero[static_cast<std::size_t>(t)]) {
            penalty += pen.lasso_weights(t) * std::abs(theta(t));
        }
    }
    return 0.5 * (y - theta).squaredNorm() + lambda * penalty;
}

void require_finite(const Vector& y) {
    if (!y.allFinite()) {
        throw DataError("effect series contains non-finite values");
    }
}

struct GridEvaluation {
    std::vector<double> cp;
    std::vector<int> dof;
    GenLassoSolution best;
    double best_lambda = 0.0;
};

GridEvaluation evaluate_grid(const Vector& y, const PenaltyMatrix& pen,
                             const std::vector<double>& grid, double sigma2, double tol,
                             bool keep_best) {
    GridEvaluation out;
    out.cp.reserve(grid.size());
    out.dof.reserve(grid.size());
    double best_cp = kInf;
    for (double lambda : grid) {
        GenLassoSolution sol;
        try {
            sol = solve_genlasso(y, pen, lambda, tol);
        } catch (const ConvergenceError& e) {
            std::ostringstream msg;
            msg << e.what() << " (lambda = " << lambda << ")";
            throw ConvergenceError(msg.str(), e.best_iterate(), e.residual());
        }
        const int df = degrees_of_freedom(sol, pen);
        const double cp = cp_statistic(y, sol, pen, sigma2);
        out.cp.push_back(cp);
        out.dof.push_back(df);
        if (keep_best && cp < best_cp) {
            best_cp = cp;
            out.best = std::move(sol);
            out.best_lambda = lambda;
        }
    }
    return out;
}

std::vector<double> grid_for(const Vector& y, const PenaltyMatrix& pen, const TuningConfig& cfg) {
    if (cfg.grid_size < 2) {
        throw PreconditionError("grid size must be at least 2");
    }
    if (!(cfg.lambda_min > 0.0) || !std::isfinite(cfg.lambda_min)) {
        throw PreconditionError("lambda_min must be positive and finite");
    }
    double hi = cfg.lambda_max ? *cfg.lambda_max : default_lambda_max(y, pen);
    if (!cfg.lambda_max && hi <= cfg.lambda_min) {
        hi = 10.0 * cfg.lambda_min;
    }
    return log_grid(cfg.lambda_min, hi, cfg.grid_size);
}

}  // namespace

// ---------------------------------------------------------------------------

bool PenaltyMatrix::is_hard_row(Eigen::Index row) const {
    const Eigen::Index T = length();
    return row < T - 1 ? hard_fuse[static_cast<std::size_t>(row)]
                       : hard_zero[static_cast<std::size_t>(row - (T - 1))];
}

double PenaltyMatrix::row_weight(Eigen::Index row) const {
    const Eigen::Index T = length();
    return row < T - 1 ? fused_weights(row) : lasso_weights(row - (T - 1));
}

PenaltyMatrix build_penalty(const Vector& y) {
    require_finite(y);
    const Eigen::Index T = y.size();
    if (T < 1) {
        throw PreconditionError("effect series is empty");
    }
    if ((y.array() < 0.0).any()) {
        throw PreconditionError("initial effect series must be non-negative");
    }
    PenaltyMatrix pen;
    pen.lasso_weights.resize(T);
    pen.fused_weights.resize(std::max<Eigen::Index>(T - 1, 0));
    pen.hard_zero.assign(static_cast<std::size_t>(T), false);
    pen.hard_fuse.assign(static_cast<std::size_t>(std::max<Eigen::Index>(T - 1, 0)), false);
    for (Eigen::Index t = 0; t < T; ++t) {
        if (y(t) > 0.0) {
            pen.lasso_weights(t) = 1.0 / y(t);
        } else {
            pen.lasso_weights(t) = kInf;
            pen.hard_zero[static_cast<std::size_t>(t)] = true;
        }
    }
    for (Eigen::Index t = 0; t + 1 < T; ++t) {
        const double top = std::max(y(t), y(t + 1));
        if (top > 0.0) {
            pen.fused_weights(t) = 1.0 / top;
        } else {
            pen.fused_weights(t) = kInf;
            pen.hard_fuse[static_cast<std::size_t>(t)] = true;
        }
    }
    return pen;
}

GenLassoSolution solve_genlasso(const Vector& y, const PenaltyMatrix& pen, double lambda,
                                double tol) {
    require_finite(y);
    if (!(lambda > 0.0) || !std::isfinite(lambda)) {
        throw PreconditionError("lambda must be positive and finite");
    }
    if (!(tol > 0.0)) {
        throw PreconditionError("tolerance must be positive");
    }
    if (pen.length() != y.size()) {
        throw DimensionError("penalty built for a series of different length");
    }

    GenLassoSolution sol;
    sol.lambda = lambda;
    sol.theta = solve_chain(y, pen, lambda);
    sol.dual = recover_dual(y, pen, lambda, sol.theta);
    sol.active_set = active_rows(y, pen, sol.theta);
    sol.objective = objective_value(y, pen, lambda, sol.theta);
    sol.kkt_residual = kkt_residual(y, pen, lambda, sol.theta, sol.dual);
    if (!(sol.kkt_residual <= tol)) {
        std::ostringstream msg;
        msg << "generalized lasso certificate residual " << sol.kkt_residual
            << " exceeds tolerance " << tol;
        throw ConvergenceError(msg.str(), sol.theta, sol.kkt_residual);
    }
    return sol;
}

double kkt_residual(const Vector& y, const PenaltyMatrix& pen, double lambda, const Vector& theta,
                    const Vector& dual) {
    const Eigen::Index T = y.size();
    const double atol = active_tolerance(y);
    double worst = 0.0;

    // D' u over finite rows.
    Vector dtu = Vector::Zero(T);
    for (Eigen::Index t = 0; t + 1 < T; ++t) {
        if (!pen.hard_fuse[static_cast<std::size_t>(t)]) {
            const double s = pen.fused_weights(t) * dual(t);
            dtu(t) -= s;
            dtu(t + 1) += s;
        }
    }
    for (Eigen::Index t = 0; t < T; ++t) {
        if (pen.hard_zero[static_cast<std::size_t>(t)]) {
            worst = std::max(worst, std::abs(theta(t)));
        } else {
            dtu(t) += pen.lasso_weights(t) * dual(T - 1 + t);
        }
    }
    for (Eigen::Index t = 0; t < T; ++t) {
        if (!pen.hard_zero[static_cast<std::size_t>(t)]) {
            worst = std::max(worst, std::abs(y(t) - theta(t) - dtu(t)));
        }
    }

    for (Eigen::Index k = 0; k < pen.row_count(); ++k) {
        worst = std::max(worst, std::abs(dual(k)) - lambda);
        if (pen.is_hard_row(k)) {
            continue;
        }
        const double value = k < T - 1 ? pen.fused_weights(k) * (theta(k + 1) - theta(k))
                                       : pen.lasso_weights(k - (T - 1)) * theta(k - (T - 1));
        if (std::abs(value) > atol) {
            worst = std::max(worst, std::abs(dual(k) - lambda * sign_of(value)));
        }
    }
    for (Eigen::Index t = 0; t + 1 < T; ++t) {
        if (pen.hard_fuse[static_cast<std::size_t>(t)]) {
            worst = std::max(worst, std::abs(theta(t + 1) - theta(t)));
        }
    }
    return worst;
}

std::vector<Eigen::Index> active_rows(const Vector& y, const PenaltyMatrix& pen,
                                      const Vector& theta) {
    const Eigen::Index T = y.size();
    const double atol = active_tolerance(y);
    std::vector<Eigen::Index> rows;
    for (Eigen::Index k = 0; k < pen.row_count(); ++k) {
        if (pen.is_hard_row(k)) {
            rows.push_back(k);
            continue;
        }
        const double value = k < T - 1 ? pen.fused_weights(k) * (theta(k + 1) - theta(k))
                                       : pen.lasso_weights(k - (T - 1)) * theta(k - (T - 1));
        if (std::abs(value) <= atol) {
            rows.push_back(k);
        }
    }
    return rows;
}

Matrix normalized_rows(const PenaltyMatrix& pen, const std::vector<Eigen::Index>& rows) {
    const Eigen::Index T = pen.length();
    Matrix out = Matrix::Zero(static_cast<Eigen::Index>(rows.size()), T);
    constexpr double kHalfRoot2 = 0.70710678118654752440;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const Eigen::Index k = rows[i];
        const auto r = static_cast<Eigen::Index>(i);
        if (k < T - 1) {
            out(r, k) = -kHalfRoot2;
            out(r, k + 1) = kHalfRoot2;
        } else {
            out(r, k - (T - 1)) = 1.0;
        }
    }
    return out;
}

NullityResult nullity_svd(const Matrix& rows, Eigen::Index columns) {
    NullityResult out;
    if (rows.rows() == 0) {
        out.nullity = static_cast<int>(columns);
        return out;
    }
    Eigen::BDCSVD<Matrix> svd(rows);
    const Vector& sv = svd.singularValues();
    const double threshold = 1e-10 * sv(0);
    Eigen::Index rank = 0;
    for (Eigen::Index i = 0; i < sv.size(); ++i) {
        if (sv(i) > threshold) {
            ++rank;
        }
        if (sv(i) > 0.1 * threshold && sv(i) < 10.0 * threshold) {
            out.ambiguous = true;
        }
    }
    out.nullity = static_cast<int>(columns - rank);
    return out;
}

int degrees_of_freedom(const GenLassoSolution& sol, const PenaltyMatrix& pen, RankMethod method) {
    const Eigen::Index T = pen.length();
    if (method == RankMethod::Svd) {
        return nullity_svd(normalized_rows(pen, sol.active_set), T).nullity;
    }
    std::vector<bool> fused(static_cast<std::size_t>(std::max<Eigen::Index>(T - 1, 0)), false);
    std::vector<bool> zeroed(static_cast<std::size_t>(T), false);
    for (Eigen::Index k : sol.active_set) {
        if (k < T - 1) {
            fused[static_cast<std::size_t>(k)] = true;
        } else {
            zeroed[static_cast<std::size_t>(k - (T - 1))] = true;
        }
    }
    // Fused groups are runs of indices joined by active fused rows.
    int free_groups = 0;
    bool group_zeroed = false;
    for (Eigen::Index t = 0; t < T; ++t) {
        const auto ut = static_cast<std::size_t>(t);
        group_zeroed = group_zeroed || zeroed[ut];
        const bool closes = t + 1 == T || !fused[ut];
        if (closes) {
            if (!group_zeroed) {
                ++free_groups;
            }
            group_zeroed = false;
        }
    }
    return free_groups;
}

double cp_statistic(const Vector& y, const GenLassoSolution& sol, const PenaltyMatrix& pen,
                    double sigma2_hat) {
    if (sigma2_hat < 0.0) {
        throw PreconditionError("sigma2_hat must be non-negative");
    }
    const double T = static_cast<double>(y.size());
    const double rss = (y - sol.theta).squaredNorm();
    return rss - T * sigma2_hat + 2.0 * sigma2_hat * degrees_of_freedom(sol, pen);
}

double sample_variance(const Vector& y) {
    if (y.size() < 2) {
        return 0.0;
    }
    const double mean = y.mean();
    return (y.array() - mean).square().sum() / static_cast<double>(y.size() - 1);
}

double default_lambda_max(const Vector& y, const PenaltyMatrix& pen) {
    const Eigen::Index T = y.size();
    double best = 0.0;
    for (Eigen::Index t = 0; t + 1 < T; ++t) {
        if (!pen.hard_fuse[static_cast<std::size_t>(t)]) {
            const double v = pen.fused_weights(t);
            best = std::max(best, std::abs(v * (y(t + 1) - y(t))) / (2.0 * v * v));
        }
    }
    for (Eigen::Index t = 0; t < T; ++t) {
        if (!pen.hard_zero[static_cast<std::size_t>(t)]) {
            const double w = pen.lasso_weights(t);
            best = std::max(best, std::abs(w * y(t)) / (w * w));
        }
    }
    return best;
}

std::vector<double> log_grid(double lo, double hi, int size) {
    if (!(lo > 0.0) || !(hi > lo) || !std::isfinite(hi)) {
        throw PreconditionError("lambda grid needs 0 < lambda_min < lambda_max");
    }
    if (size < 2) {
        throw PreconditionError("grid size must be at least 2");
    }
    std::vector<double> grid(static_cast<std::size_t>(size));
    const double step = (std::log(hi) - std::log(lo)) / (size - 1);
    for (int i = 0; i < size; ++i) {
        grid[static_cast<std::size_t>(i)] = std::exp(std::log(lo) + step * i);
    }
    grid.front() = lo;
    grid.back() = hi;
    return grid;
}

TuningResult tune_lambda(const Vector& y, const TuningConfig& cfg) {
    const PenaltyMatrix pen = build_penalty(y);
    TuningResult out;
    out.lambda_grid = grid_for(y, pen, cfg);
    out.sigma2_hat = sample_variance(y);
    GridEvaluation eval = evaluate_grid(y, pen, out.lambda_grid, out.sigma2_hat, cfg.tol, true);
    out.cp_values = std::move(eval.cp);
    out.dof = std::move(eval.dof);
    out.chosen_lambda = eval.best_lambda;
    out.solution = std::move(eval.best);
    return out;
}

BlockSets extract_blocks(const Vector& theta, double zero_tol) {
    BlockSets out;
    out.sparse.resize(static_cast<std::size_t>(theta.size()));
    for (Eigen::Index t = 0; t < theta.size(); ++t) {
        out.sparse[static_cast<std::size_t>(t)] = theta(t) <= zero_tol;
    }
    return out;
}

Vector final_effects(const Vector& y, const BlockSets& blocks) {
    if (blocks.length() != y.size()) {
        throw DimensionError("block sets and effect series differ in length");
    }
    Vector out = Vector::Zero(y.size());
    for (Eigen::Index t = 0; t < y.size(); ++t) {
        if (!blocks.sparse[static_cast<std::size_t>(t)]) {
            out(t) = y(t);
        }
    }
    return out;
}

std::string SparseEffectsFit::failure_summary() const {
    if (failures.empty()) {
        return {};
    }
    std::ostringstream msg;
    msg << failures.size() << " effect series failed:";
    for (const SeriesFailure& f : failures) {
        msg << ' ' << (f.axis == 'r' ? "row" : "col") << ' ' << f.index + 1;
    }
    return msg.str();
}

namespace {

struct AxisFit {
    Matrix dafl;
    Matrix final;
    std::vector<BlockSets> blocks;
    std::vector<TuningResult> tuning;
};

void finish_series(const Vector& y, TuningResult tr, Eigen::Index i, AxisFit& out) {
    const Vector& theta = tr.solution.theta;
    BlockSets blocks = extract_blocks(theta);
    out.dafl.col(i) = theta;
    out.final.col(i) = final_effects(y, blocks);
    out.blocks[static_cast<std::size_t>(i)] = std::move(blocks);
    out.tuning[static_cast<std::size_t>(i)] = std::move(tr);
}

// Fallback for a failed series: the initial estimate with its exact zeros.
void keep_initial(const Vector& y, Eigen::Index i, AxisFit& out) {
    out.dafl.col(i) = y;
    out.final.col(i) = y;
    out.blocks[static_cast<std::size_t>(i)] = extract_blocks(y);
}

AxisFit fit_axis(const Matrix& effects, const TuningConfig& cfg, char axis,
                 std::vector<SeriesFailure>& failures) {
    const Eigen::Index T = effects.rows();
    const Eigen::Index n = effects.cols();
    AxisFit out{Matrix::Zero(T, n), Matrix::Zero(T, n), std::vector<BlockSets>(n),
                std::vector<TuningResult>(n)};

    if (cfg.mode == TuningMode::PerIndex) {
        for (Eigen::Index i = 0; i < n; ++i) {
            const Vector y = effects.col(i);
            try {
                finish_series(y, tune_lambda(y, cfg), i, out);
            } catch (const Error& e) {
                failures.push_back({axis, i, e.what()});
                keep_initial(y, i, out);
            }
        }
        return out;
    }

    // Aggregated: one lambda per axis minimising the summed Cp.
    std::vector<PenaltyMatrix> pens(static_cast<std::size_t>(n));
    std::vector<bool> ok(static_cast<std::size_t>(n), true);
    double hi = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        try {
            pens[static_cast<std::size_t>(i)] = build_penalty(effects.col(i));
            hi = std::max(hi, default_lambda_max(effects.col(i), pens[static_cast<std::size_t>(i)]));
        } catch (const Error& e) {
            failures.push_back({axis, i, e.what()});
            ok[static_cast<std::size_t>(i)] = false;
        }
    }
    TuningConfig shared = cfg;
    if (!shared.lambda_max) {
        shared.lambda_max = hi > cfg.lambda_min ? hi : 10.0 * cfg.lambda_min;
    }
    const std::vector<double> grid =
        log_grid(shared.lambda_min, *shared.lambda_max, shared.grid_size);

    std::vector<double> total(grid.size(), 0.0);
    std::vector<GridEvaluation> evals(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto ui = static_cast<std::size_t>(i);
        if (!ok[ui]) continue;
        const Vector y = effects.col(i);
        try {
            evals[ui] = evaluate_grid(y, pens[ui], grid, sample_variance(y), cfg.tol, false);
            for (std::size_t g = 0; g < grid.size(); ++g) total[g] += evals[ui].cp[g];
        } catch (const Error& e) {
            failures.push_back({axis, i, e.what()});
            ok[ui] = false;
        }
    }
    const auto best = static_cast<std::size_t>(
        std::min_element(total.begin(), total.end()) - total.begin());

    for (Eigen::Index i = 0; i < n; ++i) {
        const auto ui = static_cast<std::size_t>(i);
        const Vector y = effects.col(i);
        if (!ok[ui]) {
            keep_initial(y, i, out);
            continue;
        }
        TuningResult tr;
        tr.lambda_grid = grid;
        tr.cp_values = std::move(evals[ui].cp);
        tr.dof = std::move(evals[ui].dof);
        tr.sigma2_hat = sample_variance(y);
        tr.chosen_lambda = grid[best];
        try {
            tr.solution = solve_genlasso(y, pens[ui], tr.chosen_lambda, cfg.tol);
            finish_series(y, std::move(tr), i, out);
        } catch (const Error& e) {
            failures.push_back({axis, i, e.what()});
            keep_initial(y, i, out);
        }
    }
    return out;
}

}  // namespace

SparseEffectsFit fit_sparse_effects(const Matrix& alpha, const Matrix& beta,
                                    const TuningConfig& cfg) {
    if (alpha.rows() != beta.rows()) {
        throw DimensionError("alpha and beta cover different series lengths");
    }
    SparseEffectsFit fit;
    AxisFit rows = fit_axis(alpha, cfg, 'r', fit.failures);
    AxisFit cols = fit_axis(beta, cfg, 'c', fit.failures);
    fit.alpha_dafl = std::move(rows.dafl);
    fit.alpha_final = std::move(rows.final);
    fit.row_blocks = std::move(rows.blocks);
    fit.row_tuning = std::move(rows.tuning);
    fit.beta_dafl = std::move(cols.dafl);
    fit.beta_final = std::move(cols.final);
    fit.col_blocks = std::move(cols.blocks);
    fit.col_tuning = std::move(cols.tuning);
    return fit;
}

}  // namespace mefm::dafl
