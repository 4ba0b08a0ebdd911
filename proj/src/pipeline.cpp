#include "mefm/pipeline.hpp"

#include <atomic>
#include <chrono>
#include <cstdio>
#include <mutex>
#include <thread>

#include "mefm/io.hpp"

namespace mefm {

FitResult fit(const MatrixSeries& x, const FitConfig& cfg) {
    FitResult out;
    out.initial = initial_effects(x);
    out.residuals = residual_series(x, out.initial);
    out.factors = estimate_loadings(out.residuals, cfg.model);
    out.components = estimate_factors(x, out.residuals, out.factors);
    out.factors.f_z = out.components.f_z;
    out.sparse = dafl::fit_sparse_effects(out.initial.alpha, out.initial.beta, cfg.tuning);
    return out;
}

namespace {

std::vector<double> chosen_lambdas(const std::vector<dafl::TuningResult>& tuning) {
    std::vector<double> out;
    out.reserve(tuning.size());
    for (const dafl::TuningResult& t : tuning) out.push_back(t.chosen_lambda);
    return out;
}

std::vector<BlockSets> zero_blocks(const Matrix& effects) {
    std::vector<BlockSets> out(static_cast<std::size_t>(effects.cols()));
    for (Eigen::Index i = 0; i < effects.cols(); ++i) {
        auto& s = out[static_cast<std::size_t>(i)].sparse;
        s.resize(static_cast<std::size_t>(effects.rows()));
        for (Eigen::Index t = 0; t < effects.rows(); ++t) {
            s[static_cast<std::size_t>(t)] = effects(t, i) == 0.0;
        }
    }
    return out;
}

}  // namespace

Estimates estimates_of(const FitResult& f) {
    Estimates e;
    e.mu = f.initial.mu;
    e.alpha_init = f.initial.alpha;
    e.beta_init = f.initial.beta;
    e.alpha_final = f.sparse.alpha_final;
    e.beta_final = f.sparse.beta_final;
    e.q_r = f.factors.q_r;
    e.q_c = f.factors.q_c;
    e.common = f.components.common;
    e.lambda_rows = chosen_lambdas(f.sparse.row_tuning);
    e.lambda_cols = chosen_lambdas(f.sparse.col_tuning);
    return e;
}

Truth truth_of(const sim::SimulatedDataset& data) {
    return {data.truth, data.a_r, data.a_c};
}

metrics::ReplicationReport evaluate(const Estimates& est, const Truth& truth) {
    const MEFMComponents& c = truth.components;
    metrics::ReplicationReport r;
    r.set("mse_mu", metrics::mse(c.mu, est.mu));
    r.set("mse_alpha_init", metrics::mse(c.alpha, est.alpha_init));
    r.set("mse_beta_init", metrics::mse(c.beta, est.beta_init));
    r.set("mse_alpha_final", metrics::mse(c.alpha, est.alpha_final));
    r.set("mse_beta_final", metrics::mse(c.beta, est.beta_final));
    if (!est.common.empty()) {
        r.set("mse_common", metrics::mse(c.common, est.common));
    }
    if (truth.a_r.size() && est.q_r.size()) {
        r.set("distance_row", metrics::space_distance(truth.a_r, est.q_r));
    }
    if (truth.a_c.size() && est.q_c.size()) {
        r.set("distance_col", metrics::space_distance(truth.a_c, est.q_c));
    }
    const metrics::BlockScores sa = metrics::block_scores(zero_blocks(c.alpha), est.alpha_final);
    const metrics::BlockScores sb = metrics::block_scores(zero_blocks(c.beta), est.beta_final);
    r.set("sensitivity_alpha", sa.sensitivity);
    r.set("specificity_alpha", sa.specificity);
    r.set("sensitivity_beta", sb.sensitivity);
    r.set("specificity_beta", sb.specificity);
    r.lambda_rows = est.lambda_rows;
    r.lambda_cols = est.lambda_cols;
    return r;
}

metrics::ReplicationReport run_replication(const sim::DGPConfig& dgp,
                                           const dafl::TuningConfig& tuning, std::size_t rep) {
    const auto start = std::chrono::steady_clock::now();
    metrics::ReplicationReport report;
    try {
        const sim::SimulatedDataset data = sim::assemble_dataset(dgp, rep);
        FitConfig cfg;
        cfg.model.k_r = dgp.k_r;
        cfg.model.k_c = dgp.k_c;
        cfg.tuning = tuning;
        const FitResult f = fit(data.x, cfg);
        report = evaluate(estimates_of(f), truth_of(data));
    } catch (const Error& e) {
        report = {};
        report.failure = e.what();
    }
    report.replication = rep;
    report.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return report;
}

std::filesystem::path report_path(const std::filesystem::path& output, std::size_t rep) {
    char name[32];
    std::snprintf(name, sizeof name, "rep_%04zu.json", rep);
    return output / "reps" / name;
}

ExperimentResult run_experiment(const ExperimentSpec& spec) {
    if (spec.reps < 1) {
        throw PreconditionError("replication count must be at least 1");
    }
    spec.dgp.validate();
    ExperimentResult out;
    out.reports.resize(spec.reps);
    std::vector<bool> done(spec.reps, false);
    const bool persist = !spec.output.empty();

    if (persist && spec.resume) {
        for (std::size_t rep = 0; rep < spec.reps; ++rep) {
            const auto path = report_path(spec.output, rep);
            if (!std::filesystem::exists(path)) continue;
            try {
                metrics::ReplicationReport r = io::read_report_json(path);
                if (r.replication == rep && r.failure.empty()) {
                    out.reports[rep] = std::move(r);
                    done[rep] = true;
                    ++out.resumed;
                }
            } catch (const Error&) {
                // unreadable leftovers are simply rerun
            }
        }
    }

    std::atomic<std::size_t> next{0};
    std::mutex io_error_mutex;
    std::string io_error;
    auto worker = [&] {
        for (std::size_t rep = next++; rep < spec.reps; rep = next++) {
            if (done[rep]) continue;
            metrics::ReplicationReport r = run_replication(spec.dgp, spec.tuning, rep);
            if (persist) {
                try {
                    io::write_report_json(report_path(spec.output, rep), r);
                } catch (const IoError& e) {
                    std::lock_guard<std::mutex> lock(io_error_mutex);
                    if (io_error.empty()) io_error = e.what();
                }
            }
            out.reports[rep] = std::move(r);
        }
    };

    unsigned threads = spec.threads ? spec.threads : std::thread::hardware_concurrency();
    threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(spec.reps)));
    std::vector<std::thread> pool;
    for (unsigned k = 1; k < threads; ++k) pool.emplace_back(worker);
    worker();
    for (std::thread& t : pool) t.join();
    if (!io_error.empty()) {
        throw IoError(io_error);
    }

    for (const metrics::ReplicationReport& r : out.reports) {
        if (!r.failure.empty()) ++out.failures;
    }
    if (out.failures == spec.reps) {
        throw NumericalError("every replication failed; first error: " + out.reports[0].failure);
    }
    out.summary = metrics::aggregate(out.reports);
    metrics::MetricSummary failed;
    failed.metric = "failed_replications";
    failed.mean = failed.median = static_cast<double>(out.failures);
    failed.n = spec.reps;
    out.summary.push_back(failed);

    if (persist) {
        io::write_summary_csv(spec.output / "summary.csv", spec.dgp.name, out.summary);
    }
    return out;
}

}  // namespace mefm
