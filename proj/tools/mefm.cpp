// mefm: simulate, fit and evaluate main effect matrix factor models.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "mefm/io.hpp"
#include "mefm/pipeline.hpp"

namespace fs = std::filesystem;
using namespace mefm;

namespace {

enum Exit { kOk = 0, kUsage = 1, kIo = 2, kNumerical = 3 };

struct Globals {
    std::optional<std::uint64_t> seed;
    unsigned threads = 0;
    std::string output;
    std::string format = "csv";
};

struct TuningFlags {
    int grid_size = 30;
    double lambda_min = 1e-4;
    std::optional<double> lambda_max;
    double tol = 1e-8;
    std::string mode = "per-index";

    dafl::TuningConfig config() const {
        dafl::TuningConfig c;
        c.grid_size = grid_size;
        c.lambda_min = lambda_min;
        c.lambda_max = lambda_max;
        c.tol = tol;
        c.mode = mode == "aggregated" ? dafl::TuningMode::Aggregated : dafl::TuningMode::PerIndex;
        return c;
    }
};

void add_tuning_flags(CLI::App* cmd, TuningFlags& t) {
    cmd->add_option("--grid-size", t.grid_size, "number of lambda grid points")
        ->check(CLI::Range(2, 100000));
    cmd->add_option("--lambda-min", t.lambda_min, "smallest grid lambda")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--lambda-max", t.lambda_max, "largest grid lambda (default: per series)")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--tol", t.tol, "KKT tolerance")->check(CLI::PositiveNumber);
    cmd->add_option("--tuning", t.mode, "lambda per series or one per axis")
        ->check(CLI::IsMember({"per-index", "aggregated"}));
}

io::TensorFormat tensor_format(const Globals& g) {
    return g.format == "bin" ? io::TensorFormat::Binary : io::TensorFormat::Csv;
}

std::string tensor_name(const std::string& stem, const Globals& g) {
    return stem + (g.format == "bin" ? ".bin" : ".csv");
}

fs::path output_dir(const Globals& g) {
    if (g.output.empty()) {
        throw PreconditionError("--output is required");
    }
    return g.output;
}

sim::DGPConfig load_dgp(const std::string& scenario, const std::string& config_file,
                        const Globals& g) {
    sim::DGPConfig cfg;
    if (!config_file.empty()) {
        io::KeyValues kv = io::read_key_values(config_file);
        if (!scenario.empty()) kv["scenario"] = scenario;
        cfg = sim::from_key_values(kv);
    } else {
        cfg = sim::scenario(scenario.empty() ? "Ia" : scenario);
    }
    if (g.seed) cfg.seed = *g.seed;
    return cfg;
}

fs::path existing_tensor(const fs::path& dir, const std::string& stem) {
    for (const char* ext : {".csv", ".bin"}) {
        fs::path p = dir / (stem + ext);
        if (fs::exists(p)) return p;
    }
    throw IoError("no " + stem + ".csv or " + stem + ".bin in " + dir.string());
}

int cmd_simulate(const Globals& g, const std::string& scenario, const std::string& config_file,
                 std::uint64_t replication) {
    const sim::DGPConfig cfg = load_dgp(scenario, config_file, g);
    const fs::path out = output_dir(g);
    const sim::SimulatedDataset data = sim::assemble_dataset(cfg, replication);
    const fs::path truth = out / "truth";
    io::write_tensor(out / tensor_name("x", g), data.x.slices(), tensor_format(g));
    io::write_key_values(out / "config.txt", sim::to_key_values(cfg));
    io::write_effects_csv(truth / "mu.csv", data.truth.mu);
    io::write_effects_csv(truth / "alpha.csv", data.truth.alpha);
    io::write_effects_csv(truth / "beta.csv", data.truth.beta);
    io::write_tensor(truth / tensor_name("common", g), data.truth.common, tensor_format(g));
    io::write_matrix_csv(truth / "a_r.csv", data.a_r);
    io::write_matrix_csv(truth / "a_c.csv", data.a_c);
    io::write_blocks_csv(truth / "row_blocks.csv", data.row_blocks);
    io::write_blocks_csv(truth / "col_blocks.csv", data.col_blocks);
    std::cout << "wrote " << cfg.name << " (T=" << cfg.T << ", p=" << cfg.p << ", q=" << cfg.q
              << ") to " << out.string() << '\n';
    return kOk;
}

void write_tuning(const fs::path& path, const dafl::SparseEffectsFit& f) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << "axis,index,lambda,cp,df,chosen\n";
    auto dump = [&](char axis, const std::vector<dafl::TuningResult>& tuning) {
        for (std::size_t i = 0; i < tuning.size(); ++i) {
            const dafl::TuningResult& tr = tuning[i];
            for (std::size_t k = 0; k < tr.lambda_grid.size(); ++k) {
                out << axis << ',' << i + 1 << ',' << io::format_double(tr.lambda_grid[k]) << ','
                    << io::format_double(tr.cp_values[k]) << ',' << tr.dof[k] << ','
                    << (tr.lambda_grid[k] == tr.chosen_lambda ? 1 : 0) << '\n';
            }
        }
    };
    dump('r', f.row_tuning);
    dump('c', f.col_tuning);
    if (!out) throw IoError("write failed: " + path.string());
}

void write_lambdas(const fs::path& path, const dafl::SparseEffectsFit& f) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << "axis,index,lambda\n";
    for (std::size_t i = 0; i < f.row_tuning.size(); ++i) {
        out << "r," << i + 1 << ',' << io::format_double(f.row_tuning[i].chosen_lambda) << '\n';
    }
    for (std::size_t j = 0; j < f.col_tuning.size(); ++j) {
        out << "c," << j + 1 << ',' << io::format_double(f.col_tuning[j].chosen_lambda) << '\n';
    }
    if (!out) throw IoError("write failed: " + path.string());
}

int cmd_fit(const Globals& g, const std::string& input, int k_r, int k_c,
            const TuningFlags& tuning) {
    const fs::path out = output_dir(g);
    const MatrixSeries x(io::read_tensor(input));
    FitConfig cfg;
    cfg.model.k_r = k_r;
    cfg.model.k_c = k_c;
    cfg.tuning = tuning.config();
    const FitResult f = fit(x, cfg);
    for (const std::string& w : f.factors.warnings) std::cerr << "warning: " << w << '\n';
    if (!f.sparse.failures.empty()) std::cerr << "warning: " << f.sparse.failure_summary() << '\n';

    fs::create_directories(out);
    io::write_effects_csv(out / "mu.csv", f.initial.mu);
    io::write_effects_csv(out / "alpha_init.csv", f.initial.alpha);
    io::write_effects_csv(out / "beta_init.csv", f.initial.beta);
    io::write_effects_csv(out / "alpha_dafl.csv", f.sparse.alpha_dafl);
    io::write_effects_csv(out / "beta_dafl.csv", f.sparse.beta_dafl);
    io::write_effects_csv(out / "alpha_final.csv", f.sparse.alpha_final);
    io::write_effects_csv(out / "beta_final.csv", f.sparse.beta_final);
    io::write_blocks_csv(out / "row_blocks.csv", f.sparse.row_blocks);
    io::write_blocks_csv(out / "col_blocks.csv", f.sparse.col_blocks);
    io::write_matrix_csv(out / "q_r.csv", f.factors.q_r);
    io::write_matrix_csv(out / "q_c.csv", f.factors.q_c);
    io::write_tensor(out / tensor_name("f_z", g), f.components.f_z, tensor_format(g));
    io::write_tensor(out / tensor_name("common", g), f.components.common, tensor_format(g));
    write_lambdas(out / "lambdas.csv", f.sparse);
    write_tuning(out / "cp_curves.csv", f.sparse);
    std::cout << "fitted T=" << x.length() << ", p=" << x.rows() << ", q=" << x.cols() << " into "
              << out.string() << '\n';
    return kOk;
}

std::vector<double> read_lambdas(const fs::path& path, char axis) {
    std::vector<double> out;
    if (!fs::exists(path)) return out;
    std::ifstream in(path);
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
        if (!line.empty() && line[0] == axis) {
            out.push_back(std::stod(line.substr(line.rfind(',') + 1)));
        }
    }
    return out;
}

int cmd_evaluate(const Globals& g, const std::string& estimate_dir, const std::string& truth_dir) {
    const fs::path est_dir(estimate_dir);
    const fs::path tru_dir(truth_dir);
    Truth truth;
    truth.components.mu = io::read_effects_csv(tru_dir / "mu.csv").col(0);
    truth.components.alpha = io::read_effects_csv(tru_dir / "alpha.csv");
    truth.components.beta = io::read_effects_csv(tru_dir / "beta.csv");
    truth.components.common = io::read_tensor(existing_tensor(tru_dir, "common"));
    truth.a_r = io::read_matrix_csv(tru_dir / "a_r.csv");
    truth.a_c = io::read_matrix_csv(tru_dir / "a_c.csv");

    Estimates est;
    est.mu = io::read_effects_csv(est_dir / "mu.csv").col(0);
    est.alpha_init = io::read_effects_csv(est_dir / "alpha_init.csv");
    est.beta_init = io::read_effects_csv(est_dir / "beta_init.csv");
    est.alpha_final = io::read_effects_csv(est_dir / "alpha_final.csv");
    est.beta_final = io::read_effects_csv(est_dir / "beta_final.csv");
    est.q_r = io::read_matrix_csv(est_dir / "q_r.csv");
    est.q_c = io::read_matrix_csv(est_dir / "q_c.csv");
    est.common = io::read_tensor(existing_tensor(est_dir, "common"));
    est.lambda_rows = read_lambdas(est_dir / "lambdas.csv", 'r');
    est.lambda_cols = read_lambdas(est_dir / "lambdas.csv", 'c');

    const metrics::ReplicationReport report = evaluate(est, truth);
    if (g.output.empty()) {
        std::cout << io::report_json(report);
    } else {
        io::write_report_json(g.output, report);
        std::cout << "wrote report to " << g.output << '\n';
    }
    return kOk;
}

int cmd_experiment(const Globals& g, const std::string& scenario, const std::string& config_file,
                   std::size_t reps, bool resume, const TuningFlags& tuning) {
    ExperimentSpec spec;
    spec.dgp = load_dgp(scenario, config_file, g);
    spec.reps = reps;
    spec.tuning = tuning.config();
    spec.threads = g.threads;
    spec.output = output_dir(g);
    spec.resume = resume;
    const ExperimentResult r = run_experiment(spec);
    for (const metrics::ReplicationReport& rep : r.reports) {
        if (!rep.failure.empty()) {
            std::cerr << "replication " << rep.replication << " failed: " << rep.failure << '\n';
        }
    }
    std::cout << spec.dgp.name << ": " << reps << " replications (" << r.resumed << " resumed, "
              << r.failures << " failed); summary in " << (spec.output / "summary.csv").string()
              << '\n';
    return kOk;
}

int cmd_oracles(double pi_s, double pi_b) {
    const sim::Prop1Oracles o = sim::prop1_oracles(pi_s, pi_b);
    std::cout << "p_star," << io::format_double(o.p_star) << '\n'
              << "expected_block_len," << io::format_double(o.expected_block_len) << '\n';
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Sparse main effect matrix factor models"};
    app.require_subcommand(1);
    app.fallthrough();

    Globals g;
    app.add_option("--seed", g.seed, "master seed");
    app.add_option("--threads", g.threads, "worker threads (0: all cores)");
    app.add_option("-o,--output", g.output, "output file or directory");
    app.add_option("--format", g.format, "tensor file format")
        ->check(CLI::IsMember({"csv", "bin"}));

    std::string scenario;
    std::string config_file;
    std::uint64_t replication = 0;
    auto* simulate = app.add_subcommand("simulate", "simulate one dataset");
    simulate->add_option("--scenario", scenario, "scenario preset name");
    simulate->add_option("--config", config_file, "key = value DGP config file");
    simulate->add_option("--replication", replication, "replication index");

    std::string input;
    int k_r = 1;
    int k_c = 1;
    TuningFlags tuning;
    auto* fit_cmd = app.add_subcommand("fit", "estimate the model from a tensor file");
    fit_cmd->add_option("input", input, "tensor file (csv or binary)")->required();
    fit_cmd->add_option("--k-r", k_r, "number of row factors")->check(CLI::PositiveNumber);
    fit_cmd->add_option("--k-c", k_c, "number of column factors")->check(CLI::PositiveNumber);
    add_tuning_flags(fit_cmd, tuning);

    std::string estimate_dir;
    std::string truth_dir;
    auto* evaluate_cmd = app.add_subcommand("evaluate", "score a fit against the truth");
    evaluate_cmd->add_option("--estimate", estimate_dir, "directory written by fit")->required();
    evaluate_cmd->add_option("--truth", truth_dir, "truth directory written by simulate")
        ->required();

    std::size_t reps = 1;
    bool resume = false;
    auto* experiment = app.add_subcommand("experiment", "run replications and summarise");
    experiment->add_option("--scenario", scenario, "scenario preset name");
    experiment->add_option("--config", config_file, "key = value DGP config file");
    experiment->add_option("--reps", reps, "number of replications")->check(CLI::PositiveNumber);
    experiment->add_flag("--resume", resume, "skip replications with a report on disk");
    add_tuning_flags(experiment, tuning);

    double pi_s = 0.4;
    double pi_b = 0.8;
    auto* oracles = app.add_subcommand("oracles", "stationary sparsity of the effect generator");
    oracles->add_option("--pi-s", pi_s, "stay-in probability of the zero state");
    oracles->add_option("--pi-b", pi_b, "stay-in probability of the dense state");

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kUsage;
    }

    try {
        if (*simulate) return cmd_simulate(g, scenario, config_file, replication);
        if (*fit_cmd) return cmd_fit(g, input, k_r, k_c, tuning);
        if (*evaluate_cmd) return cmd_evaluate(g, estimate_dir, truth_dir);
        if (*experiment) return cmd_experiment(g, scenario, config_file, reps, resume, tuning);
        if (*oracles) return cmd_oracles(pi_s, pi_b);
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kIo;
    } catch (const DataError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kIo;
    } catch (const NumericalError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kNumerical;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kUsage;
    }
    return kUsage;
}
