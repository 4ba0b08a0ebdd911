#include "mefm/simulate.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace mefm::sim {

namespace {

constexpr int kBurnIn = 100;

// Shortest text that reads back to the same double.
std::string format_double(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

std::string format_list(const std::vector<double>& values) {
    std::string out;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i) out += ", ";
        out += format_double(values[i]);
    }
    return out;
}

double parse_double(const std::string& key, const std::string& text) {
    try {
        std::size_t used = 0;
        const double v = std::stod(text, &used);
        if (used != text.size()) throw std::invalid_argument(text);
        return v;
    } catch (const std::exception&) {
        throw PreconditionError("config key '" + key + "': not a number: '" + text + "'");
    }
}

long long parse_int(const std::string& key, const std::string& text) {
    try {
        std::size_t used = 0;
        const long long v = std::stoll(text, &used);
        if (used != text.size()) throw std::invalid_argument(text);
        return v;
    } catch (const std::exception&) {
        throw PreconditionError("config key '" + key + "': not an integer: '" + text + "'");
    }
}

bool parse_bool(const std::string& key, const std::string& text) {
    if (text == "true" || text == "1") return true;
    if (text == "false" || text == "0") return false;
    throw PreconditionError("config key '" + key + "': expected true/false, got '" + text + "'");
}

std::vector<double> parse_list(const std::string& key, const std::string& text) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        out.push_back(parse_double(key, item));
    }
    return out;
}

Ar2 parse_ar2(const std::string& key, const std::string& text) {
    const std::vector<double> v = parse_list(key, text);
    if (v.size() != 2) {
        throw PreconditionError("config key '" + key + "' needs two coefficients");
    }
    return {v[0], v[1]};
}

// n iid series of length T stacked as rows x cols matrices over time.
Slices ar2_cells(int T, Eigen::Index rows, Eigen::Index cols, const Ar2& coeffs, Rng& rng) {
    Slices out(static_cast<std::size_t>(T), Matrix(rows, cols));
    for (Eigen::Index j = 0; j < cols; ++j) {
        for (Eigen::Index i = 0; i < rows; ++i) {
            const Vector series = gen_ar2_standardized(T, coeffs, rng);
            for (int t = 0; t < T; ++t) {
                out[static_cast<std::size_t>(t)](i, j) = series(t);
            }
        }
    }
    return out;
}

Matrix sparse_normal(Eigen::Index rows, Eigen::Index cols, double zero_prob, Rng& rng) {
    Matrix out(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j) {
        for (Eigen::Index i = 0; i < rows; ++i) {
            const double v = rng.normal();
            out(i, j) = rng.bernoulli(zero_prob) ? 0.0 : v;
        }
    }
    return out;
}

std::vector<BlockSets> blocks_of(const Matrix& effects) {
    std::vector<BlockSets> out(static_cast<std::size_t>(effects.cols()));
    for (Eigen::Index i = 0; i < effects.cols(); ++i) {
        BlockSets& b = out[static_cast<std::size_t>(i)];
        b.sparse.resize(static_cast<std::size_t>(effects.rows()));
        for (Eigen::Index t = 0; t < effects.rows(); ++t) {
            b.sparse[static_cast<std::size_t>(t)] = effects(t, i) == 0.0;
        }
    }
    return out;
}

void check_probability(const char* name, double v) {
    if (!(v >= 0.0 && v < 1.0)) {
        throw PreconditionError(std::string(name) + " must lie in [0, 1), got " + format_double(v));
    }
}

}  // namespace

std::uint64_t mix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t replication, std::uint64_t stream) {
    return mix64(mix64(mix64(master) ^ replication) ^ stream);
}

bool Ar2::stationary() const {
    return phi1 + phi2 < 1.0 && phi2 - phi1 < 1.0 && std::abs(phi2) < 1.0;
}

double Ar2::stationary_sd() const {
    const double var =
        (1.0 - phi2) / ((1.0 + phi2) * (1.0 - phi1 - phi2) * (1.0 + phi1 - phi2));
    return std::sqrt(var);
}

void DGPConfig::validate() const {
    if (T < 2 || p < 2 || q < 2) {
        throw PreconditionError("DGP needs T, p, q >= 2");
    }
    if (k_r < 1 || k_c < 1 || k_r >= p || k_c >= q) {
        throw PreconditionError("DGP needs 1 <= k_r < p and 1 <= k_c < q");
    }
    if (k_er < 1 || k_ec < 1) {
        throw PreconditionError("noise factor counts must be positive");
    }
    if (static_cast<int>(zeta_r.size()) != k_r || static_cast<int>(zeta_c.size()) != k_c) {
        throw PreconditionError("zeta_r / zeta_c must have k_r / k_c entries");
    }
    for (double z : zeta_r) {
        if (!(z >= 0.0 && z <= 0.5)) throw PreconditionError("zeta_r entries must lie in [0, 0.5]");
    }
    for (double z : zeta_c) {
        if (!(z >= 0.0 && z <= 0.5)) throw PreconditionError("zeta_c entries must lie in [0, 0.5]");
    }
    for (const Ar2* ar : {&ar_f, &ar_e, &ar_eps}) {
        if (!ar->stationary()) throw PreconditionError("AR(2) coefficients are not stationary");
    }
    check_probability("pi_s", pi_s);
    check_probability("pi_b", pi_b);
    if (!(noise_loading_sparsity >= 0.0 && noise_loading_sparsity <= 1.0)) {
        throw PreconditionError("noise_loading_sparsity must lie in [0, 1]");
    }
    if (!(sigma_alpha >= 0.0) || !(sigma_beta >= 0.0) || !(mu_sd >= 0.0)) {
        throw PreconditionError("standard deviations must be non-negative");
    }
}

Vector gen_ar2_standardized(int n, const Ar2& coeffs, Rng& rng) {
    if (!coeffs.stationary()) {
        throw PreconditionError("AR(2) coefficients (" + format_double(coeffs.phi1) + ", " +
                                format_double(coeffs.phi2) + ") are not stationary");
    }
    const double scale = 1.0 / coeffs.stationary_sd();
    Vector out(n);
    double lag1 = 0.0;
    double lag2 = 0.0;
    for (int s = 0; s < kBurnIn + n; ++s) {
        const double v = coeffs.phi1 * lag1 + coeffs.phi2 * lag2 + rng.normal();
        lag2 = lag1;
        lag1 = v;
        if (s >= kBurnIn) {
            out(s - kBurnIn) = v * scale;
        }
    }
    return out;
}

Matrix gen_loadings(int dim, const std::vector<double>& zeta, Rng& rng) {
    const auto k = static_cast<Eigen::Index>(zeta.size());
    Matrix u(dim, k);
    for (Eigen::Index j = 0; j < k; ++j) {
        for (Eigen::Index i = 0; i < dim; ++i) {
            u(i, j) = rng.normal();
        }
    }
    u.rowwise() -= u.colwise().mean();
    for (Eigen::Index j = 0; j < k; ++j) {
        u.col(j) *= std::pow(static_cast<double>(dim), -zeta[static_cast<std::size_t>(j)]);
    }
    return u;
}

NoiseDraw gen_noise(int T, int p, int q, const DGPConfig& cfg, Rng& rng) {
    NoiseDraw out;
    out.a_er = sparse_normal(p, cfg.k_er, cfg.noise_loading_sparsity, rng);
    out.a_ec = sparse_normal(q, cfg.k_ec, cfg.noise_loading_sparsity, rng);
    out.sigma_eps.resize(p, q);
    for (Eigen::Index j = 0; j < q; ++j) {
        for (Eigen::Index i = 0; i < p; ++i) {
            out.sigma_eps(i, j) = std::abs(rng.normal());
        }
    }
    const Ar2 white{0.0, 0.0};
    const Slices f_e =
        ar2_cells(T, cfg.k_er, cfg.k_ec, cfg.temporal_independence ? white : cfg.ar_e, rng);
    const Slices eps = ar2_cells(T, p, q, cfg.temporal_independence ? white : cfg.ar_eps, rng);
    out.noise.reserve(static_cast<std::size_t>(T));
    for (std::size_t t = 0; t < static_cast<std::size_t>(T); ++t) {
        out.noise.push_back(out.a_er * f_e[t] * out.a_ec.transpose() +
                            out.sigma_eps.cwiseProduct(eps[t]));
    }
    return out;
}

Vector gen_sparse_effect_series(int T, double pi_s, double pi_b, double m, double sigma,
                                double threshold, Rng& rng) {
    const Prop1Oracles oracle = prop1_oracles(pi_s, pi_b);
    if (!(threshold >= 0.0)) {
        throw PreconditionError("threshold must be non-negative");
    }
    Vector out(T);
    bool zero = rng.bernoulli(oracle.p_star);
    for (int t = 0; t < T; ++t) {
        if (t > 0) {
            zero = zero ? rng.bernoulli(pi_s) : !rng.bernoulli(pi_b);
        }
        if (zero) {
            out(t) = 0.0;
        } else {
            const double v = std::abs(rng.normal(m, sigma));
            out(t) = v < threshold ? 0.0 : v;
        }
    }
    return out;
}

void enforce_zero_minimum(Matrix& effects) {
    for (Eigen::Index t = 0; t < effects.rows(); ++t) {
        Eigen::Index at = 0;
        effects.row(t).minCoeff(&at);
        effects(t, at) = 0.0;
    }
}

SimulatedDataset assemble_dataset(const DGPConfig& cfg) { return assemble_dataset(cfg, 0); }

SimulatedDataset assemble_dataset(const DGPConfig& cfg, std::uint64_t replication) {
    cfg.validate();
    auto stream = [&](Stream s) {
        return Rng(derive_seed(cfg.seed, replication, static_cast<std::uint64_t>(s)));
    };
    const int T = cfg.T;
    const int p = cfg.p;
    const int q = cfg.q;

    MEFMComponents truth;
    {
        Rng rng = stream(Stream::BaseEffect);
        truth.mu.resize(T);
        for (int t = 0; t < T; ++t) truth.mu(t) = rng.normal(cfg.mu_mean, cfg.mu_sd);
    }
    {
        Rng rng = stream(Stream::RowEffects);
        const double threshold = std::sqrt(std::log(static_cast<double>(p) * T) / q);
        truth.alpha.resize(T, p);
        for (int i = 0; i < p; ++i) {
            truth.alpha.col(i) = gen_sparse_effect_series(T, cfg.pi_s, cfg.pi_b, cfg.m_alpha,
                                                          cfg.sigma_alpha, threshold, rng);
        }
        enforce_zero_minimum(truth.alpha);
    }
    {
        Rng rng = stream(Stream::ColEffects);
        const double threshold = std::sqrt(std::log(static_cast<double>(q) * T) / p);
        truth.beta.resize(T, q);
        for (int j = 0; j < q; ++j) {
            truth.beta.col(j) = gen_sparse_effect_series(T, cfg.pi_s, cfg.pi_b, cfg.m_beta,
                                                         cfg.sigma_beta, threshold, rng);
        }
        enforce_zero_minimum(truth.beta);
    }

    SimulatedDataset out;
    {
        Rng rng = stream(Stream::Loadings);
        out.a_r = gen_loadings(p, cfg.zeta_r, rng);
        out.a_c = gen_loadings(q, cfg.zeta_c, rng);
    }
    truth.common.assign(static_cast<std::size_t>(T), Matrix::Zero(p, q));
    if (cfg.include_factors) {
        Rng rng = stream(Stream::Factors);
        const Ar2 white{0.0, 0.0};
        const Slices f =
            ar2_cells(T, cfg.k_r, cfg.k_c, cfg.temporal_independence ? white : cfg.ar_f, rng);
        for (std::size_t t = 0; t < f.size(); ++t) {
            truth.common[t] = out.a_r * f[t] * out.a_c.transpose();
        }
    }

    Slices x = reconstruct(truth).slices();
    if (cfg.include_noise) {
        Rng rng = stream(Stream::Noise);
        NoiseDraw noise = gen_noise(T, p, q, cfg, rng);
        for (std::size_t t = 0; t < x.size(); ++t) x[t] += noise.noise[t];
        out.a_er = std::move(noise.a_er);
        out.a_ec = std::move(noise.a_ec);
        out.sigma_eps = std::move(noise.sigma_eps);
    } else {
        out.a_er = Matrix::Zero(p, cfg.k_er);
        out.a_ec = Matrix::Zero(q, cfg.k_ec);
        out.sigma_eps = Matrix::Zero(p, q);
    }

    out.x = MatrixSeries(std::move(x));
    out.row_blocks = blocks_of(truth.alpha);
    out.col_blocks = blocks_of(truth.beta);
    out.truth = std::move(truth);
    return out;
}

Prop1Oracles prop1_oracles(double pi_s, double pi_b) {
    check_probability("pi_s", pi_s);
    check_probability("pi_b", pi_b);
    return {(1.0 - pi_b) / (2.0 - pi_s - pi_b), 1.0 / (1.0 - pi_s)};
}

std::vector<std::string> scenario_names() {
    return {"Ia",  "Ib",  "Ic",   "Id",   "Ie",   "IIa",  "IIb",  "IIc",
            "IId", "IIe", "IIIa", "IIIb", "IIIc", "IIId", "IIIe", "IIIf", "IIIg"};
}

DGPConfig scenario(const std::string& name) {
    DGPConfig c;  // defaults are setting Ia
    c.name = name;
    auto weak_factor = [](DGPConfig& d) {
        d.zeta_r = {0.2};
        d.zeta_c = {0.2, 0.0};
    };
    std::string base = name;
    if (name.rfind("III", 0) == 0) {
        c.m_alpha = c.m_beta = 2.0;
        const std::string v = name.substr(3);
        if (v == "a") return c;
        if (v == "c") {
            c.pi_s = 0.8;
            c.pi_b = 0.8;
            return c;
        }
        c.pi_b = 0.4;  // IIIb and everything derived from it
        if (v == "b") return c;
        if (v == "d") {
            c.sigma_alpha = c.sigma_beta = 2.0;
            return c;
        }
        if (v == "e") {
            c.m_alpha = c.m_beta = 1.0;
            return c;
        }
        if (v == "f" || v == "g") {
            c.p = c.q = 80;
            if (v == "g") c.T = 200;
            return c;
        }
    } else if (name.rfind("II", 0) == 0 || name.rfind("I", 0) == 0) {
        const bool independent = name.rfind("II", 0) == 0;
        const std::string v = name.substr(independent ? 2 : 1);
        c.temporal_independence = independent;
        if (v.size() == 1 && v[0] >= 'a' && v[0] <= 'e') {
            const char level = v[0];
            if (level >= 'b') weak_factor(c);
            if (level >= 'c') c.pi_b = 0.4;
            if (level >= 'd') c.T = 200;
            if (level >= 'e') c.p = c.q = 80;
            return c;
        }
    }
    std::string valid;
    for (const std::string& n : scenario_names()) valid += (valid.empty() ? "" : ", ") + n;
    throw PreconditionError("unknown scenario '" + name + "'; valid names: " + valid);
}

std::map<std::string, std::string> to_key_values(const DGPConfig& cfg) {
    return {
        {"scenario", cfg.name},
        {"T", std::to_string(cfg.T)},
        {"p", std::to_string(cfg.p)},
        {"q", std::to_string(cfg.q)},
        {"k_r", std::to_string(cfg.k_r)},
        {"k_c", std::to_string(cfg.k_c)},
        {"k_er", std::to_string(cfg.k_er)},
        {"k_ec", std::to_string(cfg.k_ec)},
        {"ar_f", format_list({cfg.ar_f.phi1, cfg.ar_f.phi2})},
        {"ar_e", format_list({cfg.ar_e.phi1, cfg.ar_e.phi2})},
        {"ar_eps", format_list({cfg.ar_eps.phi1, cfg.ar_eps.phi2})},
        {"zeta_r", format_list(cfg.zeta_r)},
        {"zeta_c", format_list(cfg.zeta_c)},
        {"m_alpha", format_double(cfg.m_alpha)},
        {"m_beta", format_double(cfg.m_beta)},
        {"sigma_alpha", format_double(cfg.sigma_alpha)},
        {"sigma_beta", format_double(cfg.sigma_beta)},
        {"pi_s", format_double(cfg.pi_s)},
        {"pi_b", format_double(cfg.pi_b)},
        {"noise_loading_sparsity", format_double(cfg.noise_loading_sparsity)},
        {"mu_mean", format_double(cfg.mu_mean)},
        {"mu_sd", format_double(cfg.mu_sd)},
        {"seed", std::to_string(cfg.seed)},
        {"temporal_independence", cfg.temporal_independence ? "true" : "false"},
        {"include_factors", cfg.include_factors ? "true" : "false"},
        {"include_noise", cfg.include_noise ? "true" : "false"},
    };
}

DGPConfig from_key_values(const std::map<std::string, std::string>& kv) {
    DGPConfig c;
    if (auto it = kv.find("scenario"); it != kv.end()) {
        const std::vector<std::string> names = scenario_names();
        if (std::find(names.begin(), names.end(), it->second) != names.end()) {
            c = scenario(it->second);
        } else {
            c.name = it->second;
        }
    }
    for (const auto& [key, value] : kv) {
        if (key == "scenario") continue;
        if (key == "T") c.T = static_cast<int>(parse_int(key, value));
        else if (key == "p") c.p = static_cast<int>(parse_int(key, value));
        else if (key == "q") c.q = static_cast<int>(parse_int(key, value));
        else if (key == "k_r") c.k_r = static_cast<int>(parse_int(key, value));
        else if (key == "k_c") c.k_c = static_cast<int>(parse_int(key, value));
        else if (key == "k_er") c.k_er = static_cast<int>(parse_int(key, value));
        else if (key == "k_ec") c.k_ec = static_cast<int>(parse_int(key, value));
        else if (key == "ar_f") c.ar_f = parse_ar2(key, value);
        else if (key == "ar_e") c.ar_e = parse_ar2(key, value);
        else if (key == "ar_eps") c.ar_eps = parse_ar2(key, value);
        else if (key == "zeta_r") c.zeta_r = parse_list(key, value);
        else if (key == "zeta_c") c.zeta_c = parse_list(key, value);
        else if (key == "m_alpha") c.m_alpha = parse_double(key, value);
        else if (key == "m_beta") c.m_beta = parse_double(key, value);
        else if (key == "sigma_alpha") c.sigma_alpha = parse_double(key, value);
        else if (key == "sigma_beta") c.sigma_beta = parse_double(key, value);
        else if (key == "pi_s") c.pi_s = parse_double(key, value);
        else if (key == "pi_b") c.pi_b = parse_double(key, value);
        else if (key == "noise_loading_sparsity") c.noise_loading_sparsity = parse_double(key, value);
        else if (key == "mu_mean") c.mu_mean = parse_double(key, value);
        else if (key == "mu_sd") c.mu_sd = parse_double(key, value);
        else if (key == "seed") c.seed = static_cast<std::uint64_t>(std::stoull(value));
        else if (key == "temporal_independence") c.temporal_independence = parse_bool(key, value);
        else if (key == "include_factors") c.include_factors = parse_bool(key, value);
        else if (key == "include_noise") c.include_noise = parse_bool(key, value);
        else throw PreconditionError("unknown config key '" + key + "'");
    }
    c.validate();
    return c;
}

}  // namespace mefm::sim
