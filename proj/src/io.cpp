#include "mefm/io.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace mefm::io {

namespace {

constexpr char kMagic[4] = {'M', 'E', 'F', 'M'};
constexpr std::uint16_t kBinaryVersion = 1;

std::ofstream open_out(const fs::path& path, bool binary = false) {
    if (path.has_parent_path()) {
        std::error_code ec;
        fs::create_directories(path.parent_path(), ec);
    }
    std::ofstream out(path, binary ? std::ios::binary : std::ios::out);
    if (!out) {
        throw IoError("cannot write " + path.string());
    }
    return out;
}

std::ifstream open_in(const fs::path& path, bool binary = false) {
    std::ifstream in(path, binary ? std::ios::binary : std::ios::in);
    if (!in) {
        throw IoError("cannot read " + path.string());
    }
    return in;
}

void finish(std::ofstream& out, const fs::path& path) {
    out.flush();
    if (!out) {
        throw IoError("write failed: " + path.string());
    }
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) out.push_back(trim(field));
    return out;
}

// Reads a CSV with the expected header; returns the data rows.
std::vector<std::vector<std::string>> read_csv(const fs::path& path, const std::string& header) {
    std::ifstream in = open_in(path);
    std::string line;
    if (!std::getline(in, line) || trim(line) != header) {
        throw DataError(path.string() + ": expected header '" + header + "'");
    }
    const std::size_t width = split(header).size();
    std::vector<std::vector<std::string>> rows;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        std::vector<std::string> fields = split(line);
        if (fields.size() != width) {
            throw DataError(path.string() + ":" + std::to_string(lineno) + ": expected " +
                            std::to_string(width) + " fields");
        }
        rows.push_back(std::move(fields));
    }
    return rows;
}

long long to_index(const fs::path& path, const std::string& s) {
    try {
        std::size_t used = 0;
        const long long v = std::stoll(s, &used);
        if (used != s.size() || v < 1) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw DataError(path.string() + ": bad index '" + s + "'");
    }
}

double to_value(const fs::path& path, const std::string& s) {
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw DataError(path.string() + ": bad value '" + s + "'");
    }
}

// Fills a dense array from 1-based (index tuple, value) rows; every cell
// must appear exactly once.
class DenseFill {
public:
    DenseFill(const fs::path& path, std::size_t cells) : path_(path), seen_(cells, false) {}

    void mark(std::size_t cell) {
        if (seen_[cell]) {
            throw DataError(path_.string() + ": duplicate entry");
        }
        seen_[cell] = true;
    }

    void check_complete() const {
        for (bool s : seen_) {
            if (!s) throw DataError(path_.string() + ": missing entries");
        }
    }

private:
    fs::path path_;
    std::vector<bool> seen_;
};

template <typename T>
void put_le(std::ostream& out, T v) {
    unsigned char bytes[sizeof(T)];
    for (std::size_t k = 0; k < sizeof(T); ++k) {
        bytes[k] = static_cast<unsigned char>((v >> (8 * k)) & 0xFF);
    }
    out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T get_le(std::istream& in, const fs::path& path) {
    unsigned char bytes[sizeof(T)];
    if (!in.read(reinterpret_cast<char*>(bytes), sizeof(T))) {
        throw DataError(path.string() + ": truncated binary tensor");
    }
    T v = 0;
    for (std::size_t k = 0; k < sizeof(T); ++k) {
        v |= static_cast<T>(bytes[k]) << (8 * k);
    }
    return v;
}

}  // namespace

std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void write_tensor_csv(const fs::path& path, const Slices& x) {
    if (x.empty()) throw DimensionError("empty tensor");
    require_shape(x, x.front().rows(), x.front().cols(), "tensor");
    std::ofstream out = open_out(path);
    out << "t,i,j,value\n";
    for (std::size_t t = 0; t < x.size(); ++t) {
        for (Eigen::Index i = 0; i < x[t].rows(); ++i) {
            for (Eigen::Index j = 0; j < x[t].cols(); ++j) {
                out << t + 1 << ',' << i + 1 << ',' << j + 1 << ',' << format_double(x[t](i, j))
                    << '\n';
            }
        }
    }
    finish(out, path);
}

void write_tensor_binary(const fs::path& path, const Slices& x) {
    if (x.empty()) throw DimensionError("empty tensor");
    require_shape(x, x.front().rows(), x.front().cols(), "tensor");
    std::ofstream out = open_out(path, true);
    out.write(kMagic, 4);
    put_le<std::uint16_t>(out, kBinaryVersion);
    put_le<std::uint64_t>(out, x.size());
    put_le<std::uint64_t>(out, static_cast<std::uint64_t>(x.front().rows()));
    put_le<std::uint64_t>(out, static_cast<std::uint64_t>(x.front().cols()));
    for (const Matrix& m : x) {
        for (Eigen::Index i = 0; i < m.rows(); ++i) {
            for (Eigen::Index j = 0; j < m.cols(); ++j) {
                std::uint64_t bits = 0;
                const double v = m(i, j);
                std::memcpy(&bits, &v, sizeof bits);
                put_le<std::uint64_t>(out, bits);
            }
        }
    }
    finish(out, path);
}

void write_tensor(const fs::path& path, const Slices& x, TensorFormat format) {
    if (format == TensorFormat::Binary) {
        write_tensor_binary(path, x);
    } else {
        write_tensor_csv(path, x);
    }
}

Slices read_tensor_csv(const fs::path& path) {
    const auto rows = read_csv(path, "t,i,j,value");
    std::size_t T = 0;
    Eigen::Index p = 0;
    Eigen::Index q = 0;
    std::vector<std::array<long long, 3>> idx;
    std::vector<double> values;
    idx.reserve(rows.size());
    values.reserve(rows.size());
    for (const auto& r : rows) {
        idx.push_back({to_index(path, r[0]), to_index(path, r[1]), to_index(path, r[2])});
        values.push_back(to_value(path, r[3]));
        T = std::max(T, static_cast<std::size_t>(idx.back()[0]));
        p = std::max(p, static_cast<Eigen::Index>(idx.back()[1]));
        q = std::max(q, static_cast<Eigen::Index>(idx.back()[2]));
    }
    if (T == 0) throw DataError(path.string() + ": no data rows");
    Slices x(T, Matrix::Zero(p, q));
    DenseFill fill(path, T * static_cast<std::size_t>(p * q));
    for (std::size_t k = 0; k < idx.size(); ++k) {
        const std::size_t t = static_cast<std::size_t>(idx[k][0] - 1);
        const Eigen::Index i = idx[k][1] - 1;
        const Eigen::Index j = idx[k][2] - 1;
        fill.mark(t * static_cast<std::size_t>(p * q) + static_cast<std::size_t>(i * q + j));
        x[t](i, j) = values[k];
    }
    fill.check_complete();
    return x;
}

Slices read_tensor_binary(const fs::path& path) {
    std::ifstream in = open_in(path, true);
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
        throw DataError(path.string() + ": not a MEFM binary tensor");
    }
    const auto version = get_le<std::uint16_t>(in, path);
    if (version != kBinaryVersion) {
        throw DataError(path.string() + ": unsupported version " + std::to_string(version));
    }
    const auto T = get_le<std::uint64_t>(in, path);
    const auto p = get_le<std::uint64_t>(in, path);
    const auto q = get_le<std::uint64_t>(in, path);
    if (T == 0 || p == 0 || q == 0 || T * p * q > (std::uint64_t{1} << 34)) {
        throw DataError(path.string() + ": implausible dimensions");
    }
    Slices x(T, Matrix(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(q)));
    for (Matrix& m : x) {
        for (Eigen::Index i = 0; i < m.rows(); ++i) {
            for (Eigen::Index j = 0; j < m.cols(); ++j) {
                const auto bits = get_le<std::uint64_t>(in, path);
                std::memcpy(&m(i, j), &bits, sizeof bits);
            }
        }
    }
    if (in.peek() != std::char_traits<char>::eof()) {
        throw DataError(path.string() + ": trailing bytes after tensor");
    }
    return x;
}

Slices read_tensor(const fs::path& path) {
    std::ifstream in = open_in(path, true);
    char magic[4] = {};
    in.read(magic, 4);
    if (in.gcount() == 4 && std::memcmp(magic, kMagic, 4) == 0) {
        return read_tensor_binary(path);
    }
    return read_tensor_csv(path);
}

void write_effects_csv(const fs::path& path, const Matrix& effects) {
    std::ofstream out = open_out(path);
    out << "t,index,value\n";
    for (Eigen::Index t = 0; t < effects.rows(); ++t) {
        for (Eigen::Index i = 0; i < effects.cols(); ++i) {
            out << t + 1 << ',' << i + 1 << ',' << format_double(effects(t, i)) << '\n';
        }
    }
    finish(out, path);
}

Matrix read_effects_csv(const fs::path& path) {
    const auto rows = read_csv(path, "t,index,value");
    Eigen::Index T = 0;
    Eigen::Index d = 0;
    for (const auto& r : rows) {
        T = std::max<Eigen::Index>(T, to_index(path, r[0]));
        d = std::max<Eigen::Index>(d, to_index(path, r[1]));
    }
    if (T == 0) throw DataError(path.string() + ": no data rows");
    Matrix m = Matrix::Zero(T, d);
    DenseFill fill(path, static_cast<std::size_t>(T * d));
    for (const auto& r : rows) {
        const Eigen::Index t = to_index(path, r[0]) - 1;
        const Eigen::Index i = to_index(path, r[1]) - 1;
        fill.mark(static_cast<std::size_t>(t * d + i));
        m(t, i) = to_value(path, r[2]);
    }
    fill.check_complete();
    return m;
}

void write_blocks_csv(const fs::path& path, const std::vector<BlockSets>& blocks) {
    std::ofstream out = open_out(path);
    out << "index,t_start,t_end\n";
    for (std::size_t i = 0; i < blocks.size(); ++i) {
        const std::vector<bool>& s = blocks[i].sparse;
        std::size_t t = 0;
        while (t < s.size()) {
            if (!s[t]) {
                ++t;
                continue;
            }
            const std::size_t start = t;
            while (t < s.size() && s[t]) ++t;
            out << i + 1 << ',' << start + 1 << ',' << t << '\n';
        }
    }
    finish(out, path);
}

std::vector<BlockSets> read_blocks_csv(const fs::path& path, Eigen::Index length,
                                       std::size_t count) {
    std::vector<BlockSets> out(count);
    for (BlockSets& b : out) b.sparse.assign(static_cast<std::size_t>(length), false);
    for (const auto& r : read_csv(path, "index,t_start,t_end")) {
        const auto i = static_cast<std::size_t>(to_index(path, r[0]));
        const auto a = to_index(path, r[1]);
        const auto b = to_index(path, r[2]);
        if (i > count || a > b || b > length) {
            throw DataError(path.string() + ": block out of range");
        }
        for (long long t = a; t <= b; ++t) {
            out[i - 1].sparse[static_cast<std::size_t>(t - 1)] = true;
        }
    }
    return out;
}

void write_matrix_csv(const fs::path& path, const Matrix& m) {
    std::ofstream out = open_out(path);
    out << "row,col,value\n";
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            out << i + 1 << ',' << j + 1 << ',' << format_double(m(i, j)) << '\n';
        }
    }
    finish(out, path);
}

Matrix read_matrix_csv(const fs::path& path) {
    const auto rows = read_csv(path, "row,col,value");
    Eigen::Index r = 0;
    Eigen::Index c = 0;
    for (const auto& row : rows) {
        r = std::max<Eigen::Index>(r, to_index(path, row[0]));
        c = std::max<Eigen::Index>(c, to_index(path, row[1]));
    }
    if (r == 0) throw DataError(path.string() + ": no data rows");
    Matrix m = Matrix::Zero(r, c);
    DenseFill fill(path, static_cast<std::size_t>(r * c));
    for (const auto& row : rows) {
        const Eigen::Index i = to_index(path, row[0]) - 1;
        const Eigen::Index j = to_index(path, row[1]) - 1;
        fill.mark(static_cast<std::size_t>(i * c + j));
        m(i, j) = to_value(path, row[2]);
    }
    fill.check_complete();
    return m;
}

void write_key_values(const fs::path& path, const KeyValues& kv) {
    std::ofstream out = open_out(path);
    for (const auto& [key, value] : kv) {
        out << key << " = " << value << '\n';
    }
    finish(out, path);
}

KeyValues parse_key_values(const std::string& text) {
    KeyValues kv;
    std::stringstream ss(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(ss, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw DataError("config line " + std::to_string(lineno) + ": expected 'key = value'");
        }
        const std::string key = trim(line.substr(0, eq));
        if (key.empty()) {
            throw DataError("config line " + std::to_string(lineno) + ": empty key");
        }
        kv[key] = trim(line.substr(eq + 1));
    }
    return kv;
}

KeyValues read_key_values(const fs::path& path) {
    std::ifstream in = open_in(path);
    std::stringstream buf;
    buf << in.rdbuf();
    try {
        return parse_key_values(buf.str());
    } catch (const DataError& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

std::string report_json(const metrics::ReplicationReport& report) {
    nlohmann::ordered_json j;
    j["replication"] = report.replication;
    nlohmann::ordered_json m = nlohmann::ordered_json::object();
    for (const auto& [name, value] : report.metrics) {
        m[name] = value ? nlohmann::ordered_json(*value) : nlohmann::ordered_json(nullptr);
    }
    j["metrics"] = m;
    j["lambda_rows"] = report.lambda_rows;
    j["lambda_cols"] = report.lambda_cols;
    j["seconds"] = report.seconds;
    if (!report.failure.empty()) j["failure"] = report.failure;
    return j.dump(2) + '\n';
}

void write_report_json(const fs::path& path, const metrics::ReplicationReport& report) {
    std::ofstream out = open_out(path);
    out << report_json(report);
    finish(out, path);
}

metrics::ReplicationReport read_report_json(const fs::path& path) {
    std::ifstream in = open_in(path);
    metrics::ReplicationReport r;
    try {
        const nlohmann::ordered_json j = nlohmann::ordered_json::parse(in);
        r.replication = j.at("replication").get<std::size_t>();
        for (const auto& [name, value] : j.at("metrics").items()) {
            r.metrics.emplace_back(name, value.is_null() ? std::nullopt
                                                         : std::optional<double>(value.get<double>()));
        }
        r.lambda_rows = j.at("lambda_rows").get<std::vector<double>>();
        r.lambda_cols = j.at("lambda_cols").get<std::vector<double>>();
        r.seconds = j.at("seconds").get<double>();
        if (j.contains("failure")) r.failure = j.at("failure").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw DataError(path.string() + ": " + e.what());
    }
    return r;
}

void write_summary_csv(const fs::path& path, const std::string& scenario,
                       const std::vector<metrics::MetricSummary>& summary) {
    std::ofstream out = open_out(path);
    out << "scenario,metric,mean,sd,median,n\n";
    for (const metrics::MetricSummary& s : summary) {
        out << scenario << ',' << s.metric << ',' << format_double(s.mean) << ','
            << (s.sd ? format_double(*s.sd) : std::string("NA")) << ','
            << format_double(s.median) << ',' << s.n << '\n';
    }
    finish(out, path);
}

}  // namespace mefm::io
