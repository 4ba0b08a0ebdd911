#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "mefm/metrics.hpp"
#include "mefm/types.hpp"

// File formats. Every reader throws IoError when the file cannot be opened
// and DataError when its content is malformed.
//
//   tensor CSV    header "t,i,j,value", 1-based, 17 significant digits
//   tensor binary "MEFM", u16 version (1), T p q as u64, then row-major f64
//                 values of X_1, ..., X_T, all little-endian
//   effects CSV   "t,index,value" for a T x d matrix
//   blocks CSV    "index,t_start,t_end", one line per run of sparse time points
//   matrix CSV    "row,col,value"
//   config        "key = value" lines, '#' starts a comment
namespace mefm::io {

namespace fs = std::filesystem;

enum class TensorFormat { Csv, Binary };

void write_tensor_csv(const fs::path& path, const Slices& x);
void write_tensor_binary(const fs::path& path, const Slices& x);
void write_tensor(const fs::path& path, const Slices& x, TensorFormat format);
Slices read_tensor_csv(const fs::path& path);
Slices read_tensor_binary(const fs::path& path);
// Picks the format from the leading magic bytes.
Slices read_tensor(const fs::path& path);

void write_effects_csv(const fs::path& path, const Matrix& effects);
Matrix read_effects_csv(const fs::path& path);

void write_blocks_csv(const fs::path& path, const std::vector<BlockSets>& blocks);
// T and the number of series are not recoverable from the run-length form.
std::vector<BlockSets> read_blocks_csv(const fs::path& path, Eigen::Index length,
                                       std::size_t count);

void write_matrix_csv(const fs::path& path, const Matrix& m);
Matrix read_matrix_csv(const fs::path& path);

using KeyValues = std::map<std::string, std::string>;
void write_key_values(const fs::path& path, const KeyValues& kv);
KeyValues read_key_values(const fs::path& path);
KeyValues parse_key_values(const std::string& text);

std::string report_json(const metrics::ReplicationReport& report);
void write_report_json(const fs::path& path, const metrics::ReplicationReport& report);
metrics::ReplicationReport read_report_json(const fs::path& path);

// Columns scenario, metric, mean, sd, median, n. Undefined sd prints as NA.
void write_summary_csv(const fs::path& path, const std::string& scenario,
                       const std::vector<metrics::MetricSummary>& summary);

std::string format_double(double v);

}  // namespace mefm::io
