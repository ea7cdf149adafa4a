#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace tprox {

// One row of the metrics CSV. Unset optionals are written as empty fields.
struct MetricsRow {
    std::int64_t step = 0;
    std::string variant;
    std::uint64_t seed = 0;
    std::optional<double> loss_mse, loss_reg, loss_disp, loss_total;
    std::optional<double> grad_norm, grad_variance;
    std::optional<double> e_s, e_g, lambda2, bound_rhs, mean_d_ij, param_travel;
    std::optional<double> fid_train, fid_val, diversity;
    std::optional<double> wall_seconds;
    std::string config_hash;
};

// Fixed column order; config_hash is the trailing column.
const std::vector<std::string>& metrics_columns();
std::string metrics_header();
std::string format_metrics_row(const MetricsRow& row);
MetricsRow parse_metrics_row(const std::string& line);

// Appends rows, writing the header first when the file is new or empty.
void append_metrics(const std::filesystem::path& path, const std::vector<MetricsRow>& rows);
std::vector<MetricsRow> read_metrics(const std::filesystem::path& path);

} // namespace tprox
