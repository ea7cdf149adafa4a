#include "tprox/metrics_log.hpp"

#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "tprox/errors.hpp"

namespace tprox {

namespace {

std::string fmt(const std::optional<double>& v) {
    if (!v) return "";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", *v);
    return buf;
}

std::optional<double> opt(const std::string& s) {
    if (s.empty()) return std::nullopt;
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size()) throw IoError("metrics: bad number '" + s + "'");
        return v;
    } catch (const std::logic_error&) {
        if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
        throw IoError("metrics: bad number '" + s + "'");
    }
}

std::vector<std::optional<double>*> numeric_fields(MetricsRow& r) {
    return {&r.loss_mse, &r.loss_reg,  &r.loss_disp,  &r.loss_total,   &r.grad_norm, &r.grad_variance,
            &r.e_s,      &r.e_g,       &r.lambda2,    &r.bound_rhs,    &r.mean_d_ij, &r.param_travel,
            &r.fid_train, &r.fid_val,  &r.diversity,  &r.wall_seconds};
}

} // namespace

const std::vector<std::string>& metrics_columns() {
    static const std::vector<std::string> cols = {
        "step",       "variant",   "seed",     "loss_mse",  "loss_reg",  "loss_disp",    "loss_total",
        "grad_norm",  "grad_variance", "e_s",  "e_g",       "lambda2",   "bound_rhs",    "mean_d_ij",
        "param_travel", "fid_train", "fid_val", "diversity", "wall_seconds", "config_hash"};
    return cols;
}

std::string metrics_header() {
    std::string h;
    for (const auto& c : metrics_columns()) {
        if (!h.empty()) h += ',';
        h += c;
    }
    return h;
}

std::string format_metrics_row(const MetricsRow& row) {
    MetricsRow r = row;
    std::ostringstream os;
    os << r.step << ',' << r.variant << ',' << r.seed;
    for (auto* f : numeric_fields(r)) os << ',' << fmt(*f);
    os << ',' << r.config_hash;
    return os.str();
}

MetricsRow parse_metrics_row(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream is(line);
    while (std::getline(is, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    if (cells.size() != metrics_columns().size()) throw IoError("metrics: wrong column count in '" + line + "'");
    MetricsRow r;
    try {
        r.step = std::stoll(cells[0]);
        r.seed = std::stoull(cells[2]);
    } catch (const std::logic_error&) {
        throw IoError("metrics: bad step/seed in '" + line + "'");
    }
    r.variant = cells[1];
    auto fields = numeric_fields(r);
    for (std::size_t k = 0; k < fields.size(); ++k) *fields[k] = opt(cells[3 + k]);
    r.config_hash = cells.back();
    return r;
}

void append_metrics(const std::filesystem::path& path, const std::vector<MetricsRow>& rows) {
    std::error_code ec;
    const bool fresh = !std::filesystem::exists(path, ec) || std::filesystem::file_size(path, ec) == 0;
    std::ofstream os(path, std::ios::app | std::ios::binary);
    if (!os) throw IoError("cannot open " + path.string());
    if (fresh) os << metrics_header() << '\n';
    for (const auto& r : rows) os << format_metrics_row(r) << '\n';
    if (!os) throw IoError("write failed: " + path.string());
}

std::vector<MetricsRow> read_metrics(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path.string());
    std::string line;
    if (!std::getline(is, line) || line != metrics_header()) throw IoError("metrics: unexpected header in " + path.string());
    std::vector<MetricsRow> rows;
    while (std::getline(is, line))
        if (!line.empty()) rows.push_back(parse_metrics_row(line));
    return rows;
}

} // namespace tprox
