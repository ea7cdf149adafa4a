#include "tprox/config.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "tprox/errors.hpp"

namespace tprox {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& v) {
    std::istringstream is(v);
    T out{};
    is >> out;
    if (is.fail() || !is.eof()) throw ConfigError("config: bad value '" + v + "' for " + key);
    return out;
}

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

} // namespace

int RunConfig::effective_batch_size() const {
    if (batch_size > 0) return batch_size;
    return is_windowed(variant) ? 128 : 256;
}

std::vector<std::string> RunConfig::keys() {
    return {"variant",    "seed",        "data",       "val_data",       "out_dir",        "epochs",
            "max_steps",  "batch_size",  "lr",         "optimizer",      "lambda",         "lambda_disp",
            "temperature", "ema_decay",  "K",          "dt",             "delta",          "eps_w",
            "flow_block", "flow_radius", "flow_smoothness", "model",      "T",              "beta_start",     "beta_end",
            "log_interval", "checkpoint_interval", "eval_interval", "sample_count", "sample_steps",
            "extractor_seed", "probe_windows"};
}

void RunConfig::set(const std::string& key, const std::string& raw) {
    const std::string v = trim(raw);
    try {
        if (key == "variant") variant = parse_variant(v);
        else if (key == "seed") seed = parse_number<std::uint64_t>(key, v);
        else if (key == "data") data = v;
        else if (key == "val_data") val_data = v;
        else if (key == "out_dir") out_dir = v;
        else if (key == "epochs") epochs = parse_number<int>(key, v);
        else if (key == "max_steps") max_steps = parse_number<int>(key, v);
        else if (key == "batch_size") batch_size = parse_number<int>(key, v);
        else if (key == "lr") lr = parse_number<double>(key, v);
        else if (key == "optimizer") optimizer = v;
        else if (key == "lambda") lambda = parse_number<double>(key, v);
        else if (key == "lambda_disp") lambda_disp = parse_number<double>(key, v);
        else if (key == "temperature") temperature = parse_number<double>(key, v);
        else if (key == "ema_decay") ema_decay = parse_number<double>(key, v);
        else if (key == "K") K = parse_number<int>(key, v);
        else if (key == "dt") dt = parse_number<int>(key, v);
        else if (key == "delta") delta = parse_number<double>(key, v);
        else if (key == "eps_w") eps_w = parse_number<double>(key, v);
        else if (key == "flow_block") flow_block = parse_number<int>(key, v);
        else if (key == "flow_radius") flow_radius = parse_number<int>(key, v);
        else if (key == "flow_smoothness") flow_smoothness = parse_number<double>(key, v);
        else if (key == "model") model = v;
        else if (key == "T") T = parse_number<int>(key, v);
        else if (key == "beta_start") beta_start = parse_number<double>(key, v);
        else if (key == "beta_end") beta_end = parse_number<double>(key, v);
        else if (key == "log_interval") log_interval = parse_number<int>(key, v);
        else if (key == "checkpoint_interval") checkpoint_interval = parse_number<int>(key, v);
        else if (key == "eval_interval") eval_interval = parse_number<int>(key, v);
        else if (key == "sample_count") sample_count = parse_number<int>(key, v);
        else if (key == "sample_steps") sample_steps = parse_number<int>(key, v);
        else if (key == "extractor_seed") extractor_seed = parse_number<std::uint64_t>(key, v);
        else if (key == "probe_windows") probe_windows = parse_number<int>(key, v);
        else throw ConfigError("config: unknown key '" + key + "'");
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
}

std::string RunConfig::serialize() const {
    std::ostringstream os;
    os << "variant = " << to_string(variant) << '\n'
       << "seed = " << seed << '\n'
       << "data = " << data << '\n'
       << "val_data = " << val_data << '\n'
       << "out_dir = " << out_dir << '\n'
       << "epochs = " << epochs << '\n'
       << "max_steps = " << max_steps << '\n'
       << "batch_size = " << batch_size << '\n'
       << "lr = " << fmt_double(lr) << '\n'
       << "optimizer = " << optimizer << '\n'
       << "lambda = " << fmt_double(lambda) << '\n'
       << "lambda_disp = " << fmt_double(lambda_disp) << '\n'
       << "temperature = " << fmt_double(temperature) << '\n'
       << "ema_decay = " << fmt_double(ema_decay) << '\n'
       << "K = " << K << '\n'
       << "dt = " << dt << '\n'
       << "delta = " << fmt_double(delta) << '\n'
       << "eps_w = " << fmt_double(eps_w) << '\n'
       << "flow_block = " << flow_block << '\n'
       << "flow_radius = " << flow_radius << '\n'
       << "flow_smoothness = " << fmt_double(flow_smoothness) << '\n'
       << "model = " << model << '\n'
       << "T = " << T << '\n'
       << "beta_start = " << fmt_double(beta_start) << '\n'
       << "beta_end = " << fmt_double(beta_end) << '\n'
       << "log_interval = " << log_interval << '\n'
       << "checkpoint_interval = " << checkpoint_interval << '\n'
       << "eval_interval = " << eval_interval << '\n'
       << "sample_count = " << sample_count << '\n'
       << "sample_steps = " << sample_steps << '\n'
       << "extractor_seed = " << extractor_seed << '\n'
       << "probe_windows = " << probe_windows << '\n';
    return os.str();
}

std::string RunConfig::hash() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    std::istringstream lines(serialize());
    std::string hashed, line;
    while (std::getline(lines, line))
        if (line.rfind("out_dir =", 0) != 0) hashed += line + '\n';
    for (unsigned char c : hashed) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

void RunConfig::validate() const {
    auto fail = [](const std::string& m) { throw ConfigError("config: " + m); };
    if (data.empty()) fail("data path is required");
    if (epochs < 1 && max_steps < 1) fail("need epochs >= 1 or max_steps >= 1");
    if (max_steps < 0 || batch_size < 0) fail("max_steps and batch_size must be >= 0");
    if (!(lr >= 0.0) || !std::isfinite(lr)) fail("lr must be finite and >= 0");
    if (optimizer != "sgd" && optimizer != "adam") fail("optimizer must be sgd or adam");
    if (!(lambda >= 0.0) || !(lambda_disp >= 0.0)) fail("lambda values must be >= 0");
    if (!(temperature > 0.0)) fail("temperature must be > 0");
    if (!(ema_decay >= 0.0 && ema_decay <= 1.0)) fail("ema_decay must lie in [0, 1]");
    if (K < 1) fail("K must be >= 1");
    if (is_windowed(variant) && K < 2) fail("windowed variants need K >= 2");
    if (dt < 1 || dt >= T) fail("dt must lie in [1, T)");
    if (!(delta > 0.0) || !(eps_w > 0.0)) fail("weight floors must be > 0");
    if (flow_block < 1 || flow_radius < 0) fail("invalid flow block/radius");
    if (!(flow_smoothness >= 0.0) || !std::isfinite(flow_smoothness)) fail("flow_smoothness must be >= 0");
    if (model != "base" && model != "tiny") fail("model must be base or tiny");
    if (log_interval < 1 || checkpoint_interval < 1 || eval_interval < 0) fail("intervals must be positive");
    if (sample_count < 0 || sample_steps < 1 || sample_steps > T) fail("invalid sampling settings");
    if (probe_windows < 1) fail("probe_windows must be >= 1");
}

std::map<std::string, std::string> parse_config_text(const std::string& text) {
    std::map<std::string, std::string> out;
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
        out[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    return out;
}

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open config " + path.string());
    std::stringstream ss;
    ss << is.rdbuf();
    RunConfig cfg;
    for (const auto& [k, v] : parse_config_text(ss.str())) cfg.set(k, v);
    return cfg;
}

} // namespace tprox
