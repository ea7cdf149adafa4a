#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "tprox/objective.hpp"

namespace tprox {

// One training run. Defaults follow the published protocol; desk-scale experiment files override
// learning rate, EMA decay and step budget.
struct RunConfig {
    Variant variant = Variant::baseline;
    std::uint64_t seed = 0;
    std::string data;      // training split (TDV1)
    std::string val_data;  // validation split, needed for fid_val
    std::string out_dir = "run";
    int epochs = 1;
    int max_steps = 0;     // > 0 caps the number of updates
    int batch_size = 0;    // 0: 128 windows for windowed variants, 256 frames otherwise
    double lr = 1e-4;
    std::string optimizer = "sgd";  // sgd | adam
    double lambda = 0.1;
    double lambda_disp = 0.005;
    double temperature = 0.5;
    double ema_decay = 0.9995;
    int K = 3;
    int dt = 50;
    double delta = 1e-3;
    double eps_w = 1e-3;
    int flow_block = 4;
    int flow_radius = 3;
    double flow_smoothness = 10.0;
    std::string model = "base";
    int T = 1000;
    double beta_start = 1e-4;
    double beta_end = 0.02;
    int log_interval = 50;
    int checkpoint_interval = 500;
    int eval_interval = 0;   // 0: evaluate only at the end (when sample_count > 0)
    int sample_count = 500;
    int sample_steps = 100;
    std::uint64_t extractor_seed = 1234;
    int probe_windows = 8;

    int effective_batch_size() const;

    // Applies one `key = value` assignment; throws ConfigError on unknown keys or bad values.
    void set(const std::string& key, const std::string& value);

    // Canonical `key = value` text, every field, fixed order.
    std::string serialize() const;
    std::string hash() const;  // 16 hex digits of FNV-1a over serialize() without out_dir

    void validate() const;

    static std::vector<std::string> keys();
};

// Flat `key = value` file; '#' starts a comment.
std::map<std::string, std::string> parse_config_text(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);

} // namespace tprox
