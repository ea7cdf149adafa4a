#pragma once

#include <cmath>
#include <filesystem>
#include <string>

#include "tprox/denoiser.hpp"
#include "tprox/rng.hpp"

namespace tprox::test {

inline double rel_err(double a, double b, double floor = 1e-12) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

inline Matrix random_matrix(Eigen::Index r, Eigen::Index c, std::uint64_t seed, double scale = 1.0) {
    CounterRng rng(seed);
    Matrix m(r, c);
    for (Eigen::Index j = 0; j < c; ++j)
        for (Eigen::Index i = 0; i < r; ++i) m(i, j) = scale * rng.normal();
    return m;
}

inline Architecture small_arch(int h = 4, int w = 4, int emb = 4, int h1 = 5, int h2 = 6, bool skip = true) {
    Architecture a;
    a.channels = 1;
    a.height = h;
    a.width = w;
    a.time_dim = emb;
    a.hidden1 = h1;
    a.hidden2 = h2;
    a.gated_skip = skip;
    return a;
}

// Initialised model with every parameter (gate included) perturbed so no block is trivially zero.
inline DenoiserModel random_model(const Architecture& a, std::uint64_t seed) {
    DenoiserModel m = init_model(a, seed);
    CounterRng rng(seed ^ 0xABCDEFULL);
    for (auto& p : m.params) p += 0.3 * rng.normal();
    return m;
}

inline std::filesystem::path scratch_dir(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("tprox_test_" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

} // namespace tprox::test
