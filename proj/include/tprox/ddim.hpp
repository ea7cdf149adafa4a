#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "tprox/denoiser.hpp"
#include "tprox/frame.hpp"
#include "tprox/schedule.hpp"

namespace tprox {

// Predicts noise for a batch of states (frame_dim x B) that all sit at timestep t.
using NoisePredictor = std::function<Matrix(const Matrix& x, int t)>;

struct DdimOptions {
    int steps = 100;
    bool clip_x0 = true;  // clamp the x0 estimate to the data range [0, 1]
    int batch = 256;
};

// Timesteps visited by the sampler, descending: T-1, T-1-stride, ... with stride = T / steps.
std::vector<int> ddim_timesteps(int T, int steps);

// Deterministic (eta = 0) DDIM from N(0, I). Initial noise of sample k is keyed by (seed, k).
std::vector<Frame> ddim_sample(const NoisePredictor& predict, const NoiseSchedule& sched, const DdimOptions& opt,
                               std::uint64_t seed, int n, int channels, int height, int width);

std::vector<Frame> ddim_sample(const DenoiserModel& model, const NoiseSchedule& sched, int steps,
                               std::uint64_t seed, int n);

} // namespace tprox
