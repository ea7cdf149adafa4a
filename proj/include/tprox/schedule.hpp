#pragma once

#include <cstdint>
#include <vector>

#include "tprox/frame.hpp"

namespace tprox {

// Discrete forward-process schedule with T steps indexed 0..T-1.
struct NoiseSchedule {
    int T = 0;
    std::vector<double> beta;
    std::vector<double> alpha_bar;
};

// Linear beta schedule; alpha_bar is the running product of (1 - beta).
NoiseSchedule build_schedule(int T = 1000, double beta_start = 1e-4, double beta_end = 0.02);

// sqrt(alpha_bar[t]) * x + sqrt(1 - alpha_bar[t]) * eps.
Frame corrupt_independent(const Frame& frame, int t, const std::vector<double>& eps,
                          const NoiseSchedule& sched);

// K consecutive clean frames plus the single (tau, eps) pair used to corrupt all of them.
struct FrameWindow {
    std::vector<Frame> frames;
    int tau = -1;
    std::vector<double> eps;
    std::vector<Frame> noisy;
};

// Draws tau ~ U{0..T-1} and eps ~ N(0, I) from `rng_seed`, then corrupts every frame with them.
FrameWindow corrupt_window(FrameWindow window, const NoiseSchedule& sched, std::uint64_t rng_seed);

} // namespace tprox
