#include "tprox/schedule.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "tprox/rng.hpp"

namespace tprox {

NoiseSchedule build_schedule(int T, double beta_start, double beta_end) {
    if (T < 2) throw std::invalid_argument("build_schedule: T must be >= 2");
    if (!std::isfinite(beta_start) || !std::isfinite(beta_end))
        throw std::invalid_argument("build_schedule: non-finite beta bound");
    if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0))
        throw std::invalid_argument("build_schedule: need 0 < beta_start <= beta_end < 1");

    NoiseSchedule s;
    s.T = T;
    s.beta.resize(T);
    s.alpha_bar.resize(T);
    const double step = (beta_end - beta_start) / static_cast<double>(T - 1);
    double prod = 1.0;
    for (int t = 0; t < T; ++t) {
        s.beta[t] = beta_start + t * step;
        prod *= 1.0 - s.beta[t];
        s.alpha_bar[t] = prod;
    }
    return s;
}

Frame corrupt_independent(const Frame& frame, int t, const std::vector<double>& eps,
                          const NoiseSchedule& sched) {
    if (t < 0 || t >= sched.T)
        throw std::out_of_range("corrupt_independent: t=" + std::to_string(t) + " outside schedule");
    if (eps.size() != frame.size())
        throw std::invalid_argument("corrupt_independent: noise shape does not match frame");
    const double a = std::sqrt(sched.alpha_bar[t]);
    const double b = std::sqrt(1.0 - sched.alpha_bar[t]);
    Frame out(frame.channels, frame.height, frame.width);
    for (std::size_t k = 0; k < frame.size(); ++k) out.pixels[k] = a * frame.pixels[k] + b * eps[k];
    return out;
}

FrameWindow corrupt_window(FrameWindow window, const NoiseSchedule& sched, std::uint64_t rng_seed) {
    if (window.frames.empty()) throw std::invalid_argument("corrupt_window: empty window");
    CounterRng rng(rng_seed);
    window.tau = static_cast<int>(rng.below(static_cast<std::uint64_t>(sched.T)));
    window.eps.assign(window.frames.front().size(), 0.0);
    rng.fill_normal(window.eps);
    window.noisy.clear();
    window.noisy.reserve(window.frames.size());
    for (const auto& f : window.frames) {
        require_same_shape(f, window.frames.front(), "corrupt_window");
        window.noisy.push_back(corrupt_independent(f, window.tau, window.eps, sched));
    }
    return window;
}

} // namespace tprox
