#include "tprox/ddim.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "tprox/rng.hpp"

namespace tprox {

std::vector<int> ddim_timesteps(int T, int steps) {
    if (steps < 1) throw std::invalid_argument("ddim: steps must be >= 1");
    if (steps > T) throw std::invalid_argument("ddim: steps exceeds schedule length");
    const int stride = T / steps;
    std::vector<int> ts(static_cast<std::size_t>(steps));
    for (int i = 0; i < steps; ++i) ts[i] = T - 1 - i * stride;
    return ts;
}

std::vector<Frame> ddim_sample(const NoisePredictor& predict, const NoiseSchedule& sched, const DdimOptions& opt,
                               std::uint64_t seed, int n, int channels, int height, int width) {
    const auto ts = ddim_timesteps(sched.T, opt.steps);
    if (n < 0) throw std::invalid_argument("ddim: negative sample count");
    const int d = channels * height * width;
    std::vector<Frame> out;
    out.reserve(static_cast<std::size_t>(n));
    const int chunk = std::max(1, opt.batch);

    for (int start = 0; start < n; start += chunk) {
        const int B = std::min(chunk, n - start);
        Matrix x(d, B);
        for (int j = 0; j < B; ++j) {
            auto rng = CounterRng::keyed(seed, 0xDD1Au, static_cast<std::uint64_t>(start + j));
            for (int k = 0; k < d; ++k) x(k, j) = rng.normal();
        }
        for (std::size_t i = 0; i < ts.size(); ++i) {
            const int t = ts[i];
            const double ab = sched.alpha_bar[t];
            const double ab_prev = i + 1 < ts.size() ? sched.alpha_bar[ts[i + 1]] : 1.0;
            const Matrix eps = predict(x, t);
            if (eps.rows() != x.rows() || eps.cols() != x.cols())
                throw std::runtime_error("ddim: predictor returned wrong shape");
            Matrix x0 = (x - std::sqrt(1.0 - ab) * eps) / std::sqrt(ab);
            if (opt.clip_x0) x0 = x0.cwiseMax(0.0).cwiseMin(1.0);
            // Direction term uses the noise implied by the (possibly clipped) x0.
            const Matrix eps_used = opt.clip_x0 ? Matrix((x - std::sqrt(ab) * x0) / std::sqrt(1.0 - ab)) : eps;
            x = std::sqrt(ab_prev) * x0 + std::sqrt(1.0 - ab_prev) * eps_used;
        }
        for (int j = 0; j < B; ++j) out.push_back(column_to_frame(x, j, channels, height, width));
    }
    return out;
}

std::vector<Frame> ddim_sample(const DenoiserModel& model, const NoiseSchedule& sched, int steps,
                               std::uint64_t seed, int n) {
    const auto& a = model.arch;
    NoisePredictor predict = [&model](const Matrix& x, int t) {
        const std::vector<int> tv(static_cast<std::size_t>(x.cols()), t);
        return forward_batch(model, x, tv).output;
    };
    DdimOptions opt;
    opt.steps = steps;
    return ddim_sample(predict, sched, opt, seed, n, a.channels, a.height, a.width);
}

} // namespace tprox
