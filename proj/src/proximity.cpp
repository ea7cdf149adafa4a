#include "tprox/proximity.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <Eigen/Dense>

namespace tprox {

namespace {

double sample_clamped(const Frame& f, int c, int y, int x) {
    y = std::clamp(y, 0, f.height - 1);
    x = std::clamp(x, 0, f.width - 1);
    return f.at(c, y, x);
}

// Strict order used to break SSD ties.
bool preferred(int dy, int dx, int best_dy, int best_dx) {
    const int m = dy * dy + dx * dx;
    const int mb = best_dy * best_dy + best_dx * best_dx;
    if (m != mb) return m < mb;
    if (dy != best_dy) return dy < best_dy;
    return dx < best_dx;
}

// Extended precision: the finite difference of two nearby noised distances cancels most digits.
long double normalised_distance(const Frame& a, const Frame& b, int s, const std::vector<double>& eps,
                                const NoiseSchedule& sched) {
    if (s < 0 || s >= sched.T) throw std::out_of_range("pi_divergence: step outside schedule");
    if (eps.size() != a.size()) throw std::invalid_argument("pi_divergence: noise shape does not match frame");
    const long double ab = sched.alpha_bar[s];
    const long double sa = std::sqrt(ab), sb = std::sqrt(1.0L - ab);
    long double acc = 0.0L;
    for (std::size_t k = 0; k < a.size(); ++k) {
        const long double d = (sa * a.pixels[k] + sb * eps[k]) - (sa * b.pixels[k] + sb * eps[k]);
        acc += d * d;
    }
    return acc / static_cast<long double>(a.size());
}

} // namespace

std::vector<BlockMatch> match_blocks(const Frame& fi, const Frame& fj, const FlowConfig& cfg) {
    require_same_shape(fi, fj, "estimate_flow");
    if (cfg.block < 1 || cfg.radius < 0) throw std::invalid_argument("estimate_flow: invalid block/radius");
    if (!(cfg.smoothness >= 0.0) || !std::isfinite(cfg.smoothness))
        throw std::invalid_argument("estimate_flow: smoothness must be finite and >= 0");
    if (fi.height % cfg.block != 0 || fi.width % cfg.block != 0)
        throw std::invalid_argument("estimate_flow: block size must divide frame dimensions");

    const int r = cfg.radius, B = cfg.block, side = 2 * r + 1;
    std::vector<BlockMatch> out;
    std::vector<double> ssd(static_cast<std::size_t>(side) * side);
    for (int by = 0; by < fi.height; by += B) {
        for (int bx = 0; bx < fi.width; bx += B) {
            double best = std::numeric_limits<double>::infinity(), worst = 0.0;
            int best_dy = 0, best_dx = 0;
            for (int dy = -r; dy <= r; ++dy) {
                for (int dx = -r; dx <= r; ++dx) {
                    double acc = 0.0;
                    for (int c = 0; c < fi.channels; ++c)
                        for (int y = by; y < by + B; ++y)
                            for (int x = bx; x < bx + B; ++x) {
                                const double diff = sample_clamped(fj, c, y + dy, x + dx) - fi.at(c, y, x);
                                acc += diff * diff;
                            }
                    ssd[static_cast<std::size_t>(dy + r) * side + (dx + r)] = acc;
                    worst = std::max(worst, acc);
                    if (acc < best || (acc == best && preferred(dy, dx, best_dy, best_dx))) {
                        best = acc;
                        best_dy = dy;
                        best_dx = dx;
                    }
                }
            }
            BlockMatch m;
            m.dy = best_dy;
            m.dx = best_dx;
            m.sub_dy = best_dy;
            m.sub_dx = best_dx;
            m.confidence = worst - best;
            // An exact match is already the answer; refinement only moves inexact minima.
            if (cfg.subpixel && best > 0.0) {
                auto at = [&](int dy, int dx) { return ssd[static_cast<std::size_t>(dy + r) * side + (dx + r)]; };
                auto vertex = [](double lo, double mid, double hi) {
                    const double den = lo - 2.0 * mid + hi;
                    return den > 0.0 ? 0.5 * (lo - hi) / den : 0.0;
                };
                if (best_dy > -r && best_dy < r)
                    m.sub_dy += vertex(at(best_dy - 1, best_dx), best, at(best_dy + 1, best_dx));
                if (best_dx > -r && best_dx < r)
                    m.sub_dx += vertex(at(best_dy, best_dx - 1), best, at(best_dy, best_dx + 1));
            }
            out.push_back(m);
        }
    }
    return out;
}

FlowField estimate_flow(const Frame& fi, const Frame& fj, const FlowConfig& cfg) {
    const std::vector<BlockMatch> matches = match_blocks(fi, fj, cfg);
    const int B = cfg.block;
    const int rows = fi.height / B, cols = fi.width / B, n = rows * cols;

    Eigen::VectorXd vy(n), vx(n);
    for (int k = 0; k < n; ++k) {
        vy[k] = matches[k].sub_dy;
        vx[k] = matches[k].sub_dx;
    }
    if (cfg.smoothness > 0.0 && n > 1) {
        Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n, n);
        Eigen::VectorXd rhs_y(n), rhs_x(n);
        for (int k = 0; k < n; ++k) {
            const double c = matches[k].confidence;
            A(k, k) += c + 1e-12;
            rhs_y[k] = c * vy[k];
            rhs_x[k] = c * vx[k];
        }
        const double s = cfg.smoothness;
        auto couple = [&](int k, int l) {
            A(k, k) += s;
            A(l, l) += s;
            A(k, l) -= s;
            A(l, k) -= s;
        };
        for (int by = 0; by < rows; ++by)
            for (int bx = 0; bx < cols; ++bx) {
                const int k = by * cols + bx;
                if (by + 1 < rows) couple(k, k + cols);
                if (bx + 1 < cols) couple(k, k + 1);
            }
        const Eigen::LDLT<Eigen::MatrixXd> ldlt(A);
        vy = ldlt.solve(rhs_y);
        vx = ldlt.solve(rhs_x);
    }

    FlowField flow;
    flow.height = fi.height;
    flow.width = fi.width;
    flow.radius = cfg.radius;
    flow.vectors.resize(static_cast<std::size_t>(fi.height) * fi.width);
    for (int y = 0; y < fi.height; ++y)
        for (int x = 0; x < fi.width; ++x) {
            const int k = (y / B) * cols + x / B;
            flow.vectors[static_cast<std::size_t>(y) * fi.width + x] = {vy[k], vx[k]};
        }
    return flow;
}

double pi_flow(const FlowField& flow) {
    if (flow.vectors.empty()) return 0.0;
    double acc = 0.0;
    for (const auto& v : flow.vectors) acc += v.dy * v.dy + v.dx * v.dx;
    return acc / static_cast<double>(flow.vectors.size());
}

double pi_flow(const Frame& fi, const Frame& fj, const FlowConfig& cfg) { return pi_flow(estimate_flow(fi, fj, cfg)); }

double pi_divergence(const Frame& fi, const Frame& fj, int t, int dt, const std::vector<double>& eps,
                     const NoiseSchedule& sched) {
    require_same_shape(fi, fj, "pi_divergence");
    if (dt <= 0) throw std::invalid_argument("pi_divergence: dt must be positive");
    if (dt >= sched.T) throw std::invalid_argument("pi_divergence: dt must be smaller than T");
    if (t < 0 || t >= sched.T) throw std::out_of_range("pi_divergence: t outside schedule");
    const int lo = std::max(t - dt, 0);
    const int hi = std::min(t + dt, sched.T - 1);
    const long double d_hi = normalised_distance(fi, fj, hi, eps, sched);
    const long double d_lo = normalised_distance(fi, fj, lo, eps, sched);
    return static_cast<double>((d_hi - d_lo) / static_cast<long double>(hi - lo));
}

std::string to_string(ProximityKind k) {
    switch (k) {
    case ProximityKind::flow: return "flow";
    case ProximityKind::divergence: return "divergence";
    case ProximityKind::uniform: return "uniform";
    }
    return "unknown";
}

double weight(double pi, ProximityKind kind, const WeightFloors& floors) {
    if (!std::isfinite(pi)) throw std::invalid_argument("weight: non-finite proximity");
    switch (kind) {
    case ProximityKind::flow:
        if (!(floors.delta > 0.0)) throw std::invalid_argument("weight: delta must be positive");
        if (pi < 0.0) throw std::invalid_argument("weight: flow proximity must be >= 0");
        return 1.0 / (pi + floors.delta);
    case ProximityKind::divergence:
        if (!(floors.eps_w > 0.0)) throw std::invalid_argument("weight: eps_w must be positive");
        return 1.0 / (floors.eps_w + std::sqrt(std::abs(pi)));
    case ProximityKind::uniform:
        return 1.0;
    }
    throw std::invalid_argument("weight: unknown kind");
}

ProximityWeight make_weight(double pi, ProximityKind kind, const WeightFloors& floors) {
    return ProximityWeight{pi, weight(pi, kind, floors), kind};
}

} // namespace tprox
