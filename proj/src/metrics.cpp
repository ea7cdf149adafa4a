#include "tprox/metrics.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "tprox/linalg.hpp"
#include "tprox/rng.hpp"

namespace tprox {

namespace {

constexpr int kC1 = 8;
constexpr int kC2 = 16;

// 3x3 same-padded convolution + tanh; `in` is channel-major (c, y, x).
Eigen::VectorXd conv3x3_tanh(const Eigen::VectorXd& in, int cin, int h, int w, const Eigen::MatrixXd& weights,
                             const Eigen::VectorXd& bias) {
    const int cout = static_cast<int>(weights.rows());
    Eigen::VectorXd out(static_cast<Eigen::Index>(cout) * h * w);
    Eigen::VectorXd patch(cin * 9);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (int c = 0; c < cin; ++c)
                for (int ky = 0; ky < 3; ++ky)
                    for (int kx = 0; kx < 3; ++kx) {
                        const int yy = y + ky - 1, xx = x + kx - 1;
                        patch[c * 9 + ky * 3 + kx] =
                            (yy < 0 || yy >= h || xx < 0 || xx >= w) ? 0.0 : in[(c * h + yy) * w + xx];
                    }
            const Eigen::VectorXd v = weights * patch + bias;
            for (int o = 0; o < cout; ++o) out[(o * h + y) * w + x] = std::tanh(v[o]);
        }
    }
    return out;
}

Eigen::VectorXd avg_pool(const Eigen::VectorXd& in, int c, int h, int w, int ph, int pw) {
    const int oh = h / ph, ow = w / pw;
    Eigen::VectorXd out = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(c) * oh * ow);
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) out[(ch * oh + y / ph) * ow + x / pw] += in[(ch * h + y) * w + x];
    return out / static_cast<double>(ph * pw);
}

} // namespace

FeatureExtractor::FeatureExtractor(std::uint64_t seed, int channels, int height, int width)
    : seed_(seed), channels_(channels), height_(height), width_(width) {
    if (channels < 1 || height % 4 != 0 || width % 4 != 0 || height < 4 || width < 4)
        throw std::invalid_argument("FeatureExtractor: frame dimensions must be positive multiples of 4");
    auto rng = CounterRng::keyed(seed, 0xFEA7u);
    auto init = [&](Eigen::MatrixXd& w, Eigen::VectorXd& b, int rows, int fan_in) {
        const double sd = 1.5 / std::sqrt(static_cast<double>(fan_in));
        w.resize(rows, fan_in);
        for (Eigen::Index k = 0; k < w.size(); ++k) w.data()[k] = sd * rng.normal();
        b.resize(rows);
        for (Eigen::Index k = 0; k < b.size(); ++k) b[k] = 0.1 * rng.normal();
    };
    init(w1_, b1_, kC1, channels * 9);
    init(w2_, b2_, kC2, kC1 * 9);
}

Eigen::VectorXd FeatureExtractor::features(const Frame& f) const {
    if (f.channels != channels_ || f.height != height_ || f.width != width_)
        throw std::invalid_argument("FeatureExtractor: frame shape mismatch");
    const Eigen::VectorXd x = Eigen::Map<const Eigen::VectorXd>(f.pixels.data(), static_cast<Eigen::Index>(f.size()));
    const auto h1 = conv3x3_tanh(x, channels_, height_, width_, w1_, b1_);
    const auto p1 = avg_pool(h1, kC1, height_, width_, 2, 2);
    const int h2 = height_ / 2, w2 = width_ / 2;
    const auto c2 = conv3x3_tanh(p1, kC1, h2, w2, w2_, b2_);
    return avg_pool(c2, kC2, h2, w2, h2 / 2, w2 / 2);
}

Eigen::MatrixXd FeatureExtractor::features(std::span<const Frame> frames) const {
    Eigen::MatrixXd out(kDim, static_cast<Eigen::Index>(frames.size()));
    for (std::size_t k = 0; k < frames.size(); ++k) out.col(static_cast<Eigen::Index>(k)) = features(frames[k]);
    return out;
}

GaussianFit fit_gaussian(const Eigen::MatrixXd& feats) {
    const auto n = feats.cols();
    if (n < 2) throw std::invalid_argument("fit_gaussian: need at least two samples");
    GaussianFit g;
    g.n = static_cast<std::size_t>(n);
    g.mean = feats.rowwise().mean();
    const Eigen::MatrixXd centered = feats.colwise() - g.mean;
    g.cov = centered * centered.transpose() / static_cast<double>(n - 1);
    g.cov = 0.5 * (g.cov + g.cov.transpose());
    return g;
}

double frechet_distance(const GaussianFit& a, const GaussianFit& b) {
    if (a.mean.size() != b.mean.size() || a.cov.rows() != b.cov.rows())
        throw std::invalid_argument("frechet_distance: dimension mismatch");
    if (!a.cov.allFinite() || !b.cov.allFinite() || !(a.cov.trace() > 0.0) || !(b.cov.trace() > 0.0))
        throw std::runtime_error("frechet_distance: degenerate covariance");
    const Eigen::MatrixXd root_a = psd_sqrt(a.cov);
    Eigen::MatrixXd m = root_a * b.cov * root_a;
    m = 0.5 * (m + m.transpose());
    const auto eig = jacobi_eigen(m, false);
    double tr_root = 0.0;
    for (Eigen::Index k = 0; k < eig.values.size(); ++k) tr_root += std::sqrt(std::max(eig.values[k], 0.0));
    return (a.mean - b.mean).squaredNorm() + a.cov.trace() + b.cov.trace() - 2.0 * tr_root;
}

double desk_fid(std::span<const Frame> a, std::span<const Frame> b, const FeatureExtractor& fx,
                std::size_t min_samples) {
    if (a.size() < min_samples || b.size() < min_samples)
        throw std::invalid_argument("desk_fid: need at least " + std::to_string(min_samples) + " samples per set");
    return frechet_distance(fit_gaussian(fx.features(a)), fit_gaussian(fx.features(b)));
}

double diversity(std::span<const Frame> samples, const FeatureExtractor& fx, std::uint64_t seed, int pairs,
                 std::size_t min_samples) {
    if (samples.size() < min_samples || samples.size() < 2)
        throw std::invalid_argument("diversity: need at least " + std::to_string(min_samples) + " samples");
    if (pairs < 1) throw std::invalid_argument("diversity: pairs must be positive");
    const Eigen::MatrixXd f = fx.features(samples);
    auto rng = CounterRng::keyed(seed, 0xD17Eu);
    const auto n = static_cast<std::uint64_t>(samples.size());
    double acc = 0.0;
    for (int p = 0; p < pairs; ++p) {
        const auto i = rng.below(n);
        auto j = rng.below(n - 1);
        if (j >= i) ++j;
        acc += (f.col(static_cast<Eigen::Index>(i)) - f.col(static_cast<Eigen::Index>(j))).norm();
    }
    return acc / pairs;
}

} // namespace tprox
