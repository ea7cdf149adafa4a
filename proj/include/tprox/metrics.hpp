#pragma once

#include <cstdint>
#include <span>

#include <Eigen/Dense>

#include "tprox/frame.hpp"

namespace tprox {

// Fixed, never-trained conv features: 3x3 conv (8 ch) -> tanh -> 2x2 avg pool ->
// 3x3 conv (16 ch) -> tanh -> avg pool to 2x2 -> 64 features.
class FeatureExtractor {
public:
    static constexpr int kDim = 64;

    explicit FeatureExtractor(std::uint64_t seed, int channels = 1, int height = 16, int width = 16);

    std::uint64_t seed() const { return seed_; }
    Eigen::VectorXd features(const Frame& f) const;
    Eigen::MatrixXd features(std::span<const Frame> frames) const;  // kDim x n

private:
    std::uint64_t seed_;
    int channels_, height_, width_;
    Eigen::MatrixXd w1_;  // 8 x (channels * 9)
    Eigen::VectorXd b1_;
    Eigen::MatrixXd w2_;  // 16 x (8 * 9)
    Eigen::VectorXd b2_;
};

struct GaussianFit {
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;  // unbiased, symmetrised
    std::size_t n = 0;
};

GaussianFit fit_gaussian(const Eigen::MatrixXd& features);

// ||mu_a - mu_b||^2 + tr(S_a + S_b - 2 (S_a S_b)^(1/2)); the root trace comes from the eigenvalues
// of S_a^(1/2) S_b S_a^(1/2), negative ones clipped at 0.
double frechet_distance(const GaussianFit& a, const GaussianFit& b);

// Frechet distance between Gaussian fits of extracted features; both sets need >= min_samples.
double desk_fid(std::span<const Frame> a, std::span<const Frame> b, const FeatureExtractor& fx,
                std::size_t min_samples = 500);

// Mean Euclidean feature distance over `pairs` seeded random pairs (i != j).
double diversity(std::span<const Frame> samples, const FeatureExtractor& fx, std::uint64_t seed = 0,
                 int pairs = 1000, std::size_t min_samples = 100);

} // namespace tprox
