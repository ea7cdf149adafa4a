#include <doctest.h>

#include <cmath>

#include <Eigen/Eigenvalues>

#include "helpers.hpp"
#include "tprox/metrics.hpp"
#include "tprox/synthgen.hpp"

using namespace tprox;

namespace {

GaussianFit gaussian(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov) {
    GaussianFit g;
    g.mean = mean;
    g.cov = cov;
    g.n = 1000;
    return g;
}

Eigen::MatrixXd random_spd(int n, std::uint64_t seed) {
    const Matrix r = test::random_matrix(n, n, seed);
    return r * r.transpose() + 0.1 * Matrix::Identity(n, n);
}

Eigen::MatrixXd eigen_sqrt(const Eigen::MatrixXd& a) {
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a);
    return es.operatorSqrt();
}

std::vector<Frame> frames(int n, std::uint64_t seed) {
    const Dataset ds = generate_dataset((n + 12) / 13, ClipDistribution{}, seed);
    std::vector<Frame> out;
    for (const auto& c : ds.clips)
        for (const auto& f : c.frames)
            if (static_cast<int>(out.size()) < n) out.push_back(f);
    return out;
}

} // namespace

TEST_CASE("Frechet distance of diagonal Gaussians has a closed form") {
    Eigen::VectorXd ma(3), mb(3), va(3), vb(3);
    ma << 0.0, 1.0, -2.0;
    mb << 1.0, 1.0, 0.0;
    va << 1.0, 4.0, 0.25;
    vb << 9.0, 1.0, 0.25;
    double expected = (ma - mb).squaredNorm();
    for (int k = 0; k < 3; ++k) expected += std::pow(std::sqrt(va[k]) - std::sqrt(vb[k]), 2);
    const double fd = frechet_distance(gaussian(ma, va.asDiagonal()), gaussian(mb, vb.asDiagonal()));
    CHECK(fd == doctest::Approx(expected).epsilon(1e-12));
    CHECK(expected == doctest::Approx(5.0 + 4.0 + 1.0));
}

TEST_CASE("Frechet distance agrees with a reference matrix square root") {
    for (int trial = 0; trial < 10; ++trial) {
        const int n = 3 + trial;
        const Eigen::MatrixXd sa = random_spd(n, 10 + trial), sb = random_spd(n, 20 + trial);
        const Eigen::VectorXd ma = test::random_matrix(n, 1, 30 + trial).col(0);
        const Eigen::VectorXd mb = test::random_matrix(n, 1, 40 + trial).col(0);
        const Eigen::MatrixXd ra = eigen_sqrt(sa);
        const Eigen::MatrixXd inner = ra * sb * ra;
        const double ref = (ma - mb).squaredNorm() + (sa + sb - 2.0 * eigen_sqrt(0.5 * (inner + inner.transpose()))).trace();
        const double fd = frechet_distance(gaussian(ma, sa), gaussian(mb, sb));
        CHECK(test::rel_err(fd, ref) < 1e-9);
        CHECK(frechet_distance(gaussian(ma, sa), gaussian(ma, sa)) < 1e-9 * sa.trace());
        CHECK(test::rel_err(frechet_distance(gaussian(mb, sb), gaussian(ma, sa)), fd) < 1e-9);
    }
}

TEST_CASE("Gaussian fit uses the unbiased covariance") {
    Eigen::MatrixXd x(2, 4);
    x << 1, 2, 3, 4,
         2, 4, 6, 8;
    const auto g = fit_gaussian(x);
    CHECK(g.n == 4);
    CHECK(g.mean[0] == doctest::Approx(2.5));
    CHECK(g.cov(0, 0) == doctest::Approx(5.0 / 3.0));
    CHECK(g.cov(0, 1) == doctest::Approx(10.0 / 3.0));
    CHECK(g.cov(1, 1) == doctest::Approx(20.0 / 3.0));
    CHECK_THROWS_AS(fit_gaussian(Eigen::MatrixXd::Zero(2, 1)), std::invalid_argument);
}

TEST_CASE("feature extractor is deterministic and seed dependent") {
    const auto fs = frames(4, 3);
    const FeatureExtractor a(1234), b(1234), c(99);
    CHECK((a.features(fs[0]) - b.features(fs[0])).norm() == 0.0);
    CHECK((a.features(fs[0]) - c.features(fs[0])).norm() > 0.0);
    const auto m = a.features(fs);
    CHECK(m.rows() == FeatureExtractor::kDim);
    CHECK(m.cols() == 4);
    CHECK((m.col(2) - a.features(fs[2])).norm() < 1e-14);
    CHECK_THROWS_AS(FeatureExtractor(1, 1, 10, 10), std::invalid_argument);
    CHECK_THROWS_AS(a.features(Frame(1, 8, 8)), std::invalid_argument);
}

TEST_CASE("desk FID between sets") {
    const FeatureExtractor fx(1234);
    const auto a = frames(520, 5);
    const auto b = frames(520, 6);
    CHECK(desk_fid(a, a, fx) < 1e-8);
    const double same_dist = desk_fid(a, b, fx);
    CHECK(same_dist > 0.0);

    std::vector<Frame> grey(520, Frame(1, 16, 16, 0.5));
    CounterRng rng(4);
    for (auto& f : grey)
        for (auto& p : f.pixels) p += 0.01 * rng.normal();
    CHECK(desk_fid(a, grey, fx) > 10.0 * same_dist);

    const std::vector<Frame> few(a.begin(), a.begin() + 100);
    CHECK_THROWS_AS(desk_fid(few, a, fx), std::invalid_argument);
    CHECK_NOTHROW(desk_fid(few, few, fx, 100));
}

TEST_CASE("diversity") {
    const FeatureExtractor fx(1234);
    const auto a = frames(200, 8);
    const double d1 = diversity(a, fx, 3);
    CHECK(d1 > 0.0);
    CHECK(diversity(a, fx, 3) == d1);
    const std::vector<Frame> same(200, a.front());
    CHECK(diversity(same, fx, 3) == 0.0);
    CHECK_THROWS_AS(diversity(std::vector<Frame>(a.begin(), a.begin() + 10), fx), std::invalid_argument);
    CHECK_THROWS_AS(diversity(a, fx, 0, 0), std::invalid_argument);
}
