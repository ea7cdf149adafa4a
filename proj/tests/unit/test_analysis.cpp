#include <doctest.h>

#include <cmath>

#include <Eigen/Eigenvalues>

#include "helpers.hpp"
#include "tprox/analysis.hpp"
#include "tprox/linalg.hpp"

using namespace tprox;

namespace {

LocalGraph random_graph(int n, std::uint64_t seed, double density = 0.6) {
    CounterRng rng(seed);
    LocalGraph g;
    g.n = n;
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
            if (j == i + 1 || rng.uniform(0.0, 1.0) < density) g.edges.push_back({i, j, rng.uniform(0.05, 3.0)});
    return g;
}

std::vector<Vector> random_vectors(int n, int dim, std::uint64_t seed) {
    const Matrix m = test::random_matrix(dim, n, seed);
    std::vector<Vector> out;
    for (int i = 0; i < n; ++i) out.push_back(m.col(i));
    return out;
}

ProbeWindow probe(const Architecture& a, int K, std::uint64_t seed, int t = 300) {
    ProbeWindow w;
    w.noisy = test::random_matrix(a.frame_dim(), K, seed);
    w.t = t;
    w.eps = test::random_matrix(a.frame_dim(), 1, seed + 1).col(0);
    for (int k = 0; k + 1 < K; ++k) w.weights.push_back(0.5 + k);
    return w;
}

} // namespace

TEST_CASE("algebraic connectivity of reference graphs") {
    const std::vector<double> unit2 = {1.0, 1.0};
    const auto p3 = lambda2(LocalGraph::path(unit2));
    CHECK(p3.connected);
    CHECK(std::abs(p3.lambda2 - 1.0) < 1e-10);

    LocalGraph k4;
    k4.n = 4;
    for (int i = 0; i < 4; ++i)
        for (int j = i + 1; j < 4; ++j) k4.edges.push_back({i, j, 1.0});
    CHECK(std::abs(lambda2(k4).lambda2 - 4.0) < 1e-10);

    const std::vector<double> w = {2.5};
    CHECK(std::abs(lambda2(LocalGraph::path(w)).lambda2 - 5.0) < 1e-12);

    // Path with n nodes: 2 - 2 cos(pi / n).
    const std::vector<double> unit5(4, 1.0);
    CHECK(std::abs(lambda2(LocalGraph::path(unit5)).lambda2 - (2.0 - 2.0 * std::cos(M_PI / 5.0))) < 1e-10);

    LocalGraph split;
    split.n = 4;
    split.edges = {{0, 1, 1.0}, {2, 3, 1.0}};
    const auto s = lambda2(split);
    CHECK_FALSE(s.connected);
    CHECK(s.lambda2 == 0.0);
    CHECK_FALSE(is_connected(split));
}

TEST_CASE("laplacian structure") {
    const LocalGraph g = random_graph(6, 5);
    const Matrix L = laplacian(g);
    CHECK((L - L.transpose()).norm() == 0.0);
    CHECK((L * Vector::Ones(6)).norm() < 1e-12);
    for (const auto& e : g.edges) CHECK(L(e.i, e.j) == -e.w);
}

TEST_CASE("graph validation") {
    LocalGraph g;
    g.n = 3;
    g.edges = {{0, 0, 1.0}};
    CHECK_THROWS_AS(g.validate(), std::invalid_argument);
    g.edges = {{0, 1, -1.0}};
    CHECK_THROWS_AS(g.validate(), std::invalid_argument);
    g.edges = {{0, 5, 1.0}};
    CHECK_THROWS_AS(g.validate(), std::invalid_argument);
    g.edges = {{0, 1, 1.0}, {1, 0, 1.0}};
    CHECK_THROWS_AS(g.validate(), std::invalid_argument);
}

TEST_CASE("Jacobi eigensolver agrees with a reference solver") {
    for (int trial = 0; trial < 40; ++trial) {
        const int n = 2 + trial % 9;
        const Matrix r = test::random_matrix(n, n, 900 + trial);
        const Matrix a = 0.5 * (r + r.transpose());
        const auto mine = jacobi_eigen(a);
        const Eigen::SelfAdjointEigenSolver<Matrix> ref(a);
        CHECK((mine.values - ref.eigenvalues()).cwiseAbs().maxCoeff() < 1e-8);
        const Matrix recon = mine.vectors * mine.values.asDiagonal() * mine.vectors.transpose();
        CHECK((recon - a).norm() < 1e-9 * std::max(1.0, a.norm()));

        const LocalGraph g = random_graph(n, 40 + trial);
        const Eigen::SelfAdjointEigenSolver<Matrix> lref(laplacian(g));
        CHECK(std::abs(lambda2(g).lambda2 - lref.eigenvalues()[1]) < 1e-8);
    }
}

TEST_CASE("3x3 eigenvalues match the characteristic polynomial") {
    const Matrix r = test::random_matrix(3, 3, 77);
    const Matrix a = r + r.transpose();
    const auto e = jacobi_eigen(a, false);
    for (int k = 0; k < 3; ++k) {
        const double det = (a - e.values[k] * Matrix::Identity(3, 3)).determinant();
        CHECK(std::abs(det) < 1e-9 * std::pow(a.norm(), 3));
    }
}

TEST_CASE("spectral norm and PSD square root") {
    for (int trial = 0; trial < 10; ++trial) {
        const Matrix m = test::random_matrix(7 + trial, 4 + trial % 3, 50 + trial);
        const Eigen::JacobiSVD<Matrix> svd(m);
        CHECK(test::rel_err(spectral_norm(m), svd.singularValues()[0]) < 1e-10);
        const Matrix s = m.transpose() * m;
        const Matrix root = psd_sqrt(s);
        CHECK((root * root - s).norm() < 1e-9 * s.norm());
    }
    CHECK(spectral_norm(Matrix::Zero(3, 4)) == 0.0);
}

TEST_CASE("Dirichlet energies by hand") {
    const std::vector<Vector> f = {Vector::Zero(2), Vector::Ones(2), Vector::Constant(2, 3.0)};
    const std::vector<double> w = {2.0, 0.5};
    const auto g = LocalGraph::path(w);
    // 1/2 (2 * 2 + 0.5 * 8) = 4
    CHECK(dirichlet_energies(f, nullptr, g).e_s == doctest::Approx(4.0));
    CHECK_FALSE(dirichlet_energies(f, nullptr, g).e_g.has_value());
    const std::vector<Matrix> J = {Matrix::Zero(2, 3), Matrix::Ones(2, 3), Matrix::Ones(2, 3)};
    CHECK(*dirichlet_energies(f, &J, g).e_g == doctest::Approx(0.5 * 2.0 * 6.0));
}

TEST_CASE("Poincare inequality holds on random connected graphs") {
    for (int trial = 0; trial < 200; ++trial) {
        const int n = 2 + trial % 7;
        const LocalGraph g = random_graph(n, 7000 + trial, 0.4);
        const auto u = random_vectors(n, 1 + trial % 5, 8000 + trial);
        const auto c = verify_poincare(u, g);
        CHECK(c.holds);
        CHECK(c.lhs <= c.rhs * (1 + 1e-9) + 1e-15);
    }
    // Equality for the Fiedler vector of a path.
    const std::vector<double> unit(2, 1.0);
    const auto g = LocalGraph::path(unit);
    const std::vector<Vector> fiedler = {Vector::Constant(1, 1.0), Vector::Constant(1, 0.0), Vector::Constant(1, -1.0)};
    const auto eq = verify_poincare(fiedler, g);
    CHECK(eq.lhs == doctest::Approx(eq.rhs));

    LocalGraph split;
    split.n = 3;
    split.edges = {{0, 1, 1.0}};
    CHECK_THROWS(verify_poincare(random_vectors(3, 2, 1), split));
}

TEST_CASE("pairwise decomposition is exact for gradients of the field's half square") {
    for (int trial = 0; trial < 20; ++trial) {
        const Matrix Ji = test::random_matrix(5, 9, 10 + trial), Jj = test::random_matrix(5, 9, 20 + trial);
        const Vector fi = test::random_matrix(5, 1, 30 + trial).col(0), fj = test::random_matrix(5, 1, 40 + trial).col(0);
        const Vector ui = Ji.transpose() * fi, uj = Jj.transpose() * fj;
        CHECK(decomposition_residual(ui, uj, Ji, Jj, fi, fj) < 1e-12 * (ui - uj).norm());

        const double G = std::max(spectral_norm(Ji), spectral_norm(Jj));
        const double F = std::max(fi.norm(), fj.norm());
        const auto b = verify_pairwise_bound(ui, uj, fi - fj, Ji - Jj, G, F);
        CHECK(b.holds);
        CHECK(b.slack >= 0.0);
    }
}

TEST_CASE("window analysis on a small network") {
    const Architecture a = test::small_arch(4, 4, 4, 6, 5);
    const DenoiserModel m = test::random_model(a, 17);
    for (int K : {2, 3, 5}) {
        const ProbeWindow w = probe(a, K, 100 + K);
        const AnalysisReport r = verify_variance_bound(m, w);
        INFO("K = " << K);
        CHECK(r.bound_holds);
        CHECK(r.grad_variance <= r.poincare_rhs * (1 + 1e-9));
        CHECK(r.poincare_rhs <= r.bound_rhs * (1 + 1e-9));
        CHECK(r.pairwise.size() == static_cast<std::size_t>(K - 1));
        for (const auto& p : r.pairwise) CHECK(p.holds);
        for (const auto& d : r.decomposition) CHECK(d.residual_centered < 1e-10 * std::max(1.0, d.scale));
        CHECK(r.d_ij_norms.size() == static_cast<std::size_t>(K - 1));
        CHECK(r.lambda2 == doctest::Approx(lambda2(LocalGraph::path(w.weights)).lambda2));

        // Probe statistics reproduce the same variance and smoothness energy without Jacobians.
        const std::vector<ProbeWindow> ws = {w};
        const auto st = probe_statistics(m, ws);
        CHECK(st.grad_variance == doctest::Approx(r.grad_variance).epsilon(1e-10));
        CHECK(st.e_s == doctest::Approx(r.e_s).epsilon(1e-10));
        CHECK(st.grad_norm == doctest::Approx(r.grad_norm).epsilon(1e-10));
    }
}

TEST_CASE("identical frames in a window have zero gradient variance") {
    const Architecture a = test::small_arch(4, 4, 4, 6, 5);
    const DenoiserModel m = test::random_model(a, 3);
    ProbeWindow w = probe(a, 3, 9);
    w.noisy.col(1) = w.noisy.col(0);
    w.noisy.col(2) = w.noisy.col(0);
    const auto r = verify_variance_bound(m, w);
    CHECK(r.grad_variance < 1e-24);
    CHECK(r.e_s < 1e-28);
    CHECK(r.e_g < 1e-28);
}

TEST_CASE("dynamics tracking") {
    const Architecture a = test::small_arch(4, 4, 4, 6, 5);
    const DenoiserModel m0 = test::random_model(a, 1);
    DenoiserModel m1 = m0;
    for (auto& p : m1.params) p += 0.01;
    const std::vector<CheckpointParams> cps = {{0, m0.params}, {10, m1.params}};
    const std::vector<ProbeWindow> probes = {probe(a, 3, 5), probe(a, 3, 6, 800)};
    const auto pts = track_dynamics(a, cps, probes);
    REQUIRE(pts.size() == 2);
    CHECK(pts[0].param_travel == 0.0);
    CHECK(pts[1].param_travel == doctest::Approx(0.01 * std::sqrt(static_cast<double>(m0.size()))));
    CHECK(std::isfinite(pts[1].mean_d_ij));
    CHECK(std::isnan(track_dynamics(a, cps, probes, {}, 10)[0].mean_d_ij));
    const std::vector<double> norms = {1.5, 2.5};
    CHECK(track_dynamics(a, cps, probes, norms)[1].grad_norm == 2.5);
    CHECK(param_distance(std::vector<double>{0, 3}, std::vector<double>{4, 0}) == 5.0);
    CHECK_THROWS(param_distance(std::vector<double>{0}, std::vector<double>{1, 2}));
}
