#include <doctest.h>

#include "helpers.hpp"
#include "tprox/errors.hpp"

using namespace tprox;
using test::rel_err;

namespace {

double silu(double z) { return z / (1.0 + std::exp(-z)); }

// Straight loops over the flat parameter vector, no Eigen products.
std::vector<double> reference_forward(const DenoiserModel& m, const std::vector<double>& x, int t) {
    const auto& a = m.arch;
    const auto L = a.layout();
    const int d = a.frame_dim(), in = a.input_dim();
    std::vector<double> input(x);
    input.resize(static_cast<std::size_t>(in));
    time_embedding(t, a.time_dim, input.data() + d);
    auto W = [&](std::size_t off, int rows, int r, int c) { return m.params[off + static_cast<std::size_t>(c) * rows + r]; };
    std::vector<double> h1(a.hidden1), h2(a.hidden2), out(d);
    for (int r = 0; r < a.hidden1; ++r) {
        double s = m.params[L.b1 + r];
        for (int c = 0; c < in; ++c) s += W(L.w1, a.hidden1, r, c) * input[c];
        h1[r] = silu(s);
    }
    for (int r = 0; r < a.hidden2; ++r) {
        double s = m.params[L.b2 + r];
        for (int c = 0; c < a.hidden1; ++c) s += W(L.w2, a.hidden2, r, c) * h1[c];
        h2[r] = silu(s);
    }
    double g = 0.0;
    if (a.gated_skip) {
        g = m.params[L.gate + a.time_dim];
        for (int k = 0; k < a.time_dim; ++k) g += m.params[L.gate + k] * input[d + k];
        g /= std::sqrt(static_cast<double>(d));
    }
    for (int r = 0; r < d; ++r) {
        double s = m.params[L.b3 + r];
        for (int c = 0; c < a.hidden2; ++c) s += W(L.w3, d, r, c) * h2[c];
        out[r] = s + g * x[r];
    }
    return out;
}

// L = sum c .* f + 1/2 ||f||^2 over a batch.
double probe_loss(const DenoiserModel& m, const Matrix& x, std::span<const int> t, const Matrix& c) {
    const auto tape = forward_batch(m, x, t);
    return (c.cwiseProduct(tape.output)).sum() + 0.5 * tape.output.squaredNorm();
}

} // namespace

TEST_CASE("parameter counts of the presets") {
    CHECK(Architecture::preset("base").param_count() == 86'561);
    CHECK(Architecture::preset("tiny").param_count() == 4'505);
    auto literal = Architecture::preset("base");
    literal.gated_skip = false;
    CHECK(literal.param_count() == 86'528);
    CHECK_THROWS_AS(Architecture::preset("huge"), std::invalid_argument);
}

TEST_CASE("descriptor round-trips") {
    for (bool skip : {true, false}) {
        auto a = test::small_arch(4, 8, 6, 3, 7, skip);
        CHECK(Architecture::parse(a.descriptor()) == a);
    }
    CHECK(Architecture::parse("mlp c=1 h=16 w=16 emb=32 hidden=128,128 act=silu").gated_skip == false);
    CHECK_THROWS_AS(Architecture::parse("cnn c=1"), std::invalid_argument);
    CHECK_THROWS_AS(Architecture::parse("mlp c=1 h=16 w=16 emb=32 hidden=128 act=silu"), std::invalid_argument);
}

TEST_CASE("zeroed output head and gate give a zero field") {
    const auto a = test::small_arch();
    auto m = test::random_model(a, 1);
    const auto L = a.layout();
    std::fill(m.params.begin() + static_cast<long>(L.w3), m.params.end(), 0.0);
    Frame f(1, 4, 4);
    for (std::size_t k = 0; k < f.size(); ++k) f.pixels[k] = 0.1 * static_cast<double>(k);
    const auto out = forward(m, f, 17);
    for (double v : out.pixels) CHECK(v == 0.0);
}

TEST_CASE("forward matches a scalar reference evaluation") {
    for (bool skip : {true, false}) {
        const auto a = test::small_arch(4, 4, 6, 7, 5, skip);
        const auto m = test::random_model(a, 2);
        const Matrix x = test::random_matrix(16, 3, 5);
        const std::vector<int> ts = {0, 250, 999};
        const auto tape = forward_batch(m, x, ts);
        for (int j = 0; j < 3; ++j) {
            std::vector<double> col(x.col(j).data(), x.col(j).data() + 16);
            const auto ref = reference_forward(m, col, ts[j]);
            for (int k = 0; k < 16; ++k) CHECK(rel_err(tape.output(k, j), ref[k], 1e-12) < 1e-12);
        }
        const auto again = forward_batch(m, x, ts);
        CHECK(again.output == tape.output);
    }
}

TEST_CASE("time embedding values") {
    double e[4];
    time_embedding(0, 4, e);
    CHECK(e[0] == 0.0);
    CHECK(e[2] == 1.0);
    time_embedding(3, 4, e);
    CHECK(e[0] == doctest::Approx(std::sin(3.0)));
    CHECK(e[1] == doctest::Approx(std::sin(3.0 / 100.0)));
    CHECK(e[3] == doctest::Approx(std::cos(3.0 / 100.0)));
}

TEST_CASE("reverse-mode gradient matches central differences") {
    const auto a = test::small_arch(4, 4, 6, 5, 6, true);
    auto m = test::random_model(a, 3);
    const Matrix x = test::random_matrix(16, 4, 6);
    const std::vector<int> ts = {3, 100, 500, 900};
    const Matrix c = test::random_matrix(16, 4, 7);
    const auto tape = forward_batch(m, x, ts);
    const Matrix dout = c + tape.output;
    const auto g = backward(m, tape, dout);
    CounterRng pick(8);
    const double h = 1e-5;
    for (int s = 0; s < 200; ++s) {
        const auto k = pick.below(m.size());
        const double orig = m.params[k];
        m.params[k] = orig + h;
        const double lp = probe_loss(m, x, ts, c);
        m.params[k] = orig - h;
        const double lm = probe_loss(m, x, ts, c);
        m.params[k] = orig;
        const double fd = (lp - lm) / (2 * h);
        CHECK(rel_err(g[k], fd, 1e-7) < 1e-4);
    }
}

TEST_CASE("gradient scales linearly with the loss") {
    const auto a = test::small_arch();
    const auto m = test::random_model(a, 4);
    const Matrix x = test::random_matrix(16, 2, 1);
    const std::vector<int> ts = {10, 20};
    const auto tape = forward_batch(m, x, ts);
    const Matrix dout = test::random_matrix(16, 2, 2);
    const auto g1 = backward(m, tape, dout);
    const auto g4 = backward(m, tape, 4.0 * dout);
    const auto g3 = backward(m, tape, 3.0 * dout);
    for (std::size_t k = 0; k < g1.size(); ++k) {
        CHECK(rel_err(g4[k], 4.0 * g1[k], 1e-300) < 1e-14);
        CHECK(rel_err(g3[k], 3.0 * g1[k], 1e-300) < 1e-13);
    }
}

TEST_CASE("head gradient of ||f||^2 has the closed form 2 f a2^T") {
    const auto a = test::small_arch();
    const auto m = test::random_model(a, 5);
    const Matrix x = test::random_matrix(16, 3, 3);
    const std::vector<int> ts = {1, 2, 3};
    const auto tape = forward_batch(m, x, ts);
    const auto g = backward(m, tape, 2.0 * tape.output);
    const Matrix expected = 2.0 * tape.output * tape.a2.transpose();
    const auto L = a.layout();
    for (int c = 0; c < a.hidden2; ++c)
        for (int r = 0; r < 16; ++r)
            CHECK(rel_err(g[L.w3 + static_cast<std::size_t>(c) * 16 + r], expected(r, c)) < 1e-12);
    const Vector b3 = 2.0 * tape.output.rowwise().sum();
    for (int r = 0; r < 16; ++r) CHECK(rel_err(g[L.b3 + r], b3[r]) < 1e-12);
}

TEST_CASE("per-sample gradients agree with the batched gradient") {
    const auto a = test::small_arch();
    const auto m = test::random_model(a, 6);
    const Matrix x = test::random_matrix(16, 4, 9);
    const Matrix eps = test::random_matrix(16, 4, 10);
    const std::vector<int> ts = {5, 50, 500, 700};
    const auto b = per_sample_gradients(m, x, ts, eps);
    REQUIRE(b.per_sample_grads.size() == 4);
    CHECK_FALSE(b.jacobians.has_value());
    const auto tape = forward_batch(m, x, ts);
    const auto batched = backward(m, tape, (2.0 / 4.0) * (tape.output - eps));
    for (std::size_t k = 0; k < batched.size(); ++k) CHECK(rel_err(b.mean_grad[k], batched[k], 1e-12) < 1e-12);

    // Loop oracle for the variance and per-sample losses
    double var = 0.0;
    for (const auto& u : b.per_sample_grads) {
        Vector mean = Vector::Zero(u.size());
        for (const auto& v : b.per_sample_grads) mean += v / 4.0;
        for (Eigen::Index k = 0; k < u.size(); ++k) var += (u[k] - mean[k]) * (u[k] - mean[k]);
    }
    CHECK(rel_err(b.variance(), var / 4.0) < 1e-12);
    for (int i = 0; i < 4; ++i) CHECK(rel_err(b.losses[i], (tape.output.col(i) - eps.col(i)).squaredNorm()) < 1e-14);
}

TEST_CASE("copies of one sample have identical per-sample gradients") {
    const auto a = test::small_arch();
    const auto m = test::random_model(a, 7);
    Matrix x(16, 5), eps(16, 5);
    x.colwise() = test::random_matrix(16, 1, 1).col(0);
    eps.colwise() = test::random_matrix(16, 1, 2).col(0);
    const std::vector<int> ts(5, 321);
    const auto b = per_sample_gradients(m, x, ts, eps);
    for (const auto& u : b.per_sample_grads) CHECK((u - b.per_sample_grads[0]).norm() < 1e-12 * u.norm());
    CHECK(b.variance() < 1e-24 * b.mean_grad.squaredNorm());
}

TEST_CASE("Jacobian checks") {
    const auto a = test::small_arch(4, 4, 4, 4, 5, true);
    auto m = test::random_model(a, 8);
    Frame f(1, 4, 4);
    const Matrix xr = test::random_matrix(16, 1, 4);
    for (int k = 0; k < 16; ++k) f.pixels[k] = xr(k, 0);
    const int t = 123;
    const Matrix J = jacobian(m, f, t);
    REQUIRE(J.rows() == 16);
    REQUIRE(J.cols() == static_cast<Eigen::Index>(m.size()));

    SUBCASE("columns match directional differences") {
        const double h = 1e-5;
        CounterRng pick(3);
        for (int s = 0; s < 40; ++s) {
            const auto k = pick.below(m.size());
            const double orig = m.params[k];
            m.params[k] = orig + h;
            const auto fp = forward(m, f, t);
            m.params[k] = orig - h;
            const auto fm = forward(m, f, t);
            m.params[k] = orig;
            for (int r = 0; r < 16; ++r)
                CHECK(rel_err(J(r, static_cast<Eigen::Index>(k)), (fp.pixels[r] - fm.pixels[r]) / (2 * h), 1e-7) < 1e-4);
        }
    }
    SUBCASE("J^T v equals the gradient of v . f") {
        const Vector v = test::random_matrix(16, 1, 12).col(0);
        const Matrix x = Eigen::Map<const Vector>(f.pixels.data(), 16);
        const int ts[1] = {t};
        const auto tape = forward_batch(m, x, ts);
        const auto g = backward(m, tape, v);
        const Vector jtv = J.transpose() * v;
        for (std::size_t k = 0; k < g.size(); ++k) CHECK(std::abs(jtv[k] - g[k]) <= 1e-10 * std::max(1.0, std::abs(g[k])));
    }
    SUBCASE("head rows equal the penultimate activations") {
        const Matrix x = Eigen::Map<const Vector>(f.pixels.data(), 16);
        const int ts[1] = {t};
        const auto tape = forward_batch(m, x, ts);
        const auto L = a.layout();
        for (int r = 0; r < 16; ++r)
            for (int c = 0; c < a.hidden2; ++c) {
                const auto col = static_cast<Eigen::Index>(L.w3 + static_cast<std::size_t>(c) * 16 + r);
                CHECK(J(r, col) == tape.a2(c, 0));
                for (int r2 = 0; r2 < 16; ++r2)
                    if (r2 != r) CHECK(J(r2, col) == 0.0);
            }
    }
    CHECK_THROWS_AS(jacobian(m, f, t, 100), std::invalid_argument);
    const auto b = per_sample_gradients(m, Eigen::Map<const Vector>(f.pixels.data(), 16), std::vector<int>{t},
                                        Matrix::Zero(16, 1), true);
    REQUIRE(b.jacobians.has_value());
    CHECK(((*b.jacobians)[0] - J).norm() == 0.0);
}

TEST_CASE("non-finite outputs raise NumericalDivergence") {
    const auto a = test::small_arch();
    auto m = test::random_model(a, 9);
    m.params[a.layout().b3] = std::numeric_limits<double>::infinity();
    Frame f(1, 4, 4);
    CHECK_THROWS_AS(forward(m, f, 0), NumericalDivergence);
    m.params.pop_back();
    CHECK_THROWS_AS(forward(m, f, 0), std::invalid_argument);
}

TEST_CASE("initialisation is seeded and fan-in bounded") {
    const auto a = Architecture::preset("tiny");
    const auto m1 = init_model(a, 5), m2 = init_model(a, 5), m3 = init_model(a, 6);
    CHECK(m1.params == m2.params);
    CHECK(m1.params != m3.params);
    const auto L = a.layout();
    const double bound1 = 1.0 / std::sqrt(static_cast<double>(a.input_dim()));
    for (std::size_t k = L.w1; k < L.w2; ++k) CHECK(std::abs(m1.params[k]) <= bound1);
    for (std::size_t k = L.gate; k < L.end; ++k) CHECK(m1.params[k] == 0.0);
}
