#include <doctest.h>

#include <set>

#include "helpers.hpp"
#include "tprox/schedule.hpp"

using namespace tprox;

TEST_CASE("keyed streams are reproducible and distinct") {
    auto a = CounterRng::keyed(7, 1, 2);
    auto b = CounterRng::keyed(7, 1, 2);
    auto c = CounterRng::keyed(7, 2, 1);
    for (int k = 0; k < 100; ++k) {
        const auto x = a.next_u64();
        CHECK(x == b.next_u64());
        CHECK(x != c.next_u64());
    }
}

TEST_CASE("below stays in range and covers it") {
    CounterRng rng(3);
    std::set<std::uint64_t> seen;
    for (int k = 0; k < 2000; ++k) {
        const auto v = rng.below(7);
        CHECK(v < 7);
        seen.insert(v);
    }
    CHECK(seen.size() == 7);
}

TEST_CASE("normal draws have unit moments") {
    CounterRng rng(11);
    double s = 0, s2 = 0;
    const int n = 200000;
    for (int k = 0; k < n; ++k) {
        const double x = rng.normal();
        s += x;
        s2 += x * x;
    }
    CHECK(std::abs(s / n) < 0.01);
    CHECK(std::abs(s2 / n - 1.0) < 0.01);
}

TEST_CASE("alpha_bar matches a 50-digit reference") {
    const auto s = build_schedule();
    REQUIRE(s.T == 1000);
    // Running product of (1 - beta_t) evaluated in 50-digit arithmetic.
    CHECK(test::rel_err(s.alpha_bar[0], 0.9999) < 1e-14);
    CHECK(test::rel_err(s.alpha_bar[1], 0.9997800920720720720720721) < 1e-14);
    CHECK(test::rel_err(s.alpha_bar[99], 0.8970181456749603637199249) < 1e-12);
    CHECK(test::rel_err(s.alpha_bar[499], 0.07858724288177823734328983) < 1e-12);
    CHECK(test::rel_err(s.alpha_bar[999], 0.00004035829765375683314817635) < 1e-11);
    CHECK(s.beta.front() == doctest::Approx(1e-4));
    CHECK(s.beta.back() == doctest::Approx(0.02));
    for (int t = 1; t < s.T; ++t) CHECK(s.alpha_bar[t] < s.alpha_bar[t - 1]);
}

TEST_CASE("schedule rejects invalid parameters") {
    CHECK_THROWS_AS(build_schedule(1), std::invalid_argument);
    CHECK_THROWS_AS(build_schedule(100, 0.0, 0.02), std::invalid_argument);
    CHECK_THROWS_AS(build_schedule(100, 0.03, 0.02), std::invalid_argument);
    CHECK_THROWS_AS(build_schedule(100, 1e-4, 1.0), std::invalid_argument);
}

TEST_CASE("corrupt_independent follows the closed form") {
    const auto s = build_schedule();
    Frame f(1, 2, 2);
    f.pixels = {0.0, 0.25, 0.5, 1.0};
    const std::vector<double> eps = {1.0, -1.0, 0.5, 2.0};
    const auto out = corrupt_independent(f, 0, eps, s);
    for (int k = 0; k < 4; ++k)
        CHECK(out.pixels[k] == doctest::Approx(std::sqrt(0.9999) * f.pixels[k] + std::sqrt(1e-4) * eps[k]).epsilon(1e-14));
    // t = T-1: almost pure noise
    const auto late = corrupt_independent(f, 999, eps, s);
    CHECK(std::abs(late.pixels[3] - 2.0) < 0.02);
    CHECK_THROWS_AS(corrupt_independent(f, 1000, eps, s), std::out_of_range);
    CHECK_THROWS_AS(corrupt_independent(f, -1, eps, s), std::out_of_range);
    CHECK_THROWS_AS(corrupt_independent(f, 5, std::vector<double>(3), s), std::invalid_argument);
}

TEST_CASE("identical frames in a window corrupt to bit-equal frames") {
    const auto s = build_schedule();
    Frame f(1, 4, 4);
    for (std::size_t k = 0; k < f.size(); ++k) f.pixels[k] = 0.05 * static_cast<double>(k % 7);
    FrameWindow w;
    w.frames = {f, f, f};
    const auto out = corrupt_window(w, s, 99);
    REQUIRE(out.noisy.size() == 3);
    CHECK(out.noisy[0].pixels == out.noisy[1].pixels);
    CHECK(out.noisy[1].pixels == out.noisy[2].pixels);
    CHECK(out.tau >= 0);
    CHECK(out.tau < 1000);
    const auto again = corrupt_window(w, s, 99);
    CHECK(again.tau == out.tau);
    CHECK(again.eps == out.eps);
}
