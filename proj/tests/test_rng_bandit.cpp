#include "east/bandit.hpp"
#include "east/error.hpp"
#include "east/rng.hpp"

#include <doctest.h>

#include <cmath>
#include <regex>
#include <set>

using namespace east;

TEST_CASE("derive_seed separates tags and indices") {
    std::set<uint64_t> seen;
    for (uint64_t tag : {stream::env, stream::step, stream::completion, stream::select, stream::run}) {
        for (uint64_t i = 0; i < 100; ++i) {
            seen.insert(derive_seed(42, tag, i));
        }
    }
    CHECK(seen.size() == 500);
    CHECK(derive_seed(1, stream::env) != derive_seed(2, stream::env));
    static_assert(derive_seed(7, 3, 0) == derive_seed(7, 3, 0));
}

TEST_CASE("rng streams are reproducible and in range") {
    rng a(99), b(99);
    for (int i = 0; i < 1000; ++i) {
        const double u = a.uniform();
        CHECK(u == b.uniform());
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
        const auto k = a.below(7);
        CHECK(k == b.below(7));
        CHECK(k < 7);
    }
}

TEST_CASE("below is close to uniform") {
    rng r(5);
    std::vector<int> counts(3);
    const int n = 300000;
    for (int i = 0; i < n; ++i) {
        ++counts[r.below(3)];
    }
    for (int c : counts) {
        // binomial sd ~ 258
        CHECK(std::abs(c - n / 3) < 1500);
    }
}

TEST_CASE("create_bandit examples") {
    bandit_config equal{{100, 100}, {10, 10}, 50, 1};
    CHECK_NOTHROW(bandit_env{equal});
    bandit_config shifted{{95, 105}, {10, 10}, 50, 1};
    CHECK_NOTHROW(bandit_env{shifted});

    auto code_of = [](const bandit_config & c) {
        try {
            bandit_env env(c);
        } catch (const error & e) {
            return e.code();
        }
        return errc::unsupported;
    };
    CHECK(code_of({{100}, {10}, 50, 1}) == errc::invalid_config);
    CHECK(code_of({{100, 100}, {10}, 50, 1}) == errc::invalid_config);
    CHECK(code_of({{100, 100}, {10, -1}, 50, 1}) == errc::invalid_config);
    CHECK(code_of({{100, 100}, {10, NAN}, 50, 1}) == errc::invalid_config);
    CHECK(code_of({{100, 100}, {10, 10}, 0, 1}) == errc::invalid_config);
}

TEST_CASE("zero variance arm returns the mean exactly") {
    bandit_env env({{100, 5}, {0, 0}, 50, 3});
    for (int i = 0; i < 10; ++i) {
        CHECK(env.pull(0).value == 100.0);
    }
}

TEST_CASE("pull bookkeeping and errors") {
    bandit_env env({{0, 0}, {1, 1}, 3, 3});
    CHECK_THROWS_AS(env.pull(2), error);
    try {
        env.pull(2);
    } catch (const error & e) {
        CHECK(e.code() == errc::arm_out_of_range);
    }
    for (int t = 1; t <= 3; ++t) {
        const auto r = env.pull(1);
        CHECK(r.timestep == t);
        CHECK(r.arm == 1);
    }
    try {
        env.pull(0);
        FAIL("expected horizon error");
    } catch (const error & e) {
        CHECK(e.code() == errc::horizon_exceeded);
    }
}

TEST_CASE("identical seeds give identical reward streams") {
    bandit_config c{{100, 90}, {10, 3}, 50, 1234};
    bandit_env a(c), b(c);
    for (int t = 0; t < 50; ++t) {
        const size_t arm = static_cast<size_t>(t % 3 == 0);
        CHECK(a.pull(arm).value == b.pull(arm).value);
    }
}

TEST_CASE("reward moments converge within five standard errors") {
    for (int n : {10000, 100000}) {
        bandit_env env({{100, 0}, {10, 1}, n, static_cast<uint64_t>(n)});
        double sum = 0.0, sq = 0.0;
        for (int i = 0; i < n; ++i) {
            const double v = env.pull(0).value;
            sum += v;
            sq += v * v;
        }
        const double mean = sum / n;
        const double sd = std::sqrt((sq - n * mean * mean) / (n - 1));
        CHECK(std::abs(mean - 100.0) <= 5 * 10.0 / std::sqrt(n));
        CHECK(std::abs(sd - 10.0) <= 5 * 10.0 / std::sqrt(2.0 * n));
    }
}

TEST_CASE("feedback text examples") {
    CHECK(feedback_text({101.28, 0, 1}, scenario_kind::buttons) == "Result: You received 101.28 points.");
    CHECK(feedback_text({100.0, 0, 1}, scenario_kind::buttons) == "Result: You received 100.00 points.");
    CHECK(feedback_text({84.725, 1, 1}, scenario_kind::slot_machines) == "Result: You received 84.72 dollars.");
    CHECK(feedback_text({-3.1, 1, 1}, scenario_kind::buttons) == "Result: You received -3.10 points.");
}

TEST_CASE("two-decimal rounding is half-to-even on the decimal value") {
    // hand-derived: ties go to the even hundredth
    const std::vector<std::pair<double, const char *>> cases = {
        {84.725, "84.72"}, {84.735, "84.74"}, {0.125, "0.12"},  {0.135, "0.14"},   {2.675, "2.68"},
        {1.005, "1.00"},   {99.995, "100.00"}, {0.0, "0.00"},   {-0.001, "0.00"},  {1e-9, "0.00"},
        {123456.789, "123456.79"}, {-2.345, "-2.34"}, {7.0, "7.00"}, {0.994999, "0.99"}, {1e21, "1000000000000000000000.00"},
    };
    for (const auto & [v, want] : cases) {
        CAPTURE(v);
        CHECK(format_two_decimals(v) == want);
    }
}

TEST_CASE("feedback text always matches the documented pattern") {
    const std::regex pattern(R"(Result: You received -?[0-9]+\.[0-9]{2} (points|dollars)\.)");
    rng r(17);
    for (int i = 0; i < 5000; ++i) {
        const double v = r.normal(100.0, 60.0) * (i % 7 == 0 ? 1e-3 : 1.0);
        const auto s = feedback_text({v, 0, 1}, i % 2 ? scenario_kind::buttons : scenario_kind::slot_machines);
        CAPTURE(s);
        CHECK(std::regex_match(s, pattern));
    }
}
