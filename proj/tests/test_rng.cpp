#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "dfm/rng.hpp"

TEST_CASE("same seed replays the same sequence", "[rng]") {
    dfm::Rng a(1234), b(1234), c(1235);
    bool all_equal = true;
    bool any_diff = false;
    for (int i = 0; i < 100; ++i) {
        const double va = a.uniform01();
        all_equal = all_equal && (va == b.uniform01());
        any_diff = any_diff || (va != c.uniform01());
    }
    CHECK(all_equal);
    CHECK(any_diff);
}

TEST_CASE("uniform01 stays inside the half-open interval", "[rng]") {
    dfm::Rng r(7);
    for (int i = 0; i < 10000; ++i) {
        const double u = r.uniform01();
        REQUIRE(u >= 0.0);
        REQUIRE(u < 1.0);
    }
}

TEST_CASE("below draws land in range and cover all values", "[rng]") {
    dfm::Rng r(42);
    std::vector<int> counts(7, 0);
    const int draws = 70000;
    for (int i = 0; i < draws; ++i) {
        const auto v = r.below(7);
        REQUIRE(v < 7);
        ++counts[static_cast<std::size_t>(v)];
    }
    // chi-square against uniform, df 6; 16.81 is the 99% point
    const double expected = draws / 7.0;
    double chi2 = 0.0;
    for (int c : counts) chi2 += (c - expected) * (c - expected) / expected;
    CHECK(chi2 < 16.81);
    CHECK_THROWS_AS(r.below(0), std::invalid_argument);
}

TEST_CASE("normal draws have the right first two moments", "[rng]") {
    dfm::Rng r(99);
    const int n = 200000;
    double sum = 0.0, sumsq = 0.0;
    for (int i = 0; i < n; ++i) {
        const double x = r.normal();
        sum += x;
        sumsq += x * x;
    }
    const double mean = sum / n;
    const double var = sumsq / n - mean * mean;
    CHECK(std::abs(mean) < 0.01);
    CHECK(std::abs(var - 1.0) < 0.02);
}

TEST_CASE("substream seeds spread distinct indices apart", "[rng]") {
    const std::uint64_t master = 17;
    CHECK(dfm::substream_seed(master, 0) != dfm::substream_seed(master, 1));
    CHECK(dfm::substream_seed(master, 1) != dfm::substream_seed(master, 2));
    CHECK(dfm::substream_seed(master, 0) != dfm::substream_seed(master + 1, 0));
}

TEST_CASE("named streams do not disturb each other", "[rng]") {
    // drawing extra values from one stream must leave the others' sequences
    // untouched; that is the whole point of the split
    dfm::StreamSet a(5), b(5);
    std::vector<double> a_noise, b_noise;
    a.stream("time").uniform01();
    a.stream("time").uniform01();
    for (int i = 0; i < 10; ++i) a_noise.push_back(a.stream("noise").uniform01());
    for (int i = 0; i < 10; ++i) b_noise.push_back(b.stream("noise").uniform01());
    CHECK(a_noise == b_noise);

    // and the same name continues one stream rather than restarting it
    dfm::StreamSet c(5);
    const double first = c.stream("time").uniform01();
    const double second = c.stream("time").uniform01();
    CHECK(first != second);
}
