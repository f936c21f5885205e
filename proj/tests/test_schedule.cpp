#include <catch2/catch_amalgamated.hpp>

#include "dfm/data.hpp"
#include "dfm/rng.hpp"
#include "dfm/schedule.hpp"
#include "support.hpp"

using dfm::Schedule;
using dfm::Vec;
using testsupport::linf;

namespace {
Vec v2(double a, double b) {
    Vec v(2);
    v << a, b;
    return v;
}
}  // namespace

TEST_CASE("schedule pins noise at t=0 and data at t=1", "[schedule]") {
    Schedule s;
    const auto c0 = dfm::eval(s, 0.0);
    CHECK(c0.alpha == 0.0);
    CHECK(c0.sigma == 1.0);
    CHECK(c0.alpha_dot == 1.0);
    CHECK(c0.sigma_dot == -1.0);

    const auto c1 = dfm::eval(s, 1.0);
    CHECK(c1.alpha == 1.0);
    CHECK(c1.sigma == 0.0);
    CHECK(c1.alpha_dot == 1.0);
    CHECK(c1.sigma_dot == -1.0);

    const auto cq = dfm::eval(s, 0.25);
    CHECK(cq.alpha == 0.25);
    CHECK(cq.sigma == 0.75);
    CHECK(cq.denom() == -1.0);
}

TEST_CASE("schedule coefficients stay coupled along the path", "[schedule]") {
    Schedule s;
    dfm::Rng rng(11);
    for (int i = 0; i < 200; ++i) {
        const double t = rng.uniform01();
        const auto c = dfm::eval(s, t);
        CHECK(c.alpha + c.sigma == 1.0);
        CHECK(c.denom() == -1.0);
    }
}

TEST_CASE("schedule rejects times outside the unit interval", "[schedule]") {
    Schedule s;
    CHECK_THROWS_AS(dfm::eval(s, -0.01), std::domain_error);
    CHECK_THROWS_AS(dfm::eval(s, 1.01), std::domain_error);
}

TEST_CASE("interpolate blends the endpoints linearly", "[schedule]") {
    Schedule s;
    const Vec x = v2(2, 0);
    const Vec e = v2(0, 2);
    CHECK(linf(dfm::interpolate(s, x, e, 0.5), v2(1, 1)) == 0.0);
    CHECK(linf(dfm::interpolate(s, x, e, 0.0), e) == 0.0);
    CHECK(linf(dfm::interpolate(s, x, e, 1.0), x) == 0.0);
    CHECK_THROWS_AS(dfm::interpolate(s, x, Vec::Zero(3), 0.5), std::invalid_argument);
}

TEST_CASE("target velocity is data minus noise at every time", "[schedule]") {
    Schedule s;
    CHECK(linf(dfm::target_velocity(s, v2(1, 1), v2(0, 1), 0.3), v2(1, 0)) == 0.0);
    CHECK(linf(dfm::target_velocity(s, v2(1, 1), v2(0, 1), 0.9), v2(1, 0)) == 0.0);
    CHECK(linf(dfm::target_velocity(s, v2(3, -2), v2(1, 1), 0.0), v2(2, -3)) == 0.0);
    // x = eps leaves nothing to move
    CHECK(linf(dfm::target_velocity(s, v2(0.7, -0.4), v2(0.7, -0.4), 0.5), v2(0, 0)) == 0.0);
}

TEST_CASE("velocity to score conversions at pinned points", "[schedule]") {
    Schedule s;
    const Vec x_t = v2(0.8, -1.3);
    // t=0: score of the standard normal base, exactly -x_t
    const Vec s0 = dfm::velocity_to_score(s, x_t, v2(5, 5), 0.0);
    CHECK(s0(0) == -x_t(0));
    CHECK(s0(1) == -x_t(1));

    CHECK(linf(dfm::velocity_to_score(s, v2(1, 1), v2(1, 1), 0.5), v2(-1, -1)) <= 1e-15);

    CHECK_THROWS_AS(dfm::velocity_to_score(s, x_t, v2(0, 0), 1.0), dfm::singularity_error);
}

TEST_CASE("score matches the analytic single-Gaussian marginal", "[schedule]") {
    // for x ~ N(mu, v I): x_t ~ N(alpha mu, (alpha^2 v + sigma^2) I), whose
    // score the optimal velocity must reproduce through the conversion
    Schedule s;
    dfm::GaussianMixtureSpec spec;
    spec.dim = 2;
    dfm::GaussianComponent comp;
    comp.mean = v2(0.6, -0.2);
    comp.var = v2(1.4, 1.4);
    comp.weight = 1.0;
    spec.classes = {{comp}};

    dfm::Rng rng(21);
    double worst = 0.0;
    for (int i = 0; i < 100; ++i) {
        const double t = rng.uniform(0.0, 0.99);
        const auto c = dfm::eval(s, t);
        const Vec x_t = c.alpha * comp.mean + 1.5 * rng.normal_vec(2);
        const Vec v = dfm::optimal_velocity(spec, x_t, t, 0, s);
        const Vec got = dfm::velocity_to_score(s, x_t, v, t);
        const double var_t = c.alpha * c.alpha * comp.var(0) + c.sigma * c.sigma;
        const Vec want = (c.alpha * comp.mean - x_t) / var_t;
        worst = std::max(worst, linf(got, want));
    }
    CHECK(worst <= 1e-8);
}

TEST_CASE("denoise expectation inverts the interpolation", "[schedule]") {
    Schedule s;
    CHECK(linf(dfm::denoise_expectation(s, v2(0, 0), v2(1, 1), 0.5), v2(0.5, 0.5)) == 0.0);

    // reconstruction: plugging the true target velocity back in recovers x
    dfm::Rng rng(3);
    double worst = 0.0;
    for (int i = 0; i < 500; ++i) {
        const double t = rng.uniform(0.0, 0.999);
        const Vec x = rng.normal_vec(2);
        const Vec e = rng.normal_vec(2);
        const Vec x_t = dfm::interpolate(s, x, e, t);
        const Vec v = dfm::target_velocity(s, x, e, t);
        worst = std::max(worst, linf(dfm::denoise_expectation(s, x_t, v, t), x));
    }
    CHECK(worst <= 1e-12);

    // at t=1 the state already is the sample
    const Vec xf = v2(2.5, -0.5);
    CHECK(linf(dfm::denoise_expectation(s, xf, v2(9, 9), 1.0), xf) == 0.0);
}
