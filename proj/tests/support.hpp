#pragma once

// Independent oracles shared by the test suite and the acceptance runner:
// finite differences, Monte Carlo conditionals, factorial assignment search,
// numeric density integration. None of these call the code paths they check.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "dfm/data.hpp"
#include "dfm/model.hpp"
#include "dfm/rng.hpp"
#include "dfm/schedule.hpp"

namespace testsupport {

using dfm::Mat;
using dfm::Vec;

inline double linf(const Vec& a, const Vec& b) {
    return (a - b).cwiseAbs().maxCoeff();
}

inline double mat_linf(const Mat& a, const Mat& b) {
    return (a - b).cwiseAbs().maxCoeff();
}

/// Central difference over every parameter of m; loss() must read
/// m.parameters on each call.
template <typename LossFn>
Vec finite_difference(dfm::VelocityField& m, LossFn&& loss, double h = 1e-5) {
    Vec g(m.parameters.size());
    for (Eigen::Index i = 0; i < m.parameters.size(); ++i) {
        const double saved = m.parameters(i);
        m.parameters(i) = saved + h;
        const double up = loss();
        m.parameters(i) = saved - h;
        const double down = loss();
        m.parameters(i) = saved;
        g(i) = (up - down) / (2.0 * h);
    }
    return g;
}

/// Worst per-coordinate relative disagreement, with a floor so near-zero
/// entries compare absolutely.
inline double max_rel_err(const Vec& a, const Vec& b, double floor_scale = 1e-6) {
    double worst = 0.0;
    for (Eigen::Index i = 0; i < a.size(); ++i) {
        const double scale = std::max(floor_scale, std::abs(a(i)) + std::abs(b(i)));
        worst = std::max(worst, std::abs(a(i) - b(i)) / scale);
    }
    return worst;
}

/// E[target | x_t, y] by importance sampling: draw x from the class
/// conditional, weight by the likelihood of the eps that maps x to x_t.
/// Constant memory; the running max keeps the weights in range.
inline Vec mc_conditional_velocity(const dfm::GaussianMixtureSpec& spec, const Vec& x_t,
                                   double t, int y, int draws, dfm::Rng& rng) {
    const dfm::Schedule sched;
    const auto c = dfm::eval(sched, t);
    Vec acc = Vec::Zero(spec.dim);
    double wsum = 0.0;
    double best = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < draws; ++i) {
        Vec x = dfm::sample_class(spec, y, 1, rng).col(0);
        Vec eps = (x_t - c.alpha * x) / c.sigma;
        const double lw = -0.5 * eps.squaredNorm();
        if (lw > best) {
            const double rescale = std::exp(best - lw);
            acc *= rescale;
            wsum *= rescale;
            best = lw;
        }
        const double w = std::exp(lw - best);
        acc += w * (c.alpha_dot * x + c.sigma_dot * eps);
        wsum += w;
    }
    return acc / wsum;
}

/// Minimal-cost perfect matching by trying every permutation; only sane for
/// a handful of points.
inline double brute_force_w2(const Mat& a, const Mat& b) {
    const int n = static_cast<int>(a.cols());
    std::vector<int> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), 0);
    double best = std::numeric_limits<double>::infinity();
    do {
        double cost = 0.0;
        for (int i = 0; i < n; ++i)
            cost += (a.col(i) - b.col(perm[static_cast<std::size_t>(i)])).squaredNorm();
        best = std::min(best, cost);
    } while (std::next_permutation(perm.begin(), perm.end()));
    return std::sqrt(best / n);
}

/// Integral of min of two 1-D normal densities N(+-separation/2, scale^2) by
/// Simpson's rule. Equal-variance components differing only along one axis
/// make this the full overlap coefficient in any dimension.
inline double numeric_overlap(double separation, double scale, int intervals = 20000) {
    const double mu0 = -0.5 * separation;
    const double mu1 = 0.5 * separation;
    const double lo = mu0 - 10.0 * scale;
    const double hi = mu1 + 10.0 * scale;
    const double h = (hi - lo) / intervals;
    auto f = [&](double x) {
        const double n0 = std::exp(-0.5 * std::pow((x - mu0) / scale, 2));
        const double n1 = std::exp(-0.5 * std::pow((x - mu1) / scale, 2));
        return std::min(n0, n1) / (scale * std::sqrt(2.0 * M_PI));
    };
    double acc = f(lo) + f(hi);
    for (int i = 1; i < intervals; ++i) acc += f(lo + i * h) * (i % 2 == 1 ? 4.0 : 2.0);
    return acc * h / 3.0;
}

/// Diagonal-Gaussian log density, written out so the oracle does not share
/// code with the library.
inline double ref_log_gauss(const Vec& x, const Vec& mu, const Vec& var) {
    double acc = 0.0;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double d = x(i) - mu(i);
        acc += -0.5 * (d * d / var(i) + std::log(2.0 * M_PI * var(i)));
    }
    return acc;
}

}  // namespace testsupport
