#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "dfm/common.hpp"
#include "dfm/data.hpp"
#include "dfm/rng.hpp"
#include "dfm/sampler.hpp"

namespace dfm {

namespace detail {

/// Dense assignment problem, shortest augmenting paths with potentials.
/// Returns col matched to each row.
inline std::vector<int> solve_assignment(const Mat& cost) {
    const int n = static_cast<int>(cost.rows());
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(static_cast<std::size_t>(n) + 1, 0.0);
    std::vector<double> v(static_cast<std::size_t>(n) + 1, 0.0);
    std::vector<int> p(static_cast<std::size_t>(n) + 1, 0);
    std::vector<int> way(static_cast<std::size_t>(n) + 1, 0);
    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::vector<double> minv(static_cast<std::size_t>(n) + 1, inf);
        std::vector<char> used(static_cast<std::size_t>(n) + 1, 0);
        do {
            used[static_cast<std::size_t>(j0)] = 1;
            const int i0 = p[static_cast<std::size_t>(j0)];
            int j1 = -1;
            double delta = inf;
            for (int j = 1; j <= n; ++j) {
                if (used[static_cast<std::size_t>(j)]) continue;
                const double cur = cost(i0 - 1, j - 1) - u[static_cast<std::size_t>(i0)] -
                                   v[static_cast<std::size_t>(j)];
                if (cur < minv[static_cast<std::size_t>(j)]) {
                    minv[static_cast<std::size_t>(j)] = cur;
                    way[static_cast<std::size_t>(j)] = j0;
                }
                if (minv[static_cast<std::size_t>(j)] < delta) {
                    delta = minv[static_cast<std::size_t>(j)];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[static_cast<std::size_t>(j)]) {
                    u[static_cast<std::size_t>(p[static_cast<std::size_t>(j)])] += delta;
                    v[static_cast<std::size_t>(j)] -= delta;
                } else {
                    minv[static_cast<std::size_t>(j)] -= delta;
                }
            }
            j0 = j1;
        } while (p[static_cast<std::size_t>(j0)] != 0);
        do {
            const int j1 = way[static_cast<std::size_t>(j0)];
            p[static_cast<std::size_t>(j0)] = p[static_cast<std::size_t>(j1)];
            j0 = j1;
        } while (j0 != 0);
    }
    std::vector<int> row_to_col(static_cast<std::size_t>(n), -1);
    for (int j = 1; j <= n; ++j)
        row_to_col[static_cast<std::size_t>(p[static_cast<std::size_t>(j)]) - 1] = j - 1;
    return row_to_col;
}

/// Exact squared 2-Wasserstein between two equal-mass 1-D samples given in
/// sorted order; sizes may differ (piecewise quantile coupling).
inline double w2_squared_1d_sorted(const std::vector<double>& a, const std::vector<double>& b) {
    const std::size_t na = a.size(), nb = b.size();
    std::size_t i = 0, j = 0;
    double q = 0.0, acc = 0.0;
    while (i < na && j < nb) {
        const double qa = static_cast<double>(i + 1) / static_cast<double>(na);
        const double qb = static_cast<double>(j + 1) / static_cast<double>(nb);
        const double qn = std::min(qa, qb);
        const double d = a[i] - b[j];
        acc += (qn - q) * d * d;
        q = qn;
        if (qa <= qn) ++i;
        if (qb <= qn) ++j;
    }
    return acc;
}

}  // namespace detail

enum class W2Mode { auto_select, exact, sliced };

/// Exact mode: assignment on squared Euclidean costs, root of mean matched
/// cost. Requires equal sizes <= 4096.
inline double wasserstein2_exact(const Mat& a, const Mat& b) {
    require(a.cols() >= 1 && b.cols() >= 1, "wasserstein2: empty point set");
    require(a.rows() == b.rows(), "wasserstein2: dimension mismatch");
    require(a.cols() == b.cols(), "wasserstein2: exact mode needs equal sizes");
    require(a.cols() <= 4096, "wasserstein2: exact mode capped at 4096 points");
    const int n = static_cast<int>(a.cols());
    Mat cost(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) cost(i, j) = (a.col(i) - b.col(j)).squaredNorm();
    const std::vector<int> match = detail::solve_assignment(cost);
    double acc = 0.0;
    for (int i = 0; i < n; ++i) acc += cost(i, match[static_cast<std::size_t>(i)]);
    return std::sqrt(acc / n);
}

/// Sliced mode: averages exact 1-D squared distances over random
/// projections; handles unequal sizes.
inline double wasserstein2_sliced(const Mat& a, const Mat& b, int projections = 128,
                                  std::uint64_t seed = 0) {
    require(a.cols() >= 1 && b.cols() >= 1, "wasserstein2: empty point set");
    require(a.rows() == b.rows(), "wasserstein2: dimension mismatch");
    require(projections >= 1, "wasserstein2: need at least one projection");
    Rng rng(seed);
    const int d = static_cast<int>(a.rows());
    std::vector<double> pa(static_cast<std::size_t>(a.cols()));
    std::vector<double> pb(static_cast<std::size_t>(b.cols()));
    double acc = 0.0;
    for (int k = 0; k < projections; ++k) {
        Vec dir = rng.normal_vec(d);
        double nrm = dir.norm();
        while (nrm == 0.0) {  // astronomically unlikely, but keep the draw total-correct
            dir = rng.normal_vec(d);
            nrm = dir.norm();
        }
        dir /= nrm;
        for (Eigen::Index i = 0; i < a.cols(); ++i) pa[static_cast<std::size_t>(i)] = dir.dot(a.col(i));
        for (Eigen::Index i = 0; i < b.cols(); ++i) pb[static_cast<std::size_t>(i)] = dir.dot(b.col(i));
        std::sort(pa.begin(), pa.end());
        std::sort(pb.begin(), pb.end());
        acc += detail::w2_squared_1d_sorted(pa, pb);
    }
    return std::sqrt(acc / projections);
}

inline double wasserstein2(const Mat& a, const Mat& b, W2Mode mode = W2Mode::auto_select,
                           int projections = 128, std::uint64_t seed = 0) {
    if (mode == W2Mode::auto_select)
        mode = (a.cols() == b.cols() && a.cols() <= 4096) ? W2Mode::exact : W2Mode::sliced;
    return mode == W2Mode::exact ? wasserstein2_exact(a, b)
                                 : wasserstein2_sliced(a, b, projections, seed);
}

/// Share of samples whose Bayes posterior for their intended class is at or
/// below the threshold (a tie counts as ambiguous).
inline double ambiguity_fraction(const Mat& samples, const std::vector<int>& labels,
                                 const GaussianMixtureSpec& spec, double threshold = 0.5) {
    require(samples.cols() >= 1, "ambiguity_fraction: no samples");
    require(static_cast<std::size_t>(samples.cols()) == labels.size(),
            "ambiguity_fraction: labels length mismatch");
    const int K = spec.num_classes();
    // threshold = 1/K is the uniform posterior; with the <= tie rule below it
    // is the natural default for two classes
    require_domain(threshold >= 1.0 / K && threshold <= 1.0,
                   "ambiguity_fraction: threshold outside [1/num_classes, 1]");
    std::size_t hits = 0;
    for (Eigen::Index i = 0; i < samples.cols(); ++i) {
        const int y = labels[static_cast<std::size_t>(i)];
        require(y >= 0 && y < K, "ambiguity_fraction: label out of range");
        const Vec post = class_posterior(spec, samples.col(i));
        if (post(y) <= threshold) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(samples.cols());
}

struct FlowOverlapResult {
    double overlap = 0.0;        // exp(-mean_distance), in (0,1]
    double mean_distance = 0.0;  // mean over time of avg nearest-neighbor distance a->b
};

/// How close the two trajectory bundles run: per recorded time, the average
/// distance from each a-state to its nearest b-state, averaged over time,
/// then mapped through exp(-d).
inline FlowOverlapResult flow_overlap(const std::vector<Trajectory>& a,
                                      const std::vector<Trajectory>& b) {
    require(!a.empty() && !b.empty(), "flow_overlap: empty trajectory set");
    const std::size_t T = a[0].size();
    require(T >= 1, "flow_overlap: empty trajectories");
    auto check = [&](const std::vector<Trajectory>& s) {
        for (const auto& tr : s) {
            require(tr.size() == T, "flow_overlap: trajectories disagree on record count");
            for (std::size_t k = 0; k < T; ++k)
                require(tr[k].t == a[0][k].t, "flow_overlap: trajectories disagree on time grid");
        }
    };
    check(a);
    check(b);
    double acc = 0.0;
    for (std::size_t k = 0; k < T; ++k) {
        double step_acc = 0.0;
        for (const auto& ta : a) {
            double best = std::numeric_limits<double>::infinity();
            for (const auto& tb : b)
                best = std::min(best, (ta[k].state - tb[k].state).norm());
            step_acc += best;
        }
        acc += step_acc / static_cast<double>(a.size());
    }
    FlowOverlapResult r;
    r.mean_distance = acc / static_cast<double>(T);
    r.overlap = std::exp(-r.mean_distance);
    return r;
}

struct ClassMetrics {
    int label = 0;
    double wasserstein2 = 0.0;
    double ambiguity_fraction = 0.0;
    int count = 0;
};

struct MetricsReport {
    double wasserstein2 = 0.0;        // mean of the per-class values
    double ambiguity_fraction = 0.0;  // mean of the per-class values
    double flow_overlap = 0.0;
    double flow_distance = 0.0;
    std::vector<ClassMetrics> per_class;
};

}  // namespace dfm
