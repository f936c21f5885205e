#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "dfm/common.hpp"
#include "dfm/rng.hpp"
#include "dfm/schedule.hpp"

namespace dfm {

struct LabeledPointCloud {
    std::vector<Vec> points;
    std::vector<int> labels;
    int num_classes = 0;
    int dim = 0;

    std::size_t size() const { return points.size(); }

    void validate() const {
        require(points.size() == labels.size(), "point cloud: points/labels length mismatch");
        for (const auto& p : points)
            require(p.size() == dim, "point cloud: inconsistent point dimension");
        for (int y : labels)
            require(y >= 0 && y < num_classes, "point cloud: label out of range");
    }

    Vec mean() const {
        require(!points.empty(), "point cloud: mean of empty cloud");
        Vec m = Vec::Zero(dim);
        for (const auto& p : points) m += p;
        return m / static_cast<double>(points.size());
    }
};

struct GaussianComponent {
    Vec mean;
    Vec var;  // diagonal covariance entries
    double weight = 1.0;
};

struct GaussianMixtureSpec {
    std::vector<std::vector<GaussianComponent>> classes;  // classes[y] = components of p(x|y)
    int dim = 0;

    int num_classes() const { return static_cast<int>(classes.size()); }

    void validate() const {
        require(!classes.empty(), "mixture spec: no classes");
        for (const auto& comps : classes) {
            require(!comps.empty(), "mixture spec: class with no components");
            double wsum = 0.0;
            for (const auto& c : comps) {
                require(c.mean.size() == dim && c.var.size() == dim,
                        "mixture spec: component dimension mismatch");
                require(c.weight > 0.0, "mixture spec: nonpositive component weight");
                for (int i = 0; i < dim; ++i)
                    require_domain(c.var(i) > 0.0, "mixture spec: singular covariance");
                wsum += c.weight;
            }
            require(std::abs(wsum - 1.0) <= 1e-9, "mixture spec: class weights must sum to 1");
        }
    }
};

/// Overlap coefficient of two unit-variance 1-D Gaussians whose means are
/// `separation` apart: integral of min of the densities = 2*Phi(-separation/2).
inline double gaussian_overlap_coefficient(double separation) {
    require_domain(separation >= 0.0, "overlap coefficient: negative separation");
    return std::erfc(separation / (2.0 * std::sqrt(2.0)));
}

/// Separation at which the overlap coefficient hits `target`, found by
/// bisection. The default task uses target 0.5, i.e. Bayes error 0.25.
inline double separation_for_overlap(double target) {
    require_domain(target > 0.0 && target < 1.0, "separation_for_overlap: target outside (0,1)");
    double lo = 0.0, hi = 64.0;
    for (int it = 0; it < 200; ++it) {
        double mid = 0.5 * (lo + hi);
        if (gaussian_overlap_coefficient(mid) > target) lo = mid; else hi = mid;
    }
    return 0.5 * (lo + hi);
}

inline double default_separation() {
    static const double sep = separation_for_overlap(0.5);
    return sep;
}

inline std::pair<LabeledPointCloud, GaussianMixtureSpec>
two_gaussians(double separation, double scale, int n_per_class, std::uint64_t seed) {
    require(n_per_class >= 1, "two_gaussians: n_per_class must be >= 1");
    require_domain(scale > 0.0, "two_gaussians: nonpositive scale");

    GaussianMixtureSpec spec;
    spec.dim = 2;
    spec.classes.resize(2);
    for (int y = 0; y < 2; ++y) {
        GaussianComponent c;
        c.mean = Vec::Zero(2);
        c.mean(0) = (y == 0 ? -0.5 : 0.5) * separation;
        c.var = Vec::Constant(2, scale * scale);
        c.weight = 1.0;
        spec.classes[y] = {c};
    }

    LabeledPointCloud cloud;
    cloud.dim = 2;
    cloud.num_classes = 2;
    cloud.points.reserve(2 * static_cast<std::size_t>(n_per_class));
    cloud.labels.reserve(2 * static_cast<std::size_t>(n_per_class));
    Rng rng(seed);
    for (int y = 0; y < 2; ++y) {
        const Vec& mu = spec.classes[y][0].mean;
        for (int i = 0; i < n_per_class; ++i) {
            cloud.points.push_back(mu + scale * rng.normal_vec(2));
            cloud.labels.push_back(y);
        }
    }
    return {std::move(cloud), std::move(spec)};
}

namespace detail {

inline double log_gauss_diag(const Vec& x, const Vec& mu, const Vec& var) {
    double acc = 0.0;
    for (int i = 0; i < x.size(); ++i) {
        double d = x(i) - mu(i);
        acc += -0.5 * (d * d / var(i) + std::log(2.0 * std::numbers::pi * var(i)));
    }
    return acc;
}

}  // namespace detail

/// Fresh draws from p(x|y). Component choice consumes one uniform even for
/// single-component classes, so draw counts stay stable across specs.
inline Mat sample_class(const GaussianMixtureSpec& spec, int y, int n, Rng& rng) {
    spec.validate();
    require(y >= 0 && y < spec.num_classes(), "sample_class: label out of range");
    require(n >= 1, "sample_class: n must be >= 1");
    const auto& comps = spec.classes[y];
    Mat out(spec.dim, n);
    for (int i = 0; i < n; ++i) {
        double u = rng.uniform01();
        std::size_t k = 0;
        double acc = 0.0;
        for (; k + 1 < comps.size(); ++k) {
            acc += comps[k].weight;
            if (u < acc) break;
        }
        const auto& c = comps[k];
        Vec z = rng.normal_vec(spec.dim);
        out.col(i) = c.mean.array() + c.var.array().sqrt() * z.array();
    }
    return out;
}

/// Bayes posterior over classes at x, equal class priors.
inline Vec class_posterior(const GaussianMixtureSpec& spec, const Vec& x) {
    require(x.size() == spec.dim, "class_posterior: dimension mismatch");
    const int K = spec.num_classes();
    Vec logp(K);
    for (int y = 0; y < K; ++y) {
        double best = -std::numeric_limits<double>::infinity();
        std::vector<double> terms;
        terms.reserve(spec.classes[y].size());
        for (const auto& c : spec.classes[y]) {
            double lt = std::log(c.weight) + detail::log_gauss_diag(x, c.mean, c.var);
            terms.push_back(lt);
            best = std::max(best, lt);
        }
        double s = 0.0;
        for (double lt : terms) s += std::exp(lt - best);
        logp(y) = best + std::log(s);
    }
    double mx = logp.maxCoeff();
    Vec post = (logp.array() - mx).exp();
    return post / post.sum();
}

/// Exact conditional velocity E[alpha_dot*x + sigma_dot*eps | x_t, y] under the
/// interpolant, with Gaussian-mixture data. y = -1 marginalizes over classes
/// with equal priors. Requires t < 1 (the eps posterior needs sigma > 0).
inline Vec optimal_velocity(const GaussianMixtureSpec& spec, const Vec& x_t, double t,
                            int y, const Schedule& schedule) {
    require(x_t.size() == spec.dim, "optimal_velocity: dimension mismatch");
    require(y >= -1 && y < spec.num_classes(), "optimal_velocity: label out of range");
    require_domain(t < 1.0, "optimal_velocity: undefined at t=1");
    const auto c = eval(schedule, t);

    // responsibilities over the admissible components under p(x_t | comp)
    struct Entry { const GaussianComponent* comp = nullptr; double logw = 0.0; };
    std::vector<Entry> entries;
    const int K = spec.num_classes();
    const double class_prior = (y >= 0) ? 1.0 : 1.0 / K;
    for (int cls = (y >= 0 ? y : 0); cls < (y >= 0 ? y + 1 : K); ++cls) {
        for (const auto& comp : spec.classes[cls]) {
            Vec mean_t = c.alpha * comp.mean;
            Vec var_t = (c.alpha * c.alpha) * comp.var + Vec::Constant(spec.dim, c.sigma * c.sigma);
            for (int i = 0; i < spec.dim; ++i)
                require_domain(var_t(i) > 0.0, "optimal_velocity: singular covariance");
            entries.push_back({&comp, std::log(class_prior * comp.weight) +
                                          detail::log_gauss_diag(x_t, mean_t, var_t)});
        }
    }
    double best = -std::numeric_limits<double>::infinity();
    for (const auto& e : entries) best = std::max(best, e.logw);
    double wsum = 0.0;
    Vec ex = Vec::Zero(spec.dim);  // E[x | x_t]
    for (const auto& e : entries) {
        double w = std::exp(e.logw - best);
        wsum += w;
        // per-component posterior mean of x given x_t = alpha*x + sigma*eps
        Vec m(spec.dim);
        for (int i = 0; i < spec.dim; ++i) {
            double v = e.comp->var(i);
            double denom = c.alpha * c.alpha * v + c.sigma * c.sigma;
            m(i) = e.comp->mean(i) + c.alpha * v * (x_t(i) - c.alpha * e.comp->mean(i)) / denom;
        }
        ex += w * m;
    }
    ex /= wsum;
    Vec eeps = (x_t - c.alpha * ex) / c.sigma;  // E[eps | x_t]
    return c.alpha_dot * ex + c.sigma_dot * eeps;
}

struct LoadedCloud {
    LabeledPointCloud cloud;
    std::vector<long long> label_values;  // original label of dense class k at index k
};

/// Parses `class,dim0,dim1,...` CSV. Labels are remapped to dense 0..K-1 in
/// ascending order of the original values; the mapping is returned.
inline LoadedCloud load_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("load_csv: cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw format_error("load_csv: empty file " + path);
    if (line.rfind("class,dim0", 0) != 0)
        throw format_error("load_csv: bad header in " + path + " (want class,dim0,...)");
    int dim = 0;
    for (char ch : line) if (ch == ',') ++dim;

    LoadedCloud out;
    out.cloud.dim = dim;
    std::vector<long long> raw_labels;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string cell;
        std::vector<std::string> cells;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (static_cast<int>(cells.size()) != dim + 1)
            throw format_error("load_csv: line " + std::to_string(lineno) + " of " + path +
                               " has " + std::to_string(cells.size()) + " fields, want " +
                               std::to_string(dim + 1));
        try {
            raw_labels.push_back(std::stoll(cells[0]));
            Vec p(dim);
            for (int i = 0; i < dim; ++i) p(i) = std::stod(cells[1 + i]);
            out.cloud.points.push_back(std::move(p));
        } catch (const std::exception&) {
            throw format_error("load_csv: line " + std::to_string(lineno) + " of " + path +
                               " is not numeric");
        }
    }
    if (out.cloud.points.empty()) throw format_error("load_csv: no data rows in " + path);

    std::vector<long long> uniq = raw_labels;
    std::sort(uniq.begin(), uniq.end());
    uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
    out.label_values = uniq;
    out.cloud.num_classes = static_cast<int>(uniq.size());
    out.cloud.labels.reserve(raw_labels.size());
    for (long long rv : raw_labels) {
        auto it = std::lower_bound(uniq.begin(), uniq.end(), rv);
        out.cloud.labels.push_back(static_cast<int>(it - uniq.begin()));
    }
    out.cloud.validate();
    return out;
}

/// Writes the `class,dim0,...` CSV consumed by load_csv; values round-trip
/// exactly.
inline void save_csv(const std::string& path, const LabeledPointCloud& cloud) {
    cloud.validate();
    std::ofstream out(path);
    if (!out) throw io_error("save_csv: cannot open " + path);
    out << "class";
    for (int i = 0; i < cloud.dim; ++i) out << ",dim" << i;
    out << "\n";
    for (std::size_t r = 0; r < cloud.size(); ++r) {
        out << cloud.labels[r];
        for (int i = 0; i < cloud.dim; ++i) out << ',' << format_double(cloud.points[r](i));
        out << "\n";
    }
    if (!out) throw io_error("save_csv: write failed for " + path);
}

}  // namespace dfm
