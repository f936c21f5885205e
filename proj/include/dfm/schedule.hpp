#pragma once

#include "dfm/common.hpp"

namespace dfm {

enum class ScheduleKind { linear };

/// Interpolant schedule on dimensionless time t in [0,1], with t=0 pure noise
/// and t=1 pure data: alpha(0)=0, sigma(0)=1, alpha(1)=1, sigma(1)=0.
struct Schedule {
    ScheduleKind kind = ScheduleKind::linear;
};

struct ScheduleEval {
    double alpha;
    double sigma;
    double alpha_dot;
    double sigma_dot;

    /// D(t) = alpha*sigma_dot - alpha_dot*sigma; nonzero on [0,1] for every
    /// supported kind (identically -1 for linear).
    double denom() const { return alpha * sigma_dot - alpha_dot * sigma; }
};

inline ScheduleEval eval(const Schedule& s, double t) {
    require_domain(t >= 0.0 && t <= 1.0, "schedule: t outside [0,1]");
    switch (s.kind) {
        case ScheduleKind::linear:
            return {t, 1.0 - t, 1.0, -1.0};
    }
    throw std::logic_error("schedule: unknown kind");
}

/// x_t = alpha(t) * x + sigma(t) * eps
inline Vec interpolate(const Schedule& s, const Vec& x, const Vec& eps, double t) {
    require(x.size() == eps.size(), "interpolate: dimension mismatch between x and eps");
    const auto c = eval(s, t);
    return c.alpha * x + c.sigma * eps;
}

/// Regression target alpha_dot(t) * x + sigma_dot(t) * eps. Equals x - eps
/// for the linear schedule, independent of t.
inline Vec target_velocity(const Schedule& s, const Vec& x, const Vec& eps, double t) {
    require(x.size() == eps.size(), "target_velocity: dimension mismatch between x and eps");
    const auto c = eval(s, t);
    return c.alpha_dot * x + c.sigma_dot * eps;
}

/// Score of the time-t marginal implied by a velocity estimate:
/// (alpha_dot * x_t - alpha * v) / (sigma * D). Singular at t=1 where sigma
/// vanishes. Linear schedule: (t*v - x_t) / (1-t).
inline Vec velocity_to_score(const Schedule& s, const Vec& x_t, const Vec& v, double t) {
    require(x_t.size() == v.size(), "velocity_to_score: dimension mismatch");
    const auto c = eval(s, t);
    if (c.sigma == 0.0) throw singularity_error("velocity_to_score: sigma(t)=0, score singular at t=1");
    return (c.alpha_dot * x_t - c.alpha * v) / (c.sigma * c.denom());
}

/// Expected final sample implied by a velocity estimate:
/// (sigma_dot * x_t - sigma * v) / D. Linear schedule: x_t + (1-t) * v.
inline Vec denoise_expectation(const Schedule& s, const Vec& x_t, const Vec& v, double t) {
    require(x_t.size() == v.size(), "denoise_expectation: dimension mismatch");
    const auto c = eval(s, t);
    return (c.sigma_dot * x_t - c.sigma * v) / c.denom();
}

}  // namespace dfm
