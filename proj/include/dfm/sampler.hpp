#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include "dfm/common.hpp"
#include "dfm/data.hpp"
#include "dfm/model.hpp"
#include "dfm/objective.hpp"
#include "dfm/rng.hpp"
#include "dfm/schedule.hpp"

namespace dfm {

/// Velocity evaluation point: y >= 0 is a class label, y = -1 the
/// unconditional (null-class) branch.
using VelocityFn = std::function<Vec(const Vec& x, double t, int y)>;

enum class SamplerKind { euler_ode, euler_maruyama };

/// Rule for the diffusion coefficient w_t of the stochastic sampler.
struct DiffusionScale {
    enum class Kind { sigma_t, constant };
    Kind kind = Kind::sigma_t;
    double value = 0.0;

    double operator()(const Schedule& s, double t) const {
        if (kind == Kind::sigma_t) return eval(s, t).sigma;
        return value;
    }
    static DiffusionScale sigma() { return {Kind::sigma_t, 0.0}; }
    static DiffusionScale constant(double v) {
        require(v >= 0.0, "diffusion scale: negative constant");
        return {Kind::constant, v};
    }
};

struct SamplerConfig {
    SamplerKind kind = SamplerKind::euler_maruyama;
    int nfe = 50;
    DiffusionScale diffusion_scale;
    std::uint64_t seed = 0;

    void validate() const { require(nfe >= 1, "sampler: nfe must be >= 1"); }
};

enum class GuidanceMode { standard_cfg, hat_cfg, tilde_cfg };

struct GuidanceConfig {
    bool enabled = false;
    GuidanceMode mode = GuidanceMode::standard_cfg;
    double w = 1.0;
    double sigma_low = 0.0;
    double sigma_high = 1.0;
    double lambda = 0.0;
    std::optional<MeanTrajectory> t_hat;

    void validate() const {
        require(0.0 <= sigma_low && sigma_low <= sigma_high && sigma_high <= 1.0,
                "guidance: need 0 <= sigma_low <= sigma_high <= 1");
        require(w >= 0.0, "guidance: weight must be >= 0");
        require(lambda >= 0.0 && lambda < 1.0, "guidance: lambda must lie in [0,1)");
    }
};

/// Grid-search winners reported for the contrastive model on the reference
/// benchmark, as a ready-made configuration.
inline GuidanceConfig guidance_preset_contrastive(double lambda, MeanTrajectory t_hat) {
    GuidanceConfig g;
    g.enabled = true;
    g.mode = GuidanceMode::hat_cfg;
    g.w = 1.85;
    g.sigma_low = 0.0;
    g.sigma_high = 0.65;
    g.lambda = lambda;
    g.t_hat = std::move(t_hat);
    return g;
}

/// The matching winners for the plain flow-matching baseline.
inline GuidanceConfig guidance_preset_fm() {
    GuidanceConfig g;
    g.enabled = true;
    g.mode = GuidanceMode::standard_cfg;
    g.w = 1.75;
    g.sigma_low = 0.0;
    g.sigma_high = 0.75;
    return g;
}

/// Applies guidance inside [sigma_low, sigma_high]; outside the interval, or
/// with guidance off, the bare conditional field is returned unchanged.
inline Vec guided_velocity(const VelocityFn& fn, const Vec& x, double t, int y,
                           const GuidanceConfig& g, const Schedule& schedule) {
    if (!g.enabled || t < g.sigma_low || t > g.sigma_high) return fn(x, t, y);
    g.validate();
    Vec vc = fn(x, t, y);
    Vec vu = fn(x, t, -1);
    switch (g.mode) {
        case GuidanceMode::standard_cfg:
            return g.w * vc + (1.0 - g.w) * vu;
        case GuidanceMode::hat_cfg: {
            require(g.t_hat.has_value(), "guidance: hat mode needs the mean trajectory");
            Vec base = g.w * vc + (1.0 - g.w) * vu;
            return (1.0 - g.lambda) * base + g.lambda * g.t_hat->value(schedule, t);
        }
        case GuidanceMode::tilde_cfg: {
            require(g.t_hat.has_value(), "guidance: tilde mode needs the mean trajectory");
            return (g.w + g.lambda) * vc - (1.0 - g.w) * vu -
                   g.lambda * g.t_hat->value(schedule, t);
        }
    }
    throw std::logic_error("guidance: unknown mode");
}

inline Vec step_ode(const VelocityFn& fn, const Vec& x, double t, double dt, int y,
                    const GuidanceConfig& g, const Schedule& schedule) {
    require_domain(t >= 0.0 && t <= 1.0 && t + dt >= 0.0 && t + dt <= 1.0 + 1e-12,
                   "step_ode: time outside [0,1]");
    return x + dt * guided_velocity(fn, x, t, y, g, schedule);
}

/// Euler-Maruyama step: drift = v + (w_t/2) * score, diffusion sqrt(w_t*dt).
/// With w_t = 0 no noise is drawn and the step equals step_ode exactly.
inline Vec step_sde(const VelocityFn& fn, const Vec& x, double t, double dt, int y,
                    const GuidanceConfig& g, const Schedule& schedule,
                    const DiffusionScale& diffusion, Rng& rng) {
    require_domain(t >= 0.0 && t < 1.0, "step_sde: requires t in [0,1)");
    require_domain(dt >= 0.0 && t + dt <= 1.0 + 1e-12, "step_sde: time outside [0,1]");
    Vec v = guided_velocity(fn, x, t, y, g, schedule);
    const double wt = diffusion(schedule, t);
    if (wt == 0.0) return x + dt * v;
    Vec drift = v + (wt / 2.0) * velocity_to_score(schedule, x, v, t);
    return x + dt * drift + std::sqrt(wt * dt) * rng.normal_vec(static_cast<int>(x.size()));
}

namespace detail {

template <typename StepHook>
void integrate(const VelocityFn& fn, Vec& x, int y, const SamplerConfig& cfg,
               const GuidanceConfig& g, const Schedule& schedule, Rng& rng, StepHook&& hook) {
    for (int k = 0; k < cfg.nfe; ++k) {
        const double t0 = static_cast<double>(k) / cfg.nfe;
        const double t1 = static_cast<double>(k + 1) / cfg.nfe;
        // the step reaching t=1 is always the deterministic rule: the score
        // factor 1/sigma blows up there and the last noise kick would never
        // be denoised
        if (cfg.kind == SamplerKind::euler_maruyama && k + 1 < cfg.nfe)
            x = step_sde(fn, x, t0, t1 - t0, y, g, schedule, cfg.diffusion_scale, rng);
        else
            x = step_ode(fn, x, t0, t1 - t0, y, g, schedule);
        hook(k + 1, t1, x);
    }
}

}  // namespace detail

/// n final states from independent trajectories started at fresh standard
/// normal draws. Trajectory i uses its own rng substream derived from
/// (cfg.seed, i), so results do not depend on evaluation order.
inline Mat sample(const VelocityFn& fn, int n, int y, const SamplerConfig& cfg,
                  const GuidanceConfig& g, const Schedule& schedule, int dim) {
    cfg.validate();
    require(n >= 1, "sample: n must be >= 1");
    require(dim >= 1, "sample: dim must be >= 1");
    Mat out(dim, n);
    for (int i = 0; i < n; ++i) {
        Rng rng(substream_seed(cfg.seed, static_cast<std::uint64_t>(i)));
        Vec x = rng.normal_vec(dim);
        detail::integrate(fn, x, y, cfg, g, schedule, rng, [](int, double, const Vec&) {});
        out.col(i) = x;
    }
    return out;
}

struct TrajectoryPoint {
    int step = 0;
    double t = 0.0;
    Vec state;
    Vec expectation;  // expected final sample extrapolated from this state
};

using Trajectory = std::vector<TrajectoryPoint>;

/// Integrates one trajectory from the given initial noise, recording state
/// and denoised expectation every record_every steps. t=0 and t=1 are always
/// recorded. rng feeds the stochastic sampler's noise; pass any rng for the
/// deterministic one (it is not consumed).
inline Trajectory trajectory(const VelocityFn& fn, const Vec& eps, int y,
                             const SamplerConfig& cfg, const GuidanceConfig& g,
                             const Schedule& schedule, int record_every, Rng& rng) {
    cfg.validate();
    require(record_every >= 1, "trajectory: record_every must be >= 1");
    Trajectory rec;
    Vec x = eps;
    auto record = [&](int step, double t, const Vec& state) {
        TrajectoryPoint p;
        p.step = step;
        p.t = t;
        p.state = state;
        if (t == 1.0) {
            // sigma(1) = 0: the extrapolation is the state itself, no
            // velocity evaluation needed
            p.expectation = denoise_expectation(schedule, state, Vec::Zero(state.size()), t);
        } else {
            Vec v = guided_velocity(fn, state, t, y, g, schedule);
            p.expectation = denoise_expectation(schedule, state, v, t);
        }
        rec.push_back(std::move(p));
    };
    record(0, 0.0, x);
    detail::integrate(fn, x, y, cfg, g, schedule, rng, [&](int step, double t, const Vec& state) {
        if (step == cfg.nfe || step % record_every == 0) {
            if (step == cfg.nfe) record(step, 1.0, state);
            else record(step, t, state);
        }
    });
    return rec;
}

/// Trajectory batch with the same substream discipline as sample(): the
/// i-th trajectory here visits exactly the states the i-th sample() draw
/// would.
inline std::vector<Trajectory> sample_trajectories(const VelocityFn& fn, int n, int y,
                                                   const SamplerConfig& cfg,
                                                   const GuidanceConfig& g,
                                                   const Schedule& schedule, int record_every,
                                                   int dim) {
    require(n >= 1, "sample_trajectories: n must be >= 1");
    std::vector<Trajectory> out;
    out.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        Rng rng(substream_seed(cfg.seed, static_cast<std::uint64_t>(i)));
        Vec eps = rng.normal_vec(dim);
        out.push_back(trajectory(fn, eps, y, cfg, g, schedule, record_every, rng));
    }
    return out;
}

/// Adapts a trained network to the sampler interface. The model must outlive
/// the returned function; scratch buffers are reused across calls.
inline VelocityFn make_velocity_fn(const VelocityField& m) {
    struct State {
        Workspace ws;
        Mat X;
        std::vector<double> t{0.0};
        std::vector<int> y{0};
    };
    auto st = std::make_shared<State>();
    st->X.resize(m.input_dim, 1);
    return [&m, st](const Vec& x, double t, int y) -> Vec {
        st->X.col(0) = x;
        st->t[0] = t;
        st->y[0] = y < 0 ? m.null_class() : y;
        forward_batch(m, st->ws, st->X, st->t, st->y);
        return st->ws.out.col(0);
    };
}

/// The analytic conditional-expectation field of a Gaussian mixture as a
/// sampler-compatible function (the "oracle model").
inline VelocityFn make_oracle_velocity_fn(const GaussianMixtureSpec& spec,
                                          const Schedule& schedule) {
    return [spec, schedule](const Vec& x, double t, int y) {
        return optimal_velocity(spec, x, t, y, schedule);
    };
}

}  // namespace dfm
