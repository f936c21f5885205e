#pragma once

#include <cstdint>
#include <vector>

#include "dfm/common.hpp"
#include "dfm/data.hpp"
#include "dfm/model.hpp"
#include "dfm/rng.hpp"
#include "dfm/schedule.hpp"

namespace dfm {

/// Named rng stream ids. Every consumer draws from its own stream so that
/// enabling or disabling one consumer never shifts another's sequence.
namespace streams {
inline constexpr const char* time = "time";
inline constexpr const char* negative = "negative";
inline constexpr const char* noise = "noise";
inline constexpr const char* batch = "batch";
inline constexpr const char* dropout = "dropout";
}  // namespace streams

struct FlowSample {
    Vec x;
    int y = 0;
    Vec eps;
};

enum class NegativePolicy { uniform_excluding_self };

struct ObjectiveConfig {
    double lambda = 0.05;  // contrastive weight, in [0,1)
    NegativePolicy negative_policy = NegativePolicy::uniform_excluding_self;
    std::uint64_t seed = 0;

    void validate() const {
        require(lambda >= 0.0 && lambda < 1.0, "objective: lambda must lie in [0,1)");
    }
};

struct LossReport {
    double fm_term = 0.0;
    double contrastive_term = 0.0;
    double total = 0.0;
};

enum class MeanMode { analytic_noise_mean_zero, empirical };

/// The mean of all sample trajectories: value(t) = alpha_dot(t)*mean(x) +
/// sigma_dot(t)*mean(eps), with the noise mean taken as exactly zero in
/// analytic mode.
struct MeanTrajectory {
    Vec data_mean;
    Vec eps_mean;  // zero in analytic mode
    MeanMode mode = MeanMode::analytic_noise_mean_zero;

    Vec value(const Schedule& s, double t) const {
        const auto c = eval(s, t);
        return c.alpha_dot * data_mean + c.sigma_dot * eps_mean;
    }
};

inline MeanTrajectory make_mean_trajectory(const LabeledPointCloud& dataset, MeanMode mode,
                                           int eps_samples = 1000000, std::uint64_t seed = 0) {
    require(!dataset.points.empty(), "mean_trajectory: empty dataset");
    MeanTrajectory t;
    t.mode = mode;
    t.data_mean = dataset.mean();
    t.eps_mean = Vec::Zero(dataset.dim);
    if (mode == MeanMode::empirical) {
        require(eps_samples >= 1, "mean_trajectory: eps_samples must be >= 1");
        Rng rng(seed);
        for (int i = 0; i < eps_samples; ++i) t.eps_mean += rng.normal_vec(dataset.dim);
        t.eps_mean /= static_cast<double>(eps_samples);
    }
    return t;
}

inline Vec mean_trajectory(const LabeledPointCloud& dataset, const Schedule& schedule, double t,
                           MeanMode mode = MeanMode::analytic_noise_mean_zero,
                           int eps_samples = 1000000, std::uint64_t seed = 0) {
    return make_mean_trajectory(dataset, mode, eps_samples, seed).value(schedule, t);
}

/// Closed-form optimum of the contrastive objective given the FM optimum:
/// (v_fm - lambda * t_hat) / (1 - lambda).
inline Vec optimal_velocity_shift(const Vec& v_fm, const Vec& t_hat, double lambda) {
    require(v_fm.size() == t_hat.size(), "optimal_velocity_shift: dimension mismatch");
    require(lambda >= 0.0 && lambda < 1.0, "optimal_velocity_shift: lambda must lie in [0,1)");
    return (v_fm - lambda * t_hat) / (1.0 - lambda);
}

/// Uniform over {0..N-1} minus {i}.
inline std::size_t sample_negative(const std::vector<FlowSample>& batch, std::size_t i, Rng& rng) {
    const std::size_t n = batch.size();
    require(n >= 2, "sample_negative: need at least 2 samples for a negative");
    require(i < n, "sample_negative: index out of range");
    std::size_t j = static_cast<std::size_t>(rng.below(static_cast<std::uint64_t>(n - 1)));
    if (j >= i) ++j;
    return j;
}

/// A batch with times drawn, states formed, and regression targets attached;
/// what the network actually consumes.
struct PreparedBatch {
    Mat x_t;    // input_dim x N
    std::vector<double> t;
    std::vector<int> y;
    Mat v_pos;  // positive targets
    Mat v_neg;  // negative targets, only when with_negatives
    bool with_negatives = false;
};

/// Draws one t per sample from the "time" stream, and (optionally) one
/// negative index per sample from the "negative" stream, in sample order.
/// The two streams are independent, so the t sequence is identical whether
/// or not negatives are drawn.
inline PreparedBatch prepare_batch(const std::vector<FlowSample>& batch, const Schedule& schedule,
                                   StreamSet& rngs, bool with_negatives) {
    const std::size_t n = batch.size();
    require(n >= 1, "prepare_batch: empty batch");
    const int dim = static_cast<int>(batch[0].x.size());
    for (const auto& s : batch)
        require(s.x.size() == dim && s.eps.size() == dim,
                "prepare_batch: dimension mismatch within batch");

    PreparedBatch pb;
    pb.with_negatives = with_negatives;
    pb.x_t.resize(dim, static_cast<Eigen::Index>(n));
    pb.v_pos.resize(dim, static_cast<Eigen::Index>(n));
    if (with_negatives) pb.v_neg.resize(dim, static_cast<Eigen::Index>(n));
    pb.t.resize(n);
    pb.y.resize(n);

    Rng& time_rng = rngs.stream(streams::time);
    for (std::size_t i = 0; i < n; ++i) {
        const double t = time_rng.uniform01();
        const auto c = eval(schedule, t);
        const auto idx = static_cast<Eigen::Index>(i);
        pb.t[i] = t;
        pb.y[i] = batch[i].y;
        pb.x_t.col(idx) = c.alpha * batch[i].x + c.sigma * batch[i].eps;
        pb.v_pos.col(idx) = c.alpha_dot * batch[i].x + c.sigma_dot * batch[i].eps;
        if (with_negatives) {
            const std::size_t j = sample_negative(batch, i, rngs.stream(streams::negative));
            pb.v_neg.col(idx) = c.alpha_dot * batch[j].x + c.sigma_dot * batch[j].eps;
        }
    }
    return pb;
}

namespace detail {

/// Single source of truth for the two loss accumulations; with-gradient and
/// gradient-free paths both use it, so their loss values agree exactly.
inline void accumulate_terms(const Mat& out, const PreparedBatch& pb, double& fm_acc,
                             double& contrastive_acc) {
    fm_acc = 0.0;
    contrastive_acc = 0.0;
    for (Eigen::Index i = 0; i < out.cols(); ++i)
        fm_acc += (out.col(i) - pb.v_pos.col(i)).squaredNorm();
    if (pb.with_negatives)
        for (Eigen::Index i = 0; i < out.cols(); ++i)
            contrastive_acc += (out.col(i) - pb.v_neg.col(i)).squaredNorm();
}

inline LossReport report_from(const PreparedBatch& pb, double fm_acc, double contrastive_acc,
                              double lambda) {
    const double n = static_cast<double>(pb.t.size());
    LossReport r;
    r.fm_term = fm_acc / n;
    r.contrastive_term = pb.with_negatives ? contrastive_acc / n : 0.0;
    r.total = r.fm_term - lambda * r.contrastive_term;
    return r;
}

}  // namespace detail

inline LossReport batch_loss(const VelocityField& m, Workspace& ws, const PreparedBatch& pb,
                             double lambda) {
    forward_batch(m, ws, pb.x_t, pb.t, pb.y);
    double fm_acc, c_acc;
    detail::accumulate_terms(ws.out, pb, fm_acc, c_acc);
    return detail::report_from(pb, fm_acc, c_acc, lambda);
}

/// Mean squared residual against the interpolant's target velocity (the
/// plain flow-matching objective); contrastive_term is reported as zero.
inline LossReport fm_loss(const VelocityField& m, const std::vector<FlowSample>& batch,
                          const Schedule& schedule, StreamSet& rngs) {
    require(!batch.empty(), "fm_loss: empty batch");
    PreparedBatch pb = prepare_batch(batch, schedule, rngs, /*with_negatives=*/false);
    Workspace ws;
    return batch_loss(m, ws, pb, 0.0);
}

/// Contrastive objective: fm_term minus lambda times the mean squared
/// residual against a mismatched batch element's target, the negative
/// sharing its positive's t. With lambda = 0 this equals fm_loss bit for
/// bit; negatives are still drawn so the streams stay aligned.
inline LossReport delta_fm_loss(const VelocityField& m, const std::vector<FlowSample>& batch,
                                const Schedule& schedule, const ObjectiveConfig& config,
                                StreamSet& rngs) {
    config.validate();
    require(batch.size() >= 2, "delta_fm_loss: need at least 2 samples for negatives");
    PreparedBatch pb = prepare_batch(batch, schedule, rngs, /*with_negatives=*/true);
    Workspace ws;
    return batch_loss(m, ws, pb, config.lambda);
}

/// Objective closure for loss_and_gradient over a prepared batch. Fills
/// *report with the term breakdown as a side effect. The contrastive
/// gradient contribution is skipped entirely at lambda = 0 (it is exactly
/// zero there), which keeps lambda = 0 runs bit-identical to fm-only runs.
inline auto make_delta_objective(const PreparedBatch& pb, double lambda, LossReport* report) {
    return [&pb, lambda, report](const Mat& out, Mat& g_out) {
        double fm_acc, c_acc;
        detail::accumulate_terms(out, pb, fm_acc, c_acc);
        LossReport r = detail::report_from(pb, fm_acc, c_acc, lambda);
        if (report) *report = r;
        const double scale = 2.0 / static_cast<double>(out.cols());
        g_out = scale * (out - pb.v_pos);
        if (pb.with_negatives && lambda != 0.0) g_out -= (lambda * scale) * (out - pb.v_neg);
        return r.total;
    };
}

}  // namespace dfm
