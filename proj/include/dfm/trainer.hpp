#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "dfm/common.hpp"
#include "dfm/data.hpp"
#include "dfm/model.hpp"
#include "dfm/objective.hpp"
#include "dfm/rng.hpp"
#include "dfm/schedule.hpp"

namespace dfm {

enum class OptimizerKind { sgd, adaptive_moments };

struct TrainConfig {
    int batch_size = 256;
    int iterations = 20000;
    double learning_rate = 1e-3;
    double lambda = 0.05;
    double p_uncond = 0.1;
    std::uint64_t seed = 0;
    OptimizerKind optimizer = OptimizerKind::adaptive_moments;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    bool use_negatives = true;  // false trains the plain fm objective

    void validate() const {
        require(batch_size >= 1, "train: batch_size must be >= 1");
        require(iterations >= 1, "train: iterations must be >= 1");
        require(learning_rate > 0.0, "train: learning_rate must be positive");
        require(lambda >= 0.0 && lambda < 1.0, "train: lambda must lie in [0,1)");
        require(lambda == 0.0 || batch_size >= 2,
                "train: batch_size must be >= 2 when lambda > 0");
        require(lambda == 0.0 || use_negatives,
                "train: lambda > 0 requires the contrastive objective");
        require(p_uncond >= 0.0 && p_uncond <= 1.0, "train: p_uncond must lie in [0,1]");
        require(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0,
                "train: moment decays must lie in [0,1)");
        require(epsilon > 0.0, "train: epsilon must be positive");
    }
};

struct OptimizerState {
    Vec m;
    Vec v;
    long long step = 0;

    void prepare(Eigen::Index n) {
        if (m.size() != n) {
            m = Vec::Zero(n);
            v = Vec::Zero(n);
            step = 0;
        }
    }
};

inline void apply_update(OptimizerState& st, const TrainConfig& cfg, Vec& params,
                         const Vec& grad) {
    require(params.size() == grad.size(), "apply_update: gradient length mismatch");
    if (cfg.optimizer == OptimizerKind::sgd) {
        params -= cfg.learning_rate * grad;
        return;
    }
    st.prepare(params.size());
    ++st.step;
    st.m = cfg.beta1 * st.m + (1.0 - cfg.beta1) * grad;
    st.v = (cfg.beta2 * st.v.array() + (1.0 - cfg.beta2) * grad.array().square()).matrix();
    const double mcorr = 1.0 - std::pow(cfg.beta1, static_cast<double>(st.step));
    const double vcorr = 1.0 - std::pow(cfg.beta2, static_cast<double>(st.step));
    params.array() -=
        cfg.learning_rate * (st.m.array() / mcorr) / ((st.v.array() / vcorr).sqrt() + cfg.epsilon);
}

/// One optimizer update on the mean-reduced gradient of the contrastive
/// objective (or the plain fm objective when negatives are off).
inline LossReport train_step(VelocityField& model, const std::vector<FlowSample>& batch,
                             const Schedule& schedule, const TrainConfig& cfg,
                             OptimizerState& state, StreamSet& rngs, Workspace& ws) {
    const bool with_neg = cfg.use_negatives && batch.size() >= 2;
    PreparedBatch pb = prepare_batch(batch, schedule, rngs, with_neg);
    LossReport report;
    GradientTape tape = loss_and_gradient(model, ws, pb.x_t, pb.t, pb.y,
                                          make_delta_objective(pb, cfg.lambda, &report));
    apply_update(state, cfg, model.parameters, tape.gradient);
    return report;
}

/// Algorithm: per iteration, assemble a with-replacement batch from the
/// dataset with fresh noise per occurrence, apply condition dropout, then
/// take one train_step. Stream usage per sample, in order: "batch" index,
/// "noise" vector, "dropout" uniform; then "time" (and "negative") inside
/// the step. Every consumer has its own stream, so e.g. p_uncond or
/// use_negatives can change without disturbing the others' sequences.
inline std::vector<LossReport> train(VelocityField& model, const LabeledPointCloud& dataset,
                                     const TrainConfig& cfg, const Schedule& schedule = {}) {
    cfg.validate();
    dataset.validate();
    require(!dataset.points.empty(), "train: empty dataset");
    require(dataset.dim == model.input_dim, "train: dataset dimension mismatch with model");
    require(dataset.num_classes <= model.num_classes, "train: dataset has more classes than model");

    StreamSet rngs(cfg.seed);
    Rng& batch_rng = rngs.stream(streams::batch);
    Rng& noise_rng = rngs.stream(streams::noise);
    Rng& dropout_rng = rngs.stream(streams::dropout);

    OptimizerState state;
    Workspace ws;
    std::vector<LossReport> history;
    history.reserve(static_cast<std::size_t>(cfg.iterations));
    std::vector<FlowSample> batch(static_cast<std::size_t>(cfg.batch_size));

    for (int it = 0; it < cfg.iterations; ++it) {
        for (auto& s : batch) {
            const auto idx = static_cast<std::size_t>(
                batch_rng.below(static_cast<std::uint64_t>(dataset.size())));
            s.x = dataset.points[idx];
            s.y = dataset.labels[idx];
            s.eps = noise_rng.normal_vec(dataset.dim);
            if (dropout_rng.uniform01() < cfg.p_uncond) s.y = model.null_class();
        }
        history.push_back(train_step(model, batch, schedule, cfg, state, rngs, ws));
    }
    return history;
}

}  // namespace dfm
