#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "dfm/data.hpp"
#include "dfm/model.hpp"
#include "dfm/trainer.hpp"
#include "support.hpp"

using dfm::Vec;

namespace {

dfm::LabeledPointCloud toy_cloud(int n_per_class, std::uint64_t seed) {
    auto [cloud, spec] = dfm::two_gaussians(dfm::default_separation(), 1.0, n_per_class, seed);
    (void)spec;
    return cloud;
}

}  // namespace

TEST_CASE("sgd takes exactly the scaled gradient step", "[trainer]") {
    dfm::TrainConfig cfg;
    cfg.optimizer = dfm::OptimizerKind::sgd;
    cfg.learning_rate = 0.1;
    dfm::OptimizerState st;
    Vec params(2);
    params << 1.0, 2.0;
    Vec grad(2);
    grad << 3.0, -4.0;
    dfm::apply_update(st, cfg, params, grad);
    CHECK(params(0) == 1.0 - 0.1 * 3.0);
    CHECK(params(1) == 2.0 - 0.1 * (-4.0));
}

TEST_CASE("the adaptive optimizer matches a scalar reference", "[trainer]") {
    dfm::TrainConfig cfg;
    cfg.optimizer = dfm::OptimizerKind::adaptive_moments;
    cfg.learning_rate = 0.01;

    dfm::OptimizerState st;
    Vec params(1);
    params << 0.5;

    // hand-rolled single-parameter recurrence with bias correction
    double ref = 0.5, m = 0.0, v = 0.0;
    for (int k = 1; k <= 20; ++k) {
        const double g = std::sin(static_cast<double>(k));
        Vec grad(1);
        grad << g;
        dfm::apply_update(st, cfg, params, grad);

        m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
        v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g;
        const double mh = m / (1.0 - std::pow(cfg.beta1, k));
        const double vh = v / (1.0 - std::pow(cfg.beta2, k));
        ref -= cfg.learning_rate * mh / (std::sqrt(vh) + cfg.epsilon);
        CHECK(std::abs(params(0) - ref) <= 1e-12);
    }
}

TEST_CASE("training is bit-reproducible", "[trainer]") {
    const dfm::LabeledPointCloud cloud = toy_cloud(128, 2);
    dfm::TrainConfig cfg;
    cfg.iterations = 100;
    cfg.batch_size = 16;
    cfg.seed = 7;

    dfm::VelocityField a = dfm::init(2, {16}, 2, 4, 8, 1);
    dfm::VelocityField b = dfm::init(2, {16}, 2, 4, 8, 1);
    const auto ha = dfm::train(a, cloud, cfg);
    const auto hb = dfm::train(b, cloud, cfg);
    CHECK((a.parameters - b.parameters).cwiseAbs().maxCoeff() == 0.0);
    REQUIRE(ha.size() == hb.size());
    bool same_losses = true;
    for (std::size_t i = 0; i < ha.size(); ++i)
        same_losses = same_losses && ha[i].total == hb[i].total;
    CHECK(same_losses);
}

TEST_CASE("lambda zero training equals fm-only training bit for bit", "[trainer]") {
    const dfm::LabeledPointCloud cloud = toy_cloud(128, 3);
    dfm::TrainConfig with_neg;
    with_neg.iterations = 50;
    with_neg.batch_size = 16;
    with_neg.lambda = 0.0;
    with_neg.use_negatives = true;
    with_neg.seed = 11;
    dfm::TrainConfig without = with_neg;
    without.use_negatives = false;

    dfm::VelocityField a = dfm::init(2, {16}, 2, 4, 8, 4);
    dfm::VelocityField b = dfm::init(2, {16}, 2, 4, 8, 4);
    dfm::train(a, cloud, with_neg);
    dfm::train(b, cloud, without);
    CHECK((a.parameters - b.parameters).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("loss history covers every iteration and trends down", "[trainer]") {
    const dfm::LabeledPointCloud cloud = toy_cloud(512, 5);
    dfm::TrainConfig cfg;
    cfg.iterations = 1200;
    cfg.batch_size = 64;
    cfg.seed = 3;

    dfm::VelocityField m = dfm::init(2, {32, 32}, 2, 8, 16, 21);
    const auto history = dfm::train(m, cloud, cfg);
    REQUIRE(history.size() == 1200);

    double head = 0.0;
    for (int i = 0; i < 10; ++i) head += history[static_cast<std::size_t>(i)].fm_term / 10.0;
    double tail = 0.0;
    const std::size_t tail_n = history.size() / 10;
    for (std::size_t i = history.size() - tail_n; i < history.size(); ++i)
        tail += history[i].fm_term / static_cast<double>(tail_n);
    CHECK(tail < head);
}

TEST_CASE("condition dropout only touches the null embedding when active", "[trainer]") {
    const dfm::LabeledPointCloud cloud = toy_cloud(128, 6);

    // p_uncond = 0: the null row can never receive a gradient
    dfm::VelocityField m = dfm::init(2, {16}, 2, 4, 8, 30);
    const Vec null_row_before =
        m.parameters.segment(static_cast<std::ptrdiff_t>(m.class_embed_dim) * m.null_class(),
                             m.class_embed_dim);
    dfm::TrainConfig cfg;
    cfg.iterations = 30;
    cfg.batch_size = 8;
    cfg.p_uncond = 0.0;
    dfm::train(m, cloud, cfg);
    const Vec null_row_after =
        m.parameters.segment(static_cast<std::ptrdiff_t>(m.class_embed_dim) * m.null_class(),
                             m.class_embed_dim);
    CHECK((null_row_before - null_row_after).cwiseAbs().maxCoeff() == 0.0);

    // p_uncond = 1: only the null row sees labels, the class rows stay put
    dfm::VelocityField m2 = dfm::init(2, {16}, 2, 4, 8, 30);
    const Vec class_rows_before =
        m2.parameters.segment(0, static_cast<std::ptrdiff_t>(m2.class_embed_dim) * 2);
    dfm::TrainConfig cfg2 = cfg;
    cfg2.p_uncond = 1.0;
    dfm::train(m2, cloud, cfg2);
    const Vec class_rows_after =
        m2.parameters.segment(0, static_cast<std::ptrdiff_t>(m2.class_embed_dim) * 2);
    const Vec null_after2 =
        m2.parameters.segment(static_cast<std::ptrdiff_t>(m2.class_embed_dim) * m2.null_class(),
                              m2.class_embed_dim);
    CHECK((class_rows_before - class_rows_after).cwiseAbs().maxCoeff() == 0.0);
    CHECK((null_row_before - null_after2).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("train rejects inconsistent configurations", "[trainer]") {
    const dfm::LabeledPointCloud cloud = toy_cloud(16, 1);
    dfm::VelocityField m = dfm::init(2, {8}, 2, 4, 4, 0);

    dfm::TrainConfig solo;
    solo.batch_size = 1;
    solo.lambda = 0.05;
    CHECK_THROWS_AS(dfm::train(m, cloud, solo), std::invalid_argument);

    dfm::TrainConfig no_neg;
    no_neg.lambda = 0.05;
    no_neg.use_negatives = false;
    CHECK_THROWS_AS(dfm::train(m, cloud, no_neg), std::invalid_argument);

    dfm::TrainConfig bad_lr;
    bad_lr.learning_rate = 0.0;
    CHECK_THROWS_AS(dfm::train(m, cloud, bad_lr), std::invalid_argument);

    dfm::VelocityField wrong_dim = dfm::init(3, {8}, 2, 4, 4, 0);
    dfm::TrainConfig ok;
    ok.iterations = 1;
    CHECK_THROWS_AS(dfm::train(wrong_dim, cloud, ok), std::invalid_argument);
}
