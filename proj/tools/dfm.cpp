// Command-line front end. Flags mirror the run-config keys and override
// values loaded from --config; DFM_OUT_DIR supplies the output directory
// when neither source sets one.

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dfm/commands.hpp"

namespace {

struct Overrides {
    std::optional<std::string> data_builtin, data_csv;
    std::optional<double> separation, data_scale;
    std::optional<int> n_per_class;
    std::optional<std::uint64_t> data_seed;

    std::optional<std::string> hidden;
    std::optional<int> time_features, class_embed;

    std::optional<int> batch, iters;
    std::optional<double> lr, lambda, p_uncond, beta1, beta2, adam_epsilon;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> optimizer, objective;

    std::optional<std::string> sampler_kind, diffusion;
    std::optional<int> nfe;
    std::optional<std::uint64_t> sampler_seed;

    std::optional<std::string> guidance, guidance_lambda, preset;
    std::optional<double> w, sigma_low, sigma_high;

    std::optional<int> eval_n, eval_trajectories, record_every, projections;
    std::optional<double> threshold;
    std::optional<std::uint64_t> eval_seed;

    std::optional<std::string> out_dir;
};

void add_override_flags(CLI::App& app, Overrides& ov) {
    app.add_option("--data", ov.data_builtin, "dataset: two_gaussians or csv");
    app.add_option("--csv", ov.data_csv, "csv dataset path");
    app.add_option("--separation", ov.separation, "two_gaussians mean separation");
    app.add_option("--data-scale", ov.data_scale, "two_gaussians std dev");
    app.add_option("--n-per-class", ov.n_per_class, "training points per class");
    app.add_option("--data-seed", ov.data_seed, "dataset generation seed");

    app.add_option("--hidden", ov.hidden, "hidden widths, e.g. 64,64");
    app.add_option("--time-features", ov.time_features, "sin/cos frequency pairs");
    app.add_option("--class-embed", ov.class_embed, "class embedding width");

    app.add_option("--batch", ov.batch, "batch size");
    app.add_option("--iters", ov.iters, "training iterations");
    app.add_option("--lr", ov.lr, "learning rate");
    app.add_option("--lambda", ov.lambda, "contrastive weight in [0,1)");
    app.add_option("--p-uncond", ov.p_uncond, "label dropout probability");
    app.add_option("--seed", ov.seed, "training seed");
    app.add_option("--optimizer", ov.optimizer, "adaptive_moments or sgd");
    app.add_option("--beta1", ov.beta1, "first moment decay");
    app.add_option("--beta2", ov.beta2, "second moment decay");
    app.add_option("--adam-epsilon", ov.adam_epsilon, "optimizer denominator floor");
    app.add_option("--objective", ov.objective, "delta or fm");

    app.add_option("--sampler", ov.sampler_kind, "euler_maruyama or euler_ode");
    app.add_option("--nfe", ov.nfe, "integration steps per trajectory");
    app.add_option("--diffusion", ov.diffusion, "sigma_t or a constant value");
    app.add_option("--sampler-seed", ov.sampler_seed, "sampling seed");

    app.add_option("--guidance", ov.guidance, "off, standard, hat, or tilde");
    app.add_option("--w", ov.w, "guidance strength");
    app.add_option("--sigma-low", ov.sigma_low, "guidance window lower bound");
    app.add_option("--sigma-high", ov.sigma_high, "guidance window upper bound");
    app.add_option("--guidance-lambda", ov.guidance_lambda, "inherit or a value in [0,1)");
    app.add_option("--preset", ov.preset, "guidance preset: delta or fm");

    app.add_option("--eval-n", ov.eval_n, "evaluation samples per class");
    app.add_option("--eval-trajectories", ov.eval_trajectories, "flow trajectories per class");
    app.add_option("--record-every", ov.record_every, "trajectory recording cadence");
    app.add_option("--threshold", ov.threshold, "posterior ambiguity threshold");
    app.add_option("--projections", ov.projections, "sliced distance projections");
    app.add_option("--eval-seed", ov.eval_seed, "evaluation seed");

    app.add_option("--out-dir", ov.out_dir, "output directory");
}

void apply_overrides(dfm::RunConfig& cfg, const Overrides& ov) {
    using dfm::config_error;
    if (ov.data_builtin) cfg.data.builtin = *ov.data_builtin;
    if (ov.data_csv) {
        cfg.data.csv = *ov.data_csv;
        if (!ov.data_builtin) cfg.data.builtin = "csv";
    }
    if (ov.separation) cfg.data.separation = *ov.separation;
    if (ov.data_scale) cfg.data.scale = *ov.data_scale;
    if (ov.n_per_class) cfg.data.n_per_class = *ov.n_per_class;
    if (ov.data_seed) cfg.data.seed = *ov.data_seed;

    if (ov.hidden) cfg.model.hidden = dfm::detail::parse_int_list(*ov.hidden, "model.hidden");
    if (ov.time_features) cfg.model.time_features = *ov.time_features;
    if (ov.class_embed) cfg.model.class_embed_dim = *ov.class_embed;

    if (ov.batch) cfg.train.batch_size = *ov.batch;
    if (ov.iters) cfg.train.iterations = *ov.iters;
    if (ov.lr) cfg.train.learning_rate = *ov.lr;
    if (ov.lambda) cfg.train.lambda = *ov.lambda;
    if (ov.p_uncond) cfg.train.p_uncond = *ov.p_uncond;
    if (ov.seed) cfg.train.seed = *ov.seed;
    if (ov.optimizer) {
        if (*ov.optimizer == "adaptive_moments")
            cfg.train.optimizer = dfm::OptimizerKind::adaptive_moments;
        else if (*ov.optimizer == "sgd") cfg.train.optimizer = dfm::OptimizerKind::sgd;
        else throw config_error("--optimizer must be adaptive_moments or sgd");
    }
    if (ov.beta1) cfg.train.beta1 = *ov.beta1;
    if (ov.beta2) cfg.train.beta2 = *ov.beta2;
    if (ov.adam_epsilon) cfg.train.epsilon = *ov.adam_epsilon;
    if (ov.objective) {
        if (*ov.objective == "delta") cfg.train.use_negatives = true;
        else if (*ov.objective == "fm") cfg.train.use_negatives = false;
        else throw config_error("--objective must be delta or fm");
    }

    if (ov.sampler_kind) {
        if (*ov.sampler_kind == "euler_maruyama")
            cfg.sampler.kind = dfm::SamplerKind::euler_maruyama;
        else if (*ov.sampler_kind == "euler_ode") cfg.sampler.kind = dfm::SamplerKind::euler_ode;
        else throw config_error("--sampler must be euler_maruyama or euler_ode");
    }
    if (ov.nfe) cfg.sampler.nfe = *ov.nfe;
    if (ov.diffusion) {
        if (*ov.diffusion == "sigma_t") cfg.sampler.diffusion_scale = dfm::DiffusionScale::sigma();
        else
            cfg.sampler.diffusion_scale = dfm::DiffusionScale::constant(
                dfm::detail::parse_num(*ov.diffusion, "sampler.diffusion"));
    }
    if (ov.sampler_seed) cfg.sampler.seed = *ov.sampler_seed;

    if (ov.preset) {
        if (*ov.preset == "delta") {
            // t_hat is resolved later from the training data
            cfg.guidance.enabled = true;
            cfg.guidance.mode = dfm::GuidanceMode::hat_cfg;
            cfg.guidance.w = 1.85;
            cfg.guidance.sigma_low = 0.0;
            cfg.guidance.sigma_high = 0.65;
        } else if (*ov.preset == "fm") {
            cfg.guidance = dfm::guidance_preset_fm();
        } else {
            throw config_error("--preset must be delta or fm");
        }
    }
    if (ov.guidance) {
        if (*ov.guidance == "off") cfg.guidance.enabled = false;
        else if (*ov.guidance == "standard") {
            cfg.guidance.enabled = true;
            cfg.guidance.mode = dfm::GuidanceMode::standard_cfg;
        } else if (*ov.guidance == "hat") {
            cfg.guidance.enabled = true;
            cfg.guidance.mode = dfm::GuidanceMode::hat_cfg;
        } else if (*ov.guidance == "tilde") {
            cfg.guidance.enabled = true;
            cfg.guidance.mode = dfm::GuidanceMode::tilde_cfg;
        } else {
            throw config_error("--guidance must be off, standard, hat, or tilde");
        }
    }
    if (ov.w) cfg.guidance.w = *ov.w;
    if (ov.sigma_low) cfg.guidance.sigma_low = *ov.sigma_low;
    if (ov.sigma_high) cfg.guidance.sigma_high = *ov.sigma_high;
    if (ov.guidance_lambda) {
        if (*ov.guidance_lambda == "inherit") cfg.guidance_lambda_raw = -1.0;
        else
            cfg.guidance_lambda_raw =
                dfm::detail::parse_num(*ov.guidance_lambda, "guidance.lambda");
    }

    if (ov.eval_n) cfg.eval.n_per_class = *ov.eval_n;
    if (ov.eval_trajectories) cfg.eval.trajectories = *ov.eval_trajectories;
    if (ov.record_every) cfg.eval.record_every = *ov.record_every;
    if (ov.threshold) cfg.eval.threshold = *ov.threshold;
    if (ov.projections) cfg.eval.projections = *ov.projections;
    if (ov.eval_seed) cfg.eval.seed = *ov.eval_seed;

    if (ov.out_dir) cfg.output_dir = *ov.out_dir;
    else if (cfg.output_dir == ".") {
        if (const char* env = std::getenv("DFM_OUT_DIR"); env && *env) cfg.output_dir = env;
    }
}

std::vector<double> parse_value_list(const std::string& s, const std::string& what) {
    std::vector<double> out;
    std::string cell;
    std::istringstream ss(s);
    while (std::getline(ss, cell, ','))
        if (!dfm::detail::trim(cell).empty())
            out.push_back(dfm::parse_double(dfm::detail::trim(cell), what));
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"contrastive flow-matching toolkit"};
    app.require_subcommand(1);

    std::string config_path;
    app.add_option("--config", config_path, "run-config file");
    Overrides ov;
    add_override_flags(app, ov);

    auto* c_train = app.add_subcommand("train", "train a velocity field");

    auto* c_sample = app.add_subcommand("sample", "draw samples from a checkpoint");
    dfm::SampleArgs sargs;
    c_sample->add_option("--ckpt", sargs.checkpoint, "checkpoint path")->required();
    c_sample->add_option("--n", sargs.n, "samples (or trajectories) per class");
    c_sample->add_option("--class", sargs.class_id, "class id, -1 for all");
    c_sample->add_flag("--trajectories", sargs.trajectories, "dump trajectories instead of samples");
    c_sample->add_option("--sample-record-every", sargs.record_every, "trajectory cadence");
    c_sample->add_option("--out", sargs.out, "output csv path");

    auto* c_eval = app.add_subcommand("eval", "metrics for a checkpoint");
    dfm::EvalArgs eargs;
    c_eval->add_option("--ckpt", eargs.checkpoint, "checkpoint path");
    c_eval->add_flag("--oracle", eargs.oracle, "evaluate the analytic field instead");
    c_eval->add_option("--out", eargs.out, "report path");

    auto* c_sweep = app.add_subcommand("sweep", "train/evaluate across one axis");
    std::string axis, values_text = "@default";
    int sweep_seeds = 1;
    std::string sweep_out;
    c_sweep->add_option("--axis", axis, "lambda, nfe, or batch_size")->required();
    c_sweep->add_option("--values", values_text, "comma-separated values");
    c_sweep->add_option("--seeds", sweep_seeds, "seeds averaged per value");
    c_sweep->add_option("--out", sweep_out, "sweep csv path");

    auto* c_oracle = app.add_subcommand("oracle-check", "closed-form optimum verification");
    int probes = 50;
    std::string lambdas_text = "0.05,0.5";
    c_oracle->add_option("--probes", probes, "probe points");
    c_oracle->add_option("--lambdas", lambdas_text, "comma-separated contrastive weights");

    auto* c_plot = app.add_subcommand("plot", "render an svg figure");
    std::string kind, plot_out;
    dfm::PlotInputs pin;
    c_plot->add_option("--kind", kind, "flows, panels, denoise_strip, or loss_curves")->required();
    c_plot->add_option("--trajectories", pin.trajectory_files, "trajectory csv per class");
    c_plot->add_option("--samples", pin.sample_files, "sample csv files (panels: top bottom)");
    c_plot->add_option("--data", pin.data_file, "background data csv");
    c_plot->add_option("--loss", pin.loss_file, "loss history csv");
    c_plot->add_option("--out", plot_out, "output svg path");

    // overrides live on the parent app so they read naturally after any verb
    for (CLI::App* sc : {c_train, c_sample, c_eval, c_sweep, c_oracle, c_plot})
        sc->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        dfm::RunConfig cfg;
        if (!config_path.empty()) cfg = dfm::load_config(config_path);
        apply_overrides(cfg, ov);
        cfg.validate();

        if (c_train->parsed()) {
            dfm::cmd_train(cfg, std::cout);
        } else if (c_sample->parsed()) {
            if (sargs.out.empty())
                sargs.out = dfm::join_path(cfg.output_dir,
                                           sargs.trajectories ? "trajectories.csv" : "samples.csv");
            dfm::cmd_sample(cfg, sargs, std::cout);
        } else if (c_eval->parsed()) {
            if (!eargs.oracle && eargs.checkpoint.empty())
                throw dfm::config_error("eval: provide --ckpt or --oracle");
            if (eargs.out.empty()) eargs.out = dfm::join_path(cfg.output_dir, "eval.txt");
            dfm::cmd_eval(cfg, eargs, std::cout);
        } else if (c_sweep->parsed()) {
            std::vector<double> values;
            if (values_text == "@default") values = dfm::default_sweep_values(axis);
            else values = parse_value_list(values_text, "sweep values");
            if (sweep_out.empty()) sweep_out = dfm::join_path(cfg.output_dir, "sweep.csv");
            dfm::cmd_sweep(cfg, axis, values, sweep_seeds, sweep_out, std::cout);
        } else if (c_oracle->parsed()) {
            auto res = dfm::cmd_oracle_check(cfg, probes,
                                             parse_value_list(lambdas_text, "lambda values"),
                                             std::cout);
            if (!res.pass) return 3;
        } else if (c_plot->parsed()) {
            if (plot_out.empty()) plot_out = dfm::join_path(cfg.output_dir, kind + ".svg");
            dfm::cmd_plot(kind, pin, plot_out, std::cout);
        }
    } catch (const dfm::config_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const dfm::io_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    } catch (const dfm::format_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
