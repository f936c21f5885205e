#pragma once

#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "dfm/common.hpp"
#include "dfm/data.hpp"
#include "dfm/sampler.hpp"
#include "dfm/trainer.hpp"

namespace dfm {

struct DataConfig {
    std::string builtin = "two_gaussians";  // or "csv"
    std::string csv;
    double separation = default_separation();
    double scale = 1.0;
    int n_per_class = 4096;
    std::uint64_t seed = 0;
};

struct ModelConfig {
    std::vector<int> hidden = {64, 64};
    int time_features = 8;
    int class_embed_dim = 16;
};

struct EvalConfig {
    int n_per_class = 1024;
    int trajectories = 256;
    int record_every = 1;
    double threshold = 0.5;
    int projections = 128;
    std::uint64_t seed = 0;
};

struct RunConfig {
    DataConfig data;
    ModelConfig model;
    TrainConfig train;
    SamplerConfig sampler;
    GuidanceConfig guidance;
    double guidance_lambda_raw = -1.0;  // < 0 means "inherit train.lambda"
    EvalConfig eval;
    std::string output_dir = ".";

    double guidance_lambda() const {
        return guidance_lambda_raw < 0.0 ? train.lambda : guidance_lambda_raw;
    }

    void validate() const {
        auto check = [](bool ok, const std::string& msg) {
            if (!ok) throw config_error("config: " + msg);
        };
        check(data.builtin == "two_gaussians" || data.builtin == "csv",
              "data.builtin must be two_gaussians or csv");
        check(data.builtin != "csv" || !data.csv.empty(), "data.csv path required for csv data");
        check(data.separation >= 0.0, "data.separation must be >= 0");
        check(data.scale > 0.0, "data.scale must be positive");
        check(data.n_per_class >= 1, "data.n_per_class must be >= 1");
        check(!model.hidden.empty(), "model.hidden must list at least one width");
        for (int h : model.hidden) check(h >= 1, "model.hidden widths must be >= 1");
        check(model.time_features >= 1, "model.time_features must be >= 1");
        check(model.class_embed_dim >= 1, "model.class_embed_dim must be >= 1");
        check(train.batch_size >= 1, "train.batch_size must be >= 1");
        check(train.iterations >= 1, "train.iterations must be >= 1");
        check(train.learning_rate > 0.0, "train.learning_rate must be positive");
        check(train.lambda >= 0.0 && train.lambda < 1.0, "train.lambda must lie in [0,1)");
        check(train.lambda == 0.0 || train.batch_size >= 2,
              "train.batch_size must be >= 2 when train.lambda > 0");
        check(train.lambda == 0.0 || train.use_negatives,
              "train.objective must be delta when train.lambda > 0");
        check(train.p_uncond >= 0.0 && train.p_uncond <= 1.0, "train.p_uncond must lie in [0,1]");
        check(train.beta1 >= 0.0 && train.beta1 < 1.0, "train.beta1 must lie in [0,1)");
        check(train.beta2 >= 0.0 && train.beta2 < 1.0, "train.beta2 must lie in [0,1)");
        check(train.epsilon > 0.0, "train.epsilon must be positive");
        check(sampler.nfe >= 1, "sampler.nfe must be >= 1");
        check(sampler.diffusion_scale.kind == DiffusionScale::Kind::sigma_t ||
                  sampler.diffusion_scale.value >= 0.0,
              "sampler.diffusion must be sigma_t or a number >= 0");
        check(guidance.w >= 0.0, "guidance.w must be >= 0");
        check(0.0 <= guidance.sigma_low && guidance.sigma_low <= guidance.sigma_high &&
                  guidance.sigma_high <= 1.0,
              "guidance window must satisfy 0 <= sigma_low <= sigma_high <= 1");
        check(guidance_lambda_raw < 0.0 ||
                  (guidance_lambda_raw >= 0.0 && guidance_lambda_raw < 1.0),
              "guidance.lambda must lie in [0,1) or be inherit");
        check(eval.n_per_class >= 1, "eval.n_per_class must be >= 1");
        check(eval.trajectories >= 1, "eval.trajectories must be >= 1");
        check(eval.record_every >= 1, "eval.record_every must be >= 1");
        check(eval.threshold > 0.0 && eval.threshold <= 1.0,
              "eval.threshold must lie in (0,1]");
        check(eval.projections >= 1, "eval.projections must be >= 1");
        check(!output_dir.empty(), "output.dir must not be empty");
    }
};

namespace detail {

inline std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline long long parse_int(const std::string& v, const std::string& key) {
    try {
        std::size_t pos = 0;
        long long r = std::stoll(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return r;
    } catch (const std::exception&) {
        throw config_error("config: key '" + key + "' wants an integer, got '" + v + "'");
    }
}

inline double parse_num(const std::string& v, const std::string& key) {
    try {
        return parse_double(v, key);
    } catch (const std::exception&) {
        throw config_error("config: key '" + key + "' wants a number, got '" + v + "'");
    }
}

inline bool parse_bool(const std::string& v, const std::string& key) {
    if (v == "true") return true;
    if (v == "false") return false;
    throw config_error("config: key '" + key + "' wants true or false, got '" + v + "'");
}

inline std::vector<int> parse_int_list(const std::string& v, const std::string& key) {
    std::vector<int> out;
    std::istringstream ss(v);
    std::string cell;
    while (std::getline(ss, cell, ','))
        out.push_back(static_cast<int>(parse_int(trim(cell), key)));
    if (out.empty()) throw config_error("config: key '" + key + "' wants a list of integers");
    return out;
}

}  // namespace detail

inline RunConfig parse_config(const std::string& text) {
    RunConfig cfg;
    std::istringstream in(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string s = detail::trim(line);
        if (s.empty() || s[0] == '#' || s[0] == ';') continue;
        if (s.front() == '[') {
            if (s.back() != ']')
                throw config_error("config: malformed section header at line " +
                                   std::to_string(lineno));
            section = s.substr(1, s.size() - 2);
            if (section != "data" && section != "model" && section != "train" &&
                section != "sampler" && section != "guidance" && section != "eval" &&
                section != "output")
                throw config_error("config: unknown section '" + section + "'");
            continue;
        }
        std::size_t eq = s.find('=');
        if (eq == std::string::npos)
            throw config_error("config: expected key = value at line " + std::to_string(lineno));
        std::string key = detail::trim(s.substr(0, eq));
        std::string val = detail::trim(s.substr(eq + 1));
        if (section.empty())
            throw config_error("config: key '" + key + "' before any [section]");
        const std::string full = section + "." + key;

        if (section == "data") {
            if (key == "builtin") cfg.data.builtin = val;
            else if (key == "csv") cfg.data.csv = val;
            else if (key == "separation") cfg.data.separation = detail::parse_num(val, full);
            else if (key == "scale") cfg.data.scale = detail::parse_num(val, full);
            else if (key == "n_per_class") cfg.data.n_per_class = static_cast<int>(detail::parse_int(val, full));
            else if (key == "seed") cfg.data.seed = static_cast<std::uint64_t>(detail::parse_int(val, full));
            else throw config_error("config: unknown key '" + full + "'");
        } else if (section == "model") {
            if (key == "hidden") cfg.model.hidden = detail::parse_int_list(val, full);
            else if (key == "time_features") cfg.model.time_features = static_cast<int>(detail::parse_int(val, full));
            else if (key == "class_embed_dim") cfg.model.class_embed_dim = static_cast<int>(detail::parse_int(val, full));
            else throw config_error("config: unknown key '" + full + "'");
        } else if (section == "train") {
            if (key == "batch_size") cfg.train.batch_size = static_cast<int>(detail::parse_int(val, full));
            else if (key == "iterations") cfg.train.iterations = static_cast<int>(detail::parse_int(val, full));
            else if (key == "learning_rate") cfg.train.learning_rate = detail::parse_num(val, full);
            else if (key == "lambda") cfg.train.lambda = detail::parse_num(val, full);
            else if (key == "p_uncond") cfg.train.p_uncond = detail::parse_num(val, full);
            else if (key == "seed") cfg.train.seed = static_cast<std::uint64_t>(detail::parse_int(val, full));
            else if (key == "optimizer") {
                if (val == "adaptive_moments") cfg.train.optimizer = OptimizerKind::adaptive_moments;
                else if (val == "sgd") cfg.train.optimizer = OptimizerKind::sgd;
                else throw config_error("config: train.optimizer must be adaptive_moments or sgd");
            } else if (key == "beta1") cfg.train.beta1 = detail::parse_num(val, full);
            else if (key == "beta2") cfg.train.beta2 = detail::parse_num(val, full);
            else if (key == "epsilon") cfg.train.epsilon = detail::parse_num(val, full);
            else if (key == "objective") {
                if (val == "delta") cfg.train.use_negatives = true;
                else if (val == "fm") cfg.train.use_negatives = false;
                else throw config_error("config: train.objective must be delta or fm");
            } else throw config_error("config: unknown key '" + full + "'");
        } else if (section == "sampler") {
            if (key == "kind") {
                if (val == "euler_maruyama") cfg.sampler.kind = SamplerKind::euler_maruyama;
                else if (val == "euler_ode") cfg.sampler.kind = SamplerKind::euler_ode;
                else throw config_error("config: sampler.kind must be euler_maruyama or euler_ode");
            } else if (key == "nfe") cfg.sampler.nfe = static_cast<int>(detail::parse_int(val, full));
            else if (key == "diffusion") {
                if (val == "sigma_t") cfg.sampler.diffusion_scale = DiffusionScale::sigma();
                else cfg.sampler.diffusion_scale = DiffusionScale::constant(detail::parse_num(val, full));
            } else if (key == "seed") cfg.sampler.seed = static_cast<std::uint64_t>(detail::parse_int(val, full));
            else throw config_error("config: unknown key '" + full + "'");
        } else if (section == "guidance") {
            if (key == "enabled") cfg.guidance.enabled = detail::parse_bool(val, full);
            else if (key == "mode") {
                if (val == "standard") cfg.guidance.mode = GuidanceMode::standard_cfg;
                else if (val == "hat") cfg.guidance.mode = GuidanceMode::hat_cfg;
                else if (val == "tilde") cfg.guidance.mode = GuidanceMode::tilde_cfg;
                else throw config_error("config: guidance.mode must be standard, hat, or tilde");
            } else if (key == "w") cfg.guidance.w = detail::parse_num(val, full);
            else if (key == "sigma_low") cfg.guidance.sigma_low = detail::parse_num(val, full);
            else if (key == "sigma_high") cfg.guidance.sigma_high = detail::parse_num(val, full);
            else if (key == "lambda") {
                if (val == "inherit") cfg.guidance_lambda_raw = -1.0;
                else cfg.guidance_lambda_raw = detail::parse_num(val, full);
            } else throw config_error("config: unknown key '" + full + "'");
        } else if (section == "eval") {
            if (key == "n_per_class") cfg.eval.n_per_class = static_cast<int>(detail::parse_int(val, full));
            else if (key == "trajectories") cfg.eval.trajectories = static_cast<int>(detail::parse_int(val, full));
            else if (key == "record_every") cfg.eval.record_every = static_cast<int>(detail::parse_int(val, full));
            else if (key == "threshold") cfg.eval.threshold = detail::parse_num(val, full);
            else if (key == "projections") cfg.eval.projections = static_cast<int>(detail::parse_int(val, full));
            else if (key == "seed") cfg.eval.seed = static_cast<std::uint64_t>(detail::parse_int(val, full));
            else throw config_error("config: unknown key '" + full + "'");
        } else {  // output
            if (key == "dir") cfg.output_dir = val;
            else throw config_error("config: unknown key '" + full + "'");
        }
    }
    cfg.validate();
    return cfg;
}

inline std::string serialize_config(const RunConfig& cfg) {
    std::ostringstream o;
    o << "[data]\n";
    o << "builtin = " << cfg.data.builtin << "\n";
    o << "csv = " << cfg.data.csv << "\n";
    o << "separation = " << format_double(cfg.data.separation) << "\n";
    o << "scale = " << format_double(cfg.data.scale) << "\n";
    o << "n_per_class = " << cfg.data.n_per_class << "\n";
    o << "seed = " << cfg.data.seed << "\n";
    o << "\n[model]\n";
    o << "hidden = ";
    for (std::size_t i = 0; i < cfg.model.hidden.size(); ++i)
        o << (i ? "," : "") << cfg.model.hidden[i];
    o << "\n";
    o << "time_features = " << cfg.model.time_features << "\n";
    o << "class_embed_dim = " << cfg.model.class_embed_dim << "\n";
    o << "\n[train]\n";
    o << "batch_size = " << cfg.train.batch_size << "\n";
    o << "iterations = " << cfg.train.iterations << "\n";
    o << "learning_rate = " << format_double(cfg.train.learning_rate) << "\n";
    o << "lambda = " << format_double(cfg.train.lambda) << "\n";
    o << "p_uncond = " << format_double(cfg.train.p_uncond) << "\n";
    o << "seed = " << cfg.train.seed << "\n";
    o << "optimizer = "
      << (cfg.train.optimizer == OptimizerKind::adaptive_moments ? "adaptive_moments" : "sgd")
      << "\n";
    o << "beta1 = " << format_double(cfg.train.beta1) << "\n";
    o << "beta2 = " << format_double(cfg.train.beta2) << "\n";
    o << "epsilon = " << format_double(cfg.train.epsilon) << "\n";
    o << "objective = " << (cfg.train.use_negatives ? "delta" : "fm") << "\n";
    o << "\n[sampler]\n";
    o << "kind = "
      << (cfg.sampler.kind == SamplerKind::euler_maruyama ? "euler_maruyama" : "euler_ode")
      << "\n";
    o << "nfe = " << cfg.sampler.nfe << "\n";
    o << "diffusion = ";
    if (cfg.sampler.diffusion_scale.kind == DiffusionScale::Kind::sigma_t) o << "sigma_t";
    else o << format_double(cfg.sampler.diffusion_scale.value);
    o << "\n";
    o << "seed = " << cfg.sampler.seed << "\n";
    o << "\n[guidance]\n";
    o << "enabled = " << (cfg.guidance.enabled ? "true" : "false") << "\n";
    o << "mode = ";
    switch (cfg.guidance.mode) {
        case GuidanceMode::standard_cfg: o << "standard"; break;
        case GuidanceMode::hat_cfg: o << "hat"; break;
        case GuidanceMode::tilde_cfg: o << "tilde"; break;
    }
    o << "\n";
    o << "w = " << format_double(cfg.guidance.w) << "\n";
    o << "sigma_low = " << format_double(cfg.guidance.sigma_low) << "\n";
    o << "sigma_high = " << format_double(cfg.guidance.sigma_high) << "\n";
    o << "lambda = ";
    if (cfg.guidance_lambda_raw < 0.0) o << "inherit";
    else o << format_double(cfg.guidance_lambda_raw);
    o << "\n";
    o << "\n[eval]\n";
    o << "n_per_class = " << cfg.eval.n_per_class << "\n";
    o << "trajectories = " << cfg.eval.trajectories << "\n";
    o << "record_every = " << cfg.eval.record_every << "\n";
    o << "threshold = " << format_double(cfg.eval.threshold) << "\n";
    o << "projections = " << cfg.eval.projections << "\n";
    o << "seed = " << cfg.eval.seed << "\n";
    o << "\n[output]\n";
    o << "dir = " << cfg.output_dir << "\n";
    return o.str();
}

inline RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("config: cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

}  // namespace dfm
