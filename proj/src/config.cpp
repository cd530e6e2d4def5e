#include "stainforge/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

namespace stainforge {

namespace {

using json = nlohmann::ordered_json;

struct TaskDefaults {
    double alpha, mu, lambda;
};

TaskDefaults task_defaults(const std::string& task) {
    if (task == "H&E2MAS") return {30.0, 0.05, 0.001};
    if (task == "H&E2PAS") return {50.0, 0.55, 0.001};
    if (task == "H&E2PASM") return {30.0, 0.8, 0.05};
    throw ConfigError("task: expected one of H&E2MAS, H&E2PAS, H&E2PASM; got " + task);
}

void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& where) {
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!known.count(it.key()))
            throw ConfigError("unknown config key: " + (where.empty() ? it.key()
                                                                      : where + "." + it.key()));
}

template <typename T>
T get_or(const json& j, const std::string& key, T fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError("config key has wrong type: " + key);
    }
}

void check_range(bool ok, const std::string& key, const std::string& what) {
    if (!ok) throw ConfigError("config key out of range: " + key + " (" + what + ")");
}

}  // namespace

int RunConfig::target_stain() const {
    if (task == "H&E2MAS") return 1;
    if (task == "H&E2PAS") return 2;
    if (task == "H&E2PASM") return 3;
    throw ConfigError("unknown task: " + task);
}

EncoderBackend RunConfig::make_backend() const {
    if (encoder.kind == "toy") return EncoderBackend::make_toy(encoder.dim, encoder.seed);
    if (encoder.kind == "pretrained")
        return EncoderBackend::make_pretrained(encoder.dim, encoder.weights_path);
    throw ConfigError("encoder.kind must be toy or pretrained; got " + encoder.kind);
}

EnhanceWeights RunConfig::enhance_weights() const {
    EnhanceWeights w;
    w.mu = enhance.mu;
    w.lambda = enhance.lambda;
    w.delta = enhance.delta;
    w.comparand = struct_comparand;
    return w;
}

VpganTrainConfig RunConfig::vpgan_train_config() const {
    VpganTrainConfig c;
    c.iters = vpgan.iters;
    c.batch = vpgan.batch;
    c.lr = vpgan.lr;
    c.adam_beta1 = vpgan.adam_beta1;
    c.adam_beta2 = vpgan.adam_beta2;
    c.base_channels = vpgan.base_channels;
    c.res_blocks = vpgan.res_blocks;
    c.weights = loss;
    c.icr_mode = icr_softmax_on;
    c.target = StainDomainLabel(target_stain());
    c.seed = derive_seed(seed, "stage.vpgan");
    c.checkpoint_every = vpgan.checkpoint_every;
    return c;
}

DiffusionTrainConfig RunConfig::diffusion_train_config() const {
    DiffusionTrainConfig c;
    c.iters = diffusion.iters;
    c.lr = diffusion.lr;
    c.channels = diffusion.channels;
    c.uncond_prob = diffusion.uncond_prob;
    c.seed = derive_seed(seed, "stage.diffusion");
    c.train_steps = diffusion.train_steps;
    c.beta_min = diffusion.beta_min;
    c.beta_max = diffusion.beta_max;
    c.grid_steps = diffusion.grid_steps;
    return c;
}

PromptTrainOptions RunConfig::prompt_train_options() const {
    PromptTrainOptions o;
    o.steps = prompts.steps;
    o.learning_rate = prompts.lr;
    o.n_tokens = prompts.n_tokens;
    o.seed = derive_seed(seed, "stage.prompts");
    return o;
}

RunConfig config_from_json_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config parse error: ") + e.what());
    }
    if (!j.is_object()) throw ConfigError("config root must be a JSON object");

    reject_unknown(j, {"task", "seed", "encoder", "loss", "icr", "struct", "enhance", "prompts",
                       "vpgan", "diffusion", "tiling", "paths"},
                   "");

    RunConfig c;
    c.task = get_or<std::string>(j, "task", "H&E2MAS");
    const TaskDefaults td = task_defaults(c.task);
    c.seed = get_or<std::uint64_t>(j, "seed", 0);
    c.loss.alpha = td.alpha;
    c.enhance.mu = td.mu;
    c.enhance.lambda = td.lambda;

    if (j.contains("encoder")) {
        const json& e = j["encoder"];
        reject_unknown(e, {"kind", "dim", "seed", "weights_path"}, "encoder");
        c.encoder.kind = get_or<std::string>(e, "kind", c.encoder.kind);
        c.encoder.dim = get_or<int>(e, "dim", c.encoder.dim);
        c.encoder.seed = get_or<std::uint64_t>(e, "seed", c.encoder.seed);
        c.encoder.weights_path = get_or<std::string>(e, "weights_path", c.encoder.weights_path);
        check_range(c.encoder.dim >= 1, "encoder.dim", ">= 1");
        if (c.encoder.kind != "toy" && c.encoder.kind != "pretrained")
            throw ConfigError("config key out of range: encoder.kind (toy or pretrained)");
    }
    if (j.contains("loss")) {
        const json& e = j["loss"];
        reject_unknown(e, {"alpha", "beta", "gamma", "nu"}, "loss");
        c.loss.alpha = get_or<double>(e, "alpha", c.loss.alpha);
        c.loss.beta = get_or<double>(e, "beta", c.loss.beta);
        c.loss.gamma = get_or<double>(e, "gamma", c.loss.gamma);
        c.loss.nu = get_or<double>(e, "nu", c.loss.nu);
        const std::pair<const char*, double> weight_keys[] = {{"alpha", c.loss.alpha},
                                                              {"beta", c.loss.beta},
                                                              {"gamma", c.loss.gamma},
                                                              {"nu", c.loss.nu}};
        for (const auto& [k, v] : weight_keys)
            check_range(std::isfinite(v) && v >= 0.0, std::string("loss.") + k, ">= 0");
    }
    if (j.contains("icr")) {
        const json& e = j["icr"];
        reject_unknown(e, {"softmax_on"}, "icr");
        const std::string m = get_or<std::string>(e, "softmax_on", "exp_cos");
        if (m == "exp_cos")
            c.icr_softmax_on = IcrSoftmaxOn::exp_cos;
        else if (m == "cos")
            c.icr_softmax_on = IcrSoftmaxOn::cos;
        else
            throw ConfigError("config key out of range: icr.softmax_on (exp_cos or cos)");
    }
    if (j.contains("struct")) {
        const json& e = j["struct"];
        reject_unknown(e, {"comparand"}, "struct");
        const std::string m = get_or<std::string>(e, "comparand", "z");
        if (m == "z")
            c.struct_comparand = StructComparand::z;
        else if (m == "y_plus_z")
            c.struct_comparand = StructComparand::y_plus_z;
        else
            throw ConfigError("config key out of range: struct.comparand (z or y_plus_z)");
    }
    if (j.contains("enhance")) {
        const json& e = j["enhance"];
        reject_unknown(e, {"mu", "lambda", "delta", "steps", "step_size"}, "enhance");
        c.enhance.mu = get_or<double>(e, "mu", c.enhance.mu);
        c.enhance.lambda = get_or<double>(e, "lambda", c.enhance.lambda);
        if (e.contains("delta")) {
            const auto d = e["delta"].get<std::vector<double>>();
            if (d.size() != 5)
                throw ConfigError("config key out of range: enhance.delta (need 5 weights)");
            for (int i = 0; i < 5; ++i) c.enhance.delta[static_cast<std::size_t>(i)] = d[static_cast<std::size_t>(i)];
        }
        c.enhance.steps = get_or<int>(e, "steps", c.enhance.steps);
        c.enhance.step_size = get_or<double>(e, "step_size", c.enhance.step_size);
        check_range(c.enhance.mu >= 0.0 && c.enhance.mu <= 1.0, "enhance.mu", "[0, 1]");
        check_range(std::isfinite(c.enhance.lambda) && c.enhance.lambda >= 0.0, "enhance.lambda",
                    ">= 0");
        check_range(c.enhance.steps >= 0, "enhance.steps", ">= 0");
        check_range(c.enhance.step_size > 0.0, "enhance.step_size", "> 0");
    }
    if (j.contains("prompts")) {
        const json& e = j["prompts"];
        reject_unknown(e, {"n_tokens", "steps", "lr"}, "prompts");
        c.prompts.n_tokens = get_or<int>(e, "n_tokens", c.prompts.n_tokens);
        c.prompts.steps = get_or<int>(e, "steps", c.prompts.steps);
        c.prompts.lr = get_or<double>(e, "lr", c.prompts.lr);
        check_range(c.prompts.n_tokens >= 1, "prompts.n_tokens", ">= 1");
        check_range(c.prompts.steps >= 0, "prompts.steps", ">= 0");
        check_range(c.prompts.lr > 0.0, "prompts.lr", "> 0");
    }
    if (j.contains("vpgan")) {
        const json& e = j["vpgan"];
        reject_unknown(e,
                       {"iters", "lr", "adam_beta1", "adam_beta2", "batch", "base_channels",
                        "res_blocks", "checkpoint_every"},
                       "vpgan");
        c.vpgan.iters = get_or<int>(e, "iters", c.vpgan.iters);
        c.vpgan.lr = get_or<double>(e, "lr", c.vpgan.lr);
        c.vpgan.adam_beta1 = get_or<double>(e, "adam_beta1", c.vpgan.adam_beta1);
        c.vpgan.adam_beta2 = get_or<double>(e, "adam_beta2", c.vpgan.adam_beta2);
        c.vpgan.batch = get_or<int>(e, "batch", c.vpgan.batch);
        c.vpgan.base_channels = get_or<int>(e, "base_channels", c.vpgan.base_channels);
        c.vpgan.res_blocks = get_or<int>(e, "res_blocks", c.vpgan.res_blocks);
        c.vpgan.checkpoint_every = get_or<int>(e, "checkpoint_every", c.vpgan.checkpoint_every);
        check_range(c.vpgan.iters >= 0, "vpgan.iters", ">= 0");
        check_range(c.vpgan.lr > 0.0, "vpgan.lr", "> 0");
        check_range(c.vpgan.batch >= 1, "vpgan.batch", ">= 1");
        check_range(c.vpgan.base_channels >= 1, "vpgan.base_channels", ">= 1");
        check_range(c.vpgan.res_blocks >= 0, "vpgan.res_blocks", ">= 0");
    }
    if (j.contains("diffusion")) {
        const json& e = j["diffusion"];
        reject_unknown(e,
                       {"train_steps", "beta_min", "beta_max", "grid_steps", "iters", "lr",
                        "channels", "uncond_prob"},
                       "diffusion");
        c.diffusion.train_steps = get_or<int>(e, "train_steps", c.diffusion.train_steps);
        c.diffusion.beta_min = get_or<double>(e, "beta_min", c.diffusion.beta_min);
        c.diffusion.beta_max = get_or<double>(e, "beta_max", c.diffusion.beta_max);
        c.diffusion.grid_steps = get_or<int>(e, "grid_steps", c.diffusion.grid_steps);
        c.diffusion.iters = get_or<int>(e, "iters", c.diffusion.iters);
        c.diffusion.lr = get_or<double>(e, "lr", c.diffusion.lr);
        c.diffusion.channels = get_or<int>(e, "channels", c.diffusion.channels);
        c.diffusion.uncond_prob = get_or<double>(e, "uncond_prob", c.diffusion.uncond_prob);
        check_range(c.diffusion.grid_steps >= 1 && c.diffusion.train_steps >= 1 &&
                        c.diffusion.train_steps % c.diffusion.grid_steps == 0,
                    "diffusion.train_steps", "positive multiple of grid_steps");
        check_range(c.diffusion.uncond_prob >= 0.0 && c.diffusion.uncond_prob <= 1.0,
                    "diffusion.uncond_prob", "[0, 1]");
    }
    if (j.contains("tiling")) {
        const json& e = j["tiling"];
        reject_unknown(e, {"patch", "overlap", "sat_threshold", "stat"}, "tiling");
        c.tiling.patch = get_or<int>(e, "patch", c.tiling.patch);
        c.tiling.overlap = get_or<int>(e, "overlap", c.tiling.overlap);
        c.tiling.sat_threshold = get_or<double>(e, "sat_threshold", c.tiling.sat_threshold);
        if (e.contains("stat"))
            c.tiling.stat = saturation_stat_from_string(e["stat"].get<std::string>());
        c.tiling.validate();
    }
    if (j.contains("paths")) {
        const json& e = j["paths"];
        reject_unknown(e, {"data", "out", "concepts"}, "paths");
        c.paths.data = get_or<std::string>(e, "data", "");
        c.paths.out = get_or<std::string>(e, "out", "");
        c.paths.concepts = get_or<std::string>(e, "concepts", "");
    }
    return c;
}

RunConfig parse_config(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config file: " + path.string());
    std::ostringstream ss;
    ss << f.rdbuf();
    return config_from_json_text(ss.str());
}

std::string config_to_json(const RunConfig& c) {
    json j;
    j["task"] = c.task;
    j["seed"] = c.seed;
    j["encoder"] = {{"kind", c.encoder.kind},
                    {"dim", c.encoder.dim},
                    {"seed", c.encoder.seed},
                    {"weights_path", c.encoder.weights_path}};
    j["loss"] = {{"alpha", c.loss.alpha},
                 {"beta", c.loss.beta},
                 {"gamma", c.loss.gamma},
                 {"nu", c.loss.nu}};
    j["icr"] = {{"softmax_on", c.icr_softmax_on == IcrSoftmaxOn::exp_cos ? "exp_cos" : "cos"}};
    j["struct"] = {
        {"comparand", c.struct_comparand == StructComparand::z ? "z" : "y_plus_z"}};
    j["enhance"] = {{"mu", c.enhance.mu},
                    {"lambda", c.enhance.lambda},
                    {"delta", c.enhance.delta},
                    {"steps", c.enhance.steps},
                    {"step_size", c.enhance.step_size}};
    j["prompts"] = {{"n_tokens", c.prompts.n_tokens},
                    {"steps", c.prompts.steps},
                    {"lr", c.prompts.lr}};
    j["vpgan"] = {{"iters", c.vpgan.iters},
                  {"lr", c.vpgan.lr},
                  {"adam_beta1", c.vpgan.adam_beta1},
                  {"adam_beta2", c.vpgan.adam_beta2},
                  {"batch", c.vpgan.batch},
                  {"base_channels", c.vpgan.base_channels},
                  {"res_blocks", c.vpgan.res_blocks},
                  {"checkpoint_every", c.vpgan.checkpoint_every}};
    j["diffusion"] = {{"train_steps", c.diffusion.train_steps},
                      {"beta_min", c.diffusion.beta_min},
                      {"beta_max", c.diffusion.beta_max},
                      {"grid_steps", c.diffusion.grid_steps},
                      {"iters", c.diffusion.iters},
                      {"lr", c.diffusion.lr},
                      {"channels", c.diffusion.channels},
                      {"uncond_prob", c.diffusion.uncond_prob}};
    j["tiling"] = {{"patch", c.tiling.patch},
                   {"overlap", c.tiling.overlap},
                   {"sat_threshold", c.tiling.sat_threshold},
                   {"stat", to_string(c.tiling.stat)}};
    j["paths"] = {{"data", c.paths.data}, {"out", c.paths.out}, {"concepts", c.paths.concepts}};
    return j.dump(2) + "\n";
}

}  // namespace stainforge
