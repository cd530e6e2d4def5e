#include "stainforge/artifacts.hpp"

namespace stainforge {

namespace {

void put_param_list(Archive& a, const std::string& prefix, const std::vector<ad::Var>& params) {
    a.put_u64(prefix + ".count", params.size());
    for (std::size_t i = 0; i < params.size(); ++i)
        a.put_tensor(prefix + "." + std::to_string(i), params[i]->val);
}

void get_param_list(const Archive& a, const std::string& prefix,
                    const std::vector<ad::Var>& params) {
    const auto count = a.u64(prefix + ".count");
    if (count != params.size())
        throw IoError("checkpoint: parameter count mismatch for " + prefix);
    std::vector<ad::Arr> values;
    values.reserve(params.size());
    for (std::size_t i = 0; i < params.size(); ++i)
        values.push_back(a.tensor(prefix + "." + std::to_string(i)));
    load_params(params, values);
}

void put_adam(Archive& a, const std::string& prefix, const Adam& opt) {
    const auto state = opt.state();
    a.put_u64(prefix + ".t", static_cast<std::uint64_t>(opt.t()));
    a.put_u64(prefix + ".count", state.size());
    for (std::size_t i = 0; i < state.size(); ++i)
        a.put_tensor(prefix + ".s" + std::to_string(i), state[i]);
}

void get_adam(const Archive& a, const std::string& prefix, Adam& opt) {
    const auto count = a.u64(prefix + ".count");
    std::vector<ad::Arr> state;
    state.reserve(count);
    for (std::size_t i = 0; i < count; ++i)
        state.push_back(a.tensor(prefix + ".s" + std::to_string(i)));
    opt.restore(state, static_cast<std::int64_t>(a.u64(prefix + ".t")));
}

Eigen::ArrayXd vec_to_arr(const Eigen::VectorXd& v) { return v.array(); }

}  // namespace

std::uint64_t bank_digest(const PromptBank& bank) {
    std::uint64_t h = fnv1a64("prompt_bank");
    h = splitmix64(h ^ fnv1a64(bank.t_pos.data(),
                               sizeof(double) * static_cast<std::size_t>(bank.t_pos.size())));
    h = splitmix64(h ^ fnv1a64(bank.t_neg.data(),
                               sizeof(double) * static_cast<std::size_t>(bank.t_neg.size())));
    return h;
}

std::uint64_t anchors_digest(const ConceptAnchorSet& anchors) {
    std::uint64_t h = fnv1a64("anchors");
    auto mix = [&h](const Embedding& e) {
        h = splitmix64(h ^ fnv1a64(e.values.data(),
                                   sizeof(double) * static_cast<std::size_t>(e.values.size())));
    };
    mix(anchors.constant);
    for (const auto& e : anchors.stain) mix(e);
    return h;
}

void save_prompt_bank(const std::filesystem::path& path, const PromptBank& bank,
                      const std::string& config_json) {
    Archive a;
    a.put_bytes("kind", "prompt_bank");
    a.put_matrix("t_pos", bank.t_pos);
    a.put_matrix("t_neg", bank.t_neg);
    a.put_u64("steps_trained", static_cast<std::uint64_t>(bank.steps_trained));
    a.put_f64("final_loss", bank.final_loss);
    a.put_u64("seed", bank.seed);
    Eigen::ArrayXd curve(static_cast<Eigen::Index>(bank.loss_curve.size()));
    for (Eigen::Index i = 0; i < curve.size(); ++i)
        curve[i] = bank.loss_curve[static_cast<std::size_t>(i)];
    a.put_tensor("loss_curve", curve);
    a.put_bytes("config", config_json);
    a.save(path);
}

PromptBank load_prompt_bank(const std::filesystem::path& path, std::string* config_json) {
    Archive a = Archive::load(path);
    if (a.bytes("kind") != "prompt_bank")
        throw IoError("load_prompt_bank: " + path.string() + " is not a prompt bank");
    PromptBank bank;
    bank.t_pos = a.matrix("t_pos");
    bank.t_neg = a.matrix("t_neg");
    bank.steps_trained = static_cast<int>(a.u64("steps_trained"));
    bank.final_loss = a.f64("final_loss");
    bank.seed = a.u64("seed");
    const Eigen::ArrayXd& curve = a.tensor("loss_curve");
    bank.loss_curve.assign(curve.data(), curve.data() + curve.size());
    if (config_json) *config_json = a.bytes("config");
    return bank;
}

void save_anchors(const std::filesystem::path& path, const ConceptAnchorSet& anchors,
                  const std::string& config_json) {
    Archive a;
    a.put_bytes("kind", "concept_anchors");
    a.put_tensor("constant", vec_to_arr(anchors.constant.values));
    for (int i = 0; i < 4; ++i)
        a.put_tensor("stain." + std::to_string(i),
                     vec_to_arr(anchors.stain[static_cast<std::size_t>(i)].values));
    for (int i = 0; i < 5; ++i)
        a.put_bytes("digest." + std::to_string(i), anchors.digests[static_cast<std::size_t>(i)]);
    a.put_bytes("config", config_json);
    a.save(path);
}

ConceptAnchorSet load_anchors(const std::filesystem::path& path, std::string* config_json) {
    Archive a = Archive::load(path);
    if (a.bytes("kind") != "concept_anchors")
        throw IoError("load_anchors: " + path.string() + " is not an anchor set");
    ConceptAnchorSet set;
    set.constant.values = a.tensor("constant").matrix();
    set.constant.normalized = true;
    for (int i = 0; i < 4; ++i) {
        set.stain[static_cast<std::size_t>(i)].values =
            a.tensor("stain." + std::to_string(i)).matrix();
        set.stain[static_cast<std::size_t>(i)].normalized = true;
    }
    for (int i = 0; i < 5; ++i)
        set.digests[static_cast<std::size_t>(i)] = a.bytes("digest." + std::to_string(i));
    if (config_json) *config_json = a.bytes("config");
    return set;
}

void save_vpgan_checkpoint(const std::filesystem::path& path, const VpganTrainer& trainer,
                           const std::string& config_json, std::uint64_t bank_digest_value,
                           std::uint64_t anchors_digest_value) {
    Archive a;
    a.put_bytes("kind", "vpgan");
    const auto& cfg = trainer.config();
    a.put_u64("base_channels", static_cast<std::uint64_t>(cfg.base_channels));
    a.put_u64("res_blocks", static_cast<std::uint64_t>(cfg.res_blocks));
    a.put_u64("seed", cfg.seed);
    a.put_u64("iterations_done", static_cast<std::uint64_t>(trainer.iterations_done()));
    put_param_list(a, "gen", trainer.pair().generator_params());
    put_param_list(a, "disc", trainer.pair().discriminator_params());
    put_adam(a, "opt_g", trainer.optimizer_g());
    put_adam(a, "opt_d", trainer.optimizer_d());
    a.put_bytes("rng", trainer.batch_rng().save_state());
    a.put_bytes("config", config_json);
    a.put_u64("bank_digest", bank_digest_value);
    a.put_u64("anchors_digest", anchors_digest_value);
    a.save(path);
}

VpganCheckpoint load_vpgan_checkpoint(const std::filesystem::path& path) {
    Archive a = Archive::load(path);
    if (a.bytes("kind") != "vpgan")
        throw IoError("load_vpgan_checkpoint: " + path.string() + " is not a vpgan checkpoint");
    VpganCheckpoint ckpt;
    ckpt.train_config.base_channels = static_cast<int>(a.u64("base_channels"));
    ckpt.train_config.res_blocks = static_cast<int>(a.u64("res_blocks"));
    ckpt.train_config.seed = a.u64("seed");
    ckpt.pair = make_translator_pair(ckpt.train_config.base_channels,
                                     ckpt.train_config.res_blocks, ckpt.train_config.seed);
    get_param_list(a, "gen", ckpt.pair.generator_params());
    get_param_list(a, "disc", ckpt.pair.discriminator_params());
    ckpt.config_json = a.bytes("config");
    ckpt.bank_digest = a.u64("bank_digest");
    ckpt.anchors_digest = a.u64("anchors_digest");
    return ckpt;
}

void restore_vpgan_trainer(VpganTrainer& trainer, const std::filesystem::path& path) {
    Archive a = Archive::load(path);
    if (a.bytes("kind") != "vpgan")
        throw IoError("restore_vpgan_trainer: " + path.string() + " is not a vpgan checkpoint");
    get_param_list(a, "gen", trainer.pair().generator_params());
    get_param_list(a, "disc", trainer.pair().discriminator_params());
    get_adam(a, "opt_g", trainer.optimizer_g());
    get_adam(a, "opt_d", trainer.optimizer_d());
    trainer.batch_rng().load_state(a.bytes("rng"));
}

void save_diffusion_checkpoint(const std::filesystem::path& path,
                               const DiffusionTrainResult& result, int channels,
                               std::uint64_t seed, const std::string& config_json) {
    Archive a;
    a.put_bytes("kind", "diffusion");
    a.put_u64("channels", static_cast<std::uint64_t>(channels));
    a.put_u64("seed", seed);
    a.put_u64("train_steps", static_cast<std::uint64_t>(result.schedule.train_steps));
    a.put_f64("beta_min", result.schedule.beta_min);
    a.put_f64("beta_max", result.schedule.beta_max);
    a.put_u64("grid_steps", static_cast<std::uint64_t>(result.schedule.grid_steps));
    put_param_list(a, "pred", result.predictor.params());
    Eigen::ArrayXd curve(static_cast<Eigen::Index>(result.loss_curve.size()));
    for (Eigen::Index i = 0; i < curve.size(); ++i)
        curve[i] = result.loss_curve[static_cast<std::size_t>(i)];
    a.put_tensor("loss_curve", curve);
    a.put_bytes("config", config_json);
    a.save(path);
}

DiffusionCheckpoint load_diffusion_checkpoint(const std::filesystem::path& path) {
    Archive a = Archive::load(path);
    if (a.bytes("kind") != "diffusion")
        throw IoError("load_diffusion_checkpoint: " + path.string() +
                      " is not a diffusion checkpoint");
    DiffusionCheckpoint ckpt;
    ckpt.schedule = DiffusionSchedule::make(
        static_cast<int>(a.u64("train_steps")), a.f64("beta_min"), a.f64("beta_max"),
        static_cast<int>(a.u64("grid_steps")));
    ckpt.predictor = NoisePredictor(static_cast<int>(a.u64("channels")), a.u64("seed"));
    get_param_list(a, "pred", ckpt.predictor.params());
    ckpt.config_json = a.bytes("config");
    return ckpt;
}

}  // namespace stainforge
