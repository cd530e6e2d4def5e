#pragma once

#include <array>
#include <cstdint>
#include <string>

#include "stainforge/data.hpp"
#include "stainforge/diffusion.hpp"
#include "stainforge/harbor.hpp"
#include "stainforge/prompts.hpp"
#include "stainforge/vpgan.hpp"

namespace stainforge {

// Whole-run configuration. Every training artifact embeds the exact JSON
// snapshot that produced it. Unknown keys are rejected on parse; omitted
// weights fall back to the per-task defaults (alpha 30/50/30, beta 0.1,
// gamma 0.1, mu 0.05/0.55/0.8, lambda 0.001/0.001/0.05 for
// H&E2MAS / H&E2PAS / H&E2PASM).
struct RunConfig {
    std::string task = "H&E2MAS";  // one of H&E2MAS, H&E2PAS, H&E2PASM
    std::uint64_t seed = 0;

    struct Encoder {
        std::string kind = "toy";
        int dim = 512;
        std::uint64_t seed = 7;
        std::string weights_path;
    } encoder;

    LossWeights loss;  // alpha/beta/gamma from the task, nu = 10

    IcrSoftmaxOn icr_softmax_on = IcrSoftmaxOn::exp_cos;
    StructComparand struct_comparand = StructComparand::z;

    struct Enhance {
        double mu = 0.05;
        double lambda = 0.001;
        std::array<double, 5> delta{1.0, 1.0, 1.0, 1.0, 1.0};
        int steps = 25;
        double step_size = 4096.0;
    } enhance;

    struct Prompts {
        int n_tokens = 16;
        int steps = 200;
        double lr = 0.1;
    } prompts;

    struct Vpgan {
        int iters = 200;
        double lr = 2e-4;
        double adam_beta1 = 0.5;
        double adam_beta2 = 0.999;
        int batch = 1;
        int base_channels = 12;
        int res_blocks = 3;
        int checkpoint_every = 0;
    } vpgan;

    struct Diffusion {
        int train_steps = 1000;
        double beta_min = 1e-4;
        double beta_max = 0.01;
        int grid_steps = 50;
        int iters = 600;
        double lr = 2e-3;
        int channels = 24;
        double uncond_prob = 0.2;
    } diffusion;

    TilingSpec tiling;

    struct Paths {
        std::string data;
        std::string out;
        std::string concepts;
    } paths;

    int source_stain() const { return 0; }  // tasks all start from H&E
    int target_stain() const;
    EncoderBackend make_backend() const;
    EnhanceWeights enhance_weights() const;
    VpganTrainConfig vpgan_train_config() const;
    DiffusionTrainConfig diffusion_train_config() const;
    PromptTrainOptions prompt_train_options() const;
};

// Parses and fully validates a JSON config file. Unknown and out-of-range
// keys raise ConfigError naming the key path.
RunConfig parse_config(const std::filesystem::path& path);
RunConfig config_from_json_text(const std::string& text);

std::string config_to_json(const RunConfig& config);

}  // namespace stainforge
