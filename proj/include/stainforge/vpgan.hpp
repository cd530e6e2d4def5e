#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include "stainforge/image.hpp"
#include "stainforge/nets.hpp"
#include "stainforge/prompts.hpp"

namespace stainforge {

struct StainDomainLabel {
    int index = 0;  // 0:H&E 1:MAS 2:PAS 3:PASM, same ordering as ConceptAnchorSet

    StainDomainLabel() = default;
    explicit StainDomainLabel(int i) : index(i) {
        if (i < 0 || i > 3) throw InputError("StainDomainLabel: index out of range");
    }
};

struct LossWeights {
    double alpha = 30.0;  // contrastive (CPT)
    double beta = 0.1;    // constant anchor (CCA)
    double gamma = 0.1;   // stain proxy (ICR)
    double nu = 10.0;     // cycle weight

    void validate() const;
};

enum class Direction { a_to_b, b_to_a };

struct TranslatorPair {
    Generator g_ab, g_ba;
    Discriminator d_a, d_b;

    std::vector<ad::Var> generator_params() const;
    std::vector<ad::Var> discriminator_params() const;
};

TranslatorPair make_translator_pair(int base_channels, int res_blocks, std::uint64_t seed);

// Generator forward pass on a model-range image.
ImagePatch translate(const ImagePatch& image, const TranslatorPair& pair, Direction dir);

// Two-sided adversarial value E[log D(real)] + E[log(1 - D(fake))] on
// discriminator output maps; outputs are clamped to [1e-7, 1 - 1e-7] before
// the logs. The discriminator maximizes this, the generator minimizes it.
double adversarial_loss(const Eigen::ArrayXd& d_real, const Eigen::ArrayXd& d_fake);
ad::Var adversarial_loss_var(const ad::Var& d_real, const ad::Var& d_fake);

// Mean per-pixel L1 between a reconstruction and its original.
double cycle_l1(const ImagePatch& reconstructed, const ImagePatch& original);

// Mean per-pixel L1 of one round trip.
double cycle_loss_direction(const TranslatorPair& pair, const std::vector<ImagePatch>& batch,
                            Direction dir);
// Mean of the two directions.
double cycle_loss(const TranslatorPair& pair, const std::vector<ImagePatch>& batch_a,
                  const std::vector<ImagePatch>& batch_b);

// --- prompt-based losses (CPT, CCA, ICR). Each has a kernel on similarity
// scores, a plain entry point, and an autodiff entry point used in training.

// P(negative prompt | image) from the two exp-cos scores; exact complement
// of the positive-class probability.
double cpt_from_scores(double s_pos, double s_neg);
double cpt_loss(const ImagePatch& translated, const PromptBank& bank,
                const EncoderBackend& backend);
ad::Var cpt_loss_var(const ad::Var& translated_emb, const ad::Var& pos_emb,
                     const ad::Var& neg_emb);

double cca_from_scores(double s_pre, double s_post);  // squared difference
double cca_loss(const ImagePatch& i_pre, const ImagePatch& i_post,
                const ConceptAnchorSet& anchors, const EncoderBackend& backend);
ad::Var cca_loss_var(const ad::Var& i_post_emb, double s_pre, const ad::Var& constant_anchor);

enum class IcrSoftmaxOn { exp_cos, cos };

// Softmax class probabilities over the four stain anchors.
Eigen::Vector4d icr_probs(const ImagePatch& i_post, const ConceptAnchorSet& anchors,
                          const EncoderBackend& backend,
                          IcrSoftmaxOn mode = IcrSoftmaxOn::exp_cos);
Eigen::Vector4d icr_probs_from_cos(const Eigen::Vector4d& cosines,
                                   IcrSoftmaxOn mode = IcrSoftmaxOn::exp_cos);
double icr_loss(const ImagePatch& i_post, const ConceptAnchorSet& anchors,
                StainDomainLabel target, const EncoderBackend& backend,
                IcrSoftmaxOn mode = IcrSoftmaxOn::exp_cos);
ad::Var icr_loss_var(const ad::Var& i_post_emb, const std::array<ad::Var, 4>& stain_anchors,
                     StainDomainLabel target, IcrSoftmaxOn mode = IcrSoftmaxOn::exp_cos);

struct VpganComponents {
    double normal = 0.0;       // full CycleGAN objective
    double contrastive = 0.0;  // CPT
    double constant = 0.0;     // CCA
    double stain = 0.0;        // ICR
};

// normal + alpha*contrastive + beta*constant + gamma*stain.
double vpgan_total_loss(const VpganComponents& c, const LossWeights& w);

struct VpganTrainConfig {
    int iters = 200;
    int batch = 1;
    double lr = 2e-4;
    double adam_beta1 = 0.5;
    double adam_beta2 = 0.999;
    int base_channels = 12;
    int res_blocks = 3;
    LossWeights weights;
    IcrSoftmaxOn icr_mode = IcrSoftmaxOn::exp_cos;
    StainDomainLabel target{1};
    std::uint64_t seed = 0;
    int checkpoint_every = 0;  // 0: no periodic hook calls
};

struct IterationLog {
    int iter = 0;
    double adv_a = 0.0, adv_b = 0.0;  // adversarial values, logged pre-D-update
    double cyc_a = 0.0, cyc_b = 0.0;  // per-direction mean L1
    double cpt = 0.0, cca = 0.0, icr = 0.0;
    double normal_total = 0.0;  // adversarial + weighted cycle terms
    double train_total = 0.0;   // normal + weighted prompt losses
};

struct TrainReport {
    std::vector<IterationLog> rows;
};

// Owns the parameters, optimizers, batch RNG and loss log of one VPGAN run;
// every prompt weight at zero reduces it to the plain CycleGAN baseline
// (bank/anchors/backend may then be null). Deterministic per seed.
class VpganTrainer {
public:
    using CheckpointHook = std::function<void(int iter, const VpganTrainer&)>;

    VpganTrainer(std::vector<ImagePatch> patches_a, std::vector<ImagePatch> patches_b,
                 const PromptBank* bank, const ConceptAnchorSet* anchors,
                 const EncoderBackend* backend, const VpganTrainConfig& config);

    void step();
    void run(const CheckpointHook& hook = {});  // config.iters steps

    const TranslatorPair& pair() const { return pair_; }
    TranslatorPair& pair() { return pair_; }
    const TrainReport& report() const { return report_; }
    const VpganTrainConfig& config() const { return config_; }
    int iterations_done() const { return iter_; }

    Adam& optimizer_g() { return opt_g_; }
    Adam& optimizer_d() { return opt_d_; }
    Rng& batch_rng() { return rng_; }
    const Adam& optimizer_g() const { return opt_g_; }
    const Adam& optimizer_d() const { return opt_d_; }
    const Rng& batch_rng() const { return rng_; }

private:
    VpganTrainConfig config_;
    std::vector<ImagePatch> patches_a_, patches_b_;
    const PromptBank* bank_;
    const ConceptAnchorSet* anchors_;
    const EncoderBackend* backend_;
    bool use_prompts_ = false;
    TranslatorPair pair_;
    Adam opt_g_, opt_d_;
    Rng rng_;
    TrainReport report_;
    int iter_ = 0;
    ad::Var pos_emb_, neg_emb_, const_anchor_;
    std::array<ad::Var, 4> stain_anchors_;
};

// Convenience wrapper: build a trainer, run it, return the report.
TrainReport train_vpgan(TranslatorPair& pair, const std::vector<ImagePatch>& patches_a,
                        const std::vector<ImagePatch>& patches_b, const PromptBank* bank,
                        const ConceptAnchorSet* anchors, const EncoderBackend* backend,
                        const VpganTrainConfig& config);

}  // namespace stainforge
