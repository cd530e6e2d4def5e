#include "stainforge/vpgan.hpp"

#include <cmath>
#include <sstream>

namespace stainforge {

namespace {

constexpr double kProbEps = 1e-7;

void check_model_range(const ImagePatch& img, const char* op) {
    const double tol = 1e-9;
    for (const auto& c : img.ch)
        if (c.minCoeff() < -1.0 - tol || c.maxCoeff() > 1.0 + tol)
            throw InputError(std::string(op) + ": image must be in model range [-1, 1]");
}

ad::Var embedding_const(const Embedding& e) {
    return ad::constant(e.values.array(), ad::vec_dims(e.dim()));
}

ad::Var mean_abs_diff_var(const ad::Var& a, const ad::Var& b) {
    return ad::vmean(ad::vabs(ad::sub(a, b)));
}

ad::Var log_one_minus(const ad::Var& p) {
    return ad::vlog(ad::add_const(ad::neg(ad::vclamp(p, kProbEps, 1.0 - kProbEps)), 1.0));
}

}  // namespace

void LossWeights::validate() const {
    for (double v : {alpha, beta, gamma, nu})
        if (!std::isfinite(v) || v < 0.0)
            throw ConfigError("loss weights must be finite and non-negative");
}

std::vector<ad::Var> TranslatorPair::generator_params() const {
    auto p = g_ab.params();
    auto q = g_ba.params();
    p.insert(p.end(), q.begin(), q.end());
    return p;
}

std::vector<ad::Var> TranslatorPair::discriminator_params() const {
    auto p = d_a.params();
    auto q = d_b.params();
    p.insert(p.end(), q.begin(), q.end());
    return p;
}

TranslatorPair make_translator_pair(int base_channels, int res_blocks, std::uint64_t seed) {
    TranslatorPair pair;
    Rng rng_gab(derive_seed(seed, "vpgan.g_ab"));
    Rng rng_gba(derive_seed(seed, "vpgan.g_ba"));
    Rng rng_da(derive_seed(seed, "vpgan.d_a"));
    Rng rng_db(derive_seed(seed, "vpgan.d_b"));
    pair.g_ab = Generator(base_channels, res_blocks, rng_gab);
    pair.g_ba = Generator(base_channels, res_blocks, rng_gba);
    pair.d_a = Discriminator(base_channels, rng_da);
    pair.d_b = Discriminator(base_channels, rng_db);
    return pair;
}

ImagePatch translate(const ImagePatch& image, const TranslatorPair& pair, Direction dir) {
    if (image.range != ValueRange::model())
        throw InputError("translate: image must be declared in model range [-1, 1]");
    check_model_range(image, "translate");
    const Generator& g = (dir == Direction::a_to_b) ? pair.g_ab : pair.g_ba;
    ad::Var out = g.forward(patch_to_var(image));
    ImagePatch result = var_to_patch(out, ValueRange::model());
    result.domain = image.domain;
    return result;
}

double adversarial_loss(const Eigen::ArrayXd& d_real, const Eigen::ArrayXd& d_fake) {
    if (d_real.size() == 0 || d_fake.size() == 0)
        throw InputError("adversarial_loss: empty batch");
    const Eigen::ArrayXd r = d_real.max(kProbEps).min(1.0 - kProbEps);
    const Eigen::ArrayXd f = d_fake.max(kProbEps).min(1.0 - kProbEps);
    return r.log().mean() + (1.0 - f).log().mean();
}

ad::Var adversarial_loss_var(const ad::Var& d_real, const ad::Var& d_fake) {
    ad::Var real_term = ad::vmean(ad::vlog(ad::vclamp(d_real, kProbEps, 1.0 - kProbEps)));
    ad::Var fake_term = ad::vmean(log_one_minus(d_fake));
    return ad::add(real_term, fake_term);
}

double cycle_l1(const ImagePatch& reconstructed, const ImagePatch& original) {
    if (!reconstructed.same_shape(original)) throw InputError("cycle_l1: shape mismatch");
    double l1 = 0.0;
    for (int c = 0; c < 3; ++c)
        l1 += (reconstructed.ch[static_cast<std::size_t>(c)] -
               original.ch[static_cast<std::size_t>(c)])
                  .abs()
                  .sum();
    return l1 / static_cast<double>(3 * original.pixels());
}

double cycle_loss_direction(const TranslatorPair& pair, const std::vector<ImagePatch>& batch,
                            Direction dir) {
    if (batch.empty()) throw InputError("cycle_loss: empty batch");
    double acc = 0.0;
    for (const auto& img : batch) {
        const ImagePatch there = translate(img, pair, dir);
        const ImagePatch back = translate(
            there, pair, dir == Direction::a_to_b ? Direction::b_to_a : Direction::a_to_b);
        acc += cycle_l1(back, img);
    }
    return acc / static_cast<double>(batch.size());
}

double cycle_loss(const TranslatorPair& pair, const std::vector<ImagePatch>& batch_a,
                  const std::vector<ImagePatch>& batch_b) {
    return 0.5 * (cycle_loss_direction(pair, batch_a, Direction::a_to_b) +
                  cycle_loss_direction(pair, batch_b, Direction::b_to_a));
}

double cpt_from_scores(double s_pos, double s_neg) {
    if (s_neg >= s_pos) return s_neg / (s_pos + s_neg);
    return 1.0 - s_pos / (s_pos + s_neg);
}

double cpt_loss(const ImagePatch& translated, const PromptBank& bank,
                const EncoderBackend& backend) {
    const Embedding img = encode_image(translated, backend);
    const Embedding ep = encode_text_tokens(bank.t_pos, backend);
    const Embedding en = encode_text_tokens(bank.t_neg, backend);
    return cpt_from_scores(exp_cos(img, ep), exp_cos(img, en));
}

ad::Var cpt_loss_var(const ad::Var& translated_emb, const ad::Var& pos_emb,
                     const ad::Var& neg_emb) {
    ad::Var sp = exp_cos_var(translated_emb, pos_emb);
    ad::Var sn = exp_cos_var(translated_emb, neg_emb);
    ad::Var denom = ad::add(sp, sn);
    if (sn->scalar() >= sp->scalar()) return ad::div(sn, denom);
    return ad::add_const(ad::neg(ad::div(sp, denom)), 1.0);
}

double cca_from_scores(double s_pre, double s_post) {
    const double d = s_pre - s_post;
    return d * d;
}

double cca_loss(const ImagePatch& i_pre, const ImagePatch& i_post,
                const ConceptAnchorSet& anchors, const EncoderBackend& backend) {
    const double s_pre = exp_cos(encode_image(i_pre, backend), anchors.constant);
    const double s_post = exp_cos(encode_image(i_post, backend), anchors.constant);
    return cca_from_scores(s_pre, s_post);
}

ad::Var cca_loss_var(const ad::Var& i_post_emb, double s_pre, const ad::Var& constant_anchor) {
    ad::Var s_post = exp_cos_var(i_post_emb, constant_anchor);
    return ad::vsquare(ad::add_const(ad::neg(s_post), s_pre));
}

Eigen::Vector4d icr_probs_from_cos(const Eigen::Vector4d& cosines, IcrSoftmaxOn mode) {
    Eigen::Vector4d scores =
        (mode == IcrSoftmaxOn::exp_cos) ? cosines.array().exp().matrix().eval() : cosines;
    const double m = scores.maxCoeff();
    Eigen::Vector4d e = (scores.array() - m).exp();
    return e / e.sum();
}

Eigen::Vector4d icr_probs(const ImagePatch& i_post, const ConceptAnchorSet& anchors,
                          const EncoderBackend& backend, IcrSoftmaxOn mode) {
    const Embedding img = encode_image(i_post, backend);
    Eigen::Vector4d cosines;
    for (int i = 0; i < 4; ++i) {
        const auto& anchor = anchors.stain[static_cast<std::size_t>(i)];
        cosines[i] = img.values.dot(anchor.values) / (img.values.norm() * anchor.values.norm());
    }
    return icr_probs_from_cos(cosines, mode);
}

double icr_loss(const ImagePatch& i_post, const ConceptAnchorSet& anchors,
                StainDomainLabel target, const EncoderBackend& backend, IcrSoftmaxOn mode) {
    const Eigen::Vector4d p = icr_probs(i_post, anchors, backend, mode);
    return -std::log(std::max(p[target.index], 1e-300));
}

ad::Var icr_loss_var(const ad::Var& i_post_emb, const std::array<ad::Var, 4>& stain_anchors,
                     StainDomainLabel target, IcrSoftmaxOn mode) {
    std::vector<ad::Var> scores;
    scores.reserve(4);
    for (const auto& anchor : stain_anchors) {
        ad::Var c = ad::cosine(i_post_emb, anchor);
        scores.push_back(mode == IcrSoftmaxOn::exp_cos ? ad::vexp(c) : c);
    }
    ad::Var p = ad::softmax_vec(ad::concat(scores));
    return ad::neg(ad::vlog(ad::pick(p, target.index)));
}

double vpgan_total_loss(const VpganComponents& c, const LossWeights& w) {
    w.validate();
    return c.normal + w.alpha * c.contrastive + w.beta * c.constant + w.gamma * c.stain;
}

VpganTrainer::VpganTrainer(std::vector<ImagePatch> patches_a, std::vector<ImagePatch> patches_b,
                           const PromptBank* bank, const ConceptAnchorSet* anchors,
                           const EncoderBackend* backend, const VpganTrainConfig& config)
    : config_(config),
      patches_a_(std::move(patches_a)),
      patches_b_(std::move(patches_b)),
      bank_(bank),
      anchors_(anchors),
      backend_(backend),
      rng_(derive_seed(config.seed, "vpgan.batches")) {
    if (patches_a_.empty() || patches_b_.empty())
        throw InputError("train_vpgan: both domains must be non-empty");
    config_.weights.validate();
    use_prompts_ = config_.weights.alpha != 0.0 || config_.weights.beta != 0.0 ||
                   config_.weights.gamma != 0.0;
    if (use_prompts_ && (!bank_ || !anchors_ || !backend_))
        throw ConfigError("train_vpgan: prompt losses enabled but bank/anchors/backend missing");

    pair_ = make_translator_pair(config_.base_channels, config_.res_blocks, config_.seed);
    opt_g_ = Adam(pair_.generator_params(), config_.lr, config_.adam_beta1, config_.adam_beta2);
    opt_d_ = Adam(pair_.discriminator_params(), config_.lr, config_.adam_beta1,
                  config_.adam_beta2);

    if (use_prompts_) {
        // Prompt latents are frozen during GAN training.
        pos_emb_ = embedding_const(encode_text_tokens(bank_->t_pos, *backend_));
        neg_emb_ = embedding_const(encode_text_tokens(bank_->t_neg, *backend_));
        const_anchor_ = embedding_const(anchors_->constant);
        for (int i = 0; i < 4; ++i)
            stain_anchors_[static_cast<std::size_t>(i)] =
                embedding_const(anchors_->stain[static_cast<std::size_t>(i)]);
    }
}

void VpganTrainer::step() {
    IterationLog row;
    row.iter = iter_;

    std::vector<const ImagePatch*> batch_a, batch_b;
    for (int i = 0; i < config_.batch; ++i) {
        batch_a.push_back(&patches_a_[rng_.below(patches_a_.size())]);
        batch_b.push_back(&patches_b_[rng_.below(patches_b_.size())]);
    }

    // --- generator update ---
    opt_g_.zero_grad();
    ad::Var g_loss = ad::constant_scalar(0.0);
    double cyc_a_acc = 0.0, cyc_b_acc = 0.0;
    double cpt_acc = 0.0, cca_acc = 0.0, icr_acc = 0.0;
    std::vector<ad::Arr> fakes_b_detached, fakes_a_detached;
    for (int i = 0; i < config_.batch; ++i) {
        ad::Var a = patch_to_var(*batch_a[static_cast<std::size_t>(i)]);
        ad::Var b = patch_to_var(*batch_b[static_cast<std::size_t>(i)]);
        ad::Var fake_b = pair_.g_ab.forward(a);
        ad::Var fake_a = pair_.g_ba.forward(b);
        ad::Var rec_a = pair_.g_ba.forward(fake_b);
        ad::Var rec_b = pair_.g_ab.forward(fake_a);
        fakes_b_detached.push_back(fake_b->val);
        fakes_a_detached.push_back(fake_a->val);

        // The generator minimizes its adversarial terms directly (minimax form).
        ad::Var fb_term = ad::vmean(log_one_minus(pair_.d_b.forward(fake_b)));
        ad::Var fa_term = ad::vmean(log_one_minus(pair_.d_a.forward(fake_a)));

        ad::Var cyc_a = mean_abs_diff_var(rec_a, a);
        ad::Var cyc_b = mean_abs_diff_var(rec_b, b);
        cyc_a_acc += cyc_a->scalar();
        cyc_b_acc += cyc_b->scalar();

        ad::Var item = ad::add(ad::add(fb_term, fa_term),
                               ad::mul_const(ad::add(cyc_a, cyc_b), config_.weights.nu));

        if (use_prompts_) {
            // CCA pairs the translation with its own source (the only
            // pre/post pair available under unpaired training); all three
            // prompt losses apply to the forward translation only.
            ad::Var fake_b_emb = encode_image_var(fake_b, *backend_);
            ad::Var cpt = cpt_loss_var(fake_b_emb, pos_emb_, neg_emb_);
            const double s_pre = exp_cos(
                encode_image(*batch_a[static_cast<std::size_t>(i)], *backend_),
                anchors_->constant);
            ad::Var cca = cca_loss_var(fake_b_emb, s_pre, const_anchor_);
            ad::Var icr = icr_loss_var(fake_b_emb, stain_anchors_, config_.target,
                                       config_.icr_mode);
            cpt_acc += cpt->scalar();
            cca_acc += cca->scalar();
            icr_acc += icr->scalar();
            item = ad::add(item, ad::mul_const(cpt, config_.weights.alpha));
            item = ad::add(item, ad::mul_const(cca, config_.weights.beta));
            item = ad::add(item, ad::mul_const(icr, config_.weights.gamma));
        }
        g_loss = ad::add(g_loss, item);
    }
    g_loss = ad::mul_const(g_loss, 1.0 / config_.batch);
    ad::backward(g_loss);
    opt_g_.step();

    // --- discriminator update (fakes detached) ---
    opt_d_.zero_grad();
    ad::Var d_loss = ad::constant_scalar(0.0);
    double eq19_a_acc = 0.0, eq19_b_acc = 0.0;
    for (int i = 0; i < config_.batch; ++i) {
        ad::Var a = patch_to_var(*batch_a[static_cast<std::size_t>(i)]);
        ad::Var b = patch_to_var(*batch_b[static_cast<std::size_t>(i)]);
        ad::Var fake_b = ad::constant(fakes_b_detached[static_cast<std::size_t>(i)], a->dims);
        ad::Var fake_a = ad::constant(fakes_a_detached[static_cast<std::size_t>(i)], b->dims);
        ad::Var eq19_b = adversarial_loss_var(pair_.d_b.forward(b), pair_.d_b.forward(fake_b));
        ad::Var eq19_a = adversarial_loss_var(pair_.d_a.forward(a), pair_.d_a.forward(fake_a));
        eq19_b_acc += eq19_b->scalar();
        eq19_a_acc += eq19_a->scalar();
        // D maximizes the adversarial value; minimize the negation.
        d_loss = ad::add(d_loss, ad::neg(ad::add(eq19_a, eq19_b)));
    }
    d_loss = ad::mul_const(d_loss, 1.0 / config_.batch);
    ad::backward(d_loss);
    opt_d_.step();

    row.adv_a = eq19_a_acc / config_.batch;
    row.adv_b = eq19_b_acc / config_.batch;
    row.cyc_a = cyc_a_acc / config_.batch;
    row.cyc_b = cyc_b_acc / config_.batch;
    row.cpt = cpt_acc / config_.batch;
    row.cca = cca_acc / config_.batch;
    row.icr = icr_acc / config_.batch;
    row.normal_total = row.adv_a + row.adv_b + config_.weights.nu * (row.cyc_a + row.cyc_b);
    row.train_total =
        vpgan_total_loss({row.normal_total, row.cpt, row.cca, row.icr}, config_.weights);
    if (!std::isfinite(row.train_total)) {
        std::ostringstream msg;
        msg << "train_vpgan: non-finite loss at iteration " << iter_ << " (adv_a=" << row.adv_a
            << " adv_b=" << row.adv_b << " cyc_a=" << row.cyc_a << " cyc_b=" << row.cyc_b
            << " cpt=" << row.cpt << " cca=" << row.cca << " icr=" << row.icr << ")";
        throw TrainingError(msg.str());
    }
    report_.rows.push_back(row);
    ++iter_;
}

void VpganTrainer::run(const CheckpointHook& hook) {
    for (int i = 0; i < config_.iters; ++i) {
        step();
        if (hook && config_.checkpoint_every > 0 && iter_ % config_.checkpoint_every == 0)
            hook(iter_, *this);
    }
}

TrainReport train_vpgan(TranslatorPair& pair, const std::vector<ImagePatch>& patches_a,
                        const std::vector<ImagePatch>& patches_b, const PromptBank* bank,
                        const ConceptAnchorSet* anchors, const EncoderBackend* backend,
                        const VpganTrainConfig& config) {
    VpganTrainer trainer(patches_a, patches_b, bank, anchors, backend, config);
    trainer.run();
    pair = trainer.pair();
    return trainer.report();
}

}  // namespace stainforge
