#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "stainforge/rng.hpp"
#include "stainforge/vpgan.hpp"

using namespace stainforge;

namespace {

ImagePatch random_model_patch(Rng& rng, int h, int w) {
    ImagePatch p(h, w, ValueRange::model());
    for (auto& c : p.ch)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) c(y, x) = rng.uniform(-1.0, 1.0);
    return p;
}

ImagePatch tinted_patch(Rng& rng, int h, int w, double r, double g, double b) {
    ImagePatch p(h, w, ValueRange::model());
    for (int c = 0; c < 3; ++c) {
        const double base = c == 0 ? r : c == 1 ? g : b;
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                p.ch[static_cast<std::size_t>(c)](y, x) =
                    std::clamp(base + 0.2 * rng.gaussian(), -1.0, 1.0);
    }
    return p;
}

ConceptAnchorSet toy_anchors(const EncoderBackend& backend) {
    ConceptAnchorSet set;
    set.constant = encode_concept_text("tissue structure remains fixed", backend);
    set.stain[0] = encode_concept_text("pink and purple", backend);
    set.stain[1] = encode_concept_text("blue green fibers", backend);
    set.stain[2] = encode_concept_text("magenta carbohydrate", backend);
    set.stain[3] = encode_concept_text("black silver lining", backend);
    return set;
}

ad::Var emb_const(const Embedding& e) {
    return ad::constant(e.values.array(), ad::vec_dims(e.dim()));
}

}  // namespace

TEST_CASE("translate preserves shape, bounds, and near-identity at init") {
    TranslatorPair pair = make_translator_pair(8, 2, 7);
    Rng rng(61);
    for (int size : {64, 256}) {
        ImagePatch img = random_model_patch(rng, size, size);
        ImagePatch out = translate(img, pair, Direction::a_to_b);
        CHECK(out.height() == size);
        CHECK(out.width() == size);
        for (const auto& c : out.ch) {
            CHECK(c.maxCoeff() <= 1.0);
            CHECK(c.minCoeff() >= -1.0);
        }
        // zero-initialized residual path: output within 0.2 of input
        CHECK(max_abs_diff(out, img) <= 0.2);
    }

    ImagePatch wrong_range = random_model_patch(rng, 16, 16);
    wrong_range.range = ValueRange::unit();
    CHECK_THROWS_AS(translate(wrong_range, pair, Direction::a_to_b), InputError);
}

TEST_CASE("adversarial_loss analytic values") {
    // untrained discriminator outputs exactly 0.5 everywhere
    Rng rng(62);
    Discriminator d(8, rng);
    ImagePatch img = random_model_patch(rng, 16, 16);
    ad::Var out = d.forward(patch_to_var(img));
    CHECK(out->val.minCoeff() == 0.5);
    CHECK(out->val.maxCoeff() == 0.5);
    const double loss = adversarial_loss(out->val, out->val);
    CHECK(loss == doctest::Approx(2.0 * std::log(0.5)).epsilon(1e-12));
    CHECK(loss == doctest::Approx(-1.38629).epsilon(1e-4));

    // perfect separation drives the loss to 0^- under clamping
    Eigen::ArrayXd ones = Eigen::ArrayXd::Ones(10);
    Eigen::ArrayXd zeros = Eigen::ArrayXd::Zero(10);
    const double sep = adversarial_loss(ones, zeros);
    CHECK(sep < 0.0);
    CHECK(sep == doctest::Approx(2.0 * std::log(1.0 - 1e-7)).epsilon(1e-9));

    // random outputs match a scratch evaluation of the two log terms
    for (int trial = 0; trial < 10; ++trial) {
        Eigen::ArrayXd dr(6), df(6);
        for (int i = 0; i < 6; ++i) {
            dr[i] = rng.uniform(0.01, 0.99);
            df[i] = rng.uniform(0.01, 0.99);
        }
        double want = 0.0;
        for (int i = 0; i < 6; ++i) want += std::log(dr[i]) / 6.0 + std::log(1.0 - df[i]) / 6.0;
        CHECK(std::abs(adversarial_loss(dr, df) - want) < 1e-10);
    }
}

TEST_CASE("cycle_l1 kernel: identity, constant offset, naive oracle") {
    Rng rng(63);
    ImagePatch a = random_model_patch(rng, 12, 12);
    CHECK(cycle_l1(a, a) == 0.0);

    ImagePatch shifted = a;
    for (auto& c : shifted.ch) c += 0.1;
    CHECK(cycle_l1(shifted, a) == doctest::Approx(0.1).epsilon(1e-12));

    ImagePatch b = random_model_patch(rng, 12, 12);
    double want = 0.0;
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < 12; ++y)
            for (int x = 0; x < 12; ++x)
                want += std::abs(b.ch[static_cast<std::size_t>(c)](y, x) -
                                 a.ch[static_cast<std::size_t>(c)](y, x));
    want /= 3 * 12 * 12;
    CHECK(cycle_l1(b, a) == doctest::Approx(want).epsilon(1e-12));

    // generators fix the zero image, so the zero-batch cycle loss vanishes
    TranslatorPair pair = make_translator_pair(8, 2, 7);
    ImagePatch zero(16, 16, ValueRange::model());
    CHECK(cycle_loss(pair, {zero}, {zero}) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("cpt_loss analytic and oracle") {
    Rng rng(64);
    Embedding img;
    img.values = Eigen::VectorXd::NullaryExpr(12, [&](Eigen::Index) { return rng.gaussian(); });
    img.values.normalize();

    // equal similarities -> 0.5
    ad::Var equal = cpt_loss_var(emb_const(img), emb_const(img), emb_const(img));
    CHECK(equal->scalar() == 0.5);

    // cos(img, T_n) = -1, cos(img, T_p) = 1 -> 1/(1+e^2)
    Embedding neg;
    neg.values = -img.values;
    ad::Var extreme = cpt_loss_var(emb_const(img), emb_const(img), emb_const(neg));
    CHECK(extreme->scalar() == doctest::Approx(1.0 / (1.0 + std::exp(2.0))).epsilon(1e-12));
    CHECK(extreme->scalar() == doctest::Approx(0.11920).epsilon(1e-4));

    // full path matches a scratch evaluation of the similarity ratio
    auto backend = EncoderBackend::make_toy(32, 7);
    PromptBank bank = init_prompt_bank(4, 32, 99);
    ImagePatch patch = random_model_patch(rng, 16, 16);
    const double got = cpt_loss(patch, bank, backend);
    const Embedding pe = encode_image(patch, backend);
    const Embedding ep = encode_text_tokens(bank.t_pos, backend);
    const Embedding en = encode_text_tokens(bank.t_neg, backend);
    auto cosine = [](const Embedding& x, const Embedding& y) {
        return x.values.dot(y.values) / (x.values.norm() * y.values.norm());
    };
    const double want = std::exp(cosine(pe, en)) /
                        (std::exp(cosine(pe, ep)) + std::exp(cosine(pe, en)));
    CHECK(std::abs(got - want) < 1e-10);
    CHECK(got > 0.0);
    CHECK(got < 1.0);

    // cpt + classify probability share the denominator: exact complements
    const double p_pos = classify_probability(pe, bank, backend);
    CHECK(p_pos + got == 1.0);
}

TEST_CASE("cca_loss analytic and oracle") {
    auto backend = EncoderBackend::make_toy(32, 7);
    ConceptAnchorSet anchors = toy_anchors(backend);
    Rng rng(65);
    ImagePatch img = random_model_patch(rng, 16, 16);
    CHECK(cca_loss(img, img, anchors, backend) == 0.0);

    // S_pre = e, S_post = 1  ->  (e - 1)^2
    CHECK(cca_from_scores(std::exp(1.0), 1.0) ==
          doctest::Approx((std::exp(1.0) - 1.0) * (std::exp(1.0) - 1.0)).epsilon(1e-12));
    CHECK(cca_from_scores(std::exp(1.0), 1.0) == doctest::Approx(2.95249).epsilon(1e-4));

    ImagePatch post = random_model_patch(rng, 16, 16);
    const double got = cca_loss(img, post, anchors, backend);
    auto s = [&](const ImagePatch& p) {
        const Embedding e = encode_image(p, backend);
        const double c = e.values.dot(anchors.constant.values) /
                         (e.values.norm() * anchors.constant.values.norm());
        return std::exp(c);
    };
    const double want = (s(img) - s(post)) * (s(img) - s(post));
    CHECK(std::abs(got - want) < 1e-10);
    CHECK(got >= 0.0);
}

TEST_CASE("icr_loss analytic, oracle, and probability properties") {
    // uniform cosines -> uniform p -> ln 4
    Eigen::Vector4d uniform_cos(0.3, 0.3, 0.3, 0.3);
    Eigen::Vector4d p = icr_probs_from_cos(uniform_cos);
    for (int i = 0; i < 4; ++i) CHECK(p[i] == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(-std::log(p[0]) == doctest::Approx(std::log(4.0)).epsilon(1e-12));

    // cosines (1,-1,-1,-1) target 0: p0 = e^e / (e^e + 3 e^{1/e})
    Eigen::Vector4d extreme(1.0, -1.0, -1.0, -1.0);
    Eigen::Vector4d pe = icr_probs_from_cos(extreme);
    const double p0 = std::exp(std::exp(1.0)) /
                      (std::exp(std::exp(1.0)) + 3.0 * std::exp(std::exp(-1.0)));
    CHECK(pe[0] == doctest::Approx(p0).epsilon(1e-12));
    CHECK(pe[0] == doctest::Approx(0.7776).epsilon(1e-4));
    CHECK(-std::log(pe[0]) == doctest::Approx(0.2516).epsilon(1e-3));

    // p sums to one; argmax invariant to constant shifts of the cosines
    Rng rng(66);
    for (int trial = 0; trial < 20; ++trial) {
        Eigen::Vector4d cosv;
        for (int i = 0; i < 4; ++i) cosv[i] = rng.uniform(-1.0, 1.0);
        Eigen::Vector4d probs = icr_probs_from_cos(cosv);
        CHECK(std::abs(probs.sum() - 1.0) < 1e-9);
        Eigen::Vector4d::Index am1, am2;
        probs.maxCoeff(&am1);
        icr_probs_from_cos(cosv + Eigen::Vector4d::Constant(0.37)).maxCoeff(&am2);
        CHECK(am1 == am2);
    }

    // full path matches a scratch Eqs-7..9 evaluation
    auto backend = EncoderBackend::make_toy(32, 7);
    ConceptAnchorSet anchors = toy_anchors(backend);
    ImagePatch post = random_model_patch(rng, 16, 16);
    const Embedding e = encode_image(post, backend);
    Eigen::Vector4d cosv;
    for (int i = 0; i < 4; ++i)
        cosv[i] = e.values.dot(anchors.stain[static_cast<std::size_t>(i)].values) /
                  (e.values.norm() * anchors.stain[static_cast<std::size_t>(i)].values.norm());
    // Softmax applied to the exp-cos scores (double
    // exponential), not a plain normalization of the scores.
    Eigen::Vector4d scores = cosv.array().exp();
    Eigen::Vector4d es = (scores.array() - scores.maxCoeff()).exp();
    Eigen::Vector4d want_p = es / es.sum();
    for (int t = 0; t < 4; ++t) {
        const double got = icr_loss(post, anchors, StainDomainLabel(t), backend);
        CHECK(std::abs(got - (-std::log(want_p[t]))) < 1e-10);
    }

    // cos mode: softmax applied to raw cosines instead
    Eigen::Vector4d pc = icr_probs_from_cos(extreme, IcrSoftmaxOn::cos);
    const double q0 = std::exp(1.0) / (std::exp(1.0) + 3.0 * std::exp(-1.0));
    CHECK(pc[0] == doctest::Approx(q0).epsilon(1e-12));
}

TEST_CASE("vpgan_total_loss is the exact weighted sum") {
    LossWeights w;  // H&E2MAS defaults: alpha 30, beta 0.1, gamma 0.1
    VpganComponents c{1.0, 1.0, 1.0, 1.0};
    CHECK(vpgan_total_loss(c, w) == doctest::Approx(31.2).epsilon(1e-12));

    LossWeights zero;
    zero.alpha = zero.beta = zero.gamma = 0.0;
    VpganComponents c2{2.5, 0.7, 0.3, 0.9};
    CHECK(vpgan_total_loss(c2, zero) == 2.5);

    Rng rng(67);
    for (int trial = 0; trial < 10; ++trial) {
        LossWeights rw;
        rw.alpha = rng.uniform(0.0, 50.0);
        rw.beta = rng.uniform(0.0, 1.0);
        rw.gamma = rng.uniform(0.0, 1.0);
        VpganComponents rc{rng.gaussian(), rng.uniform(), rng.uniform(), rng.uniform()};
        const double want =
            rc.normal + rw.alpha * rc.contrastive + rw.beta * rc.constant + rw.gamma * rc.stain;
        CHECK(vpgan_total_loss(rc, rw) == doctest::Approx(want).epsilon(1e-12));
        // linearity in each component with the exact coefficient
        VpganComponents bump = rc;
        bump.contrastive += 1.0;
        CHECK(vpgan_total_loss(bump, rw) - vpgan_total_loss(rc, rw) ==
              doctest::Approx(rw.alpha).epsilon(1e-9));
    }

    LossWeights bad;
    bad.alpha = -1.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("prompt-loss gradients w.r.t. the image match finite differences") {
    const int dim = 16;
    auto backend = EncoderBackend::make_toy(dim, 5);
    ConceptAnchorSet anchors = toy_anchors(backend);
    PromptBank bank = init_prompt_bank(3, dim, 11);
    const ad::Var pos = emb_const(encode_text_tokens(bank.t_pos, backend));
    const ad::Var neg = emb_const(encode_text_tokens(bank.t_neg, backend));
    const ad::Var cons = emb_const(anchors.constant);
    std::array<ad::Var, 4> stains;
    for (int i = 0; i < 4; ++i)
        stains[static_cast<std::size_t>(i)] =
            emb_const(anchors.stain[static_cast<std::size_t>(i)]);

    Rng rng(68);
    const ad::Dims dims{3, 8, 8};
    for (int which = 0; which < 3; ++which) {
        ad::Arr x0(dims.size());
        for (Eigen::Index i = 0; i < x0.size(); ++i) x0[i] = rng.uniform(-0.9, 0.9);
        auto loss_of = [&](const ad::Var& img) {
            ad::Var e = encode_image_var(img, backend);
            if (which == 0) return cpt_loss_var(e, pos, neg);
            if (which == 1) return cca_loss_var(e, 1.3, cons);
            return icr_loss_var(e, stains, StainDomainLabel(1), IcrSoftmaxOn::exp_cos);
        };
        ad::Var img = ad::leaf(x0, dims);
        ad::Var loss = loss_of(img);
        ad::backward(loss);
        for (Eigen::Index i = 0; i < x0.size(); i += 37) {
            const double h = 1e-5;
            ad::Arr xp = x0, xm = x0;
            xp[i] += h;
            xm[i] -= h;
            const double fp = loss_of(ad::constant(xp, dims))->scalar();
            const double fm = loss_of(ad::constant(xm, dims))->scalar();
            const double numeric = (fp - fm) / (2.0 * h);
            const double denom = std::max({1e-8, std::abs(numeric), std::abs(img->grad[i])});
            CHECK(std::abs(numeric - img->grad[i]) / denom < 1e-4);
        }
    }
}

TEST_CASE("trainer determinism and baseline reduction") {
    auto backend = EncoderBackend::make_toy(32, 7);
    ConceptAnchorSet anchors = toy_anchors(backend);
    PromptBank bank = init_prompt_bank(4, 32, 5);
    Rng rng(69);
    std::vector<ImagePatch> domain_a, domain_b;
    for (int i = 0; i < 6; ++i) {
        domain_a.push_back(tinted_patch(rng, 16, 16, 0.5, -0.3, 0.2));
        domain_b.push_back(tinted_patch(rng, 16, 16, -0.4, 0.4, 0.0));
    }

    VpganTrainConfig cfg;
    cfg.iters = 5;
    cfg.base_channels = 6;
    cfg.res_blocks = 1;
    cfg.seed = 3;
    cfg.target = StainDomainLabel(1);

    // same seed/config twice -> identical parameters and loss traces
    VpganTrainer t1(domain_a, domain_b, &bank, &anchors, &backend, cfg);
    VpganTrainer t2(domain_a, domain_b, &bank, &anchors, &backend, cfg);
    t1.run();
    t2.run();
    CHECK(params_digest(t1.pair().generator_params()) ==
          params_digest(t2.pair().generator_params()));
    CHECK(params_digest(t1.pair().discriminator_params()) ==
          params_digest(t2.pair().discriminator_params()));
    for (std::size_t i = 0; i < t1.report().rows.size(); ++i)
        CHECK(t1.report().rows[i].train_total == t2.report().rows[i].train_total);

    // zero prompt weights reduce to the pure CycleGAN baseline bit-for-bit
    VpganTrainConfig zero_cfg = cfg;
    zero_cfg.weights.alpha = zero_cfg.weights.beta = zero_cfg.weights.gamma = 0.0;
    VpganTrainer with_bank(domain_a, domain_b, &bank, &anchors, &backend, zero_cfg);
    VpganTrainer baseline(domain_a, domain_b, nullptr, nullptr, nullptr, zero_cfg);
    with_bank.run();
    baseline.run();
    CHECK(params_digest(with_bank.pair().generator_params()) ==
          params_digest(baseline.pair().generator_params()));
    for (std::size_t i = 0; i < with_bank.report().rows.size(); ++i) {
        CHECK(with_bank.report().rows[i].normal_total == baseline.report().rows[i].normal_total);
        CHECK(with_bank.report().rows[i].adv_a == baseline.report().rows[i].adv_a);
        CHECK(with_bank.report().rows[i].cyc_b == baseline.report().rows[i].cyc_b);
    }

    // prompt weights without a bank is a configuration error
    CHECK_THROWS_AS(VpganTrainer(domain_a, domain_b, nullptr, nullptr, nullptr, cfg),
                    ConfigError);
    CHECK_THROWS_AS(VpganTrainer({}, domain_b, &bank, &anchors, &backend, cfg), InputError);
}
