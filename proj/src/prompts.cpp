#include "stainforge/prompts.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "stainforge/rng.hpp"

namespace stainforge {

namespace {

constexpr double kProbEps = 1e-7;

// The query template of the concept-anchor protocol. {Class} is the only
// substitution point.
constexpr const char* kLlmQueryTemplate =
    "We want to study the effects of different staining agents on the same liver pathological "
    "section. We will use the histological images of human kidney at 40x magnification. Please "
    "tell me the visual characteristics of {Class} staining compared with other staining agents "
    "and the key observation areas.";

std::string read_text_file(const std::filesystem::path& p) {
    std::ifstream f(p, std::ios::binary);
    if (!f) throw InputError("missing concept file: " + p.string());
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

ad::Var tokens_leaf(const Eigen::MatrixXd& t) {
    const int n = static_cast<int>(t.rows()), d = static_cast<int>(t.cols());
    ad::Arr flat(n * d);
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < d; ++c) flat[r * d + c] = t(r, c);
    return ad::leaf(std::move(flat), ad::Dims{1, n, d});
}

}  // namespace

int stain_index(const std::string& name) {
    for (int i = 0; i < 4; ++i)
        if (name == kStainNames[static_cast<std::size_t>(i)]) return i;
    throw InputError("unknown stain class: " + name +
                     " (expected one of H&E, MAS, PAS, PASM)");
}

PromptBank init_prompt_bank(int n_tokens, int dim, std::uint64_t seed) {
    if (n_tokens < 1 || dim < 1)
        throw InputError("init_prompt_bank: token count and dim must be positive");
    Rng rng(derive_seed(seed, "prompt.init"));
    PromptBank bank;
    bank.seed = seed;
    bank.t_pos.resize(n_tokens, dim);
    bank.t_neg.resize(n_tokens, dim);
    for (int r = 0; r < n_tokens; ++r)
        for (int c = 0; c < dim; ++c) bank.t_pos(r, c) = rng.gaussian(0.0, 0.02);
    for (int r = 0; r < n_tokens; ++r)
        for (int c = 0; c < dim; ++c) bank.t_neg(r, c) = rng.gaussian(0.0, 0.02);
    return bank;
}

double classify_probability(const Embedding& image_emb, const PromptBank& bank,
                            const EncoderBackend& backend) {
    const Embedding ep = encode_text_tokens(bank.t_pos, backend);
    const Embedding en = encode_text_tokens(bank.t_neg, backend);
    const double sp = exp_cos(image_emb, ep);
    const double sn = exp_cos(image_emb, en);
    // Larger score goes through the division; the other side is the exact
    // complement, so p(pos) + p(neg under swapped roles) == 1 bit-exactly.
    if (sp >= sn) return sp / (sp + sn);
    return 1.0 - sn / (sp + sn);
}

ad::Var classify_probability_var(const ad::Var& image_emb, const ad::Var& pos_emb,
                                 const ad::Var& neg_emb) {
    ad::Var sp = exp_cos_var(image_emb, pos_emb);
    ad::Var sn = exp_cos_var(image_emb, neg_emb);
    ad::Var denom = ad::add(sp, sn);
    if (sp->scalar() >= sn->scalar()) return ad::div(sp, denom);
    return ad::add_const(ad::neg(ad::div(sn, denom)), 1.0);
}

double prompt_bce_loss(double a_hat, int label) {
    const double p = std::min(1.0 - kProbEps, std::max(kProbEps, a_hat));
    return label ? -std::log(p) : -std::log(1.0 - p);
}

ad::Var prompt_bce_loss_var(const ad::Var& a_hat, int label) {
    // Clamp only when necessary so gradient checks see the smooth branch.
    ad::Var p = a_hat;
    if (p->scalar() < kProbEps || p->scalar() > 1.0 - kProbEps) {
        p = ad::constant_scalar(std::min(1.0 - kProbEps, std::max(kProbEps, p->scalar())));
    }
    if (label) return ad::neg(ad::vlog(p));
    return ad::neg(ad::vlog(ad::add_const(ad::neg(p), 1.0)));
}

PromptBank train_contrastive_prompts(const std::vector<LabeledEmbedding>& data,
                                     const EncoderBackend& backend,
                                     const PromptTrainOptions& opt) {
    bool has0 = false, has1 = false;
    for (const auto& s : data) (s.label ? has1 : has0) = true;
    if (!has0 || !has1)
        throw InputError("train_contrastive_prompts: need samples from both domains");

    PromptBank bank = init_prompt_bank(opt.n_tokens, backend.dim(), opt.seed);
    std::vector<ad::Var> embs;
    embs.reserve(data.size());
    for (const auto& s : data)
        embs.push_back(ad::constant(s.emb.values.array(), ad::vec_dims(backend.dim())));

    for (int step = 0; step < opt.steps; ++step) {
        ad::Var tp = tokens_leaf(bank.t_pos);
        ad::Var tn = tokens_leaf(bank.t_neg);
        ad::Var ep = encode_text_tokens_var(tp, backend);
        ad::Var en = encode_text_tokens_var(tn, backend);
        ad::Var loss = ad::constant_scalar(0.0);
        for (std::size_t i = 0; i < data.size(); ++i) {
            ad::Var p = classify_probability_var(embs[i], ep, en);
            loss = ad::add(loss, prompt_bce_loss_var(p, data[i].label));
        }
        loss = ad::mul_const(loss, 1.0 / static_cast<double>(data.size()));
        if (!std::isfinite(loss->scalar()))
            throw TrainingError("train_contrastive_prompts: non-finite loss at step " +
                                std::to_string(step));
        bank.loss_curve.push_back(loss->scalar());
        ad::backward(loss);
        const int n = bank.n_tokens(), d = bank.dim();
        for (int r = 0; r < n; ++r)
            for (int c = 0; c < d; ++c) {
                bank.t_pos(r, c) -= opt.learning_rate * tp->grad[r * d + c];
                bank.t_neg(r, c) -= opt.learning_rate * tn->grad[r * d + c];
            }
        bank.final_loss = loss->scalar();
        bank.steps_trained = step + 1;
    }
    return bank;
}

double prompt_accuracy(const std::vector<LabeledEmbedding>& data, const PromptBank& bank,
                       const EncoderBackend& backend) {
    if (data.empty()) throw InputError("prompt_accuracy: empty data");
    int correct = 0;
    for (const auto& s : data) {
        const double p = classify_probability(s.emb, bank, backend);
        correct += ((p > 0.5) == (s.label == 1)) ? 1 : 0;
    }
    return static_cast<double>(correct) / static_cast<double>(data.size());
}

std::string render_llm_query(const std::string& stain_class) {
    stain_index(stain_class);  // validates
    std::string out = kLlmQueryTemplate;
    const std::string key = "{Class}";
    const auto pos = out.find(key);
    out.replace(pos, key.size(), stain_class);
    return out;
}

Eigen::MatrixXd text_to_tokens(const std::string& text, int dim) {
    constexpr int kTokens = 16;
    Rng rng(derive_seed(fnv1a64(text), "toy.tokens"));
    Eigen::MatrixXd t(kTokens, dim);
    for (int r = 0; r < kTokens; ++r)
        for (int c = 0; c < dim; ++c) t(r, c) = rng.gaussian();
    return t;
}

Embedding encode_concept_text(const std::string& text, const EncoderBackend& backend) {
    return encode_text_tokens(text_to_tokens(text, backend.dim()), backend);
}

ConceptAnchorSet build_concept_anchors(const std::filesystem::path& concept_dir,
                                       const EncoderBackend& backend) {
    const std::array<std::string, 5> files{"constant.txt", "he.txt", "mas.txt", "pas.txt",
                                           "pasm.txt"};
    ConceptAnchorSet set;
    for (std::size_t i = 0; i < files.size(); ++i) {
        const std::string text = read_text_file(concept_dir / files[i]);
        std::ostringstream hex;
        hex << std::hex << fnv1a64(text);
        set.digests[i] = hex.str();
        Embedding e = encode_concept_text(text, backend);
        if (i == 0)
            set.constant = std::move(e);
        else
            set.stain[i - 1] = std::move(e);
    }
    return set;
}

}  // namespace stainforge
