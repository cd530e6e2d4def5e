#pragma once

#include <Eigen/Dense>
#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "stainforge/vlm.hpp"

namespace stainforge {

// Stain ordering shared by ConceptAnchorSet, StainDomainLabel and the
// condition vocabulary: 0:H&E 1:MAS 2:PAS 3:PASM.
inline constexpr std::array<const char*, 4> kStainNames{"H&E", "MAS", "PAS", "PASM"};

int stain_index(const std::string& name);  // InputError on unknown class

// Learnable contrastive prompt pair. Rows are tokens.
struct PromptBank {
    Eigen::MatrixXd t_pos;  // N x D
    Eigen::MatrixXd t_neg;  // N x D
    // training metadata
    int steps_trained = 0;
    double final_loss = 0.0;
    std::uint64_t seed = 0;
    std::vector<double> loss_curve;

    int n_tokens() const { return static_cast<int>(t_pos.rows()); }
    int dim() const { return static_cast<int>(t_pos.cols()); }
};

struct ConceptAnchorSet {
    Embedding constant;                 // renal-slice invariance anchor (1 x D)
    std::array<Embedding, 4> stain;     // ordered per kStainNames
    std::array<std::string, 5> digests; // constant, then stains; fnv1a64 hex of file bytes
};

// Tokens are zero-mean Gaussian with sigma = 0.02, drawn row-major, T_pos
// first then T_neg, from Rng(derive_seed(seed, "prompt.init")).
PromptBank init_prompt_bank(int n_tokens, int dim, std::uint64_t seed);

// Positive-class probability from the exp-cos similarity ratio. Computed so
// that the probability and its
// role-swapped complement add to exactly 1.
double classify_probability(const Embedding& image_emb, const PromptBank& bank,
                            const EncoderBackend& backend);

// Same quantity from already-encoded prompt latents (autodiff path).
ad::Var classify_probability_var(const ad::Var& image_emb, const ad::Var& pos_emb,
                                 const ad::Var& neg_emb);

// Binary cross entropy; probabilities are clamped to [1e-7, 1 - 1e-7].
double prompt_bce_loss(double a_hat, int label);
ad::Var prompt_bce_loss_var(const ad::Var& a_hat, int label);

struct PromptTrainOptions {
    int steps = 200;
    double learning_rate = 0.1;
    int n_tokens = 16;
    std::uint64_t seed = 0;
};

struct LabeledEmbedding {
    Embedding emb;
    int label = 0;  // 0 source, 1 target
};

// Full-batch gradient descent on the prompt tokens only; the encoder is
// frozen (its digest is asserted unchanged by the caller's tests).
PromptBank train_contrastive_prompts(const std::vector<LabeledEmbedding>& data,
                                     const EncoderBackend& backend,
                                     const PromptTrainOptions& opt);

double prompt_accuracy(const std::vector<LabeledEmbedding>& data, const PromptBank& bank,
                       const EncoderBackend& backend);

// The concept-anchor LLM query, byte-exact; {Class} is substituted.
std::string render_llm_query(const std::string& stain_class);

// Toy text tokenization: the file body hashes to a seed, which draws an
// N(0,1) 16 x D token matrix from Rng(derive_seed(hash, "toy.tokens")); the
// tokens then go through the standard text encoder.
Eigen::MatrixXd text_to_tokens(const std::string& text, int dim);

Embedding encode_concept_text(const std::string& text, const EncoderBackend& backend);

// Reads constant.txt, he.txt, mas.txt, pas.txt, pasm.txt from `concept_dir`.
ConceptAnchorSet build_concept_anchors(const std::filesystem::path& concept_dir,
                                       const EncoderBackend& backend);

}  // namespace stainforge
