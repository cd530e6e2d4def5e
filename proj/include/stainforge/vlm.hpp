#pragma once

#include <Eigen/Dense>
#include <array>
#include <memory>
#include <string>

#include "stainforge/autodiff.hpp"
#include "stainforge/image.hpp"

namespace stainforge {

// Uniform interface to the image/text encoder pair. The toy backend is a pure
// seeded function used by the whole desk-scale suite; the pretrained kind is a
// loading seam for external VLM weights and is not usable offline.
//
// Toy image encoder, exactly:
//   stats(I) = [ mean_r, mean_g, mean_b,
//                var_r, var_g, var_b,            (biased: E[x^2] - E[x]^2)
//                block means on a 4x4 grid, channel-major, rows then cols,
//                1.0 ]                            (constant keeps stats nonzero)
//   embed(I) = P_img * stats(I), L2-normalized.   P_img: D x 55, entries
//   N(0,1)/sqrt(55) drawn row-major from Rng(derive_seed(seed, "toy.image_proj")).
//   Patch sides must be divisible by 4.
//
// Toy text encoder, exactly:
//   embed(T) = P_txt * [mean_over_tokens(T); 1.0], L2-normalized. P_txt:
//   D x (D+1), entries N(0,1)/sqrt(D+1), Rng(derive_seed(seed, "toy.text_proj")).
//
// Toy feature pyramid: level l (0..4) is the input average-pooled by 2^l
// (ceil mode) followed by a fixed per-pixel channel mix M_l: 8 x 3, entries
// N(0,1)/sqrt(3), Rng(derive_seed(seed, "toy.pyramid.<l>")).

struct Embedding {
    Eigen::VectorXd values;
    bool normalized = false;

    int dim() const { return static_cast<int>(values.size()); }
};

struct FeatureMap {
    int channels = 0, height = 0, width = 0;
    Eigen::ArrayXd data;  // row-major (c, y, x)
};

struct FeaturePyramid {
    static constexpr int kLevels = 5;
    std::array<FeatureMap, kLevels> levels;
    std::array<std::string, kLevels> descriptor;
};

enum class BackendKind { toy, pretrained };

class EncoderBackend {
public:
    static EncoderBackend make_toy(int dim, std::uint64_t seed);
    static EncoderBackend make_pretrained(int dim, std::string weights_path);

    BackendKind kind() const { return kind_; }
    int dim() const { return dim_; }
    std::uint64_t seed() const { return seed_; }
    const std::string& weights_path() const { return weights_path_; }

    // Frozen-parameter checksum; training loops assert it never changes.
    std::uint64_t digest() const;

    // Toy projection matrices, shared so autodiff closures can hold them.
    std::shared_ptr<const Eigen::MatrixXd> image_proj;
    std::shared_ptr<const Eigen::MatrixXd> text_proj;
    std::array<std::shared_ptr<const Eigen::MatrixXd>, FeaturePyramid::kLevels> pyramid_mix;

    static constexpr int kStatsDim = 55;
    static constexpr int kPyramidChannels = 8;

private:
    EncoderBackend() = default;
    BackendKind kind_ = BackendKind::toy;
    int dim_ = 512;
    std::uint64_t seed_ = 0;
    std::string weights_path_;
};

// phi_image. Requires finite pixels within the declared range.
Embedding encode_image(const ImagePatch& patch, const EncoderBackend& backend);

// phi_text on a raw token matrix (N x D). Differentiable counterpart below.
Embedding encode_text_tokens(const Eigen::MatrixXd& tokens, const EncoderBackend& backend);

// e^{cos(a, b)}; value in [1/e, e]. Zero-norm input is an error.
double exp_cos(const Embedding& a, const Embedding& b);

FeaturePyramid encode_pyramid(const ImagePatch& patch, const EncoderBackend& backend);

// Per-level feature distance: || a_l - b_l ||_2.
double pyramid_level_distance(const FeaturePyramid& a, const FeaturePyramid& b, int level);

// --- differentiable paths (toy backend only) ---

// img laid out {3, H, W} row-major in model or unit range; same formula as
// encode_image.
ad::Var encode_image_var(const ad::Var& img, const EncoderBackend& backend);

// tokens laid out {1, N, D}.
ad::Var encode_text_tokens_var(const ad::Var& tokens, const EncoderBackend& backend);

std::array<ad::Var, FeaturePyramid::kLevels> encode_pyramid_var(const ad::Var& img,
                                                                const EncoderBackend& backend);

// exp(cos) on autodiff vectors.
ad::Var exp_cos_var(const ad::Var& a, const ad::Var& b);

// ImagePatch <-> flat {3, H, W} tensor bridge.
ad::Var patch_to_var(const ImagePatch& patch, bool trainable = false);
ImagePatch var_to_patch(const ad::Var& v, ValueRange range);

}  // namespace stainforge
