#pragma once

#include <array>

#include "stainforge/diffusion.hpp"
#include "stainforge/vlm.hpp"
#include "stainforge/vpgan.hpp"

namespace stainforge {

enum class StructComparand { z, y_plus_z };

struct EnhanceWeights {
    double mu = 0.05;
    double lambda = 0.001;
    std::array<double, 5> delta{1.0, 1.0, 1.0, 1.0, 1.0};
    StructComparand comparand = StructComparand::z;

    void validate() const;
};

// Per-step structural term: 1 - mean contrast-structure SSIM between the
// prompt map (or Y + Z) and the source latent, Gaussian window 11 / sigma
// 1.5 shrunk to fit, constants from data range 2 (model-range width).
double struct_loss(const DiffusionTrajectory& z, const DiffusionTrajectory& x,
                   StructComparand comparand = StructComparand::z,
                   const DiffusionTrajectory* y = nullptr);

// Sum over steps of the mean squared difference to the style trajectory.
double style_loss(const DiffusionTrajectory& z, const DiffusionTrajectory& y);

// Sum over steps and pyramid levels of delta_l * ||phi_l(Z) - phi_l(Y)||_2.
double calibration_loss(const DiffusionTrajectory& z, const DiffusionTrajectory& y,
                        const EncoderBackend& backend, const std::array<double, 5>& delta);

// mu * struct + (1 - mu) * style + lambda * calibration.
double enhance_objective(const DiffusionTrajectory& z, const DiffusionTrajectory& x,
                         const DiffusionTrajectory& y, const EncoderBackend& backend,
                         const EnhanceWeights& weights);

struct EnhanceOptimOptions {
    int steps = 25;
    // The per-step losses are pixel means, so gradients carry a 1/N factor;
    // useful raw-GD steps are of order N. Oversized steps are cut back by
    // the halving rule before being accepted.
    double step_size = 4096.0;
    double accept_slack = 1e-9;  // objective may rise by at most this per accepted step
};

struct EnhanceOptimResult {
    DiffusionTrajectory z;
    std::vector<double> objective_trace;  // trace[0] is the Z = 0 objective
};

// Gradient descent on the prompt maps only, with step halving whenever a
// candidate step would raise the objective; the accepted trace is therefore
// non-increasing.
EnhanceOptimResult optimize_prompt_maps(const DiffusionTrajectory& x,
                                        const DiffusionTrajectory& y,
                                        const EncoderBackend& backend,
                                        const EnhanceWeights& weights,
                                        const EnhanceOptimOptions& options);

// Conditional denoising under the target class: the running latent starts at
// Y_50 + Z_50 and each reverse step is followed by the next prompt-map
// injection. Output is clamped to [-1, 1].
ImagePatch conditional_denoise(const DiffusionTrajectory& y, const DiffusionTrajectory& z,
                               ConditionToken target, const NoisePredictor& predictor,
                               const DiffusionSchedule& schedule);

struct EnhanceResult {
    ImagePatch image;
    std::vector<double> objective_trace;
};

// Full per-image enhancement: trajectories, prompt-map optimization,
// conditional denoise.
EnhanceResult enhance_image(const ImagePatch& i_pre, const ImagePatch& i_post,
                            StainDomainLabel target, const NoisePredictor& predictor,
                            const DiffusionSchedule& schedule, const EncoderBackend& backend,
                            const EnhanceWeights& weights, const EnhanceOptimOptions& options);

// Autodiff building block shared with the tests: per-step enhance term as a
// function of the prompt map z_k.
ad::Var enhance_step_term_var(const ad::Var& z_k, const Eigen::ArrayXd& x_k,
                              const Eigen::ArrayXd& y_k, ad::Dims dims,
                              const EncoderBackend& backend, const EnhanceWeights& weights);

}  // namespace stainforge
