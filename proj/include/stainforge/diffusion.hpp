#pragma once

#include <vector>

#include "stainforge/image.hpp"
#include "stainforge/nets.hpp"

namespace stainforge {

// Cumulative signal coefficients over a linear-beta training schedule plus
// the uniformly spaced inference grid. alpha_grid(0) = 1 corresponds to the
// clean image; alpha_grid(k) is strictly decreasing in k.
struct DiffusionSchedule {
    int train_steps = 1000;
    double beta_min = 1e-4;
    double beta_max = 0.02;
    int grid_steps = 50;
    Eigen::ArrayXd alpha_bar;  // train_steps + 1 entries, alpha_bar[0] = 1

    static DiffusionSchedule make(int train_steps, double beta_min, double beta_max,
                                  int grid_steps);

    int grid_t(int k) const;            // underlying training step of grid index k
    double alpha_grid(int k) const;     // cumulative coefficient at grid index k
    void validate() const;
};

// Conditioning vocabulary: index 0 is the reserved null condition C_E;
// stain classes map to index + 1.
struct ConditionToken {
    int index = 0;

    static ConditionToken null_condition() { return {0}; }
    static ConditionToken stain(int stain_idx) {
        if (stain_idx < 0 || stain_idx > 3) throw InputError("ConditionToken: bad stain index");
        return {stain_idx + 1};
    }
    bool is_null() const { return index == 0; }
};

// Small conditional denoiser eps_theta(x, t, C): three 3x3 convs with a
// sinusoidal time embedding and a learned per-condition bias injected after
// the first conv. The final conv starts at zero, so an untrained predictor
// returns exactly zero noise.
class NoisePredictor {
public:
    static constexpr int kConditions = 5;  // C_E + four stains
    // Four sin/cos octaves (pi .. 8 pi over t/T). The ladder stops there so
    // predictions stay smooth across adjacent steps of the 50-step grid,
    // which the inversion round trip depends on.
    static constexpr int kTimeFeatures = 8;

    NoisePredictor() = default;
    NoisePredictor(int channels, std::uint64_t seed);

    ad::Var forward(const ad::Var& x, int t, int train_steps, ConditionToken cond) const;
    Eigen::ArrayXd predict(const Eigen::ArrayXd& x, ad::Dims dims, int t, int train_steps,
                           ConditionToken cond) const;

    std::vector<ad::Var> params() const;
    int channels() const { return channels_; }

private:
    int channels_ = 0;
    ConvLayer c1_, c2_, c3_;
    ad::Var time_w_, time_b_;  // kTimeFeatures -> channels
    ad::Var cond_table_;       // {1, kConditions, channels}
};

// Ordered noisy latents over the inference grid for one image; latents[k-1]
// sits at grid index k (the clean image itself is not stored).
struct DiffusionTrajectory {
    enum class Role { source_x, style_y, prompt_z };
    Role role = Role::source_x;
    int height = 0, width = 0;
    std::vector<Eigen::ArrayXd> latents;  // grid_steps flat {3,h,w} arrays

    ad::Dims dims() const { return {3, height, width}; }
    int steps() const { return static_cast<int>(latents.size()); }

    static DiffusionTrajectory zeros(Role role, int steps, int h, int w);
};

// One forward-recurrence (inversion) step: grid index k -> k + 1, k in
// [0, grid_steps - 1]. x at k = 0 is the clean image.
Eigen::ArrayXd invert_step(const Eigen::ArrayXd& x, ad::Dims dims, int k, ConditionToken cond,
                           const NoisePredictor& predictor, const DiffusionSchedule& schedule);

// One reverse (denoising) step: grid index k -> k - 1, k in [1, grid_steps].
Eigen::ArrayXd denoise_step(const Eigen::ArrayXd& x, ad::Dims dims, int k, ConditionToken cond,
                            const NoisePredictor& predictor, const DiffusionSchedule& schedule);

// X is built under the source-class condition (taken from i_pre.domain), Y
// under the null condition C_E.
std::pair<DiffusionTrajectory, DiffusionTrajectory> build_trajectories(
    const ImagePatch& i_pre, const ImagePatch& i_post, const NoisePredictor& predictor,
    const DiffusionSchedule& schedule);

DiffusionTrajectory invert_full(const ImagePatch& img, ConditionToken cond,
                                const NoisePredictor& predictor,
                                const DiffusionSchedule& schedule,
                                DiffusionTrajectory::Role role);

// Plain DDIM denoising from the deepest latent down to the image.
ImagePatch denoise_full(const DiffusionTrajectory& start, ConditionToken cond,
                        const NoisePredictor& predictor, const DiffusionSchedule& schedule);

struct DiffusionTrainConfig {
    int iters = 600;
    double lr = 2e-3;
    int channels = 24;
    double uncond_prob = 0.2;  // probability of training a sample under C_E
    std::uint64_t seed = 0;
    int train_steps = 1000;
    double beta_min = 1e-4;
    // Terminal signal ~0.08 at t = 1000. Deeper schedules multiply the toy
    // predictor's estimation error by 1/sqrt(alpha_bar_T) during inversion
    // and the 50-step round trip degrades far below 30 dB.
    double beta_max = 0.01;
    int grid_steps = 50;
};

struct DiffusionTrainResult {
    NoisePredictor predictor;
    DiffusionSchedule schedule;
    std::vector<double> loss_curve;
    double initial_loss = 0.0;  // mean over the first up-to-50 iterations
    double final_loss = 0.0;    // mean over the last up-to-50 iterations
};

// Standard noise-prediction regression; samples must carry stain labels.
DiffusionTrainResult train_toy_diffusion(const std::vector<ImagePatch>& samples,
                                         const DiffusionTrainConfig& config);

}  // namespace stainforge
