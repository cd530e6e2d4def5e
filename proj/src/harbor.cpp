#include "stainforge/harbor.hpp"

#include <cmath>

namespace stainforge {

namespace {

// Latents live in noised model range; SSIM constants use the [-1, 1] width.
constexpr double kLatentRange = 2.0;

Eigen::VectorXd gaussian_kernel(int size, double sigma) {
    Eigen::VectorXd k(size);
    const double c = (size - 1) / 2.0;
    for (int i = 0; i < size; ++i) k[i] = std::exp(-(i - c) * (i - c) / (2.0 * sigma * sigma));
    return k / k.sum();
}

int window_for(int h, int w) {
    int win = std::min({11, h, w});
    if (win % 2 == 0) --win;
    if (win < 1) throw InputError("struct_loss: latent too small");
    return win;
}

ad::Var gauss_filter(const ad::Var& x, const Eigen::VectorXd& k) {
    return ad::filter1d_y(ad::filter1d_x(x, k), k);
}

// Mean contrast-structure SSIM map between two {3,h,w} tensors.
ad::Var ssim_cs_var(const ad::Var& a, const ad::Var& b, ad::Dims dims) {
    const int win = window_for(dims.h, dims.w);
    const Eigen::VectorXd k = gaussian_kernel(win, 1.5);
    const double c2 = (0.03 * kLatentRange) * (0.03 * kLatentRange);
    ad::Var mu_a = gauss_filter(a, k);
    ad::Var mu_b = gauss_filter(b, k);
    ad::Var var_a = ad::sub(gauss_filter(ad::vsquare(a), k), ad::vsquare(mu_a));
    ad::Var var_b = ad::sub(gauss_filter(ad::vsquare(b), k), ad::vsquare(mu_b));
    ad::Var cov = ad::sub(gauss_filter(ad::mul(a, b), k), ad::mul(mu_a, mu_b));
    ad::Var num = ad::add_const(ad::mul_const(cov, 2.0), c2);
    ad::Var den = ad::add_const(ad::add(var_a, var_b), c2);
    return ad::vmean(ad::div(num, den));
}

void check_traj_pair(const DiffusionTrajectory& a, const DiffusionTrajectory& b,
                     const char* op) {
    if (a.steps() != b.steps() || a.height != b.height || a.width != b.width)
        throw InputError(std::string(op) + ": trajectory shape mismatch");
}

ad::Var struct_term_var(const ad::Var& z_k, const Eigen::ArrayXd& x_k,
                        const Eigen::ArrayXd& y_k, ad::Dims dims, StructComparand comparand) {
    ad::Var cmp = comparand == StructComparand::z
                      ? z_k
                      : ad::add(z_k, ad::constant(y_k, dims));
    ad::Var cs = ssim_cs_var(cmp, ad::constant(x_k, dims), dims);
    return ad::add_const(ad::neg(cs), 1.0);
}

ad::Var style_term_var(const ad::Var& z_k, const Eigen::ArrayXd& y_k, ad::Dims dims) {
    return ad::vmean(ad::vsquare(ad::sub(z_k, ad::constant(y_k, dims))));
}

ad::Var calibration_term_var(const ad::Var& z_k, const Eigen::ArrayXd& y_k, ad::Dims dims,
                             const EncoderBackend& backend, const std::array<double, 5>& delta) {
    auto pz = encode_pyramid_var(z_k, backend);
    auto py = encode_pyramid_var(ad::constant(y_k, dims), backend);
    ad::Var acc = ad::constant_scalar(0.0);
    for (int l = 0; l < FeaturePyramid::kLevels; ++l) {
        if (delta[static_cast<std::size_t>(l)] == 0.0) continue;
        ad::Var d = ad::l2_norm(ad::sub(pz[static_cast<std::size_t>(l)],
                                        py[static_cast<std::size_t>(l)]));
        acc = ad::add(acc, ad::mul_const(d, delta[static_cast<std::size_t>(l)]));
    }
    return acc;
}

}  // namespace

void EnhanceWeights::validate() const {
    if (!(mu >= 0.0 && mu <= 1.0)) throw InputError("enhance weights: mu must be in [0, 1]");
    if (!(lambda >= 0.0) || !std::isfinite(lambda))
        throw InputError("enhance weights: lambda must be finite and >= 0");
    for (double d : delta)
        if (!std::isfinite(d) || d < 0.0)
            throw InputError("enhance weights: delta weights must be finite and >= 0");
}

double struct_loss(const DiffusionTrajectory& z, const DiffusionTrajectory& x,
                   StructComparand comparand, const DiffusionTrajectory* y) {
    check_traj_pair(z, x, "struct_loss");
    if (comparand == StructComparand::y_plus_z) {
        if (!y) throw InputError("struct_loss: y_plus_z comparand needs the style trajectory");
        check_traj_pair(z, *y, "struct_loss");
    }
    const ad::Dims dims = z.dims();
    double acc = 0.0;
    for (int k = 0; k < z.steps(); ++k) {
        ad::Var zk = ad::constant(z.latents[static_cast<std::size_t>(k)], dims);
        acc += struct_term_var(zk, x.latents[static_cast<std::size_t>(k)],
                               y ? y->latents[static_cast<std::size_t>(k)]
                                 : Eigen::ArrayXd(),
                               dims, comparand)
                   ->scalar();
    }
    return acc;
}

double style_loss(const DiffusionTrajectory& z, const DiffusionTrajectory& y) {
    check_traj_pair(z, y, "style_loss");
    double acc = 0.0;
    for (int k = 0; k < z.steps(); ++k)
        acc += (z.latents[static_cast<std::size_t>(k)] -
                y.latents[static_cast<std::size_t>(k)])
                   .square()
                   .mean();
    return acc;
}

double calibration_loss(const DiffusionTrajectory& z, const DiffusionTrajectory& y,
                        const EncoderBackend& backend, const std::array<double, 5>& delta) {
    check_traj_pair(z, y, "calibration_loss");
    const ad::Dims dims = z.dims();
    double acc = 0.0;
    for (int k = 0; k < z.steps(); ++k) {
        ad::Var zk = ad::constant(z.latents[static_cast<std::size_t>(k)], dims);
        acc += calibration_term_var(zk, y.latents[static_cast<std::size_t>(k)], dims, backend,
                                    delta)
                   ->scalar();
    }
    return acc;
}

ad::Var enhance_step_term_var(const ad::Var& z_k, const Eigen::ArrayXd& x_k,
                              const Eigen::ArrayXd& y_k, ad::Dims dims,
                              const EncoderBackend& backend, const EnhanceWeights& weights) {
    ad::Var term = ad::constant_scalar(0.0);
    if (weights.mu != 0.0)
        term = ad::add(term, ad::mul_const(
                                 struct_term_var(z_k, x_k, y_k, dims, weights.comparand),
                                 weights.mu));
    if (weights.mu != 1.0)
        term = ad::add(term, ad::mul_const(style_term_var(z_k, y_k, dims), 1.0 - weights.mu));
    if (weights.lambda != 0.0)
        term = ad::add(term, ad::mul_const(
                                 calibration_term_var(z_k, y_k, dims, backend, weights.delta),
                                 weights.lambda));
    return term;
}

double enhance_objective(const DiffusionTrajectory& z, const DiffusionTrajectory& x,
                         const DiffusionTrajectory& y, const EncoderBackend& backend,
                         const EnhanceWeights& weights) {
    weights.validate();
    check_traj_pair(z, x, "enhance_objective");
    check_traj_pair(z, y, "enhance_objective");
    const ad::Dims dims = z.dims();
    double acc = 0.0;
    for (int k = 0; k < z.steps(); ++k) {
        ad::Var zk = ad::constant(z.latents[static_cast<std::size_t>(k)], dims);
        acc += enhance_step_term_var(zk, x.latents[static_cast<std::size_t>(k)],
                                     y.latents[static_cast<std::size_t>(k)], dims, backend,
                                     weights)
                   ->scalar();
    }
    return acc;
}

EnhanceOptimResult optimize_prompt_maps(const DiffusionTrajectory& x,
                                        const DiffusionTrajectory& y,
                                        const EncoderBackend& backend,
                                        const EnhanceWeights& weights,
                                        const EnhanceOptimOptions& options) {
    weights.validate();
    check_traj_pair(x, y, "optimize_prompt_maps");
    const ad::Dims dims = x.dims();
    const int steps = x.steps();

    EnhanceOptimResult result;
    result.z = DiffusionTrajectory::zeros(DiffusionTrajectory::Role::prompt_z, steps, x.height,
                                          x.width);
    double f = enhance_objective(result.z, x, y, backend, weights);
    result.objective_trace.push_back(f);

    double eta = options.step_size;
    for (int step = 0; step < options.steps; ++step) {
        // The objective is separable over grid steps, so each prompt map gets
        // its own gradient from a small per-step graph.
        std::vector<Eigen::ArrayXd> grads(static_cast<std::size_t>(steps));
        for (int k = 0; k < steps; ++k) {
            ad::Var zk = ad::leaf(result.z.latents[static_cast<std::size_t>(k)], dims);
            ad::Var term = enhance_step_term_var(zk, x.latents[static_cast<std::size_t>(k)],
                                                 y.latents[static_cast<std::size_t>(k)], dims,
                                                 backend, weights);
            if (!std::isfinite(term->scalar()))
                throw TrainingError("optimize_prompt_maps: non-finite objective at step " +
                                    std::to_string(step));
            ad::backward(term);
            grads[static_cast<std::size_t>(k)] = zk->grad;
        }
        bool accepted = false;
        while (eta >= 1e-14) {
            DiffusionTrajectory cand = result.z;
            for (int k = 0; k < steps; ++k)
                cand.latents[static_cast<std::size_t>(k)] -=
                    eta * grads[static_cast<std::size_t>(k)];
            const double fc = enhance_objective(cand, x, y, backend, weights);
            if (fc <= f + options.accept_slack) {
                result.z = std::move(cand);
                f = fc;
                result.objective_trace.push_back(f);
                accepted = true;
                break;
            }
            eta *= 0.5;
        }
        if (!accepted) break;  // step size exhausted; Z is at a local plateau
    }
    return result;
}

ImagePatch conditional_denoise(const DiffusionTrajectory& y, const DiffusionTrajectory& z,
                               ConditionToken target, const NoisePredictor& predictor,
                               const DiffusionSchedule& schedule) {
    check_traj_pair(y, z, "conditional_denoise");
    if (y.steps() != schedule.grid_steps)
        throw InputError("conditional_denoise: trajectory/grid length mismatch");
    const ad::Dims dims = y.dims();
    Eigen::ArrayXd x = y.latents.back() + z.latents.back();
    for (int k = schedule.grid_steps; k >= 1; --k) {
        x = denoise_step(x, dims, k, target, predictor, schedule);
        if (k - 1 >= 1) x += z.latents[static_cast<std::size_t>(k - 2)];
    }
    ImagePatch out = var_to_patch(ad::constant(x, dims), ValueRange::model());
    return clamp_to_range(out);
}

EnhanceResult enhance_image(const ImagePatch& i_pre, const ImagePatch& i_post,
                            StainDomainLabel target, const NoisePredictor& predictor,
                            const DiffusionSchedule& schedule, const EncoderBackend& backend,
                            const EnhanceWeights& weights, const EnhanceOptimOptions& options) {
    auto [x, y] = build_trajectories(i_pre, i_post, predictor, schedule);
    EnhanceOptimResult optim = optimize_prompt_maps(x, y, backend, weights, options);
    EnhanceResult result;
    result.objective_trace = std::move(optim.objective_trace);
    result.image = conditional_denoise(y, optim.z, ConditionToken::stain(target.index),
                                       predictor, schedule);
    result.image.domain = target.index;
    return result;
}

}  // namespace stainforge
