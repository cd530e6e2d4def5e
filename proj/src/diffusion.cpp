#include "stainforge/diffusion.hpp"

#include <cmath>

#include "stainforge/vlm.hpp"

namespace stainforge {

DiffusionSchedule DiffusionSchedule::make(int train_steps, double beta_min, double beta_max,
                                          int grid_steps) {
    if (train_steps < 1 || grid_steps < 1 || train_steps % grid_steps != 0)
        throw ConfigError("diffusion schedule: train_steps must be a positive multiple of grid_steps");
    if (!(beta_min > 0.0) || !(beta_max < 1.0) || beta_min > beta_max)
        throw ConfigError("diffusion schedule: need 0 < beta_min <= beta_max < 1");
    DiffusionSchedule s;
    s.train_steps = train_steps;
    s.beta_min = beta_min;
    s.beta_max = beta_max;
    s.grid_steps = grid_steps;
    s.alpha_bar = Eigen::ArrayXd(train_steps + 1);
    s.alpha_bar[0] = 1.0;
    for (int t = 1; t <= train_steps; ++t) {
        const double beta =
            train_steps == 1
                ? beta_min
                : beta_min + (beta_max - beta_min) * (t - 1) / double(train_steps - 1);
        s.alpha_bar[t] = s.alpha_bar[t - 1] * (1.0 - beta);
    }
    s.validate();
    return s;
}

int DiffusionSchedule::grid_t(int k) const {
    if (k < 0 || k > grid_steps) throw InputError("schedule: grid index out of range");
    return k * (train_steps / grid_steps);
}

double DiffusionSchedule::alpha_grid(int k) const { return alpha_bar[grid_t(k)]; }

void DiffusionSchedule::validate() const {
    for (int k = 1; k <= grid_steps; ++k) {
        const double a = alpha_bar[grid_t(k)];
        if (!(a > 0.0) || !(a <= 1.0) || !(a < alpha_bar[grid_t(k - 1)]))
            throw ConfigError("diffusion schedule: alpha_bar must be strictly decreasing in (0, 1]");
    }
}

NoisePredictor::NoisePredictor(int channels, std::uint64_t seed) : channels_(channels) {
    Rng rng(derive_seed(seed, "diffusion.predictor"));
    c1_ = make_conv(3, channels, 3, 1, 1, rng);
    c2_ = make_conv(channels, channels, 3, 1, 1, rng);
    c3_ = make_conv(channels, 3, 3, 1, 1, rng, 0.02, /*zero_init=*/true);
    ad::Arr tw(channels * kTimeFeatures);
    for (Eigen::Index i = 0; i < tw.size(); ++i)
        tw[i] = rng.gaussian(0.0, 1.0 / std::sqrt(double(kTimeFeatures)));
    time_w_ = ad::leaf(std::move(tw), ad::Dims{1, channels, kTimeFeatures});
    time_b_ = ad::leaf(ad::Arr::Zero(channels), ad::vec_dims(channels));
    ad::Arr ct(kConditions * channels);
    for (Eigen::Index i = 0; i < ct.size(); ++i) ct[i] = rng.gaussian(0.0, 0.1);
    cond_table_ = ad::leaf(std::move(ct), ad::Dims{1, kConditions, channels});
}

namespace {

// Sinusoidal features of t / T at octave frequencies.
ad::Var time_features(int t, int train_steps) {
    ad::Arr f(NoisePredictor::kTimeFeatures);
    const double tn = static_cast<double>(t) / static_cast<double>(train_steps);
    for (int i = 0; i < NoisePredictor::kTimeFeatures / 2; ++i) {
        const double freq = std::pow(2.0, i) * 3.14159265358979323846;
        f[2 * i] = std::sin(freq * tn);
        f[2 * i + 1] = std::cos(freq * tn);
    }
    return ad::constant(std::move(f), ad::vec_dims(NoisePredictor::kTimeFeatures));
}

}  // namespace

ad::Var NoisePredictor::forward(const ad::Var& x, int t, int train_steps,
                                ConditionToken cond) const {
    if (cond.index < 0 || cond.index >= kConditions)
        throw InputError("NoisePredictor: condition index out of range");
    ad::Var h = c1_.apply(x);
    ad::Var temb = ad::linear(time_w_, time_features(t, train_steps), time_b_);
    ad::Var cemb = ad::pick_row(cond_table_, cond.index);
    h = ad::add_channel_bias(h, ad::add(temb, cemb));
    h = ad::vrelu(h);
    h = ad::vrelu(c2_.apply(h));
    return c3_.apply(h);
}

Eigen::ArrayXd NoisePredictor::predict(const Eigen::ArrayXd& x, ad::Dims dims, int t,
                                       int train_steps, ConditionToken cond) const {
    ad::Var out = forward(ad::constant(x, dims), t, train_steps, cond);
    return out->val;
}

std::vector<ad::Var> NoisePredictor::params() const {
    std::vector<ad::Var> p{c1_.w, c1_.b, c2_.w, c2_.b, c3_.w, c3_.b, time_w_, time_b_,
                           cond_table_};
    return p;
}

DiffusionTrajectory DiffusionTrajectory::zeros(Role role, int steps, int h, int w) {
    DiffusionTrajectory t;
    t.role = role;
    t.height = h;
    t.width = w;
    t.latents.assign(static_cast<std::size_t>(steps), Eigen::ArrayXd::Zero(3 * h * w));
    return t;
}

namespace {

Eigen::ArrayXd ddim_move(const Eigen::ArrayXd& x, const Eigen::ArrayXd& eps, double alpha_from,
                         double alpha_to) {
    // x_to = sqrt(a_to) * (x - sqrt(1 - a_from) * eps) / sqrt(a_from)
    //        + sqrt(1 - a_to) * eps
    const double sf = std::sqrt(alpha_from);
    const double st = std::sqrt(alpha_to);
    return st * (x - std::sqrt(1.0 - alpha_from) * eps) / sf + std::sqrt(1.0 - alpha_to) * eps;
}

}  // namespace

Eigen::ArrayXd invert_step(const Eigen::ArrayXd& x, ad::Dims dims, int k, ConditionToken cond,
                           const NoisePredictor& predictor, const DiffusionSchedule& schedule) {
    if (k < 0 || k >= schedule.grid_steps) throw InputError("invert_step: k out of range");
    const Eigen::ArrayXd eps =
        predictor.predict(x, dims, schedule.grid_t(k), schedule.train_steps, cond);
    return ddim_move(x, eps, schedule.alpha_grid(k), schedule.alpha_grid(k + 1));
}

Eigen::ArrayXd denoise_step(const Eigen::ArrayXd& x, ad::Dims dims, int k, ConditionToken cond,
                            const NoisePredictor& predictor, const DiffusionSchedule& schedule) {
    if (k < 1 || k > schedule.grid_steps) throw InputError("denoise_step: k out of range");
    const Eigen::ArrayXd eps =
        predictor.predict(x, dims, schedule.grid_t(k), schedule.train_steps, cond);
    return ddim_move(x, eps, schedule.alpha_grid(k), schedule.alpha_grid(k - 1));
}

DiffusionTrajectory invert_full(const ImagePatch& img, ConditionToken cond,
                                const NoisePredictor& predictor,
                                const DiffusionSchedule& schedule,
                                DiffusionTrajectory::Role role) {
    if (img.range != ValueRange::model())
        throw InputError("invert_full: image must be in model range [-1, 1]");
    const int h = static_cast<int>(img.height());
    const int w = static_cast<int>(img.width());
    DiffusionTrajectory traj;
    traj.role = role;
    traj.height = h;
    traj.width = w;
    ad::Var x0 = patch_to_var(img);
    Eigen::ArrayXd x = x0->val;
    const ad::Dims dims{3, h, w};
    for (int k = 0; k < schedule.grid_steps; ++k) {
        x = invert_step(x, dims, k, cond, predictor, schedule);
        traj.latents.push_back(x);
    }
    return traj;
}

std::pair<DiffusionTrajectory, DiffusionTrajectory> build_trajectories(
    const ImagePatch& i_pre, const ImagePatch& i_post, const NoisePredictor& predictor,
    const DiffusionSchedule& schedule) {
    if (!i_pre.same_shape(i_post)) throw InputError("build_trajectories: shape mismatch");
    if (!i_pre.domain.has_value())
        throw InputError("build_trajectories: source image requires a stain-domain label");
    const ConditionToken c_s = ConditionToken::stain(*i_pre.domain);
    DiffusionTrajectory x = invert_full(i_pre, c_s, predictor, schedule,
                                        DiffusionTrajectory::Role::source_x);
    DiffusionTrajectory y = invert_full(i_post, ConditionToken::null_condition(), predictor,
                                        schedule, DiffusionTrajectory::Role::style_y);
    return {std::move(x), std::move(y)};
}

ImagePatch denoise_full(const DiffusionTrajectory& start, ConditionToken cond,
                        const NoisePredictor& predictor, const DiffusionSchedule& schedule) {
    if (start.steps() != schedule.grid_steps)
        throw InputError("denoise_full: trajectory/grid length mismatch");
    Eigen::ArrayXd x = start.latents.back();
    const ad::Dims dims = start.dims();
    for (int k = schedule.grid_steps; k >= 1; --k)
        x = denoise_step(x, dims, k, cond, predictor, schedule);
    ImagePatch out = var_to_patch(ad::constant(x, dims), ValueRange::model());
    return clamp_to_range(out);
}

DiffusionTrainResult train_toy_diffusion(const std::vector<ImagePatch>& samples,
                                         const DiffusionTrainConfig& config) {
    if (samples.empty()) throw InputError("train_toy_diffusion: no samples");
    for (const auto& s : samples)
        if (!s.domain.has_value())
            throw InputError("train_toy_diffusion: every sample needs a stain-domain label");

    DiffusionTrainResult result;
    result.schedule = DiffusionSchedule::make(config.train_steps, config.beta_min,
                                              config.beta_max, config.grid_steps);
    result.predictor = NoisePredictor(config.channels, config.seed);

    Adam opt(result.predictor.params(), config.lr, 0.9, 0.999);
    Rng rng(derive_seed(config.seed, "diffusion.train"));

    for (int iter = 0; iter < config.iters; ++iter) {
        const ImagePatch& img = samples[rng.below(samples.size())];
        const int h = static_cast<int>(img.height());
        const int w = static_cast<int>(img.width());
        const ad::Dims dims{3, h, w};
        ad::Var x0 = patch_to_var(img);
        const int t = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(config.train_steps)));
        Eigen::ArrayXd noise(3 * h * w);
        for (Eigen::Index i = 0; i < noise.size(); ++i) noise[i] = rng.gaussian();
        const double a = result.schedule.alpha_bar[t];
        Eigen::ArrayXd xt = std::sqrt(a) * x0->val + std::sqrt(1.0 - a) * noise;

        ConditionToken cond = rng.uniform() < config.uncond_prob
                                  ? ConditionToken::null_condition()
                                  : ConditionToken::stain(*img.domain);
        opt.zero_grad();
        ad::Var pred = result.predictor.forward(ad::constant(xt, dims), t,
                                                config.train_steps, cond);
        ad::Var loss = ad::vmean(ad::vsquare(ad::sub(pred, ad::constant(noise, dims))));
        if (!std::isfinite(loss->scalar()))
            throw TrainingError("train_toy_diffusion: non-finite loss at iteration " +
                                std::to_string(iter));
        result.loss_curve.push_back(loss->scalar());
        ad::backward(loss);
        opt.step();
    }
    const int head = std::min<int>(50, static_cast<int>(result.loss_curve.size()));
    double s0 = 0.0, s1 = 0.0;
    for (int i = 0; i < head; ++i) s0 += result.loss_curve[static_cast<std::size_t>(i)];
    for (int i = 0; i < head; ++i)
        s1 += result.loss_curve[result.loss_curve.size() - 1 - static_cast<std::size_t>(i)];
    result.initial_loss = s0 / head;
    result.final_loss = s1 / head;
    return result;
}

}  // namespace stainforge
