#pragma once

#include <string>
#include <vector>

#include "stainforge/autodiff.hpp"
#include "stainforge/rng.hpp"

namespace stainforge {

// Conv parameter pair plus geometry. Weights live as flat {1, Cout, Cin*kh*kw}
// leaves so optimizers can address them uniformly.
struct ConvLayer {
    ad::Var w, b;
    int cin = 0, cout = 0, kh = 3, kw = 3, stride = 1, pad = 1;

    ad::Var apply(const ad::Var& x) const { return ad::conv2d(x, w, b, kh, kw, stride, pad); }
};

ConvLayer make_conv(int cin, int cout, int k, int stride, int pad, Rng& rng,
                    double weight_std = 0.02, bool zero_init = false);

// Residual encoder-decoder translator. Near-identity at initialization: every
// residual block's second conv and the output conv start at zero, and the
// output head is tanh(1.5 * (x + residual)), which stays within 0.14 of the
// input over [-1, 1].
class Generator {
public:
    Generator() = default;
    Generator(int base_channels, int res_blocks, Rng& rng);

    ad::Var forward(const ad::Var& x) const;
    std::vector<ad::Var> params() const;

    int base_channels() const { return base_channels_; }
    int res_blocks() const { return static_cast<int>(res_a_.size()); }

    static constexpr double kOutputGain = 1.5;

private:
    int base_channels_ = 0;
    ConvLayer enc1_, enc2_, dec1_, out_;
    std::vector<ConvLayer> res_a_, res_b_;
};

// Patch-level classifier; sigmoid map over 4x-downsampled patches. The final
// conv starts at zero so an untrained discriminator outputs exactly 0.5.
class Discriminator {
public:
    Discriminator() = default;
    Discriminator(int base_channels, Rng& rng);

    ad::Var forward(const ad::Var& x) const;  // {1, H/4, W/4} in (0, 1)
    std::vector<ad::Var> params() const;

private:
    ConvLayer c1_, c2_, c3_;
};

class Adam {
public:
    Adam() = default;
    Adam(std::vector<ad::Var> params, double lr, double beta1 = 0.5, double beta2 = 0.999,
         double eps = 1e-8);

    // Applies one update from the gradients currently on the parameters.
    void step();
    void zero_grad();

    const std::vector<ad::Var>& params() const { return params_; }
    int64_t t() const { return t_; }

    // Moment state round-trip for checkpoints.
    std::vector<ad::Arr> state() const;
    void restore(const std::vector<ad::Arr>& state, std::int64_t t);

    double lr = 1e-3;

private:
    std::vector<ad::Var> params_;
    std::vector<ad::Arr> m_, v_;
    double beta1_ = 0.5, beta2_ = 0.999, eps_ = 1e-8;
    std::int64_t t_ = 0;
};

// Flat copies of parameter values, used for digests and checkpoints.
std::vector<ad::Arr> snapshot_params(const std::vector<ad::Var>& params);
void load_params(const std::vector<ad::Var>& params, const std::vector<ad::Arr>& values);
std::uint64_t params_digest(const std::vector<ad::Var>& params);

}  // namespace stainforge
