#include "stainforge/nets.hpp"

#include <cmath>

namespace stainforge {

ConvLayer make_conv(int cin, int cout, int k, int stride, int pad, Rng& rng, double weight_std,
                    bool zero_init) {
    ConvLayer c;
    c.cin = cin;
    c.cout = cout;
    c.kh = c.kw = k;
    c.stride = stride;
    c.pad = pad;
    ad::Arr w(cout * cin * k * k);
    for (Eigen::Index i = 0; i < w.size(); ++i) w[i] = zero_init ? 0.0 : rng.gaussian(0.0, weight_std);
    c.w = ad::leaf(std::move(w), ad::Dims{1, cout, cin * k * k});
    c.b = ad::leaf(ad::Arr::Zero(cout), ad::vec_dims(cout));
    return c;
}

Generator::Generator(int base_channels, int res_blocks, Rng& rng)
    : base_channels_(base_channels) {
    const int c = base_channels, c2 = 2 * base_channels;
    enc1_ = make_conv(3, c, 3, 1, 1, rng);
    enc2_ = make_conv(c, c2, 3, 2, 1, rng);
    for (int i = 0; i < res_blocks; ++i) {
        res_a_.push_back(make_conv(c2, c2, 3, 1, 1, rng));
        res_b_.push_back(make_conv(c2, c2, 3, 1, 1, rng, 0.02, /*zero_init=*/true));
    }
    dec1_ = make_conv(c2, c, 3, 1, 1, rng);
    out_ = make_conv(c, 3, 3, 1, 1, rng, 0.02, /*zero_init=*/true);
}

ad::Var Generator::forward(const ad::Var& x) const {
    ad::Var h = ad::vrelu(enc1_.apply(x));
    h = ad::vrelu(enc2_.apply(h));
    for (std::size_t i = 0; i < res_a_.size(); ++i) {
        ad::Var r = ad::vrelu(res_a_[i].apply(h));
        h = ad::add(h, res_b_[i].apply(r));
    }
    h = ad::vrelu(dec1_.apply(ad::upsample_nearest(h, 2)));
    ad::Var residual = out_.apply(h);
    return ad::vtanh(ad::mul_const(ad::add(x, residual), kOutputGain));
}

std::vector<ad::Var> Generator::params() const {
    std::vector<ad::Var> p{enc1_.w, enc1_.b, enc2_.w, enc2_.b};
    for (std::size_t i = 0; i < res_a_.size(); ++i) {
        p.push_back(res_a_[i].w);
        p.push_back(res_a_[i].b);
        p.push_back(res_b_[i].w);
        p.push_back(res_b_[i].b);
    }
    p.insert(p.end(), {dec1_.w, dec1_.b, out_.w, out_.b});
    return p;
}

Discriminator::Discriminator(int base_channels, Rng& rng) {
    const int c = base_channels, c2 = 2 * base_channels;
    c1_ = make_conv(3, c, 3, 2, 1, rng);
    c2_ = make_conv(c, c2, 3, 2, 1, rng);
    c3_ = make_conv(c2, 1, 3, 1, 1, rng, 0.02, /*zero_init=*/true);
}

ad::Var Discriminator::forward(const ad::Var& x) const {
    ad::Var h = ad::vlrelu(c1_.apply(x), 0.2);
    h = ad::vlrelu(c2_.apply(h), 0.2);
    return ad::vsigmoid(c3_.apply(h));
}

std::vector<ad::Var> Discriminator::params() const {
    return {c1_.w, c1_.b, c2_.w, c2_.b, c3_.w, c3_.b};
}

Adam::Adam(std::vector<ad::Var> params, double lr_, double beta1, double beta2, double eps)
    : lr(lr_), params_(std::move(params)), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (const auto& p : params_) {
        m_.push_back(ad::Arr::Zero(p->val.size()));
        v_.push_back(ad::Arr::Zero(p->val.size()));
    }
}

void Adam::step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
        auto& p = *params_[i];
        if (p.grad.size() != p.val.size()) continue;  // no gradient this step
        m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * p.grad;
        v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * p.grad.square();
        p.val -= lr * (m_[i] / bc1) / ((v_[i] / bc2).sqrt() + eps_);
    }
}

void Adam::zero_grad() {
    for (auto& p : params_) p->grad = ad::Arr();
}

std::vector<ad::Arr> Adam::state() const {
    std::vector<ad::Arr> s;
    s.reserve(m_.size() + v_.size());
    for (const auto& m : m_) s.push_back(m);
    for (const auto& v : v_) s.push_back(v);
    return s;
}

void Adam::restore(const std::vector<ad::Arr>& state, std::int64_t t) {
    if (state.size() != m_.size() + v_.size())
        throw InputError("Adam::restore: state size mismatch");
    for (std::size_t i = 0; i < m_.size(); ++i) m_[i] = state[i];
    for (std::size_t i = 0; i < v_.size(); ++i) v_[i] = state[m_.size() + i];
    t_ = t;
}

std::vector<ad::Arr> snapshot_params(const std::vector<ad::Var>& params) {
    std::vector<ad::Arr> out;
    out.reserve(params.size());
    for (const auto& p : params) out.push_back(p->val);
    return out;
}

void load_params(const std::vector<ad::Var>& params, const std::vector<ad::Arr>& values) {
    if (params.size() != values.size()) throw InputError("load_params: size mismatch");
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i]->val.size() != values[i].size())
            throw InputError("load_params: parameter shape mismatch at index " +
                             std::to_string(i));
        params[i]->val = values[i];
    }
}

std::uint64_t params_digest(const std::vector<ad::Var>& params) {
    std::uint64_t h = fnv1a64("params");
    for (const auto& p : params)
        h = splitmix64(h ^ fnv1a64(p->val.data(),
                                   sizeof(double) * static_cast<std::size_t>(p->val.size())));
    return h;
}

}  // namespace stainforge
