#include "stainforge/vlm.hpp"

#include <cmath>

#include "stainforge/rng.hpp"

namespace stainforge {

namespace {

std::shared_ptr<const Eigen::MatrixXd> seeded_projection(int rows, int cols, std::uint64_t seed) {
    Rng rng(seed);
    auto m = std::make_shared<Eigen::MatrixXd>(rows, cols);
    const double scale = 1.0 / std::sqrt(static_cast<double>(cols));
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) (*m)(r, c) = rng.gaussian() * scale;
    return m;
}

void require_toy(const EncoderBackend& b, const char* op) {
    if (b.kind() != BackendKind::toy)
        throw CapabilityError(std::string(op) +
                              ": pretrained backend is a loading seam; external weights and an "
                              "adapter are required (toy backend covers the desk-scale suite)");
}

}  // namespace

EncoderBackend EncoderBackend::make_toy(int dim, std::uint64_t seed) {
    if (dim < 1) throw ConfigError("encoder dim must be >= 1");
    EncoderBackend b;
    b.kind_ = BackendKind::toy;
    b.dim_ = dim;
    b.seed_ = seed;
    b.image_proj = seeded_projection(dim, kStatsDim, derive_seed(seed, "toy.image_proj"));
    b.text_proj = seeded_projection(dim, dim + 1, derive_seed(seed, "toy.text_proj"));
    for (int l = 0; l < FeaturePyramid::kLevels; ++l)
        b.pyramid_mix[static_cast<std::size_t>(l)] = seeded_projection(
            kPyramidChannels, 3, derive_seed(seed, "toy.pyramid." + std::to_string(l)));
    return b;
}

EncoderBackend EncoderBackend::make_pretrained(int dim, std::string weights_path) {
    if (dim < 1) throw ConfigError("encoder dim must be >= 1");
    if (weights_path.empty())
        throw ConfigError("pretrained backend requires encoder.weights_path");
    EncoderBackend b;
    b.kind_ = BackendKind::pretrained;
    b.dim_ = dim;
    b.weights_path_ = std::move(weights_path);
    return b;
}

std::uint64_t EncoderBackend::digest() const {
    std::uint64_t h = fnv1a64("encoder");
    h ^= splitmix64(static_cast<std::uint64_t>(kind_));
    h ^= splitmix64(static_cast<std::uint64_t>(dim_));
    h ^= splitmix64(seed_);
    auto mix = [&h](const std::shared_ptr<const Eigen::MatrixXd>& m) {
        if (m)
            h ^= fnv1a64(m->data(), sizeof(double) * static_cast<std::size_t>(m->size()));
    };
    mix(image_proj);
    mix(text_proj);
    for (const auto& m : pyramid_mix) mix(m);
    return h;
}

ad::Var patch_to_var(const ImagePatch& patch, bool trainable) {
    const int h = static_cast<int>(patch.height());
    const int w = static_cast<int>(patch.width());
    ad::Arr flat(3 * h * w);
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                flat[(c * h + y) * w + x] = patch.ch[static_cast<std::size_t>(c)](y, x);
    ad::Dims d{3, h, w};
    return trainable ? ad::leaf(std::move(flat), d) : ad::constant(std::move(flat), d);
}

ImagePatch var_to_patch(const ad::Var& v, ValueRange range) {
    if (v->dims.c != 3) throw InputError("var_to_patch: expected 3 channels");
    const int h = v->dims.h, w = v->dims.w;
    ImagePatch p(h, w, range);
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                p.ch[static_cast<std::size_t>(c)](y, x) = v->val[(c * h + y) * w + x];
    return p;
}

ad::Var encode_image_var(const ad::Var& img, const EncoderBackend& backend) {
    require_toy(backend, "encode_image");
    const int h = img->dims.h, w = img->dims.w;
    if (img->dims.c != 3) throw InputError("encode_image: expected 3 channels");
    if (h % 4 != 0 || w % 4 != 0)
        throw InputError("encode_image: toy backend requires patch sides divisible by 4");
    ad::Var means = ad::avg_pool(img, h, w);                      // {3,1,1}
    ad::Var mean_sq = ad::avg_pool(ad::vsquare(img), h, w);       // {3,1,1}
    ad::Var vars = ad::sub(mean_sq, ad::vsquare(means));
    ad::Var blocks = ad::avg_pool(img, h / 4, w / 4);             // {3,4,4}
    ad::Var one = ad::constant_scalar(1.0);
    ad::Var stats = ad::concat({means, vars, blocks, one});       // {55}
    return ad::normalize(ad::matvec_const(backend.image_proj, stats));
}

Embedding encode_image(const ImagePatch& patch, const EncoderBackend& backend) {
    require_toy(backend, "encode_image");
    if (!all_finite(patch)) throw InputError("encode_image: non-finite pixel values");
    const double tol = 1e-9;
    for (const auto& c : patch.ch) {
        if (c.minCoeff() < patch.range.lo - tol || c.maxCoeff() > patch.range.hi + tol)
            throw InputError("encode_image: pixel values outside declared range");
    }
    ad::Var e = encode_image_var(patch_to_var(patch), backend);
    Embedding out;
    out.values = e->val.matrix();
    out.normalized = true;
    return out;
}

ad::Var encode_text_tokens_var(const ad::Var& tokens, const EncoderBackend& backend) {
    require_toy(backend, "encode_text_tokens");
    const int n = tokens->dims.h, d = tokens->dims.w;
    if (n < 1) throw InputError("encode_text_tokens: need at least one token");
    if (d != backend.dim())
        throw ConfigError("encode_text_tokens: token dimension does not match backend dim");
    ad::Var mean_tok = ad::avg_pool(tokens, n, 1);  // {1,1,D}
    ad::Var augmented = ad::concat({mean_tok, ad::constant_scalar(1.0)});
    return ad::normalize(ad::matvec_const(backend.text_proj, augmented));
}

Embedding encode_text_tokens(const Eigen::MatrixXd& tokens, const EncoderBackend& backend) {
    const int n = static_cast<int>(tokens.rows());
    const int d = static_cast<int>(tokens.cols());
    if (n < 1) throw InputError("encode_text_tokens: need at least one token");
    ad::Arr flat(n * d);
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < d; ++c) flat[r * d + c] = tokens(r, c);
    ad::Var e = encode_text_tokens_var(ad::constant(std::move(flat), ad::Dims{1, n, d}), backend);
    Embedding out;
    out.values = e->val.matrix();
    out.normalized = true;
    return out;
}

double exp_cos(const Embedding& a, const Embedding& b) {
    if (a.dim() != b.dim()) throw InputError("exp_cos: dimension mismatch");
    const double na = a.values.norm();
    const double nb = b.values.norm();
    if (na == 0.0 || nb == 0.0) throw InputError("exp_cos: zero-norm embedding");
    return std::exp(a.values.dot(b.values) / (na * nb));
}

ad::Var exp_cos_var(const ad::Var& a, const ad::Var& b) {
    return ad::vexp(ad::cosine(a, b));
}

std::array<ad::Var, FeaturePyramid::kLevels> encode_pyramid_var(const ad::Var& img,
                                                                const EncoderBackend& backend) {
    require_toy(backend, "encode_pyramid");
    if (img->dims.c != 3) throw InputError("encode_pyramid: expected 3 channels");
    std::array<ad::Var, FeaturePyramid::kLevels> out;
    ad::Var level = img;
    for (int l = 0; l < FeaturePyramid::kLevels; ++l) {
        if (l > 0) level = ad::avg_pool(level, 2, 2);
        // Fixed 1x1 channel mix as a constant-weight convolution.
        const auto& M = *backend.pyramid_mix[static_cast<std::size_t>(l)];
        ad::Arr wflat(M.rows() * M.cols());
        for (int r = 0; r < M.rows(); ++r)
            for (int c = 0; c < M.cols(); ++c) wflat[r * M.cols() + c] = M(r, c);
        ad::Var w = ad::constant(std::move(wflat),
                                 ad::Dims{1, static_cast<int>(M.rows()), static_cast<int>(M.cols())});
        ad::Var b = ad::constant(ad::Arr::Zero(M.rows()), ad::vec_dims(static_cast<int>(M.rows())));
        out[static_cast<std::size_t>(l)] = ad::conv2d(level, w, b, 1, 1, 1, 0);
    }
    return out;
}

FeaturePyramid encode_pyramid(const ImagePatch& patch, const EncoderBackend& backend) {
    if (!all_finite(patch)) throw InputError("encode_pyramid: non-finite pixel values");
    auto vars = encode_pyramid_var(patch_to_var(patch), backend);
    FeaturePyramid pyr;
    for (int l = 0; l < FeaturePyramid::kLevels; ++l) {
        const auto& v = vars[static_cast<std::size_t>(l)];
        FeatureMap fm;
        fm.channels = v->dims.c;
        fm.height = v->dims.h;
        fm.width = v->dims.w;
        fm.data = v->val;
        pyr.levels[static_cast<std::size_t>(l)] = std::move(fm);
        pyr.descriptor[static_cast<std::size_t>(l)] =
            "avg-pool 1/" + std::to_string(1 << l) + " + fixed 8ch mix";
    }
    return pyr;
}

double pyramid_level_distance(const FeaturePyramid& a, const FeaturePyramid& b, int level) {
    if (level < 0 || level >= FeaturePyramid::kLevels)
        throw InputError("pyramid_level_distance: bad level");
    const auto& fa = a.levels[static_cast<std::size_t>(level)];
    const auto& fb = b.levels[static_cast<std::size_t>(level)];
    if (fa.data.size() != fb.data.size())
        throw InputError("pyramid_level_distance: level shape mismatch");
    return std::sqrt((fa.data - fb.data).square().sum());
}

}  // namespace stainforge
