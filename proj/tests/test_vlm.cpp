#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "stainforge/rng.hpp"
#include "stainforge/vlm.hpp"

using namespace stainforge;

namespace {

ImagePatch random_patch(Rng& rng, int h, int w, ValueRange range = ValueRange::unit()) {
    ImagePatch p(h, w, range);
    for (auto& c : p.ch)
        for (Eigen::Index y = 0; y < h; ++y)
            for (Eigen::Index x = 0; x < w; ++x) c(y, x) = rng.uniform(range.lo, range.hi);
    return p;
}

// Scratch re-derivation of the documented toy image-encoder formula, written
// with direct loops, independent of the autodiff path.
Eigen::VectorXd oracle_encode_image(const ImagePatch& p, int dim, std::uint64_t seed) {
    const auto h = p.height(), w = p.width();
    Eigen::VectorXd stats(55);
    for (int c = 0; c < 3; ++c) {
        double sum = 0.0, sumsq = 0.0;
        for (Eigen::Index y = 0; y < h; ++y)
            for (Eigen::Index x = 0; x < w; ++x) {
                const double v = p.ch[static_cast<std::size_t>(c)](y, x);
                sum += v;
                sumsq += v * v;
            }
        const double mean = sum / static_cast<double>(h * w);
        stats[c] = mean;
        stats[3 + c] = sumsq / static_cast<double>(h * w) - mean * mean;
    }
    const auto bh = h / 4, bw = w / 4;
    int idx = 6;
    for (int c = 0; c < 3; ++c)
        for (Eigen::Index by = 0; by < 4; ++by)
            for (Eigen::Index bx = 0; bx < 4; ++bx) {
                double s = 0.0;
                for (Eigen::Index y = by * bh; y < (by + 1) * bh; ++y)
                    for (Eigen::Index x = bx * bw; x < (bx + 1) * bw; ++x)
                        s += p.ch[static_cast<std::size_t>(c)](y, x);
                stats[idx++] = s / static_cast<double>(bh * bw);
            }
    stats[54] = 1.0;
    Rng rng(derive_seed(seed, "toy.image_proj"));
    Eigen::MatrixXd proj(dim, 55);
    const double scale = 1.0 / std::sqrt(55.0);
    for (int r = 0; r < dim; ++r)
        for (int c = 0; c < 55; ++c) proj(r, c) = rng.gaussian() * scale;
    Eigen::VectorXd e = proj * stats;
    return e / e.norm();
}

Eigen::VectorXd oracle_encode_tokens(const Eigen::MatrixXd& tokens, int dim,
                                     std::uint64_t seed) {
    Eigen::VectorXd mean(dim + 1);
    mean.head(dim) = tokens.colwise().mean().transpose();
    mean[dim] = 1.0;
    Rng rng(derive_seed(seed, "toy.text_proj"));
    Eigen::MatrixXd proj(dim, dim + 1);
    const double scale = 1.0 / std::sqrt(static_cast<double>(dim + 1));
    for (int r = 0; r < dim; ++r)
        for (int c = 0; c < dim + 1; ++c) proj(r, c) = rng.gaussian() * scale;
    Eigen::VectorXd e = proj * mean;
    return e / e.norm();
}

}  // namespace

TEST_CASE("encode_image returns unit-norm embeddings") {
    auto backend = EncoderBackend::make_toy(128, 7);
    Rng rng(11);
    for (int i = 0; i < 10; ++i) {
        ImagePatch p = random_patch(rng, 32, 32);
        Embedding e = encode_image(p, backend);
        CHECK(e.normalized);
        CHECK(e.dim() == 128);
        CHECK(std::abs(e.values.norm() - 1.0) < 1e-6);
        CHECK(e.values.allFinite());
    }
}

TEST_CASE("encode_image is deterministic per (input, seed)") {
    auto b1 = EncoderBackend::make_toy(64, 7);
    auto b2 = EncoderBackend::make_toy(64, 7);
    Rng rng(12);
    ImagePatch p = random_patch(rng, 64, 64);
    Embedding e1 = encode_image(p, b1);
    Embedding e2 = encode_image(p, b2);
    CHECK((e1.values - e2.values).cwiseAbs().maxCoeff() == 0.0);
    CHECK(b1.digest() == b2.digest());

    auto b3 = EncoderBackend::make_toy(64, 8);
    Embedding e3 = encode_image(p, b3);
    CHECK((e1.values - e3.values).cwiseAbs().maxCoeff() > 0.0);
    CHECK(b1.digest() != b3.digest());
}

TEST_CASE("toy image encoder matches the scratch oracle") {
    auto backend = EncoderBackend::make_toy(512, 7);

    // Constant-zero patch: statistics collapse to the constant feature only.
    ImagePatch zero(64, 64, ValueRange::unit());
    Embedding e = encode_image(zero, backend);
    Eigen::VectorXd want = oracle_encode_image(zero, 512, 7);
    CHECK(e.values.allFinite());
    CHECK((e.values - want).cwiseAbs().maxCoeff() < 1e-12);

    Rng rng(13);
    for (int trial = 0; trial < 5; ++trial) {
        ImagePatch p = random_patch(rng, 64, 64);
        Embedding got = encode_image(p, backend);
        Eigen::VectorXd oracle = oracle_encode_image(p, 512, 7);
        CHECK((got.values - oracle).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("toy text encoder matches the scratch oracle") {
    auto backend = EncoderBackend::make_toy(512, 7);
    Eigen::MatrixXd ones = Eigen::MatrixXd::Ones(16, 512);
    Embedding e = encode_text_tokens(ones, backend);
    Eigen::VectorXd want = oracle_encode_tokens(ones, 512, 7);
    CHECK((e.values - want).cwiseAbs().maxCoeff() < 1e-12);

    Embedding again = encode_text_tokens(ones, backend);
    CHECK((e.values - again.values).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("encode_text_tokens gradient matches finite differences") {
    const int dim = 24;
    auto backend = EncoderBackend::make_toy(dim, 3);
    Rng rng(14);
    const int n = 4;
    ad::Arr t0(n * dim);
    for (Eigen::Index i = 0; i < t0.size(); ++i) t0[i] = rng.gaussian(0.0, 0.5);
    Eigen::VectorXd probe(dim);
    for (int i = 0; i < dim; ++i) probe[i] = rng.gaussian();

    auto f = [&](const ad::Var& tokens) {
        return ad::dot(encode_text_tokens_var(tokens, backend),
                       ad::constant(probe.array(), ad::vec_dims(dim)));
    };
    ad::Var tokens = ad::leaf(t0, ad::Dims{1, n, dim});
    ad::Var loss = f(tokens);
    ad::backward(loss);
    for (Eigen::Index i = 0; i < t0.size(); i += 7) {
        const double h = 1e-6;
        ad::Arr tp = t0, tm = t0;
        tp[i] += h;
        tm[i] -= h;
        const double fp = f(ad::constant(tp, ad::Dims{1, n, dim}))->scalar();
        const double fm = f(ad::constant(tm, ad::Dims{1, n, dim}))->scalar();
        const double numeric = (fp - fm) / (2.0 * h);
        const double denom = std::max({1e-8, std::abs(numeric), std::abs(tokens->grad[i])});
        CHECK(std::abs(numeric - tokens->grad[i]) / denom < 1e-4);
    }
}

TEST_CASE("exp_cos analytic values and properties") {
    Embedding a, b;
    a.values = Eigen::Vector3d(1.0, 2.0, -0.5);
    b.values = a.values;
    CHECK(exp_cos(a, b) == doctest::Approx(std::exp(1.0)).epsilon(1e-12));

    b.values = -a.values;
    CHECK(exp_cos(a, b) == doctest::Approx(std::exp(-1.0)).epsilon(1e-12));

    a.values = Eigen::Vector3d(1.0, 0.0, 0.0);
    b.values = Eigen::Vector3d(0.0, 2.0, 0.0);
    CHECK(exp_cos(a, b) == doctest::Approx(1.0).epsilon(1e-12));

    Rng rng(15);
    for (int i = 0; i < 20; ++i) {
        Embedding u, v;
        u.values = Eigen::VectorXd::NullaryExpr(16, [&](Eigen::Index) { return rng.gaussian(); });
        v.values = Eigen::VectorXd::NullaryExpr(16, [&](Eigen::Index) { return rng.gaussian(); });
        CHECK(exp_cos(u, v) == doctest::Approx(exp_cos(v, u)).epsilon(1e-12));
        Embedding su;
        su.values = 3.7 * u.values;
        CHECK(exp_cos(su, v) == doctest::Approx(exp_cos(u, v)).epsilon(1e-9));
        CHECK(exp_cos(u, v) >= std::exp(-1.0) - 1e-12);
        CHECK(exp_cos(u, v) <= std::exp(1.0) + 1e-12);
    }

    Embedding z;
    z.values = Eigen::Vector3d::Zero();
    CHECK_THROWS_AS(exp_cos(z, a), InputError);
}

TEST_CASE("encode_pyramid has five shrinking levels and matches its oracle") {
    auto backend = EncoderBackend::make_toy(64, 7);
    ImagePatch p(32, 32, ValueRange::unit());
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < 32; ++y)
            for (int x = 0; x < 32; ++x)
                p.ch[static_cast<std::size_t>(c)](y, x) = ((x + y) % 2 == 0) ? 1.0 : 0.0;

    FeaturePyramid pyr = encode_pyramid(p, backend);
    CHECK(pyr.levels.size() == 5);
    for (int l = 1; l < 5; ++l) {
        CHECK(pyr.levels[static_cast<std::size_t>(l)].height <=
              pyr.levels[static_cast<std::size_t>(l - 1)].height);
        CHECK(pyr.levels[static_cast<std::size_t>(l)].channels == 8);
    }

    // Scratch oracle: repeated 2x2 ceil-mode averaging then the channel mix.
    std::array<Plane, 3> cur = p.ch;
    for (int l = 0; l < 5; ++l) {
        if (l > 0) {
            std::array<Plane, 3> next;
            const auto ph = (cur[0].rows() + 1) / 2, pw = (cur[0].cols() + 1) / 2;
            for (int c = 0; c < 3; ++c) {
                next[static_cast<std::size_t>(c)] = Plane::Zero(ph, pw);
                for (Eigen::Index y = 0; y < ph; ++y)
                    for (Eigen::Index x = 0; x < pw; ++x) {
                        double s = 0.0;
                        int n = 0;
                        for (Eigen::Index dy = 0; dy < 2; ++dy)
                            for (Eigen::Index dx = 0; dx < 2; ++dx) {
                                const auto yy = 2 * y + dy, xx = 2 * x + dx;
                                if (yy < cur[0].rows() && xx < cur[0].cols()) {
                                    s += cur[static_cast<std::size_t>(c)](yy, xx);
                                    ++n;
                                }
                            }
                        next[static_cast<std::size_t>(c)](y, x) = s / n;
                    }
            }
            cur = next;
        }
        const auto& mix = *backend.pyramid_mix[static_cast<std::size_t>(l)];
        const auto& fm = pyr.levels[static_cast<std::size_t>(l)];
        CHECK(fm.height == cur[0].rows());
        CHECK(fm.width == cur[0].cols());
        for (Eigen::Index y = 0; y < cur[0].rows(); ++y)
            for (Eigen::Index x = 0; x < cur[0].cols(); ++x)
                for (int oc = 0; oc < 8; ++oc) {
                    double want = 0.0;
                    for (int ic = 0; ic < 3; ++ic)
                        want += mix(oc, ic) * cur[static_cast<std::size_t>(ic)](y, x);
                    const double got = fm.data[(oc * fm.height + y) * fm.width + x];
                    CHECK(got == doctest::Approx(want).epsilon(1e-12));
                }
    }
}

TEST_CASE("pyramid distance is zero iff integer patches are identical") {
    auto backend = EncoderBackend::make_toy(32, 5);
    Rng rng(16);
    ImagePatch p(16, 16, ValueRange::unit());
    for (auto& c : p.ch)
        for (int y = 0; y < 16; ++y)
            for (int x = 0; x < 16; ++x) c(y, x) = static_cast<double>(rng.below(256)) / 255.0;
    ImagePatch q = p;
    FeaturePyramid pa = encode_pyramid(p, backend);
    FeaturePyramid pb = encode_pyramid(q, backend);
    for (int l = 0; l < 5; ++l) CHECK(pyramid_level_distance(pa, pb, l) == 0.0);

    q.ch[1](7, 3) += 1.0 / 255.0;
    FeaturePyramid pc = encode_pyramid(q, backend);
    CHECK(pyramid_level_distance(pa, pc, 0) > 0.0);
}

TEST_CASE("input validation") {
    auto backend = EncoderBackend::make_toy(32, 1);
    ImagePatch bad(8, 8, ValueRange::unit());
    bad.ch[0](0, 0) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(encode_image(bad, backend), InputError);

    ImagePatch out_of_range(8, 8, ValueRange::unit());
    out_of_range.ch[2](1, 1) = 2.0;
    CHECK_THROWS_AS(encode_image(out_of_range, backend), InputError);

    Eigen::MatrixXd empty_tokens(0, 32);
    CHECK_THROWS_AS(encode_text_tokens(empty_tokens, backend), InputError);

    Eigen::MatrixXd wrong_dim = Eigen::MatrixXd::Ones(4, 16);
    CHECK_THROWS_AS(encode_text_tokens(wrong_dim, backend), ConfigError);

    auto pre = EncoderBackend::make_pretrained(512, "/tmp/nonexistent-weights.bin");
    ImagePatch ok(8, 8, ValueRange::unit());
    CHECK_THROWS_AS(encode_image(ok, pre), CapabilityError);
    CHECK_THROWS_AS(encode_pyramid(ok, pre), CapabilityError);
}
