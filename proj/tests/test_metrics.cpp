#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "stainforge/metrics.hpp"
#include "stainforge/png_io.hpp"
#include "stainforge/rng.hpp"

using namespace stainforge;
namespace fs = std::filesystem;

namespace {

ImagePatch random_patch(Rng& rng, int h, int w) {
    ImagePatch p(h, w, ValueRange::unit());
    for (auto& c : p.ch)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) c(y, x) = rng.uniform();
    return p;
}

// Reference SSIM: direct per-window loops, no separable filtering, written
// independently of the library implementation.
struct RefSsim {
    double ssim = 0.0, cs = 0.0;
};

RefSsim reference_ssim(const ImagePatch& a, const ImagePatch& b, double range, int win) {
    std::vector<double> kernel1d(static_cast<std::size_t>(win));
    const double center = (win - 1) / 2.0;
    double ksum = 0.0;
    for (int i = 0; i < win; ++i) {
        kernel1d[static_cast<std::size_t>(i)] =
            std::exp(-(i - center) * (i - center) / (2.0 * 1.5 * 1.5));
        ksum += kernel1d[static_cast<std::size_t>(i)];
    }
    for (auto& k : kernel1d) k /= ksum;

    const double c1 = (0.01 * range) * (0.01 * range);
    const double c2 = (0.03 * range) * (0.03 * range);
    const auto h = a.height(), w = a.width();
    RefSsim out;
    for (int c = 0; c < 3; ++c) {
        double ssim_sum = 0.0, cs_sum = 0.0;
        int count = 0;
        for (Eigen::Index y = 0; y + win <= h; ++y)
            for (Eigen::Index x = 0; x + win <= w; ++x) {
                double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
                for (int dy = 0; dy < win; ++dy)
                    for (int dx = 0; dx < win; ++dx) {
                        const double wgt = kernel1d[static_cast<std::size_t>(dy)] *
                                           kernel1d[static_cast<std::size_t>(dx)];
                        const double va = a.ch[static_cast<std::size_t>(c)](y + dy, x + dx);
                        const double vb = b.ch[static_cast<std::size_t>(c)](y + dy, x + dx);
                        ma += wgt * va;
                        mb += wgt * vb;
                        saa += wgt * va * va;
                        sbb += wgt * vb * vb;
                        sab += wgt * va * vb;
                    }
                const double var_a = saa - ma * ma;
                const double var_b = sbb - mb * mb;
                const double cov = sab - ma * mb;
                const double lum = (2 * ma * mb + c1) / (ma * ma + mb * mb + c1);
                const double csv = (2 * cov + c2) / (var_a + var_b + c2);
                ssim_sum += lum * csv;
                cs_sum += csv;
                ++count;
            }
        out.ssim += ssim_sum / count;
        out.cs += cs_sum / count;
    }
    out.ssim /= 3.0;
    out.cs /= 3.0;
    return out;
}

}  // namespace

TEST_CASE("ssim identities") {
    Rng rng(31);
    ImagePatch a = random_patch(rng, 32, 32);
    CHECK(ssim(a, a, 1.0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(css(a, a, 1.0) == doctest::Approx(1.0).epsilon(1e-12));

    ImagePatch ca(16, 16, ValueRange::unit()), cb(16, 16, ValueRange::unit());
    for (auto& c : ca.ch) c.setConstant(0.4);
    for (auto& c : cb.ch) c.setConstant(0.4);
    CHECK(ssim(ca, cb, 1.0) == doctest::Approx(1.0).epsilon(1e-12));

    ImagePatch wrong(16, 18, ValueRange::unit());
    CHECK_THROWS_AS(ssim(a, wrong, 1.0), InputError);
}

TEST_CASE("ssim and css match the reference implementation on random pairs") {
    Rng rng(32);
    for (int trial = 0; trial < 8; ++trial) {
        ImagePatch a = random_patch(rng, 24, 28);
        ImagePatch b = random_patch(rng, 24, 28);
        RefSsim ref = reference_ssim(a, b, 1.0, 11);
        CHECK(ssim(a, b, 1.0) == doctest::Approx(ref.ssim).epsilon(1e-9));
        CHECK(css(a, b, 1.0) == doctest::Approx(ref.cs).epsilon(1e-9));
    }
}

TEST_CASE("metrics are symmetric in their arguments") {
    Rng rng(33);
    ImagePatch a = random_patch(rng, 32, 32);
    ImagePatch b = random_patch(rng, 32, 32);
    CHECK(std::abs(ssim(a, b, 1.0) - ssim(b, a, 1.0)) < 1e-12);
    CHECK(std::abs(css(a, b, 1.0) - css(b, a, 1.0)) < 1e-12);
    CHECK(std::abs(psnr(a, b, 1.0) - psnr(b, a, 1.0)) < 1e-12);
    CHECK(std::abs(ms_ssim(a, b, 1.0, 2) - ms_ssim(b, a, 1.0, 2)) < 1e-12);
}

TEST_CASE("css ignores a constant luminance offset where ssim does not") {
    Rng rng(34);
    ImagePatch a = random_patch(rng, 32, 32);
    for (auto& c : a.ch) c = c * 0.5 + 0.1;  // keep room for the offset
    ImagePatch b = a;
    for (auto& c : b.ch) c += 0.25;
    const double s = ssim(a, b, 1.0);
    const double cs = css(a, b, 1.0);
    CHECK(cs == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(s < 0.999);
}

TEST_CASE("ms_ssim sizes, weights, and identity") {
    Rng rng(35);
    ImagePatch a = random_patch(rng, 64, 64);
    CHECK(ms_ssim(a, a, 1.0, 3) == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(max_ms_ssim_scales(161, 161) == 5);
    CHECK(max_ms_ssim_scales(160, 160) == 4);
    CHECK(max_ms_ssim_scales(64, 64) == 3);
    CHECK_THROWS_WITH_AS(ms_ssim(a, a, 1.0, 5), doctest::Contains("161"), InputError);

    // 3-scale value matches a scratch evaluation with renormalized weights
    ImagePatch b = random_patch(rng, 64, 64);
    const double w[5] = {0.0448, 0.2856, 0.3001, 0.2363, 0.1333};
    const double wsum = w[0] + w[1] + w[2];
    auto down2 = [](const ImagePatch& p) {
        ImagePatch o(p.height() / 2, p.width() / 2, p.range);
        for (int c = 0; c < 3; ++c)
            for (Eigen::Index y = 0; y < o.height(); ++y)
                for (Eigen::Index x = 0; x < o.width(); ++x)
                    o.ch[static_cast<std::size_t>(c)](y, x) =
                        0.25 * (p.ch[static_cast<std::size_t>(c)](2 * y, 2 * x) +
                                p.ch[static_cast<std::size_t>(c)](2 * y, 2 * x + 1) +
                                p.ch[static_cast<std::size_t>(c)](2 * y + 1, 2 * x) +
                                p.ch[static_cast<std::size_t>(c)](2 * y + 1, 2 * x + 1));
        return o;
    };
    ImagePatch a1 = a, b1 = b;
    double want = 1.0;
    for (int s = 0; s < 3; ++s) {
        RefSsim ref = reference_ssim(a1, b1, 1.0, 11);
        const double level = std::max(0.0, s == 2 ? ref.ssim : ref.cs);
        want *= std::pow(level, w[s] / wsum);
        if (s != 2) {
            a1 = down2(a1);
            b1 = down2(b1);
        }
    }
    CHECK(ms_ssim(a, b, 1.0, 3) == doctest::Approx(want).epsilon(1e-9));
}

TEST_CASE("psnr analytic values, cap, and noise monotonicity") {
    // MSE exactly 1 on a 255 range
    ImagePatch a(16, 16, {0.0, 255.0}), b(16, 16, {0.0, 255.0});
    for (auto& c : a.ch) c.setConstant(100.0);
    for (auto& c : b.ch) c.setConstant(101.0);
    CHECK(psnr(a, b, 255.0) == doctest::Approx(10.0 * std::log10(255.0 * 255.0)).epsilon(1e-12));
    CHECK(psnr(a, b, 255.0) == doctest::Approx(48.131).epsilon(1e-4));
    CHECK(psnr(a, a, 255.0) == 100.0);

    // exact hand-formula comparison on a random pair
    Rng rng(36);
    ImagePatch u = random_patch(rng, 16, 16);
    ImagePatch v = random_patch(rng, 16, 16);
    double mse = 0.0;
    for (int c = 0; c < 3; ++c) mse += (u.ch[static_cast<std::size_t>(c)] - v.ch[static_cast<std::size_t>(c)]).square().sum();
    mse /= 3 * 16 * 16;
    CHECK(psnr(u, v, 1.0) == doctest::Approx(10.0 * std::log10(1.0 / mse)).epsilon(1e-9));

    // strictly decreasing in noise amplitude
    ImagePatch base = random_patch(rng, 32, 32);
    for (auto& c : base.ch) c = c * 0.5 + 0.25;
    double prev = 1e9;
    for (double amp : {0.01, 0.02, 0.05, 0.1}) {
        ImagePatch noisy = base;
        Rng nrng(40);
        for (auto& c : noisy.ch)
            for (int y = 0; y < 32; ++y)
                for (int x = 0; x < 32; ++x)
                    c(y, x) = std::clamp(c(y, x) + amp * nrng.gaussian(), 0.0, 1.0);
        const double p = psnr(base, noisy, 1.0);
        CHECK(p < prev);
        prev = p;
    }
}

TEST_CASE("frechet_distance analytic identities") {
    const int d = 6;
    FeatureStats s1, s2;
    s1.mean = Eigen::VectorXd::Zero(d);
    s1.cov = Eigen::MatrixXd::Identity(d, d) * 0.5;
    s1.count = 10;
    s2 = s1;
    CHECK(frechet_distance(s1, s2) == doctest::Approx(0.0).epsilon(1e-12));

    // mean shift only
    Eigen::VectorXd v = Eigen::VectorXd::LinSpaced(d, -1.0, 1.0);
    s2.mean = s1.mean + v;
    CHECK(frechet_distance(s1, s2) == doctest::Approx(v.squaredNorm()).epsilon(1e-10));

    // isotropic covariances: d (sqrt(a) - sqrt(b))^2
    const double a = 0.7, b = 0.2;
    s2.mean = s1.mean;
    s1.cov = a * Eigen::MatrixXd::Identity(d, d);
    s2.cov = b * Eigen::MatrixXd::Identity(d, d);
    const double want = d * (std::sqrt(a) - std::sqrt(b)) * (std::sqrt(a) - std::sqrt(b));
    CHECK(frechet_distance(s1, s2) == doctest::Approx(want).epsilon(1e-10));

    // symmetry
    Rng rng(37);
    Eigen::MatrixXd m = Eigen::MatrixXd::NullaryExpr(
        d, d, [&](Eigen::Index, Eigen::Index) { return rng.gaussian(); });
    s1.cov = m * m.transpose() / d;
    s2.mean = v;
    CHECK(std::abs(frechet_distance(s1, s2) - frechet_distance(s2, s1)) < 1e-8);

    FeatureStats bad = s1;
    bad.cov = -Eigen::MatrixXd::Identity(d, d);
    CHECK_THROWS_AS(frechet_distance(bad, s2), NumericError);
}

TEST_CASE("feature accumulator matches a two-pass oracle") {
    Rng rng(38);
    const int d = 5, n = 40;
    std::vector<Eigen::VectorXd> feats;
    FeatureAccumulator acc;
    for (int i = 0; i < n; ++i) {
        Eigen::VectorXd f =
            Eigen::VectorXd::NullaryExpr(d, [&](Eigen::Index) { return rng.gaussian(); });
        feats.push_back(f);
        acc.add(f);
    }
    FeatureStats one_pass = acc.finalize();

    Eigen::VectorXd mean = Eigen::VectorXd::Zero(d);
    for (const auto& f : feats) mean += f;
    mean /= n;
    Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(d, d);
    for (const auto& f : feats) cov += (f - mean) * (f - mean).transpose();
    cov /= (n - 1);

    CHECK((one_pass.mean - mean).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((one_pass.cov - cov).cwiseAbs().maxCoeff() < 1e-9);

    FeatureAccumulator small;
    small.add(feats[0]);
    CHECK_THROWS_AS(small.finalize(), InputError);
}

TEST_CASE("fid: self-distance, split ordering, and shuffle invariance") {
    auto backend = EncoderBackend::make_toy(24, 7);
    Rng rng(39);
    std::vector<ImagePatch> all;
    for (int i = 0; i < 24; ++i) all.push_back(random_patch(rng, 16, 16));

    CHECK(fid(all, all, backend) < 1e-8);

    // two halves of one i.i.d. set score below a recolored set
    std::vector<ImagePatch> half1(all.begin(), all.begin() + 12);
    std::vector<ImagePatch> half2(all.begin() + 12, all.end());
    std::vector<ImagePatch> tinted;
    for (const auto& p : half2) {
        ImagePatch t = p;
        t.ch[0] = (t.ch[0] * 0.3 + 0.7).min(1.0);
        t.ch[1] = t.ch[1] * 0.4;
        tinted.push_back(t);
    }
    const double near = fid(half1, half2, backend);
    const double far = fid(half1, tinted, backend);
    CHECK(near > 0.0);
    CHECK(near < far);

    // ordering within a set does not change the value
    std::vector<ImagePatch> shuffled = half2;
    std::swap(shuffled[0], shuffled[7]);
    std::swap(shuffled[3], shuffled[11]);
    CHECK(fid(half1, shuffled, backend) == doctest::Approx(near).epsilon(1e-12));

    std::vector<ImagePatch> one(all.begin(), all.begin() + 1);
    CHECK_THROWS_AS(fid(one, half2, backend), InputError);
}

TEST_CASE("evaluate_pairset: identity report, round-trip, aggregates") {
    auto backend = EncoderBackend::make_toy(24, 7);
    const fs::path dir = fs::temp_directory_path() / "stainforge_test_eval";
    fs::remove_all(dir);
    fs::create_directories(dir / "pred");
    fs::create_directories(dir / "ref");
    Rng rng(41);
    for (int i = 0; i < 4; ++i) {
        ImagePatch p = random_patch(rng, 16, 16);
        char name[32];
        std::snprintf(name, sizeof(name), "p%02d.png", i);
        write_png(dir / "pred" / name, p);
        write_png(dir / "ref" / name, p);
    }
    MetricReport rep =
        evaluate_pairset(dir / "pred", dir / "ref", {"ssim", "psnr", "fid"}, backend, 1.0);
    CHECK(rep.pairs.size() == 4);
    CHECK(rep.aggregate.at("ssim").mean == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(rep.aggregate.at("psnr").mean == doctest::Approx(100.0).epsilon(1e-12));
    CHECK(rep.fid_value == doctest::Approx(0.0).epsilon(1e-8));

    // aggregates match a scratch recomputation
    double mean = 0.0;
    for (const auto& p : rep.pairs) mean += p.values.at("ssim");
    mean /= static_cast<double>(rep.pairs.size());
    CHECK(rep.aggregate.at("ssim").mean == doctest::Approx(mean).epsilon(1e-12));

    // lossless serialization round trip
    const std::string text = report_to_json(rep);
    MetricReport back = report_from_json(text);
    CHECK(report_to_json(back) == text);

    // orphan detection
    write_png(dir / "pred" / "extra.png", random_patch(rng, 16, 16));
    CHECK_THROWS_WITH_AS(
        evaluate_pairset(dir / "pred", dir / "ref", {"ssim"}, backend, 1.0),
        doctest::Contains("extra.png"), InputError);
    CHECK_THROWS_AS(evaluate_pairset(dir / "pred", dir / "ref", {"nope"}, backend, 1.0),
                    InputError);
    fs::remove_all(dir);
}
