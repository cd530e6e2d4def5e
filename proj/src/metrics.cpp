#include "stainforge/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <set>

#include <nlohmann/json.hpp>

#include "stainforge/cache.hpp"
#include "stainforge/png_io.hpp"

namespace stainforge {

namespace {

using json = nlohmann::ordered_json;

Eigen::VectorXd gaussian_kernel(int size, double sigma) {
    Eigen::VectorXd k(size);
    const double c = (size - 1) / 2.0;
    for (int i = 0; i < size; ++i) k[i] = std::exp(-(i - c) * (i - c) / (2.0 * sigma * sigma));
    return k / k.sum();
}

int window_for(Eigen::Index h, Eigen::Index w) {
    int win = static_cast<int>(std::min<Eigen::Index>({11, h, w}));
    if (win % 2 == 0) --win;
    if (win < 1) throw InputError("similarity metric: image too small");
    return win;
}

// Separable 'valid' filtering: rows then columns.
Plane filter_valid(const Plane& p, const Eigen::VectorXd& k) {
    const int n = static_cast<int>(k.size());
    const Eigen::Index ho = p.rows() - n + 1, wo = p.cols() - n + 1;
    Plane tmp(p.rows(), wo);
    for (Eigen::Index y = 0; y < p.rows(); ++y)
        for (Eigen::Index x = 0; x < wo; ++x) {
            double s = 0.0;
            for (int i = 0; i < n; ++i) s += k[i] * p(y, x + i);
            tmp(y, x) = s;
        }
    Plane out(ho, wo);
    for (Eigen::Index y = 0; y < ho; ++y)
        for (Eigen::Index x = 0; x < wo; ++x) {
            double s = 0.0;
            for (int i = 0; i < n; ++i) s += k[i] * tmp(y + i, x);
            out(y, x) = s;
        }
    return out;
}

struct SsimMaps {
    Plane luminance;  // (2 mu_a mu_b + c1) / (mu_a^2 + mu_b^2 + c1)
    Plane cs;         // (2 sigma_ab + c2) / (sigma_a^2 + sigma_b^2 + c2)
};

SsimMaps ssim_maps(const Plane& a, const Plane& b, double data_range, int win) {
    const double c1 = (0.01 * data_range) * (0.01 * data_range);
    const double c2 = (0.03 * data_range) * (0.03 * data_range);
    const Eigen::VectorXd k = gaussian_kernel(win, 1.5);
    Plane mu_a = filter_valid(a, k);
    Plane mu_b = filter_valid(b, k);
    Plane var_a = filter_valid(a.square(), k) - mu_a.square();
    Plane var_b = filter_valid(b.square(), k) - mu_b.square();
    Plane cov = filter_valid(a * b, k) - mu_a * mu_b;
    SsimMaps m;
    m.luminance = (2.0 * mu_a * mu_b + c1) / (mu_a.square() + mu_b.square() + c1);
    m.cs = (2.0 * cov + c2) / (var_a + var_b + c2);
    return m;
}

void check_pair(const ImagePatch& a, const ImagePatch& b, const char* op) {
    if (!a.same_shape(b)) throw InputError(std::string(op) + ": shape mismatch");
}

constexpr double kMsSsimWeights[5] = {0.0448, 0.2856, 0.3001, 0.2363, 0.1333};

ImagePatch downsample2(const ImagePatch& p) {
    const Eigen::Index ho = p.height() / 2, wo = p.width() / 2;
    ImagePatch out(ho, wo, p.range);
    for (int c = 0; c < 3; ++c)
        for (Eigen::Index y = 0; y < ho; ++y)
            for (Eigen::Index x = 0; x < wo; ++x)
                out.ch[static_cast<std::size_t>(c)](y, x) =
                    0.25 * (p.ch[static_cast<std::size_t>(c)](2 * y, 2 * x) +
                            p.ch[static_cast<std::size_t>(c)](2 * y, 2 * x + 1) +
                            p.ch[static_cast<std::size_t>(c)](2 * y + 1, 2 * x) +
                            p.ch[static_cast<std::size_t>(c)](2 * y + 1, 2 * x + 1));
    return out;
}

}  // namespace

double ssim(const ImagePatch& a, const ImagePatch& b, double data_range) {
    check_pair(a, b, "ssim");
    const int win = window_for(a.height(), a.width());
    double acc = 0.0;
    for (int c = 0; c < 3; ++c) {
        SsimMaps m = ssim_maps(a.ch[static_cast<std::size_t>(c)],
                               b.ch[static_cast<std::size_t>(c)], data_range, win);
        acc += (m.luminance * m.cs).mean();
    }
    return acc / 3.0;
}

double css(const ImagePatch& a, const ImagePatch& b, double data_range) {
    check_pair(a, b, "css");
    const int win = window_for(a.height(), a.width());
    double acc = 0.0;
    for (int c = 0; c < 3; ++c) {
        SsimMaps m = ssim_maps(a.ch[static_cast<std::size_t>(c)],
                               b.ch[static_cast<std::size_t>(c)], data_range, win);
        acc += m.cs.mean();
    }
    return acc / 3.0;
}

int max_ms_ssim_scales(Eigen::Index h, Eigen::Index w) {
    int scales = 0;
    for (int s = 1; s <= 5; ++s) {
        const Eigen::Index need = 10 * (Eigen::Index(1) << (s - 1)) + 1;
        if (h >= need && w >= need) scales = s;
    }
    return scales;
}

double ms_ssim(const ImagePatch& a, const ImagePatch& b, double data_range, int scales) {
    check_pair(a, b, "ms_ssim");
    if (scales < 1 || scales > 5) throw InputError("ms_ssim: scales must be in [1, 5]");
    const Eigen::Index need = 10 * (Eigen::Index(1) << (scales - 1)) + 1;
    if (a.height() < need || a.width() < need)
        throw InputError("ms_ssim: image too small for " + std::to_string(scales) +
                         " scales; minimum dimension is " + std::to_string(need));
    double wsum = 0.0;
    for (int s = 0; s < scales; ++s) wsum += kMsSsimWeights[s];

    ImagePatch ca = a, cb = b;
    double result = 1.0;
    for (int s = 0; s < scales; ++s) {
        const double weight = kMsSsimWeights[s] / wsum;
        const int win = window_for(ca.height(), ca.width());
        double level = 0.0;
        for (int c = 0; c < 3; ++c) {
            SsimMaps m = ssim_maps(ca.ch[static_cast<std::size_t>(c)],
                                   cb.ch[static_cast<std::size_t>(c)], data_range, win);
            if (s == scales - 1)
                level += (m.luminance * m.cs).mean();
            else
                level += m.cs.mean();
        }
        level /= 3.0;
        level = std::max(0.0, level);  // negative cs means have no real-valued power
        result *= std::pow(level, weight);
        if (s != scales - 1) {
            ca = downsample2(ca);
            cb = downsample2(cb);
        }
    }
    return result;
}

double psnr(const ImagePatch& a, const ImagePatch& b, double data_range) {
    check_pair(a, b, "psnr");
    const double mse = mean_sq_diff(a, b);
    if (mse == 0.0) return 100.0;
    return std::min(100.0, 10.0 * std::log10(data_range * data_range / mse));
}

void FeatureAccumulator::add(const Eigen::VectorXd& feature) {
    if (n_ == 0) {
        sum_ = Eigen::VectorXd::Zero(feature.size());
        outer_ = Eigen::MatrixXd::Zero(feature.size(), feature.size());
    }
    if (feature.size() != sum_.size())
        throw InputError("FeatureAccumulator: inconsistent feature dimension");
    sum_ += feature;
    outer_ += feature * feature.transpose();
    ++n_;
}

FeatureStats FeatureAccumulator::finalize() const {
    if (n_ < 2) throw InputError("FeatureAccumulator: need at least 2 samples");
    FeatureStats s;
    s.count = n_;
    const double n = static_cast<double>(n_);
    s.mean = sum_ / n;
    Eigen::MatrixXd cov = (outer_ - n * s.mean * s.mean.transpose()) / (n - 1.0);
    s.cov = 0.5 * (cov + cov.transpose());
    return s;
}

double frechet_distance(const FeatureStats& s1, const FeatureStats& s2) {
    if (s1.mean.size() != s2.mean.size())
        throw InputError("frechet_distance: feature dimension mismatch");
    constexpr double kPsdTol = 1e-6;
    auto sym = [](const Eigen::MatrixXd& m) { return (0.5 * (m + m.transpose())).eval(); };
    const Eigen::MatrixXd c1 = sym(s1.cov);
    const Eigen::MatrixXd c2 = sym(s2.cov);

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es1(c1);
    Eigen::VectorXd ev1 = es1.eigenvalues();
    for (Eigen::Index i = 0; i < ev1.size(); ++i) {
        if (ev1[i] < -kPsdTol)
            throw NumericError("frechet_distance: covariance not PSD, eigenvalue " +
                               std::to_string(ev1[i]));
        ev1[i] = std::max(0.0, ev1[i]);
    }
    const Eigen::MatrixXd sqrt1 =
        es1.eigenvectors() * ev1.cwiseSqrt().asDiagonal() * es1.eigenvectors().transpose();

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es2(sym(sqrt1 * c2 * sqrt1));
    double tr_sqrt = 0.0;
    for (Eigen::Index i = 0; i < es2.eigenvalues().size(); ++i) {
        const double ev = es2.eigenvalues()[i];
        if (ev < -kPsdTol)
            throw NumericError("frechet_distance: product matrix not PSD, eigenvalue " +
                               std::to_string(ev));
        tr_sqrt += std::sqrt(std::max(0.0, ev));
    }
    const double d2 = (s1.mean - s2.mean).squaredNorm() + c1.trace() + c2.trace() - 2.0 * tr_sqrt;
    return std::max(0.0, d2);
}

namespace {

// Accumulation runs in a canonical (lexicographically sorted) feature order,
// which makes the floating-point result exactly independent of image order.
// Features go through the embedding cache when STAINFORGE_CACHE is set.
FeatureStats ordered_stats(const std::vector<ImagePatch>& set, const EncoderBackend& backend) {
    std::unique_ptr<EmbeddingCache> cache;
    if (auto dir = EmbeddingCache::dir_from_env())
        cache = std::make_unique<EmbeddingCache>(*dir, backend);
    std::vector<Eigen::VectorXd> feats;
    feats.reserve(set.size());
    for (const auto& p : set)
        feats.push_back(encode_image_cached(p, backend, cache.get()).values);
    std::sort(feats.begin(), feats.end(), [](const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
        return std::lexicographical_compare(a.data(), a.data() + a.size(), b.data(),
                                            b.data() + b.size());
    });
    FeatureAccumulator acc;
    for (const auto& f : feats) acc.add(f);
    return acc.finalize();
}

}  // namespace

double fid(const std::vector<ImagePatch>& set_a, const std::vector<ImagePatch>& set_b,
           const EncoderBackend& backend) {
    if (set_a.size() < 2 || set_b.size() < 2)
        throw InputError("fid: need at least 2 images per side");
    return frechet_distance(ordered_stats(set_a, backend), ordered_stats(set_b, backend));
}

MetricReport evaluate_pairset(const std::filesystem::path& pred_dir,
                              const std::filesystem::path& ref_dir,
                              const std::vector<std::string>& metric_names,
                              const EncoderBackend& backend, double data_range,
                              const std::string& config_echo) {
    namespace fs = std::filesystem;
    const std::set<std::string> valid{"ssim", "css", "msssim", "psnr", "fid"};
    for (const auto& m : metric_names)
        if (!valid.count(m)) throw InputError("evaluate_pairset: unknown metric " + m);

    auto list_pngs = [](const fs::path& dir) {
        if (!fs::is_directory(dir))
            throw InputError("evaluate_pairset: not a directory: " + dir.string());
        std::vector<std::string> names;
        for (const auto& e : fs::directory_iterator(dir))
            if (e.is_regular_file() && e.path().extension() == ".png")
                names.push_back(e.path().filename().string());
        std::sort(names.begin(), names.end());
        return names;
    };
    const auto pred_names = list_pngs(pred_dir);
    const auto ref_names = list_pngs(ref_dir);
    std::vector<std::string> orphans;
    std::set<std::string> ref_set(ref_names.begin(), ref_names.end());
    std::set<std::string> pred_set(pred_names.begin(), pred_names.end());
    for (const auto& n : pred_names)
        if (!ref_set.count(n)) orphans.push_back("pred:" + n);
    for (const auto& n : ref_names)
        if (!pred_set.count(n)) orphans.push_back("ref:" + n);
    if (!orphans.empty()) {
        std::string msg = "evaluate_pairset: unmatched filenames:";
        for (const auto& o : orphans) msg += " " + o;
        throw InputError(msg);
    }
    if (pred_names.empty()) throw InputError("evaluate_pairset: empty image set");

    const bool want_fid =
        std::find(metric_names.begin(), metric_names.end(), "fid") != metric_names.end();

    MetricReport report;
    report.data_range = data_range;
    report.config_echo = config_echo;
    report.backend_info = backend.kind() == BackendKind::toy
                              ? "toy(dim=" + std::to_string(backend.dim()) +
                                    ",seed=" + std::to_string(backend.seed()) + ")"
                              : "pretrained(" + backend.weights_path() + ")";

    std::vector<ImagePatch> preds, refs;
    for (const auto& name : pred_names) {
        ImagePatch p = read_png(pred_dir / name);
        ImagePatch r = read_png(ref_dir / name);
        PairRecord rec;
        rec.name = name;
        for (const auto& m : metric_names) {
            if (m == "ssim") rec.values["ssim"] = ssim(p, r, data_range);
            if (m == "css") rec.values["css"] = css(p, r, data_range);
            if (m == "msssim")
                rec.values["msssim"] =
                    ms_ssim(p, r, data_range,
                            std::max(1, std::min(max_ms_ssim_scales(p.height(), p.width()),
                                                 max_ms_ssim_scales(r.height(), r.width()))));
            if (m == "psnr") rec.values["psnr"] = psnr(p, r, data_range);
        }
        report.pairs.push_back(std::move(rec));
        if (want_fid) {
            preds.push_back(std::move(p));
            refs.push_back(std::move(r));
        }
    }
    if (want_fid) report.fid_value = fid(preds, refs, backend);

    for (const auto& m : metric_names) {
        if (m == "fid") continue;
        MetricAggregate agg;
        double sum = 0.0, sumsq = 0.0;
        for (const auto& rec : report.pairs) {
            const double v = rec.values.at(m);
            sum += v;
            sumsq += v * v;
        }
        agg.count = static_cast<std::int64_t>(report.pairs.size());
        const double n = static_cast<double>(agg.count);
        agg.mean = sum / n;
        agg.stddev = std::sqrt(std::max(0.0, sumsq / n - agg.mean * agg.mean));
        report.aggregate[m] = agg;
    }
    return report;
}

std::string report_to_json(const MetricReport& r) {
    json j;
    j["format"] = "stainforge-metric-report/1";
    j["config"] = json::parse(r.config_echo.empty() ? "{}" : r.config_echo);
    j["backend"] = r.backend_info;
    j["data_range"] = r.data_range;
    json pairs = json::array();
    for (const auto& p : r.pairs) {
        json e;
        e["name"] = p.name;
        for (const auto& [k, v] : p.values) e[k] = v;
        pairs.push_back(e);
    }
    j["pairs"] = pairs;
    json agg;
    for (const auto& [k, v] : r.aggregate) {
        agg[k] = {{"mean", v.mean}, {"std", v.stddev}, {"count", v.count}};
    }
    j["aggregate"] = agg;
    if (r.fid_value >= 0.0) j["fid"] = r.fid_value;
    return j.dump(2) + "\n";
}

MetricReport report_from_json(const std::string& text) {
    json j = json::parse(text);
    if (j.value("format", "") != "stainforge-metric-report/1")
        throw IoError("report_from_json: unknown report format");
    MetricReport r;
    r.config_echo = j["config"].dump();
    r.backend_info = j["backend"].get<std::string>();
    r.data_range = j["data_range"].get<double>();
    for (const auto& e : j["pairs"]) {
        PairRecord rec;
        rec.name = e["name"].get<std::string>();
        for (auto it = e.begin(); it != e.end(); ++it)
            if (it.key() != "name") rec.values[it.key()] = it.value().get<double>();
        r.pairs.push_back(std::move(rec));
    }
    for (auto it = j["aggregate"].begin(); it != j["aggregate"].end(); ++it) {
        MetricAggregate a;
        a.mean = (*it)["mean"].get<double>();
        a.stddev = (*it)["std"].get<double>();
        a.count = (*it)["count"].get<std::int64_t>();
        r.aggregate[it.key()] = a;
    }
    if (j.contains("fid")) r.fid_value = j["fid"].get<double>();
    return r;
}

}  // namespace stainforge
