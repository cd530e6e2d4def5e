#include "stainforge/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "stainforge/png_io.hpp"
#include "stainforge/rng.hpp"

namespace stainforge {

namespace fs = std::filesystem;

SaturationStat saturation_stat_from_string(const std::string& s) {
    if (s == "mean") return SaturationStat::mean;
    if (s == "max") return SaturationStat::max;
    if (s == "median") return SaturationStat::median;
    throw ConfigError("filter.stat must be one of mean, max, median; got " + s);
}

std::string to_string(SaturationStat s) {
    switch (s) {
        case SaturationStat::mean: return "mean";
        case SaturationStat::max: return "max";
        case SaturationStat::median: return "median";
    }
    return "mean";
}

void TilingSpec::validate() const {
    if (patch < 1) throw ConfigError("tiling.patch must be >= 1");
    if (overlap < 0 || overlap >= patch)
        throw ConfigError("tiling.overlap must satisfy 0 <= overlap < patch");
    if (sat_threshold < 0.0 || sat_threshold > 255.0)
        throw ConfigError("tiling.sat_threshold must be in [0, 255]");
}

double saturation_statistic(const ImagePatch& patch, SaturationStat stat) {
    const ImagePatch unit = to_unit_range(patch);
    const Eigen::Index n = patch.pixels();
    std::vector<double> sat;
    sat.reserve(static_cast<std::size_t>(n));
    for (Eigen::Index y = 0; y < patch.height(); ++y)
        for (Eigen::Index x = 0; x < patch.width(); ++x) {
            const double r = unit.ch[0](y, x), g = unit.ch[1](y, x), b = unit.ch[2](y, x);
            const double mx = std::max({r, g, b});
            const double mn = std::min({r, g, b});
            sat.push_back(mx <= 0.0 ? 0.0 : 255.0 * (mx - mn) / mx);
        }
    switch (stat) {
        case SaturationStat::mean: {
            double s = 0.0;
            for (double v : sat) s += v;
            return s / static_cast<double>(sat.size());
        }
        case SaturationStat::max:
            return *std::max_element(sat.begin(), sat.end());
        case SaturationStat::median: {
            auto mid = sat.begin() + static_cast<std::ptrdiff_t>(sat.size() / 2);
            std::nth_element(sat.begin(), mid, sat.end());
            return *mid;
        }
    }
    return 0.0;
}

bool is_background(const ImagePatch& patch, double sat_threshold, SaturationStat stat) {
    return saturation_statistic(patch, stat) < sat_threshold;
}

std::int64_t grid_candidate_count(int dim_h, int dim_w, const TilingSpec& spec) {
    spec.validate();
    if (dim_h < spec.patch || dim_w < spec.patch) return 0;
    const std::int64_t ny = (dim_h - spec.patch) / spec.stride() + 1;
    const std::int64_t nx = (dim_w - spec.patch) / spec.stride() + 1;
    return ny * nx;
}

std::vector<ExtractedPatch> extract_patches(const ImagePatch& slide, const TilingSpec& spec) {
    spec.validate();
    const int h = static_cast<int>(slide.height());
    const int w = static_cast<int>(slide.width());
    if (h < spec.patch || w < spec.patch)
        throw InputError("extract_patches: slide smaller than patch size");
    std::vector<ExtractedPatch> out;
    const int s = spec.stride();
    for (int y = 0; y + spec.patch <= h; y += s) {
        for (int x = 0; x + spec.patch <= w; x += s) {
            ImagePatch p(spec.patch, spec.patch, slide.range);
            for (int c = 0; c < 3; ++c)
                p.ch[static_cast<std::size_t>(c)] =
                    slide.ch[static_cast<std::size_t>(c)].block(y, x, spec.patch, spec.patch);
            p.domain = slide.domain;
            if (!is_background(p, spec.sat_threshold, spec.stat))
                out.push_back({std::move(p), x, y});
        }
    }
    return out;
}

PatchManifest read_manifest(const fs::path& path) {
    std::ifstream f(path);
    if (!f) throw IoError("read_manifest: cannot open " + path.string());
    PatchManifest m;
    m.base_dir = path.parent_path();
    std::set<std::string> seen;
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ss(line);
        ManifestRecord r;
        std::string domain_s, x_s, y_s;
        if (!std::getline(ss, r.path, '\t') || !std::getline(ss, domain_s, '\t') ||
            !std::getline(ss, r.slide_id, '\t') || !std::getline(ss, x_s, '\t') ||
            !std::getline(ss, y_s, '\t') || !std::getline(ss, r.split, '\t'))
            throw InputError("read_manifest: malformed record at line " + std::to_string(lineno));
        try {
            r.domain = std::stoi(domain_s);
            r.x = std::stoi(x_s);
            r.y = std::stoi(y_s);
        } catch (const std::exception&) {
            throw InputError("read_manifest: bad numeric field at line " + std::to_string(lineno));
        }
        const std::string key =
            r.slide_id + "@" + std::to_string(r.x) + "," + std::to_string(r.y);
        if (!seen.insert(key).second)
            throw InputError("read_manifest: duplicate (slide, origin) " + key + " at line " +
                             std::to_string(lineno));
        if (!fs::exists(m.base_dir / r.path))
            throw InputError("read_manifest: missing patch file " + (m.base_dir / r.path).string());
        m.records.push_back(std::move(r));
    }
    return m;
}

void write_manifest(const fs::path& path, const PatchManifest& manifest) {
    fs::create_directories(path.parent_path());
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream f(tmp);
        if (!f) throw IoError("write_manifest: cannot open " + tmp.string());
        for (const auto& r : manifest.records)
            f << r.path << '\t' << r.domain << '\t' << r.slide_id << '\t' << r.x << '\t' << r.y
              << '\t' << r.split << '\n';
        if (!f) throw IoError("write_manifest: write failed");
    }
    fs::rename(tmp, path);
}

namespace {

// Soft-blob structure field in [0, 1]; higher means denser "tissue".
Plane render_structure(Rng& rng, int size) {
    Plane s = Plane::Zero(size, size);
    const int blobs = 6 + static_cast<int>(rng.below(6));
    for (int i = 0; i < blobs; ++i) {
        const double cx = rng.uniform(0.0, size - 1.0);
        const double cy = rng.uniform(0.0, size - 1.0);
        const double r = rng.uniform(size / 10.0, size / 4.0);
        const double amp = rng.uniform(0.5, 1.0);
        for (int y = 0; y < size; ++y)
            for (int x = 0; x < size; ++x) {
                const double d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
                s(y, x) += amp * std::exp(-d2 / (2.0 * r * r));
            }
    }
    // Low-frequency ripple so flat regions still carry texture.
    const double fx = rng.uniform(1.0, 3.0), fy = rng.uniform(1.0, 3.0);
    const double ph = rng.uniform(0.0, 6.28318);
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x)
            s(y, x) += 0.15 * std::sin(6.28318 * (fx * x + fy * y) / size + ph);
    const double lo = s.minCoeff(), hi = s.maxCoeff();
    if (hi > lo) s = (s - lo) / (hi - lo);
    return s;
}

ImagePatch colorize(const Plane& s, const std::array<double, 3>& base,
                    const std::array<double, 3>& tint, int domain) {
    ImagePatch img(s.rows(), s.cols(), ValueRange::unit());
    for (int c = 0; c < 3; ++c)
        img.ch[static_cast<std::size_t>(c)] =
            (base[static_cast<std::size_t>(c)] - s * tint[static_cast<std::size_t>(c)])
                .min(1.0)
                .max(0.0);
    img.domain = domain;
    return img;
}

}  // namespace

PatchManifest synth_stain_dataset(std::uint64_t seed, int count, int size,
                                  const fs::path& out_dir) {
    if (count < 2) throw InputError("synth_stain_dataset: count must be >= 2");
    if (size < 32) throw InputError("synth_stain_dataset: size must be >= 32");
    std::error_code ec;
    fs::create_directories(out_dir / "a", ec);
    fs::create_directories(out_dir / "b", ec);
    if (!fs::is_directory(out_dir / "a") || !fs::is_directory(out_dir / "b"))
        throw IoError("synth_stain_dataset: cannot create output directory " + out_dir.string());

    // Domain palettes: 0 reads as an H&E-like pink/purple, 1 as a recolored
    // green/teal rendering of the same structure.
    const std::array<double, 3> base_a{0.93, 0.82, 0.90}, tint_a{0.45, 0.56, 0.32};
    const std::array<double, 3> base_b{0.84, 0.93, 0.90}, tint_b{0.58, 0.28, 0.44};

    PatchManifest manifest;
    manifest.base_dir = out_dir;
    for (int i = 0; i < count; ++i) {
        Rng rng(derive_seed(seed, "synth.structure." + std::to_string(i)));
        const Plane s = render_structure(rng, size);
        char name[32];
        std::snprintf(name, sizeof(name), "patch_%04d.png", i);
        const std::string split = (i % 5 == 4) ? "test" : "train";
        write_png(out_dir / "a" / name, colorize(s, base_a, tint_a, 0));
        write_png(out_dir / "b" / name, colorize(s, base_b, tint_b, 1));
        manifest.records.push_back({std::string("a/") + name, 0, "a" + std::to_string(i), 0, 0,
                                    split});
        manifest.records.push_back({std::string("b/") + name, 1, "b" + std::to_string(i), 0, 0,
                                    split});
    }
    write_manifest(out_dir / "manifest.tsv", manifest);
    return manifest;
}

std::vector<ImagePatch> load_domain_patches(const PatchManifest& manifest, int domain,
                                            const std::string& split) {
    std::vector<ImagePatch> out;
    for (const auto& r : manifest.records) {
        if (r.domain != domain) continue;
        if (!split.empty() && r.split != split) continue;
        ImagePatch p = read_png(manifest.resolve(r));
        p.domain = r.domain;
        out.push_back(std::move(p));
    }
    return out;
}

}  // namespace stainforge
