#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "stainforge/image.hpp"

namespace stainforge {

enum class SaturationStat { mean, max, median };

SaturationStat saturation_stat_from_string(const std::string& s);
std::string to_string(SaturationStat s);

struct TilingSpec {
    int patch = 256;
    int overlap = 192;
    double sat_threshold = 15.0;  // on the 0-255 saturation scale
    SaturationStat stat = SaturationStat::mean;

    int stride() const { return patch - overlap; }
    void validate() const;
};

struct ManifestRecord {
    std::string path;  // relative to the manifest file
    int domain = 0;    // stain index
    std::string slide_id;
    int x = 0, y = 0;  // patch origin on the source slide
    std::string split; // "train" or "test"
};

struct PatchManifest {
    std::filesystem::path base_dir;  // resolution root for relative paths
    std::vector<ManifestRecord> records;

    std::filesystem::path resolve(const ManifestRecord& r) const { return base_dir / r.path; }
};

// Tab-separated, one record per line: path, domain, slide_id, x, y, split.
// Reading validates record syntax, (slide_id, origin) uniqueness and that
// every referenced file exists.
PatchManifest read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const PatchManifest& manifest);

// Patch mean/max/median of the HSV saturation channel (0-255 scale),
// strictly below the threshold means background.
bool is_background(const ImagePatch& patch, double sat_threshold,
                   SaturationStat stat = SaturationStat::mean);

double saturation_statistic(const ImagePatch& patch, SaturationStat stat);

struct ExtractedPatch {
    ImagePatch patch;
    int x = 0, y = 0;
};

// Full patches only, on a stride = patch - overlap grid anchored at (0,0);
// background patches are dropped.
std::vector<ExtractedPatch> extract_patches(const ImagePatch& slide, const TilingSpec& spec);

// Closed-form candidate count before background filtering.
std::int64_t grid_candidate_count(int dim_h, int dim_w, const TilingSpec& spec);

// Seeded two-domain synthetic stain dataset. Each structure is rendered
// under two fixed color transforms (domain 0: pink/purple, domain 1:
// green/teal) into out_dir/a and out_dir/b plus a manifest; pairs share the
// file name. Every 5th structure is tagged "test".
PatchManifest synth_stain_dataset(std::uint64_t seed, int count, int size,
                                  const std::filesystem::path& out_dir);

// Loads all patches of one domain (optionally restricted to a split tag).
std::vector<ImagePatch> load_domain_patches(const PatchManifest& manifest, int domain,
                                            const std::string& split = "");

}  // namespace stainforge
