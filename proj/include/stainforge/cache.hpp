#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <map>
#include <optional>

#include "stainforge/image.hpp"
#include "stainforge/vlm.hpp"

namespace stainforge {

// Append-only embedding cache keyed by content hash. One file per backend
// digest under the cache directory named by the STAINFORGE_CACHE environment
// variable (no variable, no caching).
//
// File layout: magic "STFGECACHE", u32 version (1), then records of
// { u64 key, u32 dim, f64 values[dim] }. A version mismatch refuses to load.
class EmbeddingCache {
public:
    static constexpr std::uint32_t kVersion = 1;

    static std::optional<std::filesystem::path> dir_from_env();

    EmbeddingCache(const std::filesystem::path& dir, const EncoderBackend& backend);

    std::optional<Eigen::VectorXd> lookup(std::uint64_t key) const;
    void store(std::uint64_t key, const Eigen::VectorXd& values);

    static std::uint64_t patch_key(const ImagePatch& patch);

    std::size_t size() const { return entries_.size(); }
    const std::filesystem::path& file() const { return file_; }

private:
    std::filesystem::path file_;
    std::map<std::uint64_t, Eigen::VectorXd> entries_;
};

// encode_image with optional caching; falls through to the plain encoder
// when no cache is configured.
Embedding encode_image_cached(const ImagePatch& patch, const EncoderBackend& backend,
                              EmbeddingCache* cache);

}  // namespace stainforge
