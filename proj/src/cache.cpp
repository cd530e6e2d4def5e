#include "stainforge/cache.hpp"

#include <cstdlib>
#include <cstring>
#include <fstream>

#include "stainforge/rng.hpp"

namespace stainforge {

namespace {

constexpr char kMagic[10] = {'S', 'T', 'F', 'G', 'E', 'C', 'A', 'C', 'H', 'E'};

}  // namespace

std::optional<std::filesystem::path> EmbeddingCache::dir_from_env() {
    const char* env = std::getenv("STAINFORGE_CACHE");
    if (!env || !*env) return std::nullopt;
    return std::filesystem::path(env);
}

EmbeddingCache::EmbeddingCache(const std::filesystem::path& dir, const EncoderBackend& backend) {
    std::filesystem::create_directories(dir);
    char name[32];
    std::snprintf(name, sizeof(name), "emb_%016llx.bin",
                  static_cast<unsigned long long>(backend.digest()));
    file_ = dir / name;
    std::ifstream f(file_, std::ios::binary);
    if (!f) return;  // fresh cache
    char magic[sizeof(kMagic)];
    f.read(magic, sizeof(magic));
    if (!f || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw IoError("embedding cache: bad header in " + file_.string());
    std::uint32_t version = 0;
    f.read(reinterpret_cast<char*>(&version), sizeof(version));
    if (!f || version != kVersion)
        throw IoError("embedding cache: version mismatch in " + file_.string() +
                      "; delete the file to rebuild");
    while (true) {
        std::uint64_t key = 0;
        std::uint32_t dim = 0;
        f.read(reinterpret_cast<char*>(&key), sizeof(key));
        if (!f) break;
        f.read(reinterpret_cast<char*>(&dim), sizeof(dim));
        if (!f) throw IoError("embedding cache: truncated record in " + file_.string());
        Eigen::VectorXd v(dim);
        f.read(reinterpret_cast<char*>(v.data()),
               static_cast<std::streamsize>(sizeof(double) * dim));
        if (!f) throw IoError("embedding cache: truncated record in " + file_.string());
        entries_[key] = std::move(v);
    }
}

std::optional<Eigen::VectorXd> EmbeddingCache::lookup(std::uint64_t key) const {
    auto it = entries_.find(key);
    if (it == entries_.end()) return std::nullopt;
    return it->second;
}

void EmbeddingCache::store(std::uint64_t key, const Eigen::VectorXd& values) {
    if (entries_.count(key)) return;
    const bool fresh = !std::filesystem::exists(file_);
    std::ofstream f(file_, std::ios::binary | std::ios::app);
    if (!f) throw IoError("embedding cache: cannot open " + file_.string());
    if (fresh) {
        f.write(kMagic, sizeof(kMagic));
        const std::uint32_t version = kVersion;
        f.write(reinterpret_cast<const char*>(&version), sizeof(version));
    }
    const auto dim = static_cast<std::uint32_t>(values.size());
    f.write(reinterpret_cast<const char*>(&key), sizeof(key));
    f.write(reinterpret_cast<const char*>(&dim), sizeof(dim));
    f.write(reinterpret_cast<const char*>(values.data()),
            static_cast<std::streamsize>(sizeof(double) * values.size()));
    if (!f) throw IoError("embedding cache: write failed for " + file_.string());
    entries_[key] = values;
}

std::uint64_t EmbeddingCache::patch_key(const ImagePatch& patch) {
    std::uint64_t h = fnv1a64("patch");
    for (const auto& c : patch.ch)
        h = splitmix64(h ^ fnv1a64(c.data(), sizeof(double) * static_cast<std::size_t>(c.size())));
    h = splitmix64(h ^ fnv1a64(&patch.range, sizeof(patch.range)));
    return h;
}

Embedding encode_image_cached(const ImagePatch& patch, const EncoderBackend& backend,
                              EmbeddingCache* cache) {
    if (!cache) return encode_image(patch, backend);
    const std::uint64_t key = EmbeddingCache::patch_key(patch);
    if (auto hit = cache->lookup(key)) {
        Embedding e;
        e.values = *hit;
        e.normalized = true;
        return e;
    }
    Embedding e = encode_image(patch, backend);
    cache->store(key, e.values);
    return e;
}

}  // namespace stainforge
