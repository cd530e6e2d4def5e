#include "stainforge/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace stainforge {

namespace {

constexpr char kMagic[8] = {'S', 'T', 'F', 'G', 'A', 'R', 'C', 'H'};

template <typename T>
void write_pod(std::ostream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw IoError("checkpoint: truncated file");
    return v;
}

}  // namespace

void Archive::put_tensor(const std::string& name, const Eigen::ArrayXd& values,
                         std::vector<std::uint64_t> dims) {
    if (dims.empty()) dims = {static_cast<std::uint64_t>(values.size())};
    std::uint64_t n = 1;
    for (auto d : dims) n *= d;
    if (n != static_cast<std::uint64_t>(values.size()))
        throw InputError("Archive::put_tensor: dims do not match value count for " + name);
    tensors_[name] = {values, std::move(dims)};
}

void Archive::put_matrix(const std::string& name, const Eigen::MatrixXd& m) {
    Eigen::ArrayXd flat(m.size());
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) flat[r * m.cols() + c] = m(r, c);
    put_tensor(name, flat,
               {static_cast<std::uint64_t>(m.rows()), static_cast<std::uint64_t>(m.cols())});
}

void Archive::put_bytes(const std::string& name, const std::string& bytes) {
    blobs_[name] = bytes;
}

void Archive::put_u64(const std::string& name, std::uint64_t v) {
    Eigen::ArrayXd a(1);
    double d;
    static_assert(sizeof(double) == sizeof(std::uint64_t));
    std::memcpy(&d, &v, sizeof(d));
    a[0] = d;
    put_tensor(name + "#u64", a);
}

void Archive::put_f64(const std::string& name, double v) {
    Eigen::ArrayXd a(1);
    a[0] = v;
    put_tensor(name, a);
}

bool Archive::has(const std::string& name) const {
    return tensors_.count(name) || blobs_.count(name) || tensors_.count(name + "#u64");
}

const Eigen::ArrayXd& Archive::tensor(const std::string& name) const {
    auto it = tensors_.find(name);
    if (it == tensors_.end()) throw IoError("checkpoint: missing tensor " + name);
    return it->second.values;
}

const std::vector<std::uint64_t>& Archive::tensor_dims(const std::string& name) const {
    auto it = tensors_.find(name);
    if (it == tensors_.end()) throw IoError("checkpoint: missing tensor " + name);
    return it->second.dims;
}

Eigen::MatrixXd Archive::matrix(const std::string& name) const {
    const auto& e = tensors_.find(name);
    if (e == tensors_.end()) throw IoError("checkpoint: missing tensor " + name);
    if (e->second.dims.size() != 2) throw IoError("checkpoint: " + name + " is not a matrix");
    const auto rows = static_cast<Eigen::Index>(e->second.dims[0]);
    const auto cols = static_cast<Eigen::Index>(e->second.dims[1]);
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = e->second.values[r * cols + c];
    return m;
}

const std::string& Archive::bytes(const std::string& name) const {
    auto it = blobs_.find(name);
    if (it == blobs_.end()) throw IoError("checkpoint: missing blob " + name);
    return it->second;
}

std::uint64_t Archive::u64(const std::string& name) const {
    const Eigen::ArrayXd& a = tensor(name + "#u64");
    std::uint64_t v;
    double d = a[0];
    std::memcpy(&v, &d, sizeof(v));
    return v;
}

double Archive::f64(const std::string& name) const { return tensor(name)[0]; }

std::vector<std::string> Archive::names() const {
    std::vector<std::string> out;
    for (const auto& [k, v] : tensors_) out.push_back(k);
    for (const auto& [k, v] : blobs_) out.push_back(k);
    return out;
}

void Archive::save(const std::filesystem::path& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("checkpoint: cannot open " + path.string() + " for writing");
    f.write(kMagic, sizeof(kMagic));
    write_pod<std::uint32_t>(f, kVersion);
    write_pod<std::uint32_t>(f, static_cast<std::uint32_t>(tensors_.size() + blobs_.size()));
    for (const auto& [name, entry] : tensors_) {
        write_pod<std::uint16_t>(f, static_cast<std::uint16_t>(name.size()));
        f.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_pod<std::uint8_t>(f, 0);
        write_pod<std::uint8_t>(f, static_cast<std::uint8_t>(entry.dims.size()));
        for (auto d : entry.dims) write_pod<std::uint64_t>(f, d);
        f.write(reinterpret_cast<const char*>(entry.values.data()),
                static_cast<std::streamsize>(sizeof(double) * entry.values.size()));
    }
    for (const auto& [name, blob] : blobs_) {
        write_pod<std::uint16_t>(f, static_cast<std::uint16_t>(name.size()));
        f.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_pod<std::uint8_t>(f, 1);
        write_pod<std::uint64_t>(f, blob.size());
        f.write(blob.data(), static_cast<std::streamsize>(blob.size()));
    }
    if (!f) throw IoError("checkpoint: write failed for " + path.string());
}

Archive Archive::load(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("checkpoint: cannot open " + path.string());
    char magic[8];
    f.read(magic, sizeof(magic));
    if (!f || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw IoError("checkpoint: " + path.string() + " is not a stainforge archive");
    const auto version = read_pod<std::uint32_t>(f);
    if (version != kVersion)
        throw IoError("checkpoint: format version " + std::to_string(version) +
                      " unsupported (expected " + std::to_string(kVersion) +
                      "); refusing to load " + path.string());
    const auto count = read_pod<std::uint32_t>(f);
    Archive a;
    for (std::uint32_t i = 0; i < count; ++i) {
        const auto name_len = read_pod<std::uint16_t>(f);
        std::string name(name_len, '\0');
        f.read(name.data(), name_len);
        const auto kind = read_pod<std::uint8_t>(f);
        if (kind == 0) {
            const auto rank = read_pod<std::uint8_t>(f);
            std::vector<std::uint64_t> dims(rank);
            std::uint64_t n = 1;
            for (auto& d : dims) {
                d = read_pod<std::uint64_t>(f);
                n *= d;
            }
            Eigen::ArrayXd values(static_cast<Eigen::Index>(n));
            f.read(reinterpret_cast<char*>(values.data()),
                   static_cast<std::streamsize>(sizeof(double) * n));
            if (!f) throw IoError("checkpoint: truncated tensor " + name);
            a.tensors_[name] = {std::move(values), std::move(dims)};
        } else if (kind == 1) {
            const auto len = read_pod<std::uint64_t>(f);
            std::string blob(len, '\0');
            f.read(blob.data(), static_cast<std::streamsize>(len));
            if (!f) throw IoError("checkpoint: truncated blob " + name);
            a.blobs_[name] = std::move(blob);
        } else {
            throw IoError("checkpoint: unknown entry kind in " + path.string());
        }
    }
    return a;
}

}  // namespace stainforge
