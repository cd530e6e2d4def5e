#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "stainforge/errors.hpp"

namespace stainforge {

// Typed binary container for every persisted artifact (prompt banks, model
// checkpoints, anchors). Little-endian, versioned; load refuses any other
// format version. Round-trips are bit-exact.
//
// Layout: magic "STFGARCH", u32 version, u32 entry count, then per entry:
// u16 name length, name bytes, u8 kind (0 tensor, 1 bytes), tensor: u8 rank,
// u64 dims..., f64 payload; bytes: u64 length, payload.
class Archive {
public:
    static constexpr std::uint32_t kVersion = 1;

    void put_tensor(const std::string& name, const Eigen::ArrayXd& values,
                    std::vector<std::uint64_t> dims = {});
    void put_matrix(const std::string& name, const Eigen::MatrixXd& m);  // row-major dims
    void put_bytes(const std::string& name, const std::string& bytes);
    void put_u64(const std::string& name, std::uint64_t v);
    void put_f64(const std::string& name, double v);

    bool has(const std::string& name) const;
    const Eigen::ArrayXd& tensor(const std::string& name) const;
    const std::vector<std::uint64_t>& tensor_dims(const std::string& name) const;
    Eigen::MatrixXd matrix(const std::string& name) const;
    const std::string& bytes(const std::string& name) const;
    std::uint64_t u64(const std::string& name) const;
    double f64(const std::string& name) const;

    std::vector<std::string> names() const;

    void save(const std::filesystem::path& path) const;
    static Archive load(const std::filesystem::path& path);

private:
    struct TensorEntry {
        Eigen::ArrayXd values;
        std::vector<std::uint64_t> dims;
    };
    std::map<std::string, TensorEntry> tensors_;
    std::map<std::string, std::string> blobs_;
};

}  // namespace stainforge
