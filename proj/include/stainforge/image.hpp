#pragma once

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <optional>

#include "stainforge/errors.hpp"

namespace stainforge {

using Scalar = double;
// One color plane; rows index y, columns index x.
using Plane = Eigen::ArrayXXd;

struct ValueRange {
    Scalar lo = 0.0;
    Scalar hi = 1.0;

    static ValueRange unit() { return {0.0, 1.0}; }
    static ValueRange model() { return {-1.0, 1.0}; }  // range used inside generators/denoisers
    Scalar width() const { return hi - lo; }
    bool operator==(const ValueRange&) const = default;
};

// H x W x 3 raster with a declared value range and an optional stain-domain
// label (0:H&E 1:MAS 2:PAS 3:PASM).
struct ImagePatch {
    std::array<Plane, 3> ch;
    ValueRange range = ValueRange::unit();
    std::optional<int> domain;

    ImagePatch() = default;
    ImagePatch(Eigen::Index h, Eigen::Index w, ValueRange r = ValueRange::unit()) : range(r) {
        for (auto& p : ch) p = Plane::Zero(h, w);
    }

    Eigen::Index height() const { return ch[0].rows(); }
    Eigen::Index width() const { return ch[0].cols(); }
    Eigen::Index pixels() const { return height() * width(); }

    bool same_shape(const ImagePatch& o) const {
        return height() == o.height() && width() == o.width();
    }
};

inline bool all_finite(const ImagePatch& p) {
    for (const auto& c : p.ch)
        if (!c.isFinite().all()) return false;
    return true;
}

// Affine remap between declared ranges.
inline ImagePatch convert_range(const ImagePatch& p, ValueRange to) {
    ImagePatch out = p;
    const Scalar s = to.width() / p.range.width();
    for (auto& c : out.ch) c = (c - p.range.lo) * s + to.lo;
    out.range = to;
    return out;
}

inline ImagePatch to_unit_range(const ImagePatch& p) { return convert_range(p, ValueRange::unit()); }
inline ImagePatch to_model_range(const ImagePatch& p) { return convert_range(p, ValueRange::model()); }

inline ImagePatch clamp_to_range(const ImagePatch& p) {
    ImagePatch out = p;
    for (auto& c : out.ch) c = c.min(p.range.hi).max(p.range.lo);
    return out;
}

inline Scalar max_abs_diff(const ImagePatch& a, const ImagePatch& b) {
    if (!a.same_shape(b)) throw InputError("max_abs_diff: shape mismatch");
    Scalar m = 0.0;
    for (int c = 0; c < 3; ++c) m = std::max(m, (a.ch[c] - b.ch[c]).abs().maxCoeff());
    return m;
}

inline Scalar mean_sq_diff(const ImagePatch& a, const ImagePatch& b) {
    if (!a.same_shape(b)) throw InputError("mean_sq_diff: shape mismatch");
    Scalar s = 0.0;
    for (int c = 0; c < 3; ++c) s += (a.ch[c] - b.ch[c]).square().sum();
    return s / static_cast<Scalar>(3 * a.pixels());
}

}  // namespace stainforge
