#pragma once

#include <array>
#include <cmath>
#include <string>
#include <utility>

#include "soupsr/errors.hpp"
#include "soupsr/tensor.hpp"

namespace soupsr {

/// 3D scalar grid with per-axis physical spacing. Canonical axis order is
/// Z x Y x X with Z the through-plane (slice) axis; every through-plane
/// operation in the toolkit acts on axis 0. Data is float32, C-order.
struct Volume {
    Tensor<float> data;                       // (Z, Y, X)
    std::array<double, 3> spacing{1.0, 1.0, 1.0};  // (dz, dy, dx) in mm
    std::pair<float, float> intensity_range{0.0f, 1.0f};
    std::string id;

    std::size_t zdim() const { return data.dim(0); }
    std::size_t ydim() const { return data.dim(1); }
    std::size_t xdim() const { return data.dim(2); }
};

inline Volume make_volume(std::size_t z, std::size_t y, std::size_t x,
                          std::array<double, 3> spacing = {1.0, 1.0, 1.0},
                          std::string id = "") {
    Volume v;
    v.data = Tensor<float>({z, y, x});
    v.spacing = spacing;
    v.id = std::move(id);
    return v;
}

/// Validates the Volume invariants: rank-3 data with all dims >= 1, finite
/// positive spacing, and finite voxel values.
inline void validate(const Volume& v) {
    if (v.data.rank() != 3) throw dimension_error("volume data must be rank 3");
    for (std::size_t i = 0; i < 3; ++i)
        if (v.data.dim(i) < 1) throw dimension_error("volume dimension must be >= 1");
    for (double s : v.spacing)
        if (!(std::isfinite(s) && s > 0.0)) throw data_error("volume spacing must be finite and positive");
    if (!v.data.all_finite()) throw data_error("volume contains NaN or infinite voxels");
}

/// Records the current (min, max) into intensity_range without touching data.
inline void record_intensity_range(Volume& v) {
    v.intensity_range = {v.data.min_value(), v.data.max_value()};
}

/// Per-volume min-max normalization to [0, 1]. The original (lo, hi) is kept
/// in intensity_range so denormalize(normalize(v)) recovers v. A constant
/// volume maps to all zeros with range (lo, lo + 1).
inline Volume normalize(const Volume& v) {
    Volume out = v;
    float lo = v.data.min_value();
    float hi = v.data.max_value();
    if (hi > lo) {
        const float scale = 1.0f / (hi - lo);
        for (float& x : out.data) x = (x - lo) * scale;
        out.intensity_range = {lo, hi};
    } else {
        out.data.fill(0.0f);
        out.intensity_range = {lo, lo + 1.0f};
    }
    return out;
}

/// Inverse of normalize using the recorded intensity_range.
inline Volume denormalize(const Volume& v) {
    Volume out = v;
    const float lo = v.intensity_range.first;
    const float hi = v.intensity_range.second;
    const float scale = hi - lo;
    for (float& x : out.data) x = x * scale + lo;
    return out;
}

/// Center-crops the volume to the given dims (each must be <= the current
/// dim). The leading offset is floor((dim - want) / 2) on each axis.
inline Volume center_crop(const Volume& v, std::size_t z, std::size_t y, std::size_t x) {
    if (z > v.zdim() || y > v.ydim() || x > v.xdim())
        throw dimension_error("center_crop: target dims exceed volume dims");
    const std::size_t oz = (v.zdim() - z) / 2;
    const std::size_t oy = (v.ydim() - y) / 2;
    const std::size_t ox = (v.xdim() - x) / 2;
    Volume out;
    out.data = Tensor<float>({z, y, x});
    out.spacing = v.spacing;
    out.id = v.id;
    for (std::size_t i = 0; i < z; ++i)
        for (std::size_t j = 0; j < y; ++j)
            for (std::size_t k = 0; k < x; ++k)
                out.data(i, j, k) = v.data(i + oz, j + oy, k + ox);
    out.intensity_range = v.intensity_range;
    return out;
}

} // namespace soupsr
