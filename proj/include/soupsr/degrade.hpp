#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "soupsr/errors.hpp"
#include "soupsr/rng.hpp"
#include "soupsr/spline.hpp"
#include "soupsr/volume.hpp"

namespace soupsr {

enum class DegradeMode { thin_to_thick, thin_to_thin, gaussian };

inline const char* to_string(DegradeMode m) {
    switch (m) {
        case DegradeMode::thin_to_thick: return "thin_to_thick";
        case DegradeMode::thin_to_thin: return "thin_to_thin";
        case DegradeMode::gaussian: return "gaussian";
    }
    return "?";
}

inline DegradeMode degrade_mode_from_string(const std::string& s) {
    if (s == "thin_to_thick" || s == "thick") return DegradeMode::thin_to_thick;
    if (s == "thin_to_thin" || s == "thin") return DegradeMode::thin_to_thin;
    if (s == "gaussian") return DegradeMode::gaussian;
    throw config_error("unknown degradation mode: " + s);
}

/// Acquisition model for synthesizing low-resolution volumes from
/// high-resolution ones: the through-plane encoder applied to ground truth.
struct DegradationSpec {
    DegradeMode mode = DegradeMode::thin_to_thick;
    int s = 2;                  // sampling factor; integer >= 2 for synthesis
    double gaussian_sigma = 0;  // in slice units; required iff mode == gaussian
    double noise_sigma = 0;     // additive measurement noise, default off
};

inline void validate_spec(const DegradationSpec& spec) {
    if (spec.s < 2) throw config_error("degradation sampling factor must be an integer >= 2");
    if (spec.mode == DegradeMode::gaussian && !(spec.gaussian_sigma > 0))
        throw config_error("gaussian mode requires gaussian_sigma > 0");
    if (!(spec.noise_sigma >= 0) || !std::isfinite(spec.noise_sigma))
        throw config_error("noise_sigma must be finite and >= 0");
}

namespace detail {

/// Truncated, renormalized Gaussian taps for |offset| <= radius. Weights are
/// non-negative and renormalized per output position against the volume
/// border, so constants are preserved and outputs stay in the input range.
inline std::vector<double> gaussian_taps(double sigma, int radius) {
    std::vector<double> g(static_cast<std::size_t>(2 * radius + 1));
    for (int j = -radius; j <= radius; ++j)
        g[static_cast<std::size_t>(j + radius)] = std::exp(-0.5 * (j / sigma) * (j / sigma));
    return g;
}

} // namespace detail

/// Applies the acquisition encoder along Z:
///   thin_to_thick  -> slice k = mean of input slices [k*s, k*s + s), Zout = floor(Zin/s)
///   thin_to_thin   -> slice k = input slice k*s,                      Zout = ceil(Zin/s)
///   gaussian       -> Gaussian blur along Z then every s-th slice,    Zout = ceil(Zin/s)
/// Then adds N(0, noise_sigma^2) when noise_sigma > 0 (stream seeded by
/// noise_seed). Output dz is multiplied by s; X and Y are untouched.
inline Volume degrade(const Volume& v, const DegradationSpec& spec, std::uint64_t noise_seed = 0) {
    validate_spec(spec);
    const std::size_t zin = v.zdim(), ny = v.ydim(), nx = v.xdim();
    const std::size_t s = static_cast<std::size_t>(spec.s);
    if (zin < s)
        throw dimension_error("volume has " + std::to_string(zin) + " slices, fewer than s=" +
                              std::to_string(s));

    std::size_t zout = 0;
    if (spec.mode == DegradeMode::thin_to_thick)
        zout = zin / s;
    else
        zout = (zin + s - 1) / s;

    Volume out = make_volume(zout, ny, nx, v.spacing, v.id);
    out.spacing[0] = v.spacing[0] * static_cast<double>(s);
    const std::size_t plane = ny * nx;

    switch (spec.mode) {
        case DegradeMode::thin_to_thick: {
            const double inv = 1.0 / static_cast<double>(s);
            for (std::size_t k = 0; k < zout; ++k) {
                float* dst = out.data.data() + k * plane;
                for (std::size_t p = 0; p < plane; ++p) {
                    double acc = 0.0;
                    for (std::size_t j = 0; j < s; ++j)
                        acc += v.data.data()[(k * s + j) * plane + p];
                    dst[p] = static_cast<float>(acc * inv);
                }
            }
            break;
        }
        case DegradeMode::thin_to_thin: {
            for (std::size_t k = 0; k < zout; ++k) {
                const float* src = v.data.data() + (k * s) * plane;
                float* dst = out.data.data() + k * plane;
                std::copy(src, src + plane, dst);
            }
            break;
        }
        case DegradeMode::gaussian: {
            const int radius = std::max(1, static_cast<int>(std::ceil(4.0 * spec.gaussian_sigma)));
            const std::vector<double> g = detail::gaussian_taps(spec.gaussian_sigma, radius);
            for (std::size_t k = 0; k < zout; ++k) {
                const long zc = static_cast<long>(k * s);
                const long z0 = std::max<long>(0, zc - radius);
                const long z1 = std::min<long>(static_cast<long>(zin) - 1, zc + radius);
                double wsum = 0.0;
                for (long z = z0; z <= z1; ++z) wsum += g[static_cast<std::size_t>(z - zc + radius)];
                float* dst = out.data.data() + k * plane;
                for (std::size_t p = 0; p < plane; ++p) {
                    double acc = 0.0;
                    for (long z = z0; z <= z1; ++z)
                        acc += g[static_cast<std::size_t>(z - zc + radius)] *
                               v.data.data()[static_cast<std::size_t>(z) * plane + p];
                    dst[p] = static_cast<float>(acc / wsum);
                }
            }
            break;
        }
    }

    if (spec.noise_sigma > 0) {
        Rng rng(noise_seed);
        for (float& x : out.data) x += static_cast<float>(spec.noise_sigma * rng.normal());
    }

    record_intensity_range(out);
    return out;
}

/// Through-plane cubic spline upsampling. Output Z = round(s * Zin), sampled
/// at Zout positions uniformly covering [0, Zin-1]; values are clamped to the
/// input's global [min, max] to suppress spline overshoot. Output dz = dz / s.
inline Volume upsample_cubic(const Volume& v, double s) {
    if (!(s >= 1.0 && s <= 8.0)) throw scale_range_error("upsampling factor must lie in [1, 8]");
    const std::size_t zin = v.zdim(), ny = v.ydim(), nx = v.xdim();
    if (zin < 4) throw dimension_error("cubic upsampling requires at least 4 slices");

    const std::size_t zout = static_cast<std::size_t>(std::llround(s * static_cast<double>(zin)));
    Volume out = make_volume(zout, ny, nx, v.spacing, v.id);
    out.spacing[0] = v.spacing[0] / s;

    // target coordinates are shared by every column
    std::vector<double> coord(zout);
    const double step = zout > 1 ? static_cast<double>(zin - 1) / static_cast<double>(zout - 1) : 0.0;
    for (std::size_t j = 0; j < zout; ++j) coord[j] = step * static_cast<double>(j);

    const float lo = v.data.min_value();
    const float hi = v.data.max_value();
    const std::size_t plane = ny * nx;

    std::vector<double> col(zin), mom(zin), scratch;
    for (std::size_t p = 0; p < plane; ++p) {
        for (std::size_t z = 0; z < zin; ++z) col[z] = v.data.data()[z * plane + p];
        spline_moments(col.data(), zin, mom.data(), scratch);
        for (std::size_t j = 0; j < zout; ++j) {
            double val = spline_eval(col.data(), mom.data(), zin, coord[j]);
            if (val < lo) val = lo;
            if (val > hi) val = hi;
            out.data.data()[j * plane + p] = static_cast<float>(val);
        }
    }

    record_intensity_range(out);
    return out;
}

/// Conventional interpolation baseline. In-plane resolution is native in
/// every supported protocol, so this is through-plane cubic interpolation;
/// it is the same operator as upsample_cubic.
inline Volume tricubic_interpolate(const Volume& v, double s) { return upsample_cubic(v, s); }

} // namespace soupsr
