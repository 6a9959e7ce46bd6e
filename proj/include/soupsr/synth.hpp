#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "soupsr/rng.hpp"
#include "soupsr/volume.hpp"

namespace soupsr {

/// Seeded synthetic volume with structure along every axis: a mixture of
/// low-frequency 3D sinusoids plus a few smooth Gaussian blobs, normalized
/// to [0, 1]. Useful for demos and end-to-end tests when no scan data is at
/// hand. The same (seed, dims) always produces the same volume.
inline Volume synth_volume(std::size_t nz, std::size_t ny, std::size_t nx, std::uint64_t seed,
                           const std::string& id = {}) {
    Rng rng(seed);
    Volume v = make_volume(nz, ny, nx, {1, 1, 1}, id.empty() ? "synth-" + std::to_string(seed) : id);

    struct Wave {
        double fz, fy, fx, phase, amp;
    };
    std::vector<Wave> waves(6);
    for (Wave& w : waves) {
        w.fz = 0.5 + 2.5 * rng.uniform();
        w.fy = 0.5 + 2.5 * rng.uniform();
        w.fx = 0.5 + 2.5 * rng.uniform();
        w.phase = 6.283185307179586 * rng.uniform();
        w.amp = 0.3 + 0.7 * rng.uniform();
    }

    struct Blob {
        double cz, cy, cx, radius, amp;
    };
    std::vector<Blob> blobs(4);
    for (Blob& b : blobs) {
        b.cz = rng.uniform();
        b.cy = rng.uniform();
        b.cx = rng.uniform();
        b.radius = 0.08 + 0.17 * rng.uniform();
        b.amp = (rng.uniform() < 0.5 ? -1.0 : 1.0) * (0.5 + rng.uniform());
    }

    const double pi = 3.141592653589793;
    const double dz = nz > 1 ? 1.0 / static_cast<double>(nz - 1) : 0.0;
    const double dy = ny > 1 ? 1.0 / static_cast<double>(ny - 1) : 0.0;
    const double dx = nx > 1 ? 1.0 / static_cast<double>(nx - 1) : 0.0;

    std::size_t idx = 0;
    for (std::size_t z = 0; z < nz; ++z) {
        const double uz = dz * static_cast<double>(z);
        for (std::size_t y = 0; y < ny; ++y) {
            const double uy = dy * static_cast<double>(y);
            for (std::size_t x = 0; x < nx; ++x, ++idx) {
                const double ux = dx * static_cast<double>(x);
                double val = 0.0;
                for (const Wave& w : waves)
                    val += w.amp * std::sin(2.0 * pi * (w.fz * uz + w.fy * uy + w.fx * ux) + w.phase);
                for (const Blob& b : blobs) {
                    const double rz = uz - b.cz, ry = uy - b.cy, rx = ux - b.cx;
                    const double r2 = (rz * rz + ry * ry + rx * rx) / (b.radius * b.radius);
                    val += b.amp * std::exp(-0.5 * r2);
                }
                v.data.data()[idx] = static_cast<float>(val);
            }
        }
    }

    v = normalize(v);
    record_intensity_range(v);
    return v;
}

} // namespace soupsr
