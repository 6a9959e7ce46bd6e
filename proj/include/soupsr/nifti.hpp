#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <zlib.h>

#include "soupsr/errors.hpp"
#include "soupsr/volume.hpp"

namespace soupsr {

// NIfTI-1 single-file (.nii) reader/writer. Only the fields this toolkit
// needs are interpreted; everything else round-trips as zeros. On-disk voxel
// order (x fastest, then y, then z) coincides with the in-memory C-order
// (Z, Y, X) layout, so no reordering is required.

namespace nifti {

constexpr int kHeaderSize = 348;

enum Datatype : std::int16_t {
    DT_UINT8 = 2,
    DT_INT16 = 4,
    DT_INT32 = 8,
    DT_FLOAT32 = 16,
    DT_FLOAT64 = 64,
};

namespace detail {

inline std::uint16_t bswap16(std::uint16_t v) { return static_cast<std::uint16_t>((v >> 8) | (v << 8)); }
inline std::uint32_t bswap32(std::uint32_t v) {
    return (v >> 24) | ((v >> 8) & 0xff00u) | ((v << 8) & 0xff0000u) | (v << 24);
}

struct Cursor {
    const unsigned char* p;
    bool swap;

    std::int16_t i16(std::size_t off) const {
        std::uint16_t v;
        std::memcpy(&v, p + off, 2);
        if (swap) v = bswap16(v);
        std::int16_t out;
        std::memcpy(&out, &v, 2);
        return out;
    }
    std::int32_t i32(std::size_t off) const {
        std::uint32_t v;
        std::memcpy(&v, p + off, 4);
        if (swap) v = bswap32(v);
        std::int32_t out;
        std::memcpy(&out, &v, 4);
        return out;
    }
    float f32(std::size_t off) const {
        std::uint32_t v;
        std::memcpy(&v, p + off, 4);
        if (swap) v = bswap32(v);
        float out;
        std::memcpy(&out, &v, 4);
        return out;
    }
};

inline void put_i16(unsigned char* p, std::size_t off, std::int16_t v) { std::memcpy(p + off, &v, 2); }
inline void put_i32(unsigned char* p, std::size_t off, std::int32_t v) { std::memcpy(p + off, &v, 4); }
inline void put_f32(unsigned char* p, std::size_t off, float v) { std::memcpy(p + off, &v, 4); }

inline bool ends_with(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

/// Slurps a file, transparently inflating gzip content when the path ends
/// with .gz.
inline std::vector<unsigned char> read_file_bytes(const std::string& path) {
    std::vector<unsigned char> bytes;
    if (ends_with(path, ".gz")) {
        gzFile gz = gzopen(path.c_str(), "rb");
        if (!gz) throw io_error("cannot open: " + path);
        unsigned char buf[1 << 16];
        int n;
        while ((n = gzread(gz, buf, sizeof(buf))) > 0)
            bytes.insert(bytes.end(), buf, buf + n);
        bool bad = n < 0;
        gzclose(gz);
        if (bad) throw format_error("gzip decompression failed: " + path);
        return bytes;
    }
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open: " + path);
    in.seekg(0, std::ios::end);
    bytes.resize(static_cast<std::size_t>(in.tellg()));
    in.seekg(0);
    in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!in) throw io_error("read failed: " + path);
    return bytes;
}

template <typename Src>
inline void convert_voxels(const unsigned char* raw, std::size_t n, bool swap, float* out) {
    for (std::size_t i = 0; i < n; ++i) {
        unsigned char tmp[sizeof(Src)];
        std::memcpy(tmp, raw + i * sizeof(Src), sizeof(Src));
        if (swap && sizeof(Src) > 1) {
            for (std::size_t a = 0, b = sizeof(Src) - 1; a < b; ++a, --b) std::swap(tmp[a], tmp[b]);
        }
        Src v;
        std::memcpy(&v, tmp, sizeof(Src));
        out[i] = static_cast<float>(v);
    }
}

} // namespace detail

inline Volume read(const std::string& path) {
    using namespace detail;
    std::vector<unsigned char> bytes = read_file_bytes(path);
    if (bytes.size() < static_cast<std::size_t>(kHeaderSize))
        throw format_error("file smaller than a NIfTI-1 header: " + path);

    Cursor hdr{bytes.data(), false};
    std::int32_t sizeof_hdr = hdr.i32(0);
    if (sizeof_hdr != kHeaderSize) {
        hdr.swap = true;
        if (hdr.i32(0) != kHeaderSize)
            throw format_error("bad sizeof_hdr, not a NIfTI-1 file: " + path);
    }
    const char* magic = reinterpret_cast<const char*>(bytes.data() + 344);
    if (std::memcmp(magic, "n+1\0", 4) != 0) {
        if (std::memcmp(magic, "ni1\0", 4) == 0)
            throw unsupported_error("two-file NIfTI (.hdr/.img) is not supported: " + path);
        throw format_error("bad magic, not a single-file NIfTI-1: " + path);
    }

    std::int16_t ndim = hdr.i16(40);
    if (ndim < 3 || ndim > 7)
        throw unsupported_error("only 3D NIfTI volumes are supported (dim[0]=" +
                                std::to_string(ndim) + "): " + path);
    std::int16_t nx = hdr.i16(42), ny = hdr.i16(44), nz = hdr.i16(46);
    for (int d = 4; d <= ndim; ++d) {
        std::int16_t extra = hdr.i16(40 + 2 * static_cast<std::size_t>(d));
        if (extra > 1)
            throw unsupported_error("4D+ NIfTI volumes are not supported: " + path);
    }
    if (nx < 1 || ny < 1 || nz < 1) throw format_error("non-positive dimension in header: " + path);

    float dx = hdr.f32(76 + 4), dy = hdr.f32(76 + 8), dz = hdr.f32(76 + 12);
    if (!(dx > 0 && dy > 0 && dz > 0) || !std::isfinite(dx) || !std::isfinite(dy) || !std::isfinite(dz))
        throw format_error("non-positive pixdim in header: " + path);

    float vox_offset = hdr.f32(108);
    if (!(vox_offset >= 352.0f)) throw format_error("vox_offset below 352: " + path);
    std::size_t offset = static_cast<std::size_t>(vox_offset);

    std::int16_t datatype = hdr.i16(70);
    float scl_slope = hdr.f32(112);
    float scl_inter = hdr.f32(116);

    const std::size_t n = static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny) *
                          static_cast<std::size_t>(nz);
    std::size_t elem = 0;
    switch (datatype) {
        case DT_UINT8: elem = 1; break;
        case DT_INT16: elem = 2; break;
        case DT_INT32: elem = 4; break;
        case DT_FLOAT32: elem = 4; break;
        case DT_FLOAT64: elem = 8; break;
        default:
            throw unsupported_error("unsupported NIfTI datatype " + std::to_string(datatype) +
                                    ": " + path);
    }
    if (offset + n * elem > bytes.size()) throw format_error("voxel payload truncated: " + path);

    Volume v = make_volume(static_cast<std::size_t>(nz), static_cast<std::size_t>(ny),
                           static_cast<std::size_t>(nx), {double(dz), double(dy), double(dx)});
    const unsigned char* raw = bytes.data() + offset;
    switch (datatype) {
        case DT_UINT8: convert_voxels<std::uint8_t>(raw, n, hdr.swap, v.data.data()); break;
        case DT_INT16: convert_voxels<std::int16_t>(raw, n, hdr.swap, v.data.data()); break;
        case DT_INT32: convert_voxels<std::int32_t>(raw, n, hdr.swap, v.data.data()); break;
        case DT_FLOAT32: convert_voxels<float>(raw, n, hdr.swap, v.data.data()); break;
        case DT_FLOAT64: convert_voxels<double>(raw, n, hdr.swap, v.data.data()); break;
        default: break;
    }

    // slope 0 means "no scaling" by convention
    if (scl_slope != 0.0f && !(scl_slope == 1.0f && scl_inter == 0.0f)) {
        for (float& x : v.data) x = x * scl_slope + scl_inter;
    }

    if (!v.data.all_finite()) throw data_error("NaN or infinite voxels in: " + path);
    record_intensity_range(v);
    return v;
}

inline void write(const Volume& v, const std::string& path) {
    using namespace detail;
    if (ends_with(path, ".gz"))
        throw unsupported_error("compressed NIfTI output is not supported: " + path);

    unsigned char hdr[kHeaderSize + 4] = {};  // header + extension flag
    put_i32(hdr, 0, kHeaderSize);
    hdr[39] = 'r';  // regular
    put_i16(hdr, 40, 3);
    put_i16(hdr, 42, static_cast<std::int16_t>(v.xdim()));
    put_i16(hdr, 44, static_cast<std::int16_t>(v.ydim()));
    put_i16(hdr, 46, static_cast<std::int16_t>(v.zdim()));
    for (int d = 4; d <= 7; ++d) put_i16(hdr, 40 + 2 * static_cast<std::size_t>(d), 1);
    put_i16(hdr, 70, DT_FLOAT32);
    put_i16(hdr, 72, 32);  // bitpix
    put_f32(hdr, 76, 1.0f);  // qfac
    put_f32(hdr, 76 + 4, static_cast<float>(v.spacing[2]));
    put_f32(hdr, 76 + 8, static_cast<float>(v.spacing[1]));
    put_f32(hdr, 76 + 12, static_cast<float>(v.spacing[0]));
    put_f32(hdr, 108, 352.0f);  // vox_offset
    put_f32(hdr, 112, 1.0f);    // scl_slope
    put_f32(hdr, 116, 0.0f);    // scl_inter
    hdr[123] = 2;               // xyzt_units: mm
    std::strncpy(reinterpret_cast<char*>(hdr + 148), "soupsr", 79);
    put_i16(hdr, 254, 1);  // sform_code: scanner-aligned scaling
    put_f32(hdr, 280, static_cast<float>(v.spacing[2]));   // srow_x
    put_f32(hdr, 296 + 4, static_cast<float>(v.spacing[1]));  // srow_y
    put_f32(hdr, 312 + 8, static_cast<float>(v.spacing[0]));  // srow_z
    std::memcpy(hdr + 344, "n+1\0", 4);

    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("cannot open for writing: " + path);
    out.write(reinterpret_cast<const char*>(hdr), sizeof(hdr));
    out.write(reinterpret_cast<const char*>(v.data.data()),
              static_cast<std::streamsize>(v.data.size() * sizeof(float)));
    out.flush();
    if (!out) throw io_error("write failed: " + path);
}

} // namespace nifti
} // namespace soupsr
