#pragma once

#include <filesystem>
#include <fstream>
#include <string>

#include <nlohmann/json.hpp>

#include "soupsr/errors.hpp"
#include "soupsr/nifti.hpp"
#include "soupsr/volume.hpp"

namespace soupsr {

enum class VolumeFormat { nifti1, raw };

namespace rawio {

/// Sidecar path for a raw container: the final extension is replaced by
/// ".json", so "vol/brain.vol" pairs with "vol/brain.json".
inline std::string sidecar_path(const std::string& path) {
    std::filesystem::path p(path);
    p.replace_extension(".json");
    return p.string();
}

inline Volume read(const std::string& path) {
    const std::string side = sidecar_path(path);
    std::ifstream js(side);
    if (!js) throw io_error("cannot open raw sidecar: " + side);
    nlohmann::json j;
    try {
        js >> j;
    } catch (const nlohmann::json::exception& e) {
        throw format_error("bad raw sidecar JSON (" + side + "): " + e.what());
    }
    if (!j.contains("dims") || !j.contains("spacing_mm"))
        throw format_error("raw sidecar missing dims/spacing_mm: " + side);
    auto dims = j.at("dims");
    auto sp = j.at("spacing_mm");
    if (!dims.is_array() || dims.size() != 3 || !sp.is_array() || sp.size() != 3)
        throw format_error("raw sidecar dims/spacing_mm must be 3-element arrays: " + side);

    std::size_t z = dims[0].get<std::size_t>(), y = dims[1].get<std::size_t>(),
                x = dims[2].get<std::size_t>();
    if (z < 1 || y < 1 || x < 1) throw format_error("non-positive dims in sidecar: " + side);
    std::array<double, 3> spacing{sp[0].get<double>(), sp[1].get<double>(), sp[2].get<double>()};
    for (double s : spacing)
        if (!(std::isfinite(s) && s > 0)) throw format_error("bad spacing in sidecar: " + side);

    Volume v = make_volume(z, y, x, spacing, j.value("id", std::string{}));

    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open: " + path);
    in.seekg(0, std::ios::end);
    const std::size_t bytes = static_cast<std::size_t>(in.tellg());
    const std::size_t want = v.data.size() * sizeof(float);
    if (bytes != want)
        throw format_error("raw payload size " + std::to_string(bytes) + " != expected " +
                           std::to_string(want) + ": " + path);
    in.seekg(0);
    in.read(reinterpret_cast<char*>(v.data.data()), static_cast<std::streamsize>(want));
    if (!in) throw io_error("read failed: " + path);

    if (!v.data.all_finite()) throw data_error("NaN or infinite voxels in: " + path);
    record_intensity_range(v);
    return v;
}

inline void write(const Volume& v, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("cannot open for writing: " + path);
    out.write(reinterpret_cast<const char*>(v.data.data()),
              static_cast<std::streamsize>(v.data.size() * sizeof(float)));
    out.flush();
    if (!out) throw io_error("write failed: " + path);

    nlohmann::json j;
    j["dims"] = {v.zdim(), v.ydim(), v.xdim()};
    j["spacing_mm"] = {v.spacing[0], v.spacing[1], v.spacing[2]};
    j["id"] = v.id;
    const std::string side = sidecar_path(path);
    std::ofstream js(side);
    if (!js) throw io_error("cannot open for writing: " + side);
    js << j.dump(2) << "\n";
    js.flush();
    if (!js) throw io_error("write failed: " + side);
}

} // namespace rawio

inline Volume load_volume(const std::string& path, VolumeFormat format) {
    Volume v = format == VolumeFormat::nifti1 ? nifti::read(path) : rawio::read(path);
    if (v.id.empty()) v.id = std::filesystem::path(path).stem().string();
    validate(v);
    return v;
}

inline void save_volume(const Volume& v, const std::string& path, VolumeFormat format) {
    validate(v);
    if (format == VolumeFormat::nifti1)
        nifti::write(v, path);
    else
        rawio::write(v, path);
}

/// Picks the format from the file extension: .nii / .nii.gz -> nifti1,
/// .vol -> raw.
inline VolumeFormat format_from_path(const std::string& path) {
    if (nifti::detail::ends_with(path, ".nii") || nifti::detail::ends_with(path, ".nii.gz"))
        return VolumeFormat::nifti1;
    if (nifti::detail::ends_with(path, ".vol")) return VolumeFormat::raw;
    throw unsupported_error("cannot infer volume format from extension: " + path);
}

inline Volume load_volume(const std::string& path) {
    return load_volume(path, format_from_path(path));
}

inline void save_volume(const Volume& v, const std::string& path) {
    save_volume(v, path, format_from_path(path));
}

} // namespace soupsr
