#pragma once

#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "soupsr/errors.hpp"
#include "soupsr/nn/params.hpp"
#include "soupsr/zip.hpp"

namespace soupsr {

/// Archive layout shared by model checkpoints, extractor weights, and
/// optimizer state: a store-only zip holding manifest.json plus one raw
/// little-endian float32 blob per tensor under tensors/<name>.bin. The
/// manifest records every tensor's shape, so truncation and shape drift are
/// detected on load.

struct TensorArchive {
    nlohmann::json meta;  // manifest minus the tensor table
    ParamSet<float> tensors;
};

inline void save_tensor_archive(const std::filesystem::path& path, const ParamSet<float>& tensors,
                                const nlohmann::json& meta = nlohmann::json::object()) {
    nlohmann::json manifest = meta;
    manifest["format"] = "soup-tensors";
    manifest["format_version"] = 1;
    nlohmann::json table = nlohmann::json::object();
    for (const auto& [name, t] : tensors)
        table[name] = {{"shape", t.shape()}, {"dtype", "float32"}};
    manifest["tensors"] = table;

    ZipWriter zip(path.string());
    zip.add("manifest.json", manifest.dump(2) + "\n");
    for (const auto& [name, t] : tensors)
        zip.add("tensors/" + name + ".bin", t.data(), t.size() * sizeof(float));
    zip.finish();
}

inline TensorArchive load_tensor_archive(const std::filesystem::path& path) {
    ZipReader zip(path.string());
    TensorArchive ar;
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(zip.read("manifest.json"));
    } catch (const nlohmann::json::exception& e) {
        throw corruption_error(path.string() + ": malformed manifest: " + e.what());
    }
    try {
        if (manifest.at("format").get<std::string>() != "soup-tensors")
            throw format_error(path.string() + ": not a tensor archive");
        if (manifest.at("format_version").get<int>() != 1)
            throw format_error(path.string() + ": unsupported archive version");
        for (const auto& [name, desc] : manifest.at("tensors").items()) {
            const auto shape = desc.at("shape").get<std::vector<std::size_t>>();
            if (desc.at("dtype").get<std::string>() != "float32")
                throw format_error(path.string() + ": unsupported dtype for " + name);
            Tensor<float> t(shape);
            const std::string blob = zip.read("tensors/" + name + ".bin");
            if (blob.size() != t.size() * sizeof(float))
                throw corruption_error(path.string() + ": tensor " + name +
                                       " does not match its declared shape");
            std::memcpy(t.data(), blob.data(), blob.size());
            if (!t.all_finite())
                throw corruption_error(path.string() + ": tensor " + name +
                                       " holds non-finite values");
            ar.tensors.add(name, std::move(t));
        }
        manifest.erase("tensors");
        ar.meta = std::move(manifest);
    } catch (const nlohmann::json::exception& e) {
        throw corruption_error(path.string() + ": malformed manifest: " + e.what());
    }
    return ar;
}

} // namespace soupsr
