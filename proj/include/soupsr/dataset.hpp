#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "soupsr/degrade.hpp"
#include "soupsr/errors.hpp"
#include "soupsr/rng.hpp"
#include "soupsr/sha256.hpp"
#include "soupsr/tensor.hpp"
#include "soupsr/volume.hpp"

namespace soupsr {

enum class Split { train, val, test };

inline const char* to_string(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::val: return "val";
        case Split::test: return "test";
    }
    return "?";
}

inline Split split_from_string(const std::string& s) {
    if (s == "train") return Split::train;
    if (s == "val") return Split::val;
    if (s == "test") return Split::test;
    throw config_error("unknown split tag: " + s);
}

/// One (volume, degradation) combination feeding the corpus.
struct SourceSpec {
    std::string volume_id;
    std::string path;    // empty for in-memory volumes
    std::string sha256;  // hash of the normalized voxel bytes
    DegradationSpec spec;
};

/// Descriptor of one patch pair; pixel data is re-extracted on demand.
struct PatchEntry {
    std::string volume_id;
    std::size_t source = 0;  // index into DatasetManifest::sources
    std::array<std::size_t, 3> offset{0, 0, 0};
    Split split = Split::train;
    int scale = 2;
};

struct PatchPair {
    Tensor<float> input_patch;   // degraded + cubic-upsampled source
    Tensor<float> target_patch;  // ground-truth patch over the same extent
    std::string volume_id;
    std::array<std::size_t, 3> offset{0, 0, 0};
    Split split = Split::train;
    int scale = 2;
};

struct DatasetManifest {
    int manifest_version = 1;
    std::uint64_t seed = 0;
    std::array<double, 3> ratios{0.8, 0.1, 0.1};
    std::size_t patch_size = 32;
    std::size_t stride = 32;
    std::vector<SourceSpec> sources;
    std::vector<PatchEntry> entries;  // shuffled order; split tags assigned within
    std::vector<std::string> warnings;

    std::size_t split_size(Split s) const {
        std::size_t n = 0;
        for (const PatchEntry& e : entries)
            if (e.split == s) ++n;
        return n;
    }

    /// Indices into entries belonging to one split, in manifest order.
    std::vector<std::size_t> split_entry_indices(Split s) const {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < entries.size(); ++i)
            if (entries[i].split == s) idx.push_back(i);
        return idx;
    }
};

namespace detail {

/// Bucket sizes for the given ratios by largest remainder; when remainders
/// tie, the later bucket wins (a lone patch goes to the largest ratio first).
inline std::array<std::size_t, 3> split_counts(std::size_t n, const std::array<double, 3>& ratios) {
    double sum = ratios[0] + ratios[1] + ratios[2];
    if (!(sum > 0) || ratios[0] < 0 || ratios[1] < 0 || ratios[2] < 0)
        throw config_error("split ratios must be non-negative and sum to a positive value");
    std::array<std::size_t, 3> counts{};
    std::array<double, 3> rem{};
    std::size_t assigned = 0;
    for (int i = 0; i < 3; ++i) {
        double exact = static_cast<double>(n) * ratios[static_cast<std::size_t>(i)] / sum;
        counts[static_cast<std::size_t>(i)] = static_cast<std::size_t>(std::floor(exact));
        rem[static_cast<std::size_t>(i)] = exact - std::floor(exact);
        assigned += counts[static_cast<std::size_t>(i)];
    }
    while (assigned < n) {
        int best = 0;
        for (int i = 1; i < 3; ++i)
            if (rem[static_cast<std::size_t>(i)] >= rem[static_cast<std::size_t>(best)]) best = i;
        ++counts[static_cast<std::size_t>(best)];
        rem[static_cast<std::size_t>(best)] = -1.0;
        ++assigned;
    }
    return counts;
}

inline std::size_t tiles_along(std::size_t dim, std::size_t patch, std::size_t stride) {
    return dim < patch ? 0 : (dim - patch) / stride + 1;
}

inline Tensor<float> extract_patch(const Tensor<float>& t, const std::array<std::size_t, 3>& off,
                                   std::size_t n) {
    Tensor<float> p({n, n, n});
    const std::size_t ny = t.dim(1), nx = t.dim(2);
    for (std::size_t z = 0; z < n; ++z)
        for (std::size_t y = 0; y < n; ++y) {
            const float* src = t.data() + ((off[0] + z) * ny + off[1] + y) * nx + off[2];
            std::copy(src, src + n, p.data() + (z * n + y) * n);
        }
    return p;
}

inline std::string volume_sha256(const Volume& v) {
    return sha256_hex(reinterpret_cast<const unsigned char*>(v.data.data()),
                      v.data.size() * sizeof(float));
}

} // namespace detail

/// Noise stream seed for one source; derived so rebuilding the corpus from
/// the manifest reproduces the same synthesized inputs.
inline std::uint64_t source_noise_seed(const DatasetManifest& m, std::size_t source_index) {
    return derive_seed(m.seed, m.sources[source_index].volume_id, source_index);
}

/// Runs degrade + upsample for one source volume and aligns input/target by
/// center-cropping both to their common dims.
inline std::pair<Volume, Volume> prepare_pair(const Volume& hr, const DegradationSpec& spec,
                                              std::uint64_t noise_seed) {
    Volume norm = normalize(hr);
    Volume lr = degrade(norm, spec, noise_seed);
    Volume up = upsample_cubic(lr, static_cast<double>(spec.s));
    const std::size_t zc = std::min(up.zdim(), norm.zdim());
    Volume input = center_crop(up, zc, up.ydim(), up.xdim());
    Volume target = center_crop(norm, zc, norm.ydim(), norm.xdim());
    return {std::move(input), std::move(target)};
}

/// Builds the patch-pair corpus: every volume is normalized, degraded with
/// every spec, pre-upsampled, tiled into patch_size^3 pairs at the given
/// stride, shuffled with the seed, and split by the 8:1:1 ratios. Volumes too
/// small to yield a patch are skipped with a warning entry; zero patches
/// overall is a configuration error.
inline DatasetManifest build_dataset(const std::vector<Volume>& volumes,
                                     const std::vector<DegradationSpec>& specs,
                                     std::size_t stride, std::uint64_t seed,
                                     std::size_t patch_size = 32,
                                     std::array<double, 3> ratios = {0.8, 0.1, 0.1},
                                     const std::vector<std::string>& paths = {}) {
    if (patch_size < 1) throw config_error("patch_size must be >= 1");
    if (stride < 1 || stride > patch_size)
        throw config_error("stride must lie in [1, patch_size]");
    if (specs.empty()) throw config_error("at least one degradation spec is required");
    if (!paths.empty() && paths.size() != volumes.size())
        throw config_error("paths, when given, must parallel volumes");
    for (const DegradationSpec& spec : specs) validate_spec(spec);

    {
        std::vector<std::string> ids;
        for (const Volume& v : volumes) ids.push_back(v.id);
        std::sort(ids.begin(), ids.end());
        if (std::adjacent_find(ids.begin(), ids.end()) != ids.end())
            throw data_error("volume ids must be unique within a dataset");
    }

    DatasetManifest m;
    m.seed = seed;
    m.ratios = ratios;
    m.patch_size = patch_size;
    m.stride = stride;

    for (std::size_t vi = 0; vi < volumes.size(); ++vi) {
        const Volume& v = volumes[vi];
        validate(v);
        const std::string sha = detail::volume_sha256(normalize(v));
        for (const DegradationSpec& spec : specs) {
            const std::size_t source_index = m.sources.size();
            m.sources.push_back({v.id, paths.empty() ? std::string{} : paths[vi], sha, spec});

            const std::size_t s = static_cast<std::size_t>(spec.s);
            const std::size_t zlr = spec.mode == DegradeMode::thin_to_thick
                                        ? v.zdim() / s
                                        : (v.zdim() + s - 1) / s;
            if (v.zdim() < s || zlr < 4) {
                m.warnings.push_back("skipped " + v.id + " at s=" + std::to_string(spec.s) +
                                     ": too few slices after degradation");
                continue;
            }
            auto [input, target] = prepare_pair(v, spec, source_noise_seed(m, source_index));
            const std::size_t tz = detail::tiles_along(target.zdim(), patch_size, stride);
            const std::size_t ty = detail::tiles_along(target.ydim(), patch_size, stride);
            const std::size_t tx = detail::tiles_along(target.xdim(), patch_size, stride);
            if (tz == 0 || ty == 0 || tx == 0) {
                m.warnings.push_back("skipped " + v.id + " at s=" + std::to_string(spec.s) +
                                     ": too small for a " + std::to_string(patch_size) +
                                     "^3 patch");
                continue;
            }
            for (std::size_t z = 0; z < tz; ++z)
                for (std::size_t y = 0; y < ty; ++y)
                    for (std::size_t x = 0; x < tx; ++x)
                        m.entries.push_back({v.id, source_index,
                                             {z * stride, y * stride, x * stride}, Split::train,
                                             spec.s});
        }
    }

    if (m.entries.empty()) throw config_error("dataset yields zero patches");

    Rng rng(seed);
    rng.shuffle(m.entries);
    const std::array<std::size_t, 3> counts = detail::split_counts(m.entries.size(), ratios);
    for (std::size_t i = 0; i < m.entries.size(); ++i)
        m.entries[i].split = i < counts[0]           ? Split::train
                             : i < counts[0] + counts[1] ? Split::val
                                                         : Split::test;
    return m;
}

inline DatasetManifest build_dataset(const std::vector<Volume>& volumes,
                                     const DegradationSpec& spec, std::size_t stride,
                                     std::uint64_t seed, std::size_t patch_size = 32) {
    return build_dataset(volumes, std::vector<DegradationSpec>{spec}, stride, seed, patch_size);
}

/// Pairs a manifest with its source volumes and re-extracts patch pixels on
/// demand. Prepared (degraded + upsampled, aligned) volumes are cached per
/// source; loading is safe from multiple threads.
class PatchSource {
public:
    PatchSource(DatasetManifest manifest, std::vector<Volume> volumes)
        : manifest_(std::move(manifest)), volumes_(std::move(volumes)) {
        for (std::size_t i = 0; i < volumes_.size(); ++i) {
            if (by_id_.count(volumes_[i].id))
                throw data_error("volume ids must be unique within a dataset");
            by_id_[volumes_[i].id] = i;
        }
        for (const SourceSpec& s : manifest_.sources) {
            auto it = by_id_.find(s.volume_id);
            if (it == by_id_.end())
                throw data_error("manifest references volume " + s.volume_id +
                                 " that was not provided");
            if (!s.sha256.empty() &&
                detail::volume_sha256(normalize(volumes_[it->second])) != s.sha256)
                throw data_error("volume " + s.volume_id +
                                 " does not match the manifest checksum");
        }
        prepared_.resize(manifest_.sources.size());
    }

    const DatasetManifest& manifest() const { return manifest_; }

    std::size_t split_size(Split s) const { return manifest_.split_size(s); }

    /// Loads by absolute entry index (into manifest().entries).
    PatchPair load_entry(std::size_t entry_index) const {
        if (entry_index >= manifest_.entries.size())
            throw index_error("entry index out of range");
        const PatchEntry& e = manifest_.entries[entry_index];
        const Prepared& p = prepared(e.source);
        const std::size_t n = manifest_.patch_size;
        PatchPair pair;
        pair.input_patch = detail::extract_patch(p.input, e.offset, n);
        pair.target_patch = detail::extract_patch(p.target, e.offset, n);
        pair.volume_id = e.volume_id;
        pair.offset = e.offset;
        pair.split = e.split;
        pair.scale = e.scale;
        return pair;
    }

    /// Loads by per-split index: index i is the i-th entry of that split in
    /// manifest order.
    std::vector<PatchPair> load_batch(Split split, const std::vector<std::size_t>& indices) const {
        std::vector<std::size_t> map = manifest_.split_entry_indices(split);
        std::vector<PatchPair> out;
        out.reserve(indices.size());
        for (std::size_t i : indices) {
            if (i >= map.size()) throw index_error("batch index out of range for split");
            out.push_back(load_entry(map[i]));
        }
        return out;
    }

private:
    struct Prepared {
        bool ready = false;
        Tensor<float> input;
        Tensor<float> target;
    };

    const Prepared& prepared(std::size_t source_index) const {
        std::lock_guard<std::mutex> lock(mutex_);
        Prepared& p = prepared_[source_index];
        if (!p.ready) {
            const SourceSpec& s = manifest_.sources[source_index];
            const Volume& hr = volumes_[by_id_.at(s.volume_id)];
            auto [input, target] =
                prepare_pair(hr, s.spec, source_noise_seed(manifest_, source_index));
            p.input = std::move(input.data);
            p.target = std::move(target.data);
            p.ready = true;
        }
        return p;
    }

    DatasetManifest manifest_;
    std::vector<Volume> volumes_;
    std::map<std::string, std::size_t> by_id_;
    mutable std::vector<Prepared> prepared_;
    mutable std::mutex mutex_;
};

inline std::vector<PatchPair> load_batch(const PatchSource& source, Split split,
                                         const std::vector<std::size_t>& indices) {
    return source.load_batch(split, indices);
}

// ---- manifest (de)serialization ----

inline nlohmann::json to_json(const DegradationSpec& s) {
    return {{"mode", to_string(s.mode)},
            {"s", s.s},
            {"gaussian_sigma", s.gaussian_sigma},
            {"noise_sigma", s.noise_sigma}};
}

inline DegradationSpec degradation_spec_from_json(const nlohmann::json& j) {
    DegradationSpec s;
    try {
        s.mode = degrade_mode_from_string(j.at("mode").get<std::string>());
        s.s = j.at("s").get<int>();
        s.gaussian_sigma = j.at("gaussian_sigma").get<double>();
        s.noise_sigma = j.at("noise_sigma").get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw format_error(std::string("malformed degradation spec: ") + e.what());
    }
    return s;
}

inline nlohmann::json to_json(const DatasetManifest& m) {
    nlohmann::json j;
    j["manifest_version"] = m.manifest_version;
    j["seed"] = m.seed;
    j["ratios"] = m.ratios;
    j["patch_size"] = m.patch_size;
    j["stride"] = m.stride;
    j["sources"] = nlohmann::json::array();
    for (const SourceSpec& s : m.sources)
        j["sources"].push_back({{"volume_id", s.volume_id},
                                {"path", s.path},
                                {"sha256", s.sha256},
                                {"spec", to_json(s.spec)}});
    j["entries"] = nlohmann::json::array();
    for (const PatchEntry& e : m.entries)
        j["entries"].push_back({{"volume_id", e.volume_id},
                                {"source", e.source},
                                {"offset", e.offset},
                                {"split", to_string(e.split)},
                                {"scale", e.scale}});
    j["warnings"] = m.warnings;
    return j;
}

inline DatasetManifest manifest_from_json(const nlohmann::json& j) {
    DatasetManifest m;
    try {
        m.manifest_version = j.at("manifest_version").get<int>();
        if (m.manifest_version != 1)
            throw format_error("unsupported manifest_version " +
                               std::to_string(m.manifest_version));
        m.seed = j.at("seed").get<std::uint64_t>();
        m.ratios = j.at("ratios").get<std::array<double, 3>>();
        m.patch_size = j.at("patch_size").get<std::size_t>();
        m.stride = j.at("stride").get<std::size_t>();
        for (const nlohmann::json& js : j.at("sources")) {
            SourceSpec s;
            s.volume_id = js.at("volume_id").get<std::string>();
            s.path = js.at("path").get<std::string>();
            s.sha256 = js.at("sha256").get<std::string>();
            s.spec = degradation_spec_from_json(js.at("spec"));
            m.sources.push_back(std::move(s));
        }
        for (const nlohmann::json& je : j.at("entries")) {
            PatchEntry e;
            e.volume_id = je.at("volume_id").get<std::string>();
            e.source = je.at("source").get<std::size_t>();
            e.offset = je.at("offset").get<std::array<std::size_t, 3>>();
            e.split = split_from_string(je.at("split").get<std::string>());
            e.scale = je.at("scale").get<int>();
            if (e.source >= m.sources.size())
                throw format_error("manifest entry references missing source");
            m.entries.push_back(std::move(e));
        }
        m.warnings = j.at("warnings").get<std::vector<std::string>>();
    } catch (const nlohmann::json::exception& e) {
        throw format_error(std::string("malformed dataset manifest: ") + e.what());
    }
    return m;
}

inline void save_manifest(const DatasetManifest& m, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("cannot open " + path.string() + " for writing");
    out << to_json(m).dump(2) << '\n';
    if (!out) throw io_error("failed writing " + path.string());
}

inline DatasetManifest load_manifest(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw format_error(std::string("malformed dataset manifest: ") + e.what());
    }
    return manifest_from_json(j);
}

} // namespace soupsr
