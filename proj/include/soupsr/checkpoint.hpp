#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "soupsr/degrade.hpp"
#include "soupsr/errors.hpp"
#include "soupsr/nn/generator.hpp"
#include "soupsr/nn/tensor_archive.hpp"
#include "soupsr/volume.hpp"

namespace soupsr {

enum class Stage { mse_pretrained, perceptual_gan };

inline const char* to_string(Stage s) {
    return s == Stage::mse_pretrained ? "mse_pretrained" : "perceptual_gan";
}

inline Stage stage_from_string(const std::string& s) {
    if (s == "mse_pretrained") return Stage::mse_pretrained;
    if (s == "perceptual_gan") return Stage::perceptual_gan;
    throw config_error("unknown training stage: " + s);
}

inline nlohmann::json to_json(const GeneratorConfig& cfg) {
    return {{"base_channels", cfg.base_channels},
            {"n_residual_blocks", cfg.n_residual_blocks},
            {"block_type", to_string(cfg.block_type)},
            {"scales", cfg.scales}};
}

inline GeneratorConfig generator_config_from_json(const nlohmann::json& j) {
    GeneratorConfig cfg;
    cfg.base_channels = j.value("base_channels", cfg.base_channels);
    cfg.n_residual_blocks = j.value("n_residual_blocks", cfg.n_residual_blocks);
    cfg.block_type = block_type_from_string(j.value("block_type", std::string(to_string(cfg.block_type))));
    cfg.scales = j.value("scales", cfg.scales);
    validate(cfg);
    return cfg;
}

/// A trained (or initialized) multi-scale generator: shared backbone tensors
/// plus one pre/post module per integer scale, with provenance metadata.
struct MultiScaleCheckpoint {
    GeneratorConfig config;
    Stage stage = Stage::mse_pretrained;
    nlohmann::json meta = nlohmann::json::object();
    ParamSet<float> params;
};

inline MultiScaleCheckpoint make_checkpoint(const GeneratorConfig& cfg, std::uint64_t seed) {
    validate(cfg);
    MultiScaleCheckpoint ckpt;
    ckpt.config = cfg;
    ckpt.params = Generator<float>(cfg).init_params(seed);
    ckpt.meta["init_seed"] = seed;
    return ckpt;
}

inline void validate_checkpoint(const MultiScaleCheckpoint& ckpt) {
    validate(ckpt.config);
    ParamSet<float> proto = Generator<float>(ckpt.config).init_params(0);
    if (proto.size() != ckpt.params.size())
        throw corruption_error("checkpoint parameter count does not match its config");
    for (const auto& [name, t] : proto) {
        if (!ckpt.params.has(name))
            throw corruption_error("checkpoint is missing parameter " + name);
        if (ckpt.params.at(name).shape() != t.shape())
            throw corruption_error("checkpoint parameter " + name + " has an unexpected shape");
    }
    if (!ckpt.params.all_finite())
        throw corruption_error("checkpoint holds non-finite parameters");
}

namespace detail {

inline bool has_scale(const GeneratorConfig& cfg, int s) {
    return std::find(cfg.scales.begin(), cfg.scales.end(), s) != cfg.scales.end();
}

} // namespace detail

/// Effective parameters for a possibly fractional scale: the shared backbone
/// passes through unchanged; every per-scale tensor becomes the convex
/// combination (1-a) theta_m + a theta_{m+1} with a = s - m, exposed under
/// the blended "scale." prefix. Integer scales return their endpoint tensors
/// bit-exactly.
inline ParamSet<float> interpolate_params(const MultiScaleCheckpoint& ckpt, double s) {
    const std::vector<int>& scales = ckpt.config.scales;
    if (!(s >= scales.front() && s <= scales.back()))
        throw scale_range_error("scale " + std::to_string(s) + " outside checkpoint range [" +
                                std::to_string(scales.front()) + ", " +
                                std::to_string(scales.back()) + "]");
    ParamSet<float> out;
    for (const auto& [name, t] : ckpt.params)
        if (name.rfind("backbone.", 0) == 0) out.add(name, t);

    const double fl = std::floor(s);
    if (s == fl) {
        const std::string pf = scale_prefix(static_cast<int>(fl));
        for (const std::string& suffix : Generator<float>::per_scale_suffixes())
            out.add(std::string(kBlendedScalePrefix) + suffix, ckpt.params.at(pf + suffix));
        return out;
    }

    const int m = static_cast<int>(fl);
    if (!detail::has_scale(ckpt.config, m) || !detail::has_scale(ckpt.config, m + 1))
        throw scale_range_error("scale " + std::to_string(s) +
                                " has no neighboring integer scales in the checkpoint");
    const double alpha = s - fl;
    const std::string pa = scale_prefix(m), pb = scale_prefix(m + 1);
    for (const std::string& suffix : Generator<float>::per_scale_suffixes()) {
        const Tensor<float>& a = ckpt.params.at(pa + suffix);
        const Tensor<float>& b = ckpt.params.at(pb + suffix);
        Tensor<float> t = a.zeros_like();
        for (std::size_t i = 0; i < t.size(); ++i)
            t[i] = static_cast<float>((1.0 - alpha) * static_cast<double>(a[i]) +
                                      alpha * static_cast<double>(b[i]));
        out.add(std::string(kBlendedScalePrefix) + suffix, std::move(t));
    }
    return out;
}

/// Full inference pipeline: cubic pre-upsampling, then the learned residual
/// correction at the requested (possibly fractional) scale.
inline Volume generate(const MultiScaleCheckpoint& ckpt, const Volume& v, double s) {
    validate(ckpt.config);
    const std::vector<int>& scales = ckpt.config.scales;
    if (!(s >= scales.front() && s <= scales.back()))
        throw scale_range_error("scale " + std::to_string(s) + " outside checkpoint range [" +
                                std::to_string(scales.front()) + ", " +
                                std::to_string(scales.back()) + "]");
    Volume up = upsample_cubic(v, s);
    Generator<float> g(ckpt.config);
    Tensor<float> out;
    if (s == std::floor(s)) {
        out = g.forward(ckpt.params, scale_prefix(static_cast<int>(s)), up.data);
    } else {
        ParamSet<float> eff = interpolate_params(ckpt, s);
        out = g.forward(eff, kBlendedScalePrefix, up.data);
    }
    if (!out.all_finite())
        throw numerical_error("non-finite generator output for volume '" + v.id + "' at scale " +
                              std::to_string(s));
    Volume res = std::move(up);
    res.data = std::move(out);
    record_intensity_range(res);
    return res;
}

inline void save_checkpoint(const MultiScaleCheckpoint& ckpt, const std::filesystem::path& path) {
    validate_checkpoint(ckpt);
    nlohmann::json meta;
    meta["kind"] = "soup-checkpoint";
    meta["checkpoint_version"] = 1;
    meta["stage"] = to_string(ckpt.stage);
    meta["generator"] = to_json(ckpt.config);
    meta["meta"] = ckpt.meta;
    save_tensor_archive(path, ckpt.params, meta);
}

inline MultiScaleCheckpoint load_checkpoint(const std::filesystem::path& path) {
    TensorArchive ar = load_tensor_archive(path);
    MultiScaleCheckpoint ckpt;
    try {
        if (ar.meta.at("kind").get<std::string>() != "soup-checkpoint")
            throw format_error(path.string() + ": not a model checkpoint");
        if (ar.meta.at("checkpoint_version").get<int>() != 1)
            throw format_error(path.string() + ": unsupported checkpoint version");
        ckpt.stage = stage_from_string(ar.meta.at("stage").get<std::string>());
        ckpt.config = generator_config_from_json(ar.meta.at("generator"));
        ckpt.meta = ar.meta.value("meta", nlohmann::json::object());
    } catch (const nlohmann::json::exception& e) {
        throw format_error(path.string() + ": malformed checkpoint manifest: " + e.what());
    }
    ckpt.params = std::move(ar.tensors);
    validate_checkpoint(ckpt);
    return ckpt;
}

} // namespace soupsr
