#pragma once

#include <array>
#include <cstdio>
#include <string>
#include <vector>

#include "soupsr/errors.hpp"
#include "soupsr/nn/ops.hpp"
#include "soupsr/nn/params.hpp"
#include "soupsr/nn/tensor_archive.hpp"
#include "soupsr/rng.hpp"

namespace soupsr {

enum class Plane { axial, sagittal, coronal };

inline const char* to_string(Plane p) {
    switch (p) {
        case Plane::axial: return "axial";
        case Plane::sagittal: return "sagittal";
        case Plane::coronal: return "coronal";
    }
    return "?";
}

inline Plane plane_from_string(const std::string& s) {
    if (s == "axial") return Plane::axial;
    if (s == "sagittal") return Plane::sagittal;
    if (s == "coronal") return Plane::coronal;
    throw config_error("unknown plane: " + s);
}

struct PerceptualConfig {
    std::string feature_layer = "block5_conv4_preactivation";
    std::vector<Plane> planes{Plane::axial, Plane::sagittal, Plane::coronal};
    std::size_t slice_batch = 16;
    std::string channel_mode = "replicate_gray_to_3";
    std::string weights_path;         // optional tensor archive with extractor weights
    std::uint64_t extractor_seed = 0x50555047ull;  // substitute-weight stream
};

inline void validate(const PerceptualConfig& cfg) {
    if (cfg.planes.empty()) throw config_error("perceptual planes must be non-empty");
    if (cfg.slice_batch < 1) throw config_error("slice_batch must be >= 1");
    if (cfg.channel_mode != "replicate_gray_to_3")
        throw config_error("unsupported channel_mode: " + cfg.channel_mode);
}

/// 19-layer VGG-style convolutional feature extractor over 2D slices, frozen
/// weights, evaluated up to a named convolution before its activation
/// ("block5_conv4_preactivation" is the classic perceptual-loss tap). The
/// special layer name "identity" bypasses the network entirely: features are
/// the raw slice pixels, which turns the perceptual distance into plain MSE.
///
/// Weights come from a tensor archive when configured; otherwise a seeded
/// substitute initialization is used, which keeps the loss a deterministic,
/// dense, multi-scale feature distance without any network download.
template <typename T>
class FeatureExtractor {
public:
    explicit FeatureExtractor(const PerceptualConfig& cfg) {
        validate(cfg);
        parse_layer(cfg.feature_layer);
        if (identity_) return;
        build_plan();
        if (!cfg.weights_path.empty()) {
            TensorArchive ar = load_tensor_archive(cfg.weights_path);
            ParamSet<float> loaded;
            for (const std::string& name : conv_names_) {
                if (!ar.tensors.has(name + ".w") || !ar.tensors.has(name + ".b"))
                    throw format_error("extractor weights are missing " + name);
                loaded.add(name + ".w", ar.tensors.at(name + ".w"));
                loaded.add(name + ".b", ar.tensors.at(name + ".b"));
            }
            params_ = loaded.template cast<T>();
            validate_shapes();
        } else {
            init_substitute(cfg.extractor_seed);
        }
    }

    bool identity() const { return identity_; }

    /// Slices narrower than this per axis are bilinearly upscaled before
    /// extraction; the bound keeps the target layer's receptive grid at
    /// least 3x3.
    std::size_t min_input() const {
        return identity_ ? 1 : std::size_t(3) << (target_block_ - 1);
    }

    struct Cache {
        std::size_t raw_h = 0, raw_w = 0;
        bool resized = false;
        std::size_t net_h = 0, net_w = 0;
        struct Step {
            int kind = 0;  // 0 conv, 1 relu, 2 pool
            std::size_t conv_index = 0;
            std::size_t in_h = 0, in_w = 0;
            Tensor<T> relu_out;
            nn::Pool2dResult<T> pool;
        };
        std::vector<Step> steps;
    };

    /// slices: (N, 1, H, W) grayscale in [0, 1]. Returns (N, C, h, w)
    /// pre-activation features.
    Tensor<T> features_train(const Tensor<T>& slices, Cache& c) const {
        if (slices.rank() != 4 || slices.dim(1) != 1)
            throw shape_error("extractor expects (N,1,H,W) slices");
        c.raw_h = slices.dim(2);
        c.raw_w = slices.dim(3);
        c.steps.clear();
        if (identity_) return slices;

        Tensor<T> x = preprocess(slices);
        const std::size_t want_h = std::max(c.raw_h, min_input());
        const std::size_t want_w = std::max(c.raw_w, min_input());
        c.resized = want_h != c.raw_h || want_w != c.raw_w;
        if (c.resized) x = nn::bilinear_resize2d(x, want_h, want_w);
        c.net_h = want_h;
        c.net_w = want_w;

        for (const PlanStep& step : plan_) {
            typename Cache::Step cs;
            cs.kind = step.kind;
            if (step.kind == 0) {
                cs.conv_index = step.conv_index;
                cs.in_h = x.dim(2);
                cs.in_w = x.dim(3);
                const std::string& name = conv_names_[step.conv_index];
                x = nn::conv2d(x, params_.at(name + ".w"), params_.at(name + ".b"), 1, 1);
            } else if (step.kind == 1) {
                nn::relu_inplace(x);
                cs.relu_out = x;
            } else {
                cs.in_h = x.dim(2);
                cs.in_w = x.dim(3);
                cs.pool = nn::maxpool2d(x);
                x = cs.pool.y;
            }
            c.steps.push_back(std::move(cs));
        }
        if (!x.all_finite()) throw numerical_error("non-finite extractor features");
        return x;
    }

    Tensor<T> features(const Tensor<T>& slices) const {
        Cache c;
        return features_train(slices, c);
    }

    /// Input gradient: dfeat has the features_train output shape, the result
    /// has the slices shape (N, 1, H, W).
    Tensor<T> backward(const Cache& c, const Tensor<T>& dfeat) const {
        if (identity_) return dfeat;
        Tensor<T> g = dfeat;
        for (std::size_t i = c.steps.size(); i-- > 0;) {
            const typename Cache::Step& cs = c.steps[i];
            if (cs.kind == 0) {
                const std::string& name = conv_names_[cs.conv_index];
                g = nn::conv2d_backward_input(params_.at(name + ".w"), g, cs.in_h, cs.in_w, 1, 1);
            } else if (cs.kind == 1) {
                nn::relu_backward_inplace(cs.relu_out, g);
            } else {
                g = nn::maxpool2d_backward(cs.pool, g, cs.in_h, cs.in_w);
            }
        }
        if (c.resized) g = nn::bilinear_resize2d_backward(g, c.raw_h, c.raw_w);

        // fold the replicated channels back onto the single gray channel
        const std::size_t n = g.dim(0), h = g.dim(2), w = g.dim(3);
        Tensor<T> dgray({n, 1, h, w});
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t ch = 0; ch < 3; ++ch) {
                const T inv_std = T(1) / kStd[ch];
                const T* src = g.data() + (i * 3 + ch) * h * w;
                T* dst = dgray.data() + i * h * w;
                for (std::size_t p = 0; p < h * w; ++p) dst[p] += src[p] * inv_std;
            }
        return dgray;
    }

    const ParamSet<T>& params() const { return params_; }

private:
    static constexpr std::array<T, 3> kMean{static_cast<T>(0.485), static_cast<T>(0.456),
                                            static_cast<T>(0.406)};
    static constexpr std::array<T, 3> kStd{static_cast<T>(0.229), static_cast<T>(0.224),
                                           static_cast<T>(0.225)};
    static constexpr std::array<std::size_t, 5> kBlockConvs{2, 2, 4, 4, 4};
    static constexpr std::array<std::size_t, 5> kBlockChannels{64, 128, 256, 512, 512};

    struct PlanStep {
        int kind;  // 0 conv, 1 relu, 2 pool
        std::size_t conv_index;
    };

    void parse_layer(const std::string& layer) {
        if (layer == "identity") {
            identity_ = true;
            return;
        }
        unsigned block = 0, conv = 0;
        if (std::sscanf(layer.c_str(), "block%u_conv%u_preactivation", &block, &conv) != 2 ||
            block < 1 || block > 5 || conv < 1 || conv > kBlockConvs[block - 1])
            throw config_error("unknown feature layer: " + layer +
                               " (expected blockB_convC_preactivation or identity)");
        target_block_ = block;
        target_conv_ = conv;
    }

    void build_plan() {
        std::size_t cin = 3;
        for (std::size_t b = 1; b <= target_block_; ++b) {
            const std::size_t n_convs = b == target_block_ ? target_conv_ : kBlockConvs[b - 1];
            for (std::size_t cv = 1; cv <= n_convs; ++cv) {
                conv_names_.push_back("conv" + std::to_string(b) + "_" + std::to_string(cv));
                conv_shapes_.push_back({kBlockChannels[b - 1], cin, 3, 3});
                cin = kBlockChannels[b - 1];
                plan_.push_back({0, conv_names_.size() - 1});
                const bool is_target = b == target_block_ && cv == target_conv_;
                if (!is_target) plan_.push_back({1, 0});
            }
            if (b < target_block_) plan_.push_back({2, 0});
        }
    }

    void init_substitute(std::uint64_t seed) {
        for (std::size_t i = 0; i < conv_names_.size(); ++i) {
            const auto& s = conv_shapes_[i];
            Tensor<T>& w = params_.add(conv_names_[i] + ".w",
                                       std::vector<std::size_t>{s[0], s[1], s[2], s[3]});
            params_.add(conv_names_[i] + ".b", std::vector<std::size_t>{s[0]});
            nn::he_fill(w, s[1] * s[2] * s[3], derive_seed(seed, conv_names_[i]));
        }
    }

    void validate_shapes() const {
        for (std::size_t i = 0; i < conv_names_.size(); ++i) {
            const auto& s = conv_shapes_[i];
            const Tensor<T>& w = params_.at(conv_names_[i] + ".w");
            if (w.shape() != std::vector<std::size_t>{s[0], s[1], s[2], s[3]})
                throw format_error("extractor weight " + conv_names_[i] +
                                   " has an unexpected shape");
            if (params_.at(conv_names_[i] + ".b").shape() != std::vector<std::size_t>{s[0]})
                throw format_error("extractor bias " + conv_names_[i] +
                                   " has an unexpected shape");
        }
    }

    /// Replicates gray to 3 channels and applies the extractor's published
    /// per-channel normalization.
    Tensor<T> preprocess(const Tensor<T>& slices) const {
        const std::size_t n = slices.dim(0), h = slices.dim(2), w = slices.dim(3);
        Tensor<T> out({n, 3, h, w});
        for (std::size_t i = 0; i < n; ++i) {
            const T* src = slices.data() + i * h * w;
            for (std::size_t ch = 0; ch < 3; ++ch) {
                const T mean = kMean[ch], inv_std = T(1) / kStd[ch];
                T* dst = out.data() + (i * 3 + ch) * h * w;
                for (std::size_t p = 0; p < h * w; ++p) dst[p] = (src[p] - mean) * inv_std;
            }
        }
        return out;
    }

    bool identity_ = false;
    std::size_t target_block_ = 5;
    std::size_t target_conv_ = 4;
    std::vector<std::string> conv_names_;
    std::vector<std::array<std::size_t, 4>> conv_shapes_;
    std::vector<PlanStep> plan_;
    ParamSet<T> params_;
};

} // namespace soupsr
