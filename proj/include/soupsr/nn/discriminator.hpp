#pragma once

#include <string>
#include <vector>

#include "soupsr/errors.hpp"
#include "soupsr/nn/ops.hpp"
#include "soupsr/nn/params.hpp"
#include "soupsr/rng.hpp"

namespace soupsr {

struct DiscriminatorConfig {
    std::vector<int> channels{32, 64, 128, 256};
    std::size_t input_patch = 32;
};

inline void validate(const DiscriminatorConfig& cfg) {
    if (cfg.channels.size() < 2) throw config_error("discriminator needs at least 2 stages");
    for (int c : cfg.channels)
        if (c < 1) throw config_error("discriminator channels must be >= 1");
    if (cfg.input_patch < 2) throw config_error("discriminator input_patch must be >= 2");
}

/// Patch realism critic: a stack of 3D convolutions (the first at stride 1,
/// the rest at stride 2) with leaky rectifier activations, global average
/// pooling, and a linear head producing one logit. The head starts at zero,
/// so an untrained critic outputs probability one half everywhere.
template <typename T>
class Discriminator {
public:
    static constexpr T kLeakySlope = static_cast<T>(0.2);

    explicit Discriminator(DiscriminatorConfig cfg) : cfg_(std::move(cfg)) { validate(cfg_); }

    const DiscriminatorConfig& config() const { return cfg_; }

    ParamSet<T> init_params(std::uint64_t seed) const {
        ParamSet<T> p;
        std::size_t cin = 1;
        for (std::size_t i = 0; i < cfg_.channels.size(); ++i) {
            const std::size_t cout = static_cast<std::size_t>(cfg_.channels[i]);
            const std::string base = "d.s" + std::to_string(i);
            Tensor<T>& w = p.add(base + ".w", {cout, cin, 3, 3, 3});
            p.add(base + ".b", std::vector<std::size_t>{cout});
            nn::he_fill(w, cin * 27, derive_seed(seed, base + ".w"));
            cin = cout;
        }
        p.add("d.head.w", std::vector<std::size_t>{1, cin});
        p.add("d.head.b", std::vector<std::size_t>{1});
        return p;
    }

    struct Cache {
        Tensor<T> x4;
        std::vector<Tensor<T>> acts;  // post-activation stage outputs
        Tensor<T> pooled;
    };

    T forward_train(const ParamSet<T>& p, const Tensor<T>& patch, Cache& c) const {
        if (patch.rank() != 3 || patch.dim(0) != cfg_.input_patch ||
            patch.dim(1) != cfg_.input_patch || patch.dim(2) != cfg_.input_patch)
            throw shape_error("discriminator expects a " + std::to_string(cfg_.input_patch) +
                              "^3 patch");
        c.x4 = Tensor<T>({1, patch.dim(0), patch.dim(1), patch.dim(2)});
        std::copy(patch.begin(), patch.end(), c.x4.begin());
        c.acts.clear();

        const Tensor<T>* cur = &c.x4;
        for (std::size_t i = 0; i < cfg_.channels.size(); ++i) {
            const std::string base = "d.s" + std::to_string(i);
            Tensor<T> h = nn::conv3d(*cur, p.at(base + ".w"), p.at(base + ".b"), i == 0 ? 1 : 2, 1);
            nn::leaky_relu_inplace(h, kLeakySlope);
            c.acts.push_back(std::move(h));
            cur = &c.acts.back();
        }
        c.pooled = nn::global_avg_pool3d(*cur);
        Tensor<T> logit = nn::linear(c.pooled, p.at("d.head.w"), p.at("d.head.b"));
        return logit[0];
    }

    T forward(const ParamSet<T>& p, const Tensor<T>& patch) const {
        Cache c;
        return forward_train(p, patch, c);
    }

    /// Accumulates parameter gradients for loss derivative dlogit; when
    /// dpatch is non-null, also accumulates the input gradient (the GAN
    /// generator step needs it).
    void backward(const ParamSet<T>& p, const Cache& c, T dlogit, ParamSet<T>& grads,
                  Tensor<T>* dpatch) const {
        Tensor<T> dlog({1});
        dlog[0] = dlogit;
        Tensor<T> dpool = c.pooled.zeros_like();
        nn::linear_backward(c.pooled, p.at("d.head.w"), dlog, &grads.at("d.head.w"),
                            &grads.at("d.head.b"), &dpool);

        Tensor<T> dact = c.acts.back().zeros_like();
        nn::global_avg_pool3d_backward(dpool, dact);

        for (std::size_t i = cfg_.channels.size(); i-- > 0;) {
            const std::string base = "d.s" + std::to_string(i);
            nn::leaky_relu_backward_inplace(c.acts[i], dact, kLeakySlope);
            const Tensor<T>& in = i == 0 ? c.x4 : c.acts[i - 1];
            const bool need_dx = i > 0 || dpatch != nullptr;
            Tensor<T> din;
            if (need_dx) din = in.zeros_like();
            nn::conv3d_backward(in, p.at(base + ".w"), dact, i == 0 ? 1 : 2, 1,
                                &grads.at(base + ".w"), &grads.at(base + ".b"),
                                need_dx ? &din : nullptr);
            dact = std::move(din);
        }
        if (dpatch) {
            const T* s = dact.data();
            T* d = dpatch->data();
            for (std::size_t i = 0; i < dpatch->size(); ++i) d[i] += s[i];
        }
    }

private:
    DiscriminatorConfig cfg_;
};

} // namespace soupsr
