#pragma once

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "soupsr/errors.hpp"
#include "soupsr/nn/ops.hpp"
#include "soupsr/nn/params.hpp"
#include "soupsr/rng.hpp"

namespace soupsr {

enum class BlockType { plain_residual, rrdb };

inline const char* to_string(BlockType t) {
    return t == BlockType::plain_residual ? "plain_residual" : "rrdb";
}

inline BlockType block_type_from_string(const std::string& s) {
    if (s == "plain_residual") return BlockType::plain_residual;
    if (s == "rrdb") return BlockType::rrdb;
    throw config_error("unknown block type: " + s);
}

struct GeneratorConfig {
    int base_channels = 64;
    int n_residual_blocks = 8;
    BlockType block_type = BlockType::plain_residual;
    std::vector<int> scales{2, 3, 4, 5, 6};
};

inline void validate(const GeneratorConfig& cfg) {
    if (cfg.base_channels < 1) throw config_error("base_channels must be >= 1");
    if (cfg.n_residual_blocks < 1) throw config_error("n_residual_blocks must be >= 1");
    if (cfg.scales.empty()) throw config_error("scales must be non-empty");
    if (cfg.scales.front() < 2) throw config_error("scales must start at 2 or above");
    for (std::size_t i = 1; i < cfg.scales.size(); ++i)
        if (cfg.scales[i] != cfg.scales[i - 1] + 1)
            throw config_error("scales must be consecutive integers");
}

inline std::string scale_prefix(int s) { return "scale" + std::to_string(s) + "."; }

/// Prefix of the effective per-scale tensors produced by parameter
/// interpolation for fractional scales.
inline constexpr const char* kBlendedScalePrefix = "scale.";

namespace nn {

template <typename T>
inline Tensor<T> concat_channels(const std::vector<const Tensor<T>*>& parts) {
    std::size_t ctot = 0;
    for (const Tensor<T>* p : parts) ctot += p->dim(0);
    const Tensor<T>& first = *parts.front();
    Tensor<T> out({ctot, first.dim(1), first.dim(2), first.dim(3)});
    const std::size_t vol = first.dim(1) * first.dim(2) * first.dim(3);
    T* dst = out.data();
    for (const Tensor<T>* p : parts) {
        std::copy(p->data(), p->data() + p->size(), dst);
        dst += p->size();
        if (p->dim(1) * p->dim(2) * p->dim(3) != vol)
            throw shape_error("concat_channels: spatial dims differ");
    }
    return out;
}

template <typename T>
inline void split_add_channels(const Tensor<T>& src, const std::vector<Tensor<T>*>& parts) {
    const T* s = src.data();
    for (Tensor<T>* p : parts) {
        T* d = p->data();
        for (std::size_t i = 0; i < p->size(); ++i) d[i] += s[i];
        s += p->size();
    }
}

} // namespace nn

/// The super-resolution generator: per-scale pre module, shared residual
/// backbone, per-scale post module whose last convolution starts at zero so
/// the untrained network reproduces its cubic-interpolated input exactly.
/// Operates on pre-upsampled volumes; the residual add of the input is part
/// of forward.
template <typename T>
class Generator {
public:
    static constexpr T kLeakySlope = static_cast<T>(0.2);
    static constexpr T kResidualBeta = static_cast<T>(0.2);

    explicit Generator(GeneratorConfig cfg) : cfg_(std::move(cfg)) {
        validate(cfg_);
        channels_ = static_cast<std::size_t>(cfg_.base_channels);
        growth_ = std::max<std::size_t>(4, channels_ / 2);
    }

    const GeneratorConfig& config() const { return cfg_; }

    /// Per-scale parameter names, without the scale prefix.
    static std::vector<std::string> per_scale_suffixes() {
        return {"pre.conv.w", "pre.conv.b", "post.c1.w", "post.c1.b", "post.c2.w", "post.c2.b"};
    }

    std::vector<std::string> backbone_names() const {
        std::vector<std::string> out;
        for (int i = 0; i < cfg_.n_residual_blocks; ++i) {
            const std::string b = "backbone.b" + std::to_string(i) + ".";
            if (cfg_.block_type == BlockType::plain_residual) {
                for (const char* c : {"c1", "c2"}) {
                    out.push_back(b + c + ".w");
                    out.push_back(b + c + ".b");
                }
            } else {
                for (int j = 0; j < 3; ++j)
                    for (int t = 1; t <= 5; ++t) {
                        const std::string c = b + "d" + std::to_string(j) + ".c" + std::to_string(t);
                        out.push_back(c + ".w");
                        out.push_back(c + ".b");
                    }
            }
        }
        return out;
    }

    std::vector<std::string> scale_names(int scale) const {
        std::vector<std::string> out;
        for (const std::string& s : per_scale_suffixes()) out.push_back(scale_prefix(scale) + s);
        return out;
    }

    ParamSet<T> init_params(std::uint64_t seed) const {
        ParamSet<T> p;
        const std::size_t c = channels_, g = growth_;
        for (int i = 0; i < cfg_.n_residual_blocks; ++i) {
            const std::string b = "backbone.b" + std::to_string(i) + ".";
            if (cfg_.block_type == BlockType::plain_residual) {
                add_conv(p, b + "c1", c, c, seed, false);
                add_conv(p, b + "c2", c, c, seed, false);
            } else {
                for (int j = 0; j < 3; ++j) {
                    const std::string d = b + "d" + std::to_string(j) + ".";
                    for (int t = 1; t <= 4; ++t)
                        add_conv(p, d + "c" + std::to_string(t),
                                 g, c + static_cast<std::size_t>(t - 1) * g, seed, false);
                    add_conv(p, d + "c5", c, c + 4 * g, seed, false);
                }
            }
        }
        for (int s : cfg_.scales) {
            const std::string pf = scale_prefix(s);
            add_conv(p, pf + "pre.conv", c, 1, seed, false);
            add_conv(p, pf + "post.c1", c, c, seed, false);
            add_conv(p, pf + "post.c2", 1, c, seed, true);
        }
        return p;
    }

    struct DenseCache {
        Tensor<T> x_in;
        std::array<Tensor<T>, 4> g;
    };
    struct BlockCache {
        Tensor<T> in;
        Tensor<T> h;  // plain path, post-activation
        std::array<DenseCache, 3> dense;
    };
    struct Cache {
        Tensor<T> x4;
        Tensor<T> pre_out;
        std::vector<BlockCache> blocks;
        Tensor<T> post_in;
        Tensor<T> post_h;
    };

    /// x is the pre-upsampled volume (Z, Y, X); returns the enhanced volume
    /// of the same shape. prefix selects the per-scale tensors ("scale3.",
    /// or the blended prefix after interpolation).
    Tensor<T> forward_train(const ParamSet<T>& p, const std::string& pf, const Tensor<T>& x,
                            Cache& c) const {
        if (x.rank() != 3) throw shape_error("generator input must be a (Z,Y,X) volume");
        c.x4 = Tensor<T>({1, x.dim(0), x.dim(1), x.dim(2)});
        std::copy(x.begin(), x.end(), c.x4.begin());

        Tensor<T> f = nn::conv3d(c.x4, p.at(pf + "pre.conv.w"), p.at(pf + "pre.conv.b"));
        nn::relu_inplace(f);
        c.pre_out = f;

        c.blocks.assign(static_cast<std::size_t>(cfg_.n_residual_blocks), {});
        for (int i = 0; i < cfg_.n_residual_blocks; ++i)
            f = cfg_.block_type == BlockType::plain_residual
                    ? plain_forward(p, i, f, c.blocks[static_cast<std::size_t>(i)])
                    : rrdb_forward(p, i, f, c.blocks[static_cast<std::size_t>(i)]);

        c.post_in = f;
        Tensor<T> h = nn::conv3d(f, p.at(pf + "post.c1.w"), p.at(pf + "post.c1.b"));
        nn::relu_inplace(h);
        c.post_h = h;
        Tensor<T> corr = nn::conv3d(h, p.at(pf + "post.c2.w"), p.at(pf + "post.c2.b"));

        Tensor<T> out = x;
        const T* cs = corr.data();
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += cs[i];
        return out;
    }

    Tensor<T> forward(const ParamSet<T>& p, const std::string& pf, const Tensor<T>& x) const {
        Cache c;
        return forward_train(p, pf, x, c);
    }

    /// Accumulates parameter gradients into grads (which must cover the used
    /// names, typically params.zeros_like()) and, when dx is non-null, the
    /// input gradient into *dx (same shape as x, caller-zeroed).
    void backward(const ParamSet<T>& p, const std::string& pf, const Cache& c,
                  const Tensor<T>& dout, ParamSet<T>& grads, Tensor<T>* dx) const {
        const std::size_t z = c.x4.dim(1), y = c.x4.dim(2), x_n = c.x4.dim(3);
        Tensor<T> dcorr({1, z, y, x_n});
        std::copy(dout.begin(), dout.end(), dcorr.begin());

        Tensor<T> dh = c.post_h.zeros_like();
        nn::conv3d_backward(c.post_h, p.at(pf + "post.c2.w"), dcorr, 1, 1,
                            &grads.at(pf + "post.c2.w"), &grads.at(pf + "post.c2.b"), &dh);
        nn::relu_backward_inplace(c.post_h, dh);
        Tensor<T> df = c.post_in.zeros_like();
        nn::conv3d_backward(c.post_in, p.at(pf + "post.c1.w"), dh, 1, 1,
                            &grads.at(pf + "post.c1.w"), &grads.at(pf + "post.c1.b"), &df);

        for (int i = cfg_.n_residual_blocks - 1; i >= 0; --i)
            df = cfg_.block_type == BlockType::plain_residual
                     ? plain_backward(p, i, c.blocks[static_cast<std::size_t>(i)], df, grads)
                     : rrdb_backward(p, i, c.blocks[static_cast<std::size_t>(i)], df, grads);

        nn::relu_backward_inplace(c.pre_out, df);
        Tensor<T> dx4;
        if (dx) dx4 = Tensor<T>({1, z, y, x_n});
        nn::conv3d_backward(c.x4, p.at(pf + "pre.conv.w"), df, 1, 1,
                            &grads.at(pf + "pre.conv.w"), &grads.at(pf + "pre.conv.b"),
                            dx ? &dx4 : nullptr);
        if (dx) {
            const T* a = dout.data();
            const T* b = dx4.data();
            T* d = dx->data();
            for (std::size_t i = 0; i < dx->size(); ++i) d[i] += a[i] + b[i];
        }
    }

private:
    void add_conv(ParamSet<T>& p, const std::string& base, std::size_t cout, std::size_t cin,
                  std::uint64_t seed, bool zero) const {
        Tensor<T>& w = p.add(base + ".w", {cout, cin, 3, 3, 3});
        p.add(base + ".b", std::vector<std::size_t>{cout});
        if (!zero) nn::he_fill(w, cin * 27, derive_seed(seed, base + ".w"));
    }

    Tensor<T> plain_forward(const ParamSet<T>& p, int i, const Tensor<T>& in,
                            BlockCache& bc) const {
        const std::string b = "backbone.b" + std::to_string(i) + ".";
        bc.in = in;
        Tensor<T> h = nn::conv3d(in, p.at(b + "c1.w"), p.at(b + "c1.b"));
        nn::relu_inplace(h);
        bc.h = h;
        Tensor<T> out = nn::conv3d(h, p.at(b + "c2.w"), p.at(b + "c2.b"));
        const T* s = in.data();
        for (std::size_t k = 0; k < out.size(); ++k) out[k] += s[k];
        return out;
    }

    Tensor<T> plain_backward(const ParamSet<T>& p, int i, const BlockCache& bc,
                             const Tensor<T>& dout, ParamSet<T>& grads) const {
        const std::string b = "backbone.b" + std::to_string(i) + ".";
        Tensor<T> dh = bc.h.zeros_like();
        nn::conv3d_backward(bc.h, p.at(b + "c2.w"), dout, 1, 1, &grads.at(b + "c2.w"),
                            &grads.at(b + "c2.b"), &dh);
        nn::relu_backward_inplace(bc.h, dh);
        Tensor<T> din = dout;  // skip connection
        nn::conv3d_backward(bc.in, p.at(b + "c1.w"), dh, 1, 1, &grads.at(b + "c1.w"),
                            &grads.at(b + "c1.b"), &din);
        return din;
    }

    Tensor<T> dense_forward(const ParamSet<T>& p, const std::string& d, const Tensor<T>& x_in,
                            DenseCache& dc) const {
        dc.x_in = x_in;
        for (int t = 0; t < 4; ++t) {
            std::vector<const Tensor<T>*> parts{&x_in};
            for (int u = 0; u < t; ++u) parts.push_back(&dc.g[static_cast<std::size_t>(u)]);
            Tensor<T> cat = nn::concat_channels(parts);
            Tensor<T> gt = nn::conv3d(cat, p.at(d + "c" + std::to_string(t + 1) + ".w"),
                                      p.at(d + "c" + std::to_string(t + 1) + ".b"));
            nn::leaky_relu_inplace(gt, kLeakySlope);
            dc.g[static_cast<std::size_t>(t)] = std::move(gt);
        }
        std::vector<const Tensor<T>*> parts{&x_in};
        for (int u = 0; u < 4; ++u) parts.push_back(&dc.g[static_cast<std::size_t>(u)]);
        Tensor<T> cat = nn::concat_channels(parts);
        Tensor<T> c5 = nn::conv3d(cat, p.at(d + "c5.w"), p.at(d + "c5.b"));
        Tensor<T> out = x_in;
        axpy(kResidualBeta, c5, out);
        return out;
    }

    Tensor<T> dense_backward(const ParamSet<T>& p, const std::string& d, const DenseCache& dc,
                             const Tensor<T>& dout, ParamSet<T>& grads) const {
        Tensor<T> dc5 = dout;
        for (T& v : dc5) v *= kResidualBeta;

        std::vector<const Tensor<T>*> parts{&dc.x_in};
        for (int u = 0; u < 4; ++u) parts.push_back(&dc.g[static_cast<std::size_t>(u)]);
        Tensor<T> cat5 = nn::concat_channels(parts);
        Tensor<T> dcat5 = cat5.zeros_like();
        nn::conv3d_backward(cat5, p.at(d + "c5.w"), dc5, 1, 1, &grads.at(d + "c5.w"),
                            &grads.at(d + "c5.b"), &dcat5);

        Tensor<T> dx_in = dout;  // skip connection
        std::array<Tensor<T>, 4> dg;
        for (int u = 0; u < 4; ++u) dg[static_cast<std::size_t>(u)] = dc.g[static_cast<std::size_t>(u)].zeros_like();
        {
            std::vector<Tensor<T>*> gparts{&dx_in};
            for (int u = 0; u < 4; ++u) gparts.push_back(&dg[static_cast<std::size_t>(u)]);
            nn::split_add_channels(dcat5, gparts);
        }

        for (int t = 3; t >= 0; --t) {
            Tensor<T>& dgt = dg[static_cast<std::size_t>(t)];
            nn::leaky_relu_backward_inplace(dc.g[static_cast<std::size_t>(t)], dgt, kLeakySlope);
            std::vector<const Tensor<T>*> cparts{&dc.x_in};
            for (int u = 0; u < t; ++u) cparts.push_back(&dc.g[static_cast<std::size_t>(u)]);
            Tensor<T> cat = nn::concat_channels(cparts);
            Tensor<T> dcat = cat.zeros_like();
            nn::conv3d_backward(cat, p.at(d + "c" + std::to_string(t + 1) + ".w"), dgt, 1, 1,
                                &grads.at(d + "c" + std::to_string(t + 1) + ".w"),
                                &grads.at(d + "c" + std::to_string(t + 1) + ".b"), &dcat);
            std::vector<Tensor<T>*> gparts{&dx_in};
            for (int u = 0; u < t; ++u) gparts.push_back(&dg[static_cast<std::size_t>(u)]);
            nn::split_add_channels(dcat, gparts);
        }
        return dx_in;
    }

    Tensor<T> rrdb_forward(const ParamSet<T>& p, int i, const Tensor<T>& in,
                           BlockCache& bc) const {
        const std::string b = "backbone.b" + std::to_string(i) + ".";
        bc.in = in;
        Tensor<T> d = in;
        for (int j = 0; j < 3; ++j)
            d = dense_forward(p, b + "d" + std::to_string(j) + ".", d,
                              bc.dense[static_cast<std::size_t>(j)]);
        Tensor<T> out = in;
        axpy(kResidualBeta, d, out);
        return out;
    }

    Tensor<T> rrdb_backward(const ParamSet<T>& p, int i, const BlockCache& bc,
                            const Tensor<T>& dout, ParamSet<T>& grads) const {
        const std::string b = "backbone.b" + std::to_string(i) + ".";
        Tensor<T> dd = dout;
        for (T& v : dd) v *= kResidualBeta;
        for (int j = 2; j >= 0; --j)
            dd = dense_backward(p, b + "d" + std::to_string(j) + ".",
                                bc.dense[static_cast<std::size_t>(j)], dd, grads);
        const T* s = dout.data();
        for (std::size_t k = 0; k < dd.size(); ++k) dd[k] += s[k];
        return dd;
    }

    GeneratorConfig cfg_;
    std::size_t channels_ = 0;
    std::size_t growth_ = 0;
};

} // namespace soupsr
