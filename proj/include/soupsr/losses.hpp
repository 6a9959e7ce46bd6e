#pragma once

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "soupsr/errors.hpp"
#include "soupsr/nn/feature_extractor.hpp"
#include "soupsr/tensor.hpp"

namespace soupsr {

struct LossWeights {
    double lambda_gan = 0.01;
    double mu_mse = 0.001;
};

inline void validate(const LossWeights& w) {
    if (!std::isfinite(w.lambda_gan) || !std::isfinite(w.mu_mse) || w.lambda_gan < 0 ||
        w.mu_mse < 0)
        throw config_error("loss weights must be finite and non-negative");
}

// ---- pixel loss ----

template <typename T>
inline double mse_loss(const Tensor<T>& pred, const Tensor<T>& target) {
    if (!pred.same_shape(target)) throw shape_error("mse_loss: shape mismatch");
    double acc = 0.0;
    const T* a = pred.data();
    const T* b = target.data();
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
        acc += d * d;
    }
    return acc / static_cast<double>(pred.size());
}

/// Returns the loss and accumulates d(loss)/d(pred) into dpred.
template <typename T>
inline double mse_loss_grad(const Tensor<T>& pred, const Tensor<T>& target, Tensor<T>& dpred) {
    if (!pred.same_shape(target)) throw shape_error("mse_loss: shape mismatch");
    if (!pred.same_shape(dpred)) throw shape_error("mse_loss: gradient shape mismatch");
    double acc = 0.0;
    const double inv = 1.0 / static_cast<double>(pred.size());
    const T* a = pred.data();
    const T* b = target.data();
    T* g = dpred.data();
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
        acc += d * d;
        g[i] += static_cast<T>(2.0 * d * inv);
    }
    return acc * inv;
}

// ---- adversarial losses, stable logit-space forms ----

inline double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

inline double sigmoid(double x) {
    return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

/// Discriminator objective: mean -log sigmoid(real) - log(1 - sigmoid(fake)),
/// i.e. mean softplus(-real) + mean softplus(fake).
inline double gan_loss_d(const std::vector<double>& logits_real,
                         const std::vector<double>& logits_fake) {
    if (logits_real.empty() || logits_fake.empty())
        throw data_error("gan_loss_d needs at least one real and one fake logit");
    double lr = 0.0, lf = 0.0;
    for (double v : logits_real) lr += softplus(-v);
    for (double v : logits_fake) lf += softplus(v);
    return lr / static_cast<double>(logits_real.size()) +
           lf / static_cast<double>(logits_fake.size());
}

inline double gan_loss_d_grad(const std::vector<double>& logits_real,
                              const std::vector<double>& logits_fake,
                              std::vector<double>& dreal, std::vector<double>& dfake) {
    const double loss = gan_loss_d(logits_real, logits_fake);
    dreal.resize(logits_real.size());
    dfake.resize(logits_fake.size());
    for (std::size_t i = 0; i < logits_real.size(); ++i)
        dreal[i] = -sigmoid(-logits_real[i]) / static_cast<double>(logits_real.size());
    for (std::size_t i = 0; i < logits_fake.size(); ++i)
        dfake[i] = sigmoid(logits_fake[i]) / static_cast<double>(logits_fake.size());
    return loss;
}

/// Non-saturating generator objective: mean -log sigmoid(fake) =
/// mean softplus(-fake).
inline double gan_loss_g(const std::vector<double>& logits_fake) {
    if (logits_fake.empty()) throw data_error("gan_loss_g needs at least one logit");
    double acc = 0.0;
    for (double v : logits_fake) acc += softplus(-v);
    return acc / static_cast<double>(logits_fake.size());
}

inline double gan_loss_g_grad(const std::vector<double>& logits_fake, std::vector<double>& dfake) {
    const double loss = gan_loss_g(logits_fake);
    dfake.resize(logits_fake.size());
    for (std::size_t i = 0; i < logits_fake.size(); ++i)
        dfake[i] = -sigmoid(-logits_fake[i]) / static_cast<double>(logits_fake.size());
    return loss;
}

// ---- tri-planar perceptual loss ----

namespace detail {

inline std::array<std::size_t, 3> plane_dims(const std::vector<std::size_t>& shape, Plane p) {
    // {n_slices, h, w}
    switch (p) {
        case Plane::axial: return {shape[0], shape[1], shape[2]};
        case Plane::coronal: return {shape[1], shape[0], shape[2]};
        case Plane::sagittal: return {shape[2], shape[0], shape[1]};
    }
    return {0, 0, 0};
}

template <typename T>
inline void gather_slices(const Tensor<T>& v, Plane p, std::size_t i0, std::size_t count,
                          Tensor<T>& out) {
    const std::size_t z = v.dim(0), y = v.dim(1), x = v.dim(2);
    for (std::size_t k = 0; k < count; ++k) {
        const std::size_t s = i0 + k;
        T* dst = out.data() + k * out.dim(2) * out.dim(3);
        switch (p) {
            case Plane::axial:
                std::copy(v.data() + s * y * x, v.data() + (s + 1) * y * x, dst);
                break;
            case Plane::coronal:
                for (std::size_t zz = 0; zz < z; ++zz)
                    std::copy(v.data() + (zz * y + s) * x, v.data() + (zz * y + s) * x + x,
                              dst + zz * x);
                break;
            case Plane::sagittal:
                for (std::size_t zz = 0; zz < z; ++zz)
                    for (std::size_t yy = 0; yy < y; ++yy)
                        dst[zz * y + yy] = v.data()[(zz * y + yy) * x + s];
                break;
        }
    }
}

template <typename T>
inline void scatter_slices_add(const Tensor<T>& dslices, Plane p, std::size_t i0,
                               Tensor<T>& dvol) {
    const std::size_t z = dvol.dim(0), y = dvol.dim(1), x = dvol.dim(2);
    const std::size_t count = dslices.dim(0);
    for (std::size_t k = 0; k < count; ++k) {
        const std::size_t s = i0 + k;
        const T* src = dslices.data() + k * dslices.dim(2) * dslices.dim(3);
        switch (p) {
            case Plane::axial: {
                T* dst = dvol.data() + s * y * x;
                for (std::size_t i = 0; i < y * x; ++i) dst[i] += src[i];
                break;
            }
            case Plane::coronal:
                for (std::size_t zz = 0; zz < z; ++zz) {
                    T* dst = dvol.data() + (zz * y + s) * x;
                    const T* row = src + zz * x;
                    for (std::size_t i = 0; i < x; ++i) dst[i] += row[i];
                }
                break;
            case Plane::sagittal:
                for (std::size_t zz = 0; zz < z; ++zz)
                    for (std::size_t yy = 0; yy < y; ++yy)
                        dvol.data()[(zz * y + yy) * x + s] += src[zz * y + yy];
                break;
        }
    }
}

} // namespace detail

/// Feature distance of Eq.-style form: squared feature differences averaged
/// per slice over the feature map (1/hwc), averaged over a plane's slices,
/// then averaged over the configured planes.
template <typename T>
class PerceptualLoss {
public:
    explicit PerceptualLoss(PerceptualConfig cfg) : cfg_(std::move(cfg)), ext_(cfg_) {}

    const PerceptualConfig& config() const { return cfg_; }
    const FeatureExtractor<T>& extractor() const { return ext_; }

    double value(const Tensor<T>& pred, const Tensor<T>& target) const {
        return run(pred, target, nullptr);
    }

    /// Returns the loss and accumulates d(loss)/d(pred) into dpred.
    double value_grad(const Tensor<T>& pred, const Tensor<T>& target, Tensor<T>& dpred) const {
        if (!pred.same_shape(dpred))
            throw shape_error("perceptual loss: gradient shape mismatch");
        return run(pred, target, &dpred);
    }

    /// Loss restricted to a single plane (the tri-planar value is the mean of
    /// these over the configured planes; exposed for diagnostics and tests).
    double plane_value(const Tensor<T>& pred, const Tensor<T>& target, Plane p) const {
        check_shapes(pred, target);
        return plane_run(pred, target, p, nullptr, 1.0);
    }

private:
    void check_shapes(const Tensor<T>& pred, const Tensor<T>& target) const {
        if (pred.rank() != 3) throw shape_error("perceptual loss expects (Z,Y,X) volumes");
        if (!pred.same_shape(target)) throw shape_error("perceptual loss: shape mismatch");
    }

    double run(const Tensor<T>& pred, const Tensor<T>& target, Tensor<T>* dpred) const {
        check_shapes(pred, target);
        double acc = 0.0;
        const double plane_weight = 1.0 / static_cast<double>(cfg_.planes.size());
        for (Plane p : cfg_.planes) acc += plane_run(pred, target, p, dpred, plane_weight);
        return acc * plane_weight;
    }

    double plane_run(const Tensor<T>& pred, const Tensor<T>& target, Plane p, Tensor<T>* dpred,
                     double grad_weight) const {
        const auto [n_slices, h, w] = detail::plane_dims(pred.shape(), p);
        double acc = 0.0;
        const double slice_weight = 1.0 / static_cast<double>(n_slices);
        for (std::size_t i0 = 0; i0 < n_slices; i0 += cfg_.slice_batch) {
            const std::size_t count = std::min(cfg_.slice_batch, n_slices - i0);
            Tensor<T> sa({count, 1, h, w}), sb({count, 1, h, w});
            detail::gather_slices(pred, p, i0, count, sa);
            detail::gather_slices(target, p, i0, count, sb);

            typename FeatureExtractor<T>::Cache cache;
            Tensor<T> fa = dpred ? ext_.features_train(sa, cache) : ext_.features(sa);
            Tensor<T> fb = ext_.features(sb);

            const std::size_t fsize = fa.dim(1) * fa.dim(2) * fa.dim(3);
            const double inv_hwc = 1.0 / static_cast<double>(fsize);
            Tensor<T> dfeat;
            if (dpred) dfeat = fa.zeros_like();
            for (std::size_t k = 0; k < count; ++k) {
                const T* a = fa.data() + k * fsize;
                const T* b = fb.data() + k * fsize;
                double s = 0.0;
                for (std::size_t j = 0; j < fsize; ++j) {
                    const double d = static_cast<double>(a[j]) - static_cast<double>(b[j]);
                    s += d * d;
                }
                acc += s * inv_hwc;
                if (dpred) {
                    const double scale = 2.0 * inv_hwc * slice_weight * grad_weight;
                    T* df = dfeat.data() + k * fsize;
                    for (std::size_t j = 0; j < fsize; ++j)
                        df[j] = static_cast<T>(scale * (static_cast<double>(a[j]) -
                                                        static_cast<double>(b[j])));
                }
            }
            if (dpred) {
                Tensor<T> dslices = ext_.backward(cache, dfeat);
                detail::scatter_slices_add(dslices, p, i0, *dpred);
            }
        }
        return acc * slice_weight;
    }

    PerceptualConfig cfg_;
    FeatureExtractor<T> ext_;
};

// ---- composite generator objective ----

struct LossBreakdown {
    double perceptual = 0;  // L_per addend
    double gan = 0;         // lambda * L_GAN addend
    double mse = 0;         // mu * L_MSE addend
    double gan_raw = 0;
    double mse_raw = 0;
    double total = 0;
};

template <typename T>
inline LossBreakdown total_generator_loss(const Tensor<T>& pred, const Tensor<T>& target,
                                          const std::vector<double>& logits_fake,
                                          const LossWeights& w, const PerceptualLoss<T>& per) {
    validate(w);
    LossBreakdown b;
    b.perceptual = per.value(pred, target);
    b.gan_raw = gan_loss_g(logits_fake);
    b.mse_raw = mse_loss(pred, target);
    b.gan = w.lambda_gan * b.gan_raw;
    b.mse = w.mu_mse * b.mse_raw;
    b.total = b.perceptual + b.gan + b.mse;
    return b;
}

} // namespace soupsr
