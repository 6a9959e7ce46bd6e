#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include <Eigen/Core>

#include "soupsr/errors.hpp"
#include "soupsr/rng.hpp"
#include "soupsr/tensor.hpp"

namespace soupsr {

/// Layout conventions across the network code:
///   3D feature maps are unbatched (C, Z, Y, X); training loops over the
///   samples of a batch and accumulates gradients.
///   2D feature maps are batched (N, C, H, W); the 2D path feeds the slice
///   extractor where batching across slices is what makes it fast.
/// Convolution weights are (Co, Ci, k...) with zero padding; gradients
/// accumulate (+=) into caller-zeroed tensors so branched architectures can
/// sum contributions from several consumers.

namespace nn {

template <typename T>
inline void he_fill(Tensor<T>& w, std::size_t fan_in, std::uint64_t seed) {
    Rng rng(seed);
    const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
    for (T& v : w) v = static_cast<T>(stddev * rng.normal());
}

template <typename T>
using MatRM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapRM = Eigen::Map<MatRM<T>>;
template <typename T>
using CMapRM = Eigen::Map<const MatRM<T>>;
template <typename T>
using StridedMapRM = Eigen::Map<MatRM<T>, Eigen::Unaligned, Eigen::OuterStride<>>;

namespace detail {

inline std::size_t conv_out(std::size_t n, std::size_t k, std::size_t stride, std::size_t pad) {
    if (n + 2 * pad < k) throw shape_error("convolution input smaller than kernel");
    return (n + 2 * pad - k) / stride + 1;
}

/// First output index whose receptive position off + out*stride - pad is >= 0.
inline std::size_t span_lo(std::size_t off, std::size_t pad, std::size_t stride) {
    return off >= pad ? 0 : (pad - off + stride - 1) / stride;
}

/// One past the last output index whose position stays < limit.
inline std::size_t span_hi(std::size_t off, std::size_t pad, std::size_t stride,
                           std::size_t limit, std::size_t n_out) {
    const std::ptrdiff_t top = static_cast<std::ptrdiff_t>(limit) - 1 +
                               static_cast<std::ptrdiff_t>(pad) - static_cast<std::ptrdiff_t>(off);
    if (top < 0) return 0;
    return std::min(static_cast<std::size_t>(top) / stride + 1, n_out);
}

/// Gathers the patch matrix for one output-z slab of a 3D convolution:
/// rows (Ci*kz*ky*kx), columns (Yo*Xo).
template <typename T>
void im2col3d_slab(const Tensor<T>& x, std::size_t zo, std::size_t kz, std::size_t ky,
                   std::size_t kx, std::size_t stride, std::size_t pad, std::size_t yo_n,
                   std::size_t xo_n, MatRM<T>& cols) {
    const std::size_t ci_n = x.dim(0), z_n = x.dim(1), y_n = x.dim(2), x_n = x.dim(3);
    const std::size_t m = yo_n * xo_n;
    std::size_t r = 0;
    for (std::size_t ci = 0; ci < ci_n; ++ci) {
        for (std::size_t dz = 0; dz < kz; ++dz) {
            const std::ptrdiff_t z = static_cast<std::ptrdiff_t>(zo * stride + dz) -
                                     static_cast<std::ptrdiff_t>(pad);
            const bool z_ok = z >= 0 && z < static_cast<std::ptrdiff_t>(z_n);
            const T* xz = z_ok ? x.data() + (ci * z_n + static_cast<std::size_t>(z)) * y_n * x_n
                               : nullptr;
            for (std::size_t dy = 0; dy < ky; ++dy) {
                const std::size_t yo_lo = span_lo(dy, pad, stride);
                const std::size_t yo_hi = span_hi(dy, pad, stride, y_n, yo_n);
                for (std::size_t dx = 0; dx < kx; ++dx, ++r) {
                    T* row = cols.data() + r * m;
                    std::fill(row, row + m, T(0));
                    if (!xz) continue;
                    const std::size_t xo_lo = span_lo(dx, pad, stride);
                    const std::size_t xo_hi = span_hi(dx, pad, stride, x_n, xo_n);
                    for (std::size_t yo = yo_lo; yo < yo_hi; ++yo) {
                        const T* src = xz + (yo * stride + dy - pad) * x_n + dx - pad;
                        T* dst = row + yo * xo_n;
                        for (std::size_t xo = xo_lo; xo < xo_hi; ++xo)
                            dst[xo] = src[xo * stride];
                    }
                }
            }
        }
    }
}

/// Scatter-adds a patch matrix back into the input gradient (adjoint of
/// im2col3d_slab).
template <typename T>
void col2im3d_slab(const MatRM<T>& cols, std::size_t zo, std::size_t kz, std::size_t ky,
                   std::size_t kx, std::size_t stride, std::size_t pad, std::size_t yo_n,
                   std::size_t xo_n, Tensor<T>& dx) {
    const std::size_t ci_n = dx.dim(0), z_n = dx.dim(1), y_n = dx.dim(2), x_n = dx.dim(3);
    const std::size_t m = yo_n * xo_n;
    std::size_t r = 0;
    for (std::size_t ci = 0; ci < ci_n; ++ci) {
        for (std::size_t dz = 0; dz < kz; ++dz) {
            const std::ptrdiff_t z = static_cast<std::ptrdiff_t>(zo * stride + dz) -
                                     static_cast<std::ptrdiff_t>(pad);
            const bool z_ok = z >= 0 && z < static_cast<std::ptrdiff_t>(z_n);
            T* xz = z_ok ? dx.data() + (ci * z_n + static_cast<std::size_t>(z)) * y_n * x_n
                         : nullptr;
            for (std::size_t dy = 0; dy < ky; ++dy) {
                const std::size_t yo_lo = span_lo(dy, pad, stride);
                const std::size_t yo_hi = span_hi(dy, pad, stride, y_n, yo_n);
                for (std::size_t dx_ = 0; dx_ < kx; ++dx_, ++r) {
                    if (!xz) continue;
                    const T* row = cols.data() + r * m;
                    const std::size_t xo_lo = span_lo(dx_, pad, stride);
                    const std::size_t xo_hi = span_hi(dx_, pad, stride, x_n, xo_n);
                    for (std::size_t yo = yo_lo; yo < yo_hi; ++yo) {
                        T* dst = xz + (yo * stride + dy - pad) * x_n + dx_ - pad;
                        const T* src = row + yo * xo_n;
                        for (std::size_t xo = xo_lo; xo < xo_hi; ++xo)
                            dst[xo * stride] += src[xo];
                    }
                }
            }
        }
    }
}

/// Patch matrix for one batch element of a 2D convolution: rows (Ci*kh*kw),
/// columns (Ho*Wo), written into cols starting at column col0.
template <typename T>
void im2col2d(const T* x, std::size_t ci_n, std::size_t h_n, std::size_t w_n, std::size_t kh,
              std::size_t kw, std::size_t stride, std::size_t pad, std::size_t ho_n,
              std::size_t wo_n, MatRM<T>& cols, std::size_t col0) {
    const std::size_t m = static_cast<std::size_t>(cols.cols());
    std::size_t r = 0;
    for (std::size_t ci = 0; ci < ci_n; ++ci) {
        const T* xc = x + ci * h_n * w_n;
        for (std::size_t dh = 0; dh < kh; ++dh) {
            const std::size_t ho_lo = span_lo(dh, pad, stride);
            const std::size_t ho_hi = span_hi(dh, pad, stride, h_n, ho_n);
            for (std::size_t dw = 0; dw < kw; ++dw, ++r) {
                T* row = cols.data() + r * m + col0;
                std::fill(row, row + ho_n * wo_n, T(0));
                const std::size_t wo_lo = span_lo(dw, pad, stride);
                const std::size_t wo_hi = span_hi(dw, pad, stride, w_n, wo_n);
                for (std::size_t ho = ho_lo; ho < ho_hi; ++ho) {
                    const T* src = xc + (ho * stride + dh - pad) * w_n + dw - pad;
                    T* dst = row + ho * wo_n;
                    for (std::size_t wo = wo_lo; wo < wo_hi; ++wo)
                        dst[wo] = src[wo * stride];
                }
            }
        }
    }
}

template <typename T>
void col2im2d(const MatRM<T>& cols, std::size_t col0, std::size_t ci_n, std::size_t h_n,
              std::size_t w_n, std::size_t kh, std::size_t kw, std::size_t stride,
              std::size_t pad, std::size_t ho_n, std::size_t wo_n, T* dx) {
    const std::size_t m = static_cast<std::size_t>(cols.cols());
    std::size_t r = 0;
    for (std::size_t ci = 0; ci < ci_n; ++ci) {
        T* xc = dx + ci * h_n * w_n;
        for (std::size_t dh = 0; dh < kh; ++dh) {
            const std::size_t ho_lo = span_lo(dh, pad, stride);
            const std::size_t ho_hi = span_hi(dh, pad, stride, h_n, ho_n);
            for (std::size_t dw = 0; dw < kw; ++dw, ++r) {
                const T* row = cols.data() + r * m + col0;
                const std::size_t wo_lo = span_lo(dw, pad, stride);
                const std::size_t wo_hi = span_hi(dw, pad, stride, w_n, wo_n);
                for (std::size_t ho = ho_lo; ho < ho_hi; ++ho) {
                    T* dst = xc + (ho * stride + dh - pad) * w_n + dw - pad;
                    const T* src = row + ho * wo_n;
                    for (std::size_t wo = wo_lo; wo < wo_hi; ++wo)
                        dst[wo * stride] += src[wo];
                }
            }
        }
    }
}

} // namespace detail

// ---- 3D convolution, single sample (C, Z, Y, X) ----

template <typename T>
Tensor<T> conv3d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b,
                 std::size_t stride = 1, std::size_t pad = 1) {
    if (x.rank() != 4 || w.rank() != 5) throw shape_error("conv3d: expected (C,Z,Y,X) input and (Co,Ci,kz,ky,kx) weight");
    if (w.dim(1) != x.dim(0)) throw shape_error("conv3d: channel mismatch");
    if (b.rank() != 1 || b.dim(0) != w.dim(0)) throw shape_error("conv3d: bias mismatch");
    const std::size_t co = w.dim(0), kz = w.dim(2), ky = w.dim(3), kx = w.dim(4);
    const std::size_t zo_n = detail::conv_out(x.dim(1), kz, stride, pad);
    const std::size_t yo_n = detail::conv_out(x.dim(2), ky, stride, pad);
    const std::size_t xo_n = detail::conv_out(x.dim(3), kx, stride, pad);
    const std::size_t k = x.dim(0) * kz * ky * kx;
    const std::size_t m = yo_n * xo_n;

    Tensor<T> y({co, zo_n, yo_n, xo_n});
    MatRM<T> cols(k, m);
    CMapRM<T> wm(w.data(), static_cast<Eigen::Index>(co), static_cast<Eigen::Index>(k));
    for (std::size_t zo = 0; zo < zo_n; ++zo) {
        detail::im2col3d_slab(x, zo, kz, ky, kx, stride, pad, yo_n, xo_n, cols);
        StridedMapRM<T> ym(y.data() + zo * m, static_cast<Eigen::Index>(co),
                           static_cast<Eigen::Index>(m),
                           Eigen::OuterStride<>(static_cast<Eigen::Index>(zo_n * m)));
        ym.noalias() = wm * cols;
    }
    T* yd = y.data();
    for (std::size_t c = 0; c < co; ++c) {
        const T bias = b[c];
        T* p = yd + c * zo_n * m;
        for (std::size_t i = 0; i < zo_n * m; ++i) p[i] += bias;
    }
    return y;
}

/// Accumulates dw, db, dx (any may be null) for conv3d. dy has the forward
/// output shape.
template <typename T>
void conv3d_backward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& dy,
                     std::size_t stride, std::size_t pad, Tensor<T>* dw, Tensor<T>* db,
                     Tensor<T>* dx) {
    const std::size_t co = w.dim(0), kz = w.dim(2), ky = w.dim(3), kx = w.dim(4);
    const std::size_t zo_n = dy.dim(1), yo_n = dy.dim(2), xo_n = dy.dim(3);
    const std::size_t k = x.dim(0) * kz * ky * kx;
    const std::size_t m = yo_n * xo_n;
    if (dy.dim(0) != co) throw shape_error("conv3d_backward: gradient channel mismatch");

    MatRM<T> cols(k, m), dcols(k, m);
    CMapRM<T> wm(w.data(), static_cast<Eigen::Index>(co), static_cast<Eigen::Index>(k));
    for (std::size_t zo = 0; zo < zo_n; ++zo) {
        Eigen::Map<const MatRM<T>, Eigen::Unaligned, Eigen::OuterStride<>> dym(
            dy.data() + zo * m, static_cast<Eigen::Index>(co), static_cast<Eigen::Index>(m),
            Eigen::OuterStride<>(static_cast<Eigen::Index>(zo_n * m)));
        if (dw) {
            detail::im2col3d_slab(x, zo, kz, ky, kx, stride, pad, yo_n, xo_n, cols);
            MapRM<T> dwm(dw->data(), static_cast<Eigen::Index>(co), static_cast<Eigen::Index>(k));
            dwm.noalias() += dym * cols.transpose();
        }
        if (db) {
            for (std::size_t c = 0; c < co; ++c) (*db)[c] += dym.row(static_cast<Eigen::Index>(c)).sum();
        }
        if (dx) {
            dcols.noalias() = wm.transpose() * dym;
            detail::col2im3d_slab(dcols, zo, kz, ky, kx, stride, pad, yo_n, xo_n, *dx);
        }
    }
}

// ---- 2D convolution, batched (N, C, H, W) ----

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b,
                 std::size_t stride = 1, std::size_t pad = 1) {
    if (x.rank() != 4 || w.rank() != 4) throw shape_error("conv2d: expected (N,C,H,W) input and (Co,Ci,kh,kw) weight");
    if (w.dim(1) != x.dim(1)) throw shape_error("conv2d: channel mismatch");
    const std::size_t n = x.dim(0), ci = x.dim(1), h = x.dim(2), wd = x.dim(3);
    const std::size_t co = w.dim(0), kh = w.dim(2), kw = w.dim(3);
    const std::size_t ho = detail::conv_out(h, kh, stride, pad);
    const std::size_t wo = detail::conv_out(wd, kw, stride, pad);
    const std::size_t k = ci * kh * kw;
    const std::size_t m1 = ho * wo;

    MatRM<T> cols(k, n * m1);
    for (std::size_t i = 0; i < n; ++i)
        detail::im2col2d(x.data() + i * ci * h * wd, ci, h, wd, kh, kw, stride, pad, ho, wo,
                         cols, i * m1);
    CMapRM<T> wm(w.data(), static_cast<Eigen::Index>(co), static_cast<Eigen::Index>(k));
    MatRM<T> prod(co, n * m1);
    prod.noalias() = wm * cols;

    Tensor<T> y({n, co, ho, wo});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < co; ++c) {
            const T* src = prod.data() + c * n * m1 + i * m1;
            const T bias = b[c];
            T* dst = y.data() + (i * co + c) * m1;
            for (std::size_t p = 0; p < m1; ++p) dst[p] = src[p] + bias;
        }
    return y;
}

/// Input gradient only (the 2D path's weights are frozen extractor weights).
template <typename T>
Tensor<T> conv2d_backward_input(const Tensor<T>& w, const Tensor<T>& dy,
                                std::size_t in_h, std::size_t in_w, std::size_t stride,
                                std::size_t pad) {
    const std::size_t n = dy.dim(0), co = dy.dim(1), ho = dy.dim(2), wo = dy.dim(3);
    const std::size_t ci = w.dim(1), kh = w.dim(2), kw = w.dim(3);
    const std::size_t k = ci * kh * kw;
    const std::size_t m1 = ho * wo;

    MatRM<T> dyf(co, n * m1);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < co; ++c)
            std::copy(dy.data() + (i * co + c) * m1, dy.data() + (i * co + c + 1) * m1,
                      dyf.data() + c * n * m1 + i * m1);
    CMapRM<T> wm(w.data(), static_cast<Eigen::Index>(co), static_cast<Eigen::Index>(k));
    MatRM<T> dcols(k, n * m1);
    dcols.noalias() = wm.transpose() * dyf;

    Tensor<T> dx({n, ci, in_h, in_w});
    for (std::size_t i = 0; i < n; ++i)
        detail::col2im2d(dcols, i * m1, ci, in_h, in_w, kh, kw, stride, pad, ho, wo,
                         dx.data() + i * ci * in_h * in_w);
    return dx;
}

// ---- activations ----

template <typename T>
void relu_inplace(Tensor<T>& t) {
    for (T& v : t)
        if (v < T(0)) v = T(0);
}

/// Backward through ReLU using the forward output (sign of y matches sign of x).
template <typename T>
void relu_backward_inplace(const Tensor<T>& y, Tensor<T>& dy) {
    const T* ys = y.data();
    T* ds = dy.data();
    for (std::size_t i = 0; i < y.size(); ++i)
        if (ys[i] <= T(0)) ds[i] = T(0);
}

template <typename T>
void leaky_relu_inplace(Tensor<T>& t, T slope) {
    for (T& v : t)
        if (v < T(0)) v *= slope;
}

template <typename T>
void leaky_relu_backward_inplace(const Tensor<T>& y, Tensor<T>& dy, T slope) {
    const T* ys = y.data();
    T* ds = dy.data();
    for (std::size_t i = 0; i < y.size(); ++i)
        if (ys[i] < T(0)) ds[i] *= slope;
}

// ---- 2x2 stride-2 max pooling, batched (N, C, H, W) ----

template <typename T>
struct Pool2dResult {
    Tensor<T> y;
    std::vector<std::uint32_t> argmax;  // flat (h*W + w) winner per output cell
};

template <typename T>
Pool2dResult<T> maxpool2d(const Tensor<T>& x) {
    const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    if (h < 2 || w < 2) throw shape_error("maxpool2d: input smaller than 2x2");
    const std::size_t ho = h / 2, wo = w / 2;
    Pool2dResult<T> r{Tensor<T>({n, c, ho, wo}), {}};
    r.argmax.resize(n * c * ho * wo);
    for (std::size_t nc = 0; nc < n * c; ++nc) {
        const T* src = x.data() + nc * h * w;
        T* dst = r.y.data() + nc * ho * wo;
        std::uint32_t* amax = r.argmax.data() + nc * ho * wo;
        for (std::size_t i = 0; i < ho; ++i)
            for (std::size_t j = 0; j < wo; ++j) {
                const std::size_t base = 2 * i * w + 2 * j;
                std::size_t best = base;
                if (src[base + 1] > src[best]) best = base + 1;
                if (src[base + w] > src[best]) best = base + w;
                if (src[base + w + 1] > src[best]) best = base + w + 1;
                dst[i * wo + j] = src[best];
                amax[i * wo + j] = static_cast<std::uint32_t>(best);
            }
    }
    return r;
}

template <typename T>
Tensor<T> maxpool2d_backward(const Pool2dResult<T>& r, const Tensor<T>& dy, std::size_t in_h,
                             std::size_t in_w) {
    const std::size_t n = dy.dim(0), c = dy.dim(1), ho = dy.dim(2), wo = dy.dim(3);
    Tensor<T> dx({n, c, in_h, in_w});
    for (std::size_t nc = 0; nc < n * c; ++nc) {
        const T* dsrc = dy.data() + nc * ho * wo;
        const std::uint32_t* amax = r.argmax.data() + nc * ho * wo;
        T* dst = dx.data() + nc * in_h * in_w;
        for (std::size_t p = 0; p < ho * wo; ++p) dst[amax[p]] += dsrc[p];
    }
    return dx;
}

// ---- bilinear resize, batched (N, C, H, W), align-corners mapping ----

template <typename T>
Tensor<T> bilinear_resize2d(const Tensor<T>& x, std::size_t out_h, std::size_t out_w) {
    const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    Tensor<T> y({n, c, out_h, out_w});
    std::vector<std::size_t> i0(out_h), j0(out_w);
    std::vector<T> fi(out_h), fj(out_w);
    const double sh = out_h > 1 && h > 1 ? static_cast<double>(h - 1) / static_cast<double>(out_h - 1) : 0.0;
    const double sw = out_w > 1 && w > 1 ? static_cast<double>(w - 1) / static_cast<double>(out_w - 1) : 0.0;
    for (std::size_t i = 0; i < out_h; ++i) {
        const double src = sh * static_cast<double>(i);
        i0[i] = std::min(static_cast<std::size_t>(src), h >= 2 ? h - 2 : 0);
        fi[i] = static_cast<T>(src - static_cast<double>(i0[i]));
        if (h == 1) fi[i] = T(0);
    }
    for (std::size_t j = 0; j < out_w; ++j) {
        const double src = sw * static_cast<double>(j);
        j0[j] = std::min(static_cast<std::size_t>(src), w >= 2 ? w - 2 : 0);
        fj[j] = static_cast<T>(src - static_cast<double>(j0[j]));
        if (w == 1) fj[j] = T(0);
    }
    const std::size_t hstep = h >= 2 ? w : 0;
    const std::size_t wstep = w >= 2 ? 1 : 0;
    for (std::size_t nc = 0; nc < n * c; ++nc) {
        const T* src = x.data() + nc * h * w;
        T* dst = y.data() + nc * out_h * out_w;
        for (std::size_t i = 0; i < out_h; ++i)
            for (std::size_t j = 0; j < out_w; ++j) {
                const T* p = src + i0[i] * w + j0[j];
                const T a = fi[i], b = fj[j];
                dst[i * out_w + j] = (T(1) - a) * (T(1) - b) * p[0] +
                                     (T(1) - a) * b * p[wstep] + a * (T(1) - b) * p[hstep] +
                                     a * b * p[hstep + wstep];
            }
    }
    return y;
}

template <typename T>
Tensor<T> bilinear_resize2d_backward(const Tensor<T>& dy, std::size_t in_h, std::size_t in_w) {
    const std::size_t n = dy.dim(0), c = dy.dim(1), out_h = dy.dim(2), out_w = dy.dim(3);
    Tensor<T> dx({n, c, in_h, in_w});
    std::vector<std::size_t> i0(out_h), j0(out_w);
    std::vector<T> fi(out_h), fj(out_w);
    const double sh = out_h > 1 && in_h > 1 ? static_cast<double>(in_h - 1) / static_cast<double>(out_h - 1) : 0.0;
    const double sw = out_w > 1 && in_w > 1 ? static_cast<double>(in_w - 1) / static_cast<double>(out_w - 1) : 0.0;
    for (std::size_t i = 0; i < out_h; ++i) {
        const double src = sh * static_cast<double>(i);
        i0[i] = std::min(static_cast<std::size_t>(src), in_h >= 2 ? in_h - 2 : 0);
        fi[i] = static_cast<T>(src - static_cast<double>(i0[i]));
        if (in_h == 1) fi[i] = T(0);
    }
    for (std::size_t j = 0; j < out_w; ++j) {
        const double src = sw * static_cast<double>(j);
        j0[j] = std::min(static_cast<std::size_t>(src), in_w >= 2 ? in_w - 2 : 0);
        fj[j] = static_cast<T>(src - static_cast<double>(j0[j]));
        if (in_w == 1) fj[j] = T(0);
    }
    const std::size_t hstep = in_h >= 2 ? in_w : 0;
    const std::size_t wstep = in_w >= 2 ? 1 : 0;
    for (std::size_t nc = 0; nc < n * c; ++nc) {
        const T* src = dy.data() + nc * out_h * out_w;
        T* dst = dx.data() + nc * in_h * in_w;
        for (std::size_t i = 0; i < out_h; ++i)
            for (std::size_t j = 0; j < out_w; ++j) {
                const T g = src[i * out_w + j];
                T* p = dst + i0[i] * in_w + j0[j];
                const T a = fi[i], b = fj[j];
                p[0] += (T(1) - a) * (T(1) - b) * g;
                p[wstep] += (T(1) - a) * b * g;
                p[hstep] += a * (T(1) - b) * g;
                p[hstep + wstep] += a * b * g;
            }
    }
    return dx;
}

// ---- global pooling and the final linear head ----

template <typename T>
Tensor<T> global_avg_pool3d(const Tensor<T>& x) {
    const std::size_t c = x.dim(0), vol = x.dim(1) * x.dim(2) * x.dim(3);
    Tensor<T> y({c});
    for (std::size_t ch = 0; ch < c; ++ch) {
        double acc = 0.0;
        const T* p = x.data() + ch * vol;
        for (std::size_t i = 0; i < vol; ++i) acc += static_cast<double>(p[i]);
        y[ch] = static_cast<T>(acc / static_cast<double>(vol));
    }
    return y;
}

template <typename T>
void global_avg_pool3d_backward(const Tensor<T>& dy, Tensor<T>& dx) {
    const std::size_t c = dx.dim(0), vol = dx.dim(1) * dx.dim(2) * dx.dim(3);
    for (std::size_t ch = 0; ch < c; ++ch) {
        const T g = dy[ch] / static_cast<T>(vol);
        T* p = dx.data() + ch * vol;
        for (std::size_t i = 0; i < vol; ++i) p[i] += g;
    }
}

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
    const std::size_t out = w.dim(0), in = w.dim(1);
    if (x.size() != in) throw shape_error("linear: input size mismatch");
    Tensor<T> y({out});
    for (std::size_t o = 0; o < out; ++o) {
        double acc = static_cast<double>(b[o]);
        const T* row = w.data() + o * in;
        for (std::size_t i = 0; i < in; ++i) acc += static_cast<double>(row[i]) * static_cast<double>(x[i]);
        y[o] = static_cast<T>(acc);
    }
    return y;
}

template <typename T>
void linear_backward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& dy, Tensor<T>* dw,
                     Tensor<T>* db, Tensor<T>* dx) {
    const std::size_t out = w.dim(0), in = w.dim(1);
    for (std::size_t o = 0; o < out; ++o) {
        const T g = dy[o];
        if (db) (*db)[o] += g;
        if (dw) {
            T* row = dw->data() + o * in;
            for (std::size_t i = 0; i < in; ++i) row[i] += g * x[i];
        }
        if (dx) {
            const T* row = w.data() + o * in;
            for (std::size_t i = 0; i < in; ++i) (*dx)[i] += g * row[i];
        }
    }
}

} // namespace nn
} // namespace soupsr
