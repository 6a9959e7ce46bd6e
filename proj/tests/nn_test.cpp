#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <functional>

#include "soupsr/checkpoint.hpp"
#include "soupsr/nn/discriminator.hpp"
#include "soupsr/nn/generator.hpp"
#include "soupsr/nn/ops.hpp"
#include "soupsr/synth.hpp"

using namespace soupsr;

namespace {

template <typename T>
Tensor<T> random_tensor(const std::vector<std::size_t>& shape, std::uint64_t seed) {
    Tensor<T> t(shape);
    Rng rng(seed);
    for (T& v : t) v = static_cast<T>(rng.normal() * 0.5);
    return t;
}

// central-difference derivative of f along one coordinate of x
double numeric_deriv(Tensor<double>& x, std::size_t i, const std::function<double()>& f,
                     double h = 1e-5) {
    const double keep = x[i];
    x[i] = keep + h;
    const double fp = f();
    x[i] = keep - h;
    const double fm = f();
    x[i] = keep;
    return (fp - fm) / (2.0 * h);
}

void check_grad(Tensor<double>& x, const Tensor<double>& analytic,
                const std::function<double()>& f, double tol = 1e-6) {
    REQUIRE(x.same_shape(analytic));
    const std::size_t step = std::max<std::size_t>(1, x.size() / 24);
    for (std::size_t i = 0; i < x.size(); i += step) {
        const double num = numeric_deriv(x, i, f);
        const double scale = std::max({std::abs(num), std::abs(analytic[i]), 1.0});
        REQUIRE(std::abs(analytic[i] - num) / scale < tol);
    }
}

// naive direct 3D convolution used as the oracle for the im2col path
Tensor<double> conv3d_naive(const Tensor<double>& x, const Tensor<double>& w,
                            const Tensor<double>& b, std::size_t stride, std::size_t pad) {
    const std::size_t co = w.dim(0), ci = w.dim(1);
    const std::size_t kz = w.dim(2), ky = w.dim(3), kx = w.dim(4);
    const auto out = [&](std::size_t n, std::size_t k) {
        return (n + 2 * pad - k) / stride + 1;
    };
    const std::size_t zo = out(x.dim(1), kz), yo = out(x.dim(2), ky), xo = out(x.dim(3), kx);
    Tensor<double> y({co, zo, yo, xo});
    for (std::size_t c = 0; c < co; ++c)
        for (std::size_t z = 0; z < zo; ++z)
            for (std::size_t yy = 0; yy < yo; ++yy)
                for (std::size_t xx = 0; xx < xo; ++xx) {
                    double acc = b[c];
                    for (std::size_t ic = 0; ic < ci; ++ic)
                        for (std::size_t dz = 0; dz < kz; ++dz)
                            for (std::size_t dy = 0; dy < ky; ++dy)
                                for (std::size_t dx = 0; dx < kx; ++dx) {
                                    const std::ptrdiff_t sz = static_cast<std::ptrdiff_t>(
                                        z * stride + dz) - static_cast<std::ptrdiff_t>(pad);
                                    const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(
                                        yy * stride + dy) - static_cast<std::ptrdiff_t>(pad);
                                    const std::ptrdiff_t sx = static_cast<std::ptrdiff_t>(
                                        xx * stride + dx) - static_cast<std::ptrdiff_t>(pad);
                                    if (sz < 0 || sy < 0 || sx < 0 ||
                                        sz >= static_cast<std::ptrdiff_t>(x.dim(1)) ||
                                        sy >= static_cast<std::ptrdiff_t>(x.dim(2)) ||
                                        sx >= static_cast<std::ptrdiff_t>(x.dim(3)))
                                        continue;
                                    acc += w(c, ic, dz, dy, dx) *
                                           x(ic, static_cast<std::size_t>(sz),
                                             static_cast<std::size_t>(sy),
                                             static_cast<std::size_t>(sx));
                                }
                    y(c, z, yy, xx) = acc;
                }
    return y;
}

double dot(const Tensor<double>& a, const Tensor<double>& b) {
    double acc = 0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

} // namespace

TEST_CASE("conv3d matches a direct convolution") {
    const auto x = random_tensor<double>({2, 4, 5, 6}, 1);
    const auto w = random_tensor<double>({3, 2, 3, 3, 3}, 2);
    const auto b = random_tensor<double>({3}, 3);
    for (std::size_t stride : {1ul, 2ul}) {
        const Tensor<double> fast = nn::conv3d(x, w, b, stride, 1);
        const Tensor<double> slow = conv3d_naive(x, w, b, stride, 1);
        REQUIRE(fast.same_shape(slow));
        for (std::size_t i = 0; i < fast.size(); ++i)
            REQUIRE(fast[i] == Catch::Approx(slow[i]).margin(1e-12));
    }
}

TEST_CASE("conv3d backward agrees with finite differences") {
    auto x = random_tensor<double>({2, 3, 4, 5}, 4);
    auto w = random_tensor<double>({2, 2, 3, 3, 3}, 5);
    auto b = random_tensor<double>({2}, 6);
    const auto r = random_tensor<double>({2, 3, 4, 5}, 7);
    const auto loss = [&] { return dot(nn::conv3d(x, w, b, 1, 1), r); };

    Tensor<double> dw = w.zeros_like(), db = b.zeros_like(), dx = x.zeros_like();
    nn::conv3d_backward(x, w, r, 1, 1, &dw, &db, &dx);
    check_grad(x, dx, loss);
    check_grad(w, dw, loss);
    check_grad(b, db, loss);
}

TEST_CASE("conv3d backward accumulates into existing gradients") {
    const auto x = random_tensor<double>({1, 3, 3, 3}, 8);
    const auto w = random_tensor<double>({1, 1, 3, 3, 3}, 9);
    const auto b = random_tensor<double>({1}, 10);
    const auto dy = random_tensor<double>({1, 3, 3, 3}, 11);
    Tensor<double> dw1 = w.zeros_like(), db1 = b.zeros_like();
    nn::conv3d_backward<double>(x, w, dy, 1, 1, &dw1, &db1, nullptr);
    Tensor<double> dw2 = dw1, db2 = db1;
    nn::conv3d_backward<double>(x, w, dy, 1, 1, &dw2, &db2, nullptr);
    for (std::size_t i = 0; i < dw1.size(); ++i)
        REQUIRE(dw2[i] == Catch::Approx(2 * dw1[i]).margin(1e-12));
    REQUIRE(db2[0] == Catch::Approx(2 * db1[0]).margin(1e-12));
}

TEST_CASE("conv2d matches conv3d on a single-slice volume") {
    // a (N,C,H,W) conv with a kz=1 3D kernel over a Z=1 volume is the same op
    const auto x2 = random_tensor<double>({1, 2, 6, 7}, 12);
    const auto w2 = random_tensor<double>({3, 2, 3, 3}, 13);
    const auto b = random_tensor<double>({3}, 14);
    Tensor<double> x3({2, 1, 6, 7});
    for (std::size_t c = 0; c < 2; ++c)
        std::copy(x2.data() + c * 42, x2.data() + (c + 1) * 42, x3.data() + c * 42);
    Tensor<double> w3({3, 2, 1, 3, 3});
    std::copy(w2.begin(), w2.end(), w3.begin());

    const Tensor<double> y2 = nn::conv2d(x2, w2, b, 1, 1);
    // padding extends the z axis too, so zo = 3; the center slice is the 2D conv
    Tensor<double> y3 = conv3d_naive(x3, w3, b, 1, 1);
    REQUIRE(y3.dim(1) == 3);
    REQUIRE(y2.size() * 3 == y3.size());
    const std::size_t hw = y3.dim(2) * y3.dim(3);
    for (std::size_t c = 0; c < y3.dim(0); ++c)
        for (std::size_t i = 0; i < hw; ++i)
            REQUIRE(y2[c * hw + i] == Catch::Approx(y3[(c * 3 + 1) * hw + i]).margin(1e-12));
}

TEST_CASE("conv2d input gradient agrees with finite differences") {
    auto x = random_tensor<double>({2, 2, 5, 6}, 15);
    const auto w = random_tensor<double>({3, 2, 3, 3}, 16);
    const auto b = random_tensor<double>({3}, 17);
    for (std::size_t stride : {1ul, 2ul}) {
        const Tensor<double> y = nn::conv2d(x, w, b, stride, 1);
        const auto r = random_tensor<double>(y.shape(), 18);
        const auto loss = [&] { return dot(nn::conv2d(x, w, b, stride, 1), r); };
        const Tensor<double> dx = nn::conv2d_backward_input(w, r, 5, 6, stride, 1);
        check_grad(x, dx, loss);
    }
}

TEST_CASE("activation backward masks by sign") {
    auto x = random_tensor<double>({40}, 19);
    for (double& v : x)
        if (std::abs(v) < 1e-3) v = 0.5;  // keep clear of the kink
    const auto r = random_tensor<double>({40}, 20);

    const auto relu_loss = [&] {
        Tensor<double> y = x;
        nn::relu_inplace(y);
        return dot(y, r);
    };
    Tensor<double> y = x;
    nn::relu_inplace(y);
    Tensor<double> dy = r;
    nn::relu_backward_inplace(y, dy);
    check_grad(x, dy, relu_loss);

    const double slope = 0.2;
    const auto leaky_loss = [&] {
        Tensor<double> t = x;
        nn::leaky_relu_inplace(t, slope);
        return dot(t, r);
    };
    Tensor<double> ly = x;
    nn::leaky_relu_inplace(ly, slope);
    Tensor<double> ldy = r;
    nn::leaky_relu_backward_inplace(ly, ldy, slope);
    check_grad(x, ldy, leaky_loss);
}

TEST_CASE("maxpool2d picks window maxima and routes gradients to them") {
    auto x = random_tensor<double>({1, 2, 6, 8}, 21);
    const auto r1 = nn::maxpool2d(x);
    REQUIRE(r1.y.dim(2) == 3);
    REQUIRE(r1.y.dim(3) == 4);
    for (std::size_t c = 0; c < 2; ++c)
        for (std::size_t i = 0; i < 3; ++i)
            for (std::size_t j = 0; j < 4; ++j) {
                const double m = std::max({x(0, c, 2 * i, 2 * j), x(0, c, 2 * i, 2 * j + 1),
                                           x(0, c, 2 * i + 1, 2 * j), x(0, c, 2 * i + 1, 2 * j + 1)});
                REQUIRE(r1.y(0, c, i, j) == m);
            }

    const auto r = random_tensor<double>({1, 2, 3, 4}, 22);
    const auto loss = [&] { return dot(nn::maxpool2d(x).y, r); };
    const Tensor<double> dx = nn::maxpool2d_backward(r1, r, 6, 8);
    check_grad(x, dx, loss);
}

TEST_CASE("bilinear resize keeps constants and has a true adjoint") {
    Tensor<double> c({1, 1, 4, 5});
    c.fill(0.75);
    const Tensor<double> up = nn::bilinear_resize2d(c, 9, 11);
    for (double v : up) REQUIRE(v == Catch::Approx(0.75).margin(1e-12));

    const auto x = random_tensor<double>({2, 3, 4, 5}, 23);
    const auto y = random_tensor<double>({2, 3, 9, 7}, 24);
    const Tensor<double> ax = nn::bilinear_resize2d(x, 9, 7);
    const Tensor<double> aty = nn::bilinear_resize2d_backward(y, 4, 5);
    REQUIRE(dot(ax, y) == Catch::Approx(dot(x, aty)).epsilon(1e-12));
}

TEST_CASE("global average pool and linear head gradients") {
    auto x = random_tensor<double>({3, 2, 3, 4}, 25);
    const Tensor<double> pooled = nn::global_avg_pool3d(x);
    REQUIRE(pooled.size() == 3);
    double m0 = 0;
    for (std::size_t i = 0; i < 24; ++i) m0 += x[i];
    REQUIRE(pooled[0] == Catch::Approx(m0 / 24).margin(1e-12));

    auto w = random_tensor<double>({2, 3}, 26);
    auto b = random_tensor<double>({2}, 27);
    const auto r = random_tensor<double>({2}, 28);
    const auto loss = [&] {
        return dot(nn::linear(nn::global_avg_pool3d(x), w, b), r);
    };
    Tensor<double> dw = w.zeros_like(), db = b.zeros_like(), dpool = pooled.zeros_like();
    nn::linear_backward(pooled, w, r, &dw, &db, &dpool);
    Tensor<double> dx = x.zeros_like();
    nn::global_avg_pool3d_backward(dpool, dx);
    check_grad(x, dx, loss);
    check_grad(w, dw, loss);
    check_grad(b, db, loss);
}

TEST_CASE("untrained generator is the identity map") {
    GeneratorConfig cfg;
    cfg.base_channels = 8;
    cfg.n_residual_blocks = 2;
    cfg.scales = {2, 3};
    const Generator<float> gen(cfg);
    const ParamSet<float> p = gen.init_params(31);
    const Volume v = synth_volume(6, 7, 8, 32, "idvol");
    const Tensor<float> out = gen.forward(p, scale_prefix(2), v.data);
    REQUIRE(out == v.data);
    const Tensor<float> out3 = gen.forward(p, scale_prefix(3), v.data);
    REQUIRE(out3 == v.data);
}

TEST_CASE("generator parameter names partition into backbone and scale groups") {
    GeneratorConfig cfg;
    cfg.base_channels = 4;
    cfg.n_residual_blocks = 2;
    cfg.scales = {2, 3, 4};
    const Generator<float> gen(cfg);
    const ParamSet<float> p = gen.init_params(1);
    std::size_t named = gen.backbone_names().size();
    for (int s : cfg.scales) named += gen.scale_names(s).size();
    REQUIRE(named == p.size());
    for (const std::string& n : gen.backbone_names()) REQUIRE(p.has(n));
    for (const std::string& n : gen.scale_names(3)) REQUIRE(p.has(n));
}

namespace {

template <BlockType BT>
void generator_fd_check() {
    GeneratorConfig cfg;
    cfg.base_channels = 4;
    cfg.n_residual_blocks = BT == BlockType::rrdb ? 1 : 2;
    cfg.block_type = BT;
    cfg.scales = {2};
    const Generator<double> gen(cfg);
    ParamSet<double> p = gen.init_params(33);
    // nudge the zero-initialized output conv so its gradient paths are live
    {
        Rng rng(34);
        for (double& v : p.at("scale2.post.c2.w")) v = 0.05 * rng.normal();
        for (double& v : p.at("scale2.post.c2.b")) v = 0.05 * rng.normal();
    }
    auto x = random_tensor<double>({4, 5, 6}, 35);
    const auto target = random_tensor<double>({4, 5, 6}, 36);

    const auto loss = [&] {
        const Tensor<double> out = gen.forward(p, scale_prefix(2), x);
        double acc = 0;
        for (std::size_t i = 0; i < out.size(); ++i) {
            const double d = out[i] - target[i];
            acc += 0.5 * d * d;
        }
        return acc;
    };

    typename Generator<double>::Cache cache;
    const Tensor<double> out = gen.forward_train(p, scale_prefix(2), x, cache);
    Tensor<double> dout = out;
    for (std::size_t i = 0; i < dout.size(); ++i) dout[i] = out[i] - target[i];
    ParamSet<double> grads = p.zeros_like();
    Tensor<double> dx = x.zeros_like();
    gen.backward(p, scale_prefix(2), cache, dout, grads, &dx);

    check_grad(x, dx, loss, 1e-5);
    for (const auto& [name, g] : grads) {
        Tensor<double>& theta = p.at(name);
        const std::size_t step = std::max<std::size_t>(1, theta.size() / 4);
        for (std::size_t i = 0; i < theta.size(); i += step) {
            const double num = numeric_deriv(theta, i, loss);
            const double scale = std::max({std::abs(num), std::abs(g[i]), 1.0});
            REQUIRE(std::abs(g[i] - num) / scale < 1e-5);
        }
    }
}

} // namespace

TEST_CASE("generator gradients agree with finite differences (plain blocks)") {
    generator_fd_check<BlockType::plain_residual>();
}

TEST_CASE("generator gradients agree with finite differences (dense blocks)") {
    generator_fd_check<BlockType::rrdb>();
}

TEST_CASE("fresh discriminator is maximally uncertain") {
    DiscriminatorConfig cfg;
    cfg.channels = {4, 8};
    cfg.input_patch = 8;
    const Discriminator<float> disc(cfg);
    const ParamSet<float> p = disc.init_params(40);
    const Volume v = synth_volume(8, 8, 8, 41, "d");
    REQUIRE(disc.forward(p, v.data) == 0.0f);
}

TEST_CASE("discriminator gradients agree with finite differences") {
    DiscriminatorConfig cfg;
    cfg.channels = {3, 4};
    cfg.input_patch = 8;
    const Discriminator<double> disc(cfg);
    ParamSet<double> p = disc.init_params(42);
    {
        Rng rng(43);
        for (double& v : p.at("d.head.w")) v = 0.3 * rng.normal();
        p.at("d.head.b")[0] = 0.1;
    }
    auto patch = random_tensor<double>({8, 8, 8}, 44);

    const auto loss = [&] { return static_cast<double>(disc.forward(p, patch)); };

    typename Discriminator<double>::Cache cache;
    disc.forward_train(p, patch, cache);
    ParamSet<double> grads = p.zeros_like();
    Tensor<double> dpatch = patch.zeros_like();
    disc.backward(p, cache, 1.0, grads, &dpatch);

    check_grad(patch, dpatch, loss, 1e-5);
    for (const auto& [name, g] : grads) {
        Tensor<double>& theta = p.at(name);
        const std::size_t step = std::max<std::size_t>(1, theta.size() / 6);
        for (std::size_t i = 0; i < theta.size(); i += step) {
            const double num = numeric_deriv(theta, i, loss);
            const double scale = std::max({std::abs(num), std::abs(g[i]), 1.0});
            REQUIRE(std::abs(g[i] - num) / scale < 1e-5);
        }
    }
}

TEST_CASE("discriminator rejects wrong patch shapes") {
    DiscriminatorConfig cfg;
    cfg.channels = {3, 4};
    cfg.input_patch = 8;
    const Discriminator<float> disc(cfg);
    const ParamSet<float> p = disc.init_params(1);
    Tensor<float> wrong({7, 8, 8});
    REQUIRE_THROWS_AS(disc.forward(p, wrong), shape_error);
}

TEST_CASE("checkpoint save and load roundtrips bit-exactly") {
    GeneratorConfig cfg;
    cfg.base_channels = 4;
    cfg.n_residual_blocks = 1;
    cfg.scales = {2, 3};
    MultiScaleCheckpoint ckpt = make_checkpoint(cfg, 77);
    ckpt.meta["note"] = "roundtrip";
    const auto path = std::filesystem::temp_directory_path() / "soupsr_nn_ckpt.soup";
    save_checkpoint(ckpt, path);
    const MultiScaleCheckpoint back = load_checkpoint(path);
    REQUIRE(back.stage == ckpt.stage);
    REQUIRE(back.config.scales == cfg.scales);
    REQUIRE(back.meta.at("note") == "roundtrip");
    REQUIRE(back.params.size() == ckpt.params.size());
    for (const auto& [name, t] : ckpt.params) REQUIRE(back.params.at(name) == t);
}

TEST_CASE("checkpoint validation flags corruption") {
    GeneratorConfig cfg;
    cfg.base_channels = 4;
    cfg.n_residual_blocks = 1;
    cfg.scales = {2};
    MultiScaleCheckpoint ckpt = make_checkpoint(cfg, 1);
    validate_checkpoint(ckpt);
    MultiScaleCheckpoint bad = ckpt;
    bad.params.at("scale2.pre.conv.w")[0] = std::numeric_limits<float>::quiet_NaN();
    REQUIRE_THROWS_AS(validate_checkpoint(bad), corruption_error);
    MultiScaleCheckpoint wrong_cfg = ckpt;
    wrong_cfg.config.scales = {2, 3};
    REQUIRE_THROWS_AS(validate_checkpoint(wrong_cfg), corruption_error);
}

TEST_CASE("parameter interpolation endpoints and midpoint") {
    GeneratorConfig cfg;
    cfg.base_channels = 4;
    cfg.n_residual_blocks = 1;
    cfg.scales = {2, 3};
    const MultiScaleCheckpoint ckpt = make_checkpoint(cfg, 5);

    const ParamSet<float> at2 = interpolate_params(ckpt, 2.0);
    const ParamSet<float> at3 = interpolate_params(ckpt, 3.0);
    for (const std::string& suffix : Generator<float>::per_scale_suffixes()) {
        REQUIRE(at2.at(std::string(kBlendedScalePrefix) + suffix) ==
                ckpt.params.at(scale_prefix(2) + suffix));
        REQUIRE(at3.at(std::string(kBlendedScalePrefix) + suffix) ==
                ckpt.params.at(scale_prefix(3) + suffix));
    }

    const ParamSet<float> mid = interpolate_params(ckpt, 2.5);
    for (const std::string& suffix : Generator<float>::per_scale_suffixes()) {
        const Tensor<float>& a = ckpt.params.at(scale_prefix(2) + suffix);
        const Tensor<float>& b = ckpt.params.at(scale_prefix(3) + suffix);
        const Tensor<float>& t = mid.at(std::string(kBlendedScalePrefix) + suffix);
        for (std::size_t i = 0; i < t.size(); ++i)
            REQUIRE(t[i] == Catch::Approx(0.5 * (a[i] + b[i])).margin(1e-7));
    }
    // backbone passes through untouched
    for (const auto& [name, t] : ckpt.params)
        if (name.rfind("backbone.", 0) == 0) REQUIRE(mid.at(name) == t);

    REQUIRE_THROWS_AS(interpolate_params(ckpt, 1.9), scale_range_error);
    REQUIRE_THROWS_AS(interpolate_params(ckpt, 3.1), scale_range_error);
}

TEST_CASE("untrained generate reduces to cubic upsampling") {
    GeneratorConfig cfg;
    cfg.base_channels = 4;
    cfg.n_residual_blocks = 1;
    cfg.scales = {2, 3};
    const MultiScaleCheckpoint ckpt = make_checkpoint(cfg, 9);
    const Volume v = synth_volume(6, 8, 8, 10, "gen");
    const Volume sr = generate(ckpt, v, 2.0);
    const Volume cubic = tricubic_interpolate(v, 2.0);
    REQUIRE(sr.data == cubic.data);
    const Volume sr_frac = generate(ckpt, v, 2.5);
    REQUIRE(sr_frac.data == tricubic_interpolate(v, 2.5).data);
    REQUIRE_THROWS_AS(generate(ckpt, v, 4.0), scale_range_error);
}
