#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <sys/wait.h>
#include <vector>

#include "soupsr/soupsr.hpp"

using namespace soupsr;
namespace fs = std::filesystem;

namespace {

double now_s() {
    return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

/// Prints the one-line verdict for a criterion, then fails the test case if
/// anything was collected.
void conclude(int n, const char* slug, const std::vector<std::string>& fails, double elapsed) {
    std::printf("ACCEPTANCE %d %s: %s (%.1fs)\n", n, slug, fails.empty() ? "PASS" : "FAIL",
                elapsed);
    for (const std::string& f : fails) std::printf("    - %s\n", f.c_str());
    std::fflush(stdout);
    REQUIRE(fails.empty());
}

struct Criterion {
    int n;
    const char* slug;
    double budget_s;  // 0 = no stated budget
    std::vector<std::string> fails;
    double t0 = now_s();

    Criterion(int n_, const char* slug_, double budget) : n(n_), slug(slug_), budget_s(budget) {}

    void check(bool ok, const std::string& msg) {
        if (!ok) fails.push_back(msg);
    }

    template <typename Body>
    void run(Body&& body) {
        try {
            body(*this);
        } catch (const std::exception& e) {
            fails.push_back(std::string("unexpected exception: ") + e.what());
        }
        const double elapsed = now_s() - t0;
        if (budget_s > 0 && elapsed > budget_s)
            fails.push_back("runtime " + std::to_string(elapsed) + "s exceeds " +
                            std::to_string(budget_s) + "s budget");
        conclude(n, slug, fails, elapsed);
    }
};

Volume random_volume(std::size_t z, std::size_t y, std::size_t x, std::uint64_t seed) {
    Volume v = make_volume(z, y, x);
    Rng rng(seed);
    for (float& p : v.data) p = static_cast<float>(rng.uniform());
    return v;
}

Tensor<float> random_tensor(std::size_t z, std::size_t y, std::size_t x, std::uint64_t seed) {
    Tensor<float> t({z, y, x});
    Rng rng(seed);
    for (float& p : t) p = static_cast<float>(rng.uniform());
    return t;
}

std::string tensor_hash(const Tensor<float>& t) {
    Sha256 h;
    h.update(t.data(), t.size() * sizeof(float));
    return h.hex_digest();
}

std::map<std::string, std::string> param_hashes(const ParamSet<float>& p) {
    std::map<std::string, std::string> out;
    for (const auto& [name, t] : p) out[name] = tensor_hash(t);
    return out;
}

double max_abs_param_diff(const ParamSet<float>& a, const ParamSet<float>& b) {
    double worst = 0;
    for (const auto& [name, t] : a) {
        if (!b.has(name)) return std::numeric_limits<double>::infinity();
        const Tensor<float>& u = b.at(name);
        if (u.size() != t.size()) return std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < t.size(); ++i)
            worst = std::max(worst, std::abs(static_cast<double>(t[i]) - u[i]));
    }
    return worst;
}

}  // namespace

TEST_CASE("degradation models match brute-force oracles", "[acceptance]") {
    Criterion c(1, "degradation-oracles", 60.0);
    c.run([](Criterion& c) {
        Rng rng(1001);
        double worst_thick = 0, worst_thin = 0;
        for (int iter = 0; iter < 200; ++iter) {
            const std::size_t z = 8 + rng.index(33);
            const std::size_t y = 8 + rng.index(33);
            const std::size_t x = 8 + rng.index(33);
            const int s = 2 + static_cast<int>(rng.index(5));
            const Volume v = random_volume(z, y, x, 2000 + static_cast<std::uint64_t>(iter));

            DegradationSpec spec;
            spec.s = s;
            spec.mode = DegradeMode::thin_to_thick;
            const Volume thick = degrade(v, spec, 0);
            const std::size_t zt = z / static_cast<std::size_t>(s);
            if (thick.data.dim(0) != zt || thick.data.dim(1) != y || thick.data.dim(2) != x) {
                c.check(false, "thin_to_thick output shape wrong at iter " + std::to_string(iter));
                return;
            }
            for (std::size_t k = 0; k < zt; ++k)
                for (std::size_t j = 0; j < y; ++j)
                    for (std::size_t i = 0; i < x; ++i) {
                        double acc = 0;
                        for (int d = 0; d < s; ++d)
                            acc += v.data(k * static_cast<std::size_t>(s) +
                                              static_cast<std::size_t>(d),
                                          j, i);
                        worst_thick = std::max(
                            worst_thick, std::abs(acc / s - static_cast<double>(thick.data(k, j, i))));
                    }

            spec.mode = DegradeMode::thin_to_thin;
            const Volume thin = degrade(v, spec, 0);
            const std::size_t zn = (z + static_cast<std::size_t>(s) - 1) / static_cast<std::size_t>(s);
            if (thin.data.dim(0) != zn) {
                c.check(false, "thin_to_thin slice count wrong at iter " + std::to_string(iter));
                return;
            }
            for (std::size_t k = 0; k < zn; ++k)
                for (std::size_t j = 0; j < y; ++j)
                    for (std::size_t i = 0; i < x; ++i)
                        worst_thin = std::max(
                            worst_thin,
                            std::abs(static_cast<double>(v.data(k * static_cast<std::size_t>(s), j, i)) -
                                     thin.data(k, j, i)));
        }
        c.check(worst_thick <= 1e-6,
                "thin_to_thick deviates from slab-average oracle by " + std::to_string(worst_thick));
        c.check(worst_thin <= 1e-6,
                "thin_to_thin deviates from decimation oracle by " + std::to_string(worst_thin));
    });
}

TEST_CASE("cubic upsampling reproduces constants and linear ramps", "[acceptance]") {
    Criterion c(2, "cubic-upsampling", 60.0);
    c.run([](Criterion& c) {
        for (const double s : {2.0, 2.5, 3.0, 4.0}) {
            const std::size_t zin = 9, ny = 5, nx = 6;
            const std::size_t zout =
                static_cast<std::size_t>(std::llround(s * static_cast<double>(zin)));

            Volume flat = make_volume(zin, ny, nx);
            for (float& p : flat.data) p = 0.37f;
            const Volume uf = upsample_cubic(flat, s);
            c.check(uf.data.dim(0) == zout,
                    "constant volume: wrong output slice count at s=" + std::to_string(s));
            bool exact = true;
            for (const float p : uf.data) exact = exact && p == 0.37f;
            c.check(exact, "constant volume not reproduced exactly at s=" + std::to_string(s));

            Volume ramp = make_volume(zin, ny, nx);
            for (std::size_t k = 0; k < zin; ++k)
                for (std::size_t j = 0; j < ny; ++j)
                    for (std::size_t i = 0; i < nx; ++i)
                        ramp.data(k, j, i) = 0.05f * static_cast<float>(k);
            const Volume ur = upsample_cubic(ramp, s);
            double worst = 0;
            for (std::size_t k = 0; k < ur.data.dim(0); ++k) {
                const double coord = static_cast<double>(k) * (static_cast<double>(zin) - 1.0) /
                                     (static_cast<double>(ur.data.dim(0)) - 1.0);
                for (std::size_t j = 0; j < ny; ++j)
                    for (std::size_t i = 0; i < nx; ++i)
                        worst = std::max(worst,
                                         std::abs(0.05 * coord - ur.data(k, j, i)));
            }
            c.check(worst <= 1e-5, "z-ramp deviates by " + std::to_string(worst) + " at s=" +
                                       std::to_string(s));

            Volume side = make_volume(zin, ny, nx);
            for (std::size_t k = 0; k < zin; ++k)
                for (std::size_t j = 0; j < ny; ++j)
                    for (std::size_t i = 0; i < nx; ++i)
                        side.data(k, j, i) = 0.1f * static_cast<float>(j);
            const Volume us = upsample_cubic(side, s);
            double worst_side = 0;
            for (std::size_t k = 0; k < us.data.dim(0); ++k)
                for (std::size_t j = 0; j < ny; ++j)
                    for (std::size_t i = 0; i < nx; ++i)
                        worst_side = std::max(
                            worst_side, std::abs(0.1 * static_cast<double>(j) - us.data(k, j, i)));
            c.check(worst_side <= 1e-5, "in-plane ramp altered by z interpolation at s=" +
                                            std::to_string(s));
        }
    });
}

TEST_CASE("fractional-scale parameters blend endpoint banks", "[acceptance]") {
    Criterion c(3, "fractional-blend", 60.0);
    c.run([](Criterion& c) {
        GeneratorConfig gcfg;
        gcfg.base_channels = 4;
        gcfg.n_residual_blocks = 1;
        gcfg.scales = {2, 3};
        MultiScaleCheckpoint ckpt = make_checkpoint(gcfg, 11);
        Rng prng(12);
        for (const int s : {2, 3})
            for (const std::string& suf : Generator<float>::per_scale_suffixes())
                for (float& w : ckpt.params.at(scale_prefix(s) + suf))
                    w += static_cast<float>(0.1 * prng.normal());

        for (const int s : {2, 3}) {
            const ParamSet<float> end = interpolate_params(ckpt, static_cast<double>(s));
            for (const auto& [name, t] : ckpt.params) {
                if (name.rfind("backbone.", 0) != 0) continue;
                const Tensor<float>& u = end.at(name);
                for (std::size_t i = 0; i < t.size(); ++i)
                    if (t[i] != u[i]) {
                        c.check(false, "backbone not bit-exact at integer scale " +
                                           std::to_string(s));
                        return;
                    }
            }
            for (const std::string& suf : Generator<float>::per_scale_suffixes()) {
                const Tensor<float>& a = ckpt.params.at(scale_prefix(s) + suf);
                const Tensor<float>& b = end.at(std::string(kBlendedScalePrefix) + suf);
                for (std::size_t i = 0; i < a.size(); ++i)
                    if (a[i] != b[i]) {
                        c.check(false, "scale bank " + std::to_string(s) +
                                           " not bit-exact at its own endpoint");
                        return;
                    }
            }
        }

        const ParamSet<float> mid = interpolate_params(ckpt, 2.5);
        double worst = 0;
        for (const std::string& suf : Generator<float>::per_scale_suffixes()) {
            const Tensor<float>& a = ckpt.params.at(scale_prefix(2) + suf);
            const Tensor<float>& b = ckpt.params.at(scale_prefix(3) + suf);
            const Tensor<float>& m = mid.at(std::string(kBlendedScalePrefix) + suf);
            for (std::size_t i = 0; i < a.size(); ++i) {
                const float expect =
                    static_cast<float>((static_cast<double>(a[i]) + static_cast<double>(b[i])) / 2.0);
                worst = std::max(worst, std::abs(static_cast<double>(expect) - m[i]));
            }
        }
        c.check(worst <= 1e-6,
                "midpoint blend deviates from elementwise mean by " + std::to_string(worst));

        const Volume v = synth_volume(12, 14, 13, 77, "frac");
        const Volume sr = generate(ckpt, v, 2.5);
        const Volume up = upsample_cubic(v, 2.5);
        ParamSet<float> eff;
        for (const auto& [name, t] : ckpt.params)
            if (name.rfind("backbone.", 0) == 0) eff.add(name, t);
        for (const std::string& suf : Generator<float>::per_scale_suffixes()) {
            const Tensor<float>& a = ckpt.params.at(scale_prefix(2) + suf);
            const Tensor<float>& b = ckpt.params.at(scale_prefix(3) + suf);
            Tensor<float> m = a.zeros_like();
            for (std::size_t i = 0; i < a.size(); ++i)
                m[i] = static_cast<float>(0.5 * static_cast<double>(a[i]) +
                                          0.5 * static_cast<double>(b[i]));
            eff.add(std::string(kBlendedScalePrefix) + suf, std::move(m));
        }
        const Tensor<float> manual = Generator<float>(gcfg).forward(eff, kBlendedScalePrefix, up.data);
        if (sr.data.size() != manual.size()) {
            c.check(false, "fractional generation output shape mismatch");
            return;
        }
        double worst_out = 0;
        for (std::size_t i = 0; i < manual.size(); ++i)
            worst_out = std::max(worst_out,
                                 std::abs(static_cast<double>(sr.data[i]) - manual[i]));
        c.check(worst_out <= 1e-6, "generate at s=2.5 deviates from manually blended model by " +
                                       std::to_string(worst_out));
    });
}

TEST_CASE("tri-planar perceptual loss decomposes into plane means", "[acceptance]") {
    Criterion c(4, "tri-planar-decomposition", 300.0);
    c.run([](Criterion& c) {
        // a shallow feature layer keeps five 48-cube pairs inside the time
        // budget on one core; the plane decomposition is layer-independent
        PerceptualConfig base;
        base.feature_layer = "block2_conv2_preactivation";
        const PerceptualLoss<float> tri(base);
        std::vector<PerceptualLoss<float>> singles;
        for (const Plane p : {Plane::axial, Plane::coronal, Plane::sagittal}) {
            PerceptualConfig one = base;
            one.planes = {p};
            singles.emplace_back(one);
        }

        for (int i = 0; i < 5; ++i) {
            const Tensor<float> a = random_tensor(48, 48, 48, 4000 + 2 * static_cast<std::uint64_t>(i));
            const Tensor<float> b = random_tensor(48, 48, 48, 4001 + 2 * static_cast<std::uint64_t>(i));
            const double tv = tri.value(a, b);
            double acc = 0;
            for (const PerceptualLoss<float>& s : singles) acc += s.value(a, b);
            const double mean = acc / 3.0;
            const double rel = std::abs(tv - mean) / std::max(std::abs(mean), 1e-12);
            c.check(rel <= 1e-5, "pair " + std::to_string(i) + ": tri-planar value off by " +
                                     std::to_string(rel) + " relative");
            if (i == 0)
                c.check(tri.value(a, a) == 0.0, "identical inputs do not give exactly zero");
        }
    });
}

TEST_CASE("loss components reproduce closed forms", "[acceptance]") {
    Criterion c(5, "loss-closed-forms", 0.0);
    c.run([](Criterion& c) {
        const double ln2 = std::log(2.0);
        c.check(std::abs(gan_loss_d({0.0}, {0.0}) - 2.0 * ln2) <= 1e-9,
                "gan_loss_d(0,0) != 2 ln 2");
        c.check(std::abs(gan_loss_g({0.0}) - ln2) <= 1e-9, "gan_loss_g(0) != ln 2");

        PerceptualConfig pcfg;
        pcfg.feature_layer = "identity";
        const PerceptualLoss<float> per(pcfg);
        const LossWeights w;

        const std::array<std::array<std::size_t, 3>, 3> dims{
            {{8, 9, 7}, {6, 6, 6}, {10, 5, 8}}};
        const std::array<std::vector<double>, 3> logit_sets{
            {{0.0}, {0.3, -1.2, 0.7}, {-2.0, 2.0, 0.5, -0.5}}};
        for (std::size_t f = 0; f < 3; ++f) {
            const auto [z, y, x] = dims[f];
            const Tensor<float> pred = random_tensor(z, y, x, 500 + 2 * f);
            const Tensor<float> target = random_tensor(z, y, x, 501 + 2 * f);

            double se = 0;
            for (std::size_t i = 0; i < pred.size(); ++i) {
                const double d = static_cast<double>(pred[i]) - target[i];
                se += d * d;
            }
            const double mseo = se / static_cast<double>(pred.size());
            double gacc = 0;
            for (const double l : logit_sets[f])
                gacc += std::max(-l, 0.0) + std::log1p(std::exp(-std::abs(l)));
            const double gexp = gacc / static_cast<double>(logit_sets[f].size());
            const double texp = mseo + 0.01 * gexp + 0.001 * mseo;

            const LossBreakdown bd =
                total_generator_loss(pred, target, logit_sets[f], w, per);
            c.check(std::abs(bd.mse_raw - mseo) <= 1e-9,
                    "fixture " + std::to_string(f) + ": mse_raw off");
            c.check(std::abs(bd.gan_raw - gexp) <= 1e-9,
                    "fixture " + std::to_string(f) + ": gan_raw off");
            c.check(std::abs(bd.perceptual - mseo) <= 1e-9,
                    "fixture " + std::to_string(f) + ": bypassed extractor loss is not the mse");
            c.check(std::abs(bd.total - texp) <= 1e-9,
                    "fixture " + std::to_string(f) + ": composite total off by " +
                        std::to_string(std::abs(bd.total - texp)));
        }
    });
}

TEST_CASE("generator loss gradient passes finite-difference check", "[acceptance]") {
    Criterion c(6, "gradient-check", 300.0);
    c.run([](Criterion& c) {
        Rng rng(6006);
        Tensor<double> pred({16, 16, 16}), target({16, 16, 16});
        for (double& p : pred) p = rng.uniform();
        for (double& p : target) p = rng.uniform();

        PerceptualConfig pcfg;
        pcfg.feature_layer = "block2_conv2_preactivation";
        const PerceptualLoss<double> per(pcfg);

        DiscriminatorConfig dcfg;
        dcfg.channels = {4, 8};
        dcfg.input_patch = 16;
        const Discriminator<double> disc(dcfg);
        ParamSet<double> dp = disc.init_params(999);
        for (auto& [name, t] : dp)
            for (double& v : t) v += 0.2 * rng.normal();

        const LossWeights w;
        const auto loss_at = [&](const Tensor<double>& p) {
            const double logit = disc.forward(dp, p);
            return total_generator_loss(p, target, std::vector<double>{logit}, w, per).total;
        };

        Tensor<double> g = pred.zeros_like();
        per.value_grad(pred, target, g);
        Tensor<double> gm = pred.zeros_like();
        mse_loss_grad(pred, target, gm);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += w.mu_mse * gm[i];
        typename Discriminator<double>::Cache cache;
        const double logit = disc.forward_train(dp, pred, cache);
        std::vector<double> df(1, 0.0);
        gan_loss_g_grad({logit}, df);
        ParamSet<double> dgr = dp.zeros_like();
        disc.backward(dp, cache, w.lambda_gan * df[0], dgr, &g);

        const double h = 1e-5;
        for (int k = 0; k < 10; ++k) {
            Tensor<double> u = pred.zeros_like();
            double norm = 0;
            for (double& v : u) {
                v = rng.normal();
                norm += v * v;
            }
            norm = std::sqrt(norm);
            for (double& v : u) v /= norm;

            double analytic = 0;
            for (std::size_t i = 0; i < u.size(); ++i) analytic += g[i] * u[i];

            Tensor<double> plus = pred, minus = pred;
            for (std::size_t i = 0; i < u.size(); ++i) {
                plus[i] += h * u[i];
                minus[i] -= h * u[i];
            }
            const double numeric = (loss_at(plus) - loss_at(minus)) / (2.0 * h);
            const double rel = std::abs(analytic - numeric) /
                               std::max({std::abs(analytic), std::abs(numeric), 1e-12});
            c.check(rel <= 1e-3, "direction " + std::to_string(k) + ": relative error " +
                                     std::to_string(rel));
        }
    });
}

TEST_CASE("quality metrics match independent oracles", "[acceptance]") {
    Criterion c(7, "metric-oracles", 0.0);
    c.run([](Criterion& c) {
        Rng rng(7000);
        const SsimOptions opt;
        for (int f = 0; f < 20; ++f) {
            const std::size_t z = 5 + rng.index(18);
            const std::size_t y = 5 + rng.index(18);
            const std::size_t x = 5 + rng.index(18);
            Volume a = random_volume(z, y, x, 7100 + static_cast<std::uint64_t>(f));
            Volume b = a;
            Rng nrng(7200 + static_cast<std::uint64_t>(f));
            for (float& p : b.data) p += static_cast<float>(0.05 * nrng.normal());

            double se = 0;
            for (std::size_t i = 0; i < a.data.size(); ++i) {
                const double d = static_cast<double>(a.data[i]) - b.data[i];
                se += d * d;
            }
            const double rmseo = std::sqrt(se / static_cast<double>(a.data.size()));
            c.check(std::abs(rmse(a, b) - rmseo) <= 1e-9,
                    "fixture " + std::to_string(f) + ": rmse off");
            c.check(std::abs(psnr(a, b) - (-20.0 * std::log10(rmseo))) <= 1e-6,
                    "fixture " + std::to_string(f) + ": psnr off");

            const auto odd_fit = [&](std::size_t dim) {
                std::size_t w = std::min(opt.window, dim);
                if (w % 2 == 0) --w;
                return w;
            };
            const auto kern = [&](std::size_t w) {
                const std::ptrdiff_t r = static_cast<std::ptrdiff_t>(w / 2);
                std::vector<double> k(w);
                for (std::ptrdiff_t d = -r; d <= r; ++d)
                    k[static_cast<std::size_t>(d + r)] =
                        std::exp(-0.5 * static_cast<double>(d * d) / (opt.sigma * opt.sigma));
                return k;
            };
            const std::size_t wz = odd_fit(z), wy = odd_fit(y), wx = odd_fit(x);
            const std::vector<double> kz = kern(wz), ky = kern(wy), kx = kern(wx);
            const std::ptrdiff_t rz = static_cast<std::ptrdiff_t>(wz / 2);
            const std::ptrdiff_t ry = static_cast<std::ptrdiff_t>(wy / 2);
            const std::ptrdiff_t rx = static_cast<std::ptrdiff_t>(wx / 2);
            double acc = 0;
            for (std::size_t cz = 0; cz < z; ++cz)
                for (std::size_t cy = 0; cy < y; ++cy)
                    for (std::size_t cx = 0; cx < x; ++cx) {
                        double W = 0, sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
                        for (std::ptrdiff_t dz = -rz; dz <= rz; ++dz) {
                            const std::ptrdiff_t pz = static_cast<std::ptrdiff_t>(cz) + dz;
                            if (pz < 0 || pz >= static_cast<std::ptrdiff_t>(z)) continue;
                            for (std::ptrdiff_t dy = -ry; dy <= ry; ++dy) {
                                const std::ptrdiff_t py = static_cast<std::ptrdiff_t>(cy) + dy;
                                if (py < 0 || py >= static_cast<std::ptrdiff_t>(y)) continue;
                                for (std::ptrdiff_t dx = -rx; dx <= rx; ++dx) {
                                    const std::ptrdiff_t px = static_cast<std::ptrdiff_t>(cx) + dx;
                                    if (px < 0 || px >= static_cast<std::ptrdiff_t>(x)) continue;
                                    const double wgt = kz[static_cast<std::size_t>(dz + rz)] *
                                                       ky[static_cast<std::size_t>(dy + ry)] *
                                                       kx[static_cast<std::size_t>(dx + rx)];
                                    const double va = a.data(static_cast<std::size_t>(pz),
                                                             static_cast<std::size_t>(py),
                                                             static_cast<std::size_t>(px));
                                    const double vb = b.data(static_cast<std::size_t>(pz),
                                                             static_cast<std::size_t>(py),
                                                             static_cast<std::size_t>(px));
                                    W += wgt;
                                    sa += wgt * va;
                                    sb += wgt * vb;
                                    saa += wgt * va * va;
                                    sbb += wgt * vb * vb;
                                    sab += wgt * va * vb;
                                }
                            }
                        }
                        const double ma = sa / W, mb = sb / W;
                        const double va = saa / W - ma * ma;
                        const double vb = sbb / W - mb * mb;
                        const double cov = sab / W - ma * mb;
                        acc += ((2.0 * ma * mb + opt.c1) * (2.0 * cov + opt.c2)) /
                               ((ma * ma + mb * mb + opt.c1) * (va + vb + opt.c2));
                    }
            const double ssimo = acc / static_cast<double>(a.data.size());
            const double got = ssim(a, b, opt);
            c.check(std::abs(got - ssimo) <= 1e-4,
                    "fixture " + std::to_string(f) + ": ssim deviates from windowed oracle by " +
                        std::to_string(std::abs(got - ssimo)));
        }

        std::vector<Volume> vols{synth_volume(24, 24, 24, 7301, "ida"),
                                 synth_volume(24, 24, 24, 7302, "idb")};
        DegradationSpec d2, d3;
        d2.s = 2;
        d3.s = 3;
        const std::map<int, DegradationSpec> by_scale{{2, d2}, {3, d3}};
        const auto recs = evaluate_methods(vols, by_scale, {"tricubic"}, {});
        c.check(!recs.empty(), "evaluation produced no records");
        for (const MetricRecord& r : recs) {
            if (!r.error.empty()) {
                c.check(false, "evaluation record error: " + r.error);
                continue;
            }
            if (r.rmse > 0 && std::isfinite(r.psnr))
                c.check(std::abs(r.psnr - (-20.0 * std::log10(r.rmse))) <= 1e-6,
                        "psnr/rmse identity broken for " + r.volume_id);
        }

        const Volume base = synth_volume(20, 20, 20, 42, "nm");
        std::vector<float> noise(base.data.size());
        Rng mrng(43);
        for (float& p : noise) p = static_cast<float>(mrng.normal());
        double prev_psnr = std::numeric_limits<double>::infinity();
        double prev_ssim = std::numeric_limits<double>::infinity();
        for (const double sigma : {0.01, 0.02, 0.04, 0.08, 0.16}) {
            Volume noisy = base;
            for (std::size_t i = 0; i < noise.size(); ++i)
                noisy.data[i] += static_cast<float>(sigma) * noise[i];
            const double p = psnr(base, noisy), s = ssim(base, noisy);
            c.check(p < prev_psnr, "psnr not strictly decreasing at sigma " + std::to_string(sigma));
            c.check(s < prev_ssim, "ssim not strictly decreasing at sigma " + std::to_string(sigma));
            prev_psnr = p;
            prev_ssim = s;
        }
    });
}

TEST_CASE("trained model beats tricubic interpolation on held-out volumes", "[acceptance]") {
    Criterion c(8, "training-gain", 1800.0);
    c.run([](Criterion& c) {
        std::vector<Volume> train_vols, held;
        for (int i = 0; i < 8; ++i) {
            Volume v = synth_volume(64, 64, 64, 9100 + static_cast<std::uint64_t>(i),
                                    "corpus" + std::to_string(i));
            (i < 6 ? train_vols : held).push_back(std::move(v));
        }
        std::vector<DegradationSpec> specs;
        for (const int s : {2, 3, 4}) {
            DegradationSpec spec;
            spec.s = s;
            specs.push_back(spec);
        }
        const DatasetManifest man = build_dataset(train_vols, specs, 16, 2024, 16);
        const PatchSource data(man, train_vols);

        GeneratorConfig gcfg;
        gcfg.base_channels = 12;
        gcfg.n_residual_blocks = 3;
        gcfg.scales = {2, 3, 4};
        TrainConfig tcfg;
        tcfg.max_epochs = 24;
        tcfg.seed = 1;
        const auto [ckpt, report] = train_stage1(data, gcfg, tcfg);
        c.check(!report.records.empty(), "training produced no epochs");

        const std::map<int, DegradationSpec> by_scale{{2, specs[0]}, {4, specs[2]}};
        const auto recs =
            evaluate_methods(held, by_scale, {"tricubic", "sr"}, {{"sr", &ckpt}});
        std::map<std::pair<std::string, int>, std::pair<double, int>> agg;
        for (const MetricRecord& r : recs) {
            if (!r.error.empty()) {
                c.check(false, "evaluation failed for " + r.volume_id + ": " + r.error);
                return;
            }
            auto& [sum, n] = agg[{r.method, static_cast<int>(r.scale)}];
            sum += r.psnr;
            ++n;
        }
        const auto mean_psnr = [&](const std::string& m, int s) {
            const auto& [sum, n] = agg.at({m, s});
            return sum / n;
        };
        const double gain2 = mean_psnr("sr", 2) - mean_psnr("tricubic", 2);
        const double gain4 = mean_psnr("sr", 4) - mean_psnr("tricubic", 4);
        std::printf("    psnr gain over tricubic: s=2 %+.3f dB, s=4 %+.3f dB\n", gain2, gain4);
        c.check(gain4 >= 0.3, "mean psnr gain at s=4 is " + std::to_string(gain4) +
                                  " dB, below the +0.3 dB margin");
        c.check(gain2 >= 0.0, "mean psnr gain at s=2 is " + std::to_string(gain2) + " dB, negative");
    });
}

TEST_CASE("training mechanics: isolation, schedule, resume, selection", "[acceptance]") {
    Criterion c(9, "schedule-and-isolation", 600.0);
    c.run([](Criterion& c) {
        GeneratorConfig tiny;
        tiny.base_channels = 4;
        tiny.n_residual_blocks = 1;
        tiny.scales = {2};

        {
            ParamSet<float> all = make_checkpoint(tiny, 3).params;
            DiscriminatorConfig dcfg;
            dcfg.channels = {4, 8};
            dcfg.input_patch = 8;
            for (const auto& [name, t] : Discriminator<float>(dcfg).init_params(4))
                all.add(name, t);
            ParamSet<float> grads = all.zeros_like();
            Rng grng(5);
            for (auto& [name, t] : grads)
                for (float& v : t) v = static_cast<float>(grng.normal());

            std::vector<std::string> d_names, g_names;
            for (const auto& [name, t] : all)
                (name.rfind("d.", 0) == 0 ? d_names : g_names).push_back(name);

            Adam<float> opt;
            opt.attach(all);
            const auto before = param_hashes(all);
            opt.step(all, grads, 3e-4, d_names);
            const auto after_d = param_hashes(all);
            for (const std::string& n : g_names)
                c.check(after_d.at(n) == before.at(n),
                        "discriminator step moved generator parameter " + n);
            for (const std::string& n : d_names)
                c.check(after_d.at(n) != before.at(n),
                        "discriminator step left its own parameter " + n + " unchanged");
            opt.step(all, grads, 3e-4, g_names);
            const auto after_g = param_hashes(all);
            for (const std::string& n : d_names)
                c.check(after_g.at(n) == after_d.at(n),
                        "generator step moved discriminator parameter " + n);
            for (const std::string& n : g_names)
                c.check(after_g.at(n) != after_d.at(n),
                        "generator step left its own parameter " + n + " unchanged");
        }

        std::vector<Volume> vols{synth_volume(20, 16, 16, 21, "ma"),
                                 synth_volume(22, 16, 16, 22, "mb")};
        DegradationSpec spec;
        spec.s = 2;
        const DatasetManifest man = build_dataset(vols, {spec}, 8, 1, 8);
        const PatchSource data(man, vols);

        {
            GeneratorConfig two = tiny;
            two.scales = {2, 3};
            TrainConfig tc;
            tc.max_epochs = 2;
            tc.seed = 5;
            TrainState st;
            train_stage1(data, two, tc, &st);
            const ParamSet<float> init = make_checkpoint(two, tc.seed).params;
            const Generator<float> gen(two);
            for (const std::string& n : gen.scale_names(3))
                c.check(tensor_hash(st.g_params.at(n)) == tensor_hash(init.at(n)),
                        "unused scale bank parameter " + n + " changed during training");
            bool backbone_moved = false;
            for (const std::string& n : gen.backbone_names())
                backbone_moved =
                    backbone_moved || tensor_hash(st.g_params.at(n)) != tensor_hash(init.at(n));
            c.check(backbone_moved, "backbone did not move while its scale had data");
        }

        {
            std::vector<Volume> zero{make_volume(20, 16, 16, {1, 1, 1}, "pz1"),
                                     make_volume(22, 16, 16, {1, 1, 1}, "pz2")};
            const DatasetManifest zman = build_dataset(zero, {spec}, 8, 1, 8);
            const PatchSource zdata(zman, zero);
            TrainConfig tc;
            tc.max_epochs = 20;
            const auto [ckpt, report] = train_stage1(zdata, tiny, tc);
            c.check(report.records.size() == 5,
                    "plateau run recorded " + std::to_string(report.records.size()) +
                        " epochs, expected 5");
            double prev = std::numeric_limits<double>::infinity();
            for (const EpochRecord& r : report.records) {
                bool member = false;
                for (int k = 0; k <= 3; ++k) {
                    const double cand = 3e-4 / std::pow(3.0, k);
                    member = member || std::abs(r.lr - cand) <= 1e-9 * cand;
                }
                c.check(member, "learning rate " + std::to_string(r.lr) +
                                    " is not 3e-4 divided by a power of 3");
                c.check(r.lr <= prev * (1 + 1e-12), "learning rate increased between epochs");
                prev = r.lr;
            }
        }

        {
            TrainConfig full;
            full.max_epochs = 4;
            full.seed = 9;
            TrainState sfull;
            train_stage1(data, tiny, full, &sfull);

            TrainConfig half = full;
            half.max_epochs = 2;
            TrainState shalf;
            train_stage1(data, tiny, half, &shalf);
            const fs::path state_path = fs::temp_directory_path() / "soupsr_acceptance_state.soup";
            save_train_state(shalf, state_path);
            TrainState resumed = load_train_state(state_path);
            train_stage1(data, tiny, full, &resumed);
            const double diff = max_abs_param_diff(sfull.g_params, resumed.g_params);
            c.check(diff <= 1e-6, "checkpoint-resume parameter drift " + std::to_string(diff));
        }

        {
            TrainConfig tc;
            tc.max_epochs = 6;
            tc.seed = 10;
            const auto [ckpt, report] = train_stage1(data, tiny, tc);
            double best = std::numeric_limits<double>::infinity();
            for (const EpochRecord& r : report.records) best = std::min(best, r.val_loss);
            const Generator<float> gen(tiny);
            double acc = 0;
            std::size_t n = 0;
            for (const std::size_t idx : data.manifest().split_entry_indices(Split::val)) {
                const PatchPair pair = data.load_entry(idx);
                const Tensor<float> out =
                    gen.forward(ckpt.params, scale_prefix(pair.scale), pair.input_patch);
                acc += mse_loss(out, pair.target_patch);
                ++n;
            }
            const double val = acc / static_cast<double>(n);
            c.check(std::abs(val - best) <= 1e-9 * std::max(1.0, std::abs(best)),
                    "returned checkpoint scores " + std::to_string(val) +
                        " on validation, best recorded was " + std::to_string(best));
        }
    });
}

namespace {

int run_cli(const std::string& args) {
    const std::string cmd = std::string(SOUPSR_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    const int rc = std::system(cmd.c_str());
    if (rc == -1) return -1;
    if (WIFEXITED(rc)) return WEXITSTATUS(rc);
    return -1;
}

std::vector<double> report_train_losses(const fs::path& p) {
    std::ifstream in(p);
    std::vector<double> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        out.push_back(nlohmann::json::parse(line).at("train_loss").get<double>());
    }
    return out;
}

}  // namespace

TEST_CASE("identical command-line runs reproduce bit-identical results", "[acceptance]") {
    Criterion c(10, "cli-reproducibility", 0.0);
    c.run([](Criterion& c) {
        const fs::path dir = fs::temp_directory_path() / "soupsr_acceptance_cli";
        fs::remove_all(dir);
        fs::create_directories(dir);
        const auto p = [&](const std::string& name) { return (dir / name).string(); };

        save_volume(synth_volume(24, 16, 16, 555, "r0"), p("r0.vol"));
        c.check(run_cli("degrade --scale 2 " + p("r0.vol") + " " + p("r0_lr.vol")) == 0,
                "degrade run failed");

        nlohmann::json dcfg{
            {"volumes", {p("r0.vol")}},
            {"specs",
             {{{"mode", "thin_to_thick"}, {"s", 2}, {"gaussian_sigma", 0.0}, {"noise_sigma", 0.0}}}},
            {"patch_size", 8},
            {"stride", 8},
            {"seed", 4}};
        std::ofstream(p("dataset.json")) << dcfg.dump(2);
        c.check(run_cli("build-dataset --config " + p("dataset.json") + " --out " + p("ds.json")) == 0,
                "build-dataset run failed");

        nlohmann::json tcfg{
            {"manifest", p("ds.json")},
            {"generator", {{"base_channels", 4}, {"n_residual_blocks", 1}, {"scales", {2}}}},
            {"train", {{"max_epochs", 3}, {"batch_size", 4}, {"seed", 5}}}};
        std::ofstream(p("train.json")) << tcfg.dump(2);

        for (const char* tag : {"a", "b"}) {
            const std::string t(tag);
            c.check(run_cli("train --config " + p("train.json") + " --out " + p(t + ".ckpt") +
                            " --report " + p(t + ".jsonl")) == 0,
                    "training run " + t + " failed");
            c.check(run_cli("infer --ckpt " + p(t + ".ckpt") + " --scale 2 " + p("r0_lr.vol") +
                            " " + p(t + "_sr.vol")) == 0,
                    "inference run " + t + " failed");
        }

        c.check(sha256_file(p("a_sr.vol")) == sha256_file(p("b_sr.vol")),
                "inference outputs are not byte-identical");
        const std::vector<double> la = report_train_losses(p("a.jsonl"));
        const std::vector<double> lb = report_train_losses(p("b.jsonl"));
        c.check(!la.empty() && la.size() == lb.size(),
                "train reports differ in length or are empty");
        for (std::size_t i = 0; i < std::min(la.size(), lb.size()); ++i)
            c.check(std::abs(la[i] - lb[i]) <= 1e-6,
                    "epoch " + std::to_string(i + 1) + " train loss differs by " +
                        std::to_string(std::abs(la[i] - lb[i])));
    });
}
