#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>
#include <nlohmann/json.hpp>

#include "soupsr/checkpoint.hpp"
#include "soupsr/degrade.hpp"
#include "soupsr/errors.hpp"
#include "soupsr/rng.hpp"
#include "soupsr/volume.hpp"

namespace soupsr {

// ---- volume fidelity metrics ----

inline double rmse(const Volume& a, const Volume& b) {
    if (!a.data.same_shape(b.data)) throw shape_error("rmse: shape mismatch");
    double acc = 0.0;
    const float* pa = a.data.data();
    const float* pb = b.data.data();
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const double d = static_cast<double>(pa[i]) - static_cast<double>(pb[i]);
        acc += d * d;
    }
    return std::sqrt(acc / static_cast<double>(a.data.size()));
}

/// Peak signal-to-noise ratio in dB with data range fixed at 1 (volumes are
/// normalized). Identical inputs give the +infinity sentinel.
inline double psnr(const Volume& a, const Volume& b) {
    const double r = rmse(a, b);
    if (r == 0.0) return std::numeric_limits<double>::infinity();
    return 20.0 * std::log10(1.0 / r);
}

struct SsimOptions {
    double sigma = 1.5;
    std::size_t window = 11;
    double c1 = 0.01 * 0.01;  // (K1 * L)^2 with L = 1
    double c2 = 0.03 * 0.03;
    bool slicewise = false;   // 2D in-plane windows, averaged across slices
};

namespace detail {

inline std::vector<double> gaussian_kernel_1d(std::size_t size, double sigma) {
    std::vector<double> k(size);
    const double r = (static_cast<double>(size) - 1.0) / 2.0;
    double sum = 0.0;
    for (std::size_t i = 0; i < size; ++i) {
        const double d = static_cast<double>(i) - r;
        k[i] = std::exp(-0.5 * (d / sigma) * (d / sigma));
        sum += k[i];
    }
    for (double& v : k) v /= sum;
    return k;
}

/// Correlation along one axis with zero padding; kernel length must be odd.
inline void correlate_axis(const std::vector<double>& in, std::size_t nz, std::size_t ny,
                           std::size_t nx, int axis, const std::vector<double>& k,
                           std::vector<double>& out) {
    const std::size_t dims[3] = {nz, ny, nx};
    const std::size_t strides[3] = {ny * nx, nx, 1};
    const std::size_t n = dims[axis];
    const std::ptrdiff_t r = static_cast<std::ptrdiff_t>(k.size() / 2);
    const std::size_t stride = strides[axis];
    out.assign(in.size(), 0.0);
    for (std::size_t z = 0; z < nz; ++z)
        for (std::size_t y = 0; y < ny; ++y)
            for (std::size_t x = 0; x < nx; ++x) {
                const std::size_t idx[3] = {z, y, x};
                const std::size_t base = z * strides[0] + y * strides[1] + x;
                const std::ptrdiff_t c = static_cast<std::ptrdiff_t>(idx[axis]);
                double acc = 0.0;
                for (std::size_t j = 0; j < k.size(); ++j) {
                    const std::ptrdiff_t p = c + static_cast<std::ptrdiff_t>(j) - r;
                    if (p < 0 || p >= static_cast<std::ptrdiff_t>(n)) continue;
                    acc += k[j] * in[base + (p - c) * static_cast<std::ptrdiff_t>(stride)];
                }
                out[base] = acc;
            }
}

inline void separable_filter(const std::vector<double>& in, std::size_t nz, std::size_t ny,
                             std::size_t nx, const std::vector<double>& kz,
                             const std::vector<double>& ky, const std::vector<double>& kx,
                             std::vector<double>& out, std::vector<double>& tmp) {
    correlate_axis(in, nz, ny, nx, 0, kz, out);
    correlate_axis(out, nz, ny, nx, 1, ky, tmp);
    correlate_axis(tmp, nz, ny, nx, 2, kx, out);
}

} // namespace detail

/// Mean local structural similarity with a Gaussian window (defaults: size
/// 11, sigma 1.5). The window truncates per axis to the largest odd size that
/// fits a thin volume, and border windows are renormalized against the
/// volume boundary so no padding values are invented.
inline double ssim(const Volume& a, const Volume& b, const SsimOptions& opt = {}) {
    if (!a.data.same_shape(b.data)) throw shape_error("ssim: shape mismatch");
    const std::size_t nz = a.zdim(), ny = a.ydim(), nx = a.xdim();
    const auto odd_fit = [&](std::size_t dim) {
        std::size_t w = std::min(opt.window, dim);
        if (w % 2 == 0) --w;
        return w;
    };
    if (opt.slicewise) {
        if (ny < 3 || nx < 3)
            throw dimension_error("ssim: in-plane dims must be at least 3");
    } else if (nz < 3 || ny < 3 || nx < 3) {
        throw dimension_error("ssim: volume dims must be at least 3");
    }

    const std::vector<double> kz = opt.slicewise ? std::vector<double>{1.0}
                                                 : detail::gaussian_kernel_1d(odd_fit(nz), opt.sigma);
    const std::vector<double> ky = detail::gaussian_kernel_1d(odd_fit(ny), opt.sigma);
    const std::vector<double> kx = detail::gaussian_kernel_1d(odd_fit(nx), opt.sigma);

    const std::size_t n = a.data.size();
    std::vector<double> va(n), vb(n);
    for (std::size_t i = 0; i < n; ++i) {
        va[i] = static_cast<double>(a.data[i]);
        vb[i] = static_cast<double>(b.data[i]);
    }

    std::vector<double> tmp(n), norm(n), mu_a(n), mu_b(n), saa(n), sbb(n), sab(n), work(n);
    std::vector<double> ones(n, 1.0);
    detail::separable_filter(ones, nz, ny, nx, kz, ky, kx, norm, tmp);
    detail::separable_filter(va, nz, ny, nx, kz, ky, kx, mu_a, tmp);
    detail::separable_filter(vb, nz, ny, nx, kz, ky, kx, mu_b, tmp);
    for (std::size_t i = 0; i < n; ++i) work[i] = va[i] * va[i];
    detail::separable_filter(work, nz, ny, nx, kz, ky, kx, saa, tmp);
    for (std::size_t i = 0; i < n; ++i) work[i] = vb[i] * vb[i];
    detail::separable_filter(work, nz, ny, nx, kz, ky, kx, sbb, tmp);
    for (std::size_t i = 0; i < n; ++i) work[i] = va[i] * vb[i];
    detail::separable_filter(work, nz, ny, nx, kz, ky, kx, sab, tmp);

    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double w = norm[i];
        const double ma = mu_a[i] / w;
        const double mb = mu_b[i] / w;
        const double var_a = saa[i] / w - ma * ma;
        const double var_b = sbb[i] / w - mb * mb;
        const double cov = sab[i] / w - ma * mb;
        acc += ((2.0 * ma * mb + opt.c1) * (2.0 * cov + opt.c2)) /
               ((ma * ma + mb * mb + opt.c1) * (var_a + var_b + opt.c2));
    }
    return acc / static_cast<double>(n);
}

// ---- method comparison records ----

struct MetricRecord {
    std::string volume_id;
    std::string method;
    double scale = 0;
    double rmse = std::numeric_limits<double>::quiet_NaN();
    double psnr = std::numeric_limits<double>::quiet_NaN();
    double ssim = std::numeric_limits<double>::quiet_NaN();
    std::string error;  // non-empty marks a failed cell; metrics are NaN
};

/// Reconstructs every (volume, scale, method) cell and scores it against the
/// ground truth: degrade -> reconstruct -> center-crop both to common dims ->
/// rmse/psnr/ssim. A method failure is recorded in the cell's error field and
/// the run continues. Method "tricubic" is built in; any other method name
/// must map to a checkpoint.
inline std::vector<MetricRecord> evaluate_methods(
    const std::vector<Volume>& hr_volumes, const std::map<int, DegradationSpec>& spec_by_scale,
    const std::vector<std::string>& methods,
    const std::map<std::string, const MultiScaleCheckpoint*>& checkpoints,
    std::uint64_t seed = 0, const SsimOptions& ssim_opt = {}) {
    for (const auto& [scale, spec] : spec_by_scale) {
        validate_spec(spec);
        if (spec.s != scale)
            throw config_error("spec_by_scale entry " + std::to_string(scale) +
                               " carries sampling factor " + std::to_string(spec.s));
    }
    for (const std::string& m : methods)
        if (m != "tricubic" && !checkpoints.count(m))
            throw config_error("method " + m + " has no checkpoint");

    std::vector<MetricRecord> records;
    for (const Volume& hr : hr_volumes) {
        validate(hr);
        const Volume norm = normalize(hr);
        for (const auto& [scale, spec] : spec_by_scale) {
            Volume lr;
            bool degraded = false;
            std::string degrade_error;
            try {
                lr = degrade(norm, spec, derive_seed(seed, hr.id, static_cast<std::uint64_t>(scale)));
                degraded = true;
            } catch (const std::exception& e) {
                degrade_error = e.what();
            }
            for (const std::string& method : methods) {
                MetricRecord rec;
                rec.volume_id = hr.id;
                rec.method = method;
                rec.scale = static_cast<double>(scale);
                if (!degraded) {
                    rec.error = degrade_error;
                    records.push_back(std::move(rec));
                    continue;
                }
                try {
                    Volume recon = method == "tricubic"
                                       ? tricubic_interpolate(lr, static_cast<double>(scale))
                                       : generate(*checkpoints.at(method), lr,
                                                  static_cast<double>(scale));
                    const std::size_t zc = std::min(recon.zdim(), norm.zdim());
                    Volume rc = center_crop(recon, zc, recon.ydim(), recon.xdim());
                    Volume tc = center_crop(norm, zc, norm.ydim(), norm.xdim());
                    rec.rmse = rmse(rc, tc);
                    rec.psnr = psnr(rc, tc);
                    rec.ssim = ssim(rc, tc, ssim_opt);
                } catch (const std::exception& e) {
                    rec.error = e.what();
                }
                records.push_back(std::move(rec));
            }
        }
    }
    return records;
}

// ---- paired significance ----

struct SignificanceResult {
    std::string method_a;
    std::string method_b;
    double scale = 0;
    std::string metric;
    double p_value = 1.0;
    std::string stars = "none";  // none, *, **
};

enum class SignificanceTest { paired_t, wilcoxon };

inline std::string significance_stars(double p) {
    if (p < 0.001) return "**";
    if (p < 0.05) return "*";
    return "none";
}

namespace detail {

inline double metric_field(const MetricRecord& r, const std::string& metric) {
    if (metric == "rmse") return r.rmse;
    if (metric == "psnr") return r.psnr;
    if (metric == "ssim") return r.ssim;
    throw config_error("unknown metric: " + metric);
}

inline double paired_t_pvalue(const std::vector<double>& diffs) {
    const std::size_t n = diffs.size();
    double mean = 0.0;
    for (double d : diffs) mean += d;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double d : diffs) var += (d - mean) * (d - mean);
    var /= static_cast<double>(n - 1);
    if (var == 0.0) {
        // exact ties: zero mean is indistinguishable, nonzero mean is a
        // deterministic difference
        return mean == 0.0 ? 1.0 : 0.0;
    }
    const double t = mean / std::sqrt(var / static_cast<double>(n));
    boost::math::students_t dist(static_cast<double>(n - 1));
    return 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
}

inline double wilcoxon_pvalue(const std::vector<double>& diffs) {
    // signed-rank with midranks for ties, zeros dropped, normal approximation
    // with tie correction and continuity correction
    std::vector<double> nz;
    for (double d : diffs)
        if (d != 0.0) nz.push_back(d);
    if (nz.empty()) return 1.0;
    const std::size_t n = nz.size();
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t i, std::size_t j) { return std::abs(nz[i]) < std::abs(nz[j]); });
    std::vector<double> rank(n);
    double tie_term = 0.0;
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j < n && std::abs(nz[order[j]]) == std::abs(nz[order[i]])) ++j;
        const double mid = (static_cast<double>(i) + static_cast<double>(j - 1)) / 2.0 + 1.0;
        for (std::size_t k = i; k < j; ++k) rank[order[k]] = mid;
        const double t = static_cast<double>(j - i);
        tie_term += t * t * t - t;
        i = j;
    }
    double w_plus = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        if (nz[i] > 0.0) w_plus += rank[i];
    const double nn = static_cast<double>(n);
    const double mean = nn * (nn + 1.0) / 4.0;
    const double var = nn * (nn + 1.0) * (2.0 * nn + 1.0) / 24.0 - tie_term / 48.0;
    if (var <= 0.0) return w_plus == mean ? 1.0 : 0.0;
    double z = (w_plus - mean);
    z -= z > 0 ? 0.5 : (z < 0 ? -0.5 : 0.0);
    z /= std::sqrt(var);
    boost::math::normal dist;
    return 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(z)));
}

} // namespace detail

/// Two-sided paired test on per-volume metric differences between two
/// methods at one scale. Error cells drop their volume from the pairing; a
/// volume scored under only one method is unpaired data and rejected.
inline SignificanceResult paired_significance(const std::vector<MetricRecord>& records,
                                              const std::string& metric,
                                              const std::string& method_a,
                                              const std::string& method_b, double scale,
                                              SignificanceTest test = SignificanceTest::paired_t) {
    std::map<std::string, double> va, vb;
    std::set<std::string> failed;
    for (const MetricRecord& r : records) {
        if (r.scale != scale) continue;
        if (r.method != method_a && r.method != method_b) continue;
        if (!r.error.empty()) {
            failed.insert(r.volume_id);
            continue;
        }
        (r.method == method_a ? va : vb)[r.volume_id] = detail::metric_field(r, metric);
    }
    std::vector<double> diffs;
    for (const auto& [id, a] : va) {
        auto it = vb.find(id);
        if (it == vb.end()) {
            if (failed.count(id)) continue;
            throw insufficient_data_error("volume " + id + " is unpaired for " + method_a +
                                          " vs " + method_b);
        }
        const double b = it->second;
        double d = a - b;
        if (!std::isfinite(d)) {
            if (a == b) d = 0.0;  // both infinite: identical score
            else throw insufficient_data_error("non-finite metric difference for volume " + id);
        }
        diffs.push_back(d);
    }
    for (const auto& [id, b] : vb)
        if (!va.count(id) && !failed.count(id))
            throw insufficient_data_error("volume " + id + " is unpaired for " + method_a +
                                          " vs " + method_b);
    if (diffs.size() < 2)
        throw insufficient_data_error("paired test needs at least 2 paired observations");

    SignificanceResult res;
    res.method_a = method_a;
    res.method_b = method_b;
    res.scale = scale;
    res.metric = metric;
    res.p_value = test == SignificanceTest::paired_t ? detail::paired_t_pvalue(diffs)
                                                     : detail::wilcoxon_pvalue(diffs);
    res.stars = significance_stars(res.p_value);
    return res;
}

// ---- report output ----

namespace detail {

inline nlohmann::json number_or_inf(double v) {
    if (std::isinf(v) && v > 0) return "inf";
    if (std::isinf(v)) return "-inf";
    if (std::isnan(v)) return nullptr;
    return v;
}

inline double number_from_json(const nlohmann::json& j) {
    if (j.is_null()) return std::numeric_limits<double>::quiet_NaN();
    if (j.is_string()) {
        const std::string s = j.get<std::string>();
        if (s == "inf") return std::numeric_limits<double>::infinity();
        if (s == "-inf") return -std::numeric_limits<double>::infinity();
        throw format_error("unexpected metric value: " + s);
    }
    return j.get<double>();
}

inline std::string format_number(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    if (std::isnan(v)) return "nan";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

} // namespace detail

inline nlohmann::json to_json(const SignificanceResult& r) {
    return {{"method_a", r.method_a}, {"method_b", r.method_b}, {"scale", r.scale},
            {"metric", r.metric},     {"p_value", r.p_value},   {"stars", r.stars}};
}

inline nlohmann::json to_json(const MetricRecord& r) {
    return {{"volume_id", r.volume_id}, {"method", r.method},
            {"scale", r.scale},         {"rmse", detail::number_or_inf(r.rmse)},
            {"psnr", detail::number_or_inf(r.psnr)}, {"ssim", detail::number_or_inf(r.ssim)},
            {"error", r.error}};
}

inline MetricRecord metric_record_from_json(const nlohmann::json& j) {
    MetricRecord r;
    try {
        r.volume_id = j.at("volume_id").get<std::string>();
        r.method = j.at("method").get<std::string>();
        r.scale = j.at("scale").get<double>();
        r.rmse = detail::number_from_json(j.at("rmse"));
        r.psnr = detail::number_from_json(j.at("psnr"));
        r.ssim = detail::number_from_json(j.at("ssim"));
        r.error = j.at("error").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw format_error(std::string("malformed metric record: ") + e.what());
    }
    return r;
}

inline void write_metrics_jsonl(const std::vector<MetricRecord>& records,
                                const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("cannot open " + path.string() + " for writing");
    for (const MetricRecord& r : records) out << to_json(r).dump() << '\n';
    if (!out) throw io_error("failed writing " + path.string());
}

inline std::vector<MetricRecord> read_metrics_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open " + path.string());
    std::vector<MetricRecord> records;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        try {
            records.push_back(metric_record_from_json(nlohmann::json::parse(line)));
        } catch (const nlohmann::json::exception& e) {
            throw format_error(path.string() + ": malformed metric line: " + e.what());
        }
    }
    return records;
}

struct SummaryRow {
    std::string method;
    double scale = 0;
    std::size_t count = 0;  // valid cells
    double rmse_mean = 0, rmse_std = 0;
    double psnr_mean = 0, psnr_std = 0;
    double ssim_mean = 0, ssim_std = 0;
};

inline std::vector<SummaryRow> summarize_metrics(const std::vector<MetricRecord>& records) {
    std::map<std::pair<std::string, double>, std::vector<const MetricRecord*>> groups;
    for (const MetricRecord& r : records)
        if (r.error.empty()) groups[{r.method, r.scale}].push_back(&r);
    std::vector<SummaryRow> rows;
    for (const auto& [key, cells] : groups) {
        SummaryRow row;
        row.method = key.first;
        row.scale = key.second;
        row.count = cells.size();
        const auto stat = [&](auto getter, double& mean, double& sd) {
            double m = 0.0;
            for (const MetricRecord* r : cells) m += getter(*r);
            m /= static_cast<double>(cells.size());
            double v = 0.0;
            if (cells.size() > 1) {
                for (const MetricRecord* r : cells) v += (getter(*r) - m) * (getter(*r) - m);
                v /= static_cast<double>(cells.size() - 1);
            }
            mean = m;
            sd = std::sqrt(v);
        };
        stat([](const MetricRecord& r) { return r.rmse; }, row.rmse_mean, row.rmse_std);
        stat([](const MetricRecord& r) { return r.psnr; }, row.psnr_mean, row.psnr_std);
        stat([](const MetricRecord& r) { return r.ssim; }, row.ssim_mean, row.ssim_std);
        rows.push_back(std::move(row));
    }
    return rows;
}

inline void write_summary_csv(const std::vector<MetricRecord>& records,
                              const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("cannot open " + path.string() + " for writing");
    out << "method,scale,count,rmse_mean,rmse_std,psnr_mean,psnr_std,ssim_mean,ssim_std\n";
    for (const SummaryRow& r : summarize_metrics(records)) {
        out << r.method << ',' << detail::format_number(r.scale) << ',' << r.count << ','
            << detail::format_number(r.rmse_mean) << ',' << detail::format_number(r.rmse_std)
            << ',' << detail::format_number(r.psnr_mean) << ','
            << detail::format_number(r.psnr_std) << ',' << detail::format_number(r.ssim_mean)
            << ',' << detail::format_number(r.ssim_std) << '\n';
    }
    if (!out) throw io_error("failed writing " + path.string());
}

/// Three-panel line plot (rmse, psnr, ssim vs scale, one polyline per
/// method). Non-finite means are skipped.
inline void write_metrics_svg(const std::vector<MetricRecord>& records,
                              const std::filesystem::path& path) {
    const std::vector<SummaryRow> rows = summarize_metrics(records);
    std::vector<std::string> methods;
    for (const SummaryRow& r : rows)
        if (std::find(methods.begin(), methods.end(), r.method) == methods.end())
            methods.push_back(r.method);
    const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

    const double panel_w = 280, panel_h = 220, margin = 44, top = 40;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("cannot open " + path.string() + " for writing");
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << 3 * (panel_w + margin)
        << "\" height=\"" << panel_h + top + 60 << "\">\n";
    out << "<style>text{font:11px sans-serif}</style>\n";

    const char* metrics_[] = {"rmse", "psnr", "ssim"};
    for (int panel = 0; panel < 3; ++panel) {
        const double x0 = margin + panel * (panel_w + margin);
        const double y0 = top;
        double lo = std::numeric_limits<double>::infinity(), hi = -lo;
        double smin = lo, smax = -lo;
        const auto value = [&](const SummaryRow& r) {
            return panel == 0 ? r.rmse_mean : panel == 1 ? r.psnr_mean : r.ssim_mean;
        };
        for (const SummaryRow& r : rows) {
            if (std::isfinite(value(r))) {
                lo = std::min(lo, value(r));
                hi = std::max(hi, value(r));
            }
            smin = std::min(smin, r.scale);
            smax = std::max(smax, r.scale);
        }
        if (!std::isfinite(lo)) { lo = 0; hi = 1; }
        if (hi == lo) { hi += 1; lo -= 1; }
        const double pad = 0.08 * (hi - lo);
        lo -= pad;
        hi += pad;
        if (smax == smin) smax = smin + 1;

        const auto px = [&](double s) { return x0 + (s - smin) / (smax - smin) * panel_w; };
        const auto py = [&](double v) { return y0 + (hi - v) / (hi - lo) * panel_h; };

        out << "<rect x=\"" << x0 << "\" y=\"" << y0 << "\" width=\"" << panel_w
            << "\" height=\"" << panel_h << "\" fill=\"none\" stroke=\"#888\"/>\n";
        out << "<text x=\"" << x0 + panel_w / 2 << "\" y=\"" << y0 - 8
            << "\" text-anchor=\"middle\">" << metrics_[panel] << "</text>\n";
        out << "<text x=\"" << x0 << "\" y=\"" << y0 + panel_h + 14 << "\">"
            << detail::format_number(smin) << "</text>\n";
        out << "<text x=\"" << x0 + panel_w << "\" y=\"" << y0 + panel_h + 14
            << "\" text-anchor=\"end\">" << detail::format_number(smax) << "</text>\n";
        out << "<text x=\"" << x0 - 4 << "\" y=\"" << y0 + panel_h
            << "\" text-anchor=\"end\">" << detail::format_number(lo + pad) << "</text>\n";
        out << "<text x=\"" << x0 - 4 << "\" y=\"" << y0 + 10 << "\" text-anchor=\"end\">"
            << detail::format_number(hi - pad) << "</text>\n";

        for (std::size_t mi = 0; mi < methods.size(); ++mi) {
            std::vector<std::pair<double, double>> pts;
            for (const SummaryRow& r : rows)
                if (r.method == methods[mi] && std::isfinite(value(r)))
                    pts.push_back({r.scale, value(r)});
            std::sort(pts.begin(), pts.end());
            if (pts.empty()) continue;
            out << "<polyline fill=\"none\" stroke=\"" << palette[mi % 6] << "\" points=\"";
            for (const auto& [s, v] : pts) out << px(s) << ',' << py(v) << ' ';
            out << "\"/>\n";
            for (const auto& [s, v] : pts)
                out << "<circle cx=\"" << px(s) << "\" cy=\"" << py(v)
                    << "\" r=\"2.5\" fill=\"" << palette[mi % 6] << "\"/>\n";
        }
    }
    for (std::size_t mi = 0; mi < methods.size(); ++mi) {
        const double lx = margin + static_cast<double>(mi) * 140;
        const double ly = top + panel_h + 40;
        out << "<rect x=\"" << lx << "\" y=\"" << ly - 9 << "\" width=\"12\" height=\"4\" fill=\""
            << palette[mi % 6] << "\"/>\n";
        out << "<text x=\"" << lx + 18 << "\" y=\"" << ly - 3 << "\">" << methods[mi]
            << "</text>\n";
    }
    out << "</svg>\n";
    if (!out) throw io_error("failed writing " + path.string());
}

} // namespace soupsr
