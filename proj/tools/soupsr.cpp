// soupsr: command-line front end for the volume super-resolution toolkit.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "soupsr/soupsr.hpp"

namespace {

using nlohmann::json;

enum class LogLevel { debug = 0, info = 1, warn = 2, error = 3 };

LogLevel g_log_level = LogLevel::info;

LogLevel log_level_from_string(const std::string& s) {
    if (s == "debug") return LogLevel::debug;
    if (s == "info") return LogLevel::info;
    if (s == "warn") return LogLevel::warn;
    if (s == "error") return LogLevel::error;
    throw soupsr::config_error("unknown log level: " + s);
}

void log(LogLevel lv, const std::string& msg) {
    static const char* names[] = {"debug", "info", "warn", "error"};
    if (lv >= g_log_level)
        std::cerr << "soupsr [" << names[static_cast<int>(lv)] << "] " << msg << "\n";
}

int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const soupsr::scale_range_error*>(&e)) return 1;
    if (dynamic_cast<const soupsr::numerical_error*>(&e)) return 3;
    return 2;
}

// ---- config loading with dotted-key overrides ----

json load_json_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw soupsr::io_error("cannot open " + path);
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw soupsr::format_error(path + ": " + e.what());
    }
}

/// Applies "a.b.c=value" onto an existing key path; the value is parsed as
/// JSON when possible and taken as a string otherwise.
void apply_override(json& cfg, const std::string& kv) {
    const std::size_t eq = kv.find('=');
    if (eq == std::string::npos)
        throw soupsr::config_error("override must look like key=value: " + kv);
    const std::string path = kv.substr(0, eq);
    const std::string raw = kv.substr(eq + 1);

    std::vector<std::string> keys;
    std::size_t start = 0;
    while (true) {
        const std::size_t dot = path.find('.', start);
        keys.push_back(path.substr(start, dot == std::string::npos ? dot : dot - start));
        if (dot == std::string::npos) break;
        start = dot + 1;
    }

    json* node = &cfg;
    for (std::size_t i = 0; i + 1 < keys.size(); ++i) {
        if (!node->is_object() || !node->contains(keys[i]))
            throw soupsr::config_error("override references unknown config key: " + path);
        node = &(*node)[keys[i]];
    }
    if (!node->is_object() || !node->contains(keys.back()))
        throw soupsr::config_error("override references unknown config key: " + path);

    json value;
    try {
        value = json::parse(raw);
    } catch (const json::exception&) {
        value = raw;
    }
    (*node)[keys.back()] = value;
}

struct Common {
    std::string config_path;
    std::vector<std::string> overrides;
    std::uint64_t seed = 0;
    std::string log_level = "info";
    std::string manifest_out;
    CLI::Option* seed_opt = nullptr;
};

void add_common(CLI::App* cmd, Common& c) {
    cmd->add_option("--config", c.config_path, "JSON config file");
    cmd->add_option("--set", c.overrides, "config override key=value (dotted keys, repeatable)");
    c.seed_opt = cmd->add_option("--seed", c.seed, "seed (overrides the config's seed)");
    cmd->add_option("--log-level", c.log_level, "debug|info|warn|error")
        ->default_val("info");
    cmd->add_option("--run-manifest", c.manifest_out,
                    "run manifest path (default: <first output>.run.json)");
}

json resolve_config(const Common& c) {
    json cfg = json::object();
    if (!c.config_path.empty()) cfg = load_json_file(c.config_path);
    for (const std::string& kv : c.overrides) apply_override(cfg, kv);
    return cfg;
}

// ---- run manifests ----

/// Deliberately carries no timestamps or host details so identical runs
/// write identical manifests.
struct RunManifest {
    json j;

    RunManifest(const std::string& command, const std::vector<std::string>& argv) {
        j["tool"] = "soupsr";
        j["tool_version"] = soupsr::kVersion;
        j["command"] = command;
        j["argv"] = argv;
        j["inputs"] = json::object();
        j["outputs"] = json::array();
    }

    void input(const std::string& path) {
        try {
            j["inputs"][path] = soupsr::sha256_file(path);
        } catch (const soupsr::io_error&) {
            throw soupsr::io_error("cannot open input " + path);
        }
    }
    void output(const std::string& path) { j["outputs"].push_back(path); }

    void write(const std::string& explicit_path, const std::string& first_output) const {
        const std::string path =
            explicit_path.empty() ? first_output + ".run.json" : explicit_path;
        std::ofstream out(path, std::ios::binary);
        if (!out) throw soupsr::io_error("cannot write run manifest " + path);
        out << j.dump(2) << '\n';
        log(LogLevel::debug, "run manifest written to " + path);
    }
};

std::uint64_t pick_seed(const Common& c, const json& cfg) {
    if (c.seed_opt && c.seed_opt->count() > 0) return c.seed;
    if (cfg.contains("seed")) return cfg.at("seed").get<std::uint64_t>();
    return 0;
}

/// Extractor weights fall back to $SOUPSR_CACHE/feature_extractor.soup when
/// the config names no archive.
void resolve_extractor_weights(soupsr::PerceptualConfig& pcfg) {
    if (!pcfg.weights_path.empty()) return;
    const char* cache = std::getenv("SOUPSR_CACHE");
    if (!cache) return;
    const std::filesystem::path p = std::filesystem::path(cache) / "feature_extractor.soup";
    if (std::filesystem::exists(p)) {
        pcfg.weights_path = p.string();
        log(LogLevel::info, "using extractor weights from " + pcfg.weights_path);
    }
}

// ---- degrade ----

struct DegradeArgs {
    Common common;
    std::string mode = "thin_to_thick";
    int scale = 2;
    double gaussian_sigma = 0;
    double noise_sigma = 0;
    std::string in_path, out_path;
};

int run_degrade(const DegradeArgs& a, const std::vector<std::string>& argv) {
    const json cfg = resolve_config(a.common);
    soupsr::DegradationSpec spec;
    spec.mode = soupsr::degrade_mode_from_string(cfg.value("mode", a.mode));
    spec.s = cfg.value("scale", a.scale);
    spec.gaussian_sigma = cfg.value("gaussian_sigma", a.gaussian_sigma);
    spec.noise_sigma = cfg.value("noise_sigma", a.noise_sigma);
    soupsr::validate_spec(spec);
    const std::uint64_t seed = pick_seed(a.common, cfg);

    RunManifest rm("degrade", argv);
    rm.input(a.in_path);
    const soupsr::Volume v = soupsr::load_volume(a.in_path);
    const soupsr::Volume d = soupsr::degrade(v, spec, seed);
    soupsr::save_volume(d, a.out_path);
    rm.output(a.out_path);
    rm.j["config"] = soupsr::to_json(spec);
    rm.j["seed"] = seed;
    rm.write(a.common.manifest_out, a.out_path);
    log(LogLevel::info, "degraded " + a.in_path + " -> " + a.out_path + " (" +
                            std::to_string(d.zdim()) + " slices)");
    return 0;
}

// ---- build-dataset ----

struct BuildDatasetArgs {
    Common common;
    std::string out_path;
};

int run_build_dataset(const BuildDatasetArgs& a, const std::vector<std::string>& argv) {
    if (a.common.config_path.empty())
        throw soupsr::config_error("build-dataset requires --config");
    const json cfg = resolve_config(a.common);
    if (!cfg.contains("volumes") || !cfg.at("volumes").is_array() || cfg.at("volumes").empty())
        throw soupsr::config_error("config needs a non-empty volumes array");
    if (!cfg.contains("specs") || !cfg.at("specs").is_array() || cfg.at("specs").empty())
        throw soupsr::config_error("config needs a non-empty specs array");

    RunManifest rm("build-dataset", argv);
    rm.input(a.common.config_path);

    std::vector<std::string> paths;
    std::vector<soupsr::Volume> volumes;
    for (const auto& p : cfg.at("volumes")) {
        const std::string path = p.get<std::string>();
        rm.input(path);
        volumes.push_back(soupsr::load_volume(path));
        paths.push_back(path);
    }
    std::vector<soupsr::DegradationSpec> specs;
    for (const auto& s : cfg.at("specs"))
        specs.push_back(soupsr::degradation_spec_from_json(s));

    const std::uint64_t seed = pick_seed(a.common, cfg);
    const std::size_t patch = cfg.value("patch_size", std::size_t{32});
    const std::size_t stride = cfg.value("stride", patch);
    std::array<double, 3> ratios{0.8, 0.1, 0.1};
    if (cfg.contains("ratios")) {
        const auto r = cfg.at("ratios").get<std::vector<double>>();
        if (r.size() != 3) throw soupsr::config_error("ratios must have 3 entries");
        ratios = {r[0], r[1], r[2]};
    }

    const soupsr::DatasetManifest m =
        soupsr::build_dataset(volumes, specs, stride, seed, patch, ratios, paths);
    soupsr::save_manifest(m, a.out_path);
    for (const std::string& w : m.warnings) log(LogLevel::warn, w);
    rm.output(a.out_path);
    rm.j["config"] = cfg;
    rm.j["seed"] = seed;
    rm.j["patch_counts"] = {{"train", m.split_size(soupsr::Split::train)},
                            {"val", m.split_size(soupsr::Split::val)},
                            {"test", m.split_size(soupsr::Split::test)}};
    rm.write(a.common.manifest_out, a.out_path);
    log(LogLevel::info, "dataset manifest with " + std::to_string(m.entries.size()) +
                            " patches written to " + a.out_path);
    return 0;
}

// ---- train ----

struct TrainArgs {
    Common common;
    std::string manifest_path;
    std::string init_ckpt;
    std::string resume_path;
    std::string out_ckpt;
    std::string state_out;
    std::string report_out;
};

soupsr::PatchSource open_patch_source(const std::string& manifest_path, RunManifest& rm) {
    rm.input(manifest_path);
    soupsr::DatasetManifest m = soupsr::load_manifest(manifest_path);
    std::vector<soupsr::Volume> volumes;
    std::map<std::string, bool> seen;
    for (const soupsr::SourceSpec& s : m.sources) {
        if (seen.count(s.volume_id)) continue;
        seen[s.volume_id] = true;
        if (s.path.empty())
            throw soupsr::config_error("manifest source " + s.volume_id +
                                       " carries no path; cannot reload volumes");
        rm.input(s.path);
        soupsr::Volume v = soupsr::load_volume(s.path);
        v.id = s.volume_id;
        volumes.push_back(std::move(v));
    }
    return soupsr::PatchSource(std::move(m), std::move(volumes));
}

int run_train(const TrainArgs& a, const std::vector<std::string>& argv) {
    if (a.common.config_path.empty()) throw soupsr::config_error("train requires --config");
    json cfg = resolve_config(a.common);

    const std::string manifest_path =
        !a.manifest_path.empty() ? a.manifest_path : cfg.value("manifest", "");
    const std::string init_ckpt = !a.init_ckpt.empty() ? a.init_ckpt : cfg.value("init_checkpoint", "");
    const std::string resume_path =
        !a.resume_path.empty() ? a.resume_path : cfg.value("resume_state", "");
    const std::string out_ckpt = !a.out_ckpt.empty() ? a.out_ckpt : cfg.value("out_checkpoint", "");
    const std::string state_out = !a.state_out.empty() ? a.state_out : cfg.value("out_state", "");
    const std::string report_out = !a.report_out.empty() ? a.report_out : cfg.value("report", "");
    if (manifest_path.empty()) throw soupsr::config_error("train needs a dataset manifest path");
    if (out_ckpt.empty()) throw soupsr::config_error("train needs an output checkpoint path");

    soupsr::GeneratorConfig gcfg;
    if (cfg.contains("generator")) gcfg = soupsr::generator_config_from_json(cfg.at("generator"));
    soupsr::TrainConfig tcfg;
    if (cfg.contains("train")) tcfg = soupsr::train_config_from_json(cfg.at("train"));
    if (a.common.seed_opt && a.common.seed_opt->count() > 0) tcfg.seed = a.common.seed;

    RunManifest rm("train", argv);
    rm.input(a.common.config_path);
    soupsr::PatchSource data = open_patch_source(manifest_path, rm);

    soupsr::TrainState state;
    if (!resume_path.empty()) {
        rm.input(resume_path);
        state = soupsr::load_train_state(resume_path);
        log(LogLevel::info, "resuming after epoch " + std::to_string(state.epochs_done));
    }

    soupsr::MultiScaleCheckpoint out;
    soupsr::TrainReport report;
    if (tcfg.stage == soupsr::TrainStage::mse) {
        std::tie(out, report) = soupsr::train_stage1(data, gcfg, tcfg, &state);
    } else {
        if (init_ckpt.empty())
            throw soupsr::config_error("stage perceptual_gan needs init_checkpoint");
        rm.input(init_ckpt);
        const soupsr::MultiScaleCheckpoint start = soupsr::load_checkpoint(init_ckpt);
        soupsr::DiscriminatorConfig dcfg;
        if (cfg.contains("discriminator"))
            dcfg = soupsr::discriminator_config_from_json(cfg.at("discriminator"));
        soupsr::PerceptualConfig pcfg;
        if (cfg.contains("perceptual"))
            pcfg = soupsr::perceptual_config_from_json(cfg.at("perceptual"));
        resolve_extractor_weights(pcfg);
        if (!pcfg.weights_path.empty()) rm.input(pcfg.weights_path);
        std::tie(out, report) =
            soupsr::train_stage2(start, data, start.config, dcfg, pcfg, tcfg, &state);
    }

    soupsr::save_checkpoint(out, out_ckpt);
    rm.output(out_ckpt);
    report.checkpoint_path = out_ckpt;
    if (!state_out.empty()) {
        soupsr::save_train_state(state, state_out);
        rm.output(state_out);
    }
    if (!report_out.empty()) {
        std::ofstream rep(report_out, std::ios::binary);
        if (!rep) throw soupsr::io_error("cannot write " + report_out);
        for (const soupsr::EpochRecord& r : report.records) rep << soupsr::to_json(r).dump() << '\n';
        rm.output(report_out);
    }
    for (const soupsr::EpochRecord& r : report.records)
        log(LogLevel::info, "epoch " + std::to_string(r.epoch) + " train " +
                                std::to_string(r.train_loss) + " val " +
                                std::to_string(r.val_loss) + " lr " + std::to_string(r.lr));

    rm.j["config"] = cfg;
    rm.j["seed"] = tcfg.seed;
    rm.j["resolved"] = {{"generator", soupsr::to_json(gcfg)},
                        {"train", soupsr::to_json(tcfg)},
                        {"epochs_run", report.records.size()}};
    rm.write(a.common.manifest_out, out_ckpt);
    log(LogLevel::info, "checkpoint written to " + out_ckpt);
    return 0;
}

// ---- infer ----

struct InferArgs {
    Common common;
    std::string ckpt_path;
    double scale = 2.0;
    std::string in_path, out_path;
};

int run_infer(const InferArgs& a, const std::vector<std::string>& argv) {
    RunManifest rm("infer", argv);
    rm.input(a.ckpt_path);
    rm.input(a.in_path);
    const soupsr::MultiScaleCheckpoint ckpt = soupsr::load_checkpoint(a.ckpt_path);
    const soupsr::Volume v = soupsr::load_volume(a.in_path);
    const soupsr::Volume norm = soupsr::normalize(v);
    soupsr::Volume sr = soupsr::generate(ckpt, norm, a.scale);
    sr.intensity_range = norm.intensity_range;  // map back to the input's scale
    soupsr::Volume out = soupsr::denormalize(sr);
    soupsr::record_intensity_range(out);
    soupsr::save_volume(out, a.out_path);
    rm.output(a.out_path);

    json scale_info{{"scale", a.scale}};
    const double m = std::floor(a.scale);
    if (a.scale == m) {
        scale_info["fractional"] = false;
    } else {
        scale_info["fractional"] = true;
        scale_info["m"] = static_cast<int>(m);
        scale_info["alpha"] = a.scale - m;
    }
    rm.j["config"] = scale_info;
    rm.j["checkpoint_stage"] = soupsr::to_string(ckpt.stage);
    rm.write(a.common.manifest_out, a.out_path);
    log(LogLevel::info, "inference " + a.in_path + " -> " + a.out_path + " at scale " +
                            std::to_string(a.scale) + " (" + std::to_string(out.zdim()) +
                            " slices)");
    return 0;
}

// ---- evaluate ----

struct EvaluateArgs {
    Common common;
    std::vector<std::string> volume_paths;
    std::vector<int> scales;
    std::string mode = "thin_to_thick";
    double gaussian_sigma = 0;
    double noise_sigma = 0;
    std::vector<std::string> methods{"tricubic"};
    std::vector<std::string> ckpt_specs;  // method=path
    std::string out_path;
    std::string csv_path, svg_path, significance_path;
    bool slicewise_ssim = false;
};

int run_evaluate(const EvaluateArgs& a, const std::vector<std::string>& argv) {
    if (a.volume_paths.empty()) throw soupsr::config_error("evaluate needs volumes");
    if (a.scales.empty()) throw soupsr::config_error("evaluate needs --scales");
    const json cfg = resolve_config(a.common);

    RunManifest rm("evaluate", argv);
    if (!a.common.config_path.empty()) rm.input(a.common.config_path);

    std::map<std::string, soupsr::MultiScaleCheckpoint> ckpt_store;
    std::map<std::string, const soupsr::MultiScaleCheckpoint*> ckpts;
    for (const std::string& spec : a.ckpt_specs) {
        const std::size_t eq = spec.find('=');
        std::string name = "sr";
        std::string path = spec;
        if (eq != std::string::npos) {
            name = spec.substr(0, eq);
            path = spec.substr(eq + 1);
        }
        rm.input(path);
        ckpt_store[name] = soupsr::load_checkpoint(path);
    }
    for (const auto& [name, ck] : ckpt_store) ckpts[name] = &ck;

    std::vector<soupsr::Volume> volumes;
    for (const std::string& p : a.volume_paths) {
        rm.input(p);
        volumes.push_back(soupsr::load_volume(p));
    }

    std::map<int, soupsr::DegradationSpec> spec_by_scale;
    for (int s : a.scales) {
        soupsr::DegradationSpec spec;
        spec.mode = soupsr::degrade_mode_from_string(a.mode);
        spec.s = s;
        spec.gaussian_sigma = a.gaussian_sigma;
        spec.noise_sigma = a.noise_sigma;
        spec_by_scale[s] = spec;
    }

    const std::uint64_t seed = pick_seed(a.common, cfg);
    soupsr::SsimOptions sopt;
    sopt.slicewise = a.slicewise_ssim;
    const std::vector<soupsr::MetricRecord> records =
        soupsr::evaluate_methods(volumes, spec_by_scale, a.methods, ckpts, seed, sopt);
    for (const soupsr::MetricRecord& r : records)
        if (!r.error.empty())
            log(LogLevel::warn, r.method + " on " + r.volume_id + " at s=" +
                                    std::to_string(r.scale) + " failed: " + r.error);

    soupsr::write_metrics_jsonl(records, a.out_path);
    rm.output(a.out_path);
    if (!a.csv_path.empty()) {
        soupsr::write_summary_csv(records, a.csv_path);
        rm.output(a.csv_path);
    }
    if (!a.svg_path.empty()) {
        soupsr::write_metrics_svg(records, a.svg_path);
        rm.output(a.svg_path);
    }
    if (!a.significance_path.empty()) {
        json sig = json::array();
        for (const char* metric : {"rmse", "psnr", "ssim"})
            for (int s : a.scales)
                for (std::size_t i = 0; i < a.methods.size(); ++i)
                    for (std::size_t k = i + 1; k < a.methods.size(); ++k) {
                        try {
                            sig.push_back(soupsr::to_json(soupsr::paired_significance(
                                records, metric, a.methods[i], a.methods[k],
                                static_cast<double>(s))));
                        } catch (const soupsr::insufficient_data_error& e) {
                            sig.push_back({{"method_a", a.methods[i]},
                                           {"method_b", a.methods[k]},
                                           {"scale", s},
                                           {"metric", metric},
                                           {"error", e.what()}});
                        }
                    }
        std::ofstream out(a.significance_path, std::ios::binary);
        if (!out) throw soupsr::io_error("cannot write " + a.significance_path);
        out << sig.dump(2) << '\n';
        rm.output(a.significance_path);
    }

    rm.j["seed"] = seed;
    rm.j["config"] = {{"mode", a.mode},
                      {"scales", a.scales},
                      {"methods", a.methods},
                      {"gaussian_sigma", a.gaussian_sigma},
                      {"noise_sigma", a.noise_sigma},
                      {"metric_extent", "whole-volume"}};
    rm.write(a.common.manifest_out, a.out_path);
    log(LogLevel::info, std::to_string(records.size()) + " metric records written to " +
                            a.out_path);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    const std::vector<std::string> argv_copy(argv, argv + argc);

    CLI::App app{"3D medical-volume super-resolution toolkit"};
    app.require_subcommand(1);

    DegradeArgs deg;
    CLI::App* c_deg = app.add_subcommand("degrade", "apply a through-plane degradation model");
    add_common(c_deg, deg.common);
    c_deg->add_option("--mode", deg.mode, "thin_to_thick|thin_to_thin|gaussian")
        ->default_val("thin_to_thick");
    c_deg->add_option("--scale", deg.scale, "slice sampling factor")->required();
    c_deg->add_option("--gaussian-sigma", deg.gaussian_sigma, "Z blur sigma (gaussian mode)");
    c_deg->add_option("--noise-sigma", deg.noise_sigma, "additive Gaussian noise sigma");
    c_deg->add_option("input", deg.in_path, "input volume")->required();
    c_deg->add_option("output", deg.out_path, "output volume")->required();

    BuildDatasetArgs bld;
    CLI::App* c_bld = app.add_subcommand("build-dataset", "extract a patch dataset manifest");
    add_common(c_bld, bld.common);
    c_bld->add_option("--out", bld.out_path, "manifest output path")->required();

    TrainArgs trn;
    CLI::App* c_trn = app.add_subcommand("train", "train the super-resolution model");
    add_common(c_trn, trn.common);
    c_trn->add_option("--manifest", trn.manifest_path, "dataset manifest path");
    c_trn->add_option("--init-ckpt", trn.init_ckpt, "stage-1 checkpoint (stage perceptual_gan)");
    c_trn->add_option("--resume", trn.resume_path, "training state to resume from");
    c_trn->add_option("--out", trn.out_ckpt, "output checkpoint path");
    c_trn->add_option("--state-out", trn.state_out, "write final training state here");
    c_trn->add_option("--report", trn.report_out, "write per-epoch JSON lines here");

    InferArgs inf;
    CLI::App* c_inf = app.add_subcommand("infer", "super-resolve a volume");
    add_common(c_inf, inf.common);
    c_inf->add_option("--ckpt", inf.ckpt_path, "model checkpoint")->required();
    c_inf->add_option("--scale", inf.scale, "upsampling factor (fractional allowed)")->required();
    c_inf->add_option("input", inf.in_path, "input volume")->required();
    c_inf->add_option("output", inf.out_path, "output volume")->required();

    EvaluateArgs ev;
    CLI::App* c_ev = app.add_subcommand("evaluate", "score reconstruction methods");
    add_common(c_ev, ev.common);
    c_ev->add_option("--scales", ev.scales, "sampling factors to sweep")->required()
        ->delimiter(',');
    c_ev->add_option("--mode", ev.mode, "degradation mode")->default_val("thin_to_thick");
    c_ev->add_option("--gaussian-sigma", ev.gaussian_sigma, "Z blur sigma (gaussian mode)");
    c_ev->add_option("--noise-sigma", ev.noise_sigma, "additive noise sigma");
    c_ev->add_option("--method", ev.methods, "method names (tricubic or checkpoint-backed)")
        ->delimiter(',');
    c_ev->add_option("--ckpt", ev.ckpt_specs, "checkpoint as method=path (repeatable)");
    c_ev->add_option("--out", ev.out_path, "metric records JSONL path")->required();
    c_ev->add_option("--csv", ev.csv_path, "summary CSV path");
    c_ev->add_option("--svg", ev.svg_path, "plot SVG path");
    c_ev->add_option("--significance", ev.significance_path, "pairwise significance JSON path");
    c_ev->add_flag("--slicewise-ssim", ev.slicewise_ssim, "2D in-plane SSIM averaged over slices");
    c_ev->add_option("volumes", ev.volume_paths, "ground-truth volumes")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        const Common* common = nullptr;
        if (c_deg->parsed()) common = &deg.common;
        else if (c_bld->parsed()) common = &bld.common;
        else if (c_trn->parsed()) common = &trn.common;
        else if (c_inf->parsed()) common = &inf.common;
        else common = &ev.common;
        g_log_level = log_level_from_string(common->log_level);

        if (c_deg->parsed()) return run_degrade(deg, argv_copy);
        if (c_bld->parsed()) return run_build_dataset(bld, argv_copy);
        if (c_trn->parsed()) return run_train(trn, argv_copy);
        if (c_inf->parsed()) return run_infer(inf, argv_copy);
        return run_evaluate(ev, argv_copy);
    } catch (const std::exception& e) {
        log(LogLevel::error, e.what());
        return exit_code_for(e);
    }
}
