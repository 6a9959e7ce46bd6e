#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "soupsr/checkpoint.hpp"
#include "soupsr/dataset.hpp"
#include "soupsr/errors.hpp"
#include "soupsr/losses.hpp"
#include "soupsr/nn/adam.hpp"
#include "soupsr/nn/discriminator.hpp"
#include "soupsr/nn/tensor_archive.hpp"
#include "soupsr/rng.hpp"

namespace soupsr {

enum class TrainStage { mse, perceptual_gan };

inline const char* to_string(TrainStage s) {
    return s == TrainStage::mse ? "mse" : "perceptual_gan";
}

inline TrainStage train_stage_from_string(const std::string& s) {
    if (s == "mse") return TrainStage::mse;
    if (s == "perceptual_gan") return TrainStage::perceptual_gan;
    throw config_error("unknown training stage: " + s);
}

struct TrainConfig {
    double lr_init = 3e-4;
    double lr_decay_factor = 3.0;
    int max_decay_cycles = 3;
    std::size_t batch_size = 4;
    TrainStage stage = TrainStage::mse;
    LossWeights weights;
    std::uint64_t seed = 0;
    std::int64_t max_epochs = 10;
    int d_steps_per_g_step = 1;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    double plateau_rel_improvement = 1e-4;
    std::string nan_dump_path;  // when set, a non-finite loss dumps state here
};

inline void validate(const TrainConfig& c) {
    if (!(c.lr_init > 0)) throw config_error("lr_init must be positive");
    if (!(c.lr_decay_factor > 1)) throw config_error("lr_decay_factor must exceed 1");
    if (c.max_decay_cycles < 0) throw config_error("max_decay_cycles must be non-negative");
    if (c.batch_size < 1) throw config_error("batch_size must be at least 1");
    if (c.max_epochs < 1) throw config_error("max_epochs must be at least 1");
    if (c.d_steps_per_g_step < 1) throw config_error("d_steps_per_g_step must be at least 1");
    if (!(c.plateau_rel_improvement > 0)) throw config_error("plateau threshold must be positive");
    validate(c.weights);
}

struct EpochRecord {
    std::int64_t epoch = 0;  // 1-based
    double train_loss = 0;
    double val_loss = 0;
    double lr = 0;
    TrainStage stage = TrainStage::mse;
    LossBreakdown breakdown;  // averaged over the epoch's generator steps
};

struct TrainReport {
    std::vector<EpochRecord> records;
    double wall_time_seconds = 0;
    std::string checkpoint_path;  // filled by callers that persist the result
};

/// Everything needed to continue a run: parameters, best-validation
/// snapshot, optimizer moments and per-parameter step counts, schedule
/// counters. Serializable so that train(2N) == train(N) + resume(N).
struct TrainState {
    TrainStage stage = TrainStage::mse;
    std::int64_t epochs_done = 0;
    double lr = 0;
    int decays_done = 0;
    double best_val = std::numeric_limits<double>::infinity();
    double plateau_best = std::numeric_limits<double>::infinity();
    ParamSet<float> g_params;
    ParamSet<float> best_g;
    ParamSet<float> d_params;  // empty during stage 1
    ParamSet<float> adam_g;    // Adam::export_state layout
    ParamSet<float> adam_d;
    std::map<std::string, std::int64_t> steps_g;
    std::map<std::string, std::int64_t> steps_d;

    bool fresh() const { return g_params.empty(); }
};

namespace detail {

inline nlohmann::json json_real(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    return v;
}

inline double real_from_json(const nlohmann::json& j) {
    if (j.is_string()) {
        const std::string s = j.get<std::string>();
        if (s == "inf") return std::numeric_limits<double>::infinity();
        if (s == "-inf") return -std::numeric_limits<double>::infinity();
        throw format_error("unexpected numeric field: " + s);
    }
    return j.get<double>();
}

} // namespace detail

inline nlohmann::json to_json(const EpochRecord& r) {
    return {{"epoch", r.epoch},
            {"train_loss", detail::json_real(r.train_loss)},
            {"val_loss", detail::json_real(r.val_loss)},
            {"lr", r.lr},
            {"stage", to_string(r.stage)},
            {"perceptual", r.breakdown.perceptual},
            {"gan", r.breakdown.gan},
            {"mse", r.breakdown.mse},
            {"gan_raw", r.breakdown.gan_raw},
            {"mse_raw", r.breakdown.mse_raw},
            {"total", r.breakdown.total}};
}

// ---- train state persistence ----

inline void save_train_state(const TrainState& st, const std::filesystem::path& path) {
    ParamSet<float> flat;
    for (const auto& [n, t] : st.g_params) flat.add("model." + n, t);
    for (const auto& [n, t] : st.best_g) flat.add("best." + n, t);
    for (const auto& [n, t] : st.d_params) flat.add("disc." + n, t);
    for (const auto& [n, t] : st.adam_g) flat.add("optg." + n, t);
    for (const auto& [n, t] : st.adam_d) flat.add("optd." + n, t);
    nlohmann::json meta{{"kind", "soup-train-state"},
                        {"train_state_version", 1},
                        {"stage", to_string(st.stage)},
                        {"epochs_done", st.epochs_done},
                        {"lr", st.lr},
                        {"decays_done", st.decays_done},
                        {"best_val", detail::json_real(st.best_val)},
                        {"plateau_best", detail::json_real(st.plateau_best)},
                        {"steps_g", st.steps_g},
                        {"steps_d", st.steps_d}};
    save_tensor_archive(path, flat, meta);
}

inline TrainState load_train_state(const std::filesystem::path& path) {
    TensorArchive ar = load_tensor_archive(path);
    try {
        if (ar.meta.value("kind", "") != "soup-train-state")
            throw format_error(path.string() + " is not a training state archive");
        if (ar.meta.value("train_state_version", 0) != 1)
            throw format_error(path.string() + ": unsupported training state version");
        TrainState st;
        st.stage = train_stage_from_string(ar.meta.at("stage").get<std::string>());
        st.epochs_done = ar.meta.at("epochs_done").get<std::int64_t>();
        st.lr = ar.meta.at("lr").get<double>();
        st.decays_done = ar.meta.at("decays_done").get<int>();
        st.best_val = detail::real_from_json(ar.meta.at("best_val"));
        st.plateau_best = detail::real_from_json(ar.meta.at("plateau_best"));
        st.steps_g = ar.meta.at("steps_g").get<std::map<std::string, std::int64_t>>();
        st.steps_d = ar.meta.at("steps_d").get<std::map<std::string, std::int64_t>>();
        for (const auto& [name, t] : ar.tensors) {
            const auto route = [&](const char* prefix, ParamSet<float>& dst) {
                const std::size_t n = std::string(prefix).size();
                if (name.rfind(prefix, 0) != 0) return false;
                dst.add(name.substr(n), t);
                return true;
            };
            if (!route("model.", st.g_params) && !route("best.", st.best_g) &&
                !route("disc.", st.d_params) && !route("optg.", st.adam_g) &&
                !route("optd.", st.adam_d))
                throw format_error(path.string() + ": unexpected tensor " + name);
        }
        return st;
    } catch (const nlohmann::json::exception& e) {
        throw format_error(path.string() + ": malformed training state: " + e.what());
    }
}

// ---- shared loop helpers ----

namespace detail {

struct ScalePools {
    std::vector<int> scales;                        // distinct, ascending
    std::map<int, std::vector<std::size_t>> pools;  // scale -> absolute entry indices
};

inline ScalePools train_pools(const DatasetManifest& m, const GeneratorConfig& gcfg) {
    ScalePools sp;
    for (std::size_t i = 0; i < m.entries.size(); ++i) {
        const PatchEntry& e = m.entries[i];
        if (e.split != Split::train) continue;
        if (std::find(gcfg.scales.begin(), gcfg.scales.end(), e.scale) == gcfg.scales.end())
            throw config_error("dataset scale " + std::to_string(e.scale) +
                               " is not covered by the generator's scales");
        sp.pools[e.scale].push_back(i);
    }
    for (const auto& [s, _] : sp.pools) sp.scales.push_back(s);
    return sp;
}

inline bool same_generator_config(const GeneratorConfig& a, const GeneratorConfig& b) {
    return a.base_channels == b.base_channels && a.n_residual_blocks == b.n_residual_blocks &&
           a.block_type == b.block_type && a.scales == b.scales;
}

template <typename T>
inline std::vector<std::string> stage1_step_names(const Generator<T>& gen, int scale) {
    std::vector<std::string> names = gen.backbone_names();
    const std::vector<std::string> extra = gen.scale_names(scale);
    names.insert(names.end(), extra.begin(), extra.end());
    return names;
}

/// Relative-threshold plateau test; an infinite reference always improves.
inline bool improved(double reference, double val, double rel_threshold) {
    if (!std::isfinite(reference)) return true;
    return (reference - val) >= rel_threshold * std::max(std::abs(reference), 1e-12);
}

[[noreturn]] inline void nan_abort(TrainState& st, Adam<float>& g_opt,
                                   Adam<float>* d_opt, const TrainConfig& tcfg,
                                   const std::string& where) {
    st.adam_g = g_opt.export_state();
    st.steps_g = g_opt.export_steps();
    if (d_opt) {
        st.adam_d = d_opt->export_state();
        st.steps_d = d_opt->export_steps();
    }
    std::string msg = "non-finite loss at " + where;
    if (!tcfg.nan_dump_path.empty()) {
        save_train_state(st, tcfg.nan_dump_path);
        msg += "; state dumped to " + tcfg.nan_dump_path;
    }
    throw numerical_error(msg);
}

} // namespace detail

// ---- stage 1: MSE pre-training ----

/// Adam on the voxel MSE over mixed-scale batches (each batch samples one
/// scale uniformly, then patches from that scale's pool with replacement).
/// After each epoch the validation loss drives a plateau schedule: relative
/// improvement below the threshold decays the learning rate, and once the
/// decay budget is spent the next non-improving epoch stops the run. Returns
/// the checkpoint with the lowest recorded validation loss.
///
/// `io_state` resumes a previous run when it holds one, and always receives
/// the final state so the caller can persist it.
inline std::pair<MultiScaleCheckpoint, TrainReport> train_stage1(const PatchSource& data,
                                                                 const GeneratorConfig& gcfg,
                                                                 const TrainConfig& tcfg,
                                                                 TrainState* io_state = nullptr) {
    validate(gcfg);
    validate(tcfg);
    if (tcfg.stage != TrainStage::mse)
        throw config_error("train_stage1 requires stage=mse");
    const DatasetManifest& m = data.manifest();
    const detail::ScalePools sp = detail::train_pools(m, gcfg);
    const std::vector<std::size_t> val_idx = m.split_entry_indices(Split::val);
    if (sp.pools.empty()) throw config_error("train split is empty");
    if (val_idx.empty()) throw config_error("val split is empty");

    TrainState local;
    TrainState& st = io_state ? *io_state : local;
    Generator<float> gen(gcfg);
    Adam<float> opt(tcfg.adam_beta1, tcfg.adam_beta2, tcfg.adam_eps);
    if (st.fresh()) {
        st.stage = TrainStage::mse;
        st.lr = tcfg.lr_init;
        st.g_params = make_checkpoint(gcfg, tcfg.seed).params;
        st.best_g = st.g_params;
        opt.attach(st.g_params);
    } else {
        if (st.stage != TrainStage::mse)
            throw config_error("resume state does not belong to stage 1");
        opt.attach(st.g_params);
        opt.import_state(st.adam_g, st.steps_g);
    }

    const auto t0 = std::chrono::steady_clock::now();
    TrainReport report;
    const std::size_t train_total = m.split_size(Split::train);
    const std::size_t steps_per_epoch = (train_total + tcfg.batch_size - 1) / tcfg.batch_size;

    for (std::int64_t epoch = st.epochs_done; epoch < tcfg.max_epochs; ++epoch) {
        Rng rng(derive_seed(tcfg.seed, "stage1-epoch", static_cast<std::uint64_t>(epoch)));
        double train_acc = 0.0;
        for (std::size_t step = 0; step < steps_per_epoch; ++step) {
            const int scale = sp.scales[rng.index(sp.scales.size())];
            const std::vector<std::size_t>& pool = sp.pools.at(scale);
            const std::string pf = scale_prefix(scale);
            ParamSet<float> grads = st.g_params.zeros_like();
            double batch_loss = 0.0;
            const double inv_batch = 1.0 / static_cast<double>(tcfg.batch_size);
            for (std::size_t b = 0; b < tcfg.batch_size; ++b) {
                const PatchPair pair = data.load_entry(pool[rng.index(pool.size())]);
                typename Generator<float>::Cache cache;
                const Tensor<float> pred =
                    gen.forward_train(st.g_params, pf, pair.input_patch, cache);
                Tensor<float> dpred = pred.zeros_like();
                batch_loss += inv_batch * mse_loss_grad(pred, pair.target_patch, dpred);
                for (float& v : dpred) v = static_cast<float>(v * inv_batch);
                gen.backward(st.g_params, pf, cache, dpred, grads, nullptr);
            }
            if (!std::isfinite(batch_loss))
                detail::nan_abort(st, opt, nullptr, tcfg,
                                  "stage 1 epoch " + std::to_string(epoch + 1) + " step " +
                                      std::to_string(step + 1));
            opt.step(st.g_params, grads, st.lr, detail::stage1_step_names(gen, scale));
            train_acc += batch_loss;
        }
        const double train_loss = train_acc / static_cast<double>(steps_per_epoch);

        double val_acc = 0.0;
        for (std::size_t idx : val_idx) {
            const PatchPair pair = data.load_entry(idx);
            const Tensor<float> pred =
                gen.forward(st.g_params, scale_prefix(pair.scale), pair.input_patch);
            val_acc += mse_loss(pred, pair.target_patch);
        }
        const double val_loss = val_acc / static_cast<double>(val_idx.size());
        if (!std::isfinite(val_loss))
            detail::nan_abort(st, opt, nullptr, tcfg,
                              "stage 1 validation after epoch " + std::to_string(epoch + 1));

        EpochRecord rec;
        rec.epoch = epoch + 1;
        rec.train_loss = train_loss;
        rec.val_loss = val_loss;
        rec.lr = st.lr;
        rec.stage = TrainStage::mse;
        rec.breakdown.mse = train_loss;
        rec.breakdown.mse_raw = train_loss;
        rec.breakdown.total = train_loss;
        report.records.push_back(rec);

        if (val_loss < st.best_val) {
            st.best_val = val_loss;
            st.best_g = st.g_params;
        }
        const bool ok = detail::improved(st.plateau_best, val_loss, tcfg.plateau_rel_improvement);
        st.epochs_done = epoch + 1;
        if (ok) {
            st.plateau_best = val_loss;
        } else if (st.decays_done < tcfg.max_decay_cycles) {
            st.lr /= tcfg.lr_decay_factor;
            ++st.decays_done;
        } else {
            break;
        }
    }

    st.adam_g = opt.export_state();
    st.steps_g = opt.export_steps();
    report.wall_time_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    MultiScaleCheckpoint out;
    out.config = gcfg;
    out.stage = Stage::mse_pretrained;
    out.params = st.best_g;
    out.meta = {{"init_seed", tcfg.seed},
                {"epochs", st.epochs_done},
                {"best_val_loss", detail::json_real(st.best_val)},
                {"adam", {{"beta1", tcfg.adam_beta1}, {"beta2", tcfg.adam_beta2},
                          {"eps", tcfg.adam_eps}}}};
    return {std::move(out), std::move(report)};
}

// ---- stage 2: perceptual-GAN fine-tuning ----

/// Alternating adversarial fine-tuning from an MSE-pretrained checkpoint.
/// Each cycle runs d_steps_per_g_step discriminator steps (softplus GAN
/// loss on real targets vs. current generator outputs) and one generator
/// step on perceptual + lambda*GAN + mu*MSE. Runs for max_epochs at a fixed
/// learning rate and returns the checkpoint with the best validation total.
inline std::pair<MultiScaleCheckpoint, TrainReport> train_stage2(
    const MultiScaleCheckpoint& ckpt, const PatchSource& data, const GeneratorConfig& gcfg,
    const DiscriminatorConfig& dcfg, const PerceptualConfig& pcfg, const TrainConfig& tcfg,
    TrainState* io_state = nullptr) {
    validate(gcfg);
    validate(dcfg);
    validate(pcfg);
    validate(tcfg);
    if (tcfg.stage != TrainStage::perceptual_gan)
        throw config_error("train_stage2 requires stage=perceptual_gan");
    if (ckpt.stage != Stage::mse_pretrained)
        throw config_error("stage 2 must start from an mse_pretrained checkpoint");
    if (!detail::same_generator_config(ckpt.config, gcfg))
        throw config_error("generator config does not match the checkpoint");
    const DatasetManifest& m = data.manifest();
    if (dcfg.input_patch != m.patch_size)
        throw config_error("discriminator input_patch must equal the dataset patch size");
    const detail::ScalePools sp = detail::train_pools(m, gcfg);
    const std::vector<std::size_t> val_idx = m.split_entry_indices(Split::val);
    if (sp.pools.empty()) throw config_error("train split is empty");
    if (val_idx.empty()) throw config_error("val split is empty");

    TrainState local;
    TrainState& st = io_state ? *io_state : local;
    Generator<float> gen(gcfg);
    Discriminator<float> disc(dcfg);
    Adam<float> g_opt(tcfg.adam_beta1, tcfg.adam_beta2, tcfg.adam_eps);
    Adam<float> d_opt(tcfg.adam_beta1, tcfg.adam_beta2, tcfg.adam_eps);
    if (st.fresh()) {
        validate_checkpoint(ckpt);
        st.stage = TrainStage::perceptual_gan;
        st.lr = tcfg.lr_init;
        st.g_params = ckpt.params;
        st.best_g = st.g_params;
        st.d_params = disc.init_params(derive_seed(tcfg.seed, "discriminator"));
        g_opt.attach(st.g_params);
        d_opt.attach(st.d_params);
    } else {
        if (st.stage != TrainStage::perceptual_gan)
            throw config_error("resume state does not belong to stage 2");
        g_opt.attach(st.g_params);
        g_opt.import_state(st.adam_g, st.steps_g);
        d_opt.attach(st.d_params);
        d_opt.import_state(st.adam_d, st.steps_d);
    }

    const PerceptualLoss<float> per(pcfg);
    const std::vector<std::string> d_names = st.d_params.names();
    const auto t0 = std::chrono::steady_clock::now();
    TrainReport report;
    const std::size_t train_total = m.split_size(Split::train);
    const std::size_t steps_per_epoch = (train_total + tcfg.batch_size - 1) / tcfg.batch_size;
    const std::size_t nb = tcfg.batch_size;
    const double inv_batch = 1.0 / static_cast<double>(nb);

    const auto sample_batch = [&](Rng& rng) {
        const int scale = sp.scales[rng.index(sp.scales.size())];
        const std::vector<std::size_t>& pool = sp.pools.at(scale);
        std::vector<PatchPair> batch;
        batch.reserve(nb);
        for (std::size_t b = 0; b < nb; ++b)
            batch.push_back(data.load_entry(pool[rng.index(pool.size())]));
        return std::pair<int, std::vector<PatchPair>>(scale, std::move(batch));
    };

    for (std::int64_t epoch = st.epochs_done; epoch < tcfg.max_epochs; ++epoch) {
        Rng rng(derive_seed(tcfg.seed, "stage2-epoch", static_cast<std::uint64_t>(epoch)));
        LossBreakdown epoch_bd;
        double d_loss_acc = 0.0;
        for (std::size_t step = 0; step < steps_per_epoch; ++step) {
            const std::string where =
                "stage 2 epoch " + std::to_string(epoch + 1) + " step " + std::to_string(step + 1);

            for (int ds = 0; ds < tcfg.d_steps_per_g_step; ++ds) {
                const auto [scale, batch] = sample_batch(rng);
                const std::string pf = scale_prefix(scale);
                std::vector<double> logits_real(nb), logits_fake(nb);
                std::vector<typename Discriminator<float>::Cache> rc(nb), fc(nb);
                std::vector<Tensor<float>> fakes;
                fakes.reserve(nb);
                for (std::size_t b = 0; b < nb; ++b) {
                    fakes.push_back(gen.forward(st.g_params, pf, batch[b].input_patch));
                    logits_real[b] =
                        static_cast<double>(disc.forward_train(st.d_params, batch[b].target_patch, rc[b]));
                    logits_fake[b] =
                        static_cast<double>(disc.forward_train(st.d_params, fakes[b], fc[b]));
                }
                std::vector<double> dreal, dfake;
                const double d_loss = gan_loss_d_grad(logits_real, logits_fake, dreal, dfake);
                if (!std::isfinite(d_loss))
                    detail::nan_abort(st, g_opt, &d_opt, tcfg, where + " (discriminator)");
                ParamSet<float> d_grads = st.d_params.zeros_like();
                for (std::size_t b = 0; b < nb; ++b) {
                    disc.backward(st.d_params, rc[b], static_cast<float>(dreal[b]), d_grads,
                                  nullptr);
                    disc.backward(st.d_params, fc[b], static_cast<float>(dfake[b]), d_grads,
                                  nullptr);
                }
                d_opt.step(st.d_params, d_grads, st.lr, d_names);
                d_loss_acc += d_loss / static_cast<double>(tcfg.d_steps_per_g_step);
            }

            const auto [scale, batch] = sample_batch(rng);
            const std::string pf = scale_prefix(scale);
            std::vector<typename Generator<float>::Cache> gc(nb);
            std::vector<typename Discriminator<float>::Cache> dc(nb);
            std::vector<Tensor<float>> preds;
            preds.reserve(nb);
            std::vector<double> logits_fake(nb);
            for (std::size_t b = 0; b < nb; ++b) {
                preds.push_back(gen.forward_train(st.g_params, pf, batch[b].input_patch, gc[b]));
                logits_fake[b] =
                    static_cast<double>(disc.forward_train(st.d_params, preds[b], dc[b]));
            }
            std::vector<double> dfake;
            const double gan_raw = gan_loss_g_grad(logits_fake, dfake);
            ParamSet<float> g_grads = st.g_params.zeros_like();
            ParamSet<float> d_scratch = st.d_params.zeros_like();  // discarded
            double per_acc = 0.0, mse_acc = 0.0;
            for (std::size_t b = 0; b < nb; ++b) {
                Tensor<float> dpred = preds[b].zeros_like();
                Tensor<float> dper = preds[b].zeros_like();
                per_acc += inv_batch * per.value_grad(preds[b], batch[b].target_patch, dper);
                Tensor<float> dmse = preds[b].zeros_like();
                mse_acc += inv_batch * mse_loss_grad(preds[b], batch[b].target_patch, dmse);
                disc.backward(st.d_params, dc[b],
                              static_cast<float>(tcfg.weights.lambda_gan * dfake[b]), d_scratch,
                              &dpred);
                axpy(static_cast<float>(inv_batch), dper, dpred);
                axpy(static_cast<float>(inv_batch * tcfg.weights.mu_mse), dmse, dpred);
                gen.backward(st.g_params, pf, gc[b], dpred, g_grads, nullptr);
            }
            LossBreakdown bd;
            bd.perceptual = per_acc;
            bd.gan_raw = gan_raw;
            bd.mse_raw = mse_acc;
            bd.gan = tcfg.weights.lambda_gan * gan_raw;
            bd.mse = tcfg.weights.mu_mse * mse_acc;
            bd.total = bd.perceptual + bd.gan + bd.mse;
            if (!std::isfinite(bd.total))
                detail::nan_abort(st, g_opt, &d_opt, tcfg, where + " (generator)");
            g_opt.step(st.g_params, g_grads, st.lr, detail::stage1_step_names(gen, scale));

            epoch_bd.perceptual += bd.perceptual;
            epoch_bd.gan += bd.gan;
            epoch_bd.mse += bd.mse;
            epoch_bd.gan_raw += bd.gan_raw;
            epoch_bd.mse_raw += bd.mse_raw;
            epoch_bd.total += bd.total;
        }
        const double inv_steps = 1.0 / static_cast<double>(steps_per_epoch);
        epoch_bd.perceptual *= inv_steps;
        epoch_bd.gan *= inv_steps;
        epoch_bd.mse *= inv_steps;
        epoch_bd.gan_raw *= inv_steps;
        epoch_bd.mse_raw *= inv_steps;
        epoch_bd.total *= inv_steps;

        double val_pm = 0.0;
        std::vector<double> val_logits;
        val_logits.reserve(val_idx.size());
        for (std::size_t idx : val_idx) {
            const PatchPair pair = data.load_entry(idx);
            const Tensor<float> pred =
                gen.forward(st.g_params, scale_prefix(pair.scale), pair.input_patch);
            val_pm += per.value(pred, pair.target_patch) +
                      tcfg.weights.mu_mse * mse_loss(pred, pair.target_patch);
            val_logits.push_back(static_cast<double>(disc.forward(st.d_params, pred)));
        }
        const double val_loss = val_pm / static_cast<double>(val_idx.size()) +
                                tcfg.weights.lambda_gan * gan_loss_g(val_logits);
        if (!std::isfinite(val_loss))
            detail::nan_abort(st, g_opt, &d_opt, tcfg,
                              "stage 2 validation after epoch " + std::to_string(epoch + 1));

        EpochRecord rec;
        rec.epoch = epoch + 1;
        rec.train_loss = epoch_bd.total;
        rec.val_loss = val_loss;
        rec.lr = st.lr;
        rec.stage = TrainStage::perceptual_gan;
        rec.breakdown = epoch_bd;
        report.records.push_back(rec);

        if (val_loss < st.best_val) {
            st.best_val = val_loss;
            st.best_g = st.g_params;
        }
        st.epochs_done = epoch + 1;
        (void)d_loss_acc;
    }

    st.adam_g = g_opt.export_state();
    st.steps_g = g_opt.export_steps();
    st.adam_d = d_opt.export_state();
    st.steps_d = d_opt.export_steps();
    report.wall_time_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    MultiScaleCheckpoint out;
    out.config = gcfg;
    out.stage = Stage::perceptual_gan;
    out.params = st.best_g;
    out.meta = {{"epochs", st.epochs_done},
                {"best_val_loss", detail::json_real(st.best_val)},
                {"weights", {{"lambda_gan", tcfg.weights.lambda_gan},
                             {"mu_mse", tcfg.weights.mu_mse}}},
                {"adam", {{"beta1", tcfg.adam_beta1}, {"beta2", tcfg.adam_beta2},
                          {"eps", tcfg.adam_eps}}}};
    return {std::move(out), std::move(report)};
}

// ---- config JSON mirrors ----

inline nlohmann::json to_json(const LossWeights& w) {
    return {{"lambda_gan", w.lambda_gan}, {"mu_mse", w.mu_mse}};
}

inline LossWeights loss_weights_from_json(const nlohmann::json& j) {
    LossWeights w;
    w.lambda_gan = j.value("lambda_gan", w.lambda_gan);
    w.mu_mse = j.value("mu_mse", w.mu_mse);
    validate(w);
    return w;
}

inline nlohmann::json to_json(const TrainConfig& c) {
    return {{"lr_init", c.lr_init},
            {"lr_decay_factor", c.lr_decay_factor},
            {"max_decay_cycles", c.max_decay_cycles},
            {"batch_size", c.batch_size},
            {"stage", to_string(c.stage)},
            {"weights", to_json(c.weights)},
            {"seed", c.seed},
            {"max_epochs", c.max_epochs},
            {"d_steps_per_g_step", c.d_steps_per_g_step},
            {"adam_beta1", c.adam_beta1},
            {"adam_beta2", c.adam_beta2},
            {"adam_eps", c.adam_eps},
            {"plateau_rel_improvement", c.plateau_rel_improvement},
            {"nan_dump_path", c.nan_dump_path}};
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
    TrainConfig c;
    try {
        c.lr_init = j.value("lr_init", c.lr_init);
        c.lr_decay_factor = j.value("lr_decay_factor", c.lr_decay_factor);
        c.max_decay_cycles = j.value("max_decay_cycles", c.max_decay_cycles);
        c.batch_size = j.value("batch_size", c.batch_size);
        if (j.contains("stage")) c.stage = train_stage_from_string(j.at("stage").get<std::string>());
        if (j.contains("weights")) c.weights = loss_weights_from_json(j.at("weights"));
        c.seed = j.value("seed", c.seed);
        c.max_epochs = j.value("max_epochs", c.max_epochs);
        c.d_steps_per_g_step = j.value("d_steps_per_g_step", c.d_steps_per_g_step);
        c.adam_beta1 = j.value("adam_beta1", c.adam_beta1);
        c.adam_beta2 = j.value("adam_beta2", c.adam_beta2);
        c.adam_eps = j.value("adam_eps", c.adam_eps);
        c.plateau_rel_improvement = j.value("plateau_rel_improvement", c.plateau_rel_improvement);
        c.nan_dump_path = j.value("nan_dump_path", c.nan_dump_path);
    } catch (const nlohmann::json::exception& e) {
        throw format_error(std::string("malformed train config: ") + e.what());
    }
    validate(c);
    return c;
}

inline nlohmann::json to_json(const PerceptualConfig& c) {
    nlohmann::json planes = nlohmann::json::array();
    for (Plane p : c.planes) planes.push_back(to_string(p));
    return {{"feature_layer", c.feature_layer}, {"planes", planes},
            {"slice_batch", c.slice_batch},     {"channel_mode", c.channel_mode},
            {"weights_path", c.weights_path},   {"extractor_seed", c.extractor_seed}};
}

inline PerceptualConfig perceptual_config_from_json(const nlohmann::json& j) {
    PerceptualConfig c;
    try {
        c.feature_layer = j.value("feature_layer", c.feature_layer);
        if (j.contains("planes")) {
            c.planes.clear();
            for (const auto& p : j.at("planes"))
                c.planes.push_back(plane_from_string(p.get<std::string>()));
        }
        c.slice_batch = j.value("slice_batch", c.slice_batch);
        c.channel_mode = j.value("channel_mode", c.channel_mode);
        c.weights_path = j.value("weights_path", c.weights_path);
        c.extractor_seed = j.value("extractor_seed", c.extractor_seed);
    } catch (const nlohmann::json::exception& e) {
        throw format_error(std::string("malformed perceptual config: ") + e.what());
    }
    validate(c);
    return c;
}

inline nlohmann::json to_json(const DiscriminatorConfig& c) {
    return {{"channels", c.channels}, {"input_patch", c.input_patch}};
}

inline DiscriminatorConfig discriminator_config_from_json(const nlohmann::json& j) {
    DiscriminatorConfig c;
    try {
        if (j.contains("channels")) c.channels = j.at("channels").get<std::vector<int>>();
        c.input_patch = j.value("input_patch", c.input_patch);
    } catch (const nlohmann::json::exception& e) {
        throw format_error(std::string("malformed discriminator config: ") + e.what());
    }
    validate(c);
    return c;
}

} // namespace soupsr
