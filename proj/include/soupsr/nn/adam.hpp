#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "soupsr/errors.hpp"
#include "soupsr/nn/params.hpp"

namespace soupsr {

/// Adaptive-moment optimizer. Moments and step counts are tracked per
/// parameter tensor, and a step touches only the names it was given, so
/// parameters outside the active scale keep both their values and their
/// optimizer state bit-for-bit.
template <typename T>
class Adam {
public:
    explicit Adam(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void attach(const ParamSet<T>& params) {
        m_ = params.zeros_like();
        v_ = params.zeros_like();
        steps_.clear();
        for (const auto& [name, t] : params) steps_[name] = 0;
    }

    bool attached() const { return !m_.empty(); }

    void step(ParamSet<T>& params, const ParamSet<T>& grads, double lr,
              const std::vector<std::string>& names) {
        if (!attached()) throw config_error("optimizer used before attach");
        for (const std::string& name : names) {
            Tensor<T>& p = params.at(name);
            const Tensor<T>& g = grads.at(name);
            Tensor<T>& m = m_.at(name);
            Tensor<T>& v = v_.at(name);
            std::int64_t& t = steps_.at(name);
            ++t;
            const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t));
            const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t));
            for (std::size_t i = 0; i < p.size(); ++i) {
                const double gi = static_cast<double>(g[i]);
                const double mi = beta1_ * static_cast<double>(m[i]) + (1.0 - beta1_) * gi;
                const double vi = beta2_ * static_cast<double>(v[i]) + (1.0 - beta2_) * gi * gi;
                m[i] = static_cast<T>(mi);
                v[i] = static_cast<T>(vi);
                p[i] -= static_cast<T>(lr * (mi / bc1) / (std::sqrt(vi / bc2) + eps_));
            }
        }
    }

    void step_all(ParamSet<T>& params, const ParamSet<T>& grads, double lr) {
        step(params, grads, lr, params.names());
    }

    double beta1() const { return beta1_; }
    double beta2() const { return beta2_; }
    double eps() const { return eps_; }

    /// Moments flattened for archiving: "adam.<name>.m" and "adam.<name>.v".
    ParamSet<float> export_state() const {
        ParamSet<float> out;
        for (const auto& [name, t] : m_) out.add("adam." + name + ".m", t.template cast<float>());
        for (const auto& [name, t] : v_) out.add("adam." + name + ".v", t.template cast<float>());
        return out;
    }

    std::map<std::string, std::int64_t> export_steps() const { return steps_; }

    /// Restores moments and step counts; attach must have been called with
    /// the matching parameter set first.
    void import_state(const ParamSet<float>& state,
                      const std::map<std::string, std::int64_t>& steps) {
        if (!attached()) throw config_error("optimizer used before attach");
        for (auto& [name, t] : m_) {
            const std::string key = "adam." + name + ".m";
            if (!state.has(key)) throw corruption_error("optimizer state is missing " + key);
            Tensor<float> loaded = state.at(key);
            if (loaded.shape() != t.shape())
                throw corruption_error("optimizer state shape mismatch for " + key);
            t = loaded.template cast<T>();
        }
        for (auto& [name, t] : v_) {
            const std::string key = "adam." + name + ".v";
            if (!state.has(key)) throw corruption_error("optimizer state is missing " + key);
            Tensor<float> loaded = state.at(key);
            if (loaded.shape() != t.shape())
                throw corruption_error("optimizer state shape mismatch for " + key);
            t = loaded.template cast<T>();
        }
        for (auto& [name, n] : steps_) {
            auto it = steps.find(name);
            if (it == steps.end()) throw corruption_error("optimizer state is missing steps for " + name);
            n = it->second;
        }
    }

private:
    double beta1_, beta2_, eps_;
    ParamSet<T> m_, v_;
    std::map<std::string, std::int64_t> steps_;
};

} // namespace soupsr
