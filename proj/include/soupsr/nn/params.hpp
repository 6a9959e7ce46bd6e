#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "soupsr/errors.hpp"
#include "soupsr/tensor.hpp"

namespace soupsr {

/// Ordered collection of named parameter tensors. Iteration follows insertion
/// order, which fixes the reduction and serialization order for
/// reproducibility.
template <typename T>
class ParamSet {
public:
    using Entry = std::pair<std::string, Tensor<T>>;

    Tensor<T>& add(const std::string& name, Tensor<T> tensor) {
        if (index_.count(name)) throw config_error("duplicate parameter name: " + name);
        index_[name] = entries_.size();
        entries_.emplace_back(name, std::move(tensor));
        return entries_.back().second;
    }

    Tensor<T>& add(const std::string& name, std::vector<std::size_t> shape) {
        return add(name, Tensor<T>(std::move(shape)));
    }

    bool has(const std::string& name) const { return index_.count(name) != 0; }

    Tensor<T>& at(const std::string& name) {
        auto it = index_.find(name);
        if (it == index_.end()) throw config_error("unknown parameter: " + name);
        return entries_[it->second].second;
    }

    const Tensor<T>& at(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) throw config_error("unknown parameter: " + name);
        return entries_[it->second].second;
    }

    std::size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }

    auto begin() { return entries_.begin(); }
    auto end() { return entries_.end(); }
    auto begin() const { return entries_.begin(); }
    auto end() const { return entries_.end(); }

    std::vector<std::string> names() const {
        std::vector<std::string> out;
        out.reserve(entries_.size());
        for (const Entry& e : entries_) out.push_back(e.first);
        return out;
    }

    /// Same names and shapes, all values zero.
    ParamSet zeros_like() const {
        ParamSet out;
        for (const Entry& e : entries_) out.add(e.first, e.second.zeros_like());
        return out;
    }

    template <typename U>
    ParamSet<U> cast() const {
        ParamSet<U> out;
        for (const Entry& e : entries_) out.add(e.first, e.second.template cast<U>());
        return out;
    }

    std::size_t total_values() const {
        std::size_t n = 0;
        for (const Entry& e : entries_) n += e.second.size();
        return n;
    }

    bool all_finite() const {
        for (const Entry& e : entries_)
            if (!e.second.all_finite()) return false;
        return true;
    }

    bool operator==(const ParamSet& other) const {
        if (entries_.size() != other.entries_.size()) return false;
        for (std::size_t i = 0; i < entries_.size(); ++i)
            if (entries_[i].first != other.entries_[i].first ||
                !(entries_[i].second == other.entries_[i].second))
                return false;
        return true;
    }

private:
    std::vector<Entry> entries_;
    std::map<std::string, std::size_t> index_;
};

} // namespace soupsr
