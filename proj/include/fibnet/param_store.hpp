#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace fibnet {

template <typename T>
struct ParamEntry {
    std::string name;
    std::vector<std::size_t> dims;
    std::vector<T> value;
    std::vector<T> grad;
    std::vector<T> adam_m;
    std::vector<T> adam_v;
    bool trainable = true;
    bool grad_ready = false;  // set by accumulate_grad, cleared by zero_grad

    [[nodiscard]] std::size_t size() const { return value.size(); }
};

// Ordered, uniquely named parameter arrays. Iteration order is insertion order.
template <typename T>
class ParamStore {
public:
    std::size_t add(std::string name, std::vector<std::size_t> dims, bool trainable, T fill = T(0)) {
        if (index_.contains(name)) {
            throw std::invalid_argument("duplicate parameter name '" + name + "'");
        }
        const std::size_t count = std::accumulate(dims.begin(), dims.end(), std::size_t{1}, std::multiplies<>());
        ParamEntry<T> e;
        e.name = std::move(name);
        e.dims = std::move(dims);
        e.value.assign(count, fill);
        e.trainable = trainable;
        if (trainable) {
            e.grad.assign(count, T(0));
            e.adam_m.assign(count, T(0));
            e.adam_v.assign(count, T(0));
        }
        index_.emplace(e.name, entries_.size());
        entries_.push_back(std::move(e));
        return entries_.size() - 1;
    }

    [[nodiscard]] std::size_t size() const { return entries_.size(); }
    [[nodiscard]] const std::vector<ParamEntry<T>> &entries() const { return entries_; }
    [[nodiscard]] std::vector<ParamEntry<T>> &entries() { return entries_; }

    ParamEntry<T> &operator[](std::size_t i) { return entries_[i]; }
    const ParamEntry<T> &operator[](std::size_t i) const { return entries_[i]; }

    [[nodiscard]] std::optional<std::size_t> find(const std::string &name) const {
        const auto it = index_.find(name);
        if (it == index_.end()) {
            return std::nullopt;
        }
        return it->second;
    }

    ParamEntry<T> &at(const std::string &name) {
        const auto i = find(name);
        if (!i) {
            throw std::out_of_range("unknown parameter '" + name + "'");
        }
        return entries_[*i];
    }

    [[nodiscard]] std::span<const T> value(std::size_t i) const { return entries_[i].value; }
    [[nodiscard]] std::span<T> mutable_value(std::size_t i) { return entries_[i].value; }

    void accumulate_grad(std::size_t i, std::span<const T> g) {
        auto &dst = entries_[i].grad;
        if (dst.size() != g.size()) {
            throw std::invalid_argument("gradient size mismatch for '" + entries_[i].name + "'");
        }
        for (std::size_t k = 0; k < g.size(); ++k) {
            dst[k] += g[k];
        }
        entries_[i].grad_ready = true;
    }

    void zero_grad() {
        for (auto &e : entries_) {
            std::fill(e.grad.begin(), e.grad.end(), T(0));
            e.grad_ready = false;
        }
    }

    [[nodiscard]] std::size_t trainable_count() const {
        std::size_t total = 0;
        for (const auto &e : entries_) {
            if (e.trainable) {
                total += e.value.size();
            }
        }
        return total;
    }

    template <typename U>
    [[nodiscard]] ParamStore<U> cast() const {
        ParamStore<U> out;
        for (const auto &e : entries_) {
            const std::size_t i = out.add(e.name, e.dims, e.trainable);
            auto &d = out[i];
            std::transform(e.value.begin(), e.value.end(), d.value.begin(), [](T v) { return static_cast<U>(v); });
            std::transform(e.adam_m.begin(), e.adam_m.end(), d.adam_m.begin(), [](T v) { return static_cast<U>(v); });
            std::transform(e.adam_v.begin(), e.adam_v.end(), d.adam_v.begin(), [](T v) { return static_cast<U>(v); });
        }
        return out;
    }

    friend bool operator==(const ParamStore &a, const ParamStore &b) {
        if (a.entries_.size() != b.entries_.size()) {
            return false;
        }
        for (std::size_t i = 0; i < a.entries_.size(); ++i) {
            const auto &x = a.entries_[i];
            const auto &y = b.entries_[i];
            if (x.name != y.name || x.dims != y.dims || x.trainable != y.trainable || x.value != y.value) {
                return false;
            }
        }
        return true;
    }

private:
    std::vector<ParamEntry<T>> entries_;
    std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace fibnet
