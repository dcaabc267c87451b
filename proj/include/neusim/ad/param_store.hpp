#pragma once

#include "neusim/ad/tensor.hpp"

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>

namespace neusim::ad {

// Named parameter tensors. Names are unique, shapes immutable after creation,
// values kept finite. Iteration order is lexicographic (std::map), which also
// fixes the checkpoint entry order.
class ParamStore {
public:
    Tensor& create(const std::string& name, Tensor init) {
        if (params_.count(name)) throw std::invalid_argument("param exists: " + name);
        if (!init.all_finite()) throw std::invalid_argument("param not finite: " + name);
        return params_.emplace(name, std::move(init)).first->second;
    }

    bool has(const std::string& name) const { return params_.count(name) != 0; }

    const Tensor& get(const std::string& name) const {
        auto it = params_.find(name);
        if (it == params_.end()) throw std::invalid_argument("no such param: " + name);
        return it->second;
    }

    // Mutable access for optimizer updates and finite-difference probes.
    // Shape stays fixed; only values may change.
    Tensor& ref(const std::string& name) {
        auto it = params_.find(name);
        if (it == params_.end()) throw std::invalid_argument("no such param: " + name);
        return it->second;
    }

    void set(const std::string& name, const Tensor& v) {
        Tensor& t = ref(name);
        if (!t.same_shape(v)) throw std::invalid_argument("param shape immutable: " + name);
        if (!v.all_finite()) throw std::invalid_argument("param not finite: " + name);
        t = v;
    }

    std::size_t size() const { return params_.size(); }
    auto begin() const { return params_.begin(); }
    auto end() const { return params_.end(); }
    auto begin() { return params_.begin(); }
    auto end() { return params_.end(); }

    // FNV-1a over names and raw value bytes; used to assert frozen stages.
    std::uint64_t checksum() const {
        std::uint64_t h = 1469598103934665603ull;
        auto mix = [&h](const void* p, std::size_t n) {
            const auto* b = static_cast<const unsigned char*>(p);
            for (std::size_t i = 0; i < n; ++i) {
                h ^= b[i];
                h *= 1099511628211ull;
            }
        };
        for (const auto& [name, t] : params_) {
            mix(name.data(), name.size());
            mix(t.data(), t.numel() * sizeof(double));
        }
        return h;
    }

private:
    std::map<std::string, Tensor> params_;
};

} // namespace neusim::ad
