#pragma once

#include "neusim/ad/param_store.hpp"

#include <cmath>
#include <map>
#include <string>

namespace neusim::ad {

// Adam with bias correction. First/second-moment state is keyed by parameter
// name and lazily created, so parameters may join later steps (they start
// with zero moments and their own effective warmup is inherited from the
// shared step counter, which matches reference implementations that register
// all parameters up front).
class Adam {
public:
    struct Config {
        double lr = 1e-3;
        double beta1 = 0.9;
        double beta2 = 0.999;
        double eps = 1e-8;
    };

    Adam() = default;
    explicit Adam(Config cfg) : cfg_(cfg) {}

    const Config& config() const { return cfg_; }
    long step_count() const { return t_; }

    // Applies one update to every parameter with an entry in `grads`.
    // Parameters without a gradient are left untouched (their moments too).
    void step(ParamStore& params, const std::map<std::string, Tensor>& grads) {
        ++t_;
        double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
        double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
        for (const auto& [name, g] : grads) {
            Tensor& p = params.ref(name);
            if (!p.same_shape(g))
                throw std::invalid_argument("adam: gradient shape mismatch for '" + name + "'");
            auto& st = state_[name];
            if (st.m.numel() == 0) {
                st.m = Tensor(p.shape());
                st.v = Tensor(p.shape());
            }
            for (std::size_t k = 0; k < p.numel(); ++k) {
                double gk = g.data()[k];
                st.m.data()[k] = cfg_.beta1 * st.m.data()[k] + (1.0 - cfg_.beta1) * gk;
                st.v.data()[k] = cfg_.beta2 * st.v.data()[k] + (1.0 - cfg_.beta2) * gk * gk;
                double mhat = st.m.data()[k] / c1;
                double vhat = st.v.data()[k] / c2;
                p.data()[k] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
            }
        }
    }

private:
    struct Moments {
        Tensor m, v;
    };
    Config cfg_;
    long t_ = 0;
    std::map<std::string, Moments> state_;
};

} // namespace neusim::ad
