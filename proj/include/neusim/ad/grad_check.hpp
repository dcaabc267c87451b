#pragma once

#include "neusim/ad/param_store.hpp"

#include <cmath>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>

namespace neusim::ad {

// Central finite differences against analytic gradients. Relative error per
// entry is |ad - fd| / max(1e-8, |fd|); the maximum over all entries of all
// checked parameters is returned.
struct GradCheckResult {
    double max_rel_err = 0.0;
    std::string worst_entry;  // "name[k]"
};

inline GradCheckResult grad_check(ParamStore& params,
                                  const std::function<double(ParamStore&)>& f,
                                  const std::map<std::string, Tensor>& analytic,
                                  double step = 1e-5) {
    if (!(step > 0.0)) throw std::invalid_argument("grad_check: step must be positive");
    GradCheckResult res;
    for (const auto& [name, g] : analytic) {
        Tensor& p = params.ref(name);
        if (!p.same_shape(g))
            throw std::invalid_argument("grad_check: gradient shape mismatch for '" + name + "'");
        for (std::size_t k = 0; k < p.numel(); ++k) {
            double saved = p.data()[k];
            p.data()[k] = saved + step;
            double fp = f(params);
            p.data()[k] = saved - step;
            double fm = f(params);
            p.data()[k] = saved;
            if (!std::isfinite(fp) || !std::isfinite(fm))
                throw std::runtime_error("grad_check: function returned non-finite value");
            double fd = (fp - fm) / (2.0 * step);
            double rel = std::abs(fd - g.data()[k]) / std::max(1e-8, std::abs(fd));
            if (rel > res.max_rel_err) {
                res.max_rel_err = rel;
                res.worst_entry = name + "[" + std::to_string(k) + "]";
            }
        }
    }
    return res;
}

} // namespace neusim::ad
