#pragma once

#include "neusim/ad/param_store.hpp"
#include "neusim/ad/tape.hpp"
#include "neusim/core/rng.hpp"
#include "neusim/core/types.hpp"

#include <string>
#include <vector>

namespace neusim::fields {

enum class Act { softplus100, relu };
enum class OutAct { none, sigmoid };

// Dense network shape: `layers` dense layers total (>=1), hidden width
// `hidden` between them, so layers=1 is a single in->out map.
struct MlpSpec {
    int layers = 3;
    int hidden = 64;
    Act act = Act::relu;
    OutAct out = OutAct::none;
};

// Start an SDF net out as roughly ||p|| - radius: hidden weights are
// variance-preserving on the raw-point rows and zero on the remaining
// encoding rows of the first layer; the output layer is the constant
// vector sqrt(pi/fan_in) with bias -radius.
struct GeometricInit {
    double radius = 0.5;
    int identity_cols = 3;
};

// Creates parameters "<prefix>.w<l>" / "<prefix>.b<l>".
void init_mlp(ad::ParamStore& ps, const std::string& prefix, const MlpSpec& spec, int in_dim,
              int out_dim, Rng& rng, double out_scale = 1.0, const GeometricInit* geo = nullptr);

// Pure batched forward; rows of X are independent inputs.
MatX mlp_forward(const ad::ParamStore& ps, const std::string& prefix, const MlpSpec& spec,
                 const MatX& X);

ad::Var mlp_forward(ad::Tape& t, const ad::ParamStore& ps, const std::string& prefix,
                    const MlpSpec& spec, ad::Var X);

// Forward plus directional tangents: yt[k] = J_net(x) · xt[k], row-wise.
// Exact for the activations above (rectifier tangents use the a.e. derivative).
struct MlpTangentsPlain {
    MatX y;
    std::vector<MatX> yt;
};
MlpTangentsPlain mlp_forward_tangent(const ad::ParamStore& ps, const std::string& prefix,
                                     const MlpSpec& spec, const MatX& X,
                                     const std::vector<MatX>& Xt);

struct MlpTangentsTape {
    ad::Var y;
    std::vector<ad::Var> yt;
};
MlpTangentsTape mlp_forward_tangent(ad::Tape& t, const ad::ParamStore& ps, const std::string& prefix,
                                    const MlpSpec& spec, ad::Var X, const std::vector<ad::Var>& Xt);

} // namespace neusim::fields
