#pragma once

#include "neusim/ad/param_store.hpp"
#include "neusim/ad/tape.hpp"
#include "neusim/core/rng.hpp"
#include "neusim/core/types.hpp"
#include "neusim/fields/encoding.hpp"
#include "neusim/fields/mlp.hpp"

#include <string>

namespace neusim::fields {

struct ModelConfig {
    int n_frames = 1;
    Aabb bounds;
    int enc_bands = 6;
    int latent_dim = 32;
    MlpSpec sdf_spec{4, 64, Act::softplus100, OutAct::none};
    MlpSpec color_spec{3, 64, Act::relu, OutAct::sigmoid};
    MlpSpec motion_spec{3, 32, Act::relu, OutAct::none};
    MlpSpec rigidity_spec{2, 16, Act::relu, OutAct::sigmoid};
    bool color_view_dir = false;
    double sharpness_init = 30.0;
    double sphere_init_radius = 0.5;
    double latent_sigma = 0.01;
    std::uint64_t seed = 0;
};

// The trainable scene: a static SDF/color reference frame, a per-frame motion
// field gated by a rigidity mask, one latent code per frame, and the
// sharpness of the rendering sigmoid. Frames are 1-based.
class SceneModel {
public:
    explicit SceneModel(ModelConfig cfg);                       // fresh init from cfg.seed
    SceneModel(ModelConfig cfg, ad::ParamStore params);         // adopt checkpointed values

    const ModelConfig& config() const { return cfg_; }
    ad::ParamStore& params() { return params_; }
    const ad::ParamStore& params() const { return params_; }
    int frame_count() const { return cfg_.n_frames; }
    double sharpness() const { return params_.get("sharpness").item(); }
    static std::string latent_name(int frame);

    // ---- pure batched queries; rows of P are points ----
    VecX sdf(const MatX& P) const;
    MatX sdf_gradient(const MatX& P) const;  // [n,3] spatial gradient
    MatX color(const MatX& P, const MatX* view_dirs = nullptr) const;
    VecX rigidity(const MatX& P) const;
    MatX raw_offset(int frame, const MatX& P) const;
    MatX gated_offset(int frame, const MatX& P) const;  // rigidity(p) * raw_offset
    MatX bend_point(int frame, const MatX& P) const;    // p + gated_offset

    // single-point conveniences
    double sdf(const Vec3& p) const;
    Vec3 sdf_gradient(const Vec3& p) const;
    Vec3 color(const Vec3& p) const;
    double rigidity(const Vec3& p) const;
    Vec3 raw_offset(int frame, const Vec3& p) const;
    Vec3 gated_offset(int frame, const Vec3& p) const;
    Vec3 bend_point(int frame, const Vec3& p) const;

    // ---- tape-side queries (training); P may depend on parameters ----
    ad::Var sdf_t(ad::Tape& t, ad::Var P) const;
    struct SdfGradT {
        ad::Var s;     // [n,1]
        ad::Var grad;  // [n,3]
    };
    SdfGradT sdf_with_gradient_t(ad::Tape& t, ad::Var P) const;
    ad::Var color_t(ad::Tape& t, ad::Var P, const ad::Var* view_dirs = nullptr) const;
    ad::Var rigidity_t(ad::Tape& t, ad::Var P) const;
    ad::Var raw_offset_t(ad::Tape& t, int frame, ad::Var P) const;
    struct OffsetDivT {
        ad::Var b;    // [n,3]
        ad::Var div;  // [n,1] divergence of the raw offset field
    };
    OffsetDivT raw_offset_with_divergence_t(ad::Tape& t, int frame, ad::Var P) const;
    ad::Var gated_offset_t(ad::Tape& t, int frame, ad::Var P) const;
    ad::Var bend_point_t(ad::Tape& t, int frame, ad::Var P) const;
    ad::Var sharpness_t(ad::Tape& t) const { return t.param(params_, "sharpness"); }

private:
    void check_frame(int frame) const;
    MatX clamped(const MatX& P) const;
    ad::Var clamped_t(ad::Tape& t, ad::Var P) const;
    MatX motion_input(int frame, const MatX& P) const;
    void validate() const;

    ModelConfig cfg_;
    FrequencyEncoding enc_;
    ad::ParamStore params_;
};

} // namespace neusim::fields
