#include "neusim/fields/scene_model.hpp"

#include <cstdio>

namespace neusim::fields {

using ad::ParamStore;
using ad::Tape;
using ad::Tensor;
using ad::Var;

std::string SceneModel::latent_name(int frame) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "latent.%04d", frame);
    return buf;
}

SceneModel::SceneModel(ModelConfig cfg) : cfg_(cfg), enc_{cfg.enc_bands} {
    require(cfg_.n_frames >= 1, "model: need at least one frame");
    require(cfg_.latent_dim >= 1, "model: latent_dim must be positive");
    require(cfg_.sharpness_init > 0.0, "model: sharpness must be positive");
    Rng rng(cfg_.seed);
    GeometricInit geo{cfg_.sphere_init_radius, 3};
    init_mlp(params_, "sdf", cfg_.sdf_spec, enc_.dim(), 1, rng, 1.0, &geo);
    int color_in = enc_.dim() + (cfg_.color_view_dir ? 3 : 0);
    init_mlp(params_, "color", cfg_.color_spec, color_in, 3, rng);
    init_mlp(params_, "motion", cfg_.motion_spec, enc_.dim() + cfg_.latent_dim, 3, rng, 1e-2);
    init_mlp(params_, "rigidity", cfg_.rigidity_spec, enc_.dim(), 1, rng);
    for (int i = 1; i <= cfg_.n_frames; ++i) {
        Tensor l({static_cast<std::size_t>(cfg_.latent_dim)});
        for (std::size_t k = 0; k < l.numel(); ++k) l.data()[k] = cfg_.latent_sigma * rng.normal();
        params_.create(latent_name(i), std::move(l));
    }
    params_.create("sharpness", Tensor::scalar(cfg_.sharpness_init));
}

SceneModel::SceneModel(ModelConfig cfg, ParamStore params)
    : cfg_(cfg), enc_{cfg.enc_bands}, params_(std::move(params)) {
    validate();
}

void SceneModel::validate() const {
    // get() throws for anything missing; spot-check shapes that the config fixes.
    require(params_.get("sharpness").item() > 0.0, "model: sharpness must be positive");
    for (int i = 1; i <= cfg_.n_frames; ++i)
        require(params_.get(latent_name(i)).numel() == static_cast<std::size_t>(cfg_.latent_dim),
                "model: latent size mismatch");
    params_.get("sdf.w0");
    params_.get("color.w0");
    params_.get("motion.w0");
    params_.get("rigidity.w0");
}

void SceneModel::check_frame(int frame) const {
    if (frame < 1 || frame > cfg_.n_frames)
        throw std::invalid_argument("model: frame " + std::to_string(frame) + " out of range [1, " +
                                    std::to_string(cfg_.n_frames) + "]");
}

MatX SceneModel::clamped(const MatX& P) const {
    MatX C = P;
    for (Eigen::Index i = 0; i < C.rows(); ++i)
        for (int k = 0; k < 3; ++k)
            C(i, k) = std::min(std::max(C(i, k), cfg_.bounds.lo[k]), cfg_.bounds.hi[k]);
    return C;
}

Var SceneModel::clamped_t(Tape& t, Var P) const {
    // Per-axis bounds; clamp is componentwise so handle the common cubic case
    // with one clamp, otherwise per-column.
    const Vec3 lo = cfg_.bounds.lo, hi = cfg_.bounds.hi;
    if (lo.x() == lo.y() && lo.y() == lo.z() && hi.x() == hi.y() && hi.y() == hi.z())
        return t.clamp(P, lo.x(), hi.x());
    std::vector<Var> cols;
    for (int k = 0; k < 3; ++k)
        cols.push_back(t.clamp(t.slice_cols(P, k, 1), lo[k], hi[k]));
    return t.concat_cols(cols);
}

// ---- plain queries ----

VecX SceneModel::sdf(const MatX& P) const {
    return mlp_forward(params_, "sdf", cfg_.sdf_spec, enc_.encode(clamped(P))).col(0);
}

MatX SceneModel::sdf_gradient(const MatX& P) const {
    MatX C = clamped(P);
    MatX X = enc_.encode(C);
    std::vector<MatX> Xt;
    for (int d = 0; d < 3; ++d) Xt.push_back(enc_.encode_tangent(C, Vec3::Unit(d)));
    auto r = mlp_forward_tangent(params_, "sdf", cfg_.sdf_spec, X, Xt);
    MatX G(P.rows(), 3);
    for (int d = 0; d < 3; ++d) G.col(d) = r.yt[static_cast<std::size_t>(d)].col(0);
    return G;
}

MatX SceneModel::color(const MatX& P, const MatX* view_dirs) const {
    MatX X = enc_.encode(clamped(P));
    if (cfg_.color_view_dir) {
        require(view_dirs != nullptr, "model: color net needs view directions");
        MatX Xin(X.rows(), X.cols() + 3);
        Xin << X, *view_dirs;
        return mlp_forward(params_, "color", cfg_.color_spec, Xin);
    }
    return mlp_forward(params_, "color", cfg_.color_spec, X);
}

VecX SceneModel::rigidity(const MatX& P) const {
    return mlp_forward(params_, "rigidity", cfg_.rigidity_spec, enc_.encode(clamped(P))).col(0);
}

MatX SceneModel::motion_input(int frame, const MatX& P) const {
    MatX X = enc_.encode(clamped(P));
    const Tensor& l = params_.get(latent_name(frame));
    MatX Xin(X.rows(), X.cols() + cfg_.latent_dim);
    Xin.leftCols(X.cols()) = X;
    Xin.rightCols(cfg_.latent_dim) =
        Eigen::Map<const Eigen::RowVectorXd>(l.data(), l.numel()).replicate(X.rows(), 1);
    return Xin;
}

MatX SceneModel::raw_offset(int frame, const MatX& P) const {
    check_frame(frame);
    return mlp_forward(params_, "motion", cfg_.motion_spec, motion_input(frame, P));
}

MatX SceneModel::gated_offset(int frame, const MatX& P) const {
    VecX r = rigidity(P);
    MatX b = raw_offset(frame, P);
    return r.asDiagonal() * b;
}

MatX SceneModel::bend_point(int frame, const MatX& P) const { return P + gated_offset(frame, P); }

double SceneModel::sdf(const Vec3& p) const { return sdf(MatX(p.transpose()))(0); }
Vec3 SceneModel::sdf_gradient(const Vec3& p) const {
    return sdf_gradient(MatX(p.transpose())).row(0);
}
Vec3 SceneModel::color(const Vec3& p) const { return color(MatX(p.transpose())).row(0); }
double SceneModel::rigidity(const Vec3& p) const { return rigidity(MatX(p.transpose()))(0); }
Vec3 SceneModel::raw_offset(int frame, const Vec3& p) const {
    return raw_offset(frame, MatX(p.transpose())).row(0);
}
Vec3 SceneModel::gated_offset(int frame, const Vec3& p) const {
    return gated_offset(frame, MatX(p.transpose())).row(0);
}
Vec3 SceneModel::bend_point(int frame, const Vec3& p) const {
    return bend_point(frame, MatX(p.transpose())).row(0);
}

// ---- tape queries ----

Var SceneModel::sdf_t(Tape& t, Var P) const {
    return mlp_forward(t, params_, "sdf", cfg_.sdf_spec, enc_.encode(t, clamped_t(t, P)));
}

SceneModel::SdfGradT SceneModel::sdf_with_gradient_t(Tape& t, Var P) const {
    Var C = clamped_t(t, P);
    Var X = enc_.encode(t, C);
    std::vector<Var> Xt;
    for (int d = 0; d < 3; ++d) Xt.push_back(enc_.encode_tangent(t, C, Vec3::Unit(d)));
    auto r = mlp_forward_tangent(t, params_, "sdf", cfg_.sdf_spec, X, Xt);
    return {r.y, t.concat_cols({r.yt[0], r.yt[1], r.yt[2]})};
}

Var SceneModel::color_t(Tape& t, Var P, const Var* view_dirs) const {
    Var X = enc_.encode(t, clamped_t(t, P));
    if (cfg_.color_view_dir) {
        require(view_dirs != nullptr, "model: color net needs view directions");
        X = t.concat_cols({X, *view_dirs});
    }
    return mlp_forward(t, params_, "color", cfg_.color_spec, X);
}

Var SceneModel::rigidity_t(Tape& t, Var P) const {
    return mlp_forward(t, params_, "rigidity", cfg_.rigidity_spec,
                       enc_.encode(t, clamped_t(t, P)));
}

Var SceneModel::raw_offset_t(Tape& t, int frame, Var P) const {
    check_frame(frame);
    Var X = enc_.encode(t, clamped_t(t, P));
    Var l = t.reshape(t.param(params_, latent_name(frame)), {1, static_cast<std::size_t>(cfg_.latent_dim)});
    Var L = t.matmul(t.constant(Tensor::full({t.value(P).rows(), 1}, 1.0)), l);
    return mlp_forward(t, params_, "motion", cfg_.motion_spec, t.concat_cols({X, L}));
}

SceneModel::OffsetDivT SceneModel::raw_offset_with_divergence_t(Tape& t, int frame, Var P) const {
    check_frame(frame);
    Var C = clamped_t(t, P);
    Var X = enc_.encode(t, C);
    const std::size_t n = t.value(P).rows();
    Var l = t.reshape(t.param(params_, latent_name(frame)), {1, static_cast<std::size_t>(cfg_.latent_dim)});
    Var L = t.matmul(t.constant(Tensor::full({n, 1}, 1.0)), l);
    Var Xin = t.concat_cols({X, L});
    // Latent part is constant in p, so its tangent block is zero.
    Var Zt = t.constant(Tensor::zeros({n, static_cast<std::size_t>(cfg_.latent_dim)}));
    std::vector<Var> Xt;
    for (int d = 0; d < 3; ++d)
        Xt.push_back(t.concat_cols({enc_.encode_tangent(t, C, Vec3::Unit(d)), Zt}));
    auto r = mlp_forward_tangent(t, params_, "motion", cfg_.motion_spec, Xin, Xt);
    // div b = sum_d (J b)_dd: component d of the d-th directional tangent.
    Var div = t.add(t.slice_cols(r.yt[0], 0, 1),
                    t.add(t.slice_cols(r.yt[1], 1, 1), t.slice_cols(r.yt[2], 2, 1)));
    return {r.y, div};
}

Var SceneModel::gated_offset_t(Tape& t, int frame, Var P) const {
    Var r = rigidity_t(t, P);                 // [n,1]
    Var b = raw_offset_t(t, frame, P);        // [n,3]
    return t.mul_colvec(b, t.reshape(r, {t.value(r).rows()}));
}

Var SceneModel::bend_point_t(Tape& t, int frame, Var P) const {
    return t.add(P, gated_offset_t(t, frame, P));
}

} // namespace neusim::fields
