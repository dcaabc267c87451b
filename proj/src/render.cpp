#include "neusim/render/render.hpp"

#include "neusim/core/threading.hpp"

#include <cmath>

namespace neusim::render {

using ad::Tape;
using ad::Tensor;
using ad::Var;
using fields::FieldBackend;
using fields::SceneModel;

namespace {

double stable_sigmoid(double x) {
    return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

// Sample positions along [t_near, t_far]: n strata, center (or jittered) point
// of each stratum. Spacing is uniform.
VecX sample_ts(const Ray& ray, int n, Rng* jitter) {
    VecX ts(n);
    double dt = (ray.t_far - ray.t_near) / n;
    for (int k = 0; k < n; ++k) {
        double u = jitter ? jitter->uniform() : 0.5;
        ts(k) = ray.t_near + (k + u) * dt;
    }
    return ts;
}

} // namespace

VecX density_rho(const VecX& sdf_samples, double sharpness, const VecX& spacings) {
    const Eigen::Index n = sdf_samples.size();
    require(n >= 2, "density: need at least 2 samples");
    require(spacings.size() == n - 1, "density: need one spacing per gap");
    require(spacings.minCoeff() > 0.0, "density: spacings must be positive");
    VecX rho(n);
    for (Eigen::Index k = 0; k + 1 < n; ++k) {
        // The 1e-300 floor only matters when sigmoid underflows (points many
        // units deep inside a surface); it avoids 0/0 without moving values.
        double phi = std::max(stable_sigmoid(sharpness * sdf_samples(k)), 1e-300);
        double phin = stable_sigmoid(sharpness * sdf_samples(k + 1));
        rho(k) = std::max((phi - phin) / (spacings(k) * phi), 0.0);
    }
    rho(n - 1) = rho(n - 2);
    return rho;
}

RayWeights weights(const VecX& rho, const VecX& spacings) {
    const Eigen::Index n = rho.size();
    require(n >= 1, "weights: empty ray");
    require(spacings.size() == n - 1 || spacings.size() == n,
            "weights: need spacings for each sample (last may repeat)");
    require(rho.minCoeff() >= 0.0, "weights: densities must be nonnegative");
    RayWeights out;
    out.w.resize(n);
    double T = 1.0;
    for (Eigen::Index k = 0; k < n; ++k) {
        double dt = k < spacings.size() ? spacings(k) : spacings(spacings.size() - 1);
        double e = std::exp(-rho(k) * dt);
        double Tn = T * e;
        out.w(k) = T - Tn;  // exactly T_k (1 - e), telescopes
        T = Tn;
    }
    out.t_end = T;
    return out;
}

Vec3 render_pixel(const FieldBackend& be, int frame, const Ray& ray, const SamplingConfig& cfg,
                  Rng* jitter) {
    require(cfg.n_samples >= 2, "render: need at least 2 samples per ray");
    const int n = cfg.n_samples;
    VecX ts = sample_ts(ray, n, cfg.jitter ? jitter : nullptr);
    MatX P(n, 3);
    for (int k = 0; k < n; ++k) P.row(k) = (ray.o + ts(k) * ray.v).transpose();
    MatX bent = be.bend_point(frame, P);
    VecX s = be.sdf(bent);
    MatX c = be.color(bent);
    VecX dts = ts.tail(n - 1) - ts.head(n - 1);
    VecX rho = density_rho(s, be.sharpness(), dts);
    RayWeights rw = weights(rho, dts);
    Vec3 out = rw.t_end * cfg.background;
    for (int k = 0; k < n; ++k) out += rw.w(k) * Vec3(c.row(k));
    return out;
}

Image render_image(const FieldBackend& be, int frame, const Camera& cam,
                   const SamplingConfig& cfg) {
    cam.validate();
    Image img(cam.width, cam.height);
    const std::size_t npx = static_cast<std::size_t>(cam.width) * cam.height;
    parallel_for_ranges(npx, [&](std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i) {
            int x = static_cast<int>(i % cam.width);
            int y = static_cast<int>(i / cam.width);
            // Per-pixel stream keyed by pixel and frame: thread-count invariant.
            Rng rng(cfg.seed + i, static_cast<std::uint64_t>(frame) * 2 + 1);
            img.set(x, y, render_pixel(be, frame, cam.generate_ray(x, y), cfg, &rng));
        }
    });
    return img;
}

RenderGraph build_render_graph(Tape& t, const SceneModel& model, int frame,
                               const std::vector<Ray>& rays, const SamplingConfig& cfg,
                               Rng* jitter) {
    require(!rays.empty(), "render: empty ray batch");
    require(cfg.n_samples >= 2, "render: need at least 2 samples per ray");
    const std::size_t R = rays.size(), n = static_cast<std::size_t>(cfg.n_samples);

    RenderGraph g;
    g.n_rays = R;
    g.n_samples = n;

    Tensor P({R * n, 3});
    Tensor dts({R, n});
    for (std::size_t r = 0; r < R; ++r) {
        VecX ts = sample_ts(rays[r], cfg.n_samples, cfg.jitter ? jitter : nullptr);
        const double dt = (rays[r].t_far - rays[r].t_near) / cfg.n_samples;
        for (std::size_t k = 0; k < n; ++k) {
            Vec3 p = rays[r].o + ts(static_cast<Eigen::Index>(k)) * rays[r].v;
            for (int d = 0; d < 3; ++d) P.data()[(r * n + k) * 3 + d] = p[d];
            // Stratified samples keep strictly positive gaps <= 2*dt; the
            // uniform stratum width is the right quadrature spacing.
            dts.data()[r * n + k] =
                k + 1 < n ? ts(static_cast<Eigen::Index>(k) + 1) - ts(static_cast<Eigen::Index>(k))
                          : dt;
        }
    }

    g.points = t.constant(std::move(P));
    g.bent = model.bend_point_t(t, frame, g.points);
    Var s_col = model.sdf_t(t, g.bent);            // [R*n, 1]
    g.sdf = t.reshape(s_col, {R, n});
    Var c = model.color_t(t, g.bent);              // [R*n, 3]

    Var h = model.sharpness_t(t);
    Var phi = t.sigmoid(t.scale_by(g.sdf, h));     // [R, n]
    Var phi_head = t.slice_cols(phi, 0, n - 1);
    Var num = t.sub(phi_head, t.slice_cols(phi, 1, n - 1));
    Var dt_head = t.constant([&] {
        Tensor d({R, n - 1});
        for (std::size_t r = 0; r < R; ++r)
            for (std::size_t k = 0; k + 1 < n; ++k) d.data()[r * (n - 1) + k] = dts.data()[r * n + k];
        return d;
    }());
    Var rho_head = t.relu(t.div(num, t.mul(dt_head, t.offset(phi_head, 1e-300))));  // [R, n-1]
    Var rho = t.concat_cols({rho_head, t.slice_cols(rho_head, n - 2, 1)});

    Var dt_all = t.constant(dts);
    Var opt_depth = t.mul(rho, dt_all);
    Var T = t.vexp(t.neg(t.cumsum_exclusive(opt_depth)));  // [R, n]
    Var alpha = t.offset(t.neg(t.vexp(t.neg(opt_depth))), 1.0);
    g.weights = t.mul(T, alpha);
    g.weight_sum = t.sum_rows(g.weights);  // [R, 1]

    // Composite: rgb_r = sum_k w_rk c_rk + (1 - sum_k w_rk) * background.
    Var w_flat = t.reshape(g.weights, {R * n});
    Var wc = t.mul_colvec(c, w_flat);        // [R*n, 3]
    Var fg = t.segment_sum_rows(wc, n);      // [R, 3]
    Tensor bg({1, 3});
    for (int d = 0; d < 3; ++d) bg.data()[d] = cfg.background[d];
    Var t_end = t.offset(t.neg(g.weight_sum), 1.0);             // [R,1]
    Var bg_part = t.matmul(t_end, t.constant(std::move(bg)));   // [R,3]
    g.rgb = t.add(fg, bg_part);
    return g;
}

} // namespace neusim::render
