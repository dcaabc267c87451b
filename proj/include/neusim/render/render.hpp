#pragma once

#include "neusim/ad/tape.hpp"
#include "neusim/core/rng.hpp"
#include "neusim/fields/backend.hpp"
#include "neusim/render/camera.hpp"
#include "neusim/render/image.hpp"

#include <vector>

namespace neusim::render {

struct SamplingConfig {
    int n_samples = 64;
    bool jitter = false;
    Vec3 background = Vec3::Zero();
    std::uint64_t seed = 0;  // jitter stream; ignored when jitter is off
};

// Discretized ray density from SDF samples along a ray:
//   phi_k = sigmoid(h * s_k),  rho_k = max((phi_k - phi_{k+1}) / (dt_k * phi_k), 0)
// with the last sample repeating the previous rho. `spacings` holds the n-1
// gaps between the n samples.
VecX density_rho(const VecX& sdf_samples, double sharpness, const VecX& spacings);

// Alpha-compositing weights; T_end = residual transmittance. Computed in the
// telescoping form w_k = T_k - T_k e^{-rho_k dt_k}, so sum(w) + T_end = 1 to
// machine precision. The last sample reuses the final spacing.
struct RayWeights {
    VecX w;
    double t_end = 1.0;
};
RayWeights weights(const VecX& rho, const VecX& spacings);

Vec3 render_pixel(const fields::FieldBackend& be, int frame, const Ray& ray,
                  const SamplingConfig& cfg, Rng* jitter = nullptr);

Image render_image(const fields::FieldBackend& be, int frame, const Camera& cam,
                   const SamplingConfig& cfg);

// Differentiable rendering of a ray batch for training. Exposes the
// intermediate nodes the loss terms reuse (sample points, bent points, SDF).
struct RenderGraph {
    ad::Var points;      // [R*n, 3] constant sample points, ray-major
    ad::Var bent;        // [R*n, 3] reference-frame points
    ad::Var sdf;         // [R, n]
    ad::Var weights;     // [R, n]
    ad::Var weight_sum;  // [R, 1]
    ad::Var rgb;         // [R, 3] composited colors
    std::size_t n_rays = 0;
    std::size_t n_samples = 0;
};
RenderGraph build_render_graph(ad::Tape& t, const fields::SceneModel& model, int frame,
                               const std::vector<Ray>& rays, const SamplingConfig& cfg,
                               Rng* jitter = nullptr);

} // namespace neusim::render
