#pragma once

#include "neusim/geom/hexmesh.hpp"

#include <array>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace neusim::sim {

struct PhysicsParams {
    double youngs_modulus = 2e5;        // Pa
    double poisson_ratio = 0.45;
    double mass_density = 1000.0;       // kg/m^3
    Vec3 external_acceleration = Vec3::Zero();  // m/s^2
    double contact_stiffness = 1e5;     // N/m per vertex

    void validate() const;
};

// mu = E/(2(1+nu)), lambda = E*nu/((1+nu)(1-2nu)); nu -> 0.5 rejected.
std::pair<double, double> lame_params(double youngs_modulus, double poisson_ratio);

struct SimState {
    MatX Q;     // n_v x 3 positions (m)
    MatX Qdot;  // n_v x 3 velocities (m/s)
};

struct GroundPlane {
    Vec3 point = Vec3::Zero();
    Vec3 normal = Vec3(0, 1, 0);
};

struct SimConfig {
    double h = 1.0 / 96.0;   // one implicit-Euler step (s); a video frame spans h*substeps
    int substeps = 4;
    int newton_max_iters = 20;
    double newton_tol = 0.0;  // residual norm; <= 0 picks 1e-8 * n_v
    std::optional<GroundPlane> ground;
    std::vector<int> pinned;

    void validate() const;
    double resolved_tol(std::size_t n_v) const {
        return newton_tol > 0 ? newton_tol : 1e-8 * double(n_v);
    }
};

// Rest mesh discretized into 5 linear tets per hex (corner tets {0,1,2,4},
// {3,1,2,7}, {5,1,4,7}, {6,2,4,7} and center {1,2,4,7} in x-fastest binary
// corner order; negatively oriented tets get two indices swapped so every
// rest volume is positive). Mass lumping: tet volume * density / 4 per corner.
struct SimSystem {
    geom::HexMesh mesh;                     // rest topology; rest_vertices set
    MatX rest;                              // n_v x 3
    std::vector<std::array<int, 4>> tets;
    std::vector<double> rest_volume;
    std::vector<Mat3> inv_rest_shape;       // per tet, inverse of rest edge matrix
    VecX mass;                              // n_v lumped masses (kg)
    double mu = 0, lambda = 0;              // Lame coefficients
    double total_volume = 0;

    std::size_t n_vertices() const { return std::size_t(rest.rows()); }
};

// The local tet corner pattern above, shared with mesh editing.
const std::array<std::array<int, 4>, 5>& hex_tet_pattern();

SimSystem build_system(const geom::HexMesh& mesh, const PhysicsParams& params);

// Co-rotated elastic energy: sum over tets of
// V * ( mu*||F - R||_F^2 + lambda/2 * tr(R^T F - I)^2 ), R the polar rotation.
double elastic_energy(const SimSystem& system, const MatX& Q);

// One implicit-Euler step of length cfg.h: Newton's method on
// M(Q+ - Q - h Qdot) + h^2 (grad E(Q+) - f_contact(Q+) - M a) = 0,
// then Qdot+ = (Q+ - Q)/h. Pinned vertices stay fixed with zero velocity.
SimState step(const SimSystem& system, const SimState& state, const PhysicsParams& params,
              const SimConfig& cfg);

// cfg.substeps steps per recorded frame; returns n_frames recorded states.
std::vector<SimState> simulate(const SimSystem& system, const SimState& state0,
                               const PhysicsParams& params, const SimConfig& cfg, int n_frames);

// Loss over a recorded trajectory, with gradients w.r.t. every recorded state.
struct TrajectoryLoss {
    double value = 0;
    std::vector<MatX> dQ;
    std::vector<MatX> dQdot;
};
using TrajectoryLossFn = std::function<TrajectoryLoss(const std::vector<SimState>&)>;

struct AdjointResult {
    double loss = 0;
    double d_youngs = 0;
    double d_poisson = 0;
    Vec3 d_accel = Vec3::Zero();
    MatX d_Q0, d_Qdot0;
    std::vector<SimState> trajectory;
};

// Reverse pass through every implicit step via the implicit function theorem:
// per step solve the (symmetric) linearized system once more against the
// incoming adjoint; exact up to solver tolerance.
AdjointResult simulate_adjoint(const SimSystem& system, const SimState& state0,
                               const PhysicsParams& params, const SimConfig& cfg, int n_frames,
                               const TrajectoryLossFn& loss);

// One VTK hex file per frame plus a JSON manifest (frame -> file, h, params).
void export_trajectory(const std::string& dir, const SimSystem& system,
                       const std::vector<SimState>& trajectory, const PhysicsParams& params,
                       const SimConfig& cfg);

} // namespace neusim::sim
