#include "neusim/sim/fem.hpp"

#include <json.hpp>

#include <Eigen/Cholesky>
#include <Eigen/SVD>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

namespace neusim::sim {

void PhysicsParams::validate() const {
    require(youngs_modulus > 0 && std::isfinite(youngs_modulus),
            "physics: Young's modulus must be positive");
    require(poisson_ratio > -1.0 && poisson_ratio < 0.5,
            "physics: Poisson ratio must lie strictly inside (-1, 0.5)");
    require(mass_density > 0, "physics: mass density must be positive");
    require(contact_stiffness >= 0, "physics: contact stiffness must be >= 0");
    require(external_acceleration.allFinite(), "physics: acceleration must be finite");
}

void SimConfig::validate() const {
    require(h > 0 && std::isfinite(h), "sim config: timestep must be positive");
    require(substeps >= 1, "sim config: substeps must be >= 1");
    require(newton_max_iters >= 1, "sim config: newton_max_iters must be >= 1");
    if (ground) require(ground->normal.norm() > 0, "sim config: ground normal must be nonzero");
}

std::pair<double, double> lame_params(double youngs_modulus, double poisson_ratio) {
    require(youngs_modulus > 0, "lame: Young's modulus must be positive");
    require(poisson_ratio > -1.0 && poisson_ratio < 0.5,
            "lame: Poisson ratio must lie strictly inside (-1, 0.5)");
    double mu = youngs_modulus / (2.0 * (1.0 + poisson_ratio));
    double lambda = youngs_modulus * poisson_ratio /
                    ((1.0 + poisson_ratio) * (1.0 - 2.0 * poisson_ratio));
    return {mu, lambda};
}

const std::array<std::array<int, 4>, 5>& hex_tet_pattern() {
    static const std::array<std::array<int, 4>, 5> pattern = {
        {{0, 1, 2, 4}, {3, 1, 2, 7}, {5, 1, 4, 7}, {6, 2, 4, 7}, {1, 2, 4, 7}}};
    return pattern;
}

namespace {

Mat3 edge_matrix(const MatX& Q, const std::array<int, 4>& t) {
    Mat3 D;
    Vec3 p0 = Q.row(t[0]);
    for (int c = 0; c < 3; ++c) D.col(c) = Vec3(Q.row(t[c + 1])) - p0;
    return D;
}

// Signed SVD of F with rotation factors: det(U) = det(V) = +1, the smallest
// singular value carrying any reflection sign. R = U V^T is the polar rotation.
struct TetDecomp {
    Mat3 F, R, U, V;
    Vec3 sig;
    double trace_rtf;  // tr(R^T F)
};

TetDecomp decompose(const Mat3& F) {
    Eigen::JacobiSVD<Mat3> svd(F, Eigen::ComputeFullU | Eigen::ComputeFullV);
    TetDecomp d;
    d.F = F;
    d.U = svd.matrixU();
    d.V = svd.matrixV();
    d.sig = svd.singularValues();
    if (d.U.determinant() < 0) {
        d.U.col(2) *= -1;
        d.sig(2) *= -1;
    }
    if (d.V.determinant() < 0) {
        d.V.col(2) *= -1;
        d.sig(2) *= -1;
    }
    d.R = d.U * d.V.transpose();
    d.trace_rtf = (d.R.transpose() * F).trace();
    return d;
}

// Variation of the polar rotation along dF, from the SVD pair equations.
Mat3 rotation_variation(const TetDecomp& d, const Mat3& dF) {
    Mat3 dFh = d.U.transpose() * dF * d.V;
    auto guarded = [&](double denom) {
        double floor = 1e-8 * std::max(1.0, std::abs(d.sig(0)));
        if (std::abs(denom) < floor) return denom < 0 ? -floor : floor;
        return denom;
    };
    double w01 = (dFh(0, 1) - dFh(1, 0)) / guarded(d.sig(0) + d.sig(1));
    double w02 = (dFh(0, 2) - dFh(2, 0)) / guarded(d.sig(0) + d.sig(2));
    double w12 = (dFh(1, 2) - dFh(2, 1)) / guarded(d.sig(1) + d.sig(2));
    Mat3 W;
    W << 0, w01, w02, -w01, 0, w12, -w02, -w12, 0;
    return d.U * W * d.V.transpose();
}

// grad E split by Lame coefficient: grad = mu * g_mu + lambda * g_lam, each
// flattened as (vertex, coord) -> 3i + c.
void elastic_gradients(const SimSystem& sys, const MatX& Q, VecX& g_mu, VecX& g_lam) {
    const Eigen::Index n = 3 * Q.rows();
    g_mu = VecX::Zero(n);
    g_lam = VecX::Zero(n);
    for (std::size_t t = 0; t < sys.tets.size(); ++t) {
        const auto& tet = sys.tets[t];
        TetDecomp d = decompose(edge_matrix(Q, tet) * sys.inv_rest_shape[t]);
        double g = d.trace_rtf - 3.0;
        Mat3 p_mu = 2.0 * (d.F - d.R);
        Mat3 p_lam = g * d.R;
        Mat3 h_mu = sys.rest_volume[t] * p_mu * sys.inv_rest_shape[t].transpose();
        Mat3 h_lam = sys.rest_volume[t] * p_lam * sys.inv_rest_shape[t].transpose();
        for (int k = 0; k < 3; ++k) {
            for (int c = 0; c < 3; ++c) {
                g_mu(3 * tet[k + 1] + c) += h_mu(c, k);
                g_lam(3 * tet[k + 1] + c) += h_lam(c, k);
                g_mu(3 * tet[0] + c) -= h_mu(c, k);
                g_lam(3 * tet[0] + c) -= h_lam(c, k);
            }
        }
    }
}

// Exact energy Hessian times the element structure, assembled dense.
void add_elastic_hessian(const SimSystem& sys, const MatX& Q, MatX& H) {
    for (std::size_t t = 0; t < sys.tets.size(); ++t) {
        const auto& tet = sys.tets[t];
        const Mat3& Bm = sys.inv_rest_shape[t];
        TetDecomp d = decompose(edge_matrix(Q, tet) * Bm);
        double g = d.trace_rtf - 3.0;
        double vol = sys.rest_volume[t];
        // Column of the element stiffness for a unit displacement of corner a
        // along coordinate c.
        for (int a = 0; a < 4; ++a) {
            Eigen::RowVector3d brow = a == 0
                                          ? Eigen::RowVector3d(-(Bm.row(0) + Bm.row(1) + Bm.row(2)))
                                          : Eigen::RowVector3d(Bm.row(a - 1));
            for (int c = 0; c < 3; ++c) {
                Mat3 dF = Vec3::Unit(c) * brow;
                Mat3 dR = rotation_variation(d, dF);
                Mat3 dP = 2.0 * sys.mu * dF +
                          sys.lambda * (d.R.cwiseProduct(dF).sum()) * d.R +
                          (sys.lambda * g - 2.0 * sys.mu) * dR;
                Mat3 dGrad = vol * dP * Bm.transpose();
                Vec3 col0 = -(dGrad.col(0) + dGrad.col(1) + dGrad.col(2));
                for (int dc = 0; dc < 3; ++dc) {
                    H(3 * tet[0] + dc, 3 * tet[a] + c) += col0(dc);
                    for (int b = 1; b < 4; ++b)
                        H(3 * tet[b] + dc, 3 * tet[a] + c) += dGrad(dc, b - 1);
                }
            }
        }
    }
}

struct SolveScratch {
    std::vector<int> free_dofs;           // flat dof ids not pinned
    std::vector<char> pinned_mask;        // per vertex
};

SolveScratch make_scratch(const SimSystem& sys, const SimConfig& cfg) {
    SolveScratch s;
    s.pinned_mask.assign(sys.n_vertices(), 0);
    for (int p : cfg.pinned) {
        require(p >= 0 && p < int(sys.n_vertices()), "sim config: pinned vertex out of range");
        s.pinned_mask[p] = 1;
    }
    s.free_dofs.reserve(3 * sys.n_vertices());
    for (std::size_t i = 0; i < sys.n_vertices(); ++i)
        if (!s.pinned_mask[i])
            for (int c = 0; c < 3; ++c) s.free_dofs.push_back(int(3 * i + c));
    return s;
}

// Residual of the implicit step at candidate positions X (rows), given the
// start state (Q, Qdot). Pinned rows are identically zero.
VecX residual(const SimSystem& sys, const SimConfig& cfg, const PhysicsParams& params,
              const SolveScratch& scratch, const MatX& Q, const MatX& Qdot, const MatX& X) {
    const double h = cfg.h;
    VecX g_mu, g_lam;
    elastic_gradients(sys, X, g_mu, g_lam);
    VecX G = sys.mu * g_mu + sys.lambda * g_lam;
    for (std::size_t i = 0; i < sys.n_vertices(); ++i) {
        Vec3 inertial = Vec3(X.row(i)) - Vec3(Q.row(i)) - h * Vec3(Qdot.row(i));
        Vec3 ext = sys.mass(i) * params.external_acceleration;
        if (cfg.ground) {
            Vec3 n = cfg.ground->normal.normalized();
            double phi = n.dot(Vec3(X.row(i)) - cfg.ground->point);
            if (phi < 0) ext += -params.contact_stiffness * phi * n;
        }
        for (int c = 0; c < 3; ++c) {
            G(3 * i + c) = sys.mass(i) * inertial(c) + h * h * (G(3 * i + c) - ext(c));
            if (scratch.pinned_mask[i]) G(3 * i + c) = 0.0;
        }
    }
    return G;
}

// Full dense step Jacobian dG/dX (pinned rows/cols included; callers slice).
MatX step_jacobian(const SimSystem& sys, const SimConfig& cfg, const PhysicsParams& params,
                   const MatX& X) {
    const double h = cfg.h;
    const Eigen::Index n = 3 * X.rows();
    MatX H = MatX::Zero(n, n);
    add_elastic_hessian(sys, X, H);
    MatX J = h * h * H;
    for (std::size_t i = 0; i < sys.n_vertices(); ++i) {
        for (int c = 0; c < 3; ++c) J(3 * i + c, 3 * i + c) += sys.mass(i);
        if (cfg.ground) {
            Vec3 nrm = cfg.ground->normal.normalized();
            double phi = nrm.dot(Vec3(X.row(i)) - cfg.ground->point);
            if (phi < 0)
                J.block<3, 3>(3 * i, 3 * i) +=
                    h * h * params.contact_stiffness * (nrm * nrm.transpose());
        }
    }
    return J;
}

MatX slice(const MatX& J, const std::vector<int>& rows, const std::vector<int>& cols) {
    MatX out(rows.size(), cols.size());
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (std::size_t c = 0; c < cols.size(); ++c) out(r, c) = J(rows[r], cols[c]);
    return out;
}

VecX gather(const VecX& v, const std::vector<int>& idx) {
    VecX out(idx.size());
    for (std::size_t k = 0; k < idx.size(); ++k) out(k) = v(idx[k]);
    return out;
}

} // namespace

SimSystem build_system(const geom::HexMesh& mesh, const PhysicsParams& params) {
    params.validate();
    require(mesh.n_hexes() > 0, "sim: mesh has no hexes");
    require(mesh.rest_vertices.rows() == mesh.vertices.rows(), "sim: rest positions required");

    SimSystem sys;
    sys.mesh = mesh;
    sys.rest = mesh.rest_vertices;
    std::tie(sys.mu, sys.lambda) = lame_params(params.youngs_modulus, params.poisson_ratio);
    sys.mass = VecX::Zero(sys.rest.rows());

    for (std::size_t e = 0; e < mesh.n_hexes(); ++e) {
        for (const auto& local : hex_tet_pattern()) {
            std::array<int, 4> t;
            for (int k = 0; k < 4; ++k) t[k] = mesh.hexes(Eigen::Index(e), local[k]);
            Mat3 D = edge_matrix(sys.rest, t);
            double vol6 = D.determinant();
            if (vol6 < 0) {  // reorient so every rest tet is positive
                std::swap(t[2], t[3]);
                D = edge_matrix(sys.rest, t);
                vol6 = D.determinant();
            }
            double vol = vol6 / 6.0;
            require(vol > 1e-18, "sim: degenerate rest tet");
            sys.tets.push_back(t);
            sys.rest_volume.push_back(vol);
            sys.inv_rest_shape.push_back(D.inverse());
            sys.total_volume += vol;
            for (int k = 0; k < 4; ++k) sys.mass(t[k]) += params.mass_density * vol / 4.0;
        }
    }
    require((sys.mass.array() > 0).all(), "sim: every vertex needs mass");
    return sys;
}

double elastic_energy(const SimSystem& sys, const MatX& Q) {
    require(Q.rows() == sys.rest.rows() && Q.cols() == 3, "energy: bad shape");
    require(Q.allFinite(), "energy: positions must be finite");
    double total = 0.0;
    for (std::size_t t = 0; t < sys.tets.size(); ++t) {
        TetDecomp d = decompose(edge_matrix(Q, sys.tets[t]) * sys.inv_rest_shape[t]);
        double g = d.trace_rtf - 3.0;
        total += sys.rest_volume[t] *
                 (sys.mu * (d.F - d.R).squaredNorm() + 0.5 * sys.lambda * g * g);
    }
    return total;
}

namespace {

MatX newton_solve(const SimSystem& sys, const SimConfig& cfg, const PhysicsParams& params,
                  const SolveScratch& scratch, const MatX& Q, const MatX& Qdot) {
    const double h = cfg.h;
    const double tol = cfg.resolved_tol(sys.n_vertices());
    MatX X = Q;
    for (std::size_t i = 0; i < sys.n_vertices(); ++i)
        if (!scratch.pinned_mask[i]) X.row(i) += h * Qdot.row(i);  // inertial predictor

    VecX G = residual(sys, cfg, params, scratch, Q, Qdot, X);
    double gnorm = gather(G, scratch.free_dofs).norm();
    for (int it = 0; it < cfg.newton_max_iters; ++it) {
        if (gnorm <= tol) return X;
        MatX J = step_jacobian(sys, cfg, params, X);
        MatX Jff = slice(J, scratch.free_dofs, scratch.free_dofs);
        Eigen::LDLT<MatX> ldlt(Jff);
        VecX rhs = -gather(G, scratch.free_dofs);
        VecX delta = ldlt.solve(rhs);
        if (ldlt.info() != Eigen::Success || !delta.allFinite())
            throw std::runtime_error("sim step: singular step Jacobian");

        double alpha = 1.0;
        MatX X_try;
        VecX G_try;
        double g_try = 0;
        for (int bt = 0; bt < 9; ++bt) {
            X_try = X;
            for (std::size_t k = 0; k < scratch.free_dofs.size(); ++k) {
                int dof = scratch.free_dofs[k];
                X_try(dof / 3, dof % 3) += alpha * delta(k);
            }
            G_try = residual(sys, cfg, params, scratch, Q, Qdot, X_try);
            g_try = gather(G_try, scratch.free_dofs).norm();
            if (g_try < gnorm || bt == 8) break;
            alpha *= 0.5;
        }
        X = X_try;
        G = G_try;
        gnorm = g_try;
    }
    if (gnorm <= tol) return X;
    throw std::runtime_error("sim step: Newton did not converge, residual " +
                             std::to_string(gnorm) + " > tol " + std::to_string(tol));
}

} // namespace

SimState step(const SimSystem& sys, const SimState& state, const PhysicsParams& params,
              const SimConfig& cfg) {
    params.validate();
    cfg.validate();
    require(state.Q.rows() == sys.rest.rows() && state.Qdot.rows() == sys.rest.rows(),
            "sim step: state shape mismatch");
    require(state.Q.allFinite() && state.Qdot.allFinite(), "sim step: state must be finite");
    SolveScratch scratch = make_scratch(sys, cfg);
    MatX X = newton_solve(sys, cfg, params, scratch, state.Q, state.Qdot);
    SimState next;
    next.Q = X;
    next.Qdot = (X - state.Q) / cfg.h;
    for (std::size_t i = 0; i < sys.n_vertices(); ++i)
        if (scratch.pinned_mask[i]) next.Qdot.row(i).setZero();
    return next;
}

std::vector<SimState> simulate(const SimSystem& sys, const SimState& state0,
                               const PhysicsParams& params, const SimConfig& cfg, int n_frames) {
    require(n_frames >= 1, "simulate: need at least one frame");
    std::vector<SimState> out;
    out.reserve(n_frames);
    SimState s = state0;
    for (int f = 1; f <= n_frames; ++f) {
        try {
            for (int sub = 0; sub < cfg.substeps; ++sub) s = step(sys, s, params, cfg);
        } catch (const std::exception& e) {
            throw std::runtime_error("simulate: frame " + std::to_string(f) + ": " + e.what());
        }
        out.push_back(s);
    }
    return out;
}

AdjointResult simulate_adjoint(const SimSystem& sys, const SimState& state0,
                               const PhysicsParams& params, const SimConfig& cfg, int n_frames,
                               const TrajectoryLossFn& loss) {
    require(n_frames >= 1, "adjoint: need at least one frame");
    params.validate();
    cfg.validate();
    SolveScratch scratch = make_scratch(sys, cfg);
    const double h = cfg.h;
    const std::size_t n_v = sys.n_vertices();

    // Forward pass, retaining every substep state.
    std::vector<SimState> sub_states;
    sub_states.reserve(std::size_t(n_frames) * cfg.substeps + 1);
    sub_states.push_back(state0);
    std::vector<SimState> recorded;
    for (int f = 1; f <= n_frames; ++f) {
        for (int sub = 0; sub < cfg.substeps; ++sub)
            sub_states.push_back(step(sys, sub_states.back(), params, cfg));
        recorded.push_back(sub_states.back());
    }

    TrajectoryLoss L = loss(recorded);
    require(L.dQ.size() == recorded.size() && L.dQdot.size() == recorded.size(),
            "adjoint: loss must provide one gradient per recorded frame");

    AdjointResult out;
    out.loss = L.value;
    out.trajectory = recorded;

    MatX qbar = MatX::Zero(n_v, 3), vbar = MatX::Zero(n_v, 3);
    double d_mu = 0, d_lambda = 0;

    const std::size_t T = sub_states.size() - 1;
    for (std::size_t s = T; s >= 1; --s) {
        if (s % std::size_t(cfg.substeps) == 0) {
            std::size_t f = s / cfg.substeps - 1;
            qbar += L.dQ[f];
            vbar += L.dQdot[f];
        }
        const MatX& X = sub_states[s].Q;
        const MatX& Q = sub_states[s - 1].Q;

        VecX xbar = VecX::Zero(3 * n_v);
        for (std::size_t i = 0; i < n_v; ++i)
            for (int c = 0; c < 3; ++c)
                xbar(3 * i + c) =
                    scratch.pinned_mask[i] ? 0.0 : qbar(i, c) + vbar(i, c) / h;

        MatX J = step_jacobian(sys, cfg, params, X);
        MatX Jff = slice(J, scratch.free_dofs, scratch.free_dofs);
        Eigen::LDLT<MatX> ldlt(Jff);
        VecX lam_f = ldlt.solve(gather(xbar, scratch.free_dofs));
        if (ldlt.info() != Eigen::Success || !lam_f.allFinite())
            throw std::runtime_error("adjoint: singular step Jacobian");
        VecX lam = VecX::Zero(3 * n_v);
        for (std::size_t k = 0; k < scratch.free_dofs.size(); ++k)
            lam(scratch.free_dofs[k]) = lam_f(k);

        // Parameter terms: G carries +h^2 grad E and -h^2 M a on free rows.
        VecX g_mu, g_lam;
        elastic_gradients(sys, X, g_mu, g_lam);
        for (std::size_t i = 0; i < n_v; ++i)
            for (int c = 0; c < 3; ++c) {
                double l = lam(3 * i + c);
                d_mu -= h * h * l * g_mu(3 * i + c);
                d_lambda -= h * h * l * g_lam(3 * i + c);
                out.d_accel(c) += h * h * sys.mass(i) * l;
            }

        // Upstream state gradients.
        MatX qbar_new = MatX::Zero(n_v, 3), vbar_new = MatX::Zero(n_v, 3);
        for (std::size_t i = 0; i < n_v; ++i) {
            if (scratch.pinned_mask[i]) {
                // x_p = q_p feeds the free residual rows through elastic coupling.
                for (int c = 0; c < 3; ++c) {
                    double acc = qbar(i, c);  // identity carry q+_p = q_p
                    for (int fd : scratch.free_dofs) acc -= J(fd, 3 * i + c) * lam(fd);
                    qbar_new(i, c) = acc;
                }
            } else {
                for (int c = 0; c < 3; ++c) {
                    qbar_new(i, c) = sys.mass(i) * lam(3 * i + c) - vbar(i, c) / h;
                    vbar_new(i, c) = h * sys.mass(i) * lam(3 * i + c);
                }
            }
        }
        qbar = qbar_new;
        vbar = vbar_new;
    }

    out.d_Q0 = qbar;
    out.d_Qdot0 = vbar;

    // Chain Lame coefficients back to the material parameters.
    const double E = params.youngs_modulus, nu = params.poisson_ratio;
    double dmu_dE = 1.0 / (2.0 * (1.0 + nu));
    double dlam_dE = nu / ((1.0 + nu) * (1.0 - 2.0 * nu));
    double dmu_dnu = -E / (2.0 * (1.0 + nu) * (1.0 + nu));
    double denom = (1.0 + nu) * (1.0 - 2.0 * nu);
    double dlam_dnu = E * (1.0 + 2.0 * nu * nu) / (denom * denom);
    out.d_youngs = d_mu * dmu_dE + d_lambda * dlam_dE;
    out.d_poisson = d_mu * dmu_dnu + d_lambda * dlam_dnu;
    return out;
}

void export_trajectory(const std::string& dir, const SimSystem& sys,
                       const std::vector<SimState>& trajectory, const PhysicsParams& params,
                       const SimConfig& cfg) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    nlohmann::json manifest;
    manifest["h"] = cfg.h;
    manifest["substeps"] = cfg.substeps;
    manifest["params"] = {{"youngs_modulus", params.youngs_modulus},
                          {"poisson_ratio", params.poisson_ratio},
                          {"mass_density", params.mass_density},
                          {"contact_stiffness", params.contact_stiffness},
                          {"external_acceleration",
                           {params.external_acceleration.x(), params.external_acceleration.y(),
                            params.external_acceleration.z()}}};
    manifest["frames"] = nlohmann::json::array();
    for (std::size_t f = 0; f < trajectory.size(); ++f) {
        char name[32];
        std::snprintf(name, sizeof name, "frame%04zu.vtk", f + 1);
        geom::HexMesh m = sys.mesh;
        m.vertices = trajectory[f].Q;
        geom::write_vtk((fs::path(dir) / name).string(), m);
        manifest["frames"].push_back({{"frame", f + 1}, {"file", name}});
    }
    std::ofstream out(fs::path(dir) / "manifest.json");
    require(out.good(), "trajectory export: cannot open manifest");
    out << manifest.dump(2) << "\n";
}

} // namespace neusim::sim
