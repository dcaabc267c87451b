#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "neusim/ad/checkpoint.hpp"
#include "neusim/ad/grad_check.hpp"
#include "neusim/fields/backend.hpp"
#include "neusim/fields/scene_model.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>

using namespace neusim;
using namespace neusim::fields;

namespace {

ModelConfig tiny_config(int n_frames = 2) {
    ModelConfig cfg;
    cfg.n_frames = n_frames;
    cfg.enc_bands = 3;
    cfg.latent_dim = 4;
    cfg.sdf_spec = {2, 12, Act::softplus100, OutAct::none};
    cfg.color_spec = {2, 10, Act::relu, OutAct::sigmoid};
    cfg.motion_spec = {2, 8, Act::relu, OutAct::none};
    cfg.rigidity_spec = {2, 6, Act::relu, OutAct::sigmoid};
    cfg.seed = 11;
    return cfg;
}

MatX random_points(Rng& rng, int n, double lo = -1.0, double hi = 1.0) {
    MatX P(n, 3);
    for (int i = 0; i < n; ++i)
        for (int k = 0; k < 3; ++k) P(i, k) = rng.uniform(lo, hi);
    return P;
}

AnalyticFields sphere_scene(double radius, const Vec3& t = Vec3::Zero(), double rigid = 1.0) {
    AnalyticFields f;
    f.n_frames = 3;
    f.sdf = [radius](const Vec3& p) { return analytic::sphere_sdf(p, Vec3::Zero(), radius); };
    f.color = [](const Vec3&) { return Vec3(1.0, 0.0, 0.0); };
    f.rigidity = [rigid](const Vec3&) { return rigid; };
    f.offset = [t](int frame, const Vec3&) { return (frame * t).eval(); };
    return f;
}

} // namespace

TEST_CASE("encoding: dimension and determinism") {
    FrequencyEncoding enc{6};
    CHECK(enc.dim() == 3 * (1 + 2 * 6));
    Rng rng(3);
    MatX P = random_points(rng, 5);
    MatX a = enc.encode(P), b = enc.encode(P);
    CHECK(std::memcmp(a.data(), b.data(), sizeof(double) * a.size()) == 0);
    // First 3 columns are the identity part.
    CHECK((a.block(0, 0, 5, 3) - P).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("encoding: tangent matches finite differences") {
    FrequencyEncoding enc{4};
    Rng rng(9);
    MatX P = random_points(rng, 4);
    const double h = 1e-6;
    for (int d = 0; d < 3; ++d) {
        MatX Pp = P, Pm = P;
        Pp.col(d).array() += h;
        Pm.col(d).array() -= h;
        MatX fd = (enc.encode(Pp) - enc.encode(Pm)) / (2.0 * h);
        MatX an = enc.encode_tangent(P, Vec3::Unit(d));
        CHECK((fd - an).cwiseAbs().maxCoeff() < 1e-7);
    }
}

TEST_CASE("sdf: analytic sphere values") {
    AnalyticBackend be(sphere_scene(0.5));
    CHECK(be.sdf_at(Vec3(0, 0, 0)) == doctest::Approx(-0.5));
    CHECK(be.sdf_at(Vec3(0.5, 0, 0)) == doctest::Approx(0.0));
    CHECK(be.sdf_at(Vec3(0, 0.9, 0)) == doctest::Approx(0.4));
}

TEST_CASE("sdf: untrained network is finite with finite gradient") {
    SceneModel model(tiny_config());
    Rng rng(21);
    MatX P = random_points(rng, 64, -1.5, 1.5);  // includes out-of-bounds points
    VecX s = model.sdf(P);
    MatX g = model.sdf_gradient(P);
    CHECK(s.allFinite());
    CHECK(g.allFinite());
}

TEST_CASE("sdf: geometric initialization is negative inside, positive far out") {
    ModelConfig cfg;  // full-size defaults
    cfg.n_frames = 1;
    cfg.seed = 0;
    SceneModel model(cfg);
    CHECK(model.sdf(Vec3(0, 0, 0)) < 0.0);
    CHECK(model.sdf(Vec3(0.95, 0.95, 0.95)) > 0.0);
    CHECK(model.sdf(Vec3(-0.9, 0.9, -0.9)) > 0.0);
}

TEST_CASE("sdf: spatial gradient matches finite differences") {
    SceneModel model(tiny_config());
    Rng rng(4);
    MatX P = random_points(rng, 6, -0.8, 0.8);
    MatX G = model.sdf_gradient(P);
    const double h = 1e-6;
    for (int d = 0; d < 3; ++d) {
        MatX Pp = P, Pm = P;
        Pp.col(d).array() += h;
        Pm.col(d).array() -= h;
        VecX fd = (model.sdf(Pp) - model.sdf(Pm)) / (2.0 * h);
        CHECK((fd - G.col(d)).cwiseAbs().maxCoeff() < 1e-6);
    }
}

TEST_CASE("color: checkerboard backend reproduces the exact pattern") {
    AnalyticFields f = sphere_scene(0.5);
    f.color = [](const Vec3& p) {
        return analytic::checkerboard(p, 0.25, Vec3(1, 1, 1), Vec3(0, 0, 0));
    };
    AnalyticBackend be(f);
    CHECK(be.color_at(Vec3(0.1, 0.1, 0.1)) == Vec3(1, 1, 1));   // cell (0,0,0)
    CHECK(be.color_at(Vec3(0.3, 0.1, 0.1)) == Vec3(0, 0, 0));   // cell (1,0,0)
    CHECK(be.color_at(Vec3(0.3, 0.3, 0.1)) == Vec3(1, 1, 1));   // cell (1,1,0)
}

TEST_CASE("color and rigidity: outputs in [0,1] for 10^4 random points") {
    SceneModel model(tiny_config());
    Rng rng(17);
    MatX P = random_points(rng, 10000, -2.0, 2.0);
    MatX c = model.color(P);
    VecX r = model.rigidity(P);
    CHECK(c.minCoeff() >= 0.0);
    CHECK(c.maxCoeff() <= 1.0);
    CHECK(r.minCoeff() >= 0.0);
    CHECK(r.maxCoeff() <= 1.0);
}

TEST_CASE("color: gradient w.r.t. color parameters matches FD") {
    SceneModel model(tiny_config());
    Rng rng(33);
    MatX P = random_points(rng, 5, -0.7, 0.7);
    ad::Tensor Pt({5, 3});
    for (int i = 0; i < 5; ++i)
        for (int k = 0; k < 3; ++k) Pt.data()[i * 3 + k] = P(i, k);
    auto f = [&model, &Pt](ad::ParamStore&) {
        ad::Tape t;
        return t.value(t.mean_all(t.square(model.color_t(t, t.constant(Pt))))).item();
    };
    std::map<std::string, ad::Tensor> grads;
    {
        ad::Tape t;
        grads = t.backward(t.mean_all(t.square(model.color_t(t, t.constant(Pt))))).by_param();
    }
    // Only color parameters should receive gradients.
    for (const auto& [name, g] : grads) CHECK(name.rfind("color.", 0) == 0);
    auto res = ad::grad_check(model.params(), f, grads, 1e-5);
    CHECK_MESSAGE(res.max_rel_err < 1e-4, res.worst_entry);
}

TEST_CASE("rigidity: analytic box mask and learned gradient") {
    AnalyticFields f = sphere_scene(0.5);
    f.rigidity = [](const Vec3& p) {
        return analytic::box_sdf(p, Vec3(0, 0, 0), Vec3(0.3, 0.3, 0.3)) <= 0.0 ? 1.0 : 0.0;
    };
    AnalyticBackend be(f);
    CHECK(be.rigidity_at(Vec3(0, 0, 0)) == 1.0);
    CHECK(be.rigidity_at(Vec3(0.5, 0.5, 0.5)) == 0.0);

    SceneModel model(tiny_config());
    ad::Tensor Pt({4, 3});
    Rng rng(8);
    for (std::size_t k = 0; k < 12; ++k) Pt.data()[k] = rng.uniform(-0.6, 0.6);
    auto fr = [&model, &Pt](ad::ParamStore&) {
        ad::Tape t;
        return t.value(t.mean_all(t.square(model.rigidity_t(t, t.constant(Pt))))).item();
    };
    std::map<std::string, ad::Tensor> grads;
    {
        ad::Tape t;
        grads = t.backward(t.mean_all(t.square(model.rigidity_t(t, t.constant(Pt))))).by_param();
    }
    auto res = ad::grad_check(model.params(), fr, grads, 1e-5);
    CHECK_MESSAGE(res.max_rel_err < 1e-4, res.worst_entry);
}

TEST_CASE("raw_offset: analytic translation field is constant") {
    Vec3 t(0.1, -0.05, 0.02);
    AnalyticBackend be(sphere_scene(0.5, t));
    Rng rng(2);
    MatX P = random_points(rng, 10);
    MatX b1 = be.raw_offset(1, P);
    MatX b2 = be.raw_offset(2, P);
    for (int i = 0; i < 10; ++i) {
        CHECK((Vec3(b1.row(i)) - t).norm() == doctest::Approx(0.0));
        CHECK((Vec3(b2.row(i)) - 2 * t).norm() == doctest::Approx(0.0));
    }
}

TEST_CASE("raw_offset: frame out of range errors; frames differ (1-based)") {
    SceneModel model(tiny_config(3));
    Vec3 p(0.2, 0.1, -0.3);
    CHECK_THROWS_AS(model.raw_offset(0, p), std::invalid_argument);
    CHECK_THROWS_AS(model.raw_offset(4, p), std::invalid_argument);
    Vec3 b1 = model.raw_offset(1, p), b2 = model.raw_offset(2, p);
    CHECK((b1 - b2).norm() > 0.0);  // distinct latents -> different offsets
}

TEST_CASE("raw_offset: gradient w.r.t. the frame latent matches FD") {
    SceneModel model(tiny_config(2));
    ad::Tensor Pt({3, 3});
    Rng rng(14);
    for (std::size_t k = 0; k < 9; ++k) Pt.data()[k] = rng.uniform(-0.5, 0.5);
    auto f = [&model, &Pt](ad::ParamStore&) {
        ad::Tape t;
        return t.value(t.mean_all(t.square(model.raw_offset_t(t, 2, t.constant(Pt))))).item();
    };
    std::map<std::string, ad::Tensor> grads;
    {
        ad::Tape t;
        grads = t.backward(t.mean_all(t.square(model.raw_offset_t(t, 2, t.constant(Pt))))).by_param();
    }
    CHECK(grads.count("latent.0002") == 1);
    CHECK(grads.count("latent.0001") == 0);  // other frame untouched
    std::map<std::string, ad::Tensor> latent_only{{"latent.0002", grads.at("latent.0002")}};
    auto res = ad::grad_check(model.params(), f, latent_only, 1e-5);
    CHECK_MESSAGE(res.max_rel_err < 1e-4, res.worst_entry);
}

TEST_CASE("gated_offset: gating algebra") {
    Vec3 tr(0.2, 0.0, 0.0);
    SUBCASE("r == 0 kills the offset") {
        AnalyticFields f = sphere_scene(0.5, tr, 0.0);
        AnalyticBackend be(f);
        CHECK(be.gated_offset_at(1, Vec3(0.1, 0.2, 0.3)).norm() == 0.0);
    }
    SUBCASE("r == 1 passes the offset through") {
        AnalyticFields f = sphere_scene(0.5, tr, 1.0);
        AnalyticBackend be(f);
        CHECK((be.gated_offset_at(1, Vec3(0.1, 0.2, 0.3)) - tr).norm() == 0.0);
    }
    SUBCASE("r == 0.5 halves it") {
        AnalyticFields f = sphere_scene(0.5, tr, 0.5);
        AnalyticBackend be(f);
        CHECK((be.gated_offset_at(1, Vec3(0.1, 0.2, 0.3)) - Vec3(0.1, 0, 0)).norm() ==
              doctest::Approx(0.0));
    }
}

TEST_CASE("gated_offset: identity r(p)*b(p) holds exactly for the learned model") {
    SceneModel model(tiny_config());
    Rng rng(5);
    MatX P = random_points(rng, 20);
    MatX gated = model.gated_offset(1, P);
    VecX r = model.rigidity(P);
    MatX raw = model.raw_offset(1, P);
    for (int i = 0; i < 20; ++i)
        for (int k = 0; k < 3; ++k) CHECK(gated(i, k) == r(i) * raw(i, k));
}

TEST_CASE("bend_point: zero motion is the identity; translation shifts") {
    AnalyticFields f = sphere_scene(0.5, Vec3::Zero());
    AnalyticBackend be(f);
    Vec3 p(0.3, -0.2, 0.1);
    CHECK((be.bend_point_at(1, p) - p).norm() == 0.0);

    Vec3 tr(0.1, 0.2, -0.3);
    AnalyticBackend be2(sphere_scene(0.5, tr));
    CHECK((be2.bend_point_at(1, p) - (p + tr)).norm() == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("bend_point: learned model composition is consistent across paths") {
    SceneModel model(tiny_config());
    Rng rng(6);
    MatX P = random_points(rng, 8);
    // The dynamic-frame SDF everyone downstream uses is s(bend(p)).
    VecX direct = model.sdf(model.bend_point(2, P));
    MatX bent = P + model.rigidity(P).asDiagonal() * model.raw_offset(2, P);
    VecX manual = model.sdf(bent);
    CHECK((direct - manual).cwiseAbs().maxCoeff() == 0.0);
    // Tape path agrees with the plain path.
    ad::Tensor Pt({8, 3});
    for (int i = 0; i < 8; ++i)
        for (int k = 0; k < 3; ++k) Pt.data()[i * 3 + k] = P(i, k);
    ad::Tape t;
    ad::Var s = model.sdf_t(t, model.bend_point_t(t, 2, t.constant(Pt)));
    for (int i = 0; i < 8; ++i) CHECK(t.value(s).at(i, 0) == doctest::Approx(direct(i)).epsilon(1e-12));
}

TEST_CASE("queries are pure: repeated evaluation is bitwise identical") {
    SceneModel model(tiny_config());
    Rng rng(31);
    MatX P = random_points(rng, 16);
    VecX s1 = model.sdf(P), s2 = model.sdf(P);
    MatX c1 = model.color(P), c2 = model.color(P);
    MatX b1 = model.raw_offset(1, P), b2 = model.raw_offset(1, P);
    CHECK(std::memcmp(s1.data(), s2.data(), sizeof(double) * s1.size()) == 0);
    CHECK(std::memcmp(c1.data(), c2.data(), sizeof(double) * c1.size()) == 0);
    CHECK(std::memcmp(b1.data(), b2.data(), sizeof(double) * b1.size()) == 0);
}

TEST_CASE("motion divergence matches finite differences of the raw offset") {
    SceneModel model(tiny_config());
    Rng rng(12);
    MatX P = random_points(rng, 5, -0.6, 0.6);
    ad::Tensor Pt({5, 3});
    for (int i = 0; i < 5; ++i)
        for (int k = 0; k < 3; ++k) Pt.data()[i * 3 + k] = P(i, k);
    ad::Tape t;
    auto od = model.raw_offset_with_divergence_t(t, 1, t.constant(Pt));
    const double h = 1e-6;
    for (int i = 0; i < 5; ++i) {
        double div_fd = 0.0;
        for (int d = 0; d < 3; ++d) {
            MatX Pp = P.row(i), Pm = P.row(i);
            Pp(0, d) += h;
            Pm(0, d) -= h;
            div_fd += (model.raw_offset(1, Pp)(0, d) - model.raw_offset(1, Pm)(0, d)) / (2.0 * h);
        }
        CHECK(t.value(od.div).at(i, 0) == doctest::Approx(div_fd).epsilon(1e-5));
    }
    // And the taped offset value agrees with the plain query.
    MatX b = model.raw_offset(1, P);
    for (int i = 0; i < 5; ++i)
        for (int k = 0; k < 3; ++k)
            CHECK(t.value(od.b).at(i, k) == doctest::Approx(b(i, k)).epsilon(1e-12));
}

TEST_CASE("checkpoint round-trip preserves every query") {
    SceneModel model(tiny_config());
    auto path = std::string("/tmp/neusim_fields_ckpt.npck");
    ad::save_checkpoint(path, model.params());
    SceneModel back(tiny_config(), ad::load_checkpoint(path));
    Rng rng(44);
    MatX P = random_points(rng, 12);
    CHECK((model.sdf(P) - back.sdf(P)).cwiseAbs().maxCoeff() == 0.0);
    CHECK((model.color(P) - back.color(P)).cwiseAbs().maxCoeff() == 0.0);
    CHECK((model.raw_offset(2, P) - back.raw_offset(2, P)).cwiseAbs().maxCoeff() == 0.0);
    std::remove(path.c_str());
}
