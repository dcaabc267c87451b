#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "neusim/ad/adam.hpp"
#include "neusim/ad/checkpoint.hpp"
#include "neusim/ad/grad_check.hpp"
#include "neusim/ad/tape.hpp"
#include "neusim/core/rng.hpp"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

using namespace neusim;
using namespace neusim::ad;

namespace {

Tensor random_tensor(Rng& rng, std::vector<std::size_t> shape, double scale = 1.0) {
    Tensor t(std::move(shape));
    for (std::size_t k = 0; k < t.numel(); ++k) t.data()[k] = scale * rng.normal();
    return t;
}

// Two-layer softplus MLP; scalar loss = mean of squared outputs.
double mlp_loss(ParamStore& ps, const Tensor& X, std::map<std::string, Tensor>* grads_out = nullptr) {
    Tape t;
    Var W1 = t.param(ps, "W1"), b1 = t.param(ps, "b1");
    Var W2 = t.param(ps, "W2"), b2 = t.param(ps, "b2");
    Var x = t.constant(X);
    Var h = t.softplus(t.add_rowvec(t.matmul(x, W1), b1), 1.0);
    Var y = t.add_rowvec(t.matmul(h, W2), b2);
    Var loss = t.mean_all(t.square(y));
    if (grads_out) *grads_out = t.backward(loss).by_param();
    return t.value(loss).item();
}

} // namespace

TEST_CASE("backward: f(x)=x*x at x=3 gives df/dx=6") {
    ParamStore ps;
    ps.create("x", Tensor::scalar(3.0));
    Tape t;
    Var x = t.param(ps, "x");
    Var f = t.mul(x, x);
    auto g = t.backward(f);
    CHECK(g.by_param().at("x").item() == doctest::Approx(6.0).epsilon(1e-14));
}

TEST_CASE("backward: constant function has zero derivative") {
    ParamStore ps;
    ps.create("x", Tensor::scalar(3.0));
    Tape t;
    Var x = t.param(ps, "x");
    (void)x;
    Var c = t.scalar(7.0);
    Var f = t.mul(c, c);
    auto g = t.backward(f);
    CHECK(g.by_param().count("x") == 0);  // unreachable => no gradient entry
    CHECK(g.get(x).item() == 0.0);
}

TEST_CASE("backward: random 2-layer MLP matches central finite differences") {
    Rng rng(42);
    ParamStore ps;
    ps.create("W1", random_tensor(rng, {3, 8}, 0.7));
    ps.create("b1", random_tensor(rng, {8}, 0.2));
    ps.create("W2", random_tensor(rng, {8, 2}, 0.7));
    ps.create("b2", random_tensor(rng, {2}, 0.2));
    Tensor X = random_tensor(rng, {5, 3});

    std::map<std::string, Tensor> grads;
    mlp_loss(ps, X, &grads);
    auto res = grad_check(
        ps, [&X](ParamStore& p) { return mlp_loss(p, X); }, grads, 1e-5);
    CHECK(res.max_rel_err < 1e-4);
}

TEST_CASE("backward: gradients match FD across random seeds") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng rng(seed);
        ParamStore ps;
        ps.create("W1", random_tensor(rng, {4, 6}, 0.8));
        ps.create("b1", random_tensor(rng, {6}, 0.3));
        ps.create("W2", random_tensor(rng, {6, 3}, 0.8));
        ps.create("b2", random_tensor(rng, {3}, 0.3));
        Tensor X = random_tensor(rng, {4, 4});
        std::map<std::string, Tensor> grads;
        mlp_loss(ps, X, &grads);
        auto res = grad_check(
            ps, [&X](ParamStore& p) { return mlp_loss(p, X); }, grads, 1e-5);
        CHECK_MESSAGE(res.max_rel_err < 1e-4, "seed ", seed, " worst ", res.worst_entry);
    }
}

TEST_CASE("backward: non-scalar seed is rejected") {
    ParamStore ps;
    ps.create("v", Tensor({3}, {1.0, 2.0, 3.0}));
    Tape t;
    Var v = t.param(ps, "v");
    Var w = t.square(v);
    CHECK_THROWS_AS(t.backward(w), std::invalid_argument);
}

TEST_CASE("backward: NaN gradient raises an error naming the node") {
    ParamStore ps;
    ps.create("x", Tensor::scalar(0.0));
    Tape t;
    Var x = t.param(ps, "x");
    // d/dx 1/x at 0 is not finite; backward through div must flag it.
    Var f = t.div(t.scalar(1.0), x);
    Var loss = t.sum_all(f);
    bool threw = false;
    try {
        t.backward(loss);
    } catch (const std::runtime_error& e) {
        threw = true;
        CHECK(std::string(e.what()).find("div") != std::string::npos);
    }
    CHECK(threw);
}

TEST_CASE("backward: deterministic, identical tapes give bitwise-identical gradients") {
    Rng rng(7);
    ParamStore ps;
    ps.create("W1", random_tensor(rng, {3, 5}));
    ps.create("b1", random_tensor(rng, {5}));
    ps.create("W2", random_tensor(rng, {5, 1}));
    ps.create("b2", random_tensor(rng, {1}));
    Tensor X = random_tensor(rng, {6, 3});
    std::map<std::string, Tensor> g1, g2;
    mlp_loss(ps, X, &g1);
    mlp_loss(ps, X, &g2);
    for (const auto& [name, t1] : g1) {
        const Tensor& t2 = g2.at(name);
        REQUIRE(t1.same_shape(t2));
        for (std::size_t k = 0; k < t1.numel(); ++k)
            CHECK(std::memcmp(&t1.data()[k], &t2.data()[k], sizeof(double)) == 0);
    }
}

TEST_CASE("ops: every primitive matches finite differences away from kinks") {
    Rng rng(123);
    ParamStore ps;
    ps.create("A", random_tensor(rng, {3, 4}, 0.5));
    ps.create("B", random_tensor(rng, {4, 3}, 0.5));
    ps.create("r", random_tensor(rng, {4}, 0.5));
    ps.create("c", random_tensor(rng, {3}, 0.5));
    ps.create("s", Tensor::scalar(1.3));
    // Keep |A| entries away from relu/abs kinks and clamp edges.
    {
        Tensor& A = ps.ref("A");
        for (std::size_t k = 0; k < A.numel(); ++k) {
            double v = A.data()[k];
            if (std::abs(v) < 0.05) A.data()[k] = v < 0 ? -0.1 : 0.1;
        }
    }

    auto f = [](ParamStore& p) {
        Tape t;
        Var A = t.param(p, "A"), B = t.param(p, "B");
        Var r = t.param(p, "r"), c = t.param(p, "c"), s = t.param(p, "s");
        Var m = t.matmul(A, B);                       // [3,3]
        Var m2 = t.mul_colvec(t.add_rowvec(m, c), c); // broadcasts
        Var u = t.scale_by(t.add(m2, t.square(m2)), s);
        Var w = t.sub(t.sigmoid(u), t.vexp(t.scale(u, -0.5)));
        Var w2 = t.add(t.vsin(w), t.vcos(w));
        Var w3 = t.mul(t.softplus(w2, 3.0), t.clamp(w2, -0.8, 0.8));
        Var w4 = t.div(w3, t.offset(t.square(w2), 1.0));
        Var ra = t.relu(A);
        Var ab = t.vabs(A);
        Var sq = t.sqrt_safe(t.offset(t.square(A), 0.3));
        Var catc = t.concat_cols({ra, ab, sq});       // [3,12]
        Var sl = t.slice_cols(catc, 2, 6);            // [3,6]
        Var rows = t.concat_rows({sl, sl});           // [6,6]
        Var sr = t.slice_rows(rows, 1, 4);            // [4,6]
        Var gr = t.gather_rows(sr, {0, 2, 2, 3});     // [4,6] with a repeat
        Var cs = t.cumsum_exclusive(gr);
        Var rsum = t.sum_rows(cs);                    // [4,1]
        Var rv = t.reshape(rsum, {1, 4});
        Var rr = t.add_rowvec(rv, r);
        Var total = t.add(t.mean_all(w4), t.add(t.mean_all(rr), t.scale(t.sum_all(w3), 0.01)));
        return t.value(total).item();
    };

    std::map<std::string, Tensor> grads;
    {
        Tape t;
        Var A = t.param(ps, "A"), B = t.param(ps, "B");
        Var r = t.param(ps, "r"), c = t.param(ps, "c"), s = t.param(ps, "s");
        Var m = t.matmul(A, B);
        Var m2 = t.mul_colvec(t.add_rowvec(m, c), c);
        Var u = t.scale_by(t.add(m2, t.square(m2)), s);
        Var w = t.sub(t.sigmoid(u), t.vexp(t.scale(u, -0.5)));
        Var w2 = t.add(t.vsin(w), t.vcos(w));
        Var w3 = t.mul(t.softplus(w2, 3.0), t.clamp(w2, -0.8, 0.8));
        Var w4 = t.div(w3, t.offset(t.square(w2), 1.0));
        Var ra = t.relu(A);
        Var ab = t.vabs(A);
        Var sq = t.sqrt_safe(t.offset(t.square(A), 0.3));
        Var catc = t.concat_cols({ra, ab, sq});
        Var sl = t.slice_cols(catc, 2, 6);
        Var rows = t.concat_rows({sl, sl});
        Var sr = t.slice_rows(rows, 1, 4);
        Var gr = t.gather_rows(sr, {0, 2, 2, 3});
        Var cs = t.cumsum_exclusive(gr);
        Var rsum = t.sum_rows(cs);
        Var rv = t.reshape(rsum, {1, 4});
        Var rr = t.add_rowvec(rv, r);
        Var total = t.add(t.mean_all(w4), t.add(t.mean_all(rr), t.scale(t.sum_all(w3), 0.01)));
        grads = t.backward(total).by_param();
    }
    auto res = grad_check(ps, f, grads, 1e-6);
    CHECK_MESSAGE(res.max_rel_err < 1e-4, "worst ", res.worst_entry);
}

TEST_CASE("custom primitive routes gradients through Tape::accum") {
    ParamStore ps;
    ps.create("x", Tensor({2}, {0.5, -1.5}));
    Tape t;
    Var x = t.param(ps, "x");
    // y = 3x + 1 elementwise, as an opaque primitive.
    const Tensor& xv = t.value(x);
    Tensor y(xv.shape());
    for (std::size_t k = 0; k < y.numel(); ++k) y.data()[k] = 3.0 * xv.data()[k] + 1.0;
    Var yv = t.custom(std::move(y), "affine3", [x](const Tensor& g, Tape& tp) {
        Tensor gx(g.shape());
        for (std::size_t k = 0; k < g.numel(); ++k) gx.data()[k] = 3.0 * g.data()[k];
        tp.accum(x, gx);
    });
    Var loss = t.sum_all(t.square(yv));
    auto g = t.backward(loss);
    // d/dx sum (3x+1)^2 = 2(3x+1)*3
    CHECK(g.by_param().at("x")[0] == doctest::Approx(2.0 * 2.5 * 3.0));
    CHECK(g.by_param().at("x")[1] == doctest::Approx(2.0 * -3.5 * 3.0));
}

TEST_CASE("adam: zero gradient leaves parameters unchanged and increments t") {
    ParamStore ps;
    ps.create("x", Tensor({2}, {1.0, -2.0}));
    Adam opt({.lr = 0.1});
    std::map<std::string, Tensor> grads;
    grads.emplace("x", Tensor::zeros({2}));
    opt.step(ps, grads);
    CHECK(opt.step_count() == 1);
    CHECK(ps.get("x")[0] == 1.0);
    CHECK(ps.get("x")[1] == -2.0);
}

TEST_CASE("adam: first step equals lr*sign(g) up to eps") {
    ParamStore ps;
    ps.create("x", Tensor::scalar(1.0));
    Adam opt({.lr = 0.1});
    std::map<std::string, Tensor> grads;
    grads.emplace("x", Tensor::scalar(2.0));  // f(x)=x^2 at x=1
    opt.step(ps, grads);
    CHECK(ps.get("x").item() == doctest::Approx(0.9).epsilon(1e-7));
}

TEST_CASE("adam: 200 steps minimize (x-5)^2") {
    ParamStore ps;
    ps.create("x", Tensor::scalar(0.0));
    Adam opt({.lr = 0.1});
    for (int i = 0; i < 200; ++i) {
        double x = ps.get("x").item();
        std::map<std::string, Tensor> grads;
        grads.emplace("x", Tensor::scalar(2.0 * (x - 5.0)));
        opt.step(ps, grads);
    }
    CHECK(std::abs(ps.get("x").item() - 5.0) < 0.05);
}

TEST_CASE("adam: shape mismatch is an error") {
    ParamStore ps;
    ps.create("x", Tensor({2}, {1.0, 2.0}));
    Adam opt;
    std::map<std::string, Tensor> grads;
    grads.emplace("x", Tensor::scalar(1.0));
    CHECK_THROWS_AS(opt.step(ps, grads), std::invalid_argument);
}

TEST_CASE("grad_check: quadratic form is exact to roundoff") {
    Rng rng(5);
    ParamStore ps;
    ps.create("x", random_tensor(rng, {4}));
    auto f = [](ParamStore& p) {
        Tape t;
        Var x = t.param(p, "x");
        return t.value(t.sum_all(t.square(x))).item();
    };
    std::map<std::string, Tensor> grads;
    {
        Tape t;
        Var x = t.param(ps, "x");
        grads = t.backward(t.sum_all(t.square(x))).by_param();
    }
    auto res = grad_check(ps, f, grads, 1e-5);
    CHECK(res.max_rel_err < 1e-8);
}

TEST_CASE("grad_check: zero step is an error") {
    ParamStore ps;
    ps.create("x", Tensor::scalar(1.0));
    std::map<std::string, Tensor> grads;
    grads.emplace("x", Tensor::scalar(0.0));
    CHECK_THROWS_AS(grad_check(
                        ps, [](ParamStore&) { return 0.0; }, grads, 0.0),
                    std::invalid_argument);
}

TEST_CASE("grad_check: non-finite function value is an error") {
    ParamStore ps;
    ps.create("x", Tensor::scalar(1.0));
    std::map<std::string, Tensor> grads;
    grads.emplace("x", Tensor::scalar(0.0));
    CHECK_THROWS_AS(grad_check(
                        ps, [](ParamStore&) { return std::nan(""); }, grads, 1e-5),
                    std::runtime_error);
}

TEST_CASE("param store: invariants") {
    ParamStore ps;
    ps.create("a", Tensor({2}, {1.0, 2.0}));
    CHECK_THROWS_AS(ps.create("a", Tensor::scalar(0.0)), std::invalid_argument);  // unique names
    CHECK_THROWS_AS(ps.set("a", Tensor::scalar(0.0)), std::invalid_argument);     // shape immutable
    CHECK_THROWS_AS(ps.set("a", Tensor({2}, {1.0, std::nan("")})), std::invalid_argument);
    CHECK_THROWS_AS(ps.get("missing"), std::invalid_argument);
}

TEST_CASE("checkpoint: round-trip is bit-exact and lexicographically ordered") {
    Rng rng(99);
    ParamStore ps;
    ps.create("net.w", random_tensor(rng, {3, 4}));
    ps.create("alpha", Tensor::scalar(0.123456789012345));
    ps.create("net.b", random_tensor(rng, {4}));
    auto path = std::filesystem::temp_directory_path() / "neusim_ckpt_test.npck";
    save_checkpoint(path.string(), ps);
    ParamStore back = load_checkpoint(path.string());
    REQUIRE(back.size() == ps.size());
    CHECK(back.checksum() == ps.checksum());
    for (const auto& [name, t] : ps) {
        const Tensor& u = back.get(name);
        REQUIRE(u.same_shape(t));
        CHECK(std::memcmp(u.data(), t.data(), t.numel() * sizeof(double)) == 0);
    }
    // Header: magic + version + count, then first entry name "alpha" (lexicographic).
    std::ifstream is(path, std::ios::binary);
    char magic[4];
    is.read(magic, 4);
    CHECK(std::string(magic, 4) == "NPCK");
    std::uint32_t version = 0, count = 0, name_len = 0;
    is.read(reinterpret_cast<char*>(&version), 4);
    is.read(reinterpret_cast<char*>(&count), 4);
    is.read(reinterpret_cast<char*>(&name_len), 4);
    std::string first(name_len, '\0');
    is.read(first.data(), name_len);
    CHECK(version == 1);
    CHECK(count == 3);
    CHECK(first == "alpha");
    std::filesystem::remove(path);
}

TEST_CASE("checkpoint: malformed files are rejected") {
    auto path = std::filesystem::temp_directory_path() / "neusim_ckpt_bad.npck";
    {
        std::ofstream os(path, std::ios::binary);
        os.write("JUNK", 4);
    }
    CHECK_THROWS_AS(load_checkpoint(path.string()), std::runtime_error);
    {
        std::ofstream os(path, std::ios::binary);
        os.write("NPCK", 4);
        std::uint32_t v = 1, n = 2;
        os.write(reinterpret_cast<char*>(&v), 4);
        os.write(reinterpret_cast<char*>(&n), 4);  // promises 2 entries, delivers none
    }
    CHECK_THROWS_AS(load_checkpoint(path.string()), std::runtime_error);
    CHECK_THROWS_AS(load_checkpoint("/nonexistent/nope.npck"), std::runtime_error);
    std::filesystem::remove(path);
}
