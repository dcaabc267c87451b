#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "neusim/core/rng.hpp"
#include "neusim/geom/hexmesh.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

using namespace neusim;
using namespace neusim::geom;
using fields::AnalyticBackend;
using fields::AnalyticFields;

// Table accessors exported for the consistency audit below.
namespace neusim::geom::mc_tables {
const int (*tri_table_ptr())[16];
const int (*corner_pairs_ptr())[2];
} // namespace neusim::geom::mc_tables

namespace {

AnalyticFields solid(std::function<double(const Vec3&)> sdf,
                     std::function<double(const Vec3&)> rigidity =
                         [](const Vec3&) { return 1.0; },
                     std::function<Vec3(int, const Vec3&)> offset =
                         [](int, const Vec3&) { return Vec3::Zero(); }) {
    AnalyticFields f;
    f.n_frames = 4;
    f.sdf = std::move(sdf);
    f.color = [](const Vec3&) { return Vec3(0.5, 0.5, 0.5); };
    f.rigidity = std::move(rigidity);
    f.offset = std::move(offset);
    return f;
}

GridSpec unit_grid(double spacing, double half = 0.5) {
    GridSpec g;
    g.origin = Vec3(-half, -half, -half);
    g.spacing = spacing;
    int n = int(std::lround(2 * half / spacing)) + 1;
    g.dims = {n, n, n};
    return g;
}

std::set<std::array<int, 3>> hex_cells(const HexMesh& m, const GridSpec& g) {
    std::set<std::array<int, 3>> cells;
    for (std::size_t e = 0; e < m.n_hexes(); ++e) {
        Vec3 c = Vec3::Zero();
        for (int v = 0; v < 8; ++v) c += Vec3(m.vertices.row(m.hexes(Eigen::Index(e), v)));
        c = (c / 8.0 - g.origin) / g.spacing;  // cell center at integer + 0.5
        cells.insert({int(std::floor(c.x())), int(std::floor(c.y())), int(std::floor(c.z()))});
    }
    return cells;
}

} // namespace

TEST_CASE("extraction: sphere volume against analytic oracles") {
    const double r = 0.3, d = 0.05;
    AnalyticBackend be(solid([r](const Vec3& p) { return p.norm() - r; }));
    GridSpec grid = unit_grid(d);
    HexMesh mesh = extract_foreground_hexmesh(be, 1, grid, {});
    const double v_true = 4.0 / 3.0 * M_PI * r * r * r;

    // Occupied lattice points track the raw volume closely.
    std::size_t pts = 0;
    for (int k = 0; k < grid.dims[2]; ++k)
        for (int j = 0; j < grid.dims[1]; ++j)
            for (int i = 0; i < grid.dims[0]; ++i)
                if (grid.point(i, j, k).norm() <= r) ++pts;
    CHECK(std::abs(double(pts) * d * d * d / v_true - 1.0) < 0.15);

    // All-corner cells carve out the sphere eroded by the half cell diagonal.
    const double r_eroded = r - std::sqrt(3.0) / 2.0 * d;
    const double v_eroded = 4.0 / 3.0 * M_PI * std::pow(r_eroded, 3);
    CHECK(mesh.n_hexes() > 0);
    CHECK(std::abs(double(mesh.n_hexes()) * d * d * d / v_eroded - 1.0) < 0.15);
    CHECK(double(mesh.n_hexes()) * d * d * d < v_true);  // conservative by construction
}

TEST_CASE("extraction: empty results and config validation") {
    const double r = 0.3;
    AnalyticBackend rigid0(solid([r](const Vec3& p) { return p.norm() - r; },
                                 [](const Vec3&) { return 0.0; }));
    GridSpec grid = unit_grid(0.1);
    CHECK(extract_foreground_hexmesh(rigid0, 1, grid, {}).empty());

    AnalyticBackend be(solid([r](const Vec3& p) { return p.norm() - r; }));
    ExtractionConfig far_box;
    far_box.region = Aabb{Vec3(0.6, 0.6, 0.6), Vec3(0.9, 0.9, 0.9)};
    CHECK(extract_foreground_hexmesh(be, 1, grid, far_box).empty());

    ExtractionConfig bad;
    bad.k_rigidity = 1.5;
    CHECK_THROWS_AS(extract_foreground_hexmesh(be, 1, grid, bad), std::invalid_argument);
    GridSpec bad_grid = grid;
    bad_grid.spacing = 0.0;
    CHECK_THROWS_AS(extract_foreground_hexmesh(be, 1, bad_grid, {}), std::invalid_argument);
    CHECK_THROWS_AS(extract_foreground_hexmesh(be, 9, grid, {}), std::invalid_argument);
}

TEST_CASE("extraction: monotone in both thresholds") {
    AnalyticBackend be(solid([](const Vec3& p) { return p.norm() - 0.35; },
                             [](const Vec3& p) { return std::exp(-8.0 * p.squaredNorm()); }));
    GridSpec grid = unit_grid(0.05);
    ExtractionConfig lo, hi;
    lo.k_rigidity = 0.2;
    hi.k_rigidity = 0.5;
    auto cells_lo = hex_cells(extract_foreground_hexmesh(be, 1, grid, lo), grid);
    auto cells_hi = hex_cells(extract_foreground_hexmesh(be, 1, grid, hi), grid);
    CHECK(!cells_hi.empty());
    CHECK(cells_hi.size() < cells_lo.size());
    for (const auto& c : cells_hi) CHECK(cells_lo.count(c) == 1);

    ExtractionConfig tight = lo;
    tight.k_sdf = -0.05;  // lowering k_sdf never adds hexes
    auto cells_tight = hex_cells(extract_foreground_hexmesh(be, 1, grid, tight), grid);
    CHECK(!cells_tight.empty());
    CHECK(cells_tight.size() < cells_lo.size());
    for (const auto& c : cells_tight) CHECK(cells_lo.count(c) == 1);
}

TEST_CASE("extraction: largest-component filter drops satellite blobs") {
    auto two_spheres = [](const Vec3& p) {
        return std::min((p - Vec3(-0.25, 0, 0)).norm() - 0.18,
                        (p - Vec3(0.33, 0, 0)).norm() - 0.09);
    };
    AnalyticBackend be(solid(two_spheres));
    GridSpec grid = unit_grid(0.04);
    ExtractionConfig keep_all;
    keep_all.largest_component = false;
    HexMesh all = extract_foreground_hexmesh(be, 1, grid, keep_all);
    HexMesh biggest = extract_foreground_hexmesh(be, 1, grid, {});
    CHECK(biggest.n_hexes() < all.n_hexes());

    AnalyticBackend big_only(solid(
        [](const Vec3& p) { return (p - Vec3(-0.25, 0, 0)).norm() - 0.18; }));
    HexMesh expect = extract_foreground_hexmesh(big_only, 1, grid, {});
    CHECK(biggest.n_hexes() == expect.n_hexes());
}

TEST_CASE("extraction: vertices are shared, deduplicated, and positively oriented") {
    AnalyticBackend be(solid([](const Vec3& p) { return p.norm() - 0.22; }));
    GridSpec grid = unit_grid(0.1);
    HexMesh mesh = extract_foreground_hexmesh(be, 1, grid, {});
    REQUIRE(mesh.n_hexes() > 1);
    CHECK(mesh.rest_vertices == mesh.vertices);
    CHECK(mesh.hexes.minCoeff() >= 0);
    CHECK(mesh.hexes.maxCoeff() < int(mesh.n_vertices()));
    CHECK(mesh.n_vertices() < 8 * mesh.n_hexes());  // sharing happened

    double min_dist = 1e9;
    for (Eigen::Index a = 0; a < mesh.vertices.rows(); ++a)
        for (Eigen::Index b = a + 1; b < mesh.vertices.rows(); ++b)
            min_dist = std::min(min_dist, (mesh.vertices.row(a) - mesh.vertices.row(b)).norm());
    CHECK(min_dist > grid.spacing * (1.0 - 1e-9));

    // Some pair of hexes shares a full face (4 vertex ids).
    bool found_face = false;
    for (std::size_t a = 0; a < mesh.n_hexes() && !found_face; ++a)
        for (std::size_t b = a + 1; b < mesh.n_hexes() && !found_face; ++b) {
            std::set<int> sa, inter;
            for (int v = 0; v < 8; ++v) sa.insert(mesh.hexes(Eigen::Index(a), v));
            for (int v = 0; v < 8; ++v)
                if (sa.count(mesh.hexes(Eigen::Index(b), v))) inter.insert(mesh.hexes(Eigen::Index(b), v));
            found_face = inter.size() == 4;
        }
    CHECK(found_face);

    for (std::size_t e = 0; e < mesh.n_hexes(); ++e) {
        Vec3 v0 = mesh.vertices.row(mesh.hexes(Eigen::Index(e), 0));
        Vec3 dx = Vec3(mesh.vertices.row(mesh.hexes(Eigen::Index(e), 1))) - v0;
        Vec3 dy = Vec3(mesh.vertices.row(mesh.hexes(Eigen::Index(e), 2))) - v0;
        Vec3 dz = Vec3(mesh.vertices.row(mesh.hexes(Eigen::Index(e), 4))) - v0;
        CHECK(dx.cross(dy).dot(dz) > 0.0);
    }
}

TEST_CASE("extraction: call counter is instrumented") {
    AnalyticBackend be(solid([](const Vec3& p) { return p.norm() - 0.2; }));
    GridSpec grid = unit_grid(0.25);
    reset_extraction_count();
    CHECK(extraction_count() == 0);
    extract_foreground_hexmesh(be, 1, grid, {});
    extract_foreground_hexmesh(be, 2, grid, {});
    CHECK(extraction_count() == 2);
    reset_extraction_count();
}

TEST_CASE("motion mask: translation thresholds and monotonicity") {
    AnalyticBackend still(solid([](const Vec3& p) { return p.norm() - 0.3; }));
    GridSpec grid = unit_grid(0.1);
    auto none = motion_magnitude_mask(still, 1, grid, 0.0);
    for (auto o : none) CHECK(o == 0);  // zero offset has norm 0, not > 0

    AnalyticBackend moving(solid([](const Vec3& p) { return p.norm() - 0.3; },
                                 [](const Vec3&) { return 1.0; },
                                 [](int, const Vec3&) { return Vec3(0.02, 0, 0); }));
    auto all = motion_magnitude_mask(moving, 1, grid, 0.008);
    for (auto o : all) CHECK(o == 1);
    auto empty = motion_magnitude_mask(moving, 1, grid, 0.03);
    for (auto o : empty) CHECK(o == 0);

    AnalyticBackend varying(solid([](const Vec3& p) { return p.norm() - 0.3; },
                                  [](const Vec3&) { return 1.0; },
                                  [](int, const Vec3& p) {
                                      return Vec3(0.012 * std::exp(-2.0 * p.squaredNorm()), 0, 0);
                                  }));
    auto loose = motion_magnitude_mask(varying, 1, grid, 0.008);
    auto tight = motion_magnitude_mask(varying, 1, grid, 0.01);
    std::size_t n_loose = 0, n_tight = 0;
    for (std::size_t t = 0; t < loose.size(); ++t) {
        n_loose += loose[t];
        n_tight += tight[t];
        if (tight[t]) CHECK(loose[t] == 1);
    }
    CHECK(n_tight > 0);
    CHECK(n_tight < n_loose);
}

TEST_CASE("marching cubes: case table is self-consistent") {
    const int(*tri)[16] = mc_tables::tri_table_ptr();
    const int(*pairs)[2] = mc_tables::corner_pairs_ptr();
    for (int m = 0; m < 256; ++m) {
        int count = 0;
        while (count < 16 && tri[m][count] != -1) ++count;
        CHECK(count % 3 == 0);
        for (int t = count; t < 16; ++t) CHECK(tri[m][t] == -1);
        for (int t = 0; t < count; ++t) {
            int e = tri[m][t];
            REQUIRE(e >= 0);
            REQUIRE(e < 12);
            bool in_a = (m >> pairs[e][0]) & 1;
            bool in_b = (m >> pairs[e][1]) & 1;
            CHECK(in_a != in_b);  // listed edges must straddle the surface
        }
        // Triangles are non-degenerate in edge ids.
        for (int t = 0; t + 2 < count; t += 3) {
            CHECK(tri[m][t] != tri[m][t + 1]);
            CHECK(tri[m][t] != tri[m][t + 2]);
            CHECK(tri[m][t + 1] != tri[m][t + 2]);
        }
    }
}

TEST_CASE("marching cubes: sphere area, surface distance, and watertightness") {
    const double r = 0.3, d = 0.02;
    GridSpec grid = unit_grid(d);
    SurfaceMesh mesh =
        marching_cubes([r](const Vec3& p) { return p.norm() - r; }, grid, 0.0);
    REQUIRE(mesh.n_triangles() > 0);

    CHECK(std::abs(mesh.total_area() / (4.0 * M_PI * r * r) - 1.0) < 0.05);

    for (Eigen::Index v = 0; v < mesh.vertices.rows(); ++v)
        CHECK(std::abs(mesh.vertices.row(v).norm() - r) < d);

    // Watertight with consistent winding: every directed edge appears exactly
    // once and its reverse exactly once.
    std::map<std::pair<int, int>, int> directed;
    for (Eigen::Index t = 0; t < mesh.triangles.rows(); ++t)
        for (int v = 0; v < 3; ++v) {
            int a = mesh.triangles(t, v), b = mesh.triangles(t, (v + 1) % 3);
            CHECK(a != b);
            ++directed[{a, b}];
        }
    for (const auto& [edge, count] : directed) {
        CHECK(count == 1);
        CHECK(directed.count({edge.second, edge.first}) == 1);
    }
}

TEST_CASE("marching cubes: empty field and precondition errors") {
    GridSpec grid = unit_grid(0.25);
    SurfaceMesh empty = marching_cubes([](const Vec3&) { return 1.0; }, grid, 0.0);
    CHECK(empty.n_triangles() == 0);
    CHECK(empty.n_vertices() == 0);

    GridSpec flat;
    flat.dims = {1, 4, 4};
    CHECK_THROWS_AS(marching_cubes([](const Vec3&) { return 1.0; }, flat, 0.0),
                    std::invalid_argument);
}

TEST_CASE("chamfer: identities, singletons, symmetry") {
    Rng rng(5);
    MatX a(40, 3);
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        a.row(i) = Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)).transpose();
    CHECK(chamfer_distance(a, a) == 0.0);

    MatX s1(1, 3), s2(1, 3);
    s1 << 0.1, 0.2, 0.3;
    s2 << 0.1 + 0.37, 0.2, 0.3;
    CHECK(chamfer_distance(s1, s2) == doctest::Approx(0.37).epsilon(1e-12));

    MatX b = a.topRows(17);
    b.array() += 0.21;
    CHECK(chamfer_distance(a, b) == chamfer_distance(b, a));
    CHECK_THROWS_AS(chamfer_distance(MatX(0, 3), a), std::invalid_argument);
}

TEST_CASE("chamfer: spatial hash equals the brute-force oracle") {
    auto brute = [](const MatX& A, const MatX& B) {
        auto one_way = [](const MatX& F, const MatX& T) {
            double sum = 0.0;
            for (Eigen::Index i = 0; i < F.rows(); ++i) {
                double best = std::numeric_limits<double>::infinity();
                for (Eigen::Index j = 0; j < T.rows(); ++j)
                    best = std::min(best, (F.row(i) - T.row(j)).norm());
                sum += best;
            }
            return sum / double(F.rows());
        };
        return 0.5 * one_way(A, B) + 0.5 * one_way(B, A);
    };
    Rng rng(9);
    for (int trial = 0; trial < 4; ++trial) {
        int na = 50 + int(rng.index(250)), nb = 50 + int(rng.index(250));
        MatX A(na, 3), B(nb, 3);
        for (Eigen::Index i = 0; i < A.rows(); ++i)
            A.row(i) = Vec3(rng.normal(), rng.normal(), rng.normal()).transpose();
        for (Eigen::Index j = 0; j < B.rows(); ++j) {
            Vec3 base = j % 2 ? Vec3(4, 4, 4) : Vec3::Zero();  // two far clusters
            B.row(j) = (base + 0.5 * Vec3(rng.normal(), rng.normal(), rng.normal())).transpose();
        }
        CHECK(std::abs(chamfer_distance(A, B) - brute(A, B)) < 1e-12);
    }
}

TEST_CASE("exports: obj and vtk files are well-formed") {
    AnalyticBackend be(solid([](const Vec3& p) { return p.norm() - 0.25; }));
    GridSpec grid = unit_grid(0.1);
    HexMesh hexes = extract_foreground_hexmesh(be, 1, grid, {});
    REQUIRE(!hexes.empty());
    auto dir = std::filesystem::temp_directory_path();

    auto vtk_path = (dir / "neusim_test_mesh.vtk").string();
    write_vtk(vtk_path, hexes);
    std::ifstream vtk(vtk_path);
    std::string line;
    std::getline(vtk, line);
    CHECK(line == "# vtk DataFile Version 3.0");
    std::getline(vtk, line);  // title
    std::getline(vtk, line);
    CHECK(line == "ASCII");
    std::getline(vtk, line);
    CHECK(line == "DATASET UNSTRUCTURED_GRID");
    std::getline(vtk, line);
    std::istringstream points_hdr(line);
    std::string word;
    long n_pts = 0;
    points_hdr >> word >> n_pts;
    CHECK(word == "POINTS");
    CHECK(n_pts == long(hexes.n_vertices()));
    std::string rest((std::istreambuf_iterator<char>(vtk)), std::istreambuf_iterator<char>());
    CHECK(rest.find("CELLS " + std::to_string(hexes.n_hexes())) != std::string::npos);
    CHECK(rest.find("CELL_TYPES") != std::string::npos);
    CHECK(rest.find("\n12\n") != std::string::npos);

    SurfaceMesh tri = marching_cubes([](const Vec3& p) { return p.norm() - 0.25; }, grid, 0.0);
    auto obj_path = (dir / "neusim_test_mesh.obj").string();
    write_obj(obj_path, tri);
    std::ifstream obj(obj_path);
    long v_count = 0, f_count = 0, max_idx = 0;
    while (std::getline(obj, line)) {
        if (line.rfind("v ", 0) == 0) ++v_count;
        if (line.rfind("f ", 0) == 0) {
            ++f_count;
            std::istringstream ss(line.substr(2));
            long i, j, k;
            ss >> i >> j >> k;
            CHECK(std::min({i, j, k}) >= 1);
            max_idx = std::max({max_idx, i, j, k});
        }
    }
    CHECK(v_count == long(tri.n_vertices()));
    CHECK(f_count == long(tri.n_triangles()));
    CHECK(max_idx == long(tri.n_vertices()));
    std::filesystem::remove(vtk_path);
    std::filesystem::remove(obj_path);
}
