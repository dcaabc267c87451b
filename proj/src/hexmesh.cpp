#include "neusim/geom/hexmesh.hpp"

#include "neusim/core/threading.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <deque>
#include <fstream>
#include <unordered_map>

namespace neusim::geom {

void GridSpec::validate() const {
    require(spacing > 0.0 && std::isfinite(spacing), "grid: spacing must be positive");
    require(dims[0] >= 1 && dims[1] >= 1 && dims[2] >= 1, "grid: dims must be >= 1 per axis");
}

void ExtractionConfig::validate() const {
    require(k_rigidity >= 0.0 && k_rigidity <= 1.0, "extraction: k_rigidity must lie in [0, 1]");
}

double SurfaceMesh::total_area() const {
    double area = 0.0;
    for (Eigen::Index t = 0; t < triangles.rows(); ++t) {
        Vec3 a = vertices.row(triangles(t, 0));
        Vec3 b = vertices.row(triangles(t, 1));
        Vec3 c = vertices.row(triangles(t, 2));
        area += 0.5 * (b - a).cross(c - a).norm();
    }
    return area;
}

namespace {

std::atomic<long> g_extractions{0};

// Occupancy over lattice points, sharded over rows; each shard writes only its
// own absolute slots, so the result is worker-count independent.
std::vector<std::uint8_t> point_occupancy(const fields::FieldBackend& model, int frame,
                                          const GridSpec& grid, const ExtractionConfig& cfg) {
    const int nx = grid.dims[0], ny = grid.dims[1];
    const std::size_t n = grid.n_points();
    std::vector<std::uint8_t> occ(n, 0);
    parallel_for_ranges(n, [&](std::size_t lo, std::size_t hi) {
        if (lo >= hi) return;
        MatX P(hi - lo, 3);
        for (std::size_t t = lo; t < hi; ++t) {
            int i = int(t % nx), j = int((t / nx) % ny), k = int(t / (std::size_t(nx) * ny));
            P.row(t - lo) = grid.point(i, j, k).transpose();
        }
        MatX bent = model.bend_point(frame, P);
        VecX s = model.sdf(bent);
        VecX r = model.rigidity(bent);
        for (std::size_t t = lo; t < hi; ++t) {
            Vec3 p = P.row(t - lo);
            bool in = s(t - lo) <= cfg.k_sdf && r(t - lo) >= cfg.k_rigidity;
            if (in && cfg.region) in = cfg.region->contains(p);
            occ[t] = in ? 1 : 0;
        }
    });
    return occ;
}

// Keep only the largest 6-connected component of occupied cells (first one
// wins ties, so the result is deterministic).
void keep_largest_component(std::vector<std::uint8_t>& cell_occ, int cx, int cy, int cz) {
    const std::size_t n = cell_occ.size();
    std::vector<int> label(n, -1);
    auto cell_at = [&](int i, int j, int k) {
        return std::size_t(i) + std::size_t(cx) * (std::size_t(j) + std::size_t(cy) * k);
    };
    int best_label = -1, next = 0;
    std::size_t best_size = 0;
    for (std::size_t seed = 0; seed < n; ++seed) {
        if (!cell_occ[seed] || label[seed] >= 0) continue;
        std::size_t size = 0;
        std::deque<std::size_t> queue{seed};
        label[seed] = next;
        while (!queue.empty()) {
            std::size_t c = queue.front();
            queue.pop_front();
            ++size;
            int i = int(c % cx), j = int((c / cx) % cy), k = int(c / (std::size_t(cx) * cy));
            const int di[6] = {1, -1, 0, 0, 0, 0};
            const int dj[6] = {0, 0, 1, -1, 0, 0};
            const int dk[6] = {0, 0, 0, 0, 1, -1};
            for (int d = 0; d < 6; ++d) {
                int ni = i + di[d], nj = j + dj[d], nk = k + dk[d];
                if (ni < 0 || nj < 0 || nk < 0 || ni >= cx || nj >= cy || nk >= cz) continue;
                std::size_t nc = cell_at(ni, nj, nk);
                if (cell_occ[nc] && label[nc] < 0) {
                    label[nc] = next;
                    queue.push_back(nc);
                }
            }
        }
        if (size > best_size) {
            best_size = size;
            best_label = next;
        }
        ++next;
    }
    for (std::size_t c = 0; c < n; ++c)
        if (cell_occ[c] && label[c] != best_label) cell_occ[c] = 0;
}

} // namespace

long extraction_count() { return g_extractions.load(); }
void reset_extraction_count() { g_extractions.store(0); }

HexMesh extract_foreground_hexmesh(const fields::FieldBackend& model, int frame,
                                   const GridSpec& grid, const ExtractionConfig& cfg) {
    grid.validate();
    cfg.validate();
    g_extractions.fetch_add(1);

    HexMesh mesh;
    mesh.vertices.resize(0, 3);
    mesh.rest_vertices.resize(0, 3);
    mesh.hexes.resize(0, 8);
    const int nx = grid.dims[0], ny = grid.dims[1], nz = grid.dims[2];
    const int cx = nx - 1, cy = ny - 1, cz = nz - 1;
    if (cx < 1 || cy < 1 || cz < 1) return mesh;

    std::vector<std::uint8_t> occ = point_occupancy(model, frame, grid, cfg);

    std::vector<std::uint8_t> cell_occ(std::size_t(cx) * cy * cz, 0);
    std::size_t n_cells = 0;
    for (int k = 0; k < cz; ++k)
        for (int j = 0; j < cy; ++j)
            for (int i = 0; i < cx; ++i) {
                bool all = true;
                for (int c = 0; c < 8 && all; ++c)
                    all = occ[grid.point_index(i + (c & 1), j + ((c >> 1) & 1), k + ((c >> 2) & 1))];
                if (all) {
                    cell_occ[std::size_t(i) + std::size_t(cx) * (std::size_t(j) + std::size_t(cy) * k)] = 1;
                    ++n_cells;
                }
            }
    if (n_cells == 0) return mesh;

    if (cfg.largest_component) keep_largest_component(cell_occ, cx, cy, cz);

    // Vertex ids in ascending lattice order, shared between adjacent cells.
    std::vector<int> vid(grid.n_points(), -1);
    for (int k = 0; k < cz; ++k)
        for (int j = 0; j < cy; ++j)
            for (int i = 0; i < cx; ++i) {
                if (!cell_occ[std::size_t(i) + std::size_t(cx) * (std::size_t(j) + std::size_t(cy) * k)])
                    continue;
                for (int c = 0; c < 8; ++c)
                    vid[grid.point_index(i + (c & 1), j + ((c >> 1) & 1), k + ((c >> 2) & 1))] = 0;
            }
    int n_v = 0;
    for (std::size_t t = 0; t < vid.size(); ++t)
        if (vid[t] == 0) vid[t] = n_v++;

    std::size_t n_e = 0;
    for (std::uint8_t c : cell_occ) n_e += c;
    mesh.vertices.resize(n_v, 3);
    for (std::size_t t = 0; t < vid.size(); ++t) {
        if (vid[t] < 0) continue;
        int i = int(t % nx), j = int((t / nx) % ny), k = int(t / (std::size_t(nx) * ny));
        mesh.vertices.row(vid[t]) = grid.point(i, j, k).transpose();
    }
    mesh.rest_vertices = mesh.vertices;
    mesh.hexes.resize(Eigen::Index(n_e), 8);
    Eigen::Index row = 0;
    for (int k = 0; k < cz; ++k)
        for (int j = 0; j < cy; ++j)
            for (int i = 0; i < cx; ++i) {
                if (!cell_occ[std::size_t(i) + std::size_t(cx) * (std::size_t(j) + std::size_t(cy) * k)])
                    continue;
                for (int c = 0; c < 8; ++c)
                    mesh.hexes(row, c) =
                        vid[grid.point_index(i + (c & 1), j + ((c >> 1) & 1), k + ((c >> 2) & 1))];
                ++row;
            }
    return mesh;
}

std::vector<std::uint8_t> motion_magnitude_mask(const fields::FieldBackend& model, int frame,
                                                const GridSpec& grid, double threshold) {
    grid.validate();
    require(threshold >= 0.0, "motion mask: threshold must be >= 0");
    const int nx = grid.dims[0], ny = grid.dims[1];
    const std::size_t n = grid.n_points();
    std::vector<std::uint8_t> occ(n, 0);
    parallel_for_ranges(n, [&](std::size_t lo, std::size_t hi) {
        if (lo >= hi) return;
        MatX P(hi - lo, 3);
        for (std::size_t t = lo; t < hi; ++t) {
            int i = int(t % nx), j = int((t / nx) % ny), k = int(t / (std::size_t(nx) * ny));
            P.row(t - lo) = grid.point(i, j, k).transpose();
        }
        MatX b = model.gated_offset(frame, P);
        for (std::size_t t = lo; t < hi; ++t) occ[t] = b.row(t - lo).norm() > threshold ? 1 : 0;
    });
    return occ;
}

namespace {

struct CellKey {
    long long x, y, z;
    bool operator==(const CellKey& o) const { return x == o.x && y == o.y && z == o.z; }
};
struct CellKeyHash {
    std::size_t operator()(const CellKey& k) const {
        std::size_t h = std::hash<long long>()(k.x);
        h ^= std::hash<long long>()(k.y) + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
        h ^= std::hash<long long>()(k.z) + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
        return h;
    }
};

// Exact nearest neighbours through a uniform hash: cells at Chebyshev ring R+1
// hold points at least R*h away, so the search stops once best <= R*h. The
// cell size comes from the joint extent of both clouds, which caps the ring
// count near cbrt(n) even for distant queries or single-point targets.
double mean_nn_distance(const MatX& from, const MatX& to) {
    const double h = [&] {
        Eigen::RowVector3d lo = to.colwise().minCoeff().cwiseMin(from.colwise().minCoeff());
        Eigen::RowVector3d hi = to.colwise().maxCoeff().cwiseMax(from.colwise().maxCoeff());
        double diam = (hi - lo).norm();
        return std::max(1e-12, diam / std::cbrt(double(to.rows()) + 1.0));
    }();
    std::unordered_map<CellKey, std::vector<int>, CellKeyHash> cells;
    auto key_of = [h](const Vec3& p) {
        return CellKey{(long long)std::floor(p.x() / h), (long long)std::floor(p.y() / h),
                       (long long)std::floor(p.z() / h)};
    };
    for (Eigen::Index b = 0; b < to.rows(); ++b) cells[key_of(to.row(b))].push_back(int(b));

    double sum = 0.0;
    for (Eigen::Index a = 0; a < from.rows(); ++a) {
        Vec3 p = from.row(a);
        CellKey c = key_of(p);
        double best_sq = std::numeric_limits<double>::infinity();
        for (long long R = 0;; ++R) {
            for (long long dz = -R; dz <= R; ++dz)
                for (long long dy = -R; dy <= R; ++dy)
                    for (long long dx = -R; dx <= R; ++dx) {
                        if (std::max({std::llabs(dx), std::llabs(dy), std::llabs(dz)}) != R) continue;
                        auto it = cells.find(CellKey{c.x + dx, c.y + dy, c.z + dz});
                        if (it == cells.end()) continue;
                        for (int b : it->second)
                            best_sq = std::min(best_sq, (p - Vec3(to.row(b))).squaredNorm());
                    }
            if (best_sq <= double(R) * h * double(R) * h) break;
        }
        sum += std::sqrt(best_sq);
    }
    return sum / double(from.rows());
}

} // namespace

double chamfer_distance(const MatX& a, const MatX& b) {
    require(a.rows() > 0 && b.rows() > 0, "chamfer: point sets must be nonempty");
    require(a.cols() == 3 && b.cols() == 3, "chamfer: points must be 3d");
    return 0.5 * mean_nn_distance(a, b) + 0.5 * mean_nn_distance(b, a);
}

void write_obj(const std::string& path, const SurfaceMesh& mesh) {
    std::ofstream out(path);
    require(out.good(), "obj: cannot open " + path);
    char line[128];
    for (Eigen::Index v = 0; v < mesh.vertices.rows(); ++v) {
        std::snprintf(line, sizeof line, "v %.17g %.17g %.17g\n", mesh.vertices(v, 0),
                      mesh.vertices(v, 1), mesh.vertices(v, 2));
        out << line;
    }
    for (Eigen::Index t = 0; t < mesh.triangles.rows(); ++t)
        out << "f " << mesh.triangles(t, 0) + 1 << ' ' << mesh.triangles(t, 1) + 1 << ' '
            << mesh.triangles(t, 2) + 1 << '\n';
    out.flush();
    require(out.good(), "obj: write failed for " + path);
}

void write_vtk(const std::string& path, const HexMesh& mesh) {
    std::ofstream out(path);
    require(out.good(), "vtk: cannot open " + path);
    out << "# vtk DataFile Version 3.0\n";
    out << "hexahedral mesh\n";
    out << "ASCII\n";
    out << "DATASET UNSTRUCTURED_GRID\n";
    out << "POINTS " << mesh.vertices.rows() << " double\n";
    char line[128];
    for (Eigen::Index v = 0; v < mesh.vertices.rows(); ++v) {
        std::snprintf(line, sizeof line, "%.17g %.17g %.17g\n", mesh.vertices(v, 0),
                      mesh.vertices(v, 1), mesh.vertices(v, 2));
        out << line;
    }
    out << "CELLS " << mesh.hexes.rows() << ' ' << mesh.hexes.rows() * 9 << '\n';
    for (Eigen::Index e = 0; e < mesh.hexes.rows(); ++e) {
        out << 8;
        for (int c = 0; c < 8; ++c) out << ' ' << mesh.hexes(e, c);
        out << '\n';
    }
    out << "CELL_TYPES " << mesh.hexes.rows() << '\n';
    for (Eigen::Index e = 0; e < mesh.hexes.rows(); ++e) out << "12\n";
    out.flush();
    require(out.good(), "vtk: write failed for " + path);
}

} // namespace neusim::geom
