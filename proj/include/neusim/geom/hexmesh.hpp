#pragma once

#include "neusim/fields/backend.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

namespace neusim::geom {

// Regular point lattice: point (i,j,k) sits at origin + spacing*(i,j,k).
// Linear point index is x-fastest: i + nx*(j + ny*k).
struct GridSpec {
    Vec3 origin = Vec3(-1, -1, -1);
    double spacing = 0.1;
    std::array<int, 3> dims = {21, 21, 21};  // points per axis

    void validate() const;
    std::size_t n_points() const {
        return std::size_t(dims[0]) * std::size_t(dims[1]) * std::size_t(dims[2]);
    }
    std::size_t point_index(int i, int j, int k) const {
        return std::size_t(i) + std::size_t(dims[0]) * (std::size_t(j) + std::size_t(dims[1]) * k);
    }
    Vec3 point(int i, int j, int k) const { return origin + spacing * Vec3(i, j, k); }
};

// Volume mesh of axis-aligned cells. Each row of hexes lists the 8 corners of
// one cell in x-fastest binary order: corner c has offsets ((c&1),(c>>1&1),(c>>2&1)).
struct HexMesh {
    MatX vertices;                                           // n_v x 3
    Eigen::Matrix<int, Eigen::Dynamic, 8, Eigen::RowMajor> hexes;  // n_e x 8
    MatX rest_vertices;                                      // n_v x 3 or 0x3

    std::size_t n_vertices() const { return std::size_t(vertices.rows()); }
    std::size_t n_hexes() const { return std::size_t(hexes.rows()); }
    bool empty() const { return n_hexes() == 0; }
};

struct SurfaceMesh {
    MatX vertices;                                                // n_v x 3
    Eigen::Matrix<int, Eigen::Dynamic, 3, Eigen::RowMajor> triangles;  // n_t x 3

    std::size_t n_vertices() const { return std::size_t(vertices.rows()); }
    std::size_t n_triangles() const { return std::size_t(triangles.rows()); }
    double total_area() const;
};

struct ExtractionConfig {
    double k_sdf = 0.0;
    double k_rigidity = 0.2;
    std::optional<Aabb> region;       // keep only lattice points inside, if set
    bool largest_component = true;    // drop all but the biggest 6-connected cell blob

    void validate() const;
};

// Foreground solid for one frame: a lattice point p counts as occupied when
// the observed-space point p + gated_offset(frame, p) lands inside the static
// shape (sdf <= k_sdf) with rigidity >= k_rigidity, and p lies in `region`.
// A cell becomes a hex only if all 8 of its corners are occupied. Vertices are
// shared between adjacent hexes and ordered by ascending lattice index.
// rest_vertices is set equal to vertices.
HexMesh extract_foreground_hexmesh(const fields::FieldBackend& model, int frame,
                                   const GridSpec& grid, const ExtractionConfig& cfg);

// Process-wide count of extract_foreground_hexmesh calls; lets callers assert
// how often a pipeline re-meshes.
long extraction_count();
void reset_extraction_count();

// Segmentation baseline: occupancy over lattice points by motion magnitude,
// occupied iff ||gated_offset(frame, p)|| > threshold. x-fastest indexing.
std::vector<std::uint8_t> motion_magnitude_mask(const fields::FieldBackend& model, int frame,
                                                const GridSpec& grid, double threshold);

// Iso-surface of a scalar field sampled on the lattice; 256-case tables with
// linear edge interpolation. Closed (watertight) whenever the iso-surface does
// not cross the lattice boundary.
SurfaceMesh marching_cubes(const std::function<double(const Vec3&)>& field, const GridSpec& grid,
                           double iso = 0.0);

// Symmetric point-cloud distance:
// 0.5*mean_a min_b ||a-b|| + 0.5*mean_b min_a ||a-b||.
double chamfer_distance(const MatX& a, const MatX& b);

// Plain text exports with deterministic ordering.
void write_obj(const std::string& path, const SurfaceMesh& mesh);
void write_vtk(const std::string& path, const HexMesh& mesh);

} // namespace neusim::geom
