#pragma once

#include "neusim/core/types.hpp"

namespace neusim::render {

struct Ray {
    Vec3 o = Vec3::Zero();
    Vec3 v = Vec3::UnitZ();  // unit direction
    double t_near = 0.0;
    double t_far = 1.0;
};

// Pinhole camera with a camera-to-world pose (p_world = R p_cam + t).
// Pixel (x, y) covers [x, x+1) x [y, y+1); rays go through pixel centers, and
// project() returns continuous pixel coordinates in the same convention.
struct Camera {
    double fx = 100.0, fy = 100.0;
    double cx = 32.0, cy = 32.0;
    int width = 64, height = 64;
    Mat3 R = Mat3::Identity();
    Vec3 t = Vec3::Zero();
    double t_near = 0.1, t_far = 4.0;

    void validate() const {
        require((R.transpose() * R - Mat3::Identity()).norm() < 1e-9,
                "camera: rotation must be orthonormal");
        require(t_near > 0.0 && t_near < t_far, "camera: need 0 < t_near < t_far");
        require(width > 0 && height > 0, "camera: image size must be positive");
    }

    Ray generate_ray(int x, int y) const;
    Vec3 forward() const { return R.col(2); }

    // Continuous pixel coordinates (u, v) plus camera-space depth as .z().
    Vec3 project(const Vec3& p_world) const;
};

} // namespace neusim::render
