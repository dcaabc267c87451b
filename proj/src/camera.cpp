#include "neusim/render/camera.hpp"

namespace neusim::render {

Ray Camera::generate_ray(int x, int y) const {
    require(x >= 0 && x < width && y >= 0 && y < height, "camera: pixel out of bounds");
    double u = (static_cast<double>(x) + 0.5 - cx) / fx;
    double v = (static_cast<double>(y) + 0.5 - cy) / fy;
    Vec3 dir_cam(u, v, 1.0);
    Vec3 dir = (R * dir_cam).normalized();
    return Ray{t, dir, t_near, t_far};
}

Vec3 Camera::project(const Vec3& p_world) const {
    Vec3 pc = R.transpose() * (p_world - t);
    require(pc.z() > 0.0, "camera: point behind the camera");
    return Vec3(fx * pc.x() / pc.z() + cx, fy * pc.y() / pc.z() + cy, pc.z());
}

} // namespace neusim::render
