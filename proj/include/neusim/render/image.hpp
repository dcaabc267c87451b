#pragma once

#include "neusim/core/types.hpp"

#include <vector>

namespace neusim::render {

// Row-major RGB image with values in [0,1].
struct Image {
    int width = 0;
    int height = 0;
    std::vector<double> rgb;  // size 3*width*height

    Image() = default;
    Image(int w, int h, const Vec3& fill = Vec3::Zero()) : width(w), height(h) {
        require(w > 0 && h > 0, "image: size must be positive");
        rgb.resize(static_cast<std::size_t>(3) * w * h);
        for (int i = 0; i < w * h; ++i)
            for (int c = 0; c < 3; ++c) rgb[static_cast<std::size_t>(3) * i + c] = fill[c];
    }

    double& at(int x, int y, int c) {
        return rgb[3 * (static_cast<std::size_t>(y) * width + x) + c];
    }
    double at(int x, int y, int c) const {
        return rgb[3 * (static_cast<std::size_t>(y) * width + x) + c];
    }
    void set(int x, int y, const Vec3& v) {
        for (int c = 0; c < 3; ++c) at(x, y, c) = std::min(std::max(v[c], 0.0), 1.0);
    }
    Vec3 get(int x, int y) const { return Vec3(at(x, y, 0), at(x, y, 1), at(x, y, 2)); }
};

// PSNR with peak 1.0, capped at 99 dB (returned exactly for identical images).
double psnr(const Image& img, const Image& ref);

// Mean SSIM over 8x8 sliding windows (uniform weights, standard constants
// C1=0.01^2, C2=0.03^2), computed per channel and averaged.
double ssim(const Image& img, const Image& ref);

} // namespace neusim::render
