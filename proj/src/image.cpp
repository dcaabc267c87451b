#include "neusim/render/image.hpp"

#include <cmath>

namespace neusim::render {

double psnr(const Image& img, const Image& ref) {
    require(img.width == ref.width && img.height == ref.height, "psnr: dimension mismatch");
    double mse = 0.0;
    for (std::size_t k = 0; k < img.rgb.size(); ++k) {
        double d = img.rgb[k] - ref.rgb[k];
        mse += d * d;
    }
    mse /= static_cast<double>(img.rgb.size());
    if (mse <= 0.0) return 99.0;
    return std::min(99.0, 10.0 * std::log10(1.0 / mse));
}

namespace {

double ssim_channel(const Image& a, const Image& b, int c) {
    constexpr int W = 8;
    constexpr double C1 = 0.01 * 0.01, C2 = 0.03 * 0.03;
    const int nx = a.width - W + 1, ny = a.height - W + 1;
    // Images smaller than one window: single window over everything.
    const int wx = a.width >= W ? W : a.width;
    const int wy = a.height >= W ? W : a.height;
    const int mx = std::max(nx, 1), my = std::max(ny, 1);
    double total = 0.0;
    for (int y0 = 0; y0 < my; ++y0)
        for (int x0 = 0; x0 < mx; ++x0) {
            double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
            const double n = static_cast<double>(wx) * wy;
            for (int y = y0; y < y0 + wy; ++y)
                for (int x = x0; x < x0 + wx; ++x) {
                    double va = a.at(x, y, c), vb = b.at(x, y, c);
                    sa += va;
                    sb += vb;
                    saa += va * va;
                    sbb += vb * vb;
                    sab += va * vb;
                }
            double mua = sa / n, mub = sb / n;
            double vara = saa / n - mua * mua, varb = sbb / n - mub * mub;
            double cov = sab / n - mua * mub;
            double val = ((2 * mua * mub + C1) * (2 * cov + C2)) /
                         ((mua * mua + mub * mub + C1) * (vara + varb + C2));
            total += val;
        }
    return total / (static_cast<double>(mx) * my);
}

} // namespace

double ssim(const Image& img, const Image& ref) {
    require(img.width == ref.width && img.height == ref.height, "ssim: dimension mismatch");
    double s = 0.0;
    for (int c = 0; c < 3; ++c) s += ssim_channel(img, ref, c);
    return s / 3.0;
}

} // namespace neusim::render
