#include "metamorph/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>

namespace metamorph {

namespace {

/// Fills a grid from a signed distance (negative inside), mapped to [0,1]
/// intensity through a cubic smoothstep over the edge band.
ImageGrid from_sdf(int width, int height, double edge,
                   const std::function<double(double, double)>& sdf) {
    if (!(edge > 0.0)) {
        throw std::invalid_argument("synthetic shapes need a positive edge width");
    }
    ImageGrid img = make_image(width, height);
    const double hx = img.hx();
    const double hy = img.hy();
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            const double s = std::clamp(0.5 - sdf(x * hx, y * hy) / edge, 0.0, 1.0);
            img.at(x, y) = s * s * (3.0 - 2.0 * s);
        }
    }
    return img;
}

} // namespace

ImageGrid gaussian_bump(int width, int height, double cx, double cy, double sigma,
                        double amplitude) {
    if (!(sigma > 0.0)) {
        throw std::invalid_argument("gaussian_bump: sigma must be positive");
    }
    ImageGrid img = make_image(width, height);
    const double hx = img.hx();
    const double hy = img.hy();
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            const double dx = x * hx - cx;
            const double dy = y * hy - cy;
            img.at(x, y) = amplitude * std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
        }
    }
    return img;
}

ImageGrid filled_disk(int width, int height, double cx, double cy, double radius, double edge) {
    return from_sdf(width, height, edge, [=](double x, double y) {
        return std::hypot(x - cx, y - cy) - radius;
    });
}

ImageGrid ring(int width, int height, double cx, double cy, double radius, double thickness,
               double edge) {
    return from_sdf(width, height, edge, [=](double x, double y) {
        return std::abs(std::hypot(x - cx, y - cy) - radius) - 0.5 * thickness;
    });
}

ImageGrid filled_square(int width, int height, double cx, double cy, double half_side,
                        double edge) {
    return from_sdf(width, height, edge, [=](double x, double y) {
        return std::max(std::abs(x - cx), std::abs(y - cy)) - half_side;
    });
}

ImageGrid filled_triangle(int width, int height, double cx, double cy, double radius,
                          double edge) {
    const double k = std::sqrt(3.0);
    return from_sdf(width, height, edge, [=](double x, double y) {
        double px = std::abs(x - cx) - radius * 0.5 * k;
        double py = (y - cy) + radius * 0.5;
        if (px + k * py > 0.0) {
            const double nx = (px - k * py) / 2.0;
            const double ny = (-k * px - py) / 2.0;
            px = nx;
            py = ny;
        }
        px -= std::clamp(px, -radius * k, 0.0);
        return -std::hypot(px, py) * (py < 0.0 ? -1.0 : 1.0);
    });
}

} // namespace metamorph
