#include "metamorph/image.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace metamorph {

namespace {

void check_min_dims(int width, int height) {
    if (width < 2 || height < 2) {
        throw std::invalid_argument("ImageGrid requires at least 2x2 nodes, got " +
                                    std::to_string(width) + "x" + std::to_string(height));
    }
}

void check_same_dims(const ImageGrid& a, const ImageGrid& b, const char* op) {
    if (!a.same_dims(b)) {
        throw std::invalid_argument(std::string(op) + ": dimension mismatch (" +
                                    std::to_string(a.width) + "x" + std::to_string(a.height) + " vs " +
                                    std::to_string(b.width) + "x" + std::to_string(b.height) + ")");
    }
}

} // namespace

ImageGrid make_image(int width, int height, double fill) {
    check_min_dims(width, height);
    ImageGrid img;
    img.width = width;
    img.height = height;
    img.values.assign(static_cast<size_t>(width) * height, fill);
    return img;
}

std::vector<double> node_weights(int width, int height) {
    const double hx = 1.0 / (width - 1);
    const double hy = 1.0 / (height - 1);
    std::vector<double> w(static_cast<size_t>(width) * height);
    for (int y = 0; y < height; ++y) {
        const double cy = (y == 0 || y == height - 1) ? 0.5 : 1.0;
        for (int x = 0; x < width; ++x) {
            const double cx = (x == 0 || x == width - 1) ? 0.5 : 1.0;
            w[static_cast<size_t>(y) * width + x] = hx * hy * cx * cy;
        }
    }
    return w;
}

double sample_bilinear(const ImageGrid& img, double x, double y) {
    x = std::clamp(x, 0.0, 1.0);
    y = std::clamp(y, 0.0, 1.0);
    const double u = x * (img.width - 1);
    const double v = y * (img.height - 1);
    int ix = std::min(static_cast<int>(u), img.width - 2);
    int iy = std::min(static_cast<int>(v), img.height - 2);
    const double fx = u - ix;
    const double fy = v - iy;
    const double v00 = img.at(ix, iy);
    const double v10 = img.at(ix + 1, iy);
    const double v01 = img.at(ix, iy + 1);
    const double v11 = img.at(ix + 1, iy + 1);
    return (1.0 - fy) * ((1.0 - fx) * v00 + fx * v10) + fy * ((1.0 - fx) * v01 + fx * v11);
}

double l2_distance_sq(const ImageGrid& a, const ImageGrid& b) {
    check_same_dims(a, b, "l2_distance");
    const double hx = a.hx();
    const double hy = a.hy();
    double sum = 0.0;
    for (int y = 0; y < a.height; ++y) {
        const double cy = (y == 0 || y == a.height - 1) ? 0.5 : 1.0;
        const size_t row = static_cast<size_t>(y) * a.width;
        double row_sum = 0.0;
        for (int x = 0; x < a.width; ++x) {
            const double cx = (x == 0 || x == a.width - 1) ? 0.5 : 1.0;
            const double d = a.values[row + x] - b.values[row + x];
            row_sum += cx * d * d;
        }
        sum += cy * row_sum;
    }
    return hx * hy * sum;
}

double l2_distance(const ImageGrid& a, const ImageGrid& b) {
    return std::sqrt(l2_distance_sq(a, b));
}

ImageGrid linear_blend(const ImageGrid& a, const ImageGrid& b, double t) {
    check_same_dims(a, b, "linear_blend");
    ImageGrid out = a;
    const double s = 1.0 - t;
    for (size_t i = 0; i < out.values.size(); ++i) {
        out.values[i] = s * a.values[i] + t * b.values[i];
    }
    return out;
}

ImageGrid restrict_grid(const ImageGrid& img) {
    if (img.width < 3 || img.height < 3) {
        throw std::invalid_argument("restrict_grid: grid too small (" + std::to_string(img.width) +
                                    "x" + std::to_string(img.height) + "), need >= 3 per side");
    }
    if (img.width % 2 == 0 || img.height % 2 == 0) {
        throw std::invalid_argument("restrict_grid: node counts must be odd for 2:1 coarsening");
    }
    const int cw = (img.width + 1) / 2;
    const int ch = (img.height + 1) / 2;
    ImageGrid out = make_image(cw, ch);
    for (int cy = 0; cy < ch; ++cy) {
        for (int cx = 0; cx < cw; ++cx) {
            const int fx = 2 * cx;
            const int fy = 2 * cy;
            if (cx == 0 || cx == cw - 1 || cy == 0 || cy == ch - 1) {
                out.at(cx, cy) = img.at(fx, fy);
                continue;
            }
            // full weighting: 1/4 center, 1/8 edge neighbors, 1/16 corners
            double v = 0.25 * img.at(fx, fy);
            v += 0.125 * (img.at(fx - 1, fy) + img.at(fx + 1, fy) +
                          img.at(fx, fy - 1) + img.at(fx, fy + 1));
            v += 0.0625 * (img.at(fx - 1, fy - 1) + img.at(fx + 1, fy - 1) +
                           img.at(fx - 1, fy + 1) + img.at(fx + 1, fy + 1));
            out.at(cx, cy) = v;
        }
    }
    return out;
}

ImageGrid prolongate_grid(const ImageGrid& img, int target_width, int target_height) {
    check_min_dims(target_width, target_height);
    ImageGrid out = make_image(target_width, target_height);
    const double thx = 1.0 / (target_width - 1);
    const double thy = 1.0 / (target_height - 1);
    for (int y = 0; y < target_height; ++y) {
        for (int x = 0; x < target_width; ++x) {
            out.at(x, y) = sample_bilinear(img, x * thx, y * thy);
        }
    }
    return out;
}

GridPyramid make_pyramid(const ImageGrid& finest, int num_levels) {
    if (num_levels < 1) {
        throw std::invalid_argument("make_pyramid: need at least one level");
    }
    GridPyramid pyr;
    pyr.levels.resize(num_levels);
    pyr.levels[num_levels - 1] = finest;
    for (int l = num_levels - 2; l >= 0; --l) {
        pyr.levels[l] = restrict_grid(pyr.levels[l + 1]);
    }
    return pyr;
}

} // namespace metamorph
