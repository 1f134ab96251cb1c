#include "metamorph/deformation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace metamorph {

namespace {

void check_dims(const DeformationField& phi, const ImageGrid& img, const char* op) {
    if (!phi.same_dims(img)) {
        throw std::invalid_argument(std::string(op) + ": deformation/image dimension mismatch");
    }
}

void check_params(double delta, double gamma, const char* op) {
    if (!(delta > 0.0) || !(gamma > 0.0)) {
        throw std::invalid_argument(std::string(op) + ": delta and gamma must be positive");
    }
}

// Bilinear sample of img at clamped (x, y) together with the spatial
// gradient of the interpolant. The gradient is zeroed in a component
// whose clamp was active, matching the derivative of the clamped map.
void sample_with_gradient(const ImageGrid& img, double x, double y,
                          double& value, double& gx, double& gy) {
    const bool clamped_x = (x < 0.0) || (x > 1.0);
    const bool clamped_y = (y < 0.0) || (y > 1.0);
    x = std::clamp(x, 0.0, 1.0);
    y = std::clamp(y, 0.0, 1.0);
    const double u = x * (img.width - 1);
    const double v = y * (img.height - 1);
    const int ix = std::min(static_cast<int>(u), img.width - 2);
    const int iy = std::min(static_cast<int>(v), img.height - 2);
    const double fx = u - ix;
    const double fy = v - iy;
    const double v00 = img.at(ix, iy);
    const double v10 = img.at(ix + 1, iy);
    const double v01 = img.at(ix, iy + 1);
    const double v11 = img.at(ix + 1, iy + 1);
    value = (1.0 - fy) * ((1.0 - fx) * v00 + fx * v10) + fy * ((1.0 - fx) * v01 + fx * v11);
    gx = clamped_x ? 0.0 : ((1.0 - fy) * (v10 - v00) + fy * (v11 - v01)) * (img.width - 1);
    gy = clamped_y ? 0.0 : ((1.0 - fx) * (v01 - v00) + fx * (v11 - v10)) * (img.height - 1);
}

} // namespace

DeformationField identity_field(int width, int height) {
    if (width < 2 || height < 2) {
        throw std::invalid_argument("identity_field: need at least 2x2 nodes");
    }
    DeformationField phi;
    phi.width = width;
    phi.height = height;
    phi.vx.assign(static_cast<size_t>(width) * height, 0.0);
    phi.vy.assign(static_cast<size_t>(width) * height, 0.0);
    return phi;
}

ImageGrid warp_image(const ImageGrid& u, const DeformationField& phi) {
    check_dims(phi, u, "warp_image");
    ImageGrid out = make_image(u.width, u.height);
    const double hx = u.hx();
    const double hy = u.hy();
    for (int y = 0; y < u.height; ++y) {
        for (int x = 0; x < u.width; ++x) {
            const size_t i = phi.idx(x, y);
            const double px = x * hx + phi.vx[i];
            const double py = y * hy + phi.vy[i];
            out.values[i] = sample_bilinear(u, px, py);
        }
    }
    return out;
}

double dirichlet_energy(const DeformationField& phi) {
    const int w = phi.width;
    const int h = phi.height;
    const double hx = phi.hx();
    const double hy = phi.hy();
    const double ax = 1.0 / (2.0 * hx);
    const double ay = 1.0 / (2.0 * hy);
    double sum = 0.0;
    for (int y = 0; y + 1 < h; ++y) {
        const size_t r0 = static_cast<size_t>(y) * w;
        const size_t r1 = r0 + w;
        for (int x = 0; x + 1 < w; ++x) {
            const double dxvx = ax * (phi.vx[r0 + x + 1] - phi.vx[r0 + x] + phi.vx[r1 + x + 1] - phi.vx[r1 + x]);
            const double dyvx = ay * (phi.vx[r1 + x] - phi.vx[r0 + x] + phi.vx[r1 + x + 1] - phi.vx[r0 + x + 1]);
            const double dxvy = ax * (phi.vy[r0 + x + 1] - phi.vy[r0 + x] + phi.vy[r1 + x + 1] - phi.vy[r1 + x]);
            const double dyvy = ay * (phi.vy[r1 + x] - phi.vy[r0 + x] + phi.vy[r1 + x + 1] - phi.vy[r0 + x + 1]);
            sum += dxvx * dxvx + dyvx * dyvx + dxvy * dxvy + dyvy * dyvy;
        }
    }
    return hx * hy * sum;
}

double laplacian_energy(const DeformationField& phi) {
    const int w = phi.width;
    const int h = phi.height;
    const double hx = phi.hx();
    const double hy = phi.hy();
    const double ix2 = 1.0 / (hx * hx);
    const double iy2 = 1.0 / (hy * hy);
    double sum = 0.0;
    for (int y = 1; y + 1 < h; ++y) {
        const size_t r = static_cast<size_t>(y) * w;
        for (int x = 1; x + 1 < w; ++x) {
            const size_t i = r + x;
            const double lx = ix2 * (phi.vx[i - 1] - 2.0 * phi.vx[i] + phi.vx[i + 1]) +
                              iy2 * (phi.vx[i - w] - 2.0 * phi.vx[i] + phi.vx[i + w]);
            const double ly = ix2 * (phi.vy[i - 1] - 2.0 * phi.vy[i] + phi.vy[i + 1]) +
                              iy2 * (phi.vy[i - w] - 2.0 * phi.vy[i] + phi.vy[i + w]);
            sum += lx * lx + ly * ly;
        }
    }
    return hx * hy * sum;
}

EnergyBreakdown matching_energy(const ImageGrid& u, const ImageGrid& utilde,
                                const DeformationField& phi, double delta, double gamma) {
    if (!u.same_dims(utilde)) {
        throw std::invalid_argument("matching_energy: image dimension mismatch");
    }
    check_dims(phi, u, "matching_energy");
    check_params(delta, gamma, "matching_energy");
    EnergyBreakdown e;
    e.dirichlet = dirichlet_energy(phi);
    e.laplacian = laplacian_energy(phi);
    e.mismatch = l2_distance_sq(u, warp_image(utilde, phi));
    e.total = e.dirichlet + gamma * e.laplacian + e.mismatch / delta;
    return e;
}

DeformationField matching_gradient(const ImageGrid& u, const ImageGrid& utilde,
                                   const DeformationField& phi, double delta, double gamma) {
    if (!u.same_dims(utilde)) {
        throw std::invalid_argument("matching_gradient: image dimension mismatch");
    }
    check_dims(phi, u, "matching_gradient");
    check_params(delta, gamma, "matching_gradient");

    const int w = phi.width;
    const int h = phi.height;
    const double hx = phi.hx();
    const double hy = phi.hy();
    DeformationField g = identity_field(w, h);

    // mismatch term: 2/delta * w_i * (utilde(phi(x_i)) - u(x_i)) * grad utilde(phi(x_i))
    const double mis_scale = 2.0 / delta;
    for (int y = 0; y < h; ++y) {
        const double cy = (y == 0 || y == h - 1) ? 0.5 : 1.0;
        for (int x = 0; x < w; ++x) {
            const double cx = (x == 0 || x == w - 1) ? 0.5 : 1.0;
            const size_t i = phi.idx(x, y);
            double val, gx, gy;
            sample_with_gradient(utilde, x * hx + phi.vx[i], y * hy + phi.vy[i], val, gx, gy);
            const double c = mis_scale * (hx * hy * cx * cy) * (val - u.values[i]);
            g.vx[i] = c * gx;
            g.vy[i] = c * gy;
        }
    }

    // Dirichlet term: adjoint of the per-cell edge-averaged differences
    const double ax = 1.0 / (2.0 * hx);
    const double ay = 1.0 / (2.0 * hy);
    const double cell_w = 2.0 * hx * hy;
    for (int y = 0; y + 1 < h; ++y) {
        const size_t r0 = static_cast<size_t>(y) * w;
        const size_t r1 = r0 + w;
        for (int x = 0; x + 1 < w; ++x) {
            for (int comp = 0; comp < 2; ++comp) {
                const std::vector<double>& vc = comp == 0 ? phi.vx : phi.vy;
                std::vector<double>& gc = comp == 0 ? g.vx : g.vy;
                const double dx = ax * (vc[r0 + x + 1] - vc[r0 + x] + vc[r1 + x + 1] - vc[r1 + x]);
                const double dy = ay * (vc[r1 + x] - vc[r0 + x] + vc[r1 + x + 1] - vc[r0 + x + 1]);
                const double cdx = cell_w * dx * ax;
                const double cdy = cell_w * dy * ay;
                gc[r0 + x] += -cdx - cdy;
                gc[r0 + x + 1] += cdx - cdy;
                gc[r1 + x] += -cdx + cdy;
                gc[r1 + x + 1] += cdx + cdy;
            }
        }
    }

    // Laplacian term: adjoint of the 5-point stencil over interior nodes
    const double ix2 = 1.0 / (hx * hx);
    const double iy2 = 1.0 / (hy * hy);
    const double lap_w = 2.0 * gamma * hx * hy;
    for (int y = 1; y + 1 < h; ++y) {
        const size_t r = static_cast<size_t>(y) * w;
        for (int x = 1; x + 1 < w; ++x) {
            const size_t i = r + x;
            for (int comp = 0; comp < 2; ++comp) {
                const std::vector<double>& vc = comp == 0 ? phi.vx : phi.vy;
                std::vector<double>& gc = comp == 0 ? g.vx : g.vy;
                const double l = ix2 * (vc[i - 1] - 2.0 * vc[i] + vc[i + 1]) +
                                 iy2 * (vc[i - w] - 2.0 * vc[i] + vc[i + w]);
                const double c = lap_w * l;
                gc[i] += -2.0 * c * (ix2 + iy2);
                gc[i - 1] += c * ix2;
                gc[i + 1] += c * ix2;
                gc[i - w] += c * iy2;
                gc[i + w] += c * iy2;
            }
        }
    }

    // boundary displacement is fixed at zero
    for (int x = 0; x < w; ++x) {
        g.vx[g.idx(x, 0)] = g.vy[g.idx(x, 0)] = 0.0;
        g.vx[g.idx(x, h - 1)] = g.vy[g.idx(x, h - 1)] = 0.0;
    }
    for (int y = 0; y < h; ++y) {
        g.vx[g.idx(0, y)] = g.vy[g.idx(0, y)] = 0.0;
        g.vx[g.idx(w - 1, y)] = g.vy[g.idx(w - 1, y)] = 0.0;
    }
    return g;
}

double min_det_jacobian(const DeformationField& phi) {
    const int w = phi.width;
    const int h = phi.height;
    const double ax = 1.0 / (2.0 * phi.hx());
    const double ay = 1.0 / (2.0 * phi.hy());
    double min_det = std::numeric_limits<double>::infinity();
    for (int y = 0; y + 1 < h; ++y) {
        const size_t r0 = static_cast<size_t>(y) * w;
        const size_t r1 = r0 + w;
        for (int x = 0; x + 1 < w; ++x) {
            const double dxvx = ax * (phi.vx[r0 + x + 1] - phi.vx[r0 + x] + phi.vx[r1 + x + 1] - phi.vx[r1 + x]);
            const double dyvx = ay * (phi.vx[r1 + x] - phi.vx[r0 + x] + phi.vx[r1 + x + 1] - phi.vx[r0 + x + 1]);
            const double dxvy = ax * (phi.vy[r0 + x + 1] - phi.vy[r0 + x] + phi.vy[r1 + x + 1] - phi.vy[r1 + x]);
            const double dyvy = ay * (phi.vy[r1 + x] - phi.vy[r0 + x] + phi.vy[r1 + x + 1] - phi.vy[r0 + x + 1]);
            const double det = (1.0 + dxvx) * (1.0 + dyvy) - dyvx * dxvy;
            min_det = std::min(min_det, det);
        }
    }
    return min_det;
}

} // namespace metamorph
