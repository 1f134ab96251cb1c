#ifndef METAMORPH_DEFORMATION_HPP
#define METAMORPH_DEFORMATION_HPP

#include <vector>

#include "metamorph/image.hpp"

namespace metamorph {

/// Nodal displacement field v with phi(x) = x + v(x). Displacements are in
/// domain units and vanish identically on the boundary nodes, so phi fixes
/// the boundary of the unit square.
struct DeformationField {
    int width = 0;
    int height = 0;
    std::vector<double> vx;
    std::vector<double> vy;

    double hx() const { return 1.0 / (width - 1); }
    double hy() const { return 1.0 / (height - 1); }
    size_t idx(int x, int y) const { return static_cast<size_t>(y) * width + x; }
    bool same_dims(const DeformationField& o) const { return width == o.width && height == o.height; }
    bool same_dims(const ImageGrid& img) const { return width == img.width && height == img.height; }
};

/// One-segment matching cost split into its three summands.
/// total = dirichlet + gamma*laplacian + mismatch/delta.
struct EnergyBreakdown {
    double dirichlet = 0.0;
    double laplacian = 0.0;
    double mismatch = 0.0;
    double total = 0.0;
};

/// Zero displacement on width x height nodes.
DeformationField identity_field(int width, int height);

/// Backward warp: output node x_i takes the value of u sampled at
/// x_i + v(x_i). Boundary values of u are reproduced exactly.
ImageGrid warp_image(const ImageGrid& u, const DeformationField& phi);

/// Finite-difference approximation of the integral of |Dv|^2: per-cell
/// edge-averaged forward differences, midpoint quadrature.
double dirichlet_energy(const DeformationField& phi);

/// 5-point-stencil Laplacian of each displacement component at interior
/// nodes, squared and trapezoid-summed.
double laplacian_energy(const DeformationField& phi);

/// The full matching cost of deforming utilde onto u's frame:
/// mismatch is the squared weighted L2 norm of utilde(phi(.)) - u.
EnergyBreakdown matching_energy(const ImageGrid& u, const ImageGrid& utilde,
                                const DeformationField& phi, double delta, double gamma);

/// Gradient of matching_energy total with respect to the interior
/// displacement degrees of freedom; boundary rows are identically zero.
DeformationField matching_gradient(const ImageGrid& u, const ImageGrid& utilde,
                                   const DeformationField& phi, double delta, double gamma);

/// Smallest determinant of D(phi) over cell midpoints. Diagnostic only;
/// local invertibility is not enforced anywhere.
double min_det_jacobian(const DeformationField& phi);

} // namespace metamorph

#endif
