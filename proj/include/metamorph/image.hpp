#ifndef METAMORPH_IMAGE_HPP
#define METAMORPH_IMAGE_HPP

#include <vector>

namespace metamorph {

/// Nodal grayscale intensity field on the unit square [0,1]^2.
/// values are row-major, values[y*width + x]; node spacing is
/// 1/(width-1) x 1/(height-1). Intensities are unconstrained in-memory;
/// clamping to [0,1] happens only on file output.
struct ImageGrid {
    int width = 0;
    int height = 0;
    std::vector<double> values;

    double hx() const { return 1.0 / (width - 1); }
    double hy() const { return 1.0 / (height - 1); }

    double& at(int x, int y) { return values[static_cast<size_t>(y) * width + x]; }
    double at(int x, int y) const { return values[static_cast<size_t>(y) * width + x]; }

    bool same_dims(const ImageGrid& other) const {
        return width == other.width && height == other.height;
    }
};

ImageGrid make_image(int width, int height, double fill = 0.0);

/// Trapezoidal quadrature weights per node: hx*hy scaled by 1, 1/2, 1/4
/// for interior, edge, corner nodes. Weights sum to exactly 1.
std::vector<double> node_weights(int width, int height);

/// Bilinear interpolation of the nodal values at (x, y), with the sample
/// point clamped componentwise into [0,1]^2 first. Exact at nodes.
double sample_bilinear(const ImageGrid& img, double x, double y);

/// Weighted L2 distance sqrt(sum_i w_i (a_i - b_i)^2) with trapezoidal
/// node weights. Zero iff a == b.
double l2_distance(const ImageGrid& a, const ImageGrid& b);
double l2_distance_sq(const ImageGrid& a, const ImageGrid& b);

/// Nodewise (1-t)*a + t*b. t=0 and t=1 reproduce the inputs bit-exactly.
ImageGrid linear_blend(const ImageGrid& a, const ImageGrid& b, double t);

/// Coarsen by one dyadic level (2m+1 -> m+1 nodes per side): full weighting
/// at interior coarse nodes, injection on the boundary. Requires both sides
/// odd and >= 3.
ImageGrid restrict_grid(const ImageGrid& img);

/// Bilinear resample to target_width x target_height.
ImageGrid prolongate_grid(const ImageGrid& img, int target_width, int target_height);

/// Resolution hierarchy, levels[0] coarsest, levels.back() the source
/// image bit-exactly.
struct GridPyramid {
    std::vector<ImageGrid> levels;
};

GridPyramid make_pyramid(const ImageGrid& finest, int num_levels);

} // namespace metamorph

#endif
