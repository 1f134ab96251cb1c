#pragma once

#include "metamorph/image.hpp"

namespace metamorph {

/// Test-scene generators. All shapes are signed-distance profiles smoothed
/// over an `edge` band (in domain units), so the images have the moderate
/// gradients the registration term needs; edge must be positive.

ImageGrid gaussian_bump(int width, int height, double cx, double cy, double sigma,
                        double amplitude = 1.0);

ImageGrid filled_disk(int width, int height, double cx, double cy, double radius, double edge);

/// Annulus of the given center-line radius and band thickness.
ImageGrid ring(int width, int height, double cx, double cy, double radius, double thickness,
               double edge);

/// Axis-aligned square of the given half side length.
ImageGrid filled_square(int width, int height, double cx, double cy, double half_side,
                        double edge);

/// Equilateral triangle with circumradius `radius`, one vertex on the
/// vertical axis through the center.
ImageGrid filled_triangle(int width, int height, double cx, double cy, double radius,
                          double edge);

} // namespace metamorph
