#pragma once

#include <vector>

#include "reflect/geometry.hpp"
#include "reflect/image.hpp"

namespace reflect {

using EdgeMap = Mask;
using ValidityMask = Mask;

struct Gradient {
    Grid<double> gx;
    Grid<double> gy;

    double magnitude(int x, int y) const { return std::hypot(gx(x, y), gy(x, y)); }
};

/// Central differences in the interior, one-sided differences on the border.
/// Operates on channel `c` of the frame.
Gradient spatial_gradient(const Frame& frame, int c = 0);

/// Separable Gaussian blur with replicated borders; radius = ceil(3 sigma).
Frame gaussian_blur(const Frame& frame, double sigma);

/// Canny edges of a single-channel frame: Gaussian smoothing (sigma 1.4),
/// 3x3 Sobel gradients, non-maximum suppression and hysteresis. Thresholds
/// apply to the raw Sobel magnitude of [0,1] intensities.
EdgeMap canny(const Frame& frame, double low = 0.1, double high = 0.2);

/// Bilinear sample with border clamping.
double sample_bilinear(const Frame& frame, double x, double y, int c = 0);

struct WarpResult {
    Frame frame;
    ValidityMask valid;
};

/// Inverse-mapped bilinear warp: output(p) = frame(H^-1 p). Pixels whose
/// source falls outside [0,W-1]x[0,H-1] are zero and flagged invalid.
WarpResult warp_homography(const Frame& frame, const Homography& h);

/// Level 0 is the input; each further level is blurred (sigma 1) and halved.
std::vector<Frame> gaussian_pyramid(const Frame& frame, int levels);

}  // namespace reflect
