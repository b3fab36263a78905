#pragma once

#include "p2d/image.hpp"

namespace p2d {

inline constexpr int kStructureWindow = 8;

/// Mean SSIM over all 8×8 windows (stride 1, uniform weights, population statistics,
/// C1 = 0.01², C2 = 0.03² for unit dynamic range) of the gray versions of a and b.
/// Throws ShapeError for mismatched sizes, WindowError below one window.
double structure_score(const PlaneD& a, const PlaneD& b);
double structure_score(const ImageD& a, const ImageD& b);

}  // namespace p2d
