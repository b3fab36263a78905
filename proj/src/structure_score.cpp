#include "p2d/structure_score.hpp"

#include "p2d/error.hpp"

namespace p2d {

double structure_score(const PlaneD& a, const PlaneD& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw Error(ErrorCode::ShapeError, "image sizes differ");
  if (a.rows() < kStructureWindow || a.cols() < kStructureWindow)
    throw Error(ErrorCode::WindowError, "image smaller than one 8x8 window");
  constexpr double c1 = 0.01 * 0.01;
  constexpr double c2 = 0.03 * 0.03;
  constexpr double n = kStructureWindow * kStructureWindow;
  double total = 0.0;
  long windows = 0;
  for (Eigen::Index y = 0; y + kStructureWindow <= a.rows(); ++y)
    for (Eigen::Index x = 0; x + kStructureWindow <= a.cols(); ++x) {
      const auto wa = a.block(y, x, kStructureWindow, kStructureWindow);
      const auto wb = b.block(y, x, kStructureWindow, kStructureWindow);
      const double ma = wa.sum() / n, mb = wb.sum() / n;
      const double va = (wa - ma).square().sum() / n;
      const double vb = (wb - mb).square().sum() / n;
      const double cov = ((wa - ma) * (wb - mb)).sum() / n;
      total += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
      ++windows;
    }
  return total / static_cast<double>(windows);
}

double structure_score(const ImageD& a, const ImageD& b) {
  if (a.height() != b.height() || a.width() != b.width()) throw Error(ErrorCode::ShapeError, "image sizes differ");
  return structure_score(to_gray(a), to_gray(b));
}

}  // namespace p2d
