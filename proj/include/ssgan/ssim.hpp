#pragma once

#include <Eigen/Core>
#include <cmath>
#include <string>

#include "ssgan/error.hpp"

namespace ssgan {

struct SsimParams {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 1.0;
};

// Normalized 1-d Gaussian taps; the 2-d window is their outer product.
inline Eigen::VectorXd gaussian_taps(int size, double sigma) {
  Eigen::VectorXd taps(size);
  const double c = (size - 1) / 2.0;
  for (int i = 0; i < size; ++i) taps(i) = std::exp(-(i - c) * (i - c) / (2 * sigma * sigma));
  return taps / taps.sum();
}

namespace detail {

// Valid-mode separable correlation with `taps` along both axes.
inline Eigen::ArrayXXd filter_valid(const Eigen::ArrayXXd& x, const Eigen::VectorXd& taps) {
  const auto w = taps.size();
  const auto rows = x.rows() - w + 1, cols = x.cols() - w + 1;
  Eigen::ArrayXXd horiz = Eigen::ArrayXXd::Zero(x.rows(), cols);
  for (Eigen::Index k = 0; k < w; ++k) horiz += taps(k) * x.middleCols(k, cols);
  Eigen::ArrayXXd out = Eigen::ArrayXXd::Zero(rows, cols);
  for (Eigen::Index k = 0; k < w; ++k) out += taps(k) * horiz.middleRows(k, rows);
  return out;
}

}  // namespace detail

// Mean SSIM over all window positions fully inside the image.
template <typename DerivedA, typename DerivedB>
double ssim(const Eigen::ArrayBase<DerivedA>& a, const Eigen::ArrayBase<DerivedB>& b,
            const SsimParams& params = {}) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError("ssim: " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                         " vs " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
  }
  if (a.rows() < params.window || a.cols() < params.window) {
    throw DimensionError("ssim: image smaller than the " + std::to_string(params.window) + "-pixel window");
  }
  const Eigen::ArrayXXd x = a.template cast<double>();
  const Eigen::ArrayXXd y = b.template cast<double>();
  const Eigen::VectorXd taps = gaussian_taps(params.window, params.sigma);
  const double c1 = std::pow(params.k1 * params.dynamic_range, 2);
  const double c2 = std::pow(params.k2 * params.dynamic_range, 2);

  const Eigen::ArrayXXd mx = detail::filter_valid(x, taps);
  const Eigen::ArrayXXd my = detail::filter_valid(y, taps);
  const Eigen::ArrayXXd vx = detail::filter_valid(x * x, taps) - mx * mx;
  const Eigen::ArrayXXd vy = detail::filter_valid(y * y, taps) - my * my;
  const Eigen::ArrayXXd cxy = detail::filter_valid(x * y, taps) - mx * my;
  const Eigen::ArrayXXd map =
      ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
  return map.mean();
}

}  // namespace ssgan
