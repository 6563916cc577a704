#pragma once

#include <Eigen/Core>
#include <optional>
#include <string>

namespace ssgan {

// Grayscale image, row-major so that flattening matches raster order.
template <typename Scalar>
using ImageT = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Image = ImageT<float>;

// Binary P5 PGM, maxval <= 255. Values are scaled to [0,1].
Image read_pgm(const std::string& path);
void write_pgm(const std::string& path, const Image& image);
// Binary P6 PPM from three channel planes in [0,1].
void write_ppm(const std::string& path, const Image& r, const Image& g, const Image& b);

// Rounds every value to the nearest k/255 (the PGM grid) after clamping.
template <typename Derived>
Image quantize8(const Eigen::ArrayBase<Derived>& image) {
  return (image.cwiseMax(0).cwiseMin(1) * 255.0f).round() / 255.0f;
}

struct MaskResult {
  Image mask;  // 0/1 values
  float threshold = 0.5f;
  // Set when auto-thresholding met a constant image; the mask is then
  // all background.
  bool constant_image = false;
};

// Otsu's threshold over a 256-bin histogram of values in [0,1]. Returns
// nullopt for a constant image. Pixels at or above the returned value are
// foreground.
std::optional<float> otsu_threshold(const Image& image);

// mask(i,j) = 1 iff image(i,j) >= threshold; no threshold means Otsu.
MaskResult binarize_mask(const Image& image, std::optional<float> threshold);

}  // namespace ssgan
