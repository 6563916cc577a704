#pragma once

#include <Eigen/Core>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "ssgan/dataset.hpp"
#include "ssgan/image.hpp"

namespace ssgan {

// g x g grid of m x m block means, g = S / m. Flattened row-major this is
// the shape vector p.
using PatchGrid = Image;

// Throws ConfigError unless m divides both image sides.
template <typename Derived>
ImageT<typename Derived::Scalar> extract_patch_features(const Eigen::ArrayBase<Derived>& mask,
                                                        int m);
// Block replication of a g x g grid to (g*m) x (g*m).
template <typename Derived>
ImageT<typename Derived::Scalar> upsample_blocks(const Eigen::ArrayBase<Derived>& grid, int m);

Eigen::VectorXf flatten(const PatchGrid& grid);
PatchGrid unflatten(const Eigen::Ref<const Eigen::VectorXf>& p, int g);

// Block-replicated patch image of a binary mask: the representation the
// shape decoder is trained to produce.
Image shape_image(const Image& mask, int m);

// Regularization of the per-area linear fits. With trace_normalized the
// effective penalty is value * trace(Xc^T Xc) / d for centered voxels Xc.
struct RidgePenalty {
  double value = 1e-2;
  bool trace_normalized = true;
};

struct BaseShapeDecoder {
  std::string roi;
  Eigen::MatrixXf weights;  // d_k x g^2
  Eigen::VectorXf bias;     // g^2
  double lambda = 0.0;      // effective penalty used in the fit
};

enum class CombinerMode { kUnconstrained, kConvex };

// Per-pixel weights over K area predictions (no intercept).
struct ShapeCombiner {
  int grid = 0;
  std::vector<std::string> rois;
  Eigen::MatrixXf weights;  // g^2 x K
  CombinerMode mode = CombinerMode::kUnconstrained;
};

struct ShapeDecoder {
  int image_size = 0;
  int patch = 8;
  std::vector<BaseShapeDecoder> bases;
  ShapeCombiner combiner;

  int grid() const { return image_size / patch; }
};

// Targets p for each record: patch features of its stimulus mask.
Eigen::MatrixXf shape_targets(const Dataset& dataset,
                              std::span<const TrialRecord* const> records, int m);

// Fits one affine ridge decoder per area on the training records.
std::vector<BaseShapeDecoder> fit_base_decoders(const Dataset& dataset,
                                                const std::vector<std::string>& rois,
                                                RidgePenalty penalty, int m = 8);
// Lower-level form on explicit matrices (rows = samples).
BaseShapeDecoder fit_base_decoder(const std::string& roi, const Eigen::MatrixXf& voxels,
                                  const Eigen::MatrixXf& targets, RidgePenalty penalty);

// Affine map then clip to [0,1]; returns the flattened grid.
Eigen::VectorXf predict_base_vector(const BaseShapeDecoder& decoder,
                                    const Eigen::Ref<const Eigen::VectorXf>& roi_voxels);
PatchGrid predict_base(const BaseShapeDecoder& decoder, const TrialRecord& record,
                       const RoiLayout& layout, int grid);

// predictions[k] is n x g^2 for area k; targets is n x g^2.
ShapeCombiner fit_combiner(const std::vector<Eigen::MatrixXf>& predictions,
                           const Eigen::MatrixXf& targets, int grid,
                           std::vector<std::string> rois,
                           CombinerMode mode = CombinerMode::kUnconstrained);

// Combines the K flattened predictions, clipped to [0,1].
Eigen::VectorXf combine(const ShapeCombiner& combiner,
                        const std::vector<Eigen::VectorXf>& predictions);

struct ShapeFitOptions {
  RidgePenalty penalty;
  int patch = 8;
  CombinerMode combiner_mode = CombinerMode::kUnconstrained;
};

// Full shape decoder for the given areas: base fits on the dataset's train
// split, then a combiner fitted on the base predictions for those records.
ShapeDecoder fit_shape_decoder(const Dataset& dataset, const std::vector<std::string>& rois,
                               const ShapeFitOptions& options = {});

// Decoded patch grid (g x g, [0,1]).
PatchGrid decode_patch_grid(const ShapeDecoder& decoder, const TrialRecord& record,
                            const RoiLayout& layout);
// Decoded S x S shape image.
Image decode_shape(const ShapeDecoder& decoder, const TrialRecord& record,
                   const RoiLayout& layout);

// "SHD1", geometry, ROI table, then weight/bias/combiner tensors (TSR1).
void write_shape_decoder(std::ostream& os, const ShapeDecoder& decoder);
ShapeDecoder read_shape_decoder(std::istream& is);
void save_shape_decoder(const std::string& path, const ShapeDecoder& decoder);
ShapeDecoder load_shape_decoder(const std::string& path);

// ------------------------------------------------------------ templates

namespace detail {
[[noreturn]] void throw_patch_config_error(Eigen::Index rows, Eigen::Index cols, int m);
}  // namespace detail

template <typename Derived>
ImageT<typename Derived::Scalar> extract_patch_features(const Eigen::ArrayBase<Derived>& mask,
                                                        int m) {
  using Scalar = typename Derived::Scalar;
  if (m <= 0 || mask.rows() % m != 0 || mask.cols() % m != 0) {
    detail::throw_patch_config_error(mask.rows(), mask.cols(), m);
  }
  const Eigen::Index gr = mask.rows() / m, gc = mask.cols() / m;
  ImageT<Scalar> grid(gr, gc);
  for (Eigen::Index i = 0; i < gr; ++i)
    for (Eigen::Index j = 0; j < gc; ++j) {
      grid(i, j) = static_cast<Scalar>(
          mask.block(i * m, j * m, m, m).template cast<double>().mean());
    }
  return grid;
}

template <typename Derived>
ImageT<typename Derived::Scalar> upsample_blocks(const Eigen::ArrayBase<Derived>& grid, int m) {
  using Scalar = typename Derived::Scalar;
  ImageT<Scalar> out(grid.rows() * m, grid.cols() * m);
  for (Eigen::Index i = 0; i < grid.rows(); ++i)
    for (Eigen::Index j = 0; j < grid.cols(); ++j) out.block(i * m, j * m, m, m).setConstant(grid(i, j));
  return out;
}

}  // namespace ssgan
