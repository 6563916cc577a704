#include "ssgan/shape_decoder.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>

#include "ssgan/error.hpp"
#include "ssgan/linalg.hpp"
#include "ssgan/parallel.hpp"
#include "ssgan/serialize.hpp"

namespace ssgan {

namespace detail {
void throw_patch_config_error(Eigen::Index rows, Eigen::Index cols, int m) {
  throw ConfigError("patch size " + std::to_string(m) + " does not divide " +
                    std::to_string(rows) + "x" + std::to_string(cols));
}
}  // namespace detail

Eigen::VectorXf flatten(const PatchGrid& grid) {
  return Eigen::Map<const Eigen::VectorXf>(grid.data(), grid.size());
}

PatchGrid unflatten(const Eigen::Ref<const Eigen::VectorXf>& p, int g) {
  if (p.size() != static_cast<Eigen::Index>(g) * g) {
    throw DimensionError("unflatten: vector of " + std::to_string(p.size()) +
                         " entries is not a " + std::to_string(g) + "x" + std::to_string(g) + " grid");
  }
  PatchGrid grid(g, g);
  Eigen::Map<Eigen::VectorXf>(grid.data(), grid.size()) = p;
  return grid;
}

Image shape_image(const Image& mask, int m) {
  return upsample_blocks(extract_patch_features(mask, m), m);
}

Eigen::MatrixXf shape_targets(const Dataset& dataset,
                              std::span<const TrialRecord* const> records, int m) {
  if (records.empty()) return {};
  const int g = dataset.image_size / m;
  Eigen::MatrixXf out(static_cast<Eigen::Index>(records.size()), g * g);
  for (std::size_t r = 0; r < records.size(); ++r) {
    const auto& mask = dataset.stimulus(records[r]->stimulus_id).mask;
    out.row(static_cast<Eigen::Index>(r)) = flatten(extract_patch_features(mask, m)).transpose();
  }
  return out;
}

// ---------------------------------------------------------- base decoders

BaseShapeDecoder fit_base_decoder(const std::string& roi, const Eigen::MatrixXf& voxels,
                                  const Eigen::MatrixXf& targets, RidgePenalty penalty) {
  if (voxels.rows() != targets.rows()) {
    throw DimensionError("fit_base_decoder: " + std::to_string(voxels.rows()) +
                         " voxel rows vs " + std::to_string(targets.rows()) + " targets");
  }
  if (voxels.rows() < 2) throw ContractError("fit_base_decoder: need at least 2 training records");
  if (penalty.value < 0) throw ConfigError("ridge penalty must be >= 0");

  const Eigen::MatrixXd x = voxels.cast<double>();
  const Eigen::MatrixXd t = targets.cast<double>();
  const Eigen::RowVectorXd x_mean = x.colwise().mean();
  const Eigen::RowVectorXd t_mean = t.colwise().mean();
  const Eigen::MatrixXd xc = x.rowwise() - x_mean;
  const Eigen::MatrixXd tc = t.rowwise() - t_mean;

  double lambda = penalty.value;
  if (penalty.trace_normalized) lambda *= xc.squaredNorm() / static_cast<double>(xc.cols());

  const Eigen::MatrixXd w = ridge_solve(xc, tc, lambda);
  BaseShapeDecoder dec;
  dec.roi = roi;
  dec.weights = w.cast<float>();
  dec.bias = (t_mean - x_mean * w).transpose().cast<float>();
  dec.lambda = lambda;
  return dec;
}

std::vector<BaseShapeDecoder> fit_base_decoders(const Dataset& dataset,
                                                const std::vector<std::string>& rois,
                                                RidgePenalty penalty, int m) {
  const auto train = dataset.records_in(Split::kTrain);
  if (train.size() < 2) throw ContractError("fit_base_decoders: need at least 2 training records");
  const Eigen::MatrixXf targets = shape_targets(dataset, train, m);
  std::vector<BaseShapeDecoder> out;
  for (const auto& roi : rois) {
    out.push_back(fit_base_decoder(roi, voxel_matrix(train, dataset.layout, roi), targets, penalty));
  }
  return out;
}

Eigen::VectorXf predict_base_vector(const BaseShapeDecoder& decoder,
                                    const Eigen::Ref<const Eigen::VectorXf>& roi_voxels) {
  if (roi_voxels.size() != decoder.weights.rows()) {
    throw DimensionError("decoder for " + decoder.roi + " expects " +
                         std::to_string(decoder.weights.rows()) + " voxels, got " +
                         std::to_string(roi_voxels.size()));
  }
  Eigen::VectorXf p = decoder.weights.transpose() * roi_voxels + decoder.bias;
  return p.cwiseMax(0.0f).cwiseMin(1.0f);
}

PatchGrid predict_base(const BaseShapeDecoder& decoder, const TrialRecord& record,
                       const RoiLayout& layout, int grid) {
  return unflatten(predict_base_vector(decoder, select_voxels(record, layout, decoder.roi)), grid);
}

// --------------------------------------------------------------- combiner

namespace {

// Euclidean projection onto the probability simplex.
Eigen::VectorXd project_simplex(const Eigen::VectorXd& v) {
  std::vector<double> u(v.data(), v.data() + v.size());
  std::sort(u.begin(), u.end(), std::greater<>());
  double cum = 0.0, theta = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    cum += u[i];
    const double t = (cum - 1.0) / static_cast<double>(i + 1);
    if (u[i] - t > 0) theta = t;
  }
  return (v.array() - theta).cwiseMax(0.0).matrix();
}

Eigen::VectorXd convex_least_squares(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
  const auto k = x.cols();
  const Eigen::MatrixXd gram = x.transpose() * x;
  const Eigen::VectorXd xty = x.transpose() * y;
  const double lipschitz = std::max(gram.diagonal().sum(), 1e-12);
  Eigen::VectorXd w = Eigen::VectorXd::Constant(k, 1.0 / static_cast<double>(k));
  for (int it = 0; it < 2000; ++it) {
    w = project_simplex(w - (gram * w - xty) / lipschitz);
  }
  return w;
}

}  // namespace

ShapeCombiner fit_combiner(const std::vector<Eigen::MatrixXf>& predictions,
                           const Eigen::MatrixXf& targets, int grid, std::vector<std::string> rois,
                           CombinerMode mode) {
  const auto k = static_cast<Eigen::Index>(predictions.size());
  if (k < 1) throw ContractError("fit_combiner: need at least one ROI prediction");
  if (rois.size() != predictions.size()) {
    throw DimensionError("fit_combiner: ROI names do not match predictions");
  }
  const Eigen::Index pixels = static_cast<Eigen::Index>(grid) * grid;
  for (const auto& p : predictions) {
    if (p.rows() != targets.rows() || p.cols() != pixels || targets.cols() != pixels) {
      throw DimensionError("fit_combiner: prediction grids differ in size");
    }
  }

  ShapeCombiner comb;
  comb.grid = grid;
  comb.rois = std::move(rois);
  comb.mode = mode;
  comb.weights.resize(pixels, k);
  parallel_for(static_cast<std::size_t>(pixels), [&](std::size_t px) {
    const auto j = static_cast<Eigen::Index>(px);
    Eigen::MatrixXd x(targets.rows(), k);
    for (Eigen::Index c = 0; c < k; ++c) x.col(c) = predictions[static_cast<std::size_t>(c)].col(j).cast<double>();
    const Eigen::VectorXd y = targets.col(j).cast<double>();
    Eigen::VectorXd w;
    if (x.isZero(0.0)) {
      w = Eigen::VectorXd::Constant(k, 1.0 / static_cast<double>(k));
    } else if (mode == CombinerMode::kConvex) {
      w = convex_least_squares(x, y);
    } else {
      w = ridge_solve(x, y, 0.0);
    }
    comb.weights.row(j) = w.transpose().cast<float>();
  });
  return comb;
}

Eigen::VectorXf combine(const ShapeCombiner& combiner, const std::vector<Eigen::VectorXf>& predictions) {
  if (static_cast<Eigen::Index>(predictions.size()) != combiner.weights.cols()) {
    throw DimensionError("combine: expected " + std::to_string(combiner.weights.cols()) +
                         " predictions, got " + std::to_string(predictions.size()));
  }
  Eigen::VectorXf out = Eigen::VectorXf::Zero(combiner.weights.rows());
  for (std::size_t k = 0; k < predictions.size(); ++k) {
    if (predictions[k].size() != out.size()) throw DimensionError("combine: grid size mismatch");
    out.array() += combiner.weights.col(static_cast<Eigen::Index>(k)).array() * predictions[k].array();
  }
  return out.cwiseMax(0.0f).cwiseMin(1.0f);
}

// ------------------------------------------------------------ full decoder

ShapeDecoder fit_shape_decoder(const Dataset& dataset, const std::vector<std::string>& rois,
                               const ShapeFitOptions& options) {
  if (rois.empty()) throw ContractError("fit_shape_decoder: empty ROI set");
  std::vector<std::string> areas;
  for (const auto& name : rois) {
    for (auto& a : dataset.layout.expand(name)) {
      if (std::find(areas.begin(), areas.end(), a) == areas.end()) areas.push_back(a);
    }
  }
  ShapeDecoder dec;
  dec.image_size = dataset.image_size;
  dec.patch = options.patch;
  if (dataset.image_size % options.patch != 0) {
    detail::throw_patch_config_error(dataset.image_size, dataset.image_size, options.patch);
  }
  dec.bases = fit_base_decoders(dataset, areas, options.penalty, options.patch);

  const auto train = dataset.records_in(Split::kTrain);
  const Eigen::MatrixXf targets = shape_targets(dataset, train, options.patch);
  std::vector<Eigen::MatrixXf> preds;
  for (const auto& base : dec.bases) {
    const Eigen::MatrixXf x = voxel_matrix(train, dataset.layout, base.roi);
    Eigen::MatrixXf p = (x * base.weights).rowwise() + base.bias.transpose();
    preds.push_back(p.cwiseMax(0.0f).cwiseMin(1.0f));
  }
  dec.combiner = fit_combiner(preds, targets, dec.grid(), areas, options.combiner_mode);
  return dec;
}

PatchGrid decode_patch_grid(const ShapeDecoder& decoder, const TrialRecord& record,
                            const RoiLayout& layout) {
  std::vector<Eigen::VectorXf> preds;
  for (const auto& base : decoder.bases) {
    preds.push_back(predict_base_vector(base, select_voxels(record, layout, base.roi)));
  }
  return unflatten(combine(decoder.combiner, preds), decoder.grid());
}

Image decode_shape(const ShapeDecoder& decoder, const TrialRecord& record, const RoiLayout& layout) {
  return upsample_blocks(decode_patch_grid(decoder, record, layout), decoder.patch);
}

// ------------------------------------------------------------ persistence

namespace {

Tensor matrix_tensor(const Eigen::MatrixXf& m) {
  using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const RowMat r = m;
  return Tensor({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())},
                std::vector<float>(r.data(), r.data() + r.size()));
}

Eigen::MatrixXf tensor_matrix(const Tensor& t, Eigen::Index rows, Eigen::Index cols) {
  using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  if (static_cast<Eigen::Index>(t.numel()) != rows * cols) {
    throw IoError("shape decoder file: tensor " + shape_string(t.shape()) + " has wrong size");
  }
  return Eigen::Map<const RowMat>(t.data().data(), rows, cols);
}

}  // namespace

void write_shape_decoder(std::ostream& os, const ShapeDecoder& decoder) {
  const auto g = static_cast<std::size_t>(decoder.grid());
  binio::write_magic(os, "SHD1");
  binio::write_u32(os, static_cast<std::uint32_t>(decoder.image_size));
  binio::write_u32(os, static_cast<std::uint32_t>(decoder.patch));
  binio::write_u32(os, static_cast<std::uint32_t>(g));
  binio::write_u32(os, decoder.combiner.mode == CombinerMode::kConvex ? 1u : 0u);
  binio::write_u32(os, static_cast<std::uint32_t>(decoder.bases.size()));
  for (const auto& b : decoder.bases) {
    binio::write_string(os, b.roi);
    binio::write_u32(os, static_cast<std::uint32_t>(b.weights.rows()));
    binio::write_f64(os, b.lambda);
  }
  for (const auto& b : decoder.bases) {
    write_tensor(os, matrix_tensor(b.weights));
    write_tensor(os, Tensor({g * g}, std::vector<float>(b.bias.data(), b.bias.data() + b.bias.size())));
  }
  const auto k = static_cast<std::size_t>(decoder.combiner.weights.cols());
  binio::write_u32(os, static_cast<std::uint32_t>(k));
  for (const auto& r : decoder.combiner.rois) binio::write_string(os, r);
  Tensor comb = matrix_tensor(decoder.combiner.weights).reshape({g, g, k});
  write_tensor(os, comb);
}

ShapeDecoder read_shape_decoder(std::istream& is) {
  binio::expect_magic(is, "SHD1", "shape decoder");
  ShapeDecoder dec;
  dec.image_size = static_cast<int>(binio::read_u32(is));
  dec.patch = static_cast<int>(binio::read_u32(is));
  const auto g = static_cast<int>(binio::read_u32(is));
  if (dec.patch <= 0 || dec.image_size != g * dec.patch) {
    throw IoError("shape decoder file: inconsistent geometry");
  }
  dec.combiner.mode = binio::read_u32(is) == 1 ? CombinerMode::kConvex : CombinerMode::kUnconstrained;
  const auto n = binio::read_u32(is);
  std::vector<std::uint32_t> dims;
  for (std::uint32_t i = 0; i < n; ++i) {
    BaseShapeDecoder b;
    b.roi = binio::read_string(is);
    dims.push_back(binio::read_u32(is));
    b.lambda = binio::read_f64(is);
    dec.bases.push_back(std::move(b));
  }
  for (std::uint32_t i = 0; i < n; ++i) {
    auto& b = dec.bases[i];
    b.weights = tensor_matrix(read_tensor(is), dims[i], g * g);
    const Tensor bias = read_tensor(is);
    if (bias.numel() != static_cast<std::size_t>(g * g)) throw IoError("shape decoder file: bad bias");
    b.bias = Eigen::Map<const Eigen::VectorXf>(bias.data().data(), g * g);
  }
  const auto k = binio::read_u32(is);
  for (std::uint32_t i = 0; i < k; ++i) dec.combiner.rois.push_back(binio::read_string(is));
  dec.combiner.grid = g;
  dec.combiner.weights = tensor_matrix(read_tensor(is), g * g, k);
  return dec;
}

void save_shape_decoder(const std::string& path, const ShapeDecoder& decoder) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path + " for writing");
  write_shape_decoder(os, decoder);
  if (!os) throw IoError("failed writing " + path);
}

ShapeDecoder load_shape_decoder(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path);
  return read_shape_decoder(is);
}

}  // namespace ssgan
