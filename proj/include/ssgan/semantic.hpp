#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "ssgan/dataset.hpp"
#include "ssgan/tensor.hpp"

namespace ssgan {

struct SemanticNetConfig {
  int in_dim = 0;      // 0: taken from the ROI when training on a dataset
  int hidden1 = 256;
  int hidden2 = 64;    // semantic feature dimension
  int n_classes = 0;   // 0: the dataset's category count
  int epochs = 60;
  float lr = 1e-3f;
  int batch = 32;
  std::uint64_t seed = 0;

  void validate() const;
};

// in -> hidden1 -> hidden2 -> n_classes, tanh after both hidden layers and
// a per-class sigmoid on the output. Inputs are z-scored with statistics of
// the training set, stored alongside the weights.
struct SemanticNet {
  SemanticNetConfig config;
  std::string roi = "HVC";
  Eigen::VectorXf input_mean;
  Eigen::VectorXf input_scale;  // 1 / std, 1 for constant voxels
  Tensor w1, b1, w2, b2, w3, b3;
  std::vector<float> epoch_loss;

  std::vector<Tensor> parameters() const { return {w1, b1, w2, b2, w3, b3}; }
};

// Trains on the rows of `voxels` (samples x in_dim) with integer labels in
// [0, n_classes). Minimizes the mean per-class sigmoid cross-entropy against
// one-hot targets with Adam.
SemanticNet train_semantic(const Eigen::MatrixXf& voxels, std::span<const int> labels,
                           SemanticNetConfig config);
// Trains on the dataset's train split, reading the voxels of `roi`.
SemanticNet train_semantic(const Dataset& dataset, SemanticNetConfig config,
                           const std::string& roi = "HVC");

// Penultimate (second tanh) activations; one row per input row.
Eigen::MatrixXf semantic_features(const SemanticNet& net, const Eigen::MatrixXf& voxels);
Eigen::VectorXf semantic_features(const SemanticNet& net, const TrialRecord& record,
                                  const RoiLayout& layout);
// Sigmoid scores; one row per input row.
Eigen::MatrixXf class_scores(const SemanticNet& net, const Eigen::MatrixXf& voxels);

// Index of the largest score, lowest index on ties.
int argmax_class(const Eigen::Ref<const Eigen::VectorXf>& scores);
std::vector<int> classify(const SemanticNet& net, const Eigen::MatrixXf& voxels);
int classify(const SemanticNet& net, const TrialRecord& record, const RoiLayout& layout);

double accuracy(std::span<const int> predicted, std::span<const int> labels);

// Per-category mean features.
class CategoryAverages {
 public:
  CategoryAverages() = default;
  CategoryAverages(const Eigen::MatrixXf& features, std::span<const int> labels);

  // Throws LookupError for a category without samples.
  const Eigen::VectorXf& at(int category) const;
  bool contains(int category) const { return means_.count(category) != 0; }
  const std::map<int, Eigen::VectorXf>& means() const { return means_; }

 private:
  std::map<int, Eigen::VectorXf> means_;
};

CategoryAverages category_average(const Eigen::MatrixXf& features, std::span<const int> labels);

// "SEM1", u32-length JSON config block, then the normalization and layer
// tensors (TSR1).
void write_semantic_net(std::ostream& os, const SemanticNet& net);
SemanticNet read_semantic_net(std::istream& is);
void save_semantic_net(const std::string& path, const SemanticNet& net);
SemanticNet load_semantic_net(const std::string& path);

}  // namespace ssgan
