#include "ssgan/semantic.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>

#include "json.hpp"
#include "ssgan/error.hpp"
#include "ssgan/optim.hpp"
#include "ssgan/serialize.hpp"

namespace ssgan {

namespace {

using json = nlohmann::json;

Tensor uniform_tensor(Shape shape, float bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<float> u(-bound, bound);
  std::vector<float> v(shape_numel(shape));
  for (auto& x : v) x = u(rng);
  return Tensor(std::move(shape), std::move(v), true);
}

Tensor rows_tensor(const Eigen::MatrixXf& m) {
  using RowMajor = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const RowMajor r = m;
  return Tensor({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())},
                std::vector<float>(r.data(), r.data() + r.size()));
}

Eigen::MatrixXf tensor_rows(const Tensor& t) {
  using RowMajor = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  return Eigen::Map<const RowMajor>(t.data().data(), static_cast<Eigen::Index>(t.dim(0)),
                                    static_cast<Eigen::Index>(t.dim(1)));
}

Eigen::MatrixXf standardize(const SemanticNet& net, const Eigen::MatrixXf& voxels) {
  if (voxels.cols() != net.input_mean.size()) {
    throw DimensionError("semantic net expects " + std::to_string(net.input_mean.size()) +
                         " voxels, got " + std::to_string(voxels.cols()));
  }
  return ((voxels.rowwise() - net.input_mean.transpose()).array().rowwise() *
          net.input_scale.transpose().array())
      .matrix();
}

struct Forward {
  Tensor features;
  Tensor logits;
};

Forward forward(const SemanticNet& net, const Tensor& x) {
  Tensor h1 = tanh(linear(x, net.w1, net.b1));
  Tensor h2 = tanh(linear(h1, net.w2, net.b2));
  return {h2, linear(h2, net.w3, net.b3)};
}

json config_json(const SemanticNetConfig& c) {
  return {{"in_dim", c.in_dim}, {"hidden1", c.hidden1}, {"hidden2", c.hidden2},
          {"n_classes", c.n_classes}, {"epochs", c.epochs}, {"lr", c.lr},
          {"batch", c.batch}, {"seed", c.seed}};
}

}  // namespace

void SemanticNetConfig::validate() const {
  if (in_dim < 1) throw ConfigError("semantic net: in_dim must be >= 1");
  if (hidden1 < 1) throw ConfigError("semantic net: hidden1 must be >= 1");
  if (hidden2 < 2) throw ConfigError("semantic net: hidden2 must be >= 2");
  if (n_classes < 2) throw ConfigError("semantic net: need at least 2 classes, got " + std::to_string(n_classes));
  if (epochs < 1 || batch < 1) throw ConfigError("semantic net: epochs and batch must be >= 1");
  if (!(lr > 0)) throw ConfigError("semantic net: lr must be > 0");
}

SemanticNet train_semantic(const Eigen::MatrixXf& voxels, std::span<const int> labels,
                           SemanticNetConfig config) {
  if (config.in_dim == 0) config.in_dim = static_cast<int>(voxels.cols());
  config.validate();
  if (voxels.cols() != config.in_dim) {
    throw DimensionError("semantic net: in_dim " + std::to_string(config.in_dim) + " but voxels have " +
                         std::to_string(voxels.cols()) + " columns");
  }
  if (static_cast<std::size_t>(voxels.rows()) != labels.size() || labels.empty()) {
    throw DimensionError("semantic net: " + std::to_string(voxels.rows()) + " samples vs " +
                         std::to_string(labels.size()) + " labels");
  }
  std::set<int> seen;
  for (int l : labels) {
    if (l < 0 || l >= config.n_classes) {
      throw ConfigError("semantic net: label " + std::to_string(l) + " outside [0, " +
                        std::to_string(config.n_classes) + ")");
    }
    seen.insert(l);
  }
  if (seen.size() < 2) throw ConfigError("semantic net: training data holds a single category");
  if (!voxels.allFinite()) throw NumericalError("semantic net: non-finite voxel values");

  SemanticNet net;
  net.config = config;
  const Eigen::VectorXd mean = voxels.cast<double>().colwise().mean().transpose();
  const Eigen::VectorXd var =
      (voxels.cast<double>().rowwise() - mean.transpose()).colwise().squaredNorm().transpose() /
      static_cast<double>(voxels.rows());
  net.input_mean = mean.cast<float>();
  net.input_scale = var.unaryExpr([](double v) { return v > 1e-12 ? 1.0 / std::sqrt(v) : 1.0; }).cast<float>();

  std::mt19937_64 rng(config.seed);
  const auto in = static_cast<std::size_t>(config.in_dim), h1 = static_cast<std::size_t>(config.hidden1),
             h2 = static_cast<std::size_t>(config.hidden2), nc = static_cast<std::size_t>(config.n_classes);
  const float s1 = 1.0f / std::sqrt(static_cast<float>(in)), s2 = 1.0f / std::sqrt(static_cast<float>(h1)),
              s3 = 1.0f / std::sqrt(static_cast<float>(h2));
  net.w1 = uniform_tensor({h1, in}, s1, rng);
  net.b1 = uniform_tensor({h1}, s1, rng);
  net.w2 = uniform_tensor({h2, h1}, s2, rng);
  net.b2 = uniform_tensor({h2}, s2, rng);
  net.w3 = uniform_tensor({nc, h2}, s3, rng);
  net.b3 = uniform_tensor({nc}, s3, rng);

  const Eigen::MatrixXf z = standardize(net, voxels);
  using RowMajor = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const RowMajor zr = z;
  const auto n = static_cast<std::size_t>(voxels.rows());

  Adam adam(net.parameters(), AdamConfig{config.lr, 0.9f, 0.999f, 1e-8f});
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  const auto batch = static_cast<std::size_t>(config.batch);
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0;
    for (std::size_t start = 0; start < n; start += batch) {
      const std::size_t bn = std::min(batch, n - start);
      std::vector<float> xb(bn * in), yb(bn * nc, 0.0f);
      for (std::size_t i = 0; i < bn; ++i) {
        const std::size_t r = order[start + i];
        std::copy_n(zr.data() + r * in, in, xb.begin() + static_cast<std::ptrdiff_t>(i * in));
        yb[i * nc + static_cast<std::size_t>(labels[r])] = 1.0f;
      }
      adam.zero_grad();
      Tensor loss = bce_with_logits(forward(net, Tensor({bn, in}, std::move(xb))).logits,
                                    Tensor({bn, nc}, std::move(yb)));
      if (!std::isfinite(loss.item())) {
        throw NumericalError("semantic net: non-finite loss at epoch " + std::to_string(epoch + 1));
      }
      loss.backward();
      adam.step(config.lr);
      loss_sum += static_cast<double>(loss.item()) * static_cast<double>(bn);
    }
    net.epoch_loss.push_back(static_cast<float>(loss_sum / static_cast<double>(n)));
  }
  for (auto t : net.parameters()) t.set_requires_grad(false);
  return net;
}

SemanticNet train_semantic(const Dataset& dataset, SemanticNetConfig config, const std::string& roi) {
  const auto train = dataset.records_in(Split::kTrain);
  const Eigen::MatrixXf x = voxel_matrix(train, dataset.layout, roi);
  std::vector<int> labels;
  for (const auto* r : train) labels.push_back(r->category_id);
  if (config.n_classes == 0) config.n_classes = dataset.category_count();
  SemanticNet net = train_semantic(x, labels, config);
  net.roi = roi;
  return net;
}

Eigen::MatrixXf semantic_features(const SemanticNet& net, const Eigen::MatrixXf& voxels) {
  return tensor_rows(forward(net, rows_tensor(standardize(net, voxels))).features);
}

Eigen::VectorXf semantic_features(const SemanticNet& net, const TrialRecord& record, const RoiLayout& layout) {
  const Eigen::MatrixXf row = select_voxels(record, layout, net.roi).transpose();
  return semantic_features(net, row).row(0).transpose();
}

Eigen::MatrixXf class_scores(const SemanticNet& net, const Eigen::MatrixXf& voxels) {
  return tensor_rows(sigmoid(forward(net, rows_tensor(standardize(net, voxels))).logits));
}

int argmax_class(const Eigen::Ref<const Eigen::VectorXf>& scores) {
  if (scores.size() == 0) throw ContractError("argmax of an empty score vector");
  int best = 0;
  for (Eigen::Index i = 1; i < scores.size(); ++i) {
    if (scores(i) > scores(best)) best = static_cast<int>(i);
  }
  return best;
}

std::vector<int> classify(const SemanticNet& net, const Eigen::MatrixXf& voxels) {
  const Eigen::MatrixXf s = class_scores(net, voxels);
  std::vector<int> out;
  for (Eigen::Index r = 0; r < s.rows(); ++r) out.push_back(argmax_class(s.row(r).transpose()));
  return out;
}

int classify(const SemanticNet& net, const TrialRecord& record, const RoiLayout& layout) {
  const Eigen::MatrixXf row = select_voxels(record, layout, net.roi).transpose();
  return classify(net, row).front();
}

double accuracy(std::span<const int> predicted, std::span<const int> labels) {
  if (predicted.size() != labels.size() || labels.empty()) {
    throw DimensionError("accuracy: need equally sized, nonempty label lists");
  }
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hits += predicted[i] == labels[i];
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

CategoryAverages::CategoryAverages(const Eigen::MatrixXf& features, std::span<const int> labels) {
  if (features.rows() == 0) throw ContractError("category_average: no features");
  if (static_cast<std::size_t>(features.rows()) != labels.size()) {
    throw DimensionError("category_average: " + std::to_string(features.rows()) + " features vs " +
                         std::to_string(labels.size()) + " labels");
  }
  std::map<int, std::pair<Eigen::VectorXd, int>> acc;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto [it, inserted] = acc.try_emplace(labels[i], Eigen::VectorXd::Zero(features.cols()), 0);
    it->second.first += features.row(static_cast<Eigen::Index>(i)).transpose().cast<double>();
    it->second.second += 1;
  }
  for (const auto& [c, sum] : acc) means_[c] = (sum.first / sum.second).cast<float>();
}

const Eigen::VectorXf& CategoryAverages::at(int category) const {
  auto it = means_.find(category);
  if (it == means_.end()) {
    throw LookupError("no semantic features for category " + std::to_string(category));
  }
  return it->second;
}

CategoryAverages category_average(const Eigen::MatrixXf& features, std::span<const int> labels) {
  return CategoryAverages(features, labels);
}

// ------------------------------------------------------------ persistence

void write_semantic_net(std::ostream& os, const SemanticNet& net) {
  binio::write_magic(os, "SEM1");
  json cfg = config_json(net.config);
  cfg["roi"] = net.roi;
  binio::write_string(os, cfg.dump());
  const auto d = static_cast<std::size_t>(net.input_mean.size());
  write_tensor(os, Tensor({d}, std::vector<float>(net.input_mean.data(), net.input_mean.data() + d)));
  write_tensor(os, Tensor({d}, std::vector<float>(net.input_scale.data(), net.input_scale.data() + d)));
  for (const auto& t : net.parameters()) write_tensor(os, t);
}

SemanticNet read_semantic_net(std::istream& is) {
  binio::expect_magic(is, "SEM1", "semantic net");
  SemanticNet net;
  try {
    const json cfg = json::parse(binio::read_string(is));
    auto& c = net.config;
    c.in_dim = cfg.at("in_dim");
    c.hidden1 = cfg.at("hidden1");
    c.hidden2 = cfg.at("hidden2");
    c.n_classes = cfg.at("n_classes");
    c.epochs = cfg.at("epochs");
    c.lr = cfg.at("lr");
    c.batch = cfg.at("batch");
    c.seed = cfg.at("seed");
    net.roi = cfg.at("roi");
  } catch (const json::exception& e) {
    throw IoError(std::string("semantic net config: ") + e.what());
  }
  net.config.validate();
  const auto& c = net.config;
  const auto in = static_cast<std::size_t>(c.in_dim), h1 = static_cast<std::size_t>(c.hidden1),
             h2 = static_cast<std::size_t>(c.hidden2), nc = static_cast<std::size_t>(c.n_classes);
  auto expect = [&](const Shape& shape) {
    Tensor t = read_tensor(is);
    if (t.shape() != shape) {
      throw IoError("semantic net file: tensor " + shape_string(t.shape()) + ", expected " + shape_string(shape));
    }
    return t;
  };
  Tensor mean = expect({in}), scale = expect({in});
  net.input_mean = Eigen::Map<const Eigen::VectorXf>(mean.data().data(), c.in_dim);
  net.input_scale = Eigen::Map<const Eigen::VectorXf>(scale.data().data(), c.in_dim);
  net.w1 = expect({h1, in});
  net.b1 = expect({h1});
  net.w2 = expect({h2, h1});
  net.b2 = expect({h2});
  net.w3 = expect({nc, h2});
  net.b3 = expect({nc});
  return net;
}

void save_semantic_net(const std::string& path, const SemanticNet& net) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path + " for writing");
  write_semantic_net(os, net);
  if (!os) throw IoError("failed writing " + path);
}

SemanticNet load_semantic_net(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path);
  return read_semantic_net(is);
}

}  // namespace ssgan
