#include "ssgan/gan.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "json.hpp"
#include "ssgan/error.hpp"
#include "ssgan/serialize.hpp"

namespace ssgan {

namespace {

using json = nlohmann::json;

int channels_at(int base, int level) { return std::min(base << level, 8 * base); }

Tensor normal_tensor(Shape shape, float stddev, std::mt19937_64& rng) {
  std::normal_distribution<float> n(0.0f, stddev);
  std::vector<float> v(shape_numel(shape));
  for (auto& x : v) x = n(rng);
  return Tensor(std::move(shape), std::move(v), true);
}

BatchNormLayer make_norm(std::size_t channels) {
  return {Tensor({channels}, 1.0f, true), Tensor({channels}, 0.0f, true),
          BatchStats{std::vector<float>(channels, 0.0f), std::vector<float>(channels, 1.0f)}};
}

// weight_shape is [out,in,k,k] for convolutions, [in,out,k,k] for transposed.
ConvBlock make_block(Shape weight_shape, std::size_t out_channels, bool norm, std::mt19937_64& rng) {
  ConvBlock b;
  b.weight = normal_tensor(std::move(weight_shape), 0.02f, rng);
  if (norm) {
    b.norm = make_norm(out_channels);
  } else {
    b.bias = Tensor({out_channels}, 0.0f, true);
  }
  return b;
}

Tensor finish_block(const ConvBlock& b, Tensor h, NormMode mode, std::vector<BatchStats>* stats) {
  if (!b.bias.empty()) h = add_channel_bias(h, b.bias);
  if (b.norm) {
    if (mode == NormMode::kBatch) {
      BatchStats s;
      h = batch_norm_train(h, b.norm->gamma, b.norm->beta, kNormEps, stats ? &s : nullptr);
      if (stats) stats->push_back(std::move(s));
    } else {
      h = batch_norm_eval(h, b.norm->gamma, b.norm->beta, b.norm->running, kNormEps);
    }
  }
  return h;
}

void append_block_params(const ConvBlock& b, std::vector<Tensor>& out) {
  out.push_back(b.weight);
  if (!b.bias.empty()) out.push_back(b.bias);
  if (b.norm) {
    out.push_back(b.norm->gamma);
    out.push_back(b.norm->beta);
  }
}

bool is_power_of_two(int v) { return v > 0 && (v & (v - 1)) == 0; }

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t x = seed + 0x9e3779b97f4a7c15ull * (salt + 1);
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

Tensor images_tensor(const std::vector<const Image*>& images) {
  const auto rows = static_cast<std::size_t>(images.front()->rows());
  const auto cols = static_cast<std::size_t>(images.front()->cols());
  std::vector<float> v;
  v.reserve(images.size() * rows * cols);
  for (const auto* im : images) {
    if (static_cast<std::size_t>(im->rows()) != rows || static_cast<std::size_t>(im->cols()) != cols) {
      throw DimensionError("image batch mixes sizes");
    }
    v.insert(v.end(), im->data(), im->data() + im->size());
  }
  return Tensor({images.size(), 1, rows, cols}, std::move(v));
}

std::string parameter_summary(const char* name, const std::vector<Tensor>& params) {
  std::ostringstream os;
  os << name << ":";
  for (std::size_t i = 0; i < params.size(); ++i) {
    float max_abs = 0.0f;
    std::size_t bad = 0;
    for (float x : params[i].data()) {
      if (!std::isfinite(x)) {
        ++bad;
      } else {
        max_abs = std::max(max_abs, std::fabs(x));
      }
    }
    os << " [" << i << " " << shape_string(params[i].shape()) << " max|w|=" << max_abs;
    if (bad) os << " nonfinite=" << bad;
    os << "]";
  }
  return os.str();
}

[[noreturn]] void throw_non_finite(const GanModel& model, const std::string& what) {
  throw NumericalError(what + "\n" + parameter_summary("generator", model.generator.parameters()) + "\n" +
                       parameter_summary("discriminator", model.discriminator.parameters()));
}

// Clears requires_grad on a parameter set for the lifetime of the guard.
class FreezeGuard {
 public:
  explicit FreezeGuard(std::vector<Tensor> params) : params_(std::move(params)) {
    for (auto& p : params_) p.set_requires_grad(false);
  }
  ~FreezeGuard() {
    for (auto& p : params_) p.set_requires_grad(true);
  }
  FreezeGuard(const FreezeGuard&) = delete;
  FreezeGuard& operator=(const FreezeGuard&) = delete;

 private:
  std::vector<Tensor> params_;
};

// Batches over `order`; a trailing batch of one joins its predecessor so
// that batch statistics never see a single sample.
std::vector<std::span<const std::size_t>> split_batches(const std::vector<std::size_t>& order, int batch) {
  std::vector<std::span<const std::size_t>> out;
  const auto b = static_cast<std::size_t>(batch);
  for (std::size_t start = 0; start < order.size(); start += b) {
    out.emplace_back(order.data() + start, std::min(b, order.size() - start));
  }
  if (out.size() > 1 && out.back().size() == 1) {
    const auto first = out[out.size() - 2].data();
    const auto n = out[out.size() - 2].size() + 1;
    out.pop_back();
    out.back() = std::span<const std::size_t>(first, n);
  }
  return out;
}

}  // namespace

// ----------------------------------------------------------------- config

void GanTrainConfig::validate() const {
  if (!(lambda_img >= 0)) throw ConfigError("lambda_img must be >= 0");
  if (!(lr > 0)) throw ConfigError("GAN lr must be > 0");
  if (!(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1)) throw ConfigError("Adam betas must lie in [0,1)");
  if (batch < 1) throw ConfigError("GAN batch must be >= 1");
  if (epochs < 1) throw ConfigError("GAN epochs must be >= 1");
  if (decay_start < 0 || decay_start >= epochs) {
    throw ConfigError("decay_start (" + std::to_string(decay_start) + ") must lie in [0, epochs=" +
                      std::to_string(epochs) + ")");
  }
  if (resolution < 16 || !is_power_of_two(resolution)) {
    throw ConfigError("GAN resolution must be a power of two >= 16, got " + std::to_string(resolution));
  }
  if (base_channels < 1) throw ConfigError("base_channels must be >= 1");
  if (use_semantics && semantic_dim < 1) throw ConfigError("semantic_dim must be >= 1 when semantics are enabled");
  if (disc_depth < 1 || (1 << disc_depth) > resolution) {
    throw ConfigError("disc_depth " + std::to_string(disc_depth) + " does not fit resolution " +
                      std::to_string(resolution));
  }
  if (disc_channels < 0) throw ConfigError("disc_channels must be >= 0");
}

int GanTrainConfig::depth() const { return std::countr_zero(static_cast<unsigned>(resolution)); }

float learning_rate(const GanTrainConfig& config, int epoch) {
  if (epoch <= config.decay_start) return config.lr;
  const double frac = static_cast<double>(config.epochs - epoch) / (config.epochs - config.decay_start);
  return static_cast<float>(config.lr * std::max(0.0, frac));
}

// ------------------------------------------------------------- networks

std::vector<Tensor> Generator::parameters() const {
  std::vector<Tensor> out;
  for (const auto& b : encoder) append_block_params(b, out);
  for (const auto& b : decoder) append_block_params(b, out);
  return out;
}

std::vector<BatchNormLayer*> Generator::norms() {
  std::vector<BatchNormLayer*> out;
  for (auto& b : encoder)
    if (b.norm) out.push_back(&*b.norm);
  for (auto& b : decoder)
    if (b.norm) out.push_back(&*b.norm);
  return out;
}

std::vector<Tensor> Discriminator::parameters() const {
  std::vector<Tensor> out;
  for (const auto& b : layers) append_block_params(b, out);
  return out;
}

std::vector<BatchNormLayer*> Discriminator::norms() {
  std::vector<BatchNormLayer*> out;
  for (auto& b : layers)
    if (b.norm) out.push_back(&*b.norm);
  return out;
}

Generator make_generator(int resolution, int base_channels, int semantic_dim, std::uint64_t seed) {
  if (resolution < 2 || !is_power_of_two(resolution)) {
    throw ConfigError("generator resolution must be a power of two >= 2");
  }
  if (base_channels < 1 || semantic_dim < 0) throw ConfigError("bad generator channel counts");
  std::mt19937_64 rng(mix_seed(seed, 1));
  const int depth = std::countr_zero(static_cast<unsigned>(resolution));
  auto ch = [&](int level) { return static_cast<std::size_t>(channels_at(base_channels, level)); };

  Generator g;
  g.resolution = resolution;
  g.semantic_dim = semantic_dim;
  for (int i = 0; i < depth; ++i) {
    const std::size_t in = i == 0 ? 1 : ch(i - 1);
    g.encoder.push_back(make_block({ch(i), in, 4, 4}, ch(i), i > 0, rng));
  }
  for (int j = 0; j < depth; ++j) {
    const std::size_t in = j == 0 ? ch(depth - 1) + static_cast<std::size_t>(semantic_dim) : 2 * ch(depth - 1 - j);
    const bool last = j == depth - 1;
    const std::size_t out = last ? 1 : ch(depth - 2 - j);
    g.decoder.push_back(make_block({in, out, 4, 4}, out, !last, rng));
  }
  return g;
}

Discriminator make_discriminator(int resolution, int channels, int depth, bool global, std::uint64_t seed) {
  if (resolution < 2 || !is_power_of_two(resolution) || depth < 1 || (1 << depth) > resolution) {
    throw ConfigError("discriminator depth " + std::to_string(depth) + " does not fit resolution " +
                      std::to_string(resolution));
  }
  if (channels < 1) throw ConfigError("discriminator channels must be >= 1");
  std::mt19937_64 rng(mix_seed(seed, 2));
  Discriminator d;
  d.resolution = resolution;
  d.global = global;
  for (int i = 0; i < depth; ++i) {
    const bool last = i == depth - 1;
    const std::size_t in = i == 0 ? 2 : static_cast<std::size_t>(channels_at(channels, i - 1));
    const std::size_t out = last ? 1 : static_cast<std::size_t>(channels_at(channels, i));
    std::size_t k = 4;
    if (last && global) k = static_cast<std::size_t>(resolution >> (depth - 1));
    d.layers.push_back(make_block({out, in, k, k}, out, i > 0 && !last, rng));
  }
  return d;
}

Generator build_generator(const GanTrainConfig& config) {
  config.validate();
  return make_generator(config.resolution, config.base_channels, config.semantic_channels(), config.seed);
}

Discriminator build_discriminator(const GanTrainConfig& config) {
  config.validate();
  const int ch = config.disc_channels > 0 ? config.disc_channels : config.base_channels;
  return make_discriminator(config.resolution, ch, config.disc_depth, config.disc_global, config.seed);
}

GanModel build_gan(const GanTrainConfig& config) {
  return {config, build_generator(config), build_discriminator(config)};
}

Tensor generator_forward(const Generator& g, const Tensor& shapes, const Tensor& semantics, NormMode mode,
                         std::vector<BatchStats>* stats) {
  const auto s = static_cast<std::size_t>(g.resolution);
  if (shapes.rank() != 4 || shapes.dim(1) != 1 || shapes.dim(2) != s || shapes.dim(3) != s) {
    throw DimensionError("generator expects shapes [N,1," + std::to_string(s) + "," + std::to_string(s) +
                         "], got " + shape_string(shapes.shape()));
  }
  const std::size_t n = shapes.dim(0);
  std::vector<Tensor> skips;
  Tensor h = shapes;
  for (std::size_t i = 0; i < g.encoder.size(); ++i) {
    if (i > 0) h = leaky_relu(h, kLeakySlope);
    h = finish_block(g.encoder[i], conv2d(h, g.encoder[i].weight, 2, 1), mode, stats);
    skips.push_back(h);
  }
  Tensor u = skips.back();
  if (g.semantic_dim > 0) {
    const auto sd = static_cast<std::size_t>(g.semantic_dim);
    if (semantics.empty() || semantics.numel() != n * sd) {
      throw DimensionError("generator expects semantics [" + std::to_string(n) + "," + std::to_string(sd) + "]");
    }
    u = concat_channels(u, semantics.reshape({n, sd, 1, 1}));
  }
  const std::size_t depth = g.decoder.size();
  for (std::size_t j = 0; j < depth; ++j) {
    h = conv2d_transpose(leaky_relu(u, kLeakySlope), g.decoder[j].weight, 2, 1);
    h = finish_block(g.decoder[j], h, mode, stats);
    if (j + 1 < depth) u = concat_channels(h, skips[depth - 2 - j]);
  }
  return add_scalar(scale(tanh(h), 0.5f), 0.5f);
}

Tensor discriminator_forward(const Discriminator& d, const Tensor& shapes, const Tensor& images, NormMode mode,
                             std::vector<BatchStats>* stats) {
  Tensor h = concat_channels(shapes, images);
  if (h.dim(2) != static_cast<std::size_t>(d.resolution)) {
    throw DimensionError("discriminator expects " + std::to_string(d.resolution) + "-pixel inputs");
  }
  for (std::size_t i = 0; i < d.layers.size(); ++i) {
    const bool last = i + 1 == d.layers.size();
    const bool whole = last && d.global;
    h = finish_block(d.layers[i], conv2d(h, d.layers[i].weight, whole ? 1 : 2, whole ? 0 : 1), mode, stats);
    if (!last) h = leaky_relu(h, kLeakySlope);
  }
  return sigmoid(h);
}

// ------------------------------------------------------------------ losses

GeneratorLoss generator_loss(const Tensor& d_fake, const Tensor& fake, const Tensor& target, float lambda_img) {
  GeneratorLoss out;
  out.adversarial = neg_log_mean(d_fake, kLogFloor);
  out.image = l1_loss(fake, target);
  out.total = add(out.adversarial, scale(out.image, lambda_img));
  return out;
}

Tensor discriminator_loss(const Tensor& d_real, const Tensor& d_fake) {
  return add(neg_log_mean(d_real, kLogFloor), neg_log1m_mean(d_fake, kLogFloor));
}

// ---------------------------------------------------------------- training

GanTrainer::GanTrainer(GanModel& model)
    : model_(model),
      adam_g_(model.generator.parameters(),
              AdamConfig{model.config.lr, model.config.beta1, model.config.beta2, 1e-8f}),
      adam_d_(model.discriminator.parameters(),
              AdamConfig{model.config.lr, model.config.beta1, model.config.beta2, 1e-8f}),
      shuffle_state_(mix_seed(model.config.seed, 3)) {}

GanTrainer::Batch GanTrainer::make_batch(const std::vector<TrainingPair>& pairs,
                                         std::span<const std::size_t> indices) const {
  std::vector<const Image*> shapes, targets;
  const auto sd = static_cast<std::size_t>(model_.generator.semantic_dim);
  std::vector<float> sem;
  for (auto i : indices) {
    const auto& p = pairs.at(i);
    shapes.push_back(&p.shape);
    targets.push_back(&p.target);
    if (sd > 0) {
      if (static_cast<std::size_t>(p.semantic.size()) != sd) {
        throw DimensionError("training pair has a " + std::to_string(p.semantic.size()) +
                             "-dim semantic vector, model expects " + std::to_string(sd));
      }
      sem.insert(sem.end(), p.semantic.data(), p.semantic.data() + p.semantic.size());
    }
  }
  Batch b{images_tensor(shapes), Tensor(), images_tensor(targets)};
  if (sd > 0) b.semantics = Tensor({indices.size(), sd}, std::move(sem));
  return b;
}

double GanTrainer::d_step(const Batch& batch, const Tensor& fake, float lr) {
  adam_d_.zero_grad();
  const Tensor real_scores = discriminator_forward(model_.discriminator, batch.shapes, batch.targets);
  const Tensor fake_scores = discriminator_forward(model_.discriminator, batch.shapes, fake.detach());
  Tensor loss = discriminator_loss(real_scores, fake_scores);
  const float value = loss.item();
  if (!std::isfinite(value)) throw_non_finite(model_, "discriminator loss is " + std::to_string(value));
  loss.backward();
  adam_d_.step(lr);
  return value;
}

namespace {

GeneratorLoss generator_update(GanModel& model, Adam& adam, const GanTrainer::Batch& batch, const Tensor& fake,
                               float lr) {
  adam.zero_grad();
  GeneratorLoss loss;
  {
    FreezeGuard frozen(model.discriminator.parameters());
    const Tensor scores = discriminator_forward(model.discriminator, batch.shapes, fake);
    loss = generator_loss(scores, fake, batch.targets, model.config.lambda_img);
    if (!std::isfinite(loss.total.item())) {
      throw_non_finite(model, "generator loss is " + std::to_string(loss.total.item()) +
                                  " (adversarial " + std::to_string(loss.adversarial.item()) + ", L1 " +
                                  std::to_string(loss.image.item()) + ")");
    }
    loss.total.backward();
  }
  adam.step(lr);
  return loss;
}

}  // namespace

GeneratorLoss GanTrainer::g_step(const Batch& batch, float lr) {
  const Tensor fake = generator_forward(model_.generator, batch.shapes, batch.semantics);
  return generator_update(model_, adam_g_, batch, fake, lr);
}

GanTrainer::StepLosses GanTrainer::train_batch(const Batch& batch, float lr) {
  const Tensor fake = generator_forward(model_.generator, batch.shapes, batch.semantics);
  StepLosses out;
  out.d_loss = d_step(batch, fake, lr);
  const GeneratorLoss g = generator_update(model_, adam_g_, batch, fake, lr);
  out.g_adv = g.adversarial.item();
  out.g_l1 = g.image.item();
  out.g_total = g.total.item();
  return out;
}

EpochLog GanTrainer::run_epoch(const std::vector<TrainingPair>& pairs, int epoch) {
  if (pairs.empty()) throw ContractError("GAN training needs at least one pair");
  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(mix_seed(shuffle_state_, static_cast<std::uint64_t>(epoch)));
  std::shuffle(order.begin(), order.end(), rng);

  EpochLog log;
  log.epoch = epoch;
  log.lr = learning_rate(model_.config, epoch);
  for (auto idx : split_batches(order, model_.config.batch)) {
    const auto losses = train_batch(make_batch(pairs, idx), log.lr);
    const double w = static_cast<double>(idx.size());
    log.d_loss += w * losses.d_loss;
    log.g_adv += w * losses.g_adv;
    log.g_l1 += w * losses.g_l1;
    log.g_total += w * losses.g_total;
  }
  const double n = static_cast<double>(pairs.size());
  log.d_loss /= n;
  log.g_adv /= n;
  log.g_l1 /= n;
  log.g_total /= n;
  return log;
}

GanModel train_gan(const std::vector<TrainingPair>& pairs, const GanTrainConfig& config,
                   std::vector<EpochLog>* log, const EpochCallback& on_epoch) {
  if (pairs.empty()) throw ContractError("GAN training needs at least one pair");
  GanModel model = build_gan(config);
  for (const auto& p : pairs) {
    if (p.shape.rows() != config.resolution || p.shape.cols() != config.resolution ||
        p.target.rows() != config.resolution || p.target.cols() != config.resolution) {
      throw DimensionError("training pair images must be " + std::to_string(config.resolution) + " pixels square");
    }
  }
  GanTrainer trainer(model);
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const EpochLog entry = trainer.run_epoch(pairs, epoch);
    if (log) log->push_back(entry);
    if (on_epoch) on_epoch(entry);
  }
  calibrate_norms(model, pairs);
  return model;
}

void calibrate_norms(GanModel& model, const std::vector<TrainingPair>& pairs) {
  auto norms = model.generator.norms();
  if (norms.empty() || pairs.empty()) return;
  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), 0);
  GanTrainer helper(model);
  std::vector<std::vector<double>> mean(norms.size()), var(norms.size());
  for (std::size_t l = 0; l < norms.size(); ++l) {
    mean[l].assign(norms[l]->running.mean.size(), 0.0);
    var[l].assign(norms[l]->running.var.size(), 0.0);
  }
  double total = 0;
  for (auto idx : split_batches(order, model.config.batch)) {
    const auto batch = helper.make_batch(pairs, idx);
    std::vector<BatchStats> stats;
    generator_forward(model.generator, batch.shapes.detach(), batch.semantics, NormMode::kBatch, &stats);
    const double w = static_cast<double>(idx.size());
    for (std::size_t l = 0; l < norms.size(); ++l)
      for (std::size_t c = 0; c < mean[l].size(); ++c) {
        mean[l][c] += w * stats[l].mean[c];
        var[l][c] += w * stats[l].var[c];
      }
    total += w;
  }
  for (std::size_t l = 0; l < norms.size(); ++l)
    for (std::size_t c = 0; c < mean[l].size(); ++c) {
      norms[l]->running.mean[c] = static_cast<float>(mean[l][c] / total);
      norms[l]->running.var[c] = static_cast<float>(var[l][c] / total);
    }
}

Image generate(const GanModel& model, const Image& shape, const Eigen::VectorXf& semantic) {
  const auto s = static_cast<std::size_t>(model.generator.resolution);
  if (static_cast<std::size_t>(shape.rows()) != s || static_cast<std::size_t>(shape.cols()) != s) {
    throw DimensionError("generate: shape image must be " + std::to_string(s) + " pixels square");
  }
  Tensor shapes({1, 1, s, s}, std::vector<float>(shape.data(), shape.data() + shape.size()));
  Tensor sem;
  if (model.generator.semantic_dim > 0) {
    sem = Tensor({1, static_cast<std::size_t>(semantic.size())},
                 std::vector<float>(semantic.data(), semantic.data() + semantic.size()));
  }
  const Tensor out = generator_forward(model.generator, shapes, sem, NormMode::kRunning);
  Image img(shape.rows(), shape.cols());
  std::copy(out.data().begin(), out.data().end(), img.data());
  return img;
}

// ------------------------------------------------------------ augmentation

AugmentationResult make_augmented_pairs(const std::vector<ExternalImage>& images, const CategoryAverages& averages,
                                        int patch) {
  AugmentationResult out;
  for (const auto& ext : images) {
    if (!averages.contains(ext.category)) {
      ++out.rejected;
      continue;
    }
    const Image mask = ext.mask ? binarize_mask(*ext.mask, 0.5f).mask : binarize_mask(ext.image, std::nullopt).mask;
    out.pairs.push_back({shape_image(mask, patch), averages.at(ext.category), ext.image});
  }
  return out;
}

Image reconstruct(const GanModel& model, const ShapeDecoder& shape_decoder, const SemanticNet* semantic_net,
                  const TrialRecord& record, const RoiLayout& layout) {
  if (static_cast<std::size_t>(record.voxels.size()) != layout.total_voxels()) {
    throw DimensionError("record has " + std::to_string(record.voxels.size()) + " voxels, layout has " +
                         std::to_string(layout.total_voxels()));
  }
  if (shape_decoder.image_size != model.generator.resolution) {
    throw DimensionError("shape decoder produces " + std::to_string(shape_decoder.image_size) +
                         "-pixel shapes, generator expects " + std::to_string(model.generator.resolution));
  }
  Eigen::VectorXf sem;
  if (model.generator.semantic_dim > 0) {
    if (!semantic_net) throw ContractError("reconstruct: model uses semantics but no semantic net was given");
    sem = semantic_features(*semantic_net, record, layout);
  }
  return generate(model, decode_shape(shape_decoder, record, layout), sem);
}

// ------------------------------------------------------------ persistence

namespace {

json config_json(const GanTrainConfig& c) {
  return {{"lambda_img", c.lambda_img},   {"lr", c.lr},
          {"beta1", c.beta1},             {"beta2", c.beta2},
          {"batch", c.batch},             {"epochs", c.epochs},
          {"decay_start", c.decay_start}, {"resolution", c.resolution},
          {"base_channels", c.base_channels}, {"semantic_dim", c.semantic_dim},
          {"use_semantics", c.use_semantics}, {"disc_depth", c.disc_depth},
          {"disc_channels", c.disc_channels}, {"disc_global", c.disc_global},
          {"seed", c.seed}};
}

GanTrainConfig config_from_json(const json& j) {
  GanTrainConfig c;
  c.lambda_img = j.at("lambda_img");
  c.lr = j.at("lr");
  c.beta1 = j.at("beta1");
  c.beta2 = j.at("beta2");
  c.batch = j.at("batch");
  c.epochs = j.at("epochs");
  c.decay_start = j.at("decay_start");
  c.resolution = j.at("resolution");
  c.base_channels = j.at("base_channels");
  c.semantic_dim = j.at("semantic_dim");
  c.use_semantics = j.at("use_semantics");
  c.disc_depth = j.at("disc_depth");
  c.disc_channels = j.at("disc_channels");
  c.disc_global = j.at("disc_global");
  c.seed = j.at("seed");
  return c;
}

void write_block(std::ostream& os, const ConvBlock& b) {
  write_tensor(os, b.weight);
  if (!b.bias.empty()) write_tensor(os, b.bias);
  if (b.norm) {
    write_tensor(os, b.norm->gamma);
    write_tensor(os, b.norm->beta);
    const auto c = b.norm->running.mean.size();
    write_tensor(os, Tensor({c}, b.norm->running.mean));
    write_tensor(os, Tensor({c}, b.norm->running.var));
  }
}

void read_into(std::istream& is, Tensor& dst) {
  Tensor t = read_tensor(is);
  if (t.shape() != dst.shape()) {
    throw IoError("GAN checkpoint: tensor " + shape_string(t.shape()) + ", expected " + shape_string(dst.shape()));
  }
  std::copy(t.data().begin(), t.data().end(), dst.data().begin());
}

void read_block(std::istream& is, ConvBlock& b) {
  read_into(is, b.weight);
  if (!b.bias.empty()) read_into(is, b.bias);
  if (b.norm) {
    read_into(is, b.norm->gamma);
    read_into(is, b.norm->beta);
    const auto c = b.norm->running.mean.size();
    Tensor mean({c}), var({c});
    read_into(is, mean);
    read_into(is, var);
    b.norm->running.mean.assign(mean.data().begin(), mean.data().end());
    b.norm->running.var.assign(var.data().begin(), var.data().end());
  }
}

}  // namespace

void write_gan(std::ostream& os, const GanModel& model) {
  binio::write_magic(os, "GAN1");
  binio::write_string(os, config_json(model.config).dump());
  for (const auto& b : model.generator.encoder) write_block(os, b);
  for (const auto& b : model.generator.decoder) write_block(os, b);
  for (const auto& b : model.discriminator.layers) write_block(os, b);
}

GanModel read_gan(std::istream& is) {
  binio::expect_magic(is, "GAN1", "GAN checkpoint");
  GanTrainConfig config;
  try {
    config = config_from_json(json::parse(binio::read_string(is)));
  } catch (const json::exception& e) {
    throw IoError(std::string("GAN checkpoint config: ") + e.what());
  }
  GanModel model = build_gan(config);
  for (auto& b : model.generator.encoder) read_block(is, b);
  for (auto& b : model.generator.decoder) read_block(is, b);
  for (auto& b : model.discriminator.layers) read_block(is, b);
  return model;
}

void save_gan(const std::string& path, const GanModel& model) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path + " for writing");
  write_gan(os, model);
  if (!os) throw IoError("failed writing " + path);
}

GanModel load_gan(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path);
  return read_gan(is);
}

}  // namespace ssgan
