#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "ssgan/dataset.hpp"
#include "ssgan/image.hpp"
#include "ssgan/optim.hpp"
#include "ssgan/semantic.hpp"
#include "ssgan/shape_decoder.hpp"
#include "ssgan/tensor.hpp"

namespace ssgan {

struct GanTrainConfig {
  float lambda_img = 100.0f;
  float lr = 2e-4f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  int batch = 10;
  int epochs = 200;
  int decay_start = 120;
  int resolution = 256;
  int base_channels = 64;
  int semantic_dim = 64;
  // Off: pure shape-to-image translation, no semantic channels.
  bool use_semantics = true;
  int disc_depth = 3;
  int disc_channels = 0;  // 0: same as base_channels
  // One score per sample instead of a patch grid.
  bool disc_global = false;
  std::uint64_t seed = 0;

  void validate() const;
  int depth() const;
  int semantic_channels() const { return use_semantics ? semantic_dim : 0; }
};

// Constant up to decay_start, then linear to 0 at the final epoch. Epochs
// count from 1.
float learning_rate(const GanTrainConfig& config, int epoch);

struct BatchNormLayer {
  Tensor gamma, beta;
  BatchStats running;  // population statistics for inference
};

// 4x4, stride 2, pad 1 (de)convolution, optionally followed by batch norm.
struct ConvBlock {
  Tensor weight;
  Tensor bias;  // empty when followed by batch norm
  std::optional<BatchNormLayer> norm;
};

enum class NormMode {
  kBatch,    // batch statistics (training)
  kRunning,  // stored population statistics (inference)
};

// U-Net over a 1-channel shape image. Encoder level i halves the resolution
// down to a 1x1 bottleneck, where the semantic vector is appended as extra
// channels; decoder level j mirrors it and concatenates the matching encoder
// output. The final tanh is mapped to [0,1].
struct Generator {
  int resolution = 0;
  int semantic_dim = 0;  // injected channels; 0 for shape only
  std::vector<ConvBlock> encoder;
  std::vector<ConvBlock> decoder;

  std::vector<Tensor> parameters() const;
  std::vector<BatchNormLayer*> norms();
};

// Convolution stack over the channel-concatenated (shape, image) pair ending
// in one sigmoid score per patch, or per sample in global mode.
struct Discriminator {
  int resolution = 0;
  bool global = false;
  std::vector<ConvBlock> layers;

  std::vector<Tensor> parameters() const;
  std::vector<BatchNormLayer*> norms();
};

inline constexpr float kLeakySlope = 0.2f;
inline constexpr float kLogFloor = 1e-7f;
inline constexpr float kNormEps = 1e-5f;

// Lower-level builders without the desk-scale resolution floor; resolution
// must be a power of two >= 2 (>= 8 for the discriminator at depth 3).
Generator make_generator(int resolution, int base_channels, int semantic_dim, std::uint64_t seed);
Discriminator make_discriminator(int resolution, int channels, int depth, bool global, std::uint64_t seed);

Generator build_generator(const GanTrainConfig& config);
Discriminator build_discriminator(const GanTrainConfig& config);

// shapes [N,1,S,S]; semantics [N,semantic_dim] (ignored when semantic_dim is 0).
// Output [N,1,S,S] in [0,1].
Tensor generator_forward(const Generator& g, const Tensor& shapes, const Tensor& semantics,
                         NormMode mode = NormMode::kBatch, std::vector<BatchStats>* stats = nullptr);
// Scores in (0,1): [N,1,h,w] patches, [N,1,1,1] in global mode.
Tensor discriminator_forward(const Discriminator& d, const Tensor& shapes, const Tensor& images,
                             NormMode mode = NormMode::kBatch, std::vector<BatchStats>* stats = nullptr);

struct GeneratorLoss {
  Tensor total;
  Tensor adversarial;
  Tensor image;  // mean |y - G|
};

// mean(-log D(fake)) + lambda_img * mean|target - fake|.
GeneratorLoss generator_loss(const Tensor& d_fake, const Tensor& fake, const Tensor& target, float lambda_img);
// mean(-log D(real)) + mean(-log(1 - D(fake))).
Tensor discriminator_loss(const Tensor& d_real, const Tensor& d_fake);

// One GAN training example: shape image, semantic vector and target image.
struct TrainingPair {
  Image shape;
  Eigen::VectorXf semantic;
  Image target;
};

struct EpochLog {
  int epoch = 0;
  float lr = 0.0f;
  double d_loss = 0.0;
  double g_adv = 0.0;
  double g_l1 = 0.0;
  double g_total = 0.0;
};

struct GanModel {
  GanTrainConfig config;
  Generator generator;
  Discriminator discriminator;
};

GanModel build_gan(const GanTrainConfig& config);

// Alternating optimization: per batch one discriminator step on the
// detached fake, then one generator step with the discriminator frozen.
class GanTrainer {
 public:
  explicit GanTrainer(GanModel& model);

  struct Batch {
    Tensor shapes, semantics, targets;
  };
  Batch make_batch(const std::vector<TrainingPair>& pairs, std::span<const std::size_t> indices) const;

  struct StepLosses {
    double d_loss = 0.0;
    double g_adv = 0.0;
    double g_l1 = 0.0;
    double g_total = 0.0;
  };
  // Both updates on one batch; fake images are generated once and shared.
  StepLosses train_batch(const Batch& batch, float lr);
  // Individual halves, for tests of the freeze contract.
  double d_step(const Batch& batch, const Tensor& fake, float lr);
  GeneratorLoss g_step(const Batch& batch, float lr);

  EpochLog run_epoch(const std::vector<TrainingPair>& pairs, int epoch);

  Adam& generator_optimizer() { return adam_g_; }
  Adam& discriminator_optimizer() { return adam_d_; }

 private:
  GanModel& model_;
  Adam adam_g_;
  Adam adam_d_;
  std::uint64_t shuffle_state_;
};

using EpochCallback = std::function<void(const EpochLog&)>;

// Builds, trains and calibrates a model. Throws NumericalError with a
// summary of the parameter state when a loss turns non-finite.
GanModel train_gan(const std::vector<TrainingPair>& pairs, const GanTrainConfig& config,
                   std::vector<EpochLog>* log = nullptr, const EpochCallback& on_epoch = {});

// Replaces the running statistics of every batch-norm layer by averages of
// batch statistics over the pairs, visited in order in chunks of `batch`.
void calibrate_norms(GanModel& model, const std::vector<TrainingPair>& pairs);

// Inference on one example with running statistics.
Image generate(const GanModel& model, const Image& shape, const Eigen::VectorXf& semantic);

// An image outside the voxel data, for augmentation.
struct ExternalImage {
  Image image;
  std::optional<Image> mask;  // binarized from the image (Otsu) when absent
  int category = 0;
};

struct AugmentationResult {
  std::vector<TrainingPair> pairs;
  int rejected = 0;
};

// Shape from the image's binarized mask, semantics from its category's
// average feature. Images of categories without an average are rejected.
AugmentationResult make_augmented_pairs(const std::vector<ExternalImage>& images,
                                        const CategoryAverages& averages, int patch);

// G(decoded shape, semantic features) for one record. semantic_net may be
// null for a shape-only model.
Image reconstruct(const GanModel& model, const ShapeDecoder& shape_decoder, const SemanticNet* semantic_net,
                  const TrialRecord& record, const RoiLayout& layout);

// "GAN1", u32-length JSON config block, then every parameter and running
// statistic (TSR1) in construction order.
void write_gan(std::ostream& os, const GanModel& model);
GanModel read_gan(std::istream& is);
void save_gan(const std::string& path, const GanModel& model);
GanModel load_gan(const std::string& path);

}  // namespace ssgan
