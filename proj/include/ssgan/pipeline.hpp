#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ssgan/dataset.hpp"
#include "ssgan/evaluation.hpp"
#include "ssgan/gan.hpp"
#include "ssgan/semantic.hpp"
#include "ssgan/shape_decoder.hpp"

namespace ssgan {

enum class AblationMode { kFull, kNoSemantics, kNoAugmentation };

std::string_view to_string(AblationMode mode);
// "full", "no_semantics" or "no_augmentation"; throws ConfigError otherwise.
AblationMode parse_ablation_mode(std::string_view name);

struct PipelineConfig {
  std::vector<std::string> shape_rois{"V1", "V2", "V3"};
  ShapeFitOptions shape;
  std::string semantic_roi = "HVC";
  SemanticNetConfig semantic;
  GanTrainConfig gan;  // semantic_dim follows semantic.hidden2, resolution the dataset
  bool use_semantics = true;
  bool augment = true;
  int eval_runs = 5;
  // Seeds the semantic net, the GAN and the evaluation.
  std::uint64_t seed = 0;

  void apply(AblationMode mode);
  SemanticNetConfig semantic_config() const;
  GanTrainConfig gan_config() const;
};

ShapeDecoder train_shape_stage(const Dataset& dataset, const PipelineConfig& config);
SemanticNet train_semantic_stage(const Dataset& dataset, const PipelineConfig& config);

// Decoded shape and semantic features of every training record, paired with
// its stimulus. semantic_net may be null for shape-only training.
std::vector<TrainingPair> decoded_pairs(const Dataset& dataset, const ShapeDecoder& shape,
                                        const SemanticNet* semantic_net);
// Per-category mean semantic features over the training records; without a
// net every training category maps to an empty vector.
CategoryAverages training_category_averages(const Dataset& dataset, const SemanticNet* semantic_net);
// Augmentation pairs from the dataset's extra stimuli.
AugmentationResult extra_pairs(const Dataset& dataset, const CategoryAverages& averages, int patch);

struct Reconstructions {
  std::vector<std::string> ids;
  std::vector<Image> shapes;
  std::vector<Image> images;
  std::vector<Image> truths;
};

// One reconstruction per test record (trial-averaged records expected).
Reconstructions reconstruct_split(const Dataset& dataset, const GanModel& model, const ShapeDecoder& shape,
                                  const SemanticNet* semantic_net, Split split = Split::kTest);

struct PipelineResult {
  ShapeDecoder shape;
  std::optional<SemanticNet> semantic;
  GanModel gan;
  std::vector<EpochLog> log;
  std::size_t decoded_pairs = 0;
  std::size_t augmented_pairs = 0;
  int rejected = 0;
  Reconstructions test;
  EvalReport report;
};

// Shape decoder, semantic net, GAN, then reconstruction and pairwise
// evaluation of the trial-averaged test split.
PipelineResult run_pipeline(const Dataset& dataset, const PipelineConfig& config,
                            const EpochCallback& on_epoch = {});

// run_pipeline with the mode applied to a copy of the config.
EvalReport ablation_run(AblationMode mode, const Dataset& dataset, const PipelineConfig& config);

}  // namespace ssgan
