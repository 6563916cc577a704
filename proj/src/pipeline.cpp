#include "ssgan/pipeline.hpp"

#include "ssgan/error.hpp"

namespace ssgan {

std::string_view to_string(AblationMode mode) {
  switch (mode) {
    case AblationMode::kFull:
      return "full";
    case AblationMode::kNoSemantics:
      return "no_semantics";
    case AblationMode::kNoAugmentation:
      return "no_augmentation";
  }
  return "?";
}

AblationMode parse_ablation_mode(std::string_view name) {
  if (name == "full") return AblationMode::kFull;
  if (name == "no_semantics") return AblationMode::kNoSemantics;
  if (name == "no_augmentation") return AblationMode::kNoAugmentation;
  throw ConfigError("unknown ablation mode \"" + std::string(name) +
                    "\" (expected full, no_semantics or no_augmentation)");
}

void PipelineConfig::apply(AblationMode mode) {
  if (mode == AblationMode::kNoSemantics) use_semantics = false;
  if (mode == AblationMode::kNoAugmentation) augment = false;
}

SemanticNetConfig PipelineConfig::semantic_config() const {
  SemanticNetConfig c = semantic;
  c.seed = seed;
  return c;
}

GanTrainConfig PipelineConfig::gan_config() const {
  GanTrainConfig c = gan;
  c.seed = seed;
  c.use_semantics = use_semantics;
  c.semantic_dim = semantic.hidden2;
  return c;
}

ShapeDecoder train_shape_stage(const Dataset& dataset, const PipelineConfig& config) {
  return fit_shape_decoder(dataset, config.shape_rois, config.shape);
}

SemanticNet train_semantic_stage(const Dataset& dataset, const PipelineConfig& config) {
  return train_semantic(dataset, config.semantic_config(), config.semantic_roi);
}

std::vector<TrainingPair> decoded_pairs(const Dataset& dataset, const ShapeDecoder& shape,
                                        const SemanticNet* semantic_net) {
  std::vector<TrainingPair> pairs;
  for (const auto* r : dataset.records_in(Split::kTrain)) {
    TrainingPair p;
    p.shape = decode_shape(shape, *r, dataset.layout);
    if (semantic_net) p.semantic = semantic_features(*semantic_net, *r, dataset.layout);
    p.target = dataset.stimulus(r->stimulus_id).image;
    pairs.push_back(std::move(p));
  }
  return pairs;
}

CategoryAverages training_category_averages(const Dataset& dataset, const SemanticNet* semantic_net) {
  const auto train = dataset.records_in(Split::kTrain);
  std::vector<int> labels;
  for (const auto* r : train) labels.push_back(r->category_id);
  if (!semantic_net) return category_average(Eigen::MatrixXf(static_cast<Eigen::Index>(train.size()), 0), labels);
  return category_average(semantic_features(*semantic_net, voxel_matrix(train, dataset.layout, semantic_net->roi)),
                          labels);
}

AugmentationResult extra_pairs(const Dataset& dataset, const CategoryAverages& averages, int patch) {
  std::vector<ExternalImage> images;
  for (const auto* s : dataset.stimuli_in(StimulusRole::kExtra)) images.push_back({s->image, s->mask, s->category_id});
  return make_augmented_pairs(images, averages, patch);
}

Reconstructions reconstruct_split(const Dataset& dataset, const GanModel& model, const ShapeDecoder& shape,
                                  const SemanticNet* semantic_net, Split split) {
  Reconstructions out;
  for (const auto* r : dataset.records_in(split)) {
    out.ids.push_back(r->stimulus_id);
    out.shapes.push_back(decode_shape(shape, *r, dataset.layout));
    out.images.push_back(reconstruct(model, shape, semantic_net, *r, dataset.layout));
    out.truths.push_back(dataset.stimulus(r->stimulus_id).image);
  }
  return out;
}

PipelineResult run_pipeline(const Dataset& dataset, const PipelineConfig& config, const EpochCallback& on_epoch) {
  const Dataset data = average_test_trials(dataset);
  PipelineResult out;
  out.shape = train_shape_stage(data, config);
  if (config.use_semantics) out.semantic = train_semantic_stage(data, config);
  const SemanticNet* net = out.semantic ? &*out.semantic : nullptr;

  auto pairs = decoded_pairs(data, out.shape, net);
  out.decoded_pairs = pairs.size();
  if (config.augment) {
    auto extra = extra_pairs(data, training_category_averages(data, net), out.shape.patch);
    out.augmented_pairs = extra.pairs.size();
    out.rejected = extra.rejected;
    pairs.insert(pairs.end(), std::make_move_iterator(extra.pairs.begin()),
                 std::make_move_iterator(extra.pairs.end()));
  }
  GanTrainConfig gan = config.gan_config();
  gan.resolution = data.image_size;
  out.gan = train_gan(pairs, gan, &out.log, on_epoch);
  out.test = reconstruct_split(data, out.gan, out.shape, net);
  out.report = pairwise_win_rate(out.test.images, out.test.truths, config.eval_runs, config.seed);
  return out;
}

EvalReport ablation_run(AblationMode mode, const Dataset& dataset, const PipelineConfig& config) {
  PipelineConfig c = config;
  c.apply(mode);
  return run_pipeline(dataset, c).report;
}

}  // namespace ssgan
