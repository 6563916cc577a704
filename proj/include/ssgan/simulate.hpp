#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <map>
#include <string>

#include "ssgan/dataset.hpp"

namespace ssgan {

// Parameters of the synthetic visual-cortex simulator.
//
// Each category owns a parametric shape template (ellipse, rectangle or
// triangle family with fixed aspect/orientation); each stimulus jitters its
// position and scale. Lower areas respond linearly to the patch grid p of
// the mask, higher areas to the category one-hot plus a weak shape leak:
//
//   x_k = A_k p + e                                  k in {V1, V2, V3}
//   x_k = E_k onehot(c) + leak * F_k p + e           k in {LOC, FFA, PPA}
struct SyntheticConfig {
  std::map<std::string, std::size_t> voxels_per_roi{{"V1", 500},  {"V2", 500},  {"V3", 500},
                                                    {"LOC", 400}, {"FFA", 400}, {"PPA", 400}};
  std::map<std::string, float> noise_sigma{{"V1", 0.6f},  {"V2", 0.8f},  {"V3", 1.0f},
                                           {"LOC", 1.0f}, {"FFA", 1.0f}, {"PPA", 1.0f}};
  int categories = 10;
  int train_stimuli = 500;
  int test_stimuli = 50;
  int extra_images = 100;
  int train_trials = 1;
  int test_trials = 5;
  int image_size = 32;
  int patch = 8;
  float shape_leak = 0.1f;
  // Every category draws its shapes from template 0, so only image
  // intensity tells categories apart.
  bool shared_shapes = false;
  std::uint64_t seed = 0;

  // Sets every area's noise level.
  void set_noise(float sigma);
  // Throws ConfigError when out of range.
  void validate() const;
};

// Number of distinct shape templates the generator can draw.
int max_shape_templates();

// Hidden generative parameters, for tests that need the true encoders.
struct SimulationTruth {
  std::map<std::string, Eigen::MatrixXf> shape_encoders;    // A_k or F_k, d_k x g^2
  std::map<std::string, Eigen::MatrixXf> category_codes;    // E_k, d_k x C
  std::map<std::string, Eigen::VectorXf> patch_vectors;     // p per stimulus id
  std::vector<float> category_intensity;                    // foreground level per category
  float background = 0.0f;
};

struct Simulation {
  Dataset dataset;
  SimulationTruth truth;
};

Simulation simulate(const SyntheticConfig& config);

// One rendered stimulus of a category, drawn with the given RNG seed.
struct RenderedShape {
  Image mask;
  Image image;
};
RenderedShape render_stimulus(const SyntheticConfig& config, int category, std::uint64_t seed);

}  // namespace ssgan
