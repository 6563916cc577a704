#include "ssgan/simulate.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>

#include "ssgan/error.hpp"
#include "ssgan/shape_decoder.hpp"

namespace ssgan {

namespace {

constexpr int kFamilies = 3;  // ellipse, rectangle, triangle
constexpr int kVariants = 4;
constexpr float kBackground = 0.1f;

struct Template {
  int family;
  double aspect;
  double angle;
};

Template shape_template(int index) {
  static constexpr double kAspect[kVariants] = {1.0, 1.8, 1.0 / 1.8, 1.8};
  static constexpr double kAngle[kVariants] = {0.0, 0.0, 0.0, std::numbers::pi / 4};
  return {index % kFamilies, kAspect[index / kFamilies], kAngle[index / kFamilies]};
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Independent stream per (seed, purpose, index).
std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t purpose, std::uint64_t index) {
  return splitmix64(splitmix64(splitmix64(seed) ^ purpose) ^ index);
}

enum Purpose : std::uint64_t { kEncoders = 1, kStimulus = 2, kNoise = 3 };

Eigen::MatrixXf gaussian_matrix(Eigen::Index rows, Eigen::Index cols, float scale, std::mt19937_64& rng) {
  std::normal_distribution<float> n01(0.0f, 1.0f);
  Eigen::MatrixXf m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = scale * n01(rng);
  return m;
}

std::vector<float> category_intensities(int categories) {
  std::vector<float> out;
  for (int c = 0; c < categories; ++c) {
    const float level = categories > 1 ? 0.35f + 0.6f * static_cast<float>(c) / static_cast<float>(categories - 1)
                                       : 0.65f;
    out.push_back(std::round(level * 255.0f) / 255.0f);
  }
  return out;
}

std::string stimulus_name(const char* prefix, int index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s_%04d", prefix, index);
  return buf;
}

}  // namespace

int max_shape_templates() { return kFamilies * kVariants; }

void SyntheticConfig::set_noise(float sigma) {
  for (auto name : kRoiNames) noise_sigma[std::string(name)] = sigma;
}

void SyntheticConfig::validate() const {
  if (image_size < 16 || (image_size & (image_size - 1)) != 0) {
    throw ConfigError("image_size must be a power of two >= 16, got " + std::to_string(image_size));
  }
  if (patch <= 0 || image_size % patch != 0) {
    throw ConfigError("patch size " + std::to_string(patch) + " must divide image_size");
  }
  if (categories < 1) throw ConfigError("need at least one category");
  if (categories > max_shape_templates()) {
    throw ConfigError("at most " + std::to_string(max_shape_templates()) +
                      " categories have distinct shape templates, got " + std::to_string(categories));
  }
  if (train_stimuli < 0 || test_stimuli < 0 || extra_images < 0) {
    throw ConfigError("stimulus counts must be >= 0");
  }
  if (train_trials < 1 || test_trials < 1) throw ConfigError("trials per stimulus must be >= 1");
  if (shape_leak < 0) throw ConfigError("shape_leak must be >= 0");
  for (auto name : kRoiNames) {
    auto v = voxels_per_roi.find(std::string(name));
    if (v == voxels_per_roi.end() || v->second == 0) {
      throw ConfigError("voxel count for " + std::string(name) + " must be > 0");
    }
    auto s = noise_sigma.find(std::string(name));
    if (s == noise_sigma.end() || !(s->second >= 0)) {
      throw ConfigError("noise_sigma for " + std::string(name) + " must be >= 0");
    }
  }
}

RenderedShape render_stimulus(const SyntheticConfig& config, int category, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const double s = config.image_size;
  const Template tpl = shape_template(config.shared_shapes ? 0 : category);
  const double cx = s / 2 + 0.12 * s * u(rng);
  const double cy = s / 2 + 0.12 * s * u(rng);
  const double r = 0.22 * s * (1.0 + 0.25 * u(rng));
  const double theta = tpl.angle + 0.1 * u(rng);
  const double a = r * std::sqrt(tpl.aspect), b = r / std::sqrt(tpl.aspect);
  const double ct = std::cos(theta), st = std::sin(theta);

  const float fg = category_intensities(config.categories)[static_cast<std::size_t>(category)];
  RenderedShape out{Image::Zero(config.image_size, config.image_size),
                    Image::Constant(config.image_size, config.image_size, kBackground)};
  for (int i = 0; i < config.image_size; ++i)
    for (int j = 0; j < config.image_size; ++j) {
      const double dx = j + 0.5 - cx, dy = i + 0.5 - cy;
      const double lu = dx * ct + dy * st, lv = -dx * st + dy * ct;
      bool inside = false;
      switch (tpl.family) {
        case 0: inside = (lu / a) * (lu / a) + (lv / b) * (lv / b) <= 1.0; break;
        case 1: inside = std::fabs(lu) <= a && std::fabs(lv) <= b; break;
        default: inside = lv >= -b && lv <= b && std::fabs(lu) <= a * (lv + b) / (2 * b); break;
      }
      if (inside) {
        out.mask(i, j) = 1.0f;
        out.image(i, j) = fg;
      }
    }
  out.image = quantize8(out.image);
  return out;
}

Simulation simulate(const SyntheticConfig& config) {
  config.validate();
  Simulation sim;
  Dataset& ds = sim.dataset;
  SimulationTruth& truth = sim.truth;
  const int g = config.image_size / config.patch;
  const int g2 = g * g;

  ds.image_size = config.image_size;
  ds.layout = RoiLayout::contiguous(config.voxels_per_roi);
  for (int c = 0; c < config.categories; ++c) ds.category_names.push_back("category_" + std::to_string(c));
  truth.category_intensity = category_intensities(config.categories);
  truth.background = kBackground;

  std::mt19937_64 enc_rng(stream_seed(config.seed, kEncoders, 0));
  const float shape_scale = 1.0f / std::sqrt(static_cast<float>(g2));
  for (const auto& r : ds.layout.ranges()) {
    const auto d = static_cast<Eigen::Index>(r.size());
    const bool lower = r.name == "V1" || r.name == "V2" || r.name == "V3";
    if (!lower) truth.category_codes[r.name] = gaussian_matrix(d, config.categories, 1.0f, enc_rng);
    truth.shape_encoders[r.name] = gaussian_matrix(d, g2, shape_scale, enc_rng);
  }

  auto add_stimulus = [&](const char* prefix, int index, StimulusRole role, int category) {
    const std::uint64_t purpose = static_cast<std::uint64_t>(role) + 1;
    auto rendered = render_stimulus(config, category, stream_seed(config.seed, kStimulus * 16 + purpose,
                                                                  static_cast<std::uint64_t>(index)));
    Stimulus st{stimulus_name(prefix, index), category, role, std::move(rendered.image),
                std::move(rendered.mask)};
    truth.patch_vectors[st.id] = flatten(extract_patch_features(st.mask, config.patch));
    const std::string id = st.id;
    ds.stimuli.emplace(id, std::move(st));
    return id;
  };

  auto add_records = [&](const std::string& id, int category, Split split, int trials,
                         std::uint64_t noise_index) {
    const Eigen::VectorXf& p = truth.patch_vectors.at(id);
    for (int t = 0; t < trials; ++t) {
      std::mt19937_64 rng(stream_seed(config.seed, kNoise, noise_index * 1024 + static_cast<std::uint64_t>(t)));
      std::normal_distribution<float> n01(0.0f, 1.0f);
      TrialRecord rec{id, category, split, t, Eigen::VectorXf(ds.layout.total_voxels())};
      for (const auto& r : ds.layout.ranges()) {
        const auto begin = static_cast<Eigen::Index>(r.begin), d = static_cast<Eigen::Index>(r.size());
        const auto& enc = truth.shape_encoders.at(r.name);
        Eigen::VectorXf signal;
        if (auto it = truth.category_codes.find(r.name); it != truth.category_codes.end()) {
          signal = it->second.col(category) + config.shape_leak * (enc * p);
        } else {
          signal = enc * p;
        }
        const float sigma = config.noise_sigma.at(r.name);
        for (Eigen::Index i = 0; i < d; ++i) {
          rec.voxels(begin + i) = sigma > 0 ? signal(i) + sigma * n01(rng) : signal(i);
        }
      }
      ds.records.push_back(std::move(rec));
    }
  };

  std::uint64_t noise_index = 0;
  for (int i = 0; i < config.train_stimuli; ++i) {
    const int c = i % config.categories;
    const auto id = add_stimulus("train", i, StimulusRole::kTrain, c);
    add_records(id, c, Split::kTrain, config.train_trials, noise_index++);
  }
  for (int i = 0; i < config.test_stimuli; ++i) {
    const int c = i % config.categories;
    const auto id = add_stimulus("test", i, StimulusRole::kTest, c);
    add_records(id, c, Split::kTest, config.test_trials, noise_index++);
  }
  for (int i = 0; i < config.extra_images; ++i) {
    add_stimulus("extra", i, StimulusRole::kExtra, i % config.categories);
  }
  ds.validate();
  return sim;
}

}  // namespace ssgan
