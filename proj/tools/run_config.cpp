#include "run_config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

#include "ssgan/error.hpp"

namespace ssgan::cli {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <typename T>
T parse_integer(std::string_view key, std::string_view v) {
  T out{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ConfigError("bad integer for " + std::string(key) + ": \"" + std::string(v) + "\"");
  }
  return out;
}

double parse_real(std::string_view key, std::string_view v) {
  const std::string s(v);
  std::size_t used = 0;
  double out = 0;
  try {
    out = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (s.empty() || used != s.size()) throw ConfigError("bad number for " + std::string(key) + ": \"" + s + "\"");
  return out;
}

bool parse_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("bad boolean for " + std::string(key) + ": \"" + std::string(v) + "\"");
}

std::vector<std::string> parse_list(std::string_view v) {
  std::vector<std::string> out;
  std::stringstream ss{std::string(v)};
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <typename T>
std::string format_real(T v) {
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (const auto& s : items) out += (out.empty() ? "" : ",") + s;
  return out;
}

struct Entry {
  std::string name;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, std::string_view)> set;
};

template <typename T>
using Ref = T& (*)(RunConfig&);

template <typename T>
Entry integer(std::string name, Ref<T> ref) {
  return {name, [ref](const RunConfig& c) { return std::to_string(ref(const_cast<RunConfig&>(c))); },
          [ref, name](RunConfig& c, std::string_view v) { ref(c) = parse_integer<T>(name, v); }};
}

template <typename T>
Entry real(std::string name, Ref<T> ref) {
  return {name, [ref](const RunConfig& c) { return format_real(ref(const_cast<RunConfig&>(c))); },
          [ref, name](RunConfig& c, std::string_view v) { ref(c) = static_cast<T>(parse_real(name, v)); }};
}

Entry boolean(std::string name, Ref<bool> ref) {
  return {name, [ref](const RunConfig& c) { return std::string(ref(const_cast<RunConfig&>(c)) ? "true" : "false"); },
          [ref, name](RunConfig& c, std::string_view v) { ref(c) = parse_bool(name, v); }};
}

Entry text(std::string name, Ref<std::string> ref) {
  return {name, [ref](const RunConfig& c) { return ref(const_cast<RunConfig&>(c)); },
          [ref](RunConfig& c, std::string_view v) { ref(c) = std::string(v); }};
}

Entry list(std::string name, Ref<std::vector<std::string>> ref) {
  return {name, [ref](const RunConfig& c) { return join(ref(const_cast<RunConfig&>(c))); },
          [ref, name](RunConfig& c, std::string_view v) {
            auto items = parse_list(v);
            if (items.empty()) throw ConfigError(name + " needs at least one entry");
            ref(c) = std::move(items);
          }};
}

const std::vector<Entry>& entries() {
  static const std::vector<Entry> table = {
      text("dataset", [](RunConfig& c) -> std::string& { return c.dataset; }),
      text("out", [](RunConfig& c) -> std::string& { return c.out; }),
      {"seed", [](const RunConfig& c) { return c.seed ? std::to_string(*c.seed) : std::string(); },
       [](RunConfig& c, std::string_view v) { c.seed = parse_integer<std::uint64_t>("seed", v); }},
      integer<int>("threads", [](RunConfig& c) -> int& { return c.threads; }),
      boolean("tolerance_mode", [](RunConfig& c) -> bool& { return c.tolerance_mode; }),

      integer<int>("sim.categories", [](RunConfig& c) -> int& { return c.sim.categories; }),
      integer<int>("sim.train", [](RunConfig& c) -> int& { return c.sim.train_stimuli; }),
      integer<int>("sim.test", [](RunConfig& c) -> int& { return c.sim.test_stimuli; }),
      integer<int>("sim.extra", [](RunConfig& c) -> int& { return c.sim.extra_images; }),
      integer<int>("sim.train_trials", [](RunConfig& c) -> int& { return c.sim.train_trials; }),
      integer<int>("sim.test_trials", [](RunConfig& c) -> int& { return c.sim.test_trials; }),
      integer<int>("sim.image_size", [](RunConfig& c) -> int& { return c.sim.image_size; }),
      integer<int>("sim.patch", [](RunConfig& c) -> int& { return c.sim.patch; }),
      integer<int>("sim.lvc_voxels", [](RunConfig& c) -> int& { return c.sim_lvc_voxels; }),
      integer<int>("sim.hvc_voxels", [](RunConfig& c) -> int& { return c.sim_hvc_voxels; }),
      real<float>("sim.noise_scale", [](RunConfig& c) -> float& { return c.sim_noise_scale; }),
      real<float>("sim.shape_leak", [](RunConfig& c) -> float& { return c.sim.shape_leak; }),
      boolean("sim.shared_shapes", [](RunConfig& c) -> bool& { return c.sim.shared_shapes; }),

      list("shape.rois", [](RunConfig& c) -> std::vector<std::string>& { return c.pipeline.shape_rois; }),
      real<double>("shape.lambda", [](RunConfig& c) -> double& { return c.pipeline.shape.penalty.value; }),
      boolean("shape.trace_normalized",
              [](RunConfig& c) -> bool& { return c.pipeline.shape.penalty.trace_normalized; }),
      integer<int>("shape.patch", [](RunConfig& c) -> int& { return c.pipeline.shape.patch; }),
      {"shape.combiner",
       [](const RunConfig& c) {
         return std::string(c.pipeline.shape.combiner_mode == CombinerMode::kConvex ? "convex" : "unconstrained");
       },
       [](RunConfig& c, std::string_view v) {
         if (v == "convex") {
           c.pipeline.shape.combiner_mode = CombinerMode::kConvex;
         } else if (v == "unconstrained") {
           c.pipeline.shape.combiner_mode = CombinerMode::kUnconstrained;
         } else {
           throw ConfigError("shape.combiner must be convex or unconstrained, got \"" + std::string(v) + "\"");
         }
       }},

      text("semantic.roi", [](RunConfig& c) -> std::string& { return c.pipeline.semantic_roi; }),
      integer<int>("semantic.hidden1", [](RunConfig& c) -> int& { return c.pipeline.semantic.hidden1; }),
      integer<int>("semantic.hidden2", [](RunConfig& c) -> int& { return c.pipeline.semantic.hidden2; }),
      integer<int>("semantic.epochs", [](RunConfig& c) -> int& { return c.pipeline.semantic.epochs; }),
      real<float>("semantic.lr", [](RunConfig& c) -> float& { return c.pipeline.semantic.lr; }),
      integer<int>("semantic.batch", [](RunConfig& c) -> int& { return c.pipeline.semantic.batch; }),

      real<float>("gan.lambda_img", [](RunConfig& c) -> float& { return c.pipeline.gan.lambda_img; }),
      real<float>("gan.lr", [](RunConfig& c) -> float& { return c.pipeline.gan.lr; }),
      real<float>("gan.beta1", [](RunConfig& c) -> float& { return c.pipeline.gan.beta1; }),
      real<float>("gan.beta2", [](RunConfig& c) -> float& { return c.pipeline.gan.beta2; }),
      integer<int>("gan.batch", [](RunConfig& c) -> int& { return c.pipeline.gan.batch; }),
      integer<int>("gan.epochs", [](RunConfig& c) -> int& { return c.pipeline.gan.epochs; }),
      integer<int>("gan.decay_start", [](RunConfig& c) -> int& { return c.pipeline.gan.decay_start; }),
      integer<int>("gan.base_channels", [](RunConfig& c) -> int& { return c.pipeline.gan.base_channels; }),
      integer<int>("gan.disc_depth", [](RunConfig& c) -> int& { return c.pipeline.gan.disc_depth; }),
      integer<int>("gan.disc_channels", [](RunConfig& c) -> int& { return c.pipeline.gan.disc_channels; }),
      boolean("gan.disc_global", [](RunConfig& c) -> bool& { return c.pipeline.gan.disc_global; }),

      {"no_semantics", [](const RunConfig& c) { return std::string(c.pipeline.use_semantics ? "false" : "true"); },
       [](RunConfig& c, std::string_view v) { c.pipeline.use_semantics = !parse_bool("no_semantics", v); }},
      {"no_augmentation", [](const RunConfig& c) { return std::string(c.pipeline.augment ? "false" : "true"); },
       [](RunConfig& c, std::string_view v) { c.pipeline.augment = !parse_bool("no_augmentation", v); }},
      integer<int>("eval.runs", [](RunConfig& c) -> int& { return c.pipeline.eval_runs; }),
      list("ablate.rois", [](RunConfig& c) -> std::vector<std::string>& { return c.ablate_rois; }),
      integer<int>("ablate.reserved", [](RunConfig& c) -> int& { return c.ablate_reserved; }),
  };
  return table;
}

}  // namespace

SyntheticConfig RunConfig::synthetic() const {
  SyntheticConfig c = sim;
  for (auto& [roi, n] : c.voxels_per_roi) {
    const bool lower = roi == "V1" || roi == "V2" || roi == "V3";
    const int count = lower ? sim_lvc_voxels : sim_hvc_voxels;
    if (count < 1) throw ConfigError("voxel counts must be >= 1");
    n = static_cast<std::size_t>(count);
  }
  if (sim_noise_scale < 0) throw ConfigError("sim.noise_scale must be >= 0");
  for (auto& [roi, s] : c.noise_sigma) s *= sim_noise_scale;
  c.seed = seed.value_or(0);
  return c;
}

PipelineConfig RunConfig::resolved_pipeline() const {
  PipelineConfig c = pipeline;
  c.seed = seed.value_or(0);
  return c;
}

void set_key(RunConfig& config, std::string_view key, std::string_view value) {
  for (const auto& e : entries()) {
    if (e.name == key) {
      e.set(config, value);
      return;
    }
  }
  throw ConfigError("unknown key \"" + std::string(key) + "\"");
}

std::vector<std::pair<std::string, std::string>> snapshot(const RunConfig& config) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& e : entries()) out.emplace_back(e.name, e.get(config));
  return out;
}

std::vector<std::string> known_keys() {
  std::vector<std::string> out;
  for (const auto& e : entries()) out.push_back(e.name);
  return out;
}

void apply_config_text(RunConfig& config, std::string_view text, const std::string& source) {
  std::stringstream ss{std::string(text)};
  std::string raw;
  int line_no = 0;
  while (std::getline(ss, raw)) {
    ++line_no;
    std::string line = raw.substr(0, raw.find('#'));
    line = trim(line);
    if (line.empty()) continue;
    const auto where = source + ":" + std::to_string(line_no) + ": ";
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + "expected key = value in \"" + trim(raw) + "\"");
    try {
      set_key(config, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what() + " in \"" + trim(raw) + "\"");
    }
  }
}

void apply_config_file(RunConfig& config, const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot read config file " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  apply_config_text(config, ss.str(), path);
}

void apply_override(RunConfig& config, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos) {
    throw ConfigError("--set expects key=value, got \"" + std::string(assignment) + "\"");
  }
  set_key(config, trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

}  // namespace ssgan::cli
