#include "ssgan/dataset.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <tuple>

#include "json.hpp"
#include "ssgan/error.hpp"
#include "ssgan/serialize.hpp"

namespace ssgan {

namespace fs = std::filesystem;
using json = nlohmann::json;

// ------------------------------------------------------------- RoiLayout

RoiLayout::RoiLayout(std::vector<RoiRange> ranges) : ranges_(std::move(ranges)) {
  std::set<std::string> seen;
  for (const auto& r : ranges_) {
    if (std::find(kRoiNames.begin(), kRoiNames.end(), r.name) == kRoiNames.end()) {
      throw DatasetError(DatasetErrorKind::kBadLayout, "unknown ROI \"" + r.name + "\"");
    }
    if (!seen.insert(r.name).second) {
      throw DatasetError(DatasetErrorKind::kBadLayout, "ROI \"" + r.name + "\" listed twice");
    }
    if (r.end <= r.begin) {
      throw DatasetError(DatasetErrorKind::kBadLayout, "ROI \"" + r.name + "\" is empty");
    }
  }
  for (auto name : kRoiNames) {
    if (!seen.count(std::string(name))) {
      throw DatasetError(DatasetErrorKind::kMissingRoi,
                         "layout is missing ROI \"" + std::string(name) + "\"");
    }
  }
  std::vector<RoiRange> sorted = ranges_;
  std::sort(sorted.begin(), sorted.end(),
            [](const RoiRange& a, const RoiRange& b) { return a.begin < b.begin; });
  std::size_t cursor = 0;
  for (const auto& r : sorted) {
    if (r.begin != cursor) {
      throw DatasetError(DatasetErrorKind::kBadLayout,
                         "ROI ranges must be disjoint and cover every voxel; gap or "
                         "overlap at voxel " + std::to_string(cursor));
    }
    cursor = r.end;
  }
  total_ = cursor;
}

RoiLayout RoiLayout::contiguous(const std::map<std::string, std::size_t>& sizes) {
  std::vector<RoiRange> ranges;
  std::size_t cursor = 0;
  for (auto name : kRoiNames) {
    auto it = sizes.find(std::string(name));
    if (it == sizes.end()) {
      throw DatasetError(DatasetErrorKind::kMissingRoi,
                         "no voxel count for ROI \"" + std::string(name) + "\"");
    }
    ranges.push_back({std::string(name), cursor, cursor + it->second});
    cursor += it->second;
  }
  for (const auto& [name, _] : sizes) {
    if (std::find(kRoiNames.begin(), kRoiNames.end(), name) == kRoiNames.end()) {
      throw DatasetError(DatasetErrorKind::kBadLayout, "unknown ROI \"" + name + "\"");
    }
  }
  return RoiLayout(std::move(ranges));
}

const RoiRange& RoiLayout::range(std::string_view roi) const {
  for (const auto& r : ranges_) {
    if (r.name == roi) return r;
  }
  throw DatasetError(DatasetErrorKind::kMissingRoi,
                     "ROI \"" + std::string(roi) + "\" not in layout");
}

std::vector<std::string> RoiLayout::expand(std::string_view name) const {
  std::vector<std::string_view> parts;
  if (name == "LVC") {
    parts = {"V1", "V2", "V3"};
  } else if (name == "HVC") {
    parts = {"LOC", "FFA", "PPA"};
  } else if (name == "VC") {
    parts.assign(kRoiNames.begin(), kRoiNames.end());
  } else {
    range(name);  // throws for unknown names
    return {std::string(name)};
  }
  std::vector<std::string> out;
  for (const auto& r : ranges_) {
    if (std::find(parts.begin(), parts.end(), r.name) != parts.end()) out.push_back(r.name);
  }
  return out;
}

std::vector<std::size_t> RoiLayout::indices(std::string_view name) const {
  std::vector<std::size_t> out;
  for (const auto& part : expand(name)) {
    const auto& r = range(part);
    for (std::size_t i = r.begin; i < r.end; ++i) out.push_back(i);
  }
  return out;
}

// ---------------------------------------------------------------- enums

std::string_view to_string(Split split) { return split == Split::kTrain ? "train" : "test"; }

std::string_view to_string(StimulusRole role) {
  switch (role) {
    case StimulusRole::kTrain: return "train";
    case StimulusRole::kTest: return "test";
    case StimulusRole::kExtra: return "extra";
  }
  return "?";
}

Split split_from_string(std::string_view s) {
  if (s == "train") return Split::kTrain;
  if (s == "test") return Split::kTest;
  throw DatasetError(DatasetErrorKind::kMalformedManifest, "unknown split \"" + std::string(s) + "\"");
}

StimulusRole role_from_string(std::string_view s) {
  if (s == "train") return StimulusRole::kTrain;
  if (s == "test") return StimulusRole::kTest;
  if (s == "extra") return StimulusRole::kExtra;
  throw DatasetError(DatasetErrorKind::kMalformedManifest, "unknown stimulus role \"" + std::string(s) + "\"");
}

// --------------------------------------------------------------- Dataset

namespace {

bool safe_id(const std::string& id) {
  return !id.empty() && std::all_of(id.begin(), id.end(), [](char c) {
           return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.';
         }) && id != "." && id != "..";
}

}  // namespace

void Dataset::validate() const {
  const auto total = layout.total_voxels();
  if (category_names.empty()) {
    throw DatasetError(DatasetErrorKind::kBadCategory, "dataset declares no categories");
  }
  for (const auto& [id, s] : stimuli) {
    if (id != s.id || !safe_id(id)) {
      throw DatasetError(DatasetErrorKind::kMalformedManifest, "bad stimulus id \"" + id + "\"");
    }
    if (s.category_id < 0 || s.category_id >= category_count()) {
      throw DatasetError(DatasetErrorKind::kBadCategory,
                         "stimulus " + id + " has category " + std::to_string(s.category_id));
    }
    if (s.image.rows() != image_size || s.image.cols() != image_size ||
        s.mask.rows() != image_size || s.mask.cols() != image_size) {
      throw DatasetError(DatasetErrorKind::kUnreadableImage,
                         "stimulus " + id + " is not " + std::to_string(image_size) + "x" +
                             std::to_string(image_size));
    }
    if (!((s.mask == 0.0f) || (s.mask == 1.0f)).all()) {
      throw DatasetError(DatasetErrorKind::kUnreadableImage, "mask of " + id + " is not binary");
    }
  }

  std::set<std::tuple<std::string, Split, int>> keys;
  std::set<std::string> train_ids, test_ids;
  for (const auto& r : records) {
    if (static_cast<std::size_t>(r.voxels.size()) != total) {
      throw DatasetError(DatasetErrorKind::kVoxelLengthMismatch,
                         "record " + r.stimulus_id + " has " + std::to_string(r.voxels.size()) +
                             " voxels, layout has " + std::to_string(total));
    }
    if (!r.voxels.allFinite()) {
      throw DatasetError(DatasetErrorKind::kVoxelLengthMismatch,
                         "record " + r.stimulus_id + " has non-finite voxels");
    }
    if (r.trial_index < 0) {
      throw DatasetError(DatasetErrorKind::kMalformedManifest, "negative trial index");
    }
    if (!keys.emplace(r.stimulus_id, r.split, r.trial_index).second) {
      throw DatasetError(DatasetErrorKind::kDuplicateRecord,
                         "duplicate record (" + r.stimulus_id + ", " +
                             std::string(to_string(r.split)) + ", " +
                             std::to_string(r.trial_index) + ")");
    }
    auto it = stimuli.find(r.stimulus_id);
    if (it == stimuli.end()) {
      throw DatasetError(DatasetErrorKind::kMissingStimulus,
                         "record references unknown stimulus " + r.stimulus_id);
    }
    if (r.category_id < 0 || r.category_id >= category_count() ||
        r.category_id != it->second.category_id) {
      throw DatasetError(DatasetErrorKind::kBadCategory,
                         "record " + r.stimulus_id + " has inconsistent category");
    }
    (r.split == Split::kTrain ? train_ids : test_ids).insert(r.stimulus_id);
  }
  for (const auto& id : train_ids) {
    if (test_ids.count(id)) {
      throw DatasetError(DatasetErrorKind::kOverlappingSplits,
                         "stimulus " + id + " appears in both train and test splits");
    }
  }
}

std::vector<const TrialRecord*> Dataset::records_in(Split split) const {
  std::vector<const TrialRecord*> out;
  for (const auto& r : records) {
    if (r.split == split) out.push_back(&r);
  }
  return out;
}

std::vector<const Stimulus*> Dataset::stimuli_in(StimulusRole role) const {
  std::vector<const Stimulus*> out;
  for (const auto& [_, s] : stimuli) {
    if (s.role == role) out.push_back(&s);
  }
  return out;
}

const Stimulus& Dataset::stimulus(const std::string& id) const {
  auto it = stimuli.find(id);
  if (it == stimuli.end()) {
    throw DatasetError(DatasetErrorKind::kMissingStimulus, "unknown stimulus " + id);
  }
  return it->second;
}

Eigen::MatrixXf voxel_matrix(std::span<const TrialRecord* const> records,
                             const RoiLayout& layout, std::string_view roi) {
  const auto idx = layout.indices(roi);
  Eigen::MatrixXf out(static_cast<Eigen::Index>(records.size()),
                      static_cast<Eigen::Index>(idx.size()));
  for (std::size_t r = 0; r < records.size(); ++r) {
    const auto& v = records[r]->voxels;
    if (static_cast<std::size_t>(v.size()) != layout.total_voxels()) {
      throw DatasetError(DatasetErrorKind::kVoxelLengthMismatch,
                         "record voxel count does not match layout");
    }
    for (std::size_t j = 0; j < idx.size(); ++j) {
      out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) =
          v(static_cast<Eigen::Index>(idx[j]));
    }
  }
  return out;
}

Eigen::VectorXf select_voxels(const TrialRecord& record, const RoiLayout& layout,
                              std::string_view roi) {
  const TrialRecord* ptr = &record;
  return voxel_matrix(std::span<const TrialRecord* const>(&ptr, 1), layout, roi)
      .row(0)
      .transpose();
}

// ------------------------------------------------------------------ I/O

void save_dataset(const Dataset& dataset, const std::string& root) {
  dataset.validate();
  const fs::path dir(root);
  fs::create_directories(dir / "stimuli");
  fs::create_directories(dir / "masks");

  json manifest;
  manifest["format"] = "ssgan-dataset";
  manifest["version"] = 1;
  manifest["image_size"] = dataset.image_size;
  manifest["layout"] = json::array();
  for (const auto& r : dataset.layout.ranges()) {
    manifest["layout"].push_back({{"name", r.name}, {"begin", r.begin}, {"end", r.end}});
  }
  manifest["categories"] = {{"count", dataset.category_count()},
                            {"names", dataset.category_names}};
  manifest["stimuli"] = json::array();
  for (const auto& [id, s] : dataset.stimuli) {
    manifest["stimuli"].push_back(
        {{"id", id}, {"category", s.category_id}, {"role", std::string(to_string(s.role))}});
    write_pgm((dir / "stimuli" / (id + ".pgm")).string(), s.image);
    write_pgm((dir / "masks" / (id + ".pgm")).string(), s.mask);
  }
  manifest["records"] = json::array();
  for (const auto& r : dataset.records) {
    manifest["records"].push_back({{"stimulus_id", r.stimulus_id},
                                   {"category", r.category_id},
                                   {"split", std::string(to_string(r.split))},
                                   {"trial", r.trial_index}});
  }
  {
    std::ofstream os(dir / "manifest.json");
    if (!os) throw IoError("cannot write " + (dir / "manifest.json").string());
    os << manifest.dump(2) << '\n';
  }

  std::ofstream os(dir / "voxels.bin", std::ios::binary);
  if (!os) throw IoError("cannot write " + (dir / "voxels.bin").string());
  binio::write_magic(os, "VOX1");
  binio::write_u32(os, static_cast<std::uint32_t>(dataset.records.size()));
  binio::write_u32(os, static_cast<std::uint32_t>(dataset.layout.total_voxels()));
  for (const auto& r : dataset.records) {
    binio::write_f32_array(os, r.voxels.data(), static_cast<std::size_t>(r.voxels.size()));
  }
  if (!os) throw IoError("failed writing voxels.bin");
}

Dataset load_dataset(const std::string& root) {
  const fs::path dir(root);
  std::ifstream ms(dir / "manifest.json");
  if (!ms) {
    throw DatasetError(DatasetErrorKind::kMalformedManifest,
                       "cannot open " + (dir / "manifest.json").string());
  }
  json manifest;
  try {
    manifest = json::parse(ms);
  } catch (const json::exception& e) {
    throw DatasetError(DatasetErrorKind::kMalformedManifest,
                       std::string("manifest.json: ") + e.what());
  }

  Dataset ds;
  try {
    ds.image_size = manifest.at("image_size").get<int>();
    std::vector<RoiRange> ranges;
    for (const auto& r : manifest.at("layout")) {
      ranges.push_back({r.at("name").get<std::string>(), r.at("begin").get<std::size_t>(),
                        r.at("end").get<std::size_t>()});
    }
    ds.layout = RoiLayout(std::move(ranges));
    ds.category_names = manifest.at("categories").at("names").get<std::vector<std::string>>();
    if (manifest.at("categories").at("count").get<int>() != ds.category_count()) {
      throw DatasetError(DatasetErrorKind::kBadCategory, "category count and names disagree");
    }
    for (const auto& s : manifest.at("stimuli")) {
      Stimulus st;
      st.id = s.at("id").get<std::string>();
      st.category_id = s.at("category").get<int>();
      st.role = role_from_string(s.at("role").get<std::string>());
      if (!safe_id(st.id)) {
        throw DatasetError(DatasetErrorKind::kMalformedManifest, "bad stimulus id \"" + st.id + "\"");
      }
      try {
        st.image = read_pgm((dir / "stimuli" / (st.id + ".pgm")).string());
        st.mask = read_pgm((dir / "masks" / (st.id + ".pgm")).string());
      } catch (const IoError& e) {
        throw DatasetError(DatasetErrorKind::kUnreadableImage, e.what());
      }
      if (!ds.stimuli.emplace(st.id, st).second) {
        throw DatasetError(DatasetErrorKind::kMalformedManifest, "stimulus " + st.id + " listed twice");
      }
    }
    for (const auto& r : manifest.at("records")) {
      TrialRecord rec;
      rec.stimulus_id = r.at("stimulus_id").get<std::string>();
      rec.category_id = r.at("category").get<int>();
      rec.split = split_from_string(r.at("split").get<std::string>());
      rec.trial_index = r.at("trial").get<int>();
      ds.records.push_back(std::move(rec));
    }
  } catch (const json::exception& e) {
    throw DatasetError(DatasetErrorKind::kMalformedManifest, std::string("manifest.json: ") + e.what());
  }

  std::ifstream vs(dir / "voxels.bin", std::ios::binary);
  if (!vs) {
    throw DatasetError(DatasetErrorKind::kVoxelLengthMismatch,
                       "cannot open " + (dir / "voxels.bin").string());
  }
  try {
    binio::expect_magic(vs, "VOX1", "voxels.bin");
    const auto count = binio::read_u32(vs);
    const auto width = binio::read_u32(vs);
    if (count != ds.records.size()) {
      throw DatasetError(DatasetErrorKind::kVoxelLengthMismatch,
                         "voxels.bin holds " + std::to_string(count) + " rows for " +
                             std::to_string(ds.records.size()) + " records");
    }
    if (width != ds.layout.total_voxels()) {
      throw DatasetError(DatasetErrorKind::kVoxelLengthMismatch,
                         "voxels.bin rows have " + std::to_string(width) +
                             " voxels, layout has " + std::to_string(ds.layout.total_voxels()));
    }
    for (auto& r : ds.records) {
      r.voxels.resize(width);
      binio::read_f32_array(vs, r.voxels.data(), width);
    }
  } catch (const IoError& e) {
    throw DatasetError(DatasetErrorKind::kVoxelLengthMismatch, e.what());
  }

  ds.validate();
  return ds;
}

Dataset average_test_trials(const Dataset& dataset) {
  Dataset out = dataset;
  out.records.clear();
  std::vector<std::string> order;
  std::map<std::string, std::vector<const TrialRecord*>> groups;
  for (const auto& r : dataset.records) {
    if (r.split == Split::kTrain) {
      out.records.push_back(r);
      continue;
    }
    auto [it, inserted] = groups.try_emplace(r.stimulus_id);
    if (inserted) order.push_back(r.stimulus_id);
    it->second.push_back(&r);
  }
  for (const auto& id : order) {
    const auto& trials = groups[id];
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(trials.front()->voxels.size());
    for (const auto* t : trials) acc += t->voxels.cast<double>();
    TrialRecord avg;
    avg.stimulus_id = id;
    avg.category_id = trials.front()->category_id;
    avg.split = Split::kTest;
    avg.trial_index = 0;
    avg.voxels = (acc / static_cast<double>(trials.size())).cast<float>();
    out.records.push_back(std::move(avg));
  }
  return out;
}

}  // namespace ssgan
