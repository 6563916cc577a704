#pragma once

#include <Eigen/Core>
#include <array>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ssgan/image.hpp"

namespace ssgan {

// The six visual areas a layout must name.
inline constexpr std::array<std::string_view, 6> kRoiNames = {"V1",  "V2",  "V3",
                                                               "LOC", "FFA", "PPA"};

struct RoiRange {
  std::string name;
  std::size_t begin = 0;
  std::size_t end = 0;  // exclusive

  std::size_t size() const { return end - begin; }
  bool operator==(const RoiRange&) const = default;
};

// Voxel layout of a record. Ranges are disjoint and tile [0, total_voxels).
// Besides the six areas, three unions are addressable by name:
// LVC = V1+V2+V3, HVC = LOC+FFA+PPA and VC = all six.
class RoiLayout {
 public:
  RoiLayout() = default;
  // Throws DatasetError(kMissingRoi / kBadLayout) on invalid input.
  explicit RoiLayout(std::vector<RoiRange> ranges);

  // Contiguous layout in kRoiNames order.
  static RoiLayout contiguous(const std::map<std::string, std::size_t>& sizes);

  const std::vector<RoiRange>& ranges() const { return ranges_; }
  std::size_t total_voxels() const { return total_; }
  const RoiRange& range(std::string_view roi) const;

  // Base areas making up `name` (an area or one of the unions), in layout order.
  std::vector<std::string> expand(std::string_view name) const;
  // Voxel indices of an area or union, ascending within each area.
  std::vector<std::size_t> indices(std::string_view name) const;

  bool operator==(const RoiLayout&) const = default;

 private:
  std::vector<RoiRange> ranges_;
  std::size_t total_ = 0;
};

enum class Split { kTrain, kTest };
// Where a stimulus image is used. Extra images have no voxel records and
// feed GAN data augmentation only.
enum class StimulusRole { kTrain, kTest, kExtra };

std::string_view to_string(Split split);
std::string_view to_string(StimulusRole role);
Split split_from_string(std::string_view s);
StimulusRole role_from_string(std::string_view s);

struct TrialRecord {
  std::string stimulus_id;
  int category_id = 0;
  Split split = Split::kTrain;
  int trial_index = 0;
  Eigen::VectorXf voxels;

  bool operator==(const TrialRecord& o) const {
    return stimulus_id == o.stimulus_id && category_id == o.category_id &&
           split == o.split && trial_index == o.trial_index &&
           voxels.size() == o.voxels.size() && voxels == o.voxels;
  }
};

struct Stimulus {
  std::string id;
  int category_id = 0;
  StimulusRole role = StimulusRole::kTrain;
  Image image;  // grayscale, S x S, [0,1]
  Image mask;   // binary, S x S

  bool operator==(const Stimulus& o) const {
    return id == o.id && category_id == o.category_id && role == o.role &&
           image.rows() == o.image.rows() && image.cols() == o.image.cols() &&
           (image == o.image).all() && mask.rows() == o.mask.rows() &&
           mask.cols() == o.mask.cols() && (mask == o.mask).all();
  }
};

struct Dataset {
  RoiLayout layout;
  std::vector<TrialRecord> records;
  std::map<std::string, Stimulus> stimuli;
  std::vector<std::string> category_names;
  int image_size = 0;

  int category_count() const { return static_cast<int>(category_names.size()); }

  // Enforces every cross-field invariant; throws DatasetError.
  void validate() const;

  std::vector<const TrialRecord*> records_in(Split split) const;
  std::vector<const Stimulus*> stimuli_in(StimulusRole role) const;
  const Stimulus& stimulus(const std::string& id) const;

  bool operator==(const Dataset&) const = default;
};

// Rows = records, columns = voxels of `roi` (an area or union).
Eigen::MatrixXf voxel_matrix(std::span<const TrialRecord* const> records,
                             const RoiLayout& layout, std::string_view roi);
Eigen::VectorXf select_voxels(const TrialRecord& record, const RoiLayout& layout,
                              std::string_view roi);

// On-disk layout: manifest.json, voxels.bin, stimuli/<id>.pgm, masks/<id>.pgm.
void save_dataset(const Dataset& dataset, const std::string& root);
Dataset load_dataset(const std::string& root);

// One test record per stimulus holding the mean over its trials; train
// records are untouched. Output test records follow first-appearance order.
Dataset average_test_trials(const Dataset& dataset);

}  // namespace ssgan
