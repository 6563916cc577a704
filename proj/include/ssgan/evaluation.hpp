#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "ssgan/dataset.hpp"
#include "ssgan/image.hpp"
#include "ssgan/semantic.hpp"
#include "ssgan/shape_decoder.hpp"
#include "ssgan/ssim.hpp"

namespace ssgan {

struct EvalReport {
  std::vector<double> ssim;           // each reconstruction vs its own ground truth
  std::vector<double> run_win_rates;
  double win_rate = 0.0;              // mean over runs
  int runs = 0;
  std::uint64_t seed = 0;
};

// Two-alternative identification. In every run each reconstruction is
// compared with its ground truth and with a distractor drawn uniformly from
// the other ground truths; it scores 1 if its own truth is strictly more
// similar, 0.5 on an exact tie, 0 otherwise.
EvalReport pairwise_win_rate(std::span<const Image> reconstructions, std::span<const Image> truths,
                             int runs = 5, std::uint64_t seed = 0, const SsimParams& params = {});

// Copy of the dataset whose test split is the last `count` training
// stimuli; the original test split is dropped.
Dataset reserve_validation(const Dataset& dataset, int count);

struct RoiAblationOptions {
  ShapeFitOptions shape;
  SemanticNetConfig semantic;
  int reserved = 40;
  int runs = 5;
  std::uint64_t seed = 0;
};

struct RoiAblationRow {
  std::string roi;
  double shape_win_rate = 0.0;   // decoded shape vs true mask
  double shape_ssim = 0.0;       // mean SSIM of the same comparison
  double semantic_accuracy = 0.0;
};

// For every ROI set, fits a shape decoder and a semantic net on the training
// split minus the reserved samples and scores both on the reserved ones.
std::vector<RoiAblationRow> roi_ablation(const Dataset& dataset, const std::vector<std::string>& roi_sets,
                                         const RoiAblationOptions& options = {});

// One line of a metrics CSV: metric,label,run,value. run is -1 for values
// that are not per run.
struct MetricRow {
  std::string metric;
  std::string label;
  int run = -1;
  double value = 0.0;
};

std::vector<MetricRow> report_rows(const EvalReport& report, const std::string& label);
std::vector<MetricRow> report_rows(const std::vector<RoiAblationRow>& table);
// Fixed header and number format so that equal inputs give equal bytes.
void write_metrics_csv(std::ostream& os, const std::vector<MetricRow>& rows);
std::vector<MetricRow> read_metrics_csv(std::istream& is);

// Rows of equally sized images laid side by side with a white gutter.
Image make_montage(const std::vector<std::vector<Image>>& rows, int gutter = 2);

}  // namespace ssgan
