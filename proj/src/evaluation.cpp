#include "ssgan/evaluation.hpp"

#include <cstdio>
#include <istream>
#include <ostream>
#include <random>
#include <set>
#include <sstream>

#include "ssgan/error.hpp"
#include "ssgan/parallel.hpp"

namespace ssgan {

EvalReport pairwise_win_rate(std::span<const Image> reconstructions, std::span<const Image> truths, int runs,
                             std::uint64_t seed, const SsimParams& params) {
  const std::size_t n = reconstructions.size();
  if (truths.size() != n) {
    throw DimensionError("pairwise_win_rate: " + std::to_string(n) + " reconstructions vs " +
                         std::to_string(truths.size()) + " ground truths");
  }
  if (n < 2) throw ContractError("pairwise_win_rate needs at least 2 images");
  if (runs < 1) throw ContractError("pairwise_win_rate needs runs >= 1");

  EvalReport report;
  report.runs = runs;
  report.seed = seed;
  report.ssim.resize(n);
  parallel_for(n, [&](std::size_t i) { report.ssim[i] = ssim(reconstructions[i], truths[i], params); });

  std::mt19937_64 rng(seed);
  for (int r = 0; r < runs; ++r) {
    std::vector<std::size_t> distractor(n);
    for (std::size_t i = 0; i < n; ++i) {
      std::uniform_int_distribution<std::size_t> pick(0, n - 2);
      const std::size_t k = pick(rng);
      distractor[i] = k < i ? k : k + 1;
    }
    std::vector<double> score(n);
    parallel_for(n, [&](std::size_t i) {
      const double other = ssim(reconstructions[i], truths[distractor[i]], params);
      score[i] = report.ssim[i] > other ? 1.0 : report.ssim[i] == other ? 0.5 : 0.0;
    });
    double total = 0;
    for (double s : score) total += s;
    report.run_win_rates.push_back(total / static_cast<double>(n));
  }
  double total = 0;
  for (double w : report.run_win_rates) total += w;
  report.win_rate = total / runs;
  return report;
}

Dataset reserve_validation(const Dataset& dataset, int count) {
  if (count < 1) throw ConfigError("reserved sample count must be >= 1");
  const auto train = dataset.stimuli_in(StimulusRole::kTrain);
  if (static_cast<std::size_t>(count) >= train.size()) {
    throw ConfigError("cannot reserve " + std::to_string(count) + " of " + std::to_string(train.size()) +
                      " training stimuli");
  }
  std::set<std::string> held;
  for (std::size_t i = train.size() - static_cast<std::size_t>(count); i < train.size(); ++i) held.insert(train[i]->id);

  Dataset out = dataset;
  out.records.clear();
  for (const auto& r : dataset.records) {
    if (r.split != Split::kTrain) continue;
    TrialRecord copy = r;
    if (held.count(r.stimulus_id)) copy.split = Split::kTest;
    out.records.push_back(std::move(copy));
  }
  for (auto it = out.stimuli.begin(); it != out.stimuli.end();) {
    if (it->second.role == StimulusRole::kTest) {
      it = out.stimuli.erase(it);
      continue;
    }
    if (held.count(it->first)) it->second.role = StimulusRole::kTest;
    ++it;
  }
  out.validate();
  return out;
}

std::vector<RoiAblationRow> roi_ablation(const Dataset& dataset, const std::vector<std::string>& roi_sets,
                                         const RoiAblationOptions& options) {
  if (roi_sets.empty()) throw ContractError("roi_ablation: no ROI sets");
  if (dataset.category_count() < 2) throw ConfigError("roi_ablation needs at least 2 categories");
  const Dataset split = average_test_trials(reserve_validation(dataset, options.reserved));
  const auto val = split.records_in(Split::kTest);
  std::vector<Image> truths;
  std::vector<int> labels;
  for (const auto* r : val) {
    truths.push_back(split.stimulus(r->stimulus_id).mask);
    labels.push_back(r->category_id);
  }

  std::vector<RoiAblationRow> table;
  for (const auto& roi : roi_sets) {
    if (roi.empty() || split.layout.expand(roi).empty()) throw ContractError("roi_ablation: empty ROI set");
    RoiAblationRow row;
    row.roi = roi;
    const ShapeDecoder shape = fit_shape_decoder(split, {roi}, options.shape);
    std::vector<Image> decoded;
    for (const auto* r : val) decoded.push_back(decode_shape(shape, *r, split.layout));
    const EvalReport rep = pairwise_win_rate(decoded, truths, options.runs, options.seed);
    row.shape_win_rate = rep.win_rate;
    double total = 0;
    for (double s : rep.ssim) total += s;
    row.shape_ssim = total / static_cast<double>(rep.ssim.size());

    const SemanticNet net = train_semantic(split, options.semantic, roi);
    row.semantic_accuracy = accuracy(classify(net, voxel_matrix(val, split.layout, roi)), labels);
    table.push_back(row);
  }
  return table;
}

// --------------------------------------------------------------------- CSV

std::vector<MetricRow> report_rows(const EvalReport& report, const std::string& label) {
  std::vector<MetricRow> rows;
  for (std::size_t r = 0; r < report.run_win_rates.size(); ++r) {
    rows.push_back({"win_rate", label, static_cast<int>(r), report.run_win_rates[r]});
  }
  rows.push_back({"mean_win_rate", label, -1, report.win_rate});
  double total = 0;
  for (double s : report.ssim) total += s;
  if (!report.ssim.empty()) rows.push_back({"mean_ssim", label, -1, total / static_cast<double>(report.ssim.size())});
  return rows;
}

std::vector<MetricRow> report_rows(const std::vector<RoiAblationRow>& table) {
  std::vector<MetricRow> rows;
  for (const auto& t : table) {
    rows.push_back({"shape_win_rate", t.roi, -1, t.shape_win_rate});
    rows.push_back({"shape_ssim", t.roi, -1, t.shape_ssim});
    rows.push_back({"semantic_accuracy", t.roi, -1, t.semantic_accuracy});
  }
  return rows;
}

void write_metrics_csv(std::ostream& os, const std::vector<MetricRow>& rows) {
  os << "metric,label,run,value\n";
  char buf[64];
  for (const auto& r : rows) {
    if (r.metric.find_first_of(",\n") != std::string::npos || r.label.find_first_of(",\n") != std::string::npos) {
      throw ContractError("metric names and labels may not contain commas or newlines");
    }
    std::snprintf(buf, sizeof buf, "%.9g", r.value);
    os << r.metric << ',' << r.label << ',' << r.run << ',' << buf << '\n';
  }
}

std::vector<MetricRow> read_metrics_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != "metric,label,run,value") throw IoError("metrics CSV: bad header");
  std::vector<MetricRow> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    MetricRow row;
    std::string run, value;
    if (!std::getline(ss, row.metric, ',') || !std::getline(ss, row.label, ',') || !std::getline(ss, run, ',') ||
        !std::getline(ss, value)) {
      throw IoError("metrics CSV: malformed line \"" + line + "\"");
    }
    try {
      row.run = std::stoi(run);
      row.value = std::stod(value);
    } catch (const std::exception&) {
      throw IoError("metrics CSV: malformed line \"" + line + "\"");
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

Image make_montage(const std::vector<std::vector<Image>>& rows, int gutter) {
  if (rows.empty() || rows.front().empty()) throw ContractError("make_montage: nothing to lay out");
  const auto h = rows.front().front().rows(), w = rows.front().front().cols();
  std::size_t cols = 0;
  for (const auto& r : rows) cols = std::max(cols, r.size());
  const auto n_cols = static_cast<Eigen::Index>(cols), n_rows = static_cast<Eigen::Index>(rows.size());
  Image out = Image::Ones(n_rows * h + (n_rows + 1) * gutter, n_cols * w + (n_cols + 1) * gutter);
  for (Eigen::Index i = 0; i < n_rows; ++i) {
    const auto& row = rows[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < static_cast<Eigen::Index>(row.size()); ++j) {
      const Image& im = row[static_cast<std::size_t>(j)];
      if (im.rows() != h || im.cols() != w) throw DimensionError("make_montage: tiles differ in size");
      out.block(gutter + i * (h + gutter), gutter + j * (w + gutter), h, w) = im.cwiseMax(0.0f).cwiseMin(1.0f);
    }
  }
  return out;
}

}  // namespace ssgan
