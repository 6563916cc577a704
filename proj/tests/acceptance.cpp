// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>

#include "cli.hpp"
#include "gradcheck.hpp"
#include "ssgan/evaluation.hpp"
#include "ssgan/gan.hpp"
#include "ssgan/linalg.hpp"
#include "ssgan/pipeline.hpp"
#include "ssgan/shape_decoder.hpp"
#include "ssgan/simulate.hpp"
#include "ssgan/ssim.hpp"

using namespace ssgan;
using ssgan::testing::check_gradients;
using ssgan::testing::random_tensor;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void criterion(int id, const char* name, double budget_s, const std::function<Outcome()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const bool in_time = secs < budget_s;
  const bool pass = o.pass && in_time;
  if (!pass) ++failures;
  char timing[96];
  std::snprintf(timing, sizeof timing, "%.1fs / budget %.0fs%s", secs, budget_s, in_time ? "" : " (over budget)");
  std::cout << (pass ? "PASS" : "FAIL") << "  criterion " << id << " (" << name << "): " << o.detail << " ["
            << timing << "]" << std::endl;
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

bool close(double got, double want) { return std::fabs(got - want) <= 1e-6 * std::max(1.0, std::fabs(want)); }

// ------------------------------------------------------------------ 1

Outcome gradient_suite() {
  constexpr double kTol = 1e-3;
  double worst = 0;
  std::size_t checked = 0;
  auto note = [&](const ssgan::testing::GradCheckResult& r) {
    worst = std::max(worst, r.max_error);
    checked += r.checked;
  };
  for (int seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(90000 + seed);
    Tensor a = random_tensor({3, 4}, rng), b = random_tensor({3, 4}, rng);
    note(check_gradients([&] { return mean(add_scalar(scale(mul(sub(add(a, b), b), add(a, b)), 0.7f), 0.1f)); }, {a, b}));
    note(check_gradients([&] { return sum(ssgan::tanh(a)); }, {a}));
    note(check_gradients([&] { return sum(sigmoid(scale(a, 3.0f))); }, {a}));

    // Piecewise-linear ops, sampled away from the kink.
    Tensor k = random_tensor({20}, rng, 0.05f, 1.0f);
    for (std::size_t i = 0; i < 20; i += 2) k.data()[i] = -k.data()[i];
    note(check_gradients([&] { return sum(leaky_relu(k, 0.2f)); }, {k}));
    note(check_gradients([&] { return sum(relu(k)); }, {k}));

    Tensor x = random_tensor({4, 5}, rng), w = random_tensor({3, 5}, rng), bias = random_tensor({3}, rng);
    Tensor m = random_tensor({5, 2}, rng);
    note(check_gradients([&] { return mean(ssgan::tanh(linear(x, w, bias))); }, {x, w, bias}));
    note(check_gradients([&] { return sum(ssgan::tanh(matmul(x, m))); }, {x, m}));

    Tensor img = random_tensor({2, 2, 8, 8}, rng);
    Tensor k1 = random_tensor({3, 2, 4, 4}, rng, -0.3f, 0.3f), b1 = random_tensor({3}, rng);
    Tensor k2 = random_tensor({5, 2, 4, 4}, rng, -0.3f, 0.3f);
    Tensor target = random_tensor({2, 2, 8, 8}, rng, 2.0f, 3.0f, false);
    note(check_gradients(
        [&] {
          Tensor h = ssgan::tanh(add_channel_bias(conv2d(img, k1, 2, 1), b1));
          Tensor skip = conv2d(img, Tensor({2, 2, 2, 2}, 0.25f), 2, 0);
          Tensor up = conv2d_transpose(concat_channels(h, skip), k2, 2, 1);
          return l1_loss(sigmoid(conv2d(up, Tensor({2, 2, 1, 1}, 0.3f), 1, 0)), target);
        },
        {img, k1, b1, k2}));

    Tensor bx = random_tensor({4, 3, 2, 2}, rng), g = random_tensor({3}, rng, 0.5f, 1.5f), be = random_tensor({3}, rng);
    Tensor wt = random_tensor({4, 3, 2, 2}, rng, -1, 1, false);
    note(check_gradients([&] { return sum(mul(ssgan::tanh(batch_norm_train(bx, g, be, 1e-5f)), wt)); }, {bx, g, be}));
    BatchStats stats{{0.1f, -0.2f, 0.3f}, {0.5f, 1.5f, 0.8f}};
    note(check_gradients([&] { return sum(mul(batch_norm_eval(bx, g, be, stats, 1e-5f), wt)); }, {bx, g, be}));

    Tensor z = random_tensor({10}, rng, -3, 3), t = random_tensor({10}, rng, 0, 1, false);
    note(check_gradients([&] { return neg_log_mean(sigmoid(z), 1e-7f); }, {z}));
    note(check_gradients([&] { return neg_log1m_mean(sigmoid(z), 1e-7f); }, {z}));
    note(check_gradients([&] { return bce_with_logits(z, t); }, {z}));
  }
  return {worst < kTol, "max rel err " + num(worst) + " over " + std::to_string(checked) + " entries, 20 seeds (< 1e-3)"};
}

// ------------------------------------------------------------------ 2

Outcome least_squares() {
  std::mt19937_64 rng(4242);
  std::uniform_int_distribution<int> rows(1, 200), cols(1, 100);
  std::uniform_real_distribution<double> loglam(-4.0, 2.0);
  std::normal_distribution<double> n01;
  double worst = 0;
  for (int s = 0; s < 50; ++s) {
    const int n = s == 0 ? 200 : rows(rng), d = s == 0 ? 100 : cols(rng);
    // Include unregularized systems where the primal normal equation is well posed.
    const double lambda = (n >= d && s % 5 == 0) ? 0.0 : std::pow(10.0, loglam(rng));
    Eigen::MatrixXd a(n, d), b(n, 3);
    for (auto& v : a.reshaped()) v = n01(rng);
    for (auto& v : b.reshaped()) v = n01(rng);
    const Eigen::MatrixXd w = ridge_solve(a, b, lambda);
    const Eigen::MatrixXd r = a.transpose() * (a * w - b) + lambda * w;
    worst = std::max(worst, r.norm() / std::max(1.0, (a.transpose() * b).norm()));
  }
  return {worst < 1e-4, "max relative normal-equation residual " + num(worst) + " on 50 systems (< 1e-4)"};
}

// ------------------------------------------------------------------ 3

Outcome shape_oracle() {
  SyntheticConfig sc;
  sc.image_size = 64;
  sc.patch = 8;
  sc.train_stimuli = 300;
  sc.test_stimuli = 40;
  sc.extra_images = 0;
  sc.set_noise(0.0f);
  sc.seed = 3;
  const Dataset data = average_test_trials(simulate(sc).dataset);
  ShapeFitOptions opt;
  opt.patch = 8;
  const auto dec = fit_shape_decoder(data, {"V1", "V2", "V3"}, opt);
  std::vector<Image> decoded, masks, targets;
  for (const auto* r : data.records_in(Split::kTest)) {
    decoded.push_back(decode_shape(dec, *r, data.layout));
    masks.push_back(data.stimulus(r->stimulus_id).mask);
    targets.push_back(shape_image(masks.back(), 8));
  }
  const auto vs_mask = pairwise_win_rate(decoded, masks, 5, 0);
  const auto vs_grid = pairwise_win_rate(decoded, targets, 5, 0);
  auto mean = [](const std::vector<double>& v) {
    double s = 0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
  };
  const double ssim_mask = mean(vs_mask.ssim), ssim_grid = mean(vs_grid.ssim);
  return {ssim_mask > 0.95 && vs_mask.win_rate == 1.0,
          "vs true masks: mean SSIM " + num(ssim_mask) + " (> 0.95), win-rate " + num(vs_mask.win_rate) +
              " (== 1.0); vs 8x8 patch targets: mean SSIM " + num(ssim_grid) + ", win-rate " + num(vs_grid.win_rate)};
}

// ------------------------------------------------------------------ 4

Outcome roi_specificity() {
  const auto table = roi_ablation(simulate(SyntheticConfig{}).dataset, {"LVC", "HVC"});
  const double shape_gap = table[0].shape_win_rate - table[1].shape_win_rate;
  const double sem_gap = table[1].semantic_accuracy - table[0].semantic_accuracy;
  return {shape_gap >= 0.05 && sem_gap >= 0.05,
          "shape win LVC " + num(table[0].shape_win_rate) + " vs HVC " + num(table[1].shape_win_rate) + " (gap " +
              num(shape_gap) + " >= 0.05); semantic acc HVC " + num(table[1].semantic_accuracy) + " vs LVC " +
              num(table[0].semantic_accuracy) + " (gap " + num(sem_gap) + " >= 0.05)"};
}

// ------------------------------------------------------------------ 5

Outcome loss_values() {
  auto filled = [](Shape s, float v) { return Tensor(std::move(s), v); };
  const Shape img{2, 1, 4, 4}, score{2, 1, 2, 2};
  const Tensor target = filled(img, 0.3f);
  struct Case {
    const char* what;
    double got, want;
  };
  const auto perfect = generator_loss(filled(score, 1.0f), target, target, 100.0f);
  const auto undecided = generator_loss(filled(score, 0.5f), target, target, 100.0f);
  const auto offset = generator_loss(filled(score, 1.0f), filled(img, 0.8f), target, 100.0f);
  const Shape ds{3, 1, 2, 2};
  const std::vector<Case> cases = {
      {"G perfect", perfect.total.item(), 0.0},
      {"G undecided", undecided.total.item(), std::log(2.0)},
      {"G adversarial undecided", undecided.adversarial.item(), std::log(2.0)},
      {"G offset 0.5, lambda 100", offset.total.item(), 50.0},
      {"L1 offset 0.5", offset.image.item(), 0.5},
      {"D perfect", discriminator_loss(filled(ds, 1.0f), filled(ds, 0.0f)).item(), 0.0},
      {"D undecided", discriminator_loss(filled(ds, 0.5f), filled(ds, 0.5f)).item(), 2 * std::log(2.0)},
      {"D clamped", discriminator_loss(filled(ds, 0.0f), filled(ds, 0.0f)).item(), -std::log(1e-7)},
  };
  std::string bad;
  for (const auto& c : cases) {
    if (!close(c.got, c.want)) bad += std::string(" ") + c.what + "=" + num(c.got);
  }
  return {bad.empty(), bad.empty() ? std::to_string(cases.size()) + " examples within 1e-6" : "mismatch:" + bad};
}

// ------------------------------------------------------------------ 6

std::vector<TrainingPair> rendered_pairs(int n, std::uint64_t seed) {
  SyntheticConfig sc;
  sc.image_size = 16;
  sc.patch = 4;
  std::vector<TrainingPair> out;
  for (int i = 0; i < n; ++i) {
    const int cat = i % sc.categories;
    auto r = render_stimulus(sc, cat, seed + static_cast<std::uint64_t>(i));
    Eigen::VectorXf sem = Eigen::VectorXf::Zero(3);
    sem(cat % 3) = 1.0f;
    out.push_back({shape_image(r.mask, sc.patch), sem, r.image});
  }
  return out;
}

std::vector<float> flat(const std::vector<Tensor>& params) {
  std::vector<float> out;
  for (const auto& p : params) out.insert(out.end(), p.data().begin(), p.data().end());
  return out;
}

Outcome gan_smoke() {
  GanTrainConfig cfg;
  cfg.resolution = 16;
  cfg.semantic_dim = 3;
  cfg.base_channels = 32;
  cfg.batch = 2;
  cfg.epochs = 30;
  cfg.decay_start = 18;
  cfg.seed = 1;
  const auto pairs = rendered_pairs(8, 100);
  std::vector<EpochLog> log;
  train_gan(pairs, cfg, &log);
  const double ratio = log.back().g_l1 / log.front().g_l1;

  auto model = build_gan(cfg);
  GanTrainer trainer(model);
  const auto batch = trainer.make_batch(pairs, std::vector<std::size_t>{0, 1, 2, 3});
  const auto d0 = flat(model.discriminator.parameters()), g0 = flat(model.generator.parameters());
  trainer.g_step(batch, 2e-4f);
  const bool g_step_ok = flat(model.discriminator.parameters()) == d0 && flat(model.generator.parameters()) != g0;
  const auto g1 = flat(model.generator.parameters());
  trainer.d_step(batch, generator_forward(model.generator, batch.shapes, batch.semantics), 2e-4f);
  const bool d_step_ok = flat(model.generator.parameters()) == g1 && flat(model.discriminator.parameters()) != d0;

  return {ratio <= 0.5 && g_step_ok && d_step_ok,
          "L_img final/first " + num(log.back().g_l1) + "/" + num(log.front().g_l1) + " = " + num(ratio) +
              " (<= 0.5); freeze contract " + (g_step_ok && d_step_ok ? "bitwise" : "VIOLATED")};
}

// ------------------------------------------------------------------ 7

PipelineConfig desk_pipeline() {
  PipelineConfig c;
  c.gan.base_channels = 8;
  c.gan.epochs = 10;
  c.gan.decay_start = 6;
  c.gan.batch = 10;
  c.seed = 1;
  return c;
}

Outcome end_to_end() {
  const auto full = run_pipeline(simulate(SyntheticConfig{}).dataset, desk_pipeline());

  SyntheticConfig two;
  two.categories = 2;
  two.shared_shapes = true;
  const Dataset coded = simulate(two).dataset;
  const auto with_sem = ablation_run(AblationMode::kFull, coded, desk_pipeline());
  const auto without = ablation_run(AblationMode::kNoSemantics, coded, desk_pipeline());
  return {full.report.win_rate > 0.6 && with_sem.win_rate > without.win_rate,
          "10 categories, S=32: win-rate " + num(full.report.win_rate) + " (> 0.6); two intensity-coded categories: full " +
              num(with_sem.win_rate) + " vs no_semantics " + num(without.win_rate) + " (strictly higher)"};
}

// ------------------------------------------------------------------ 8

double ssim_brute(const Image& a, const Image& b) {
  const int w = 11;
  const double sigma = 1.5, c1 = 1e-4, c2 = 9e-4;
  double kernel[11][11], ksum = 0;
  for (int u = 0; u < w; ++u)
    for (int v = 0; v < w; ++v) ksum += kernel[u][v] = std::exp(-((u - 5) * (u - 5) + (v - 5) * (v - 5)) / (2 * sigma * sigma));
  double total = 0;
  int count = 0;
  for (int i = 0; i + w <= a.rows(); ++i)
    for (int j = 0; j + w <= a.cols(); ++j) {
      double mx = 0, my = 0;
      for (int u = 0; u < w; ++u)
        for (int v = 0; v < w; ++v) {
          mx += kernel[u][v] / ksum * a(i + u, j + v);
          my += kernel[u][v] / ksum * b(i + u, j + v);
        }
      double vx = 0, vy = 0, cxy = 0;
      for (int u = 0; u < w; ++u)
        for (int v = 0; v < w; ++v) {
          const double k = kernel[u][v] / ksum, dx = a(i + u, j + v) - mx, dy = b(i + u, j + v) - my;
          vx += k * dx * dx;
          vy += k * dy * dy;
          cxy += k * dx * dy;
        }
      total += ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
      ++count;
    }
  return total / count;
}

Outcome ssim_correctness() {
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  auto random_image = [&](int r, int c) {
    Image im(r, c);
    for (Eigen::Index k = 0; k < im.size(); ++k) im.data()[k] = u(rng);
    return im;
  };
  double worst = 0;
  bool exact = true;
  for (int t = 0; t < 20; ++t) {
    const Image a = random_image(32, 32);
    const Image b = (0.6f * a + 0.4f * random_image(32, 32)).eval();
    worst = std::max(worst, std::fabs(ssim(a, b) - ssim_brute(a, b)));
    exact = exact && ssim(a, b) == ssim(b, a) && ssim(a, a) == 1.0;
  }
  return {worst < 1e-6 && exact, "max |ssim - brute force| " + num(worst) + " on 20 pairs (< 1e-6); symmetry and identity " +
                                     (exact ? "exact" : "NOT exact")};
}

// ------------------------------------------------------------------ 9

std::string slurp(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

Outcome determinism() {
  namespace fs = std::filesystem;
  const fs::path root = fs::temp_directory_path() / "ssgan_acceptance_det";
  fs::remove_all(root);
  const std::vector<std::string> small = {
      "--seed", "11", "--set", "sim.train=120", "--set", "sim.test=12", "--set", "sim.extra=20",
      "--set", "gan.base_channels=8", "--set", "gan.epochs=4", "--set", "gan.decay_start=2",
      "--set", "semantic.epochs=15", "--set", "ablate.reserved=20"};
  const std::string data = (root / "data").string();
  std::ostringstream sink;
  auto run = [&](std::vector<std::string> tail) {
    std::vector<std::string> args = small;
    args.insert(args.end(), tail.begin(), tail.end());
    if (ssgan::cli::run_cli(args, sink, sink) != 0) throw std::runtime_error("ssgan " + tail.back() + " failed: " + sink.str());
  };
  run({"--out", data, "simulate"});
  const std::vector<std::string> csvs = {"semantic_eval.csv", "eval_shape.csv", "eval_image.csv", "ablate_roi.csv",
                                         "gan_log.csv",       "semantic_log.csv", "report.csv"};
  std::vector<std::string> first;
  for (const char* name : {"a", "b"}) {
    const std::string out = (root / name).string();
    for (auto step : std::vector<std::vector<std::string>>{{"train-shape"}, {"train-semantic"}, {"train-gan"},
                                                           {"reconstruct"}, {"evaluate", "--metric", "image"},
                                                           {"evaluate", "--metric", "shape"}, {"ablate", "roi"},
                                                           {"report"}}) {
      std::vector<std::string> tail = {"--dataset", data, "--out", out};
      tail.insert(tail.end(), step.begin(), step.end());
      run(tail);
    }
    std::vector<std::string> contents;
    for (const auto& f : csvs) contents.push_back(slurp(root / name / f));
    if (first.empty()) {
      first = contents;
      continue;
    }
    for (std::size_t i = 0; i < csvs.size(); ++i) {
      if (contents[i] != first[i] || contents[i].empty()) return {false, csvs[i] + " differs between runs"};
    }
  }
  fs::remove_all(root);
  return {true, std::to_string(csvs.size()) + " CSV reports byte-identical across two single-threaded runs"};
}

}  // namespace

int main() {
  criterion(1, "gradient suite", 60, gradient_suite);
  criterion(2, "least-squares oracle", 10, least_squares);
  criterion(3, "shape-decoder oracle", 120, shape_oracle);
  criterion(4, "ROI specificity", 300, roi_specificity);
  criterion(5, "loss unit values", 1, loss_values);
  criterion(6, "GAN smoke training", 180, gan_smoke);
  criterion(7, "end-to-end pipeline", 1200, end_to_end);
  criterion(8, "SSIM correctness", 10, ssim_correctness);
  criterion(9, "determinism", 600, determinism);
  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criterion/criteria failed")
            << std::endl;
  return failures == 0 ? 0 : 1;
}
