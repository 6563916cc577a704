#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "gradcheck.hpp"
#include "ssgan/error.hpp"
#include "ssgan/gan.hpp"
#include "ssgan/simulate.hpp"

using namespace ssgan;
using ssgan::testing::check_gradients;
using ssgan::testing::random_tensor;

namespace {

Tensor filled(Shape shape, float v) { return Tensor(std::move(shape), v); }

GanTrainConfig tiny_config() {
  GanTrainConfig c;
  c.resolution = 16;
  c.base_channels = 4;
  c.semantic_dim = 3;
  c.batch = 4;
  c.epochs = 10;
  c.decay_start = 5;
  return c;
}

std::vector<float> snapshot(const std::vector<Tensor>& params) {
  std::vector<float> out;
  for (const auto& p : params) out.insert(out.end(), p.data().begin(), p.data().end());
  return out;
}

// Synthetic pairs from the simulator's renderer: the target image is the
// stimulus and the shape is its projected mask.
std::vector<TrainingPair> rendered_pairs(int n, int semantic_dim, std::uint64_t seed) {
  SyntheticConfig sc;
  sc.image_size = 16;
  sc.patch = 4;
  std::vector<TrainingPair> out;
  for (int i = 0; i < n; ++i) {
    const int cat = i % sc.categories;
    auto r = render_stimulus(sc, cat, seed + static_cast<std::uint64_t>(i));
    Eigen::VectorXf sem = Eigen::VectorXf::Zero(semantic_dim);
    sem(cat % semantic_dim) = 1.0f;
    out.push_back({shape_image(r.mask, sc.patch), sem, r.image});
  }
  return out;
}

}  // namespace

TEST_CASE("generator loss examples") {
  const Shape s{2, 1, 4, 4};
  const Tensor target = filled(s, 0.3f);
  SUBCASE("perfect case is zero") {
    auto l = generator_loss(filled({2, 1, 2, 2}, 1.0f), target, target, 100.0f);
    CHECK(std::fabs(l.total.item()) < 1e-6f);
  }
  SUBCASE("undecided discriminator gives ln 2") {
    auto l = generator_loss(filled({2, 1, 2, 2}, 0.5f), target, target, 100.0f);
    CHECK(l.total.item() == doctest::Approx(std::log(2.0)).epsilon(1e-6));
  }
  SUBCASE("offset of one half at lambda 100 gives 50") {
    auto l = generator_loss(filled({2, 1, 2, 2}, 1.0f), filled(s, 0.8f), target, 100.0f);
    CHECK(l.total.item() == doctest::Approx(50.0).epsilon(1e-5));
  }
  SUBCASE("total is adversarial plus lambda times L1") {
    std::mt19937_64 rng(3);
    auto scores = random_tensor({2, 1, 2, 2}, rng, 0.05f, 0.95f, false);
    auto fake = random_tensor(s, rng, 0.0f, 1.0f, false);
    auto l = generator_loss(scores, fake, target, 37.5f);
    CHECK(l.total.item() == doctest::Approx(l.adversarial.item() + 37.5f * l.image.item()).epsilon(1e-6));
  }
  SUBCASE("size mismatch") {
    CHECK_THROWS_AS(generator_loss(filled({1, 1, 2, 2}, 0.5f), filled({1, 1, 4, 4}, 0.f), filled({1, 1, 2, 4}, 0.f), 1),
                    DimensionError);
  }
}

TEST_CASE("discriminator loss examples") {
  const Shape s{3, 1, 2, 2};
  CHECK(std::fabs(discriminator_loss(filled(s, 1.0f), filled(s, 0.0f)).item()) < 1e-6f);
  CHECK(discriminator_loss(filled(s, 0.5f), filled(s, 0.5f)).item() == doctest::Approx(2 * std::log(2.0)).epsilon(1e-6));
  const float clamped = discriminator_loss(filled(s, 0.0f), filled(s, 0.0f)).item();
  CHECK(std::isfinite(clamped));
  CHECK(clamped == doctest::Approx(-std::log(1e-7)).epsilon(1e-4));
}

TEST_CASE("learning rate schedule") {
  GanTrainConfig c;
  CHECK(learning_rate(c, 1) == doctest::Approx(2e-4));
  CHECK(learning_rate(c, 120) == doctest::Approx(2e-4));
  CHECK(learning_rate(c, 160) == doctest::Approx(1e-4));
  CHECK(learning_rate(c, 200) == 0.0f);
  CHECK(learning_rate(c, 121) < 2e-4f);
}

TEST_CASE("gan config validation") {
  GanTrainConfig c;
  CHECK_NOTHROW(c.validate());
  CHECK(c.depth() == 8);
  auto bad = c;
  bad.decay_start = 200;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = c;
  bad.resolution = 48;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = c;
  bad.resolution = 8;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = c;
  bad.semantic_dim = 0;
  CHECK_THROWS_AS(build_generator(bad), ConfigError);
  bad.use_semantics = false;
  CHECK_NOTHROW(build_generator(bad));
}

TEST_CASE("generator structure") {
  GanTrainConfig c;
  c.base_channels = 2;
  c.semantic_dim = 5;
  auto g256 = build_generator(c);
  CHECK(g256.encoder.size() == 8);
  CHECK(g256.decoder.size() == 8);
  CHECK(g256.encoder[0].weight.shape() == Shape{2, 1, 4, 4});
  CHECK(g256.encoder[7].weight.dim(0) == 16);  // capped at 8 * base
  CHECK(g256.decoder[0].weight.dim(0) == 16 + 5);
  CHECK_FALSE(g256.encoder[0].norm.has_value());
  CHECK(g256.encoder[1].norm.has_value());
  CHECK_FALSE(g256.decoder[7].norm.has_value());

  c.resolution = 64;
  CHECK(build_generator(c).encoder.size() == 6);

  auto g = build_generator(c);
  std::mt19937_64 rng(1);
  Tensor x = random_tensor({2, 1, 64, 64}, rng, 0.0f, 1.0f, false);
  Tensor sem = random_tensor({2, 5}, rng, -1.0f, 1.0f, false);
  Tensor y = generator_forward(g, x, sem);
  CHECK(y.shape() == Shape{2, 1, 64, 64});
  CHECK(*std::min_element(y.data().begin(), y.data().end()) >= 0.0f);
  CHECK(*std::max_element(y.data().begin(), y.data().end()) <= 1.0f);
  CHECK_THROWS_AS(generator_forward(g, x, Tensor({2, 4}, 0.0f)), DimensionError);
  CHECK_THROWS_AS(generator_forward(g, Tensor({1, 1, 32, 32}, 0.0f), sem), DimensionError);
}

TEST_CASE("bottleneck is 1x1 and semantics reach the output") {
  auto g = make_generator(16, 3, 2, 5);
  std::vector<BatchStats> stats;
  Tensor x({2, 1, 16, 16}, 0.5f);
  std::vector<float> sv = {1, 0, 0, 1};
  Tensor a = generator_forward(g, x, Tensor({2, 2}, sv), NormMode::kRunning);
  float diff = 0;
  for (std::size_t i = 0; i < 256; ++i) diff = std::max(diff, std::fabs(a.data()[i] - a.data()[256 + i]));
  CHECK(diff > 0.0f);
}

TEST_CASE("discriminator scores") {
  auto patch = make_discriminator(16, 4, 3, false, 0);
  auto global = make_discriminator(16, 4, 3, true, 0);
  CHECK(patch.layers[0].weight.dim(1) == 2);
  std::mt19937_64 rng(2);
  Tensor s = random_tensor({3, 1, 16, 16}, rng, 0, 1, false), im = random_tensor({3, 1, 16, 16}, rng, 0, 1, false);
  Tensor p = discriminator_forward(patch, s, im);
  CHECK(p.shape() == Shape{3, 1, 2, 2});
  Tensor q = discriminator_forward(global, s, im);
  CHECK(q.shape() == Shape{3, 1, 1, 1});
  for (float v : p.data()) CHECK((v > 0.0f && v < 1.0f));
  CHECK_THROWS_AS(make_discriminator(16, 4, 5, false, 0), ConfigError);
}

TEST_CASE("finite-difference check on a one-level generator") {
  auto g = make_generator(2, 2, 2, 7);
  std::mt19937_64 rng(11);
  Tensor x = random_tensor({3, 1, 2, 2}, rng, 0.0f, 1.0f, false);
  Tensor sem = random_tensor({3, 2}, rng, -1.0f, 1.0f, false);
  Tensor target = random_tensor({3, 1, 2, 2}, rng, 0.0f, 1.0f, false);
  // A smooth loss keeps central differences away from L1 kinks.
  auto loss = [&] {
    Tensor d = sub(generator_forward(g, x, sem, NormMode::kRunning), target);
    return mean(mul(d, d));
  };
  auto r = check_gradients(loss, g.parameters());
  CHECK(r.checked > 0);
  CHECK(r.max_error < 1e-3);

  // Batch statistics are part of the graph too.
  auto g4 = make_generator(4, 2, 2, 7);
  Tensor x4 = random_tensor({3, 1, 4, 4}, rng, 0.0f, 1.0f, false);
  Tensor t4 = random_tensor({3, 1, 4, 4}, rng, 0.0f, 1.0f, false);
  auto loss4 = [&] {
    Tensor d = sub(generator_forward(g4, x4, sem), t4);
    return mean(mul(d, d));
  };
  CHECK(check_gradients(loss4, g4.parameters(), 2.5e-4f).max_error < 1e-3);
}

TEST_CASE("freeze contract: each step leaves the other network bitwise unchanged") {
  auto model = build_gan(tiny_config());
  GanTrainer trainer(model);
  const auto pairs = rendered_pairs(8, 3, 1);
  std::vector<std::size_t> idx = {0, 1, 2, 3};
  const auto batch = trainer.make_batch(pairs, idx);

  const auto d_before = snapshot(model.discriminator.parameters());
  const auto g_before = snapshot(model.generator.parameters());
  trainer.g_step(batch, 2e-4f);
  CHECK(snapshot(model.discriminator.parameters()) == d_before);
  CHECK(snapshot(model.generator.parameters()) != g_before);
  for (const auto& p : model.discriminator.parameters()) CHECK(p.requires_grad());

  const auto g_mid = snapshot(model.generator.parameters());
  Tensor fake = generator_forward(model.generator, batch.shapes, batch.semantics);
  trainer.d_step(batch, fake, 2e-4f);
  CHECK(snapshot(model.generator.parameters()) == g_mid);
  CHECK(snapshot(model.discriminator.parameters()) != d_before);
}

TEST_CASE("smoke training halves the image loss") {
  auto cfg = tiny_config();
  cfg.base_channels = 32;
  cfg.batch = 2;
  cfg.epochs = 30;
  cfg.decay_start = 18;
  cfg.seed = 1;
  const auto pairs = rendered_pairs(8, 3, 100);
  std::vector<EpochLog> log;
  int callbacks = 0;
  auto model = train_gan(pairs, cfg, &log, [&](const EpochLog&) { ++callbacks; });
  REQUIRE(log.size() == 30);
  CHECK(callbacks == 30);
  CHECK(log.back().g_l1 <= 0.5 * log.front().g_l1);
  CHECK(log.back().lr == 0.0f);
  for (const auto& e : log) CHECK(std::isfinite(e.g_total));

  // Same seed, same run.
  std::vector<EpochLog> again;
  cfg.epochs = 3;
  cfg.decay_start = 2;
  train_gan(pairs, cfg, &again);
  CHECK(again[0].g_l1 == log[0].g_l1);
}

TEST_CASE("semantics separate categories that share a shape") {
  // Two categories, identical shapes, different intensities.
  SyntheticConfig sc;
  sc.image_size = 16;
  sc.patch = 4;
  sc.categories = 2;
  sc.shared_shapes = true;
  std::vector<TrainingPair> pairs;
  for (int i = 0; i < 16; ++i) {
    const int cat = i % 2;
    auto r = render_stimulus(sc, cat, static_cast<std::uint64_t>(i / 2));
    Eigen::VectorXf sem(2);
    sem << (cat == 0 ? 1.0f : -1.0f), (cat == 0 ? -1.0f : 1.0f);
    pairs.push_back({shape_image(r.mask, sc.patch), sem, r.image});
  }
  auto cfg = tiny_config();
  cfg.semantic_dim = 2;
  cfg.base_channels = 16;
  cfg.batch = 4;
  cfg.epochs = 100;
  cfg.decay_start = 60;
  cfg.seed = 2;

  // Mean foreground intensity difference when the same shape is rendered
  // with each category's semantics.
  auto separation = [&](const GanModel& m) {
    double gap = 0, n = 0;
    for (std::size_t i = 0; i < pairs.size(); i += 2) {
      const Image& shape = pairs[i].shape;
      const Image a = generate(m, shape, pairs[i].semantic), b = generate(m, shape, pairs[i + 1].semantic);
      for (Eigen::Index k = 0; k < shape.size(); ++k)
        if (shape.data()[k] > 0.5f) {
          gap += b.data()[k] - a.data()[k];
          ++n;
        }
    }
    return n > 0 ? std::fabs(gap / n) : 0.0;
  };
  const double with = separation(train_gan(pairs, cfg));
  cfg.use_semantics = false;
  const double without = separation(train_gan(pairs, cfg));
  MESSAGE("foreground gap with semantics " << with << ", without " << without);
  CHECK(with > 0.2);
  CHECK(without < 0.05);
}

TEST_CASE("augmentation pairs") {
  Eigen::MatrixXf f(4, 3);
  f << 1, 0, 0, 0, 1, 0, 0, 0, 1, 1, 1, 0;
  std::vector<int> labels = {0, 1, 2, 0};
  const auto avg = category_average(f, labels);

  SyntheticConfig sc;
  sc.image_size = 16;
  sc.patch = 4;
  std::vector<ExternalImage> ext;
  auto r = render_stimulus(sc, 1, 9);
  ext.push_back({r.image, r.mask, 1});
  ext.push_back({r.image, std::nullopt, 0});
  ext.push_back({r.image, r.mask, 7});

  const auto out = make_augmented_pairs(ext, avg, 4);
  REQUIRE(out.pairs.size() == 2);
  CHECK(out.rejected == 1);
  CHECK(out.pairs[0].semantic == avg.at(1));
  CHECK(out.pairs[1].semantic == avg.at(0));
  CHECK(out.pairs[0].shape.isApprox(shape_image(r.mask, 4)));
  CHECK(out.pairs[0].target.isApprox(r.image));
  CHECK(out.pairs[0].shape.minCoeff() >= 0.0f);
  CHECK(out.pairs[0].shape.maxCoeff() <= 1.0f);
  // Otsu on a two-level stimulus recovers the mask.
  CHECK(out.pairs[1].shape.isApprox(out.pairs[0].shape));
}

TEST_CASE("augmentation grows the training set by the number of extras") {
  SyntheticConfig sc;
  sc.image_size = 16;
  sc.patch = 4;
  sc.train_stimuli = 20;
  sc.test_stimuli = 5;
  sc.extra_images = 100;
  sc.voxels_per_roi = {{"V1", 20}, {"V2", 20}, {"V3", 20}, {"LOC", 20}, {"FFA", 20}, {"PPA", 20}};
  const auto sim = simulate(sc);
  std::vector<ExternalImage> ext;
  for (const auto* e : sim.dataset.stimuli_in(StimulusRole::kExtra)) ext.push_back({e->image, std::nullopt, e->category_id});
  REQUIRE(ext.size() == 100);
  Eigen::MatrixXf f = Eigen::MatrixXf::Random(10, 3);
  std::vector<int> labels(10);
  for (int i = 0; i < 10; ++i) labels[static_cast<std::size_t>(i)] = i;
  const auto out = make_augmented_pairs(ext, category_average(f, labels), 4);
  CHECK(out.pairs.size() == 100);
  CHECK(out.rejected == 0);
}

TEST_CASE("reconstruct is pure and bounded") {
  SyntheticConfig sc;
  sc.image_size = 16;
  sc.patch = 4;
  sc.train_stimuli = 40;
  sc.test_stimuli = 4;
  sc.extra_images = 0;
  sc.voxels_per_roi = {{"V1", 30}, {"V2", 30}, {"V3", 30}, {"LOC", 30}, {"FFA", 30}, {"PPA", 30}};
  const auto sim = simulate(sc);
  const auto& ds = sim.dataset;
  const auto shape = fit_shape_decoder(ds, {"V1", "V2", "V3"});
  SemanticNetConfig nc;
  nc.hidden1 = 8;
  nc.hidden2 = 4;
  nc.epochs = 2;
  const auto net = train_semantic(ds, nc);
  auto cfg = tiny_config();
  cfg.semantic_dim = 4;
  auto model = build_gan(cfg);
  const auto test = ds.records_in(Split::kTest);
  const Image a = reconstruct(model, shape, &net, *test[0], ds.layout);
  const Image b = reconstruct(model, shape, &net, *test[0], ds.layout);
  CHECK(a.rows() == 16);
  CHECK(a.cols() == 16);
  CHECK((a == b).all());
  CHECK(a.minCoeff() >= 0.0f);
  CHECK(a.maxCoeff() <= 1.0f);
  CHECK_THROWS_AS(reconstruct(model, shape, nullptr, *test[0], ds.layout), ContractError);

  TrialRecord broken = *test[0];
  broken.voxels.conservativeResize(broken.voxels.size() - 1);
  CHECK_THROWS_AS(reconstruct(model, shape, &net, broken, ds.layout), DimensionError);
}

TEST_CASE("gan checkpoint round trip") {
  auto cfg = tiny_config();
  cfg.seed = 4;
  cfg.epochs = 2;
  cfg.decay_start = 1;
  const auto pairs = rendered_pairs(6, 3, 7);
  auto model = train_gan(pairs, cfg);
  std::stringstream ss;
  write_gan(ss, model);
  CHECK(ss.str().substr(0, 4) == "GAN1");
  auto back = read_gan(ss);
  CHECK(back.config.seed == 4);
  CHECK(snapshot(back.generator.parameters()) == snapshot(model.generator.parameters()));
  CHECK(snapshot(back.discriminator.parameters()) == snapshot(model.discriminator.parameters()));
  const Image a = generate(model, pairs[0].shape, pairs[0].semantic);
  const Image b = generate(back, pairs[0].shape, pairs[0].semantic);
  CHECK((a == b).all());

  std::stringstream truncated(ss.str().substr(0, ss.str().size() / 2));
  CHECK_THROWS_AS(read_gan(truncated), IoError);
  std::stringstream wrong("SEM1xxxx");
  CHECK_THROWS_AS(read_gan(wrong), IoError);
}

TEST_CASE("training rejects bad input") {
  auto cfg = tiny_config();
  CHECK_THROWS_AS(train_gan({}, cfg), ContractError);
  auto pairs = rendered_pairs(4, 3, 0);
  pairs[1].target = Image::Zero(8, 8);
  CHECK_THROWS_AS(train_gan(pairs, cfg), DimensionError);
  pairs = rendered_pairs(4, 2, 0);
  CHECK_THROWS_AS(train_gan(pairs, cfg), DimensionError);
}
