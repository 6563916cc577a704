#include "cli.hpp"

#include <openssl/evp.h>

#include <CLI11.hpp>
#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>

#include "json.hpp"
#include "run_config.hpp"
#include "ssgan/error.hpp"
#include "ssgan/evaluation.hpp"
#include "ssgan/parallel.hpp"
#include "ssgan/pipeline.hpp"

namespace ssgan::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr const char* kShapeFile = "shape.shd";
constexpr const char* kSemanticFile = "semantic.sem";
constexpr const char* kGanFile = "gan.gan";

const char* kFooter = R"(CSV outputs (all under --out):
  eval_image.csv, eval_shape.csv, semantic_eval.csv, ablate_*.csv, report.csv
      metric,label,run,value   (run = -1 for values not tied to a run)
  gan_log.csv        epoch,lr,d_loss,g_adv,g_l1,g_total
  semantic_log.csv   epoch,loss
Every subcommand also writes <subcommand>.manifest.json with the resolved
configuration, the seed and SHA-256 checksums of what it wrote.
Exit codes: 0 success, 1 invalid input or configuration, 2 numerical failure.)";

std::string sha256_hex(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot read " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  const std::string data = ss.str();
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1) {
    throw IoError("SHA-256 failed for " + path.string());
  }
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << int(md[i]);
  return hex.str();
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

class Run {
 public:
  Run(std::string name, RunConfig config, std::ostream& out) : name_(std::move(name)), cfg_(std::move(config)), out_(out) {}

  const RunConfig& cfg() const { return cfg_; }
  std::ostream& out() { return out_; }

  const std::string& require_dataset() const {
    if (cfg_.dataset.empty()) throw ConfigError(name_ + " needs dataset (--dataset or dataset = ...)");
    return cfg_.dataset;
  }
  fs::path out_dir() const {
    if (cfg_.out.empty()) throw ConfigError(name_ + " needs an output directory (--out or out = ...)");
    fs::create_directories(cfg_.out);
    return cfg_.out;
  }
  std::uint64_t require_seed() const {
    if (!cfg_.seed) throw ConfigError(name_ + " needs a seed (--seed or seed = ...)");
    return *cfg_.seed;
  }

  Dataset load() const { return average_test_trials(load_dataset(require_dataset())); }

  fs::path artifact(const std::string& file) const { return out_dir() / file; }
  fs::path upstream(const std::string& file, const std::string& producer) const {
    const fs::path p = out_dir() / file;
    if (!fs::exists(p)) throw IoError("missing artifact " + p.string() + " (run " + producer + " first)");
    return p;
  }

  void produced(const fs::path& p) { written_.push_back(p); }
  void produced_tree(const fs::path& root) {
    for (const auto& e : fs::recursive_directory_iterator(root)) {
      if (e.is_regular_file() && e.path().filename().string().find(".manifest.json") == std::string::npos) {
        written_.push_back(e.path());
      }
    }
  }

  void write_csv(const std::string& file, const std::vector<MetricRow>& rows) {
    const fs::path p = artifact(file);
    std::ofstream os(p);
    write_metrics_csv(os, rows);
    if (!os) throw IoError("failed writing " + p.string());
    produced(p);
  }

  void write_manifest() {
    const fs::path dir = out_dir();
    json cfg = json::object();
    for (const auto& [k, v] : snapshot(cfg_)) cfg[k] = v;
    json artifacts = json::object();
    std::sort(written_.begin(), written_.end());
    for (const auto& p : written_) artifacts[fs::relative(p, dir).generic_string()] = sha256_hex(p);
    json m = {{"subcommand", name_}, {"seed", cfg_.seed ? json(*cfg_.seed) : json(nullptr)},
              {"config", cfg}, {"artifacts", artifacts}};
    std::string stem = name_;
    std::replace(stem.begin(), stem.end(), ' ', '_');
    std::ofstream os(dir / (stem + ".manifest.json"));
    os << m.dump(2) << '\n';
    if (!os) throw IoError("failed writing manifest in " + dir.string());
  }

 private:
  std::string name_;
  RunConfig cfg_;
  std::ostream& out_;
  std::vector<fs::path> written_;
};

// ------------------------------------------------------------ subcommands

void cmd_simulate(Run& run) {
  run.require_seed();
  const fs::path dir = run.out_dir();
  const auto sim = simulate(run.cfg().synthetic());
  save_dataset(sim.dataset, dir.string());
  run.produced_tree(dir);
  run.out() << "simulated " << sim.dataset.records.size() << " records, " << sim.dataset.stimuli.size()
            << " stimuli into " << dir.string() << "\n";
}

void cmd_preprocess(Run& run) {
  const fs::path src = run.require_dataset(), dir = run.out_dir();
  if (fs::exists(src) && fs::equivalent(src, dir)) throw ConfigError("preprocess may not write into its input dataset");
  const Dataset avg = run.load();
  save_dataset(avg, dir.string());
  run.produced_tree(dir);
  run.out() << "averaged test trials: " << avg.records_in(Split::kTest).size() << " test records\n";
}

void cmd_train_shape(Run& run) {
  run.require_seed();
  const Dataset data = run.load();
  const auto dec = train_shape_stage(data, run.cfg().resolved_pipeline());
  const fs::path p = run.artifact(kShapeFile);
  save_shape_decoder(p.string(), dec);
  run.produced(p);
  run.out() << "shape decoder: " << dec.bases.size() << " areas, " << dec.grid() << "x" << dec.grid()
            << " grid -> " << p.string() << "\n";
}

void cmd_train_semantic(Run& run) {
  run.require_seed();
  const Dataset data = run.load();
  const auto net = train_semantic_stage(data, run.cfg().resolved_pipeline());
  const fs::path p = run.artifact(kSemanticFile);
  save_semantic_net(p.string(), net);
  run.produced(p);

  const fs::path log = run.artifact("semantic_log.csv");
  std::ofstream os(log);
  os << "epoch,loss\n";
  for (std::size_t e = 0; e < net.epoch_loss.size(); ++e) os << e + 1 << ',' << fmt(net.epoch_loss[e]) << '\n';
  os.close();
  run.produced(log);

  const auto test = data.records_in(Split::kTest);
  std::vector<int> labels;
  for (const auto* r : test) labels.push_back(r->category_id);
  const double acc = accuracy(classify(net, voxel_matrix(test, data.layout, net.roi)), labels);
  run.write_csv("semantic_eval.csv", {{"semantic_accuracy", net.roi, -1, acc}});
  run.out() << "semantic net on " << net.roi << ": test accuracy " << fmt(acc) << " -> " << p.string() << "\n";
}

void cmd_train_gan(Run& run) {
  run.require_seed();
  const PipelineConfig pc = run.cfg().resolved_pipeline();
  const Dataset data = run.load();
  const ShapeDecoder shape = load_shape_decoder(run.upstream(kShapeFile, "train-shape").string());
  std::optional<SemanticNet> net;
  if (pc.use_semantics) net = load_semantic_net(run.upstream(kSemanticFile, "train-semantic").string());
  const SemanticNet* np = net ? &*net : nullptr;

  auto pairs = decoded_pairs(data, shape, np);
  const std::size_t decoded = pairs.size();
  AugmentationResult extra;
  if (pc.augment) {
    extra = extra_pairs(data, training_category_averages(data, np), shape.patch);
    pairs.insert(pairs.end(), extra.pairs.begin(), extra.pairs.end());
  }
  GanTrainConfig gc = pc.gan_config();
  gc.resolution = data.image_size;
  if (np) gc.semantic_dim = np->config.hidden2;
  run.out() << "training GAN on " << decoded << " decoded + " << extra.pairs.size() << " augmented pairs ("
            << extra.rejected << " rejected)\n";

  const fs::path log_path = run.artifact("gan_log.csv");
  std::ofstream log(log_path);
  log << "epoch,lr,d_loss,g_adv,g_l1,g_total\n";
  const GanModel model = train_gan(pairs, gc, nullptr, [&](const EpochLog& e) {
    log << e.epoch << ',' << fmt(e.lr) << ',' << fmt(e.d_loss) << ',' << fmt(e.g_adv) << ',' << fmt(e.g_l1) << ','
        << fmt(e.g_total) << '\n';
    run.out() << "epoch " << e.epoch << "/" << gc.epochs << "  d " << fmt(e.d_loss) << "  g_adv " << fmt(e.g_adv)
              << "  g_l1 " << fmt(e.g_l1) << "\n";
  });
  log.close();
  run.produced(log_path);
  const fs::path p = run.artifact(kGanFile);
  save_gan(p.string(), model);
  run.produced(p);
}

void cmd_reconstruct(Run& run) {
  const Dataset data = run.load();
  const ShapeDecoder shape = load_shape_decoder(run.upstream(kShapeFile, "train-shape").string());
  const GanModel model = load_gan(run.upstream(kGanFile, "train-gan").string());
  std::optional<SemanticNet> net;
  if (model.generator.semantic_dim > 0) net = load_semantic_net(run.upstream(kSemanticFile, "train-semantic").string());
  const auto rec = reconstruct_split(data, model, shape, net ? &*net : nullptr);

  const fs::path dir = run.artifact("recon"), shapes = run.artifact("shapes");
  fs::remove_all(dir);
  fs::remove_all(shapes);
  fs::create_directories(dir);
  fs::create_directories(shapes);
  std::vector<std::vector<Image>> rows;
  for (std::size_t i = 0; i < rec.ids.size(); ++i) {
    write_pgm((dir / (rec.ids[i] + ".pgm")).string(), rec.images[i]);
    write_pgm((shapes / (rec.ids[i] + ".pgm")).string(), rec.shapes[i]);
    run.produced(dir / (rec.ids[i] + ".pgm"));
    run.produced(shapes / (rec.ids[i] + ".pgm"));
    if (rows.size() < 10) rows.push_back({rec.truths[i], rec.shapes[i], rec.images[i]});
  }
  const fs::path montage = run.artifact("montage.pgm");
  write_pgm(montage.string(), make_montage(rows));
  run.produced(montage);
  run.out() << "reconstructed " << rec.ids.size() << " test images into " << dir.string() << "\n";
}

void cmd_evaluate(Run& run, const std::string& metric) {
  const Dataset data = run.load();
  const auto test = data.records_in(Split::kTest);
  std::vector<Image> candidates, truths;
  if (metric == "shape") {
    const ShapeDecoder shape = load_shape_decoder(run.upstream(kShapeFile, "train-shape").string());
    for (const auto* r : test) {
      candidates.push_back(decode_shape(shape, *r, data.layout));
      truths.push_back(data.stimulus(r->stimulus_id).mask);
    }
  } else {
    for (const auto* r : test) {
      candidates.push_back(read_pgm(run.upstream("recon/" + r->stimulus_id + ".pgm", "reconstruct").string()));
      truths.push_back(data.stimulus(r->stimulus_id).image);
    }
  }
  const auto report = pairwise_win_rate(candidates, truths, run.cfg().pipeline.eval_runs, run.cfg().seed.value_or(0));
  run.write_csv("eval_" + metric + ".csv", report_rows(report, metric));
  run.out() << metric << " win rate " << fmt(report.win_rate) << " over " << report.runs << " runs\n";
}

void cmd_ablate(Run& run, const std::string& what) {
  run.require_seed();
  const Dataset raw = load_dataset(run.require_dataset());
  const PipelineConfig pc = run.cfg().resolved_pipeline();
  std::vector<MetricRow> rows;
  if (what == "roi") {
    RoiAblationOptions opt;
    opt.shape = pc.shape;
    opt.semantic = pc.semantic_config();
    opt.reserved = run.cfg().ablate_reserved;
    opt.runs = pc.eval_runs;
    opt.seed = pc.seed;
    const auto table = roi_ablation(raw, run.cfg().ablate_rois, opt);
    rows = report_rows(table);
    for (const auto& t : table) {
      run.out() << t.roi << ": shape win " << fmt(t.shape_win_rate) << ", semantic accuracy " << fmt(t.semantic_accuracy)
                << "\n";
    }
  } else {
    const AblationMode other = what == "semantics" ? AblationMode::kNoSemantics : AblationMode::kNoAugmentation;
    for (auto mode : {AblationMode::kFull, other}) {
      const auto rep = ablation_run(mode, raw, pc);
      const auto r = report_rows(rep, std::string(to_string(mode)));
      rows.insert(rows.end(), r.begin(), r.end());
      run.out() << to_string(mode) << ": win rate " << fmt(rep.win_rate) << "\n";
    }
  }
  run.write_csv("ablate_" + what + ".csv", rows);
}

void cmd_report(Run& run) {
  const fs::path dir = run.out_dir();
  const std::vector<std::string> sources = {"semantic_eval", "eval_shape", "eval_image", "ablate_roi",
                                            "ablate_semantics", "ablate_augmentation"};
  std::vector<MetricRow> rows;
  for (const auto& s : sources) {
    const fs::path p = dir / (s + ".csv");
    if (!fs::exists(p)) continue;
    std::ifstream is(p);
    for (auto r : read_metrics_csv(is)) {
      r.metric = s + "." + r.metric;
      if (r.run < 0) run.out() << std::left << std::setw(40) << r.metric << std::setw(16) << r.label << fmt(r.value) << "\n";
      rows.push_back(std::move(r));
    }
  }
  if (rows.empty()) throw IoError("nothing to report in " + dir.string() + " (run evaluate or ablate first)");
  run.write_csv("report.csv", rows);
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::ostringstream keys;
  keys << "\nConfiguration keys (config file `key = value`, or --set key=value):\n";
  for (const auto& [k, v] : snapshot(RunConfig{})) keys << "  " << k << " = " << v << "\n";

  CLI::App app{"Shape-semantic GAN reconstruction pipeline on voxel data", "ssgan"};
  app.footer(std::string(kFooter) + "\n" + keys.str());
  app.fallthrough();
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::string> seed, dataset, out_dir, threads;
  bool no_semantics = false, no_augmentation = false, tolerance = false;
  std::vector<std::string> sets;
  app.add_option("-c,--config", config_path, "Config file of key = value lines");
  app.add_option("--seed", seed, "Random seed (required for simulate, train-* and ablate)");
  app.add_option("--dataset", dataset, "Dataset directory");
  app.add_option("--out", out_dir, "Output directory");
  app.add_option("--threads", threads, "Worker threads (default 1; > 1 needs --tolerance-mode)");
  app.add_flag("--tolerance-mode", tolerance, "Allow parallel evaluation");
  app.add_flag("--no-semantics", no_semantics, "Shape-only GAN");
  app.add_flag("--no-augmentation", no_augmentation, "Skip augmentation pairs");
  app.add_option("--set", sets, "Override one key: key=value (repeatable)");

  auto* simulate_cmd = app.add_subcommand("simulate", "Write a synthetic dataset to --out");
  auto* preprocess_cmd = app.add_subcommand("preprocess", "Average test trials into a new dataset at --out");
  auto* shape_cmd = app.add_subcommand("train-shape", "Fit the shape decoder -> shape.shd");
  auto* semantic_cmd = app.add_subcommand("train-semantic", "Train the semantic net -> semantic.sem");
  auto* gan_cmd = app.add_subcommand("train-gan", "Train the GAN -> gan.gan, gan_log.csv");
  auto* recon_cmd = app.add_subcommand("reconstruct", "Reconstruct the test split -> recon/, montage.pgm");
  auto* eval_cmd = app.add_subcommand("evaluate", "Pairwise SSIM identification -> eval_<metric>.csv");
  std::string metric = "image";
  eval_cmd->add_option("--metric", metric, "image (reconstructions) or shape (decoded shapes vs masks)")
      ->check(CLI::IsMember({"image", "shape"}));
  auto* ablate_cmd = app.add_subcommand("ablate", "Experiment runners -> ablate_<kind>.csv");
  ablate_cmd->require_subcommand(1);
  auto* ab_roi = ablate_cmd->add_subcommand("roi", "Shape win rate and semantic accuracy per ROI set");
  auto* ab_sem = ablate_cmd->add_subcommand("semantics", "Full pipeline vs shape-only GAN");
  auto* ab_aug = ablate_cmd->add_subcommand("augmentation", "Full pipeline vs no augmentation");
  auto* report_cmd = app.add_subcommand("report", "Collect CSV metrics under --out into report.csv");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  std::string name;
  for (auto* sc : app.get_subcommands()) name = sc->get_name();
  if (eval_cmd->parsed()) name = "evaluate " + metric;
  if (ablate_cmd->parsed()) {
    for (auto* sc : ablate_cmd->get_subcommands()) name = "ablate " + sc->get_name();
  }

  try {
    RunConfig cfg;
    if (!config_path.empty()) apply_config_file(cfg, config_path);
    if (seed) set_key(cfg, "seed", *seed);
    if (dataset) set_key(cfg, "dataset", *dataset);
    if (out_dir) set_key(cfg, "out", *out_dir);
    if (threads) set_key(cfg, "threads", *threads);
    if (tolerance) cfg.tolerance_mode = true;
    if (no_semantics) cfg.pipeline.use_semantics = false;
    if (no_augmentation) cfg.pipeline.augment = false;
    for (const auto& s : sets) apply_override(cfg, s);
    if (cfg.threads < 1) throw ConfigError("threads must be >= 1");
    if (cfg.threads > 1 && !cfg.tolerance_mode) throw ConfigError("threads > 1 requires tolerance_mode");
    set_thread_count(cfg.threads);

    Run run(name, cfg, out);
    if (simulate_cmd->parsed()) cmd_simulate(run);
    if (preprocess_cmd->parsed()) cmd_preprocess(run);
    if (shape_cmd->parsed()) cmd_train_shape(run);
    if (semantic_cmd->parsed()) cmd_train_semantic(run);
    if (gan_cmd->parsed()) cmd_train_gan(run);
    if (recon_cmd->parsed()) cmd_reconstruct(run);
    if (eval_cmd->parsed()) cmd_evaluate(run, metric);
    if (ab_roi->parsed()) cmd_ablate(run, "roi");
    if (ab_sem->parsed()) cmd_ablate(run, "semantics");
    if (ab_aug->parsed()) cmd_ablate(run, "augmentation");
    if (report_cmd->parsed()) cmd_report(run);
    run.write_manifest();
    set_thread_count(1);
    return 0;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << "\n";
    set_thread_count(1);
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    set_thread_count(1);
    return 1;
  }
}

}  // namespace ssgan::cli
