#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "cli.hpp"
#include "json.hpp"
#include "run_config.hpp"
#include "ssgan/error.hpp"
#include "ssgan/evaluation.hpp"

namespace fs = std::filesystem;
using ssgan::cli::run_cli;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("ssgan_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

nlohmann::json manifest(const fs::path& p) { return nlohmann::json::parse(slurp(p)); }

// Small enough to run the whole recipe in a few seconds.
const std::vector<std::string> kTiny = {
    "--set", "sim.image_size=16", "--set", "sim.patch=4", "--set", "shape.patch=4", "--set", "sim.train=60",
    "--set", "sim.test=8", "--set", "sim.extra=10", "--set", "sim.test_trials=2", "--set", "sim.lvc_voxels=120",
    "--set", "sim.hvc_voxels=90", "--set", "semantic.hidden1=32", "--set", "semantic.hidden2=8",
    "--set", "semantic.epochs=10", "--set", "gan.base_channels=4", "--set", "gan.epochs=3",
    "--set", "gan.decay_start=1", "--set", "eval.runs=3"};

std::vector<std::string> with(std::vector<std::string> head, const std::vector<std::string>& tail = kTiny) {
  head.insert(head.begin(), tail.begin(), tail.end());
  return head;
}

}  // namespace

TEST_CASE("config keys round-trip through snapshot") {
  ssgan::cli::RunConfig a;
  ssgan::cli::set_key(a, "gan.lr", "0.0005");
  ssgan::cli::set_key(a, "shape.rois", "V1, V3");
  ssgan::cli::set_key(a, "seed", "12");
  ssgan::cli::RunConfig b;
  for (const auto& [k, v] : ssgan::cli::snapshot(a)) ssgan::cli::set_key(b, k, v);
  CHECK(ssgan::cli::snapshot(a) == ssgan::cli::snapshot(b));
  CHECK(b.pipeline.gan.lr == doctest::Approx(0.0005));
  CHECK(b.pipeline.shape_rois == std::vector<std::string>{"V1", "V3"});
  CHECK(b.resolved_pipeline().seed == 12);
  CHECK(ssgan::cli::known_keys().size() == ssgan::cli::snapshot(a).size());

  CHECK_THROWS_AS(ssgan::cli::set_key(a, "gan.epochs", "3.5"), ssgan::ConfigError);
  CHECK_THROWS_AS(ssgan::cli::set_key(a, "gan.disc_global", "maybe"), ssgan::ConfigError);
  CHECK_THROWS_AS(ssgan::cli::apply_override(a, "gan.epochs"), ssgan::ConfigError);
}

TEST_CASE("unknown config key exits 1 and names the line") {
  const fs::path dir = scratch("badkey");
  std::ofstream(dir / "run.conf") << "seed = 1\n# comment\ngan.epoch = 3\n";
  const auto r = cli({"-c", (dir / "run.conf").string(), "--out", (dir / "o").string(), "simulate"});
  CHECK(r.code == 1);
  CHECK(r.err.find("run.conf:3") != std::string::npos);
  CHECK(r.err.find("gan.epoch = 3") != std::string::npos);
  CHECK_FALSE(fs::exists(dir / "o" / "simulate.manifest.json"));

  CHECK(cli({"--set", "nope=1", "--seed", "1", "--out", (dir / "o").string(), "simulate"}).code == 1);
  CHECK(cli({"--out", (dir / "o").string(), "simulate"}).code == 1);  // no seed
  CHECK(cli({"frobnicate"}).code == 1);
  CHECK(cli({"--threads", "2", "--seed", "1", "--out", (dir / "o").string(), "simulate"}).code == 1);
}

TEST_CASE("help documents the CSV schemas") {
  const auto r = cli({"--help"});
  CHECK(r.code == 0);
  CHECK(r.out.find("metric,label,run,value") != std::string::npos);
  CHECK(r.out.find("epoch,lr,d_loss,g_adv,g_l1,g_total") != std::string::npos);
  CHECK(r.out.find("gan.lambda_img = 100") != std::string::npos);
}

TEST_CASE("simulate is deterministic and writes checksums") {
  const fs::path dir = scratch("sim");
  for (const char* name : {"a", "b"}) {
    REQUIRE(cli(with({"--seed", "4", "--out", (dir / name).string(), "simulate"})).code == 0);
  }
  REQUIRE(cli(with({"--seed", "5", "--out", (dir / "c").string(), "simulate"})).code == 0);
  const auto ma = manifest(dir / "a" / "simulate.manifest.json");
  const auto mb = manifest(dir / "b" / "simulate.manifest.json");
  const auto mc = manifest(dir / "c" / "simulate.manifest.json");
  CHECK(ma["artifacts"] == mb["artifacts"]);
  CHECK(ma["artifacts"] != mc["artifacts"]);
  CHECK(ma["seed"] == 4);
  CHECK(ma["config"]["sim.image_size"] == "16");
  CHECK(ma["artifacts"].size() > 10);

  // Parallel mode reproduces the single-threaded dataset.
  REQUIRE(cli(with({"--seed", "4", "--threads", "3", "--tolerance-mode", "--out", (dir / "t").string(), "simulate"})).code == 0);
  CHECK(manifest(dir / "t" / "simulate.manifest.json")["artifacts"] == ma["artifacts"]);
}

TEST_CASE("noiseless shape decoding identifies its stimuli") {
  const fs::path dir = scratch("noiseless");
  const std::vector<std::string> cfg = {"--set", "sim.noise_scale=0", "--set", "sim.image_size=64",
                                        "--set", "sim.train=300", "--set", "sim.test=40",
                                        "--set", "sim.extra=10", "--seed", "3"};
  const auto data = (dir / "d").string(), out = (dir / "r").string();
  REQUIRE(cli(with({"--out", data, "simulate"}, cfg)).code == 0);
  REQUIRE(cli(with({"--dataset", data, "--out", out, "train-shape"}, cfg)).code == 0);
  REQUIRE(cli(with({"--dataset", data, "--out", out, "evaluate", "--metric", "shape"}, cfg)).code == 0);
  std::ifstream is(dir / "r" / "eval_shape.csv");
  double win = -1;
  for (const auto& row : ssgan::read_metrics_csv(is)) {
    if (row.metric == "mean_win_rate") win = row.value;
  }
  CHECK(win >= 0.95);
  CHECK(fs::exists(dir / "r" / "evaluate_shape.manifest.json"));
}

TEST_CASE("missing upstream artifacts exit 1 with the file named") {
  const fs::path dir = scratch("missing");
  const auto data = (dir / "d").string(), out = (dir / "r").string();
  REQUIRE(cli(with({"--seed", "2", "--out", data, "simulate"})).code == 0);

  auto r = cli(with({"--seed", "2", "--dataset", data, "--out", out, "train-gan"}));
  CHECK(r.code == 1);
  CHECK(r.err.find("shape.shd") != std::string::npos);

  REQUIRE(cli(with({"--seed", "2", "--dataset", data, "--out", out, "train-shape"})).code == 0);
  r = cli(with({"--seed", "2", "--dataset", data, "--out", out, "train-gan"}));
  CHECK(r.code == 1);
  CHECK(r.err.find("semantic.sem") != std::string::npos);

  r = cli(with({"--dataset", data, "--out", out, "reconstruct"}));
  CHECK(r.code == 1);
  CHECK(r.err.find("gan.gan") != std::string::npos);

  r = cli(with({"--dataset", data, "--out", out, "evaluate"}));
  CHECK(r.code == 1);
  CHECK(r.err.find("recon") != std::string::npos);

  CHECK(cli({"--out", (dir / "empty").string(), "report"}).code == 1);
  CHECK(cli(with({"--seed", "2", "--dataset", (dir / "nope").string(), "--out", out, "train-shape"})).code == 1);
}

TEST_CASE("diverging GAN training exits 2") {
  const fs::path dir = scratch("diverge");
  const auto data = (dir / "d").string(), out = (dir / "r").string();
  REQUIRE(cli(with({"--seed", "2", "--out", data, "simulate"})).code == 0);
  REQUIRE(cli(with({"--seed", "2", "--dataset", data, "--out", out, "train-shape"})).code == 0);
  const auto r = cli(with({"--seed", "2", "--dataset", data, "--out", out, "--no-semantics", "--set", "gan.lr=1e30",
                           "train-gan"}));
  CHECK(r.code == 2);
  CHECK(r.err.find("numerical failure") != std::string::npos);
}

TEST_CASE("full recipe emits montage and CSVs, byte-identical on rerun") {
  const fs::path dir = scratch("recipe");
  const auto data = (dir / "d").string();
  REQUIRE(cli(with({"--seed", "9", "--out", data, "simulate"})).code == 0);

  auto recipe = [&](const std::string& name) {
    const auto out = (dir / name).string();
    for (auto step : std::vector<std::vector<std::string>>{{"preprocess"},
                                                           {"train-shape"},
                                                           {"train-semantic"},
                                                           {"train-gan"},
                                                           {"reconstruct"},
                                                           {"evaluate", "--metric", "image"},
                                                           {"evaluate", "--metric", "shape"},
                                                           {"report"}}) {
      std::vector<std::string> args = {"--seed", "9", "--dataset", data};
      args.push_back("--out");
      args.push_back(step[0] == "preprocess" ? out + "_avg" : out);
      args.insert(args.end(), step.begin(), step.end());
      const auto r = cli(with(args));
      REQUIRE_MESSAGE(r.code == 0, step[0] << ": " << r.err);
    }
    return fs::path(out);
  };
  const fs::path a = recipe("a"), b = recipe("b");

  CHECK(fs::exists(a / "montage.pgm"));
  CHECK(fs::exists(a / "recon" / "test_0000.pgm"));
  CHECK(fs::exists(a.string() + "_avg/manifest.json"));
  std::ifstream log(a / "gan_log.csv");
  std::string line;
  int lines = 0;
  while (std::getline(log, line)) ++lines;
  CHECK(lines == 4);

  std::ifstream rep(a / "report.csv");
  const auto rows = ssgan::read_metrics_csv(rep);
  bool has_image = false;
  for (const auto& r : rows) has_image |= r.metric == "eval_image.mean_win_rate";
  CHECK(has_image);

  for (const char* f : {"report.csv", "eval_image.csv", "eval_shape.csv", "gan_log.csv", "gan.gan", "montage.pgm"}) {
    CHECK_MESSAGE(slurp(a / f) == slurp(b / f), f);
  }
  const auto m = manifest(a / "train-gan.manifest.json");
  CHECK(m["artifacts"].contains("gan.gan"));
  CHECK(m["artifacts"]["gan.gan"].get<std::string>().size() == 64);
  CHECK(manifest(b / "train-gan.manifest.json")["artifacts"] == m["artifacts"]);
}

TEST_CASE("ablation subcommands write labelled CSVs") {
  const fs::path dir = scratch("ablate");
  const auto data = (dir / "d").string(), out = (dir / "r").string();
  REQUIRE(cli(with({"--seed", "6", "--out", data, "simulate"})).code == 0);
  const auto r = cli(with({"--seed", "6", "--dataset", data, "--out", out, "--set", "ablate.reserved=10", "--set",
                           "ablate.rois=V1,HVC", "ablate", "roi"}));
  REQUIRE_MESSAGE(r.code == 0, r.err);
  std::ifstream is(fs::path(out) / "ablate_roi.csv");
  std::set<std::string> labels;
  for (const auto& row : ssgan::read_metrics_csv(is)) labels.insert(row.label);
  CHECK(labels == std::set<std::string>{"V1", "HVC"});
  CHECK(fs::exists(fs::path(out) / "ablate_roi.manifest.json"));

  REQUIRE(cli(with({"--seed", "6", "--dataset", data, "--out", out, "ablate", "semantics"})).code == 0);
  std::ifstream sem(fs::path(out) / "ablate_semantics.csv");
  labels.clear();
  for (const auto& row : ssgan::read_metrics_csv(sem)) labels.insert(row.label);
  CHECK(labels == std::set<std::string>{"full", "no_semantics"});
  CHECK(cli(with({"--seed", "6", "--dataset", data, "--out", out, "ablate"})).code == 1);
}
