#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "cli.hpp"
#include "spinread/trace_io.hpp"

using namespace spinread;
using namespace spinread::cli;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name)
      : path(fs::temp_directory_path() / ("spinread_cli_" + name + "_" + std::to_string(::getpid()))) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

int run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "spinread");
  std::vector<char*> argv;
  for (std::string& a : args) argv.push_back(a.data());
  return run(static_cast<int>(argv.size()), argv.data());
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream(p) << text;
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json small_config() {
  return json{{"seed", 3},
              {"noise", {{"gaussian_level", 0.2}}},
              {"dataset", {{"n_per_class", 20}}},
              {"train", {{"epochs", 5}}}};
}

}  // namespace

TEST_CASE("config schema rejects unknown keys and wrong types") {
  CHECK_NOTHROW(parse_config(json::object()));
  CHECK_THROWS_AS(parse_config(json{{"sede", 1}}), ConfigError);
  CHECK_THROWS_AS(parse_config(json{{"noise", {{"gaussian", 0.1}}}}), ConfigError);
  CHECK_THROWS_AS(parse_config(json{{"noise", {{"gaussian_level", "high"}}}}), ConfigError);
  CHECK_THROWS_AS(parse_config(json{{"noise", {{"gaussian_level", -1.0}}}}), ConfigError);
  CHECK_THROWS_AS(parse_config(json{{"seed", -4}}), ConfigError);
  CHECK_THROWS_AS(parse_config(json{{"classifiers", {"dnn", "svm"}}}), ConfigError);
  CHECK_THROWS_AS(parse_config(json{{"classifiers", {"dnn", "dnn"}}}), ConfigError);
  CHECK_THROWS_AS(parse_config(json{{"t1", {{"t_wait_us", {0, 5, 5, 9}}}}}), ConfigError);
}

TEST_CASE("config defaults and seed override") {
  ExperimentConfig cfg = parse_config(json{{"seed", 9}});
  CHECK(cfg.seed == 9);
  CHECK(cfg.n_per_class == 2000);
  CHECK(cfg.settings.train.seed == 9);
  CHECK_FALSE(cfg.classifiers);
  const std::string before = config_hash(cfg);
  apply_seed(cfg, 10);
  CHECK(cfg.settings.train.seed == 10);
  CHECK(config_hash(cfg) != before);
  CHECK(config_hash(cfg).size() == 16);

  ExperimentConfig pinned = parse_config(json{{"seed", 9}, {"train", {{"seed", 4}}}});
  apply_seed(pinned, 10);
  CHECK(pinned.settings.train.seed == 4);
}

TEST_CASE("fnv-1a reference vectors") {
  CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
  CHECK(fnv1a64("foobar") == 0x85944171f73967e8ULL);
}

TEST_CASE("simulate is byte-identical across runs and writes a manifest") {
  TempDir dir("simulate");
  write_text(dir.path / "cfg.json", small_config().dump());
  const std::string cfg = (dir.path / "cfg.json").string();
  for (const char* name : {"a.txt", "b.txt", "a.bin", "b.bin"}) {
    REQUIRE(run_cli({"simulate", "-c", cfg, "-o", (dir.path / name).string()}) == kOk);
  }
  CHECK(read_text(dir.path / "a.txt") == read_text(dir.path / "b.txt"));
  CHECK(read_text(dir.path / "a.bin") == read_text(dir.path / "b.bin"));
  const DatasetFile f = read_dataset(dir.path / "a.bin");
  CHECK(f.dataset.size() == 40);

  const json manifest = json::parse(read_text(dir.path / "a.txt.manifest.json"));
  CHECK(manifest["command"] == "simulate");
  CHECK(manifest["seed"] == 3);
  CHECK(manifest["tool_version"] == kToolVersion);
  CHECK(manifest["config_hash"] == config_hash(parse_config(small_config())));

  REQUIRE(run_cli({"simulate", "-c", cfg, "-o", (dir.path / "c.txt").string(), "--seed", "4"}) == kOk);
  CHECK(read_text(dir.path / "c.txt") != read_text(dir.path / "a.txt"));
}

TEST_CASE("invalid config exits 1 and writes nothing") {
  TempDir dir("invalid");
  json bad = small_config();
  bad["noise"]["colour"] = "pink";
  write_text(dir.path / "cfg.json", bad.dump());
  const fs::path out = dir.path / "data.txt";
  CHECK(run_cli({"simulate", "-c", (dir.path / "cfg.json").string(), "-o", out.string()}) ==
        kUsageError);
  CHECK(fs::is_empty(dir.path / "cfg.json") == false);
  CHECK(std::distance(fs::directory_iterator(dir.path), fs::directory_iterator{}) == 1);

  write_text(dir.path / "broken.json", "{ not json");
  CHECK(run_cli({"simulate", "-c", (dir.path / "broken.json").string(), "-o", out.string()}) ==
        kUsageError);
  CHECK(run_cli({"simulate", "-c", (dir.path / "missing.json").string(), "-o", out.string()}) ==
        kUsageError);
  CHECK_FALSE(fs::exists(out));
}

TEST_CASE("usage errors exit 1") {
  CHECK(run_cli({}) == kUsageError);
  CHECK(run_cli({"frobnicate"}) == kUsageError);
  CHECK(run_cli({"simulate", "-c", "x.json"}) == kUsageError);
}

TEST_CASE("missing dataset is a runtime error") {
  TempDir dir("missing");
  write_text(dir.path / "cfg.json", small_config().dump());
  CHECK(run_cli({"train", "-c", (dir.path / "cfg.json").string(), "-d",
                 (dir.path / "nope.txt").string(), "-o", (dir.path / "m.txt").string()}) ==
        kRuntimeError);
  CHECK_FALSE(fs::exists(dir.path / "m.txt"));
}

TEST_CASE("empty classifier set exits 1") {
  TempDir dir("empty");
  json cfg = small_config();
  cfg["classifiers"] = json::array();
  write_text(dir.path / "cfg.json", cfg.dump());
  for (const char* cmd : {"sweep", "spike", "t1"}) {
    CHECK(run_cli({cmd, "-c", (dir.path / "cfg.json").string(), "-o", (dir.path / "out").string()}) ==
          kUsageError);
  }
  CHECK_FALSE(fs::exists(dir.path / "out"));
}

TEST_CASE("train then eval reproduces the reported accuracy") {
  TempDir dir("train");
  write_text(dir.path / "cfg.json", small_config().dump());
  const std::string cfg = (dir.path / "cfg.json").string();
  const std::string data = (dir.path / "data.bin").string();
  REQUIRE(run_cli({"simulate", "-c", cfg, "-o", data}) == kOk);
  const std::string m1 = (dir.path / "m1.txt").string(), m2 = (dir.path / "m2.txt").string();
  REQUIRE(run_cli({"train", "-c", cfg, "-d", data, "-o", m1}) == kOk);
  REQUIRE(run_cli({"train", "-c", cfg, "-d", data, "-o", m2}) == kOk);
  CHECK(read_text(m1) == read_text(m2));

  const json metrics = json::parse(read_text(m1 + ".metrics.json"));
  CHECK(metrics["eval"]["count"] == 12);
  CHECK(metrics["epochs"] == 5);
  const std::string loss = read_text(m1 + ".loss.csv");
  CHECK(std::count(loss.begin(), loss.end(), '\n') == 6);

  const std::string report = (dir.path / "eval.json").string();
  REQUIRE(run_cli({"eval", "-c", cfg, "-d", data, "-m", m1, "-o", report}) == kOk);
  const json ev = json::parse(read_text(report));
  CHECK(ev["eval"]["accuracy"].get<double>() == metrics["eval"]["accuracy"].get<double>());
  CHECK(ev["all"]["count"] == 40);

  json other = small_config();
  other["dnn"] = {{"kernel", 13}};
  write_text(dir.path / "other.json", other.dump());
  CHECK(run_cli({"eval", "-c", (dir.path / "other.json").string(), "-d", data, "-m", m1, "-o",
                 report}) == kUsageError);
}

TEST_CASE("sweep and t1 write their tables") {
  TempDir dir("sweep");
  json cfg = small_config();
  cfg["classifiers"] = {"threshold", "wavelet"};
  cfg["sweep"] = {{"levels", {0.1, 1.0}}};
  cfg["t1"] = {{"shots_per_point", 50}, {"t_wait_us", {0, 50, 100, 200}}};
  write_text(dir.path / "cfg.json", cfg.dump());
  const std::string c = (dir.path / "cfg.json").string();

  REQUIRE(run_cli({"sweep", "-c", c, "-o", (dir.path / "sweep").string(), "--threads", "2"}) == kOk);
  const std::string acc = read_text(dir.path / "sweep" / "accuracy.csv");
  CHECK(acc.rfind("classifier,level,accuracy,eval_count,", 0) == 0);
  CHECK(std::count(acc.begin(), acc.end(), '\n') == 5);
  CHECK(fs::exists(dir.path / "sweep" / "plot.csv"));
  CHECK(json::parse(read_text(dir.path / "sweep" / "report.json"))["rows"].size() == 4);

  REQUIRE(run_cli({"t1", "-c", c, "-o", (dir.path / "t1").string()}) == kOk);
  const std::string curves = read_text(dir.path / "t1" / "curves.csv");
  // threshold, wavelet and truth, four wait times each, plus the header.
  CHECK(std::count(curves.begin(), curves.end(), '\n') == 13);
  const std::string fits = read_text(dir.path / "t1" / "fits.csv");
  CHECK(std::count(fits.begin(), fits.end(), '\n') == 4);
  const json manifest = json::parse(read_text(dir.path / "t1" / "manifest.json"));
  CHECK(manifest["outputs"].size() == 4);

  json spike = cfg;
  spike["noise"]["drift_level"] = 1.0;
  write_text(dir.path / "spike.json", spike.dump());
  CHECK(run_cli({"spike", "-c", (dir.path / "spike.json").string(), "-o",
                 (dir.path / "spike").string()}) == kUsageError);
}

TEST_CASE("spike keeps scenario defaults for absent noise keys") {
  TempDir dir("spike");
  json cfg = {{"classifiers", {"threshold"}}, {"dataset", {{"n_per_class", 20}}}};
  write_text(dir.path / "cfg.json", cfg.dump());
  REQUIRE(run_cli({"spike", "-c", (dir.path / "cfg.json").string(), "-o", (dir.path / "a").string()}) ==
          kOk);
  const json a = json::parse(read_text(dir.path / "a" / "report.json"));
  REQUIRE(a["rows"].size() == 1);
  CHECK(a["rows"][0]["level"] == 1.0);

  cfg["noise"] = {{"spike_rate_per_trace", 2.0}};
  write_text(dir.path / "cfg.json", cfg.dump());
  REQUIRE(run_cli({"spike", "-c", (dir.path / "cfg.json").string(), "-o", (dir.path / "b").string()}) ==
          kOk);
  CHECK(json::parse(read_text(dir.path / "b" / "report.json"))["rows"][0]["level"] == 2.0);
}
