#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"
#include "json.hpp"
#include "lab/checkpoint.hpp"
#include "lab/config.hpp"
#include "lab/error.hpp"
#include "lab/harness.hpp"

using namespace lab;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json tiny_config() {
  return json::parse(R"({
    "dataset": {"synthetic": {"num_classes": 3, "n_informative": 2, "n_nuisance": 2,
                              "geometry": "gaussian_blobs", "n_train": 90, "n_val": 30,
                              "n_test": 60, "class_separation": 5.0, "seed": 11}},
    "noise": [{"kind": "symmetric", "rate": 0.2}],
    "methods": ["cce"],
    "initializers": ["random"],
    "model": {"encoder_hidden": [8]},
    "pretrain": {"lr": 0.05, "momentum": 0.9, "weight_decay": 0.0, "batch_size": 30, "epochs": 2,
                 "schedule": "constant", "temperature": 0.5, "projection_hidden": 8,
                 "projection_dim": 4, "jitter_sigma": 0.2, "mask_prob": 0.1},
    "train": {"lr": 0.05, "momentum": 0.9, "weight_decay": 0.0001, "batch_size": 30, "epochs": 3,
              "schedule": "cosine"},
    "seeds": [1],
    "output_dir": "unused"
  })");
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("lab-harness-test-" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

RunResult row(const std::string& method, double rate, std::uint64_t seed, double acc) {
  RunResult r;
  r.run_id = method + std::to_string(rate) + "-" + std::to_string(seed);
  r.method = method;
  r.initializer = "random";
  r.noise_kind = "symmetric";
  r.noise_rate = rate;
  r.seed = seed;
  r.final_test_acc = acc;
  r.best_val_test_acc = acc;
  r.epochs = 1;
  return r;
}

}  // namespace

TEST_CASE("config round-trips through its canonical JSON") {
  const ExperimentConfig c = parse_config(tiny_config());
  const ExperimentConfig again = parse_config(c.to_json());
  CHECK(again.to_json() == c.to_json());
  CHECK(again.hash() == c.hash());
  CHECK(c.hash().size() == 16);
}

TEST_CASE("config hash ignores the output directory and nothing else") {
  json a = tiny_config();
  json b = a;
  b["output_dir"] = "elsewhere";
  CHECK(parse_config(a).hash() == parse_config(b).hash());
  b["train"]["lr"] = 0.06;
  CHECK(parse_config(a).hash() != parse_config(b).hash());
}

TEST_CASE("config errors name the offending key") {
  const auto fails_with = [](json doc, const std::string& needle) {
    try {
      parse_config(doc);
    } catch (const ConfigError& e) {
      INFO(e.what());
      CHECK(std::string(e.what()).find(needle) != std::string::npos);
      return;
    }
    FAIL("expected ConfigError mentioning " << needle);
  };
  json doc = tiny_config();
  doc["trian"] = json::object();
  fails_with(doc, "trian");

  doc = tiny_config();
  doc["train"]["lr"] = "fast";
  fails_with(doc, "train.lr");

  doc = tiny_config();
  doc.erase("seeds");
  fails_with(doc, "seeds");

  doc = tiny_config();
  doc["seeds"] = json::array();
  fails_with(doc, "seeds");

  doc = tiny_config();
  doc["split"] = {{"val_fraction", 0.6}, {"test_fraction", 0.5}};
  fails_with(doc, "split");

  doc = tiny_config();
  doc["noise"][0]["rate"] = 1.5;
  fails_with(doc, "rate");

  doc = tiny_config();
  doc["noise"][0] = {{"kind", "asymmetric_map"}, {"rate", 0.3}, {"mapping", {{0, 7}}}};
  CHECK_THROWS_AS(parse_config(doc), ConfigError);

  doc = tiny_config();
  doc["methods"] = {"hinge"};
  fails_with(doc, "hinge");

  doc = tiny_config();
  doc["initializers"] = {"imagenet"};
  fails_with(doc, "imagenet");
}

TEST_CASE("L_q picks q from the noise rate unless given") {
  json doc = tiny_config();
  doc["methods"] = json::array({"lq", {{"method", "lq"}, {"q", 0.3}}});
  const ExperimentConfig c = parse_config(doc);
  CHECK(c.methods[0].loss_for_rate(0.4).q == 0.66);
  CHECK(c.methods[0].loss_for_rate(0.8).q == 0.5);
  CHECK(c.methods[1].loss_for_rate(0.8).q == 0.3);
}

TEST_CASE("LAB_SEED replaces the seed list") {
  json doc = tiny_config();
  doc["seeds"] = {1, 2, 3};
  ExperimentConfig c = parse_config(doc);
  apply_seed_override(c, nullptr);
  CHECK(c.seeds.size() == 3);
  apply_seed_override(c, "42");
  REQUIRE(c.seeds.size() == 1);
  CHECK(c.seeds[0] == 42);
  CHECK_THROWS_AS(apply_seed_override(c, "-1"), ConfigError);
  CHECK_THROWS_AS(apply_seed_override(c, "4x"), ConfigError);
}

TEST_CASE("no noise settings means no runs") {
  json doc = tiny_config();
  doc["noise"] = json::array();
  ExperimentConfig c = parse_config(doc);
  c.output_dir = scratch("empty");
  RunOptions opts;
  CHECK(run_experiment(c, opts).empty());
  CHECK(slurp(c.output_dir / "results.csv") == std::string(kResultsHeader) + "\n");
}

TEST_CASE("two seeds give exactly two rows with distinct run ids") {
  json doc = tiny_config();
  doc["seeds"] = {1, 2};
  ExperimentConfig c = parse_config(doc);
  RunOptions opts;
  opts.write_files = false;
  const auto results = run_experiment(c, opts);
  REQUIRE(results.size() == 2);
  CHECK(results[0].run_id != results[1].run_id);
  for (const auto& r : results) {
    CHECK(r.ok());
    CHECK(r.run_id.rfind(c.hash(), 0) == 0);
    REQUIRE(r.final_test_acc.has_value());
    CHECK(*r.final_test_acc >= 0.0);
    CHECK(*r.final_test_acc <= 1.0);
    CHECK(r.epochs == 3);
  }
}

TEST_CASE("reruns write identical bytes, also with several workers") {
  json doc = tiny_config();
  doc["seeds"] = {1, 2};
  doc["methods"] = json::array({"cce", "lq", {{"method", "mwnet"}, {"hidden", 8}}});
  doc["initializers"] = {"random", "contrastive"};
  ExperimentConfig c = parse_config(doc);

  const fs::path first_dir = scratch("det-a");
  c.output_dir = first_dir;
  run_experiment(c, RunOptions{});
  const std::string first = slurp(c.output_dir / "results.csv");
  CHECK_FALSE(fs::exists(c.output_dir / "results.partial.csv"));

  c.output_dir = scratch("det-b");
  RunOptions four;
  four.jobs = 4;
  const auto rows = run_experiment(c, four);
  CHECK(rows.size() == 12);
  CHECK(slurp(c.output_dir / "results.csv") == first);
  for (const auto& r : rows) {
    const fs::path name = r.run_id + ".json";
    CHECK(slurp(first_dir / "histories" / name) == slurp(c.output_dir / "histories" / name));
  }
}

TEST_CASE("every run starts from the uniform prediction") {
  json doc = tiny_config();
  doc["initializers"] = {"random", "contrastive"};
  doc["methods"] = json::array({"cce", {{"method", "mwnet"}, {"hidden", 4}}});
  ExperimentConfig c = parse_config(doc);
  c.output_dir = scratch("zero-head");
  for (const auto& r : run_experiment(c, RunOptions{})) {
    const json h = json::parse(slurp(c.output_dir / "histories" / (r.run_id + ".json")));
    CHECK(std::abs(h["history"]["initial_cce"].get<double>() - std::log(3.0)) < 1e-6);
  }
}

TEST_CASE("pretraining sees features only and is shared across noise settings") {
  json doc = tiny_config();
  doc["initializers"] = {"contrastive"};
  doc["noise"] = json::array({{{"kind", "symmetric"}, {"rate", 0.0}}, {{"kind", "symmetric"}, {"rate", 0.6}}});
  ExperimentConfig c = parse_config(doc);
  c.output_dir = scratch("pretrain");
  run_experiment(c, RunOptions{});

  const DatasetSplits data = load_dataset(c);
  // Same features with every label replaced: the encoder cannot differ.
  LabeledDataset relabeled = data.train;
  for (int& y : relabeled.labels) y = 0;
  const EncoderParams direct = pretrained_encoder(c, relabeled.x, 1);
  const EncoderParams saved =
      encoder_from_tensors(read_checkpoint(c.output_dir / "pretrained" / "encoder-s1.json").tensors);
  REQUIRE(direct.layers.size() == saved.layers.size());
  for (std::size_t i = 0; i < saved.layers.size(); ++i) {
    for (std::size_t j = 0; j < saved.layers[i].weight.size(); ++j) {
      CHECK(saved.layers[i].weight[j] == direct.layers[i].weight[j]);
    }
  }
}

TEST_CASE("failed cells become rows and the sweep keeps going") {
  json doc = tiny_config();
  doc["train"]["lr"] = 1e200;
  doc["seeds"] = {1, 2};
  ExperimentConfig c = parse_config(doc);
  c.output_dir = scratch("failures");
  const auto results = run_experiment(c, RunOptions{});
  REQUIRE(results.size() == 2);
  for (const auto& r : results) {
    CHECK_FALSE(r.ok());
    CHECK_FALSE(r.final_test_acc.has_value());
    CHECK(r.error.find("epoch 0") != std::string::npos);
  }
  const std::string failures = slurp(c.output_dir / "failures.jsonl");
  CHECK(std::count(failures.begin(), failures.end(), '\n') == 2);
  const auto back = read_results_csv(c.output_dir / "results.csv");
  REQUIRE(back.size() == 2);
  CHECK_FALSE(back[0].final_test_acc.has_value());
}

TEST_CASE("results CSV parses back to the same rows") {
  std::vector<RunResult> rows{row("cce", 0.2, 1, 0.5), row("lq", 0.8, 2, 0.25)};
  rows[1].best_val_test_acc.reset();
  const std::string text = results_csv(rows);
  CHECK(text.rfind(std::string(kResultsHeader) + "\n", 0) == 0);
  const auto back = parse_results_csv(text);
  REQUIRE(back.size() == 2);
  CHECK(results_csv(back) == text);
  CHECK_FALSE(back[1].best_val_test_acc.has_value());
  CHECK_THROWS_AS(parse_results_csv("bad,header\n"), ConfigError);
}

TEST_CASE("markdown table: mean and population std over seeds") {
  const std::vector<RunResult> two{row("cce", 0.4, 1, 0.8), row("cce", 0.4, 2, 0.9)};
  const std::string md = emit_table(two, TableFormat::markdown);
  CHECK(md.find("0.850 ± 0.050") != std::string::npos);

  const std::vector<RunResult> one{row("cce", 0.4, 1, 0.7)};
  CHECK(emit_table(one, TableFormat::markdown).find("0.700 ± 0.000") != std::string::npos);

  CHECK_THROWS_AS(emit_table(std::vector<RunResult>{}, TableFormat::markdown), ConfigError);
}

TEST_CASE("table columns ascend in noise rate") {
  const std::vector<RunResult> rows{row("cce", 0.8, 1, 0.3), row("cce", 0.2, 1, 0.9), row("cce", 0.5, 1, 0.6)};
  const std::string md = emit_table(rows, TableFormat::markdown);
  const auto header = md.substr(0, md.find('\n'));
  const auto p2 = header.find("0.2"), p5 = header.find("0.5"), p8 = header.find("0.8");
  REQUIRE(p2 != std::string::npos);
  CHECK(p2 < p5);
  CHECK(p5 < p8);
  const std::string csv = emit_table(rows, TableFormat::csv);
  CHECK(csv.rfind(std::string(kResultsHeader), 0) == 0);
}
