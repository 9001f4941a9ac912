#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>

#include "doctest.h"
#include "lab/dataset.hpp"
#include "lab/error.hpp"
#include "lab/model.hpp"
#include "lab/optim.hpp"
#include "lab/train.hpp"

using namespace lab;

namespace {

std::filesystem::path write_temp(const std::string& name, const std::string& body) {
  const auto path = std::filesystem::temp_directory_path() / ("lab_ds_" + name);
  std::ofstream(path) << body;
  return path;
}

std::string error_of(const std::filesystem::path& p) {
  try {
    ingest_csv(p, "label");
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("ingest_csv reads a small file exactly") {
  const auto p = write_temp("ok.csv", "a,label,b\n1.5,2,-3\n0,0,4e-1\n\n7,1,8\n");
  const LabeledDataset d = ingest_csv(p, "label");
  CHECK(d.x == Array::matrix({{1.5, -3}, {0, 0.4}, {7, 8}}));
  CHECK(d.labels == std::vector<int>{2, 0, 1});
  CHECK(d.num_classes == 3);
  CHECK_NOTHROW(d.validate());
  std::filesystem::remove(p);
}

TEST_CASE("ingest_csv errors carry line numbers") {
  CHECK(error_of("/nonexistent/lab.csv").find("cannot open") != std::string::npos);
  const auto empty = write_temp("empty.csv", "");
  CHECK(error_of(empty).find("empty file") != std::string::npos);
  const auto header = write_temp("header.csv", "a,label\n");
  CHECK(error_of(header).find("no data rows") != std::string::npos);
  const auto text = write_temp("text.csv", "a,label\n1,0\nx,1\n");
  CHECK(error_of(text).find(":3:") != std::string::npos);
  const auto negative = write_temp("neg.csv", "a,label\n1,0\n2,1\n3,-1\n");
  CHECK(error_of(negative).find(":4: negative label") != std::string::npos);
  const auto ragged = write_temp("ragged.csv", "a,label\n1,0,2\n");
  CHECK(error_of(ragged).find(":2:") != std::string::npos);
  const auto nolabel = write_temp("nolabel.csv", "a,b\n1,0\n");
  CHECK(error_of(nolabel).find("no column named") != std::string::npos);
  for (const auto& p : {empty, header, text, negative, ragged, nolabel}) std::filesystem::remove(p);
}

TEST_CASE("synthetic splits are seeded and class-balanced") {
  SyntheticSpec s;
  s.num_classes = 3;
  s.n_informative = 2;
  s.n_nuisance = 5;
  s.geometry = Geometry::concentric_rings;
  s.n_train = 301;
  s.n_val = 31;
  s.n_test = 100;
  s.seed = 4;
  const DatasetSplits a = generate_synthetic_dataset(s);
  const DatasetSplits b = generate_synthetic_dataset(s);
  CHECK(a.train.x == b.train.x);
  CHECK(a.test.labels == b.test.labels);
  s.seed = 5;
  CHECK_FALSE(generate_synthetic_dataset(s).train.x == a.train.x);

  for (const LabeledDataset* d : {&a.train, &a.val, &a.test}) {
    CHECK_NOTHROW(d->validate());
    CHECK(d->dim() == 7);
    std::map<int, std::size_t> counts;
    for (int y : d->labels) ++counts[y];
    CHECK(counts.size() == 3);
    std::size_t lo = d->size(), hi = 0;
    for (const auto& [y, c] : counts) {
      lo = std::min(lo, c);
      hi = std::max(hi, c);
    }
    CHECK(hi - lo <= 1);
  }
  CHECK(a.train.size() == 301);
  CHECK(a.val.size() == 31);
  CHECK_FALSE(a.train.x == a.test.x);
}

TEST_CASE("ring radii survive the rotation") {
  // With no noise dimensions the rotation preserves norms, so mean radius
  // still grows with the class index.
  SyntheticSpec s;
  s.num_classes = 3;
  s.geometry = Geometry::concentric_rings;
  s.class_separation = 5.0;
  s.n_train = 600;
  s.seed = 1;
  const LabeledDataset d = generate_synthetic_dataset(s).train;
  std::vector<double> radius(3, 0.0), count(3, 0.0);
  for (std::size_t i = 0; i < d.size(); ++i) {
    radius[d.labels[i]] += std::hypot(d.x.at(i, 0), d.x.at(i, 1));
    count[d.labels[i]] += 1;
  }
  for (int k = 0; k < 3; ++k) {
    CHECK(radius[k] / count[k] == doctest::Approx(5.0 * (k + 1)).epsilon(0.1));
  }
}

TEST_CASE("well separated blobs are linearly separable") {
  SyntheticSpec s;
  s.num_classes = 2;
  s.class_separation = 10.0;
  s.n_train = 400;
  s.n_test = 400;
  s.seed = 3;
  const DatasetSplits d = generate_synthetic_dataset(s);
  // Linear probe: zero-hidden-layer model, i.e. an identity encoder layer.
  ClassifierParams clf;
  clf.encoder.layers.push_back({Array::matrix({{1, -1, 0, 0}, {0, 0, 1, -1}}), Array::zeros({1, 4})});
  clf.head = zero_layer(4, 2);
  TrainConfig c;
  c.lr = 0.05;
  c.epochs = 30;
  c.batch_size = 32;
  ErmResult r = train_erm(d.train, d.val, d.test, clf, LossSpec::cce(), c);
  CHECK(r.history.final_test_acc() >= 0.99);
}

TEST_CASE("SyntheticSpec validation") {
  SyntheticSpec s;
  s.n_informative = 1;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = SyntheticSpec{};
  s.n_val = 0;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = SyntheticSpec{};
  s.class_separation = 0.0;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = SyntheticSpec{};
  s.num_classes = 1;
  CHECK_THROWS_AS(generate_synthetic_dataset(s), ConfigError);
}
