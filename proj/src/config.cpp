#include "lab/config.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

#include "lab/error.hpp"
#include "lab/model.hpp"

namespace lab {

using nlohmann::json;

std::string to_string(Initializer init) {
  return init == Initializer::contrastive ? "contrastive" : "random";
}

Initializer parse_initializer(const std::string& name) {
  if (name == "random") return Initializer::random;
  if (name == "contrastive") return Initializer::contrastive;
  throw ConfigError("config: unknown initializer '" + name + "'");
}

std::string MethodSpec::label() const {
  if (mwnet) return "mwnet";
  if (loss.kind == LossKind::lq && auto_q) return "lq";
  return loss.name();
}

LossSpec MethodSpec::loss_for_rate(double noise_rate) const {
  if (mwnet) return LossSpec::cce();
  if (loss.kind == LossKind::lq && auto_q) return LossSpec::lq(noise_rate < 0.8 ? 0.66 : 0.5);
  return loss;
}

namespace {

/// Typed access to one JSON object that rejects keys nobody asked for.
class Reader {
 public:
  Reader(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) throw ConfigError("config: '" + path_ + "' must be an object");
  }

  bool has(const std::string& key) const { return obj_.contains(key); }

  const json& raw(const std::string& key) {
    seen_.insert(key);
    if (!obj_.contains(key)) throw ConfigError("config: missing key '" + where(key) + "'");
    return obj_.at(key);
  }

  template <class T>
  T get(const std::string& key, T fallback) {
    if (!has(key)) return fallback;
    return as<T>(key);
  }

  template <class T>
  T as(const std::string& key) {
    const json& v = raw(key);
    try {
      if constexpr (std::is_same_v<T, double>) {
        if (!v.is_number()) throw ConfigError("");
      } else if constexpr (std::is_integral_v<T>) {
        if (!v.is_number_integer()) throw ConfigError("");
        if constexpr (std::is_unsigned_v<T>) {
          if (v.get<long long>() < 0) throw ConfigError("");
        }
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string()) throw ConfigError("");
      }
      return v.get<T>();
    } catch (const std::exception&) {
      throw ConfigError("config: '" + where(key) + "' has the wrong type (" + v.dump() + ")");
    }
  }

  std::string where(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  void finish() const {
    for (const auto& [key, value] : obj_.items()) {
      if (!seen_.contains(key)) throw ConfigError("config: unknown key '" + where(key) + "'");
    }
  }

 private:
  const json& obj_;
  std::string path_;
  std::set<std::string> seen_;
};

TrainConfig parse_train(const json& doc, const std::string& path) {
  Reader r(doc, path);
  TrainConfig c;
  c.lr = r.get("lr", c.lr);
  c.inner_lr = r.get("inner_lr", c.lr);
  c.momentum = r.get("momentum", c.momentum);
  c.weight_decay = r.get("weight_decay", c.weight_decay);
  c.batch_size = r.get<std::size_t>("batch_size", c.batch_size);
  c.epochs = r.get<std::size_t>("epochs", c.epochs);
  c.schedule = parse_schedule(r.get<std::string>("schedule", to_string(c.schedule)));
  r.finish();
  return c;
}

json train_json(const TrainConfig& c) {
  return {{"lr", c.lr},
          {"inner_lr", c.inner_lr},
          {"momentum", c.momentum},
          {"weight_decay", c.weight_decay},
          {"batch_size", c.batch_size},
          {"epochs", c.epochs},
          {"schedule", to_string(c.schedule)}};
}

Geometry parse_geometry(const std::string& name) {
  if (name == "gaussian_blobs") return Geometry::gaussian_blobs;
  if (name == "concentric_rings") return Geometry::concentric_rings;
  throw ConfigError("config: unknown geometry '" + name + "'");
}

std::string geometry_name(Geometry g) {
  return g == Geometry::gaussian_blobs ? "gaussian_blobs" : "concentric_rings";
}

SyntheticSpec parse_synthetic(const json& doc) {
  Reader r(doc, "dataset.synthetic");
  SyntheticSpec s;
  s.num_classes = r.get<std::size_t>("num_classes", s.num_classes);
  s.n_informative = r.get<std::size_t>("n_informative", s.n_informative);
  s.n_nuisance = r.get<std::size_t>("n_nuisance", s.n_nuisance);
  s.geometry = parse_geometry(r.get<std::string>("geometry", geometry_name(s.geometry)));
  s.n_train = r.get<std::size_t>("n_train", s.n_train);
  s.n_val = r.get<std::size_t>("n_val", s.n_val);
  s.n_test = r.get<std::size_t>("n_test", s.n_test);
  s.class_separation = r.get("class_separation", s.class_separation);
  s.seed = r.get<std::uint64_t>("seed", s.seed);
  r.finish();
  return s;
}

NoiseSpec parse_noise(const json& doc, std::size_t index) {
  Reader r(doc, "noise[" + std::to_string(index) + "]");
  NoiseSpec n;
  n.kind = parse_noise_kind(r.as<std::string>("kind"));
  n.rate = r.as<double>("rate");
  n.seed = r.get<std::uint64_t>("seed", 0);
  if (n.kind == NoiseKind::asymmetric_map) {
    const json& m = r.raw("mapping");
    if (m.is_string() && m.get<std::string>() == "cifar10") {
      n.mapping = cifar10_asymmetric_pairs();
    } else if (m.is_array()) {
      for (const json& pair : m) {
        if (!pair.is_array() || pair.size() != 2 || !pair[0].is_number_unsigned() ||
            !pair[1].is_number_unsigned()) {
          throw ConfigError("config: '" + r.where("mapping") + "' entries must be [from, to] pairs");
        }
        n.mapping[pair[0].get<std::size_t>()] = pair[1].get<std::size_t>();
      }
    } else {
      throw ConfigError("config: '" + r.where("mapping") + "' must be \"cifar10\" or a list of pairs");
    }
  }
  if (n.kind == NoiseKind::circular_group) n.group_size = r.as<std::size_t>("group_size");
  r.finish();
  if (!(n.rate >= 0.0 && n.rate <= 1.0)) {
    throw ConfigError("config: '" + r.where("rate") + "' must lie in [0, 1]");
  }
  return n;
}

json noise_json(const NoiseSpec& n) {
  json j = {{"kind", to_string(n.kind)}, {"rate", n.rate}, {"seed", n.seed}};
  if (n.kind == NoiseKind::asymmetric_map) {
    json pairs = json::array();
    for (const auto& [from, to] : n.mapping) pairs.push_back({from, to});
    j["mapping"] = pairs;
  }
  if (n.kind == NoiseKind::circular_group) j["group_size"] = n.group_size;
  return j;
}

MethodSpec parse_method(const json& doc, std::size_t index) {
  const std::string path = "methods[" + std::to_string(index) + "]";
  if (doc.is_string()) return parse_method(json{{"method", doc.get<std::string>()}}, index);
  Reader r(doc, path);
  MethodSpec m;
  const std::string name = r.as<std::string>("method");
  if (name == "mwnet") {
    m.mwnet = true;
    m.meta_lr = r.get("meta_lr", m.meta_lr);
    m.hidden = r.get<std::size_t>("hidden", m.hidden);
    m.val_batch_size = r.get<std::size_t>("val_batch_size", m.val_batch_size);
  } else if (name == "cce") {
    m.loss = LossSpec::cce();
  } else if (name == "mae") {
    m.loss = LossSpec::mae();
  } else if (name == "lq") {
    if (r.has("q")) {
      m.loss = LossSpec::lq(r.as<double>("q"));
    } else {
      m.loss = LossSpec::lq(0.66);
      m.auto_q = true;
    }
  } else {
    throw ConfigError("config: '" + path + ".method' is '" + name + "'; expected cce, mae, lq or mwnet");
  }
  r.finish();
  try {
    m.loss.validate();
  } catch (const DomainError& e) {
    throw ConfigError("config: " + path + ": " + e.what());
  }
  return m;
}

json method_json(const MethodSpec& m) {
  if (m.mwnet) {
    return {{"method", "mwnet"}, {"meta_lr", m.meta_lr}, {"hidden", m.hidden}, {"val_batch_size", m.val_batch_size}};
  }
  switch (m.loss.kind) {
    case LossKind::cce: return {{"method", "cce"}};
    case LossKind::mae: return {{"method", "mae"}};
    case LossKind::lq:
      if (m.auto_q) return {{"method", "lq"}};
      return {{"method", "lq"}, {"q", m.loss.q}};
  }
  return {};
}

PretrainSpec parse_pretrain(const json& doc) {
  Reader r(doc, "pretrain");
  PretrainSpec p;
  json train_part = json::object();
  for (const char* key : {"lr", "momentum", "weight_decay", "batch_size", "epochs", "schedule"}) {
    if (r.has(key)) train_part[key] = r.raw(key);
  }
  p.train = parse_train(train_part, "pretrain");
  p.temperature = r.get("temperature", p.temperature);
  p.projection_hidden = r.get<std::size_t>("projection_hidden", p.projection_hidden);
  p.projection_dim = r.get<std::size_t>("projection_dim", p.projection_dim);
  p.jitter_sigma = r.get("jitter_sigma", p.jitter_sigma);
  p.mask_prob = r.get("mask_prob", p.mask_prob);
  r.finish();
  return p;
}

json pretrain_json(const PretrainSpec& p) {
  json j = train_json(p.train);
  j.erase("inner_lr");
  j["temperature"] = p.temperature;
  j["projection_hidden"] = p.projection_hidden;
  j["projection_dim"] = p.projection_dim;
  j["jitter_sigma"] = p.jitter_sigma;
  j["mask_prob"] = p.mask_prob;
  return j;
}

}  // namespace

ExperimentConfig parse_config(const json& doc) {
  ExperimentConfig c;
  Reader r(doc, "");

  Reader ds(r.raw("dataset"), "dataset");
  if (ds.has("synthetic") == ds.has("csv")) {
    throw ConfigError("config: 'dataset' needs exactly one of 'synthetic' or 'csv'");
  }
  if (ds.has("synthetic")) {
    c.dataset.synthetic = parse_synthetic(ds.raw("synthetic"));
  } else {
    Reader csv(ds.raw("csv"), "dataset.csv");
    c.dataset.csv_path = csv.as<std::string>("path");
    c.dataset.label_column = csv.get<std::string>("label_column", c.dataset.label_column);
    csv.finish();
  }
  ds.finish();

  if (r.has("split")) {
    Reader sp(r.raw("split"), "split");
    c.split.val_fraction = sp.get("val_fraction", c.split.val_fraction);
    c.split.test_fraction = sp.get("test_fraction", c.split.test_fraction);
    c.split.seed = sp.get<std::uint64_t>("seed", c.split.seed);
    sp.finish();
  }

  const json& noise = r.raw("noise");
  if (!noise.is_array()) throw ConfigError("config: 'noise' must be a list");
  for (std::size_t i = 0; i < noise.size(); ++i) c.noise.push_back(parse_noise(noise[i], i));

  const json& methods = r.raw("methods");
  if (!methods.is_array() || methods.empty()) throw ConfigError("config: 'methods' must be a nonempty list");
  for (std::size_t i = 0; i < methods.size(); ++i) c.methods.push_back(parse_method(methods[i], i));

  const json& inits = r.raw("initializers");
  if (!inits.is_array() || inits.empty()) {
    throw ConfigError("config: 'initializers' must be a nonempty list");
  }
  for (const json& i : inits) {
    if (!i.is_string()) throw ConfigError("config: initializers must be strings");
    c.initializers.push_back(parse_initializer(i.get<std::string>()));
  }

  if (r.has("model")) {
    Reader m(r.raw("model"), "model");
    c.encoder_hidden = m.as<std::vector<std::size_t>>("encoder_hidden");
    m.finish();
  }
  if (r.has("pretrain")) c.pretrain = parse_pretrain(r.raw("pretrain"));
  if (r.has("train")) c.train = parse_train(r.raw("train"), "train");
  c.seeds = r.as<std::vector<std::uint64_t>>("seeds");
  c.output_dir = r.get<std::string>("output_dir", c.output_dir.string());
  r.finish();
  c.validate();
  return c;
}

void ExperimentConfig::validate() const {
  if (seeds.empty()) throw ConfigError("config: 'seeds' must not be empty");
  if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size()) {
    throw ConfigError("config: 'seeds' contains duplicates");
  }
  if (!(split.val_fraction > 0.0) || !(split.test_fraction > 0.0) ||
      !(split.val_fraction + split.test_fraction < 1.0)) {
    throw ConfigError("config: split fractions must be positive with val + test < 1");
  }
  if (encoder_hidden.empty()) throw ConfigError("config: 'model.encoder_hidden' must not be empty");
  for (std::size_t w : encoder_hidden) {
    if (w == 0) throw ConfigError("config: encoder widths must be positive");
  }
  if (dataset.synthetic) {
    dataset.synthetic->validate();
    for (const NoiseSpec& n : noise) n.validate(dataset.synthetic->num_classes);
  }
  train.validate();
  pretrain.train.validate();
  if (!(pretrain.temperature > 0.0)) throw ConfigError("config: 'pretrain.temperature' must be positive");
  if (pretrain.projection_hidden == 0 || pretrain.projection_dim == 0) {
    throw ConfigError("config: projection head sizes must be positive");
  }
  AugmentationSpec{pretrain.jitter_sigma, pretrain.mask_prob, 0}.validate();
  for (const MethodSpec& m : methods) {
    if (m.mwnet && m.hidden == 0) throw ConfigError("config: mwnet 'hidden' must be positive");
  }
}

json ExperimentConfig::to_json() const {
  json ds;
  if (dataset.synthetic) {
    const SyntheticSpec& s = *dataset.synthetic;
    ds["synthetic"] = {{"num_classes", s.num_classes},   {"n_informative", s.n_informative},
                       {"n_nuisance", s.n_nuisance},     {"geometry", geometry_name(s.geometry)},
                       {"n_train", s.n_train},           {"n_val", s.n_val},
                       {"n_test", s.n_test},             {"class_separation", s.class_separation},
                       {"seed", s.seed}};
  } else {
    ds["csv"] = {{"path", dataset.csv_path.string()}, {"label_column", dataset.label_column}};
  }
  json noise_list = json::array();
  for (const NoiseSpec& n : noise) noise_list.push_back(noise_json(n));
  json method_list = json::array();
  for (const MethodSpec& m : methods) method_list.push_back(method_json(m));
  json init_list = json::array();
  for (Initializer i : initializers) init_list.push_back(lab::to_string(i));
  return {{"dataset", ds},
          {"split", {{"val_fraction", split.val_fraction}, {"test_fraction", split.test_fraction}, {"seed", split.seed}}},
          {"noise", noise_list},
          {"methods", method_list},
          {"initializers", init_list},
          {"model", {{"encoder_hidden", encoder_hidden}}},
          {"pretrain", pretrain_json(pretrain)},
          {"train", train_json(train)},
          {"seeds", seeds},
          {"output_dir", output_dir.string()}};
}

std::string ExperimentConfig::hash() const {
  json doc = to_json();
  doc.erase("output_dir");
  const std::string text = doc.dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return parse_config(doc);
}

void apply_seed_override(ExperimentConfig& config, const char* value) {
  if (value == nullptr || *value == '\0') return;
  const std::string text(value);
  std::size_t used = 0;
  unsigned long long seed = 0;
  try {
    seed = std::stoull(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != text.size() || text.front() == '-') {
    throw ConfigError("LAB_SEED must be a non-negative integer, got '" + text + "'");
  }
  config.seeds = {seed};
}

}  // namespace lab
