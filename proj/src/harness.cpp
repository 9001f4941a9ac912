#include "lab/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <future>
#include <map>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>
#include <tuple>

#include "lab/checkpoint.hpp"
#include "lab/error.hpp"
#include "lab/mwnet.hpp"
#include "lab/noise.hpp"
#include "lab/random.hpp"

namespace lab {

using nlohmann::json;

namespace {

// Stream tags: each random quantity of a run gets its own seed.
constexpr std::uint64_t kEncoderInit = 0xE1;
constexpr std::uint64_t kProjectionInit = 0x9A;
constexpr std::uint64_t kAugment = 0xA6;
constexpr std::uint64_t kPretrainOrder = 0x5EED;
constexpr std::uint64_t kNoise = 0x401;
constexpr std::uint64_t kTrainOrder = 0x7EA;
constexpr std::uint64_t kWeightNet = 0x3E7;

std::string format_number(const char* fmt, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, fmt, v);
  return buf;
}

std::string rate_str(double r) { return format_number("%g", r); }

std::string file_safe(std::string s) {
  for (char& c : s) {
    if (c == '(' || c == ')' || c == '=' || c == '/' || c == ' ') c = '_';
  }
  return s;
}

}  // namespace

bool canonical_less(const RunResult& a, const RunResult& b) {
  return std::tie(a.noise_rate, a.noise_kind, a.method, a.initializer, a.seed) <
         std::tie(b.noise_rate, b.noise_kind, b.method, b.initializer, b.seed);
}

DatasetSplits load_dataset(const ExperimentConfig& config) {
  if (config.dataset.synthetic) return generate_synthetic_dataset(*config.dataset.synthetic);

  LabeledDataset all = ingest_csv(config.dataset.csv_path, config.dataset.label_column);
  all.validate();
  const std::size_t n = all.size();
  const auto n_val = static_cast<std::size_t>(std::llround(config.split.val_fraction * static_cast<double>(n)));
  const auto n_test = static_cast<std::size_t>(std::llround(config.split.test_fraction * static_cast<double>(n)));
  if (n_val == 0 || n_test == 0 || n_val + n_test >= n) {
    throw ConfigError("split: " + std::to_string(n) + " rows are too few for the requested fractions");
  }
  Rng rng(derive_seed(config.split.seed, {0x5917}));
  const auto order = rng.permutation(n);
  const std::span<const std::size_t> idx(order);
  DatasetSplits out;
  out.val = all.subset(idx.first(n_val));
  out.test = all.subset(idx.subspan(n_val, n_test));
  out.train = all.subset(idx.subspan(n_val + n_test));
  for (const NoiseSpec& ns : config.noise) ns.validate(all.num_classes);
  return out;
}

EncoderParams random_encoder(const ExperimentConfig& config, std::size_t input_dim, std::uint64_t seed) {
  std::vector<std::size_t> sizes{input_dim};
  sizes.insert(sizes.end(), config.encoder_hidden.begin(), config.encoder_hidden.end());
  return init_encoder(sizes, derive_seed(seed, {kEncoderInit}));
}

EncoderParams pretrained_encoder(const ExperimentConfig& config, const Array& train_features,
                                 std::uint64_t seed) {
  const PretrainSpec& p = config.pretrain;
  const EncoderParams start = random_encoder(config, train_features.dim(1), seed);
  const ProjectionHeadParams head = init_projection_head(start.output_dim(), p.projection_hidden,
                                                         p.projection_dim, derive_seed(seed, {kProjectionInit}));
  TrainConfig tc = p.train;
  tc.seed = derive_seed(seed, {kPretrainOrder});
  const AugmentationSpec aug{p.jitter_sigma, p.mask_prob, derive_seed(seed, {kAugment})};
  return pretrain_contrastive(train_features, start, head, aug, p.temperature, tc).encoder;
}

json history_json(const History& h) {
  const auto num = [](double v) -> json { return std::isfinite(v) ? json(v) : json(nullptr); };
  json epochs = json::array();
  for (const EpochRecord& e : h.epochs) {
    epochs.push_back({{"epoch", e.epoch},
                      {"train_loss", num(e.train_loss)},
                      {"val_acc", num(e.val_acc)},
                      {"test_acc", num(e.test_acc)},
                      {"mean_weight_flipped", num(e.mean_weight_flipped)},
                      {"mean_weight_clean", num(e.mean_weight_clean)}});
  }
  return {{"initial_train_loss", num(h.initial_train_loss)},
          {"initial_cce", num(h.initial_cce)},
          {"best_val_epoch", h.best_val_epoch},
          {"best_val_test_acc", num(h.best_val_test_acc)},
          {"epochs", epochs}};
}

namespace {

struct Cell {
  std::size_t noise;
  std::size_t method;
  Initializer init;
  std::uint64_t seed;
};

/// One pretraining per seed, shared by every cell that asks for it.
class PretrainCache {
 public:
  PretrainCache(const ExperimentConfig& config, const Array& features) : config_(config), features_(features) {}

  EncoderParams get(std::uint64_t seed) {
    std::shared_future<EncoderParams> fut;
    std::promise<EncoderParams> promise;
    bool owner = false;
    {
      std::lock_guard lock(mu_);
      auto it = entries_.find(seed);
      if (it == entries_.end()) {
        fut = promise.get_future().share();
        entries_.emplace(seed, fut);
        owner = true;
      } else {
        fut = it->second;
      }
    }
    if (owner) {
      try {
        promise.set_value(pretrained_encoder(config_, features_, seed));
      } catch (...) {
        promise.set_exception(std::current_exception());
      }
    }
    return fut.get();
  }

  std::map<std::uint64_t, EncoderParams> finished() {
    std::map<std::uint64_t, EncoderParams> out;
    std::lock_guard lock(mu_);
    for (auto& [seed, fut] : entries_) {
      try {
        out.emplace(seed, fut.get());
      } catch (...) {
      }
    }
    return out;
  }

 private:
  const ExperimentConfig& config_;
  const Array& features_;
  std::mutex mu_;
  std::map<std::uint64_t, std::shared_future<EncoderParams>> entries_;
};

struct CellOutcome {
  RunResult row;
  History history;
  std::string method_detail;
};

CellOutcome run_cell(const ExperimentConfig& config, const DatasetSplits& data, const Cell& cell,
                     PretrainCache& cache, const std::string& config_hash) {
  const NoiseSpec& noise = config.noise[cell.noise];
  const MethodSpec& method = config.methods[cell.method];
  CellOutcome out;
  RunResult& row = out.row;
  row.method = method.label();
  row.initializer = to_string(cell.init);
  row.noise_kind = to_string(noise.kind);
  row.noise_rate = noise.rate;
  row.seed = cell.seed;
  row.epochs = config.train.epochs;
  row.run_id = config_hash + "-" + row.noise_kind + "-" + rate_str(noise.rate) + "-" + row.method + "-" +
               row.initializer + "-s" + std::to_string(cell.seed);

  const std::size_t k = data.train.num_classes;
  NoiseSpec ns = noise;
  ns.seed = derive_seed(cell.seed, {kNoise, noise.seed});
  const Corruption corrupted = corrupt_labels(data.train.labels, ns, k);
  LabeledDataset train = data.train;
  train.labels = corrupted.labels;
  train.flipped = corrupted.flipped;
  const std::vector<int> val_before = data.val.labels;

  const EncoderParams encoder = cell.init == Initializer::contrastive
                                    ? cache.get(cell.seed)
                                    : random_encoder(config, train.dim(), cell.seed);
  const ClassifierParams clf = init_classifier_from_encoder(encoder, k);

  TrainConfig tc = config.train;
  tc.seed = derive_seed(cell.seed, {kTrainOrder});
  if (method.mwnet) {
    MWNetConfig mc;
    mc.train = tc;
    mc.meta_lr = method.meta_lr;
    mc.hidden = method.hidden;
    mc.val_batch_size = method.val_batch_size;
    mc.wnet_seed = derive_seed(cell.seed, {kWeightNet});
    const MWNetResult r = train_mwnet(train, data.val, data.test, clf, mc);
    out.history = r.history;
    out.method_detail = "mwnet(meta_lr=" + format_number("%g", mc.meta_lr) + ")";
  } else {
    const LossSpec loss = method.loss_for_rate(noise.rate);
    const ErmResult r = train_erm(train, data.val, data.test, clf, loss, tc);
    out.history = r.history;
    out.method_detail = loss.name();
  }

  if (data.val.labels != val_before) throw Error("validation labels changed during the run");
  const double ln_k = std::log(static_cast<double>(k));
  if (!(std::abs(out.history.initial_cce - ln_k) <= 1e-6)) {
    throw Error("zero-head contract violated: initial CCE " + format_number("%.12g", out.history.initial_cce) +
                ", expected ln K = " + format_number("%.12g", ln_k));
  }
  row.final_test_acc = out.history.final_test_acc();
  row.best_val_test_acc = out.history.best_val_test_acc;
  return out;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!out) throw Error("short write to " + path.string());
}

}  // namespace

std::vector<RunResult> run_experiment(const ExperimentConfig& config, const RunOptions& options) {
  config.validate();
  const DatasetSplits data = load_dataset(config);
  data.train.validate();
  data.val.validate();
  data.test.validate();
  for (const NoiseSpec& ns : config.noise) ns.validate(data.train.num_classes);

  const std::string hash = config.hash();
  std::vector<Cell> cells;
  for (std::size_t n = 0; n < config.noise.size(); ++n)
    for (std::size_t m = 0; m < config.methods.size(); ++m)
      for (Initializer init : config.initializers)
        for (std::uint64_t seed : config.seeds) cells.push_back({n, m, init, seed});

  const std::filesystem::path dir = config.output_dir;
  if (options.write_files) {
    std::filesystem::create_directories(dir / "histories");
    write_text(dir / "config.json", config.to_json().dump(2) + "\n");
    write_text(dir / "results.partial.csv", std::string(kResultsHeader) + "\n");
  }

  PretrainCache cache(config, data.train.x);
  std::vector<RunResult> rows(cells.size());
  std::mutex io_mu;
  std::atomic<std::size_t> next{0};

  const auto worker = [&] {
    for (std::size_t i = next++; i < cells.size(); i = next++) {
      const auto start = std::chrono::steady_clock::now();
      CellOutcome outcome;
      json record;
      try {
        outcome = run_cell(config, data, cells[i], cache, hash);
        record = {{"run_id", outcome.row.run_id},
                  {"method_detail", outcome.method_detail},
                  {"history", history_json(outcome.history)}};
      } catch (const std::exception& e) {
        const Cell& c = cells[i];
        outcome.row.method = config.methods[c.method].label();
        outcome.row.initializer = to_string(c.init);
        outcome.row.noise_kind = to_string(config.noise[c.noise].kind);
        outcome.row.noise_rate = config.noise[c.noise].rate;
        outcome.row.seed = c.seed;
        outcome.row.epochs = config.train.epochs;
        outcome.row.run_id = hash + "-" + outcome.row.noise_kind + "-" + rate_str(outcome.row.noise_rate) +
                             "-" + outcome.row.method + "-" + outcome.row.initializer + "-s" +
                             std::to_string(c.seed);
        outcome.row.error = e.what();
        outcome.row.final_test_acc.reset();
        outcome.row.best_val_test_acc.reset();
      }
      if (options.record_wall_time) {
        outcome.row.wall_time_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      }
      std::lock_guard lock(io_mu);
      rows[i] = outcome.row;
      if (options.write_files) {
        std::ofstream(dir / "results.partial.csv", std::ios::app) << csv_row(outcome.row) << "\n";
        if (outcome.row.ok()) {
          write_text(dir / "histories" / (file_safe(outcome.row.run_id) + ".json"), record.dump(2) + "\n");
        }
      }
      if (options.log) {
        *options.log << "[" << (i + 1) << "/" << cells.size() << "] " << outcome.row.run_id << " "
                     << (outcome.row.ok() ? "test_acc=" + format_number("%.4f", *outcome.row.final_test_acc)
                                          : "FAILED: " + outcome.row.error)
                     << std::endl;
      }
    }
  };

  const std::size_t n_threads = std::max<std::size_t>(1, std::min(options.jobs, cells.size()));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }

  std::sort(rows.begin(), rows.end(), canonical_less);
  if (options.write_files) {
    write_text(dir / "results.csv", results_csv(rows));
    std::string failures;
    for (const RunResult& r : rows) {
      if (!r.ok()) failures += json{{"run_id", r.run_id}, {"error", r.error}}.dump() + "\n";
    }
    write_text(dir / "failures.jsonl", failures);
    for (const auto& [seed, enc] : cache.finished()) {
      std::filesystem::create_directories(dir / "pretrained");
      write_checkpoint(dir / "pretrained" / ("encoder-s" + std::to_string(seed) + ".json"), named_tensors(enc),
                       {{"seed", seed}, {"config_hash", hash}});
    }
    std::filesystem::remove(dir / "results.partial.csv");
  }
  return rows;
}

// Results files -------------------------------------------------------------------

std::string csv_row(const RunResult& r) {
  const auto acc = [](const std::optional<double>& v) { return v ? format_number("%.6f", *v) : std::string(); };
  std::ostringstream out;
  out << r.run_id << ',' << r.method << ',' << r.initializer << ',' << r.noise_kind << ','
      << rate_str(r.noise_rate) << ',' << r.seed << ',' << acc(r.final_test_acc) << ','
      << acc(r.best_val_test_acc) << ',' << r.epochs << ',' << format_number("%.3f", r.wall_time_seconds);
  return out.str();
}

std::string results_csv(std::span<const RunResult> results) {
  std::string out = std::string(kResultsHeader) + "\n";
  for (const RunResult& r : results) out += csv_row(r) + "\n";
  return out;
}

std::vector<RunResult> parse_results_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kResultsHeader) {
    throw ConfigError("results: missing or unexpected header");
  }
  std::vector<RunResult> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (!line.empty() && line.back() == ',') f.emplace_back();
    if (f.size() != 10) throw ConfigError("results:" + std::to_string(line_no) + ": expected 10 fields");
    try {
      RunResult r;
      r.run_id = f[0];
      r.method = f[1];
      r.initializer = f[2];
      r.noise_kind = f[3];
      r.noise_rate = std::stod(f[4]);
      r.seed = std::stoull(f[5]);
      if (!f[6].empty()) r.final_test_acc = std::stod(f[6]);
      if (!f[7].empty()) r.best_val_test_acc = std::stod(f[7]);
      r.epochs = std::stoul(f[8]);
      r.wall_time_seconds = std::stod(f[9]);
      if (!r.final_test_acc) r.error = "failed";
      out.push_back(std::move(r));
    } catch (const std::exception&) {
      throw ConfigError("results:" + std::to_string(line_no) + ": malformed number");
    }
  }
  return out;
}

std::vector<RunResult> read_results_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open results file " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_results_csv(text.str());
}

std::string emit_table(std::span<const RunResult> results, TableFormat format, bool use_best_val) {
  if (results.empty()) throw ConfigError("emit_table: no results");
  if (format == TableFormat::csv) {
    std::vector<RunResult> sorted(results.begin(), results.end());
    std::sort(sorted.begin(), sorted.end(), canonical_less);
    return results_csv(sorted);
  }

  using Column = std::pair<double, std::string>;  // (rate, kind)
  using Row = std::pair<std::string, std::string>;  // (method, initializer)
  std::map<Column, int> columns;
  std::map<Row, std::map<Column, std::vector<double>>> cells;
  for (const RunResult& r : results) {
    const Column col{r.noise_rate, r.noise_kind};
    columns[col];
    auto& bucket = cells[{r.method, r.initializer}][col];
    const auto& v = use_best_val ? r.best_val_test_acc : r.final_test_acc;
    if (r.ok() && v) bucket.push_back(*v);
  }

  std::ostringstream out;
  out << "| Method | Initializer |";
  for (const auto& [col, unused] : columns) out << ' ' << col.second << ' ' << rate_str(col.first) << " |";
  out << "\n|---|---|";
  for (std::size_t i = 0; i < columns.size(); ++i) out << "---:|";
  out << '\n';
  for (const auto& [row, by_col] : cells) {
    out << "| " << row.first << " | " << row.second << " |";
    for (const auto& [col, unused] : columns) {
      const auto it = by_col.find(col);
      if (it == by_col.end() || it->second.empty()) {
        out << " n/a |";
        continue;
      }
      const auto& v = it->second;
      double mean = 0.0;
      for (double x : v) mean += x;
      mean /= static_cast<double>(v.size());
      double var = 0.0;
      for (double x : v) var += (x - mean) * (x - mean);
      const double sd = std::sqrt(var / static_cast<double>(v.size()));
      out << ' ' << format_number("%.3f", mean) << " ± " << format_number("%.3f", sd) << " |";
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace lab
