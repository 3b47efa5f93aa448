#include <CLI11.hpp>

#include <charconv>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "oblivion/checkpoints.hpp"
#include "oblivion/datablocks.hpp"
#include "oblivion/error.hpp"
#include "oblivion/evalharness.hpp"
#include "oblivion/unlearner.hpp"

namespace fs = std::filesystem;
using namespace oblivion;

namespace {

enum Exit { ok = 0, error = 1, verdict_fail = 2, verdict_inconclusive = 3 };

struct ExperimentConfig {
  std::string dataset;
  std::size_t blocks = 10;
  std::uint64_t seed = 0;
  std::vector<Index> hidden{32};
  std::string activation = "relu";
  std::string optimizer = "adam";
  double lr = 1e-2;
  std::size_t epochs = 5;
  std::size_t batch_size = 16;
  double epsilon = 0.1;
  std::size_t min_points = 4;
  bool normalize_delta = true;
  std::string store;
  std::string out;

  fs::path out_dir() const { return out.empty() ? fs::path(store) : fs::path(out); }

  void require_dataset() const {
    if (dataset.empty()) throw Error("--dataset is required");
  }
  void require_store() const {
    if (store.empty()) throw Error("--store is required");
  }

  TrainingSetup setup(const Dataset& ds) const {
    TrainingSetup s;
    s.arch.layer_sizes.push_back(static_cast<Index>(ds.feature_dim()));
    for (Index h : hidden) s.arch.layer_sizes.push_back(h);
    s.arch.layer_sizes.push_back(static_cast<Index>(ds.num_classes()));
    s.arch.activation = parse_activation(activation);
    s.arch.validate();
    s.train.optimizer = parse_optimizer(optimizer);
    s.train.learning_rate = lr;
    s.train.epochs_per_block = epochs;
    s.train.batch_size = batch_size;
    s.train.seed = seed;
    s.train.validate();
    return s;
  }

  StationarityConfig stationarity() const {
    StationarityConfig c;
    c.epsilon = epsilon;
    c.min_points = min_points;
    c.normalize = normalize_delta;
    c.validate();
    return c;
  }

  // Everything that can be checked without touching data or the store.
  void validate() const {
    if (blocks == 0) throw Error("blocks must be at least 1");
    for (Index h : hidden) {
      if (h <= 0) throw Error("hidden layer sizes must be positive");
    }
    parse_activation(activation);
    parse_optimizer(optimizer);
    stationarity();
    TrainConfig t;
    t.learning_rate = lr;
    t.epochs_per_block = epochs;
    t.batch_size = batch_size;
    t.validate();
  }
};

fs::path partition_path(const fs::path& store) { return store / "partition.txt"; }

void write_text(const fs::path& path, const std::string& text) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary);
    if (!f) throw Error("cannot write " + path.string());
    f << text;
    if (!f) throw Error("failed writing " + path.string());
  }
  fs::rename(tmp, path);
}

template <typename Fn>
void write_file(const fs::path& path, Fn&& fn) {
  std::ostringstream s;
  fn(s);
  write_text(path, s.str());
}

// Restricts the dataset to the ids still present in the partition.
Dataset surviving(const Dataset& ds, const BlockPartition& part) {
  std::set<PointId> gone;
  for (const auto& p : ds.points()) {
    if (!part.find(p.id)) gone.insert(p.id);
  }
  return ds.without(gone);
}

std::map<std::string, std::vector<std::string>> read_key_values(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("missing " + path.string() + "; run unlearn first");
  std::map<std::string, std::vector<std::string>> kv;
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find(" = ");
    if (eq != std::string::npos) kv[line.substr(0, eq)].push_back(line.substr(eq + 3));
  }
  return kv;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

int cmd_generate(const ExperimentConfig& cfg, const ClusterConfig& clusters,
                 std::uint64_t sample_seed, const std::string& output) {
  ClusterConfig c = clusters;
  c.centre_seed = cfg.seed;
  const Dataset ds = make_gaussian_clusters(c, sample_seed);
  save_csv(ds, output);
  std::cout << "wrote " << ds.size() << " points to " << output << '\n';
  return ok;
}

int cmd_train(const ExperimentConfig& cfg) {
  cfg.require_dataset();
  cfg.require_store();
  const Dataset ds = load_csv(cfg.dataset);
  const TrainingSetup setup = cfg.setup(ds);
  fs::create_directories(cfg.store);
  StoreLock lock(cfg.store);
  const BlockPartition part = partition(ds, cfg.blocks, cfg.seed);
  auto store = CheckpointStore::create(cfg.store, setup.arch.layout(), cfg.blocks);
  save_partition(part, partition_path(cfg.store));
  const NetModel model = stored_train(ds, part, setup, &store);
  std::cout << "stored " << store.records().size() << " snapshots in " << cfg.store << '\n';
  std::cout << "train_accuracy = " << fmt(accuracy(predict_all(model, ds.feature_matrix()), ds.labels())) << '\n';
  return ok;
}

std::set<PointId> read_ids(const std::vector<PointId>& ids, const std::string& id_file) {
  std::set<PointId> out(ids.begin(), ids.end());
  if (!id_file.empty()) {
    std::ifstream in(id_file);
    if (!in) throw Error("cannot read id file " + id_file);
    std::string token;
    while (in >> token) {
      PointId id = 0;
      const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), id);
      if (ec != std::errc() || ptr != token.data() + token.size()) {
        throw Error("bad id '" + token + "' in " + id_file);
      }
      out.insert(id);
    }
  }
  if (out.empty()) throw Error("no ids given; use --ids or --id-file");
  return out;
}

int cmd_unlearn(const ExperimentConfig& cfg, const std::vector<PointId>& ids,
                const std::string& id_file) {
  cfg.require_dataset();
  cfg.require_store();
  const DeletionRequest req{read_ids(ids, id_file)};
  const Dataset ds = load_csv(cfg.dataset);
  const TrainingSetup setup = cfg.setup(ds);
  const StationarityConfig stationarity = cfg.stationarity();
  StoreLock lock(cfg.store);
  auto store = CheckpointStore::open(cfg.store);
  const BlockPartition part = load_partition(partition_path(cfg.store));
  const RequestUnlearning result = unlearn_request(store, ds, part, req, setup, stationarity);
  save_partition(result.partition, partition_path(cfg.store));

  const fs::path out = cfg.out_dir();
  fs::create_directories(out);
  const bool single = result.reports.size() == 1;
  std::ostringstream report;
  for (std::size_t i = 0; i < result.reports.size(); ++i) {
    const UnlearnReport& r = result.reports[i];
    if (i) report << '\n';
    write_report(r, report);
    const std::string suffix = single ? "" : "_" + std::to_string(r.d);
    write_file(out / ("delta" + suffix + ".csv"), [&](auto& s) { write_delta_csv(r.delta_series, s); });
    write_file(out / ("fit" + suffix + ".csv"), [&](auto& s) { write_fit_csv(r, s); });
  }
  write_text(out / "report.txt", report.str());
  std::cout << report.str();
  return ok;
}

int cmd_evaluate(const ExperimentConfig& cfg, const std::string& test_path) {
  cfg.require_dataset();
  cfg.require_store();
  if (test_path.empty()) throw Error("--test is required");
  const Dataset ds = load_csv(cfg.dataset);
  const Dataset test = load_csv(test_path, ds.num_classes());
  const TrainingSetup setup = cfg.setup(ds);
  const auto store = CheckpointStore::open(cfg.store);
  const BlockPartition part = load_partition(partition_path(cfg.store));
  const fs::path out = cfg.out_dir();
  const auto kv = read_key_values(out / "report.txt");

  std::size_t retrained = 0;
  double retrain_seconds = 0;
  for (const auto& v : kv.at("blocks_retrained")) retrained += std::stoull(v);
  for (const auto& v : kv.at("wall_time_retrain_s")) retrain_seconds += std::stod(v);

  const NetModel ours = load_into(NetModel(setup.arch), store.load_snapshot(store.num_blocks()));
  const auto start = std::chrono::steady_clock::now();
  const NetModel naive = naive_unlearn(surviving(ds, part), part, setup);
  const std::chrono::duration<double> naive_seconds = std::chrono::steady_clock::now() - start;

  const std::vector<int> y_ours = predict_all(ours, test.feature_matrix());
  const std::vector<int> y_naive = predict_all(naive, test.feature_matrix());
  EvalResult r;
  r.accuracy = accuracy(y_ours, test.labels());
  r.consistency = consistency(y_naive, y_ours);
  r.speedup_blocks = static_cast<double>(store.num_blocks()) / static_cast<double>(retrained);
  r.speedup_wall = retrain_seconds > 0 ? naive_seconds.count() / retrain_seconds : 0.0;

  std::ostringstream s;
  s << "accuracy = " << fmt(r.accuracy) << '\n';
  s << "accuracy_naive = " << fmt(accuracy(y_naive, test.labels())) << '\n';
  s << "consistency = " << fmt(r.consistency) << '\n';
  s << "speedup_blocks = " << fmt(r.speedup_blocks) << '\n';
  s << "speedup_wall = " << fmt(r.speedup_wall) << '\n';
  write_text(out / "evaluation.txt", s.str());
  write_file(out / "predictions.csv", [&](auto& f) { write_predictions_csv(test, y_naive, y_ours, f); });
  std::cout << s.str();
  return ok;
}

struct BackdoorOptions {
  std::vector<std::size_t> trigger_indices{0, 1};
  double trigger_value = 6.0;
  int target_label = 0;
  std::size_t poison_count = 50;
  std::string test;
  bool skip_unlearn = false;
  double margin = 0.3;
};

int cmd_verify_backdoor(const ExperimentConfig& cfg, const BackdoorOptions& opt) {
  cfg.require_dataset();
  cfg.require_store();
  if (opt.test.empty()) throw Error("--test is required");
  const Dataset clean = load_csv(cfg.dataset);
  const Dataset test = load_csv(opt.test, clean.num_classes());
  BackdoorSpec spec;
  spec.trigger_mask = opt.trigger_indices;
  spec.trigger_value = opt.trigger_value;
  spec.target_label = opt.target_label;
  spec.count = opt.poison_count;
  spec.validate(clean);
  const StationarityConfig stationarity = cfg.stationarity();

  const PoisonedDataset pd = inject_backdoor(clean, spec, cfg.seed);
  const TrainingSetup setup = cfg.setup(pd.dataset);
  fs::create_directories(cfg.store);
  StoreLock lock(cfg.store);
  BlockPartition part = partition(pd.dataset, cfg.blocks, cfg.seed);
  auto store = CheckpointStore::create(cfg.store, setup.arch.layout(), cfg.blocks);
  save_partition(part, partition_path(cfg.store));
  const NetModel original = stored_train(pd.dataset, part, setup, &store);

  const DeletionRequest req{{pd.poisoned_ids.begin(), pd.poisoned_ids.end()}};
  NetModel unlearned = original;
  if (!opt.skip_unlearn && !req.point_ids.empty()) {
    RequestUnlearning ul = unlearn_request(store, pd.dataset, part, req, setup, stationarity);
    unlearned = std::move(ul.model);
    part = std::move(ul.partition);
    save_partition(part, partition_path(cfg.store));
  } else if (!req.point_ids.empty()) {
    for (const auto& g : locate(part, req)) part = delete_from_block(part, g.block, g.ids);
  }
  const NetModel naive = naive_unlearn(pd.dataset.without(req.point_ids), part, setup);

  const BackdoorVerification v = backdoor_verify(original, unlearned, naive, spec, test, opt.margin);
  const fs::path out = cfg.out_dir();
  fs::create_directories(out);
  write_file(out / "verification.txt", [&](auto& s) { write_verification(v, s); });
  write_verification(v, std::cout);
  switch (v.verdict) {
    case Verdict::pass: return ok;
    case Verdict::fail: return verdict_fail;
    case Verdict::inconclusive: return verdict_inconclusive;
  }
  return error;
}

int cmd_expected_retention(const ExperimentConfig& cfg, const std::vector<double>& costs,
                           const std::vector<std::size_t>& ks, std::size_t trials) {
  std::cout << "per_block_cost,k,expected_fraction,standard_error\n";
  for (double c : costs) {
    for (std::size_t k : ks) {
      const auto r = expected_retained_fraction(cfg.blocks, c, k, trials, cfg.seed);
      std::cout << c << ',' << k << ',' << fmt(r.expected_fraction) << ','
                << fmt(r.standard_error) << '\n';
    }
  }
  return ok;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"oblivion: stored training and fast unlearning of block-trained MLPs"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_config("--config", "", "INI file whose keys match the long option names");

  ExperimentConfig cfg;
  app.add_option("--dataset", cfg.dataset, "CSV of id,label,features...");
  app.add_option("--blocks", cfg.blocks, "number of training blocks B");
  app.add_option("--seed", cfg.seed, "master seed");
  app.add_option("--hidden", cfg.hidden, "hidden layer sizes")->delimiter(',');
  app.add_option("--activation", cfg.activation, "relu or tanh");
  app.add_option("--optimizer", cfg.optimizer, "adam or sgd");
  app.add_option("--lr", cfg.lr, "learning rate");
  app.add_option("--epochs", cfg.epochs, "epochs per block");
  app.add_option("--batch_size", cfg.batch_size, "mini-batch size");
  app.add_option("--epsilon", cfg.epsilon, "derivative threshold of the stopping rule");
  app.add_option("--min_points", cfg.min_points, "shortest residual series that is tested");
  app.add_option("--normalize_delta", cfg.normalize_delta, "divide the series by its first value");
  app.add_option("--store", cfg.store, "snapshot store directory");
  app.add_option("--out", cfg.out, "output directory (default: the store)");

  auto* gen = app.add_subcommand("generate", "write a synthetic Gaussian-cluster dataset");
  ClusterConfig clusters;
  std::uint64_t sample_seed = 1;
  std::string gen_output;
  gen->add_option("--points", clusters.num_points);
  gen->add_option("--classes", clusters.num_classes);
  gen->add_option("--dim", clusters.feature_dim);
  gen->add_option("--separation", clusters.separation);
  gen->add_option("--spread", clusters.spread);
  gen->add_option("--first_id", clusters.first_id);
  gen->add_option("--sample_seed", sample_seed, "seed for the samples; --seed fixes the centres");
  gen->add_option("-o,--output", gen_output)->required();

  auto* train = app.add_subcommand("train", "stored training of all blocks");

  auto* unlearn = app.add_subcommand("unlearn", "delete points and update the store");
  std::vector<PointId> ids;
  std::string id_file;
  unlearn->add_option("--ids", ids, "comma-separated point ids")->delimiter(',');
  unlearn->add_option("--id-file", id_file, "whitespace-separated point ids");

  auto* evaluate = app.add_subcommand("evaluate", "compare the served model with naive retraining");
  std::string test_path;
  evaluate->add_option("--test", test_path, "held-out CSV");

  auto* verify = app.add_subcommand("verify-backdoor", "poison, train, unlearn and check the trigger");
  BackdoorOptions bd;
  verify->add_option("--trigger-indices", bd.trigger_indices)->delimiter(',');
  verify->add_option("--trigger-value", bd.trigger_value);
  verify->add_option("--target-label", bd.target_label);
  verify->add_option("--poison-count", bd.poison_count);
  verify->add_option("--test", bd.test, "clean held-out CSV");
  verify->add_flag("--skip-unlearn", bd.skip_unlearn, "serve the original model (debugging)");
  verify->add_option("--margin", bd.margin, "required succ_original - succ_naive");

  auto* retention = app.add_subcommand("expected-retention", "Monte Carlo retrained-block fraction");
  std::vector<double> costs{0.2};
  std::vector<std::size_t> ks{5};
  std::size_t trials = 100000;
  retention->add_option("--cost", costs, "per-block cost fractions")->delimiter(',');
  retention->add_option("--k", ks, "numbers of deleted blocks")->delimiter(',');
  retention->add_option("--trials", trials);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? ok : error;
  }

  try {
    cfg.validate();
    if (*gen) return cmd_generate(cfg, clusters, sample_seed, gen_output);
    if (*train) return cmd_train(cfg);
    if (*unlearn) return cmd_unlearn(cfg, ids, id_file);
    if (*evaluate) return cmd_evaluate(cfg, test_path);
    if (*verify) return cmd_verify_backdoor(cfg, bd);
    if (*retention) return cmd_expected_retention(cfg, costs, ks, trials);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return error;
  }
  return error;
}
