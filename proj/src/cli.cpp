#include "mkgcn/cli.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "mkgcn/affinity.hpp"
#include "mkgcn/checkpoint.hpp"
#include "mkgcn/error.hpp"
#include "mkgcn/experiments.hpp"
#include "mkgcn/graph_io.hpp"
#include "mkgcn/rng.hpp"
#include "mkgcn/simdata.hpp"
#include "mkgcn/version.hpp"

namespace mkgcn::cli {

namespace {

namespace fs = std::filesystem;

constexpr const char* kEnvPrefix = "MKGCN_";
constexpr const char* kEffectiveConfig = "effective.cfg";

// ---------------------------------------------------------------------------
// Option groups shared between subcommands

struct CommonOptions {
  std::string out;
  std::uint64_t seed = 0;
  int threads = 0;  // 0 = hardware concurrency

  int worker_count() const {
    if (threads > 0) return threads;
    return static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  }
};

struct SimOptions {
  int n_per_class = 300;
  double mean1 = -1.0, mean2 = 1.0;
  double v1 = 0.5, v2 = 0.1;
  double beta = 0.5;
  std::string features = "discriminative";
  std::string weighting = "binary";
};

struct DataOptions {
  std::string edges;
  std::string features;
  bool estimate_lambda = false;
  SimOptions sim;
};

struct ArchOptions {
  std::string orders = "1";
  Index width = 16;
  std::string aggregator = "concat";
  std::string head = "dense";
};

struct TrainOptions {
  int epochs = 200;
  double lr = 0.2;
  std::string optimizer = "gd";
  int early_stop = 0;
  std::string stop_on = "validation";
  double val_fraction = 0.1;
  double weight_decay = 0.0;
  double dropout = 0.0;
  int folds = 10;
};

/// Input paths are stored absolute so the echoed config reruns from anywhere.
const CLI::Validator kAbsolutePath(
    [](std::string& path) {
      if (!path.empty()) path = fs::absolute(path).lexically_normal().string();
      return std::string();
    },
    "PATH");

void add_common(CLI::App& app, CommonOptions& o) {
  app.add_option("--out", o.out, "Output directory")->required();
  app.add_option("--seed", o.seed, "Base random seed");
  app.add_option("--threads", o.threads, "Worker cap (0 = all cores)")->check(CLI::NonNegativeNumber);
}

void add_sim(CLI::App& app, SimOptions& o) {
  app.add_option("--n-per-class", o.n_per_class, "Points per class")->check(CLI::PositiveNumber);
  app.add_option("--mean1", o.mean1, "Class 0 mean on both axes");
  app.add_option("--mean2", o.mean2, "Class 1 mean on both axes");
  app.add_option("--v1", o.v1, "Class 0 variance")->check(CLI::PositiveNumber);
  app.add_option("--v2", o.v2, "Class 1 variance")->check(CLI::PositiveNumber);
  app.add_option("--beta", o.beta, "Euclidean edge threshold")->check(CLI::NonNegativeNumber);
  app.add_option("--feature-mode", o.features, "discriminative | random")
      ->check(CLI::IsMember({"discriminative", "random"}));
  app.add_option("--weighting", o.weighting, "binary | similarity")->check(CLI::IsMember({"binary", "similarity"}));
}

void add_data(CLI::App& app, DataOptions& o) {
  app.add_option("--edges", o.edges, "Edge list (omit to generate simulated data)")->transform(kAbsolutePath);
  app.add_option("--features", o.features, "Features CSV (omit to generate simulated data)")
      ->transform(kAbsolutePath);
  app.add_flag("--estimate-lambda", o.estimate_lambda, "Estimate lambda_max by power iteration instead of using 2");
  add_sim(app, o.sim);
}

void add_arch(CLI::App& app, ArchOptions& o, bool with_orders) {
  if (with_orders) {
    app.add_option("--orders", o.orders, "Branch orders, modules separated by '/', e.g. 1,10 or 3/2");
    app.add_option("--aggregator", o.aggregator, "concat | maxpool")->check(CLI::IsMember({"concat", "maxpool"}));
  }
  app.add_option("--width", o.width, "Output columns per branch")->check(CLI::PositiveNumber);
  app.add_option("--head", o.head, "dense | direct")->check(CLI::IsMember({"dense", "direct"}));
}

void add_train(CLI::App& app, TrainOptions& o) {
  app.add_option("--epochs", o.epochs, "Epoch budget")->check(CLI::PositiveNumber);
  app.add_option("--lr", o.lr, "Learning rate")->check(CLI::PositiveNumber);
  app.add_option("--optimizer", o.optimizer, "gd | adam")->check(CLI::IsMember({"gd", "adam"}));
  app.add_option("--early-stop", o.early_stop, "Early-stopping window (0 = off)")->check(CLI::NonNegativeNumber);
  app.add_option("--stop-on", o.stop_on, "validation | training")->check(CLI::IsMember({"validation", "training"}));
  app.add_option("--val-fraction", o.val_fraction, "Share of training nodes held out for stopping")
      ->check(CLI::Range(0.0, 0.99));
  app.add_option("--weight-decay", o.weight_decay, "L2 penalty on weights")->check(CLI::NonNegativeNumber);
  app.add_option("--dropout", o.dropout, "Dropout on module inputs")->check(CLI::Range(0.0, 0.99));
  app.add_option("--folds", o.folds, "Cross-validation folds")->check(CLI::Range(2, 1000));
}

// ---------------------------------------------------------------------------
// Conversions

SimConfig sim_config(const SimOptions& o, std::uint64_t seed) {
  SimConfig c;
  c.n_per_class = o.n_per_class;
  c.means[0] = o.mean1;
  c.means[1] = o.mean2;
  c.variances[0] = o.v1;
  c.variances[1] = o.v2;
  c.beta = o.beta;
  c.feature_mode = o.features == "random" ? FeatureMode::random : FeatureMode::discriminative;
  c.weighting = o.weighting == "similarity" ? EdgeWeighting::similarity : EdgeWeighting::binary;
  c.seed = seed;
  c.validate();
  return c;
}

std::vector<std::vector<int>> parse_orders(const std::string& text) {
  std::vector<std::vector<int>> modules;
  std::stringstream all(text);
  std::string module;
  while (std::getline(all, module, '/')) {
    std::vector<int> orders;
    std::stringstream ms(module);
    std::string item;
    while (std::getline(ms, item, ',')) {
      item.erase(std::remove_if(item.begin(), item.end(), [](unsigned char ch) { return std::isspace(ch); }),
                 item.end());
      std::size_t used = 0;
      int k = -1;
      try {
        k = std::stoi(item, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (item.empty() || used != item.size() || k < 0)
        throw ConfigError("--orders: '" + item + "' is not a non-negative integer");
      orders.push_back(k);
    }
    if (orders.empty()) throw ConfigError("--orders: empty module in '" + text + "'");
    modules.push_back(std::move(orders));
  }
  if (modules.empty()) throw ConfigError("--orders is empty");
  return modules;
}

Aggregator aggregator_of(const std::string& s) { return s == "maxpool" ? Aggregator::maxpool : Aggregator::concat; }
Head head_of(const std::string& s) { return s == "direct" ? Head::direct : Head::dense; }

TrainConfig train_config(const TrainOptions& o) {
  TrainConfig t;
  t.epochs = o.epochs;
  t.learning_rate = o.lr;
  t.optimizer = o.optimizer == "adam" ? OptimizerKind::adam : OptimizerKind::gradient_descent;
  t.early_stop_window = o.early_stop;
  t.stop_on = o.stop_on == "training" ? StopCriterion::training_loss : StopCriterion::validation_loss;
  t.validation_fraction = o.val_fraction;
  t.weight_decay = o.weight_decay;
  t.dropout = o.dropout;
  t.validate();
  return t;
}

CvConfig cv_config(const TrainOptions& t, const CommonOptions& c) {
  CvConfig cv;
  cv.folds = t.folds;
  cv.seed = c.seed;
  cv.threads = c.worker_count();
  return cv;
}

void require_file(const std::string& path, const char* flag) {
  if (!fs::is_regular_file(path)) throw ConfigError(std::string(flag) + ": no such file '" + path + "'");
}

void warn_if_edgeless(const PopulationGraph& g, std::ostream& err) {
  if (g.edge_count() == 0) err << "warning: the graph has no edges; every node is isolated\n";
}

PopulationGraph load_graph(const DataOptions& d, std::uint64_t seed, std::ostream& err) {
  if (d.edges.empty() != d.features.empty()) throw ConfigError("--edges and --features must be given together");
  if (!d.edges.empty()) {
    require_file(d.edges, "--edges");
    require_file(d.features, "--features");
    auto g = load_dataset(d.edges, d.features);
    warn_if_edgeless(g, err);
    return g;
  }
  const SimConfig c = sim_config(d.sim, seed);
  if (c.beta == 0.0) err << "warning: beta = 0 connects no pairs\n";
  auto g = generate(c);
  warn_if_edgeless(g, err);
  return g;
}

std::vector<std::string> input_paths(const DataOptions& d) {
  std::vector<std::string> paths;
  if (!d.edges.empty()) paths.push_back(d.edges);
  if (!d.features.empty()) paths.push_back(d.features);
  return paths;
}

std::string format_percent(double v) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(2) << v;
  return s.str();
}

// ---------------------------------------------------------------------------
// Output staging: nothing touches the output directory until every result is
// ready, so a failed run leaves no partial files behind.

class Outputs {
 public:
  explicit Outputs(fs::path dir) : dir_(std::move(dir)) {}

  void add(const std::string& name, std::string content) { files_.emplace_back(name, std::move(content)); }

  /// Refuses to overwrite any of the command's inputs.
  void guard(const std::vector<std::string>& inputs, const std::vector<std::string>& names) const {
    for (const auto& name : names) {
      const fs::path target = dir_ / name;
      if (!fs::exists(target)) continue;
      for (const auto& in : inputs)
        if (fs::exists(in) && fs::equivalent(target, in))
          throw ConfigError("output '" + target.string() + "' would overwrite input '" + in + "'");
    }
  }

  void commit() const {
    fs::create_directories(dir_);
    for (const auto& [name, content] : files_) {
      const fs::path target = dir_ / name;
      const fs::path tmp = dir_ / (name + ".tmp");
      {
        std::ofstream f(tmp, std::ios::binary);
        if (!f) throw Error("cannot write '" + tmp.string() + "'");
        f << content;
        if (!f) throw Error("failed writing '" + tmp.string() + "'");
      }
      fs::rename(tmp, target);
    }
  }

 private:
  fs::path dir_;
  std::vector<std::pair<std::string, std::string>> files_;
};

template <class Fn>
std::string to_string_with(Fn&& fn) {
  std::ostringstream s;
  fn(s);
  return s.str();
}

nlohmann::ordered_json header_json(const std::string& command, const CommonOptions& c) {
  nlohmann::ordered_json j;
  j["command"] = command;
  j["version"] = kVersion;
  j["seed"] = c.seed;
  return j;
}

// ---------------------------------------------------------------------------
// Subcommands. Each one registers its options, then returns the action to run
// once parsing succeeded.

using Action = std::function<void(std::ostream& out, std::ostream& err)>;

struct Command {
  std::string name;
  std::string description;
  std::function<Action(CLI::App&)> setup;
};

Action setup_simdata(CLI::App& app) {
  auto c = std::make_shared<CommonOptions>();
  auto s = std::make_shared<SimOptions>();
  add_common(app, *c);
  add_sim(app, *s);
  return [c, s, &app](std::ostream& out, std::ostream& err) {
    const SimConfig cfg = sim_config(*s, c->seed);
    if (cfg.beta == 0.0) err << "warning: beta = 0 connects no pairs; the graph has no edges\n";
    const PopulationGraph g = generate(cfg);
    if (cfg.beta > 0.0) warn_if_edgeless(g, err);
    Outputs files(c->out);
    files.add("graph.edges", to_string_with([&](std::ostream& o) { write_edge_list(o, g.adjacency()); }));
    files.add("features.csv", to_string_with([&](std::ostream& o) { write_features_csv(o, g); }));
    files.add(kEffectiveConfig, app.config_to_str(true, false));
    files.commit();
    out << "nodes " << g.n_nodes() << "\nedges " << g.edge_count() << "\n";
  };
}

Action setup_build_graph(CLI::App& app) {
  struct Options {
    CommonOptions common;
    std::string features, meta;
    std::vector<std::string> betas;
    std::string mode = "mixed";
    std::string element;
    double sigma = 0.0;
    std::string distance = "correlation";
    std::string edge_rule = "match-at-zero";
  };
  auto o = std::make_shared<Options>();
  add_common(app, o->common);
  app.add_option("--features", o->features, "Features CSV (node,f...,label,split)")
      ->required()
      ->transform(kAbsolutePath);
  app.add_option("--meta", o->meta, "Meta-data CSV (node,element...)")->required()->transform(kAbsolutePath);
  app.add_option("--element-beta", o->betas, "Per-element threshold as name=value; repeat per element")
      ->required()
      ->delimiter(',')
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
  app.add_option("--mode", o->mode, "single | mixed | mixed-nosim")
      ->check(CLI::IsMember({"single", "mixed", "mixed-nosim"}));
  app.add_option("--element", o->element, "Element used by --mode single");
  app.add_option("--sigma", o->sigma, "Similarity kernel width (0 = mean pairwise distance)")
      ->check(CLI::NonNegativeNumber);
  app.add_option("--distance", o->distance, "correlation | euclidean")
      ->check(CLI::IsMember({"correlation", "euclidean"}));
  app.add_option("--edge-rule", o->edge_rule, "match-at-zero | strict")
      ->check(CLI::IsMember({"match-at-zero", "strict"}));

  return [o, &app](std::ostream& out, std::ostream& err) {
    require_file(o->features, "--features");
    require_file(o->meta, "--meta");
    Outputs files(o->common.out);
    files.guard({o->features, o->meta}, {"graph.edges", kEffectiveConfig});

    std::map<std::string, double> betas;
    for (const auto& item : o->betas) {
      const auto eq = item.find('=');
      if (eq == std::string::npos || eq == 0)
        throw ConfigError("--element-beta: expected name=value, got '" + item + "'");
      const std::string value = item.substr(eq + 1);
      std::size_t used = 0;
      double beta = -1.0;
      try {
        beta = std::stod(value, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used == 0 || used != value.size() || !(beta >= 0.0))
        throw ConfigError("--element-beta: '" + value + "' is not a non-negative number");
      betas[item.substr(0, eq)] = beta;
    }

    std::ifstream fin(o->features);
    const FeatureTable table = read_features_csv(fin);
    std::ifstream min(o->meta);
    const auto meta = read_meta_csv(min, betas);
    for (const auto& [name, beta] : betas) {
      const bool present = std::any_of(meta.begin(), meta.end(), [&](const MetaElement& m) { return m.name == name; });
      if (!present) throw ConfigError("--element-beta: no meta-data column named '" + name + "'");
    }

    AffinityMode mode = AffinityMode::mixed();
    if (o->mode == "mixed-nosim") mode = AffinityMode::mixed_nosim();
    if (o->mode == "single") {
      if (o->element.empty()) throw ConfigError("--mode single needs --element");
      const auto it = std::find_if(meta.begin(), meta.end(), [&](const MetaElement& m) { return m.name == o->element; });
      if (it == meta.end()) throw ConfigError("--element: no meta-data column named '" + o->element + "'");
      mode = AffinityMode::single(static_cast<std::size_t>(it - meta.begin()));
    } else if (!o->element.empty()) {
      err << "warning: --element is ignored unless --mode single\n";
    }

    const Distance distance = o->distance == "euclidean" ? Distance::euclidean : Distance::correlation;
    const EdgeRule rule = o->edge_rule == "strict" ? EdgeRule::strict : EdgeRule::match_at_zero;
    SimilarityKernel kernel{o->sigma, distance};
    if (kernel.sigma == 0.0 && mode.kind != AffinityMode::Kind::mixed_nosim)
      kernel.sigma = mean_pairwise_distance(table.features, distance);
    const SymmetricMatrix adjacency = build_affinity(meta, table.features, kernel, mode, rule);

    std::size_t edges = 0;
    adjacency.for_each_nonzero([&](Index i, Index j, double) { edges += i < j; });
    if (edges == 0) err << "warning: the affinity graph has no edges\n";

    files.add("graph.edges", to_string_with([&](std::ostream& os) { write_edge_list(os, adjacency); }));
    files.add(kEffectiveConfig, app.config_to_str(true, false));
    files.commit();

    for (const auto& m : meta) {
      const BoolMatrix e = binarize_edges(m, rule);
      out << "element " << m.name << " (beta " << m.beta << "): " << e.count() / 2 << " edges\n";
    }
    if (mode.kind != AffinityMode::Kind::mixed_nosim) out << "sigma " << kernel.sigma << "\n";
    out << "nodes " << adjacency.size() << "\nedges " << edges << "\n";
  };
}

Action setup_train(CLI::App& app) {
  struct Options {
    CommonOptions common;
    DataOptions data;
    ArchOptions arch;
    TrainOptions train;
    std::string name = "model";
    bool save_model = false;
  };
  auto o = std::make_shared<Options>();
  add_common(app, o->common);
  add_data(app, o->data);
  add_arch(app, o->arch, true);
  add_train(app, o->train);
  app.add_option("--name", o->name, "Model name written to results.csv");
  app.add_flag("--save-model", o->save_model,
               "Also train on the dataset's own train/test split and write model.json");

  return [o, &app](std::ostream& out, std::ostream& err) {
    Outputs files(o->common.out);
    files.guard(input_paths(o->data), {"results.csv", "summary.json", "model.json", kEffectiveConfig});
    if (o->name.find_first_of(",\n") != std::string::npos) throw ConfigError("--name may not contain commas");
    const TrainConfig train = train_config(o->train);
    const CvConfig cv = cv_config(o->train, o->common);
    const Dataset data = make_dataset(load_graph(o->data, o->common.seed, err), o->data.estimate_lambda);
    const Architecture arch = make_architecture(data.graph.feature_dim(), data.graph.num_classes(),
                                                parse_orders(o->arch.orders), o->arch.width,
                                                aggregator_of(o->arch.aggregator), head_of(o->arch.head));

    const ExperimentResult result = run_cv(data, arch, train, cv);
    auto summary = header_json("train", o->common);
    summary["model"] = o->name;
    summary["architecture"] = format_architecture(arch);
    summary["result"] = summary_json(result);

    if (o->save_model) {
      TrainMasks masks{data.graph.train_mask(), NodeMask(data.graph.train_mask().size(), false),
                       data.graph.test_mask()};
      if (train.early_stop_window > 0 && train.stop_on == StopCriterion::validation_loss) {
        masks.validation = stratified_subset(data.graph.labels(), masks.train, train.validation_fraction,
                                             derive_seed(o->common.seed, {0x5e1f}));
        for (std::size_t i = 0; i < masks.train.size(); ++i)
          if (masks.validation[i]) masks.train[i] = false;
      }
      const TrainOutcome fit = train_network(data, masks, arch, train, derive_seed(o->common.seed, {0x5e1f, 1}));
      if (fit.failed) throw Error("training on the stored split failed: " + fit.failure);
      files.add("model.json", to_string_with([&](std::ostream& os) { save_checkpoint(os, fit.network); }));
      summary["stored_split"] = {{"test_accuracy", fit.test_accuracy}, {"epochs", fit.epochs_run},
                                 {"best_epoch", fit.best_epoch}};
    }

    files.add("results.csv", to_string_with([&](std::ostream& os) { write_result_csv(os, o->name, result); }));
    files.add("summary.json", summary.dump(2) + "\n");
    files.add(kEffectiveConfig, app.config_to_str(true, false));
    files.commit();

    out << o->name << " " << format_architecture(arch) << "\n"
        << "accuracy " << format_percent(result.mean) << " +- " << format_percent(result.sd) << " over "
        << result.folds.size() - result.failed_folds << " folds";
    if (result.failed_folds > 0) out << " (" << result.failed_folds << " failed)";
    out << "\nmean epochs " << format_percent(result.mean_epochs) << "\nfingerprint " << hex64(result.fingerprint)
        << "\n";
    if (result.failed_folds > 0) err << "warning: " << result.failed_folds << " fold(s) diverged\n";
  };
}

Action setup_sweep(CLI::App& app) {
  struct Options {
    CommonOptions common;
    DataOptions data;
    ArchOptions arch;
    TrainOptions train;
    int k_min = 1, k_max = 6;
    int layers = 2;
  };
  auto o = std::make_shared<Options>();
  add_common(app, o->common);
  add_data(app, o->data);
  add_arch(app, o->arch, false);
  add_train(app, o->train);
  app.add_option("--k-min", o->k_min, "Smallest order")->check(CLI::NonNegativeNumber);
  app.add_option("--k-max", o->k_max, "Largest order")->check(CLI::NonNegativeNumber);
  app.add_option("--layers", o->layers, "2 = k1 x k2 heatmap of two GC-layers, 1 = one-layer order profile")
      ->check(CLI::IsMember({1, 2}));

  return [o, &app](std::ostream& out, std::ostream& err) {
    Outputs files(o->common.out);
    files.guard(input_paths(o->data), {"sweep.csv", "heatmap.csv", "profile.csv", "summary.json", kEffectiveConfig});
    if (o->k_max < o->k_min) throw ConfigError("--k-max must not be below --k-min");
    SweepSpec spec;
    spec.k_min = o->k_min;
    spec.k_max = o->k_max;
    spec.width = o->arch.width;
    spec.head = head_of(o->arch.head);
    spec.train = train_config(o->train);
    spec.cv = cv_config(o->train, o->common);
    const Dataset data = make_dataset(load_graph(o->data, o->common.seed, err), o->data.estimate_lambda);
    auto summary = header_json("sweep", o->common);

    if (o->layers == 1) {
      const OrderProfile profile = order_profile(data, spec);
      summary["profile"] = summary_json(profile);
      files.add("profile.csv", to_string_with([&](std::ostream& os) { write_profile_csv(os, profile); }));
      files.add("summary.json", summary.dump(2) + "\n");
      files.add(kEffectiveConfig, app.config_to_str(true, false));
      files.commit();
      for (std::size_t i = 0; i < profile.orders.size(); ++i)
        out << "k=" << profile.orders[i] << "  " << format_percent(profile.results[i].mean) << " +- "
            << format_percent(profile.results[i].sd) << "\n";
      return;
    }

    const SweepResult sweep = heatmap_sweep(data, spec);
    summary["sweep"] = summary_json(sweep);
    files.add("sweep.csv", to_string_with([&](std::ostream& os) { write_sweep_csv(os, sweep); }));
    files.add("heatmap.csv", to_string_with([&](std::ostream& os) { write_heatmap_csv(os, sweep); }));
    files.add("summary.json", summary.dump(2) + "\n");
    files.add(kEffectiveConfig, app.config_to_str(true, false));
    files.commit();

    const int side = sweep.k_max - sweep.k_min + 1;
    out << "k1\\k2";
    for (int k2 = sweep.k_min; k2 <= sweep.k_max; ++k2) out << std::setw(8) << k2;
    out << "\n";
    for (int r = 0; r < side; ++r) {
      out << std::setw(5) << sweep.k_min + r;
      for (int col = 0; col < side; ++col)
        out << std::setw(8) << format_percent(sweep.cells[static_cast<std::size_t>(r * side + col)].result.mean);
      out << "\n";
    }
    const auto& best = sweep.cells[sweep.best];
    out << "cells " << sweep.cells.size() << "\nbest [" << best.k1 << "," << best.k2 << "] "
        << format_percent(best.result.mean) << "\n";
  };
}

Action setup_compare(CLI::App& app) {
  struct Options {
    CommonOptions common;
    DataOptions data;
    ArchOptions arch;
    TrainOptions train;
    int k1 = 1, k2 = 2, depth = 2;
  };
  auto o = std::make_shared<Options>();
  add_common(app, o->common);
  add_data(app, o->data);
  add_arch(app, o->arch, false);
  add_train(app, o->train);
  app.add_option("--k1", o->k1, "First order")->check(CLI::NonNegativeNumber);
  app.add_option("--k2", o->k2, "Second order")->check(CLI::NonNegativeNumber);
  app.add_option("--depth", o->depth, "Layers in the [k,k] baselines and inception modules")
      ->check(CLI::PositiveNumber);

  return [o, &app](std::ostream& out, std::ostream& err) {
    Outputs files(o->common.out);
    files.guard(input_paths(o->data), {"comparison.csv", "summary.json", kEffectiveConfig});
    CompareSpec spec;
    spec.k1 = o->k1;
    spec.k2 = o->k2;
    spec.depth = o->depth;
    spec.width = o->arch.width;
    spec.head = head_of(o->arch.head);
    spec.train = train_config(o->train);
    spec.cv = cv_config(o->train, o->common);
    const Dataset data = make_dataset(load_graph(o->data, o->common.seed, err), o->data.estimate_lambda);
    const Comparison cmp = compare_models(data, spec);

    auto summary = header_json("compare", o->common);
    summary["comparison"] = summary_json(cmp);
    files.add("comparison.csv", to_string_with([&](std::ostream& os) { write_comparison_csv(os, cmp); }));
    files.add("summary.json", summary.dump(2) + "\n");
    files.add(kEffectiveConfig, app.config_to_str(true, false));
    files.commit();

    out << std::left << std::setw(28) << "model" << std::right << std::setw(9) << "mean" << std::setw(8) << "sd"
        << std::setw(9) << "epochs" << "\n";
    for (const auto& m : cmp.models)
      out << std::left << std::setw(28) << m.name << std::right << std::setw(9) << format_percent(m.result.mean)
          << std::setw(8) << format_percent(m.result.sd) << std::setw(9) << format_percent(m.result.mean_epochs)
          << "\n";
    out << "convergence ratio concat " << format_percent(cmp.convergence_ratio_concat) << " maxpool "
        << format_percent(cmp.convergence_ratio_maxpool) << "\n";
    if (!cmp.masks_consistent) throw InvariantViolation("models did not share fold masks");
  };
}

const std::vector<Command>& commands() {
  static const std::vector<Command> list{
      {"simdata", "Generate a two-cluster Gaussian dataset and its Euclidean-threshold graph", setup_simdata},
      {"build-graph", "Build an affinity graph from features and meta-data", setup_build_graph},
      {"train", "Cross-validate one architecture", setup_train},
      {"sweep", "Sweep polynomial orders (k1 x k2 heatmap or one-layer profile)", setup_sweep},
      {"compare", "Sequential baselines against inception modules under shared folds", setup_compare},
  };
  return list;
}

void print_usage(std::ostream& out) {
  out << "usage: mkgcn <command> [options]\n\ncommands:\n";
  for (const auto& c : commands()) out << "  " << std::left << std::setw(13) << c.name << c.description << "\n";
  out << "\nEvery command accepts --config <file>, --seed, --out and --threads. Options can also\n"
         "come from " << kEnvPrefix << "<OPTION> environment variables (e.g. " << kEnvPrefix
      << "THREADS=2).\nPrecedence: flags, then environment, then config file, then defaults.\n";
}

/// Environment overrides are injected ahead of the real flags, so with
/// take-last semantics a flag still wins and both beat the config file.
std::vector<std::string> env_arguments(const CLI::App& app) {
  std::vector<std::string> extra;
  for (const CLI::Option* opt : app.get_options()) {
    if (opt == app.get_config_ptr() || opt == app.get_help_ptr() || opt->get_lnames().empty()) continue;
    const std::string& name = opt->get_lnames().front();
    std::string env = kEnvPrefix;
    for (char ch : name) env += ch == '-' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
    if (const char* value = std::getenv(env.c_str())) extra.push_back("--" + name + "=" + value);
  }
  return extra;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  if (args.empty() || args[0] == "-h" || args[0] == "--help" || args[0] == "help") {
    print_usage(args.empty() ? err : out);
    return args.empty() ? 2 : 0;
  }
  if (args[0] == "--version" || args[0] == "version") {
    out << "mkgcn " << kVersion << "\n";
    return 0;
  }
  const auto& list = commands();
  const auto it = std::find_if(list.begin(), list.end(), [&](const Command& c) { return c.name == args[0]; });
  if (it == list.end()) {
    err << "mkgcn: unknown command '" << args[0] << "'\n\n";
    print_usage(err);
    return 2;
  }

  CLI::App app{it->description, "mkgcn " + it->name};
  app.option_defaults()->always_capture_default()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.set_config("--config", "", "Read options from a config file (key = value lines)");
  Action action = it->setup(app);

  std::vector<std::string> argv = env_arguments(app);
  argv.insert(argv.end(), args.begin() + 1, args.end());
  std::reverse(argv.begin(), argv.end());
  try {
    app.parse(argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  try {
    action(out, err);
  } catch (const ConfigError& e) {
    err << "mkgcn " << it->name << ": configuration error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "mkgcn " << it->name << ": " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace mkgcn::cli
