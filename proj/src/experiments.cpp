#include "mkgcn/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <sstream>

#include "mkgcn/error.hpp"
#include "mkgcn/parallel.hpp"
#include "mkgcn/rng.hpp"

namespace mkgcn {

// ---------------------------------------------------------------------------
// Early stopping

EarlyStopper::EarlyStopper(int window) : window_(window) {
  if (window < 1) throw ConfigError("early-stopping window must be at least 1");
}

bool EarlyStopper::update(double loss) {
  ++epochs_;
  improved_ = epochs_ == 1 || loss < best_loss_;
  if (improved_) {
    best_loss_ = loss;
    best_epoch_ = epochs_;
  }
  return epochs_ - best_epoch_ >= window_;
}

EarlyStopDecision early_stop(std::span<const double> loss_history, int window) {
  EarlyStopper stopper(window);
  for (double loss : loss_history) {
    if (stopper.update(loss)) return {true, stopper.epochs_seen(), stopper.best_epoch()};
  }
  return {false, stopper.epochs_seen(), stopper.best_epoch()};
}

// ---------------------------------------------------------------------------
// Training

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be at least 1");
  if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  if (early_stop_window < 0) throw ConfigError("early-stopping window must be non-negative");
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0))
    throw ConfigError("validation fraction must lie in [0, 1)");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight decay must be non-negative");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
}

Dataset make_dataset(PopulationGraph graph, bool estimate_lambda, Storage storage) {
  NormalizedLaplacian lap = build_laplacian(graph, storage);
  if (estimate_lambda) lap.lambda_max = estimate_lambda_max(lap);
  ScaledLaplacian scaled = rescale_laplacian(lap);
  return {std::move(graph), std::move(scaled)};
}

namespace {

bool any(const NodeMask& mask) { return std::find(mask.begin(), mask.end(), true) != mask.end(); }

}  // namespace

TrainOutcome train_network(const Dataset& data, const TrainMasks& masks, const Architecture& arch,
                           const TrainConfig& config, std::uint64_t seed) {
  config.validate();
  const auto& labels = data.graph.labels();
  const Matrix& x = data.graph.features();
  if (!any(masks.train)) throw Error("training mask selects no nodes");

  Network net = Network::initialize(arch, derive_seed(seed, {0}));
  Rng dropout_rng(derive_seed(seed, {1}));
  auto optimizer = make_optimizer(config.optimizer, config.learning_rate);

  const bool stopping = config.early_stop_window > 0;
  const bool monitor_validation = config.stop_on == StopCriterion::validation_loss && any(masks.validation);
  std::optional<EarlyStopper> stopper;
  if (stopping) stopper.emplace(config.early_stop_window);
  std::optional<Network> best;

  std::vector<double> train_loss;
  std::vector<double> monitor_loss;
  std::string failure;
  int epochs_run = 0;

  ForwardOptions options;
  options.dropout = config.dropout;
  options.rng = config.dropout > 0.0 ? &dropout_rng : nullptr;

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    ForwardResult fwd = network_forward(net, data.laplacian, x, options);
    LossResult loss = masked_cross_entropy(fwd.scores, labels, masks.train);
    std::vector<Matrix> grads = network_backward(fwd.tape, loss.gradient);
    if (config.weight_decay > 0.0) {
      const auto params = std::as_const(net).parameters();
      for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i].is_bias) continue;
        loss.loss += 0.5 * config.weight_decay * params[i].value->squaredNorm();
        grads[i] += config.weight_decay * *params[i].value;
      }
    }
    if (!std::isfinite(loss.loss)) {
      failure = "non-finite training loss at epoch " + std::to_string(epoch);
      break;
    }
    try {
      optimizer->step(net, grads);
    } catch (const NonFiniteGradient& e) {
      failure = std::string(e.what()) + " at epoch " + std::to_string(epoch);
      break;
    }
    train_loss.push_back(loss.loss);
    epochs_run = epoch;

    if (stopping) {
      const Matrix scores = network_predict(net, data.laplacian, x);
      const double monitored =
          masked_cross_entropy(scores, labels, monitor_validation ? masks.validation : masks.train).loss;
      if (!std::isfinite(monitored)) {
        failure = "non-finite monitored loss at epoch " + std::to_string(epoch);
        break;
      }
      monitor_loss.push_back(monitored);
      const bool stop = stopper->update(monitored);
      if (stopper->improved()) best = net;
      if (stop) break;
    }
  }

  int best_epoch = epochs_run;
  if (stopping && best) {
    net = *best;
    best_epoch = stopper->best_epoch();
  }
  double accuracy = std::numeric_limits<double>::quiet_NaN();
  if (failure.empty() && any(masks.test))
    accuracy = masked_accuracy(network_predict(net, data.laplacian, x), labels, masks.test);

  return TrainOutcome{std::move(net),        accuracy,          epochs_run,
                      best_epoch,            !failure.empty(),  std::move(failure),
                      std::move(train_loss), std::move(monitor_loss)};
}

// ---------------------------------------------------------------------------
// Cross-validation

std::vector<double> ExperimentResult::per_fold_accuracies() const {
  std::vector<double> out;
  for (const auto& f : folds) out.push_back(f.accuracy);
  return out;
}

void ExperimentResult::summarize() {
  double sum = 0.0;
  double epochs = 0.0;
  int ok = 0;
  failed_folds = 0;
  for (const auto& f : folds) {
    if (f.failed) {
      ++failed_folds;
      continue;
    }
    sum += f.accuracy;
    epochs += f.epochs;
    ++ok;
  }
  if (ok == 0) {
    mean = sd = mean_epochs = std::numeric_limits<double>::quiet_NaN();
    return;
  }
  mean = sum / ok;
  mean_epochs = epochs / ok;
  double sq = 0.0;
  for (const auto& f : folds)
    if (!f.failed) sq += (f.accuracy - mean) * (f.accuracy - mean);
  sd = std::sqrt(sq / ok);
}

namespace {

std::uint64_t mask_hash(const TrainMasks& masks) {
  Fnv1a h;
  for (const NodeMask* m : {&masks.train, &masks.validation, &masks.test}) {
    for (bool b : *m) h.update_value(static_cast<unsigned char>(b));
    h.update_value(static_cast<unsigned char>(0xff));
  }
  return h.digest();
}

FoldRecord run_fold(const Dataset& data, const TrainMasks& masks, const Architecture& arch, const TrainConfig& train,
                    const CvConfig& cv, std::uint64_t cell, int fold) {
  FoldRecord record;
  record.fold = fold;
  record.mask_hash = mask_hash(masks);
  const auto seed = derive_seed(cv.seed, {cell, static_cast<std::uint64_t>(fold)});
  TrainOutcome outcome = train_network(data, masks, arch, train, seed);
  record.accuracy = outcome.test_accuracy;
  record.epochs = outcome.epochs_run;
  record.best_epoch = outcome.best_epoch;
  record.failed = outcome.failed;
  record.failure = std::move(outcome.failure);
  return record;
}

constexpr std::uint64_t kFoldStream = 0xf01d;
constexpr std::uint64_t kValidationStream = 0x7a11d;

/// Trains every (job, fold) pair over one thread pool; records land in
/// per-index slots so thread count never changes the output.
std::vector<ExperimentResult> run_jobs(const Dataset& data, const std::vector<Architecture>& archs,
                                       const std::vector<std::uint64_t>& cells, const TrainConfig& train,
                                       const CvConfig& cv) {
  const auto masks = cv_masks(data.graph, train, cv);
  const std::size_t folds = masks.size();
  std::vector<ExperimentResult> results(archs.size());
  for (std::size_t j = 0; j < archs.size(); ++j) results[j].folds.resize(folds);

  parallel_for(archs.size() * folds, cv.threads, [&](std::size_t task) {
    const std::size_t job = task / folds;
    const std::size_t fold = task % folds;
    results[job].folds[fold] = run_fold(data, masks[fold], archs[job], train, cv, cells[job], static_cast<int>(fold));
  });

  for (std::size_t j = 0; j < archs.size(); ++j) {
    results[j].summarize();
    results[j].fingerprint = fingerprint(data, archs[j], train, cv);
  }
  return results;
}

}  // namespace

std::vector<TrainMasks> cv_masks(const PopulationGraph& graph, const TrainConfig& train, const CvConfig& cv) {
  const auto folds = stratified_folds(graph.labels(), cv.folds, derive_seed(cv.seed, {kFoldStream}));
  const bool carve = train.early_stop_window > 0 && train.stop_on == StopCriterion::validation_loss &&
                     train.validation_fraction > 0.0;
  std::vector<TrainMasks> masks;
  for (std::size_t f = 0; f < folds.size(); ++f) {
    TrainMasks m{folds[f].train, NodeMask(folds[f].train.size(), false), folds[f].test};
    if (carve) {
      m.validation = stratified_subset(graph.labels(), m.train, train.validation_fraction,
                                       derive_seed(cv.seed, {kValidationStream, f}));
      for (std::size_t i = 0; i < m.train.size(); ++i)
        if (m.validation[i]) m.train[i] = false;
    }
    masks.push_back(std::move(m));
  }
  return masks;
}

ExperimentResult run_cv(const Dataset& data, const Architecture& arch, const TrainConfig& train, const CvConfig& cv,
                        std::uint64_t cell) {
  return run_jobs(data, {arch}, {cell}, train, cv).front();
}

std::uint64_t fingerprint(const Dataset& data, const Architecture& arch, const TrainConfig& train,
                          const CvConfig& cv) {
  Fnv1a h;
  const auto& g = data.graph;
  h.update_value(g.n_nodes());
  g.adjacency().for_each_nonzero([&](Index i, Index j, double v) {
    h.update_value(i);
    h.update_value(j);
    h.update_value(v);
  });
  h.update(g.features().data(), static_cast<std::size_t>(g.features().size()) * sizeof(double));
  h.update(g.labels().data(), g.labels().size() * sizeof(int));
  data.laplacian.matrix.for_each_nonzero([&](Index, Index, double v) { h.update_value(v); });
  const std::string a = format_architecture(arch);
  h.update(a.data(), a.size());
  h.update_value(train.epochs);
  h.update_value(train.learning_rate);
  h.update_value(static_cast<int>(train.optimizer));
  h.update_value(train.early_stop_window);
  h.update_value(static_cast<int>(train.stop_on));
  h.update_value(train.validation_fraction);
  h.update_value(train.weight_decay);
  h.update_value(train.dropout);
  h.update_value(cv.folds);
  h.update_value(cv.seed);
  return h.digest();
}

// ---------------------------------------------------------------------------
// Sweeps and comparisons

namespace {

void check_range(int k_min, int k_max) {
  if (k_min < 0 || k_max < k_min) throw ConfigError("order range must be non-empty and non-negative");
}

}  // namespace

SweepResult heatmap_sweep(const Dataset& data, const SweepSpec& spec) {
  check_range(spec.k_min, spec.k_max);
  SweepResult sweep;
  sweep.k_min = spec.k_min;
  sweep.k_max = spec.k_max;
  std::vector<Architecture> archs;
  std::vector<std::uint64_t> cells;
  for (int k1 = spec.k_min; k1 <= spec.k_max; ++k1)
    for (int k2 = spec.k_min; k2 <= spec.k_max; ++k2) {
      cells.push_back(archs.size());
      archs.push_back(make_architecture(data.graph.feature_dim(), data.graph.num_classes(), {{k1}, {k2}}, spec.width,
                                        Aggregator::concat, spec.head));
      sweep.cells.push_back({k1, k2, {}});
    }
  auto results = run_jobs(data, archs, cells, spec.train, spec.cv);
  for (std::size_t c = 0; c < results.size(); ++c) {
    sweep.cells[c].result = std::move(results[c]);
    const double mean = sweep.cells[c].result.mean;
    if (mean > sweep.cells[sweep.best].result.mean || std::isnan(sweep.cells[sweep.best].result.mean))
      sweep.best = c;
  }
  return sweep;
}

OrderProfile order_profile(const Dataset& data, const SweepSpec& spec) {
  check_range(spec.k_min, spec.k_max);
  OrderProfile profile;
  std::vector<Architecture> archs;
  std::vector<std::uint64_t> cells;
  for (int k = spec.k_min; k <= spec.k_max; ++k) {
    profile.orders.push_back(k);
    cells.push_back(archs.size());
    archs.push_back(make_architecture(data.graph.feature_dim(), data.graph.num_classes(), {{k}}, spec.width,
                                      Aggregator::concat, spec.head));
  }
  profile.results = run_jobs(data, archs, cells, spec.train, spec.cv);
  return profile;
}

Comparison compare_models(const Dataset& data, const CompareSpec& spec) {
  if (spec.k1 < 0 || spec.k2 < 0) throw ConfigError("k1 and k2 must be non-negative");
  if (spec.depth < 1) throw ConfigError("comparison depth must be at least 1");
  const Index d = data.graph.feature_dim();
  const int c = data.graph.num_classes();
  const auto repeat = [&](std::vector<int> orders) {
    return std::vector<std::vector<int>>(static_cast<std::size_t>(spec.depth), std::move(orders));
  };
  const auto list = [](const std::vector<int>& ks) {
    std::string s = "[";
    for (std::size_t i = 0; i < ks.size(); ++i) s += (i ? "," : "") + std::to_string(ks[i]);
    return s + "]";
  };

  Comparison cmp;
  auto add = [&](std::string name, const std::vector<std::vector<int>>& orders, Aggregator agg) {
    cmp.models.push_back({std::move(name), make_architecture(d, c, orders, spec.width, agg, spec.head), {}});
  };
  add("sequential" + list({spec.k1, spec.k2}), {{spec.k1}, {spec.k2}}, Aggregator::concat);
  add("sequential" + list(std::vector<int>(spec.depth, spec.k1)), repeat({spec.k1}), Aggregator::concat);
  add("sequential" + list(std::vector<int>(spec.depth, spec.k2)), repeat({spec.k2}), Aggregator::concat);
  add("inception-concat" + list({spec.k1, spec.k2}), repeat({spec.k1, spec.k2}), Aggregator::concat);
  add("inception-maxpool" + list({spec.k1, spec.k2}), repeat({spec.k1, spec.k2}), Aggregator::maxpool);

  std::vector<Architecture> archs;
  for (const auto& m : cmp.models) archs.push_back(m.architecture);
  auto results = run_jobs(data, archs, std::vector<std::uint64_t>(archs.size(), 0), spec.train, spec.cv);
  for (std::size_t i = 0; i < results.size(); ++i) cmp.models[i].result = std::move(results[i]);

  cmp.masks_consistent = true;
  for (const auto& m : cmp.models)
    for (std::size_t f = 0; f < m.result.folds.size(); ++f)
      cmp.masks_consistent &= m.result.folds[f].mask_hash == cmp.models.front().result.folds[f].mask_hash;

  const double baseline_epochs = cmp.models[0].result.mean_epochs;
  cmp.convergence_ratio_concat = baseline_epochs / cmp.models[3].result.mean_epochs;
  cmp.convergence_ratio_maxpool = baseline_epochs / cmp.models[4].result.mean_epochs;
  return cmp;
}

// ---------------------------------------------------------------------------
// Output

std::string hex64(std::uint64_t value) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(value));
  return buf;
}

std::string format_architecture(const Architecture& arch) {
  std::ostringstream out;
  out << "in=" << arch.input_dim << ";classes=" << arch.num_classes
      << ";head=" << (arch.head == Head::dense ? "dense" : "direct");
  for (const auto& m : arch.modules) {
    out << ";{";
    for (std::size_t i = 0; i < m.orders.size(); ++i) out << (i ? "," : "") << m.orders[i];
    out << "}x" << m.width << (m.aggregator == Aggregator::concat ? ":concat" : ":maxpool")
        << (m.activation == Activation::relu ? ":relu" : ":none");
  }
  return out.str();
}

namespace {

std::string fmt_accuracy(const FoldRecord& f) {
  if (f.failed) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", f.accuracy);
  return buf;
}

std::string fmt_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

nlohmann::ordered_json number_or_null(double v) {
  return std::isfinite(v) ? nlohmann::ordered_json(v) : nlohmann::ordered_json(nullptr);
}

}  // namespace

void write_sweep_csv(std::ostream& out, const SweepResult& sweep) {
  out << "k1,k2,fold,accuracy,epochs\n";
  for (const auto& cell : sweep.cells)
    for (const auto& f : cell.result.folds)
      out << cell.k1 << ',' << cell.k2 << ',' << f.fold << ',' << fmt_accuracy(f) << ',' << f.epochs << '\n';
}

void write_heatmap_csv(std::ostream& out, const SweepResult& sweep) {
  out << "k1,k2,mean,sd,failed\n";
  for (const auto& cell : sweep.cells)
    out << cell.k1 << ',' << cell.k2 << ',' << fmt_number(cell.result.mean) << ',' << fmt_number(cell.result.sd)
        << ',' << cell.result.failed_folds << '\n';
}

void write_profile_csv(std::ostream& out, const OrderProfile& profile) {
  out << "k,fold,accuracy,epochs\n";
  for (std::size_t i = 0; i < profile.orders.size(); ++i)
    for (const auto& f : profile.results[i].folds)
      out << profile.orders[i] << ',' << f.fold << ',' << fmt_accuracy(f) << ',' << f.epochs << '\n';
}

void write_result_csv(std::ostream& out, const std::string& model, const ExperimentResult& result, bool header) {
  if (header) out << "model,fold,accuracy,epochs\n";
  for (const auto& f : result.folds) out << model << ',' << f.fold << ',' << fmt_accuracy(f) << ',' << f.epochs << '\n';
}

void write_comparison_csv(std::ostream& out, const Comparison& comparison) {
  out << "model,fold,accuracy,epochs\n";
  for (const auto& m : comparison.models) write_result_csv(out, m.name, m.result, false);
}

nlohmann::ordered_json summary_json(const ExperimentResult& result) {
  nlohmann::ordered_json j;
  j["mean"] = number_or_null(result.mean);
  j["sd"] = number_or_null(result.sd);
  j["mean_epochs"] = number_or_null(result.mean_epochs);
  j["folds"] = result.folds.size();
  j["failed_folds"] = result.failed_folds;
  j["fingerprint"] = hex64(result.fingerprint);
  auto& per_fold = j["per_fold"] = nlohmann::ordered_json::array();
  for (const auto& f : result.folds) {
    nlohmann::ordered_json row;
    row["fold"] = f.fold;
    row["accuracy"] = f.failed ? nlohmann::ordered_json(nullptr) : nlohmann::ordered_json(f.accuracy);
    row["epochs"] = f.epochs;
    row["best_epoch"] = f.best_epoch;
    if (f.failed) row["failure"] = f.failure;
    per_fold.push_back(std::move(row));
  }
  return j;
}

nlohmann::ordered_json summary_json(const SweepResult& sweep) {
  nlohmann::ordered_json j;
  j["k_min"] = sweep.k_min;
  j["k_max"] = sweep.k_max;
  j["cells"] = sweep.cells.size();
  if (!sweep.cells.empty()) {
    const auto& best = sweep.cells[sweep.best];
    j["best"] = {{"k1", best.k1}, {"k2", best.k2}, {"mean", number_or_null(best.result.mean)},
                 {"sd", number_or_null(best.result.sd)}};
    j["fingerprint"] = hex64(best.result.fingerprint);
  }
  auto& grid = j["grid"] = nlohmann::ordered_json::array();
  for (const auto& c : sweep.cells)
    grid.push_back({{"k1", c.k1}, {"k2", c.k2}, {"mean", number_or_null(c.result.mean)},
                    {"sd", number_or_null(c.result.sd)}, {"failed_folds", c.result.failed_folds}});
  return j;
}

nlohmann::ordered_json summary_json(const OrderProfile& profile) {
  nlohmann::ordered_json j = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < profile.orders.size(); ++i) {
    const auto& r = profile.results[i];
    j.push_back({{"k", profile.orders[i]}, {"mean", number_or_null(r.mean)}, {"sd", number_or_null(r.sd)},
                 {"failed_folds", r.failed_folds}, {"fingerprint", hex64(r.fingerprint)}});
  }
  return j;
}

nlohmann::ordered_json summary_json(const Comparison& comparison) {
  nlohmann::ordered_json j;
  auto& models = j["models"] = nlohmann::ordered_json::array();
  for (const auto& m : comparison.models)
    models.push_back({{"model", m.name},
                      {"architecture", format_architecture(m.architecture)},
                      {"mean", number_or_null(m.result.mean)},
                      {"sd", number_or_null(m.result.sd)},
                      {"mean_epochs", number_or_null(m.result.mean_epochs)},
                      {"failed_folds", m.result.failed_folds},
                      {"fingerprint", hex64(m.result.fingerprint)}});
  j["convergence_ratio_concat"] = number_or_null(comparison.convergence_ratio_concat);
  j["convergence_ratio_maxpool"] = number_or_null(comparison.convergence_ratio_maxpool);
  j["masks_consistent"] = comparison.masks_consistent;
  return j;
}

}  // namespace mkgcn
