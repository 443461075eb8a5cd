#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "mkgcn/graph.hpp"
#include "mkgcn/nn.hpp"
#include "mkgcn/optim.hpp"
#include "mkgcn/simdata.hpp"

namespace mkgcn {

// ---------------------------------------------------------------------------
// Early stopping

/// Stops once the monitored loss has gone `window` consecutive epochs without
/// a strict improvement on the best value so far. Epochs are 1-based.
class EarlyStopper {
 public:
  explicit EarlyStopper(int window);

  /// Records the next epoch's loss. Returns true when training should stop.
  bool update(double loss);

  int epochs_seen() const noexcept { return epochs_; }
  int best_epoch() const noexcept { return best_epoch_; }
  double best_loss() const noexcept { return best_loss_; }
  /// Whether the last update set a new best.
  bool improved() const noexcept { return improved_; }

 private:
  int window_;
  int epochs_ = 0;
  int best_epoch_ = 0;
  double best_loss_ = 0.0;
  bool improved_ = false;
};

struct EarlyStopDecision {
  bool stop = false;
  int epochs_used = 0;  // epoch at which training stops (or history length)
  int best_epoch = 0;   // epoch whose weights are restored
};

/// Replays a loss history through EarlyStopper.
EarlyStopDecision early_stop(std::span<const double> loss_history, int window);

// ---------------------------------------------------------------------------
// Training

enum class StopCriterion { validation_loss, training_loss };

struct TrainConfig {
  int epochs = 200;
  double learning_rate = 0.2;
  OptimizerKind optimizer = OptimizerKind::gradient_descent;
  int early_stop_window = 0;  // 0 trains for the full epoch budget
  StopCriterion stop_on = StopCriterion::validation_loss;
  double validation_fraction = 0.1;  // carved from training nodes when stopping on validation loss
  double weight_decay = 0.0;         // L2 on non-bias parameters
  double dropout = 0.0;

  void validate() const;
};

/// A graph with its Chebyshev-ready Laplacian, computed once and shared by
/// every fold and cell.
struct Dataset {
  PopulationGraph graph;
  ScaledLaplacian laplacian;
};

/// lambda_max fixed at 2 unless estimate_lambda is set.
Dataset make_dataset(PopulationGraph graph, bool estimate_lambda = false, Storage storage = Storage::automatic);

struct TrainMasks {
  NodeMask train;
  NodeMask validation;  // may be all-false
  NodeMask test;
};

struct TrainOutcome {
  Network network;
  double test_accuracy = 0.0;
  int epochs_run = 0;
  int best_epoch = 0;
  bool failed = false;
  std::string failure;
  std::vector<double> train_loss;
  std::vector<double> monitor_loss;  // loss seen by the stopping rule
};

/// Full-graph (transductive) training: every forward pass sees all nodes; the
/// loss covers train-mask nodes only. With early stopping the best-epoch
/// weights are restored before evaluating the test mask.
TrainOutcome train_network(const Dataset& data, const TrainMasks& masks, const Architecture& arch,
                           const TrainConfig& config, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Cross-validation

struct CvConfig {
  int folds = 10;
  std::uint64_t seed = 0;
  int threads = 1;
};

struct FoldRecord {
  int fold = 0;
  double accuracy = 0.0;  // percent
  int epochs = 0;
  int best_epoch = 0;
  bool failed = false;
  std::string failure;
  std::uint64_t mask_hash = 0;  // hash of (train, validation, test) masks
};

struct ExperimentResult {
  std::vector<FoldRecord> folds;
  double mean = 0.0;  // over non-failed folds, percent
  double sd = 0.0;    // population SD over non-failed folds
  double mean_epochs = 0.0;
  int failed_folds = 0;
  std::uint64_t fingerprint = 0;

  std::vector<double> per_fold_accuracies() const;
  /// Recomputes mean, sd, mean_epochs and failed_folds from the fold list.
  void summarize();
};

/// Fold masks shared by every model trained under `cv` on `graph`.
std::vector<TrainMasks> cv_masks(const PopulationGraph& graph, const TrainConfig& train, const CvConfig& cv);

/// One fresh network per fold; `cell` separates network seeds of sweep cells.
ExperimentResult run_cv(const Dataset& data, const Architecture& arch, const TrainConfig& train, const CvConfig& cv,
                        std::uint64_t cell = 0);

std::uint64_t fingerprint(const Dataset& data, const Architecture& arch, const TrainConfig& train, const CvConfig& cv);

// ---------------------------------------------------------------------------
// Sweeps and comparisons

struct SweepSpec {
  int k_min = 1;
  int k_max = 6;
  Index width = 16;
  Head head = Head::dense;
  TrainConfig train;
  CvConfig cv;
};

struct SweepCell {
  int k1 = 0;
  int k2 = 0;
  ExperimentResult result;
};

struct SweepResult {
  int k_min = 0;
  int k_max = 0;
  std::vector<SweepCell> cells;  // row-major in k1
  std::size_t best = 0;          // highest mean; first in row-major order on ties
};

/// Two sequential GC-layers [k1, k2] for every k1, k2 in [k_min, k_max].
SweepResult heatmap_sweep(const Dataset& data, const SweepSpec& spec);

struct OrderProfile {
  std::vector<int> orders;
  std::vector<ExperimentResult> results;
};

/// One-layer networks of each order in [k_min, k_max].
OrderProfile order_profile(const Dataset& data, const SweepSpec& spec);

struct CompareSpec {
  int k1 = 1;
  int k2 = 2;
  int depth = 2;  // layers in [k1,k1] / [k2,k2] baselines and inception modules
  Index width = 16;
  Head head = Head::dense;
  TrainConfig train;
  CvConfig cv;
};

struct ModelResult {
  std::string name;
  Architecture architecture;
  ExperimentResult result;
};

struct Comparison {
  std::vector<ModelResult> models;
  /// Mean epochs of the sequential [k1,k2] baseline divided by each inception
  /// variant's mean epochs (concat, maxpool).
  double convergence_ratio_concat = 0.0;
  double convergence_ratio_maxpool = 0.0;
  bool masks_consistent = false;
};

/// Sequential [k1,k2], [k1..], [k2..], inception-concat and inception-maxpool
/// under identical folds and seeds.
Comparison compare_models(const Dataset& data, const CompareSpec& spec);

// ---------------------------------------------------------------------------
// Output

void write_sweep_csv(std::ostream& out, const SweepResult& sweep);
void write_heatmap_csv(std::ostream& out, const SweepResult& sweep);
void write_profile_csv(std::ostream& out, const OrderProfile& profile);
void write_comparison_csv(std::ostream& out, const Comparison& comparison);
/// `model,fold,accuracy,epochs` rows for one named result.
void write_result_csv(std::ostream& out, const std::string& model, const ExperimentResult& result, bool header = true);

nlohmann::ordered_json summary_json(const ExperimentResult& result);
nlohmann::ordered_json summary_json(const SweepResult& sweep);
nlohmann::ordered_json summary_json(const OrderProfile& profile);
nlohmann::ordered_json summary_json(const Comparison& comparison);

std::string format_architecture(const Architecture& arch);
std::string hex64(std::uint64_t value);

}  // namespace mkgcn
