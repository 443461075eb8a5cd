#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "mkgcn/error.hpp"
#include "mkgcn/experiments.hpp"
#include "mkgcn/parallel.hpp"
#include "test_util.hpp"

namespace mkgcn {
namespace {

Dataset small_sim(double v1, double v2, std::uint64_t seed, int n_per_class = 40) {
  SimConfig c;
  c.n_per_class = n_per_class;
  c.variances[0] = v1;
  c.variances[1] = v2;
  c.seed = seed;
  return make_dataset(generate(c));
}

TrainConfig quick_train(int epochs = 30) {
  TrainConfig t;
  t.epochs = epochs;
  return t;
}

CvConfig cv_of(int folds, std::uint64_t seed, int threads = 1) {
  CvConfig cv;
  cv.folds = folds;
  cv.seed = seed;
  cv.threads = threads;
  return cv;
}

TEST(EarlyStop, StrictlyDecreasingNeverStops) {
  std::vector<double> losses;
  for (int i = 0; i < 200; ++i) losses.push_back(10.0 - 0.01 * i);
  const auto d = early_stop(losses, 25);
  EXPECT_FALSE(d.stop);
  EXPECT_EQ(d.epochs_used, 200);
  EXPECT_EQ(d.best_epoch, 200);
}

TEST(EarlyStop, ConstantLossesStopAtWindowPlusOne) {
  for (int window : {1, 5, 25}) {
    const std::vector<double> losses(100, 0.7);
    const auto d = early_stop(losses, window);
    EXPECT_TRUE(d.stop);
    EXPECT_EQ(d.epochs_used, window + 1);
    EXPECT_EQ(d.best_epoch, 1);
  }
}

TEST(EarlyStop, MinimumAtFortyStopsAtSixtyFive) {
  std::vector<double> losses;
  for (int e = 1; e <= 120; ++e) losses.push_back(e <= 40 ? 2.0 - 0.01 * e : 1.6 + 0.001 * (e - 40) * std::sin(e));
  // Values after epoch 40 hover around 1.6 but never go below it.
  for (int e = 41; e <= 120; ++e) losses[e - 1] = std::max(losses[e - 1], 1.6 + 1e-9);
  const auto d = early_stop(losses, 25);
  EXPECT_TRUE(d.stop);
  EXPECT_EQ(d.epochs_used, 65);
  EXPECT_EQ(d.best_epoch, 40);
}

TEST(EarlyStop, TiesAreNotImprovements) {
  const std::vector<double> losses{3, 2, 2, 2, 2};
  const auto d = early_stop(losses, 3);
  EXPECT_TRUE(d.stop);
  EXPECT_EQ(d.epochs_used, 5);
  EXPECT_EQ(d.best_epoch, 2);
  EXPECT_THROW(early_stop(losses, 0), ConfigError);
}

TEST(Train, EarlyStoppingRestoresBestWeights) {
  const auto data = small_sim(1.0, 1.0, 5);
  const auto masks = cv_masks(data.graph, [] {
    TrainConfig t;
    t.early_stop_window = 5;
    return t;
  }(), cv_of(5, 1));
  TrainConfig t;
  t.epochs = 300;
  t.early_stop_window = 5;
  const auto arch = make_architecture(2, 2, {{3}}, 8, Aggregator::concat);
  const auto out = train_network(data, masks[0], arch, t, 9);
  ASSERT_FALSE(out.failed) << out.failure;
  ASSERT_EQ(out.monitor_loss.size(), static_cast<std::size_t>(out.epochs_run));

  const auto replay = early_stop(out.monitor_loss, 5);
  EXPECT_EQ(replay.best_epoch, out.best_epoch);
  EXPECT_EQ(replay.epochs_used, out.epochs_run);
  ASSERT_LT(out.epochs_run, 300);
  EXPECT_TRUE(replay.stop);
  EXPECT_EQ(out.epochs_run, out.best_epoch + 5);
  // The returned network is the best-epoch snapshot, not the last one.
  const Matrix scores = network_predict(out.network, data.laplacian, data.graph.features());
  const double restored = masked_cross_entropy(scores, data.graph.labels(), masks[0].validation).loss;
  EXPECT_EQ(restored, out.monitor_loss[out.best_epoch - 1]);
}

TEST(Train, ValidationCarvedFromTrainingOnlyWhenStopping) {
  const auto data = small_sim(0.5, 0.1, 6);
  TrainConfig plain;
  for (const auto& m : cv_masks(data.graph, plain, cv_of(5, 2)))
    EXPECT_EQ(std::count(m.validation.begin(), m.validation.end(), true), 0);
  TrainConfig stopping;
  stopping.early_stop_window = 25;
  const auto masks = cv_masks(data.graph, stopping, cv_of(5, 2));
  const auto base = cv_masks(data.graph, plain, cv_of(5, 2));
  for (std::size_t f = 0; f < masks.size(); ++f) {
    EXPECT_EQ(masks[f].test, base[f].test);
    for (std::size_t i = 0; i < masks[f].train.size(); ++i) {
      EXPECT_FALSE(masks[f].train[i] && masks[f].validation[i]);
      EXPECT_EQ(masks[f].train[i] || masks[f].validation[i], base[f].train[i]);
    }
    EXPECT_EQ(std::count(masks[f].validation.begin(), masks[f].validation.end(), true), 6);
  }
}

TEST(Train, DivergenceMarksFoldFailedAndRunContinues) {
  const auto data = small_sim(0.5, 0.5, 7);
  TrainConfig t = quick_train(20);
  t.learning_rate = 1e300;
  const auto arch = make_architecture(2, 2, {{2}}, 8, Aggregator::concat);
  const auto r = run_cv(data, arch, t, cv_of(4, 3));
  ASSERT_EQ(r.folds.size(), 4u);
  EXPECT_EQ(r.failed_folds, 4);
  for (const auto& f : r.folds) {
    EXPECT_TRUE(f.failed);
    EXPECT_FALSE(f.failure.empty());
  }
  EXPECT_TRUE(std::isnan(r.mean));
}

TEST(RunCv, SeparableClustersGiveFullAccuracy) {
  const auto data = small_sim(1e-6, 1e-6, 8, 50);
  const auto arch = make_architecture(2, 2, {{1}}, 16, Aggregator::concat);
  const auto r = run_cv(data, arch, TrainConfig{}, cv_of(10, 4));
  EXPECT_EQ(r.failed_folds, 0);
  EXPECT_DOUBLE_EQ(r.mean, 100.0);
  EXPECT_DOUBLE_EQ(r.sd, 0.0);
}

TEST(RunCv, RepeatableRecords) {
  const auto data = small_sim(1.0, 0.5, 9);
  const auto arch = make_architecture(2, 2, {{1, 3}}, 8, Aggregator::maxpool);
  const auto a = run_cv(data, arch, quick_train(), cv_of(5, 10));
  const auto b = run_cv(data, arch, quick_train(), cv_of(5, 10));
  std::ostringstream ca, cb;
  write_result_csv(ca, "m", a);
  write_result_csv(cb, "m", b);
  EXPECT_EQ(ca.str(), cb.str());
  EXPECT_EQ(a.fingerprint, b.fingerprint);
  EXPECT_EQ(a.per_fold_accuracies(), b.per_fold_accuracies());
  EXPECT_NE(run_cv(data, arch, quick_train(), cv_of(5, 11)).fingerprint, a.fingerprint);
}

TEST(RunCv, ParallelEqualsSerial) {
  const auto data = small_sim(1.0, 0.5, 12);
  const auto arch = make_architecture(2, 2, {{2}}, 8, Aggregator::concat);
  const auto serial = run_cv(data, arch, quick_train(), cv_of(5, 13, 1));
  const auto parallel = run_cv(data, arch, quick_train(), cv_of(5, 13, 4));
  std::ostringstream a, b;
  write_result_csv(a, "m", serial);
  write_result_csv(b, "m", parallel);
  EXPECT_EQ(a.str(), b.str());
  EXPECT_EQ(serial.fingerprint, parallel.fingerprint);
}

TEST(RunCv, SummaryMatchesRecomputation) {
  const auto data = small_sim(1.0, 1.0, 14);
  const auto arch = make_architecture(2, 2, {{1}}, 8, Aggregator::concat);
  auto r = run_cv(data, arch, quick_train(), cv_of(8, 15));
  r.folds[2].failed = true;  // exercise exclusion of failed folds
  r.summarize();
  double sum = 0.0;
  int n = 0;
  for (const auto& f : r.folds)
    if (!f.failed) {
      sum += f.accuracy;
      ++n;
    }
  const double mean = sum / n;
  double sq = 0.0;
  for (const auto& f : r.folds)
    if (!f.failed) sq += (f.accuracy - mean) * (f.accuracy - mean);
  EXPECT_NEAR(r.mean, mean, 1e-9);
  EXPECT_NEAR(r.sd, std::sqrt(sq / n), 1e-9);
  EXPECT_EQ(r.failed_folds, 1);
}

TEST(Sweep, OneByOneEqualsRunCv) {
  const auto data = small_sim(0.5, 0.5, 16);
  SweepSpec spec;
  spec.k_min = spec.k_max = 2;
  spec.width = 8;
  spec.train = quick_train();
  spec.cv = cv_of(4, 17);
  const auto sweep = heatmap_sweep(data, spec);
  ASSERT_EQ(sweep.cells.size(), 1u);
  const auto arch = make_architecture(2, 2, {{2}, {2}}, 8, Aggregator::concat);
  const auto direct = run_cv(data, arch, spec.train, spec.cv);
  EXPECT_EQ(sweep.cells[0].result.per_fold_accuracies(), direct.per_fold_accuracies());
  EXPECT_EQ(sweep.cells[0].result.fingerprint, direct.fingerprint);
}

TEST(Sweep, GridDimensionsArgmaxAndCsv) {
  const auto data = small_sim(0.5, 0.5, 18, 20);
  SweepSpec spec;
  spec.k_min = 1;
  spec.k_max = 6;
  spec.width = 4;
  spec.train = quick_train(5);
  spec.cv = cv_of(2, 19, 3);
  const auto sweep = heatmap_sweep(data, spec);
  ASSERT_EQ(sweep.cells.size(), 36u);
  for (std::size_t c = 0; c < 36; ++c) {
    EXPECT_EQ(sweep.cells[c].k1, 1 + static_cast<int>(c / 6));
    EXPECT_EQ(sweep.cells[c].k2, 1 + static_cast<int>(c % 6));
    EXPECT_LE(sweep.cells[c].result.mean, sweep.cells[sweep.best].result.mean);
  }
  std::ostringstream heat_out, rows_out;
  write_heatmap_csv(heat_out, sweep);
  write_sweep_csv(rows_out, sweep);
  const std::string heat = heat_out.str(), rows = rows_out.str();
  EXPECT_EQ(std::count(heat.begin(), heat.end(), '\n'), 37);
  EXPECT_EQ(std::count(rows.begin(), rows.end(), '\n'), 1 + 36 * 2);
  EXPECT_EQ(heat.substr(0, heat.find('\n')), "k1,k2,mean,sd,failed");
  EXPECT_EQ(rows.substr(0, rows.find('\n')), "k1,k2,fold,accuracy,epochs");

  spec.k_min = 3;
  spec.k_max = 2;
  EXPECT_THROW(heatmap_sweep(data, spec), ConfigError);
}

TEST(Profile, OneResultPerOrder) {
  const auto data = small_sim(0.5, 0.1, 20, 20);
  SweepSpec spec;
  spec.k_min = 1;
  spec.k_max = 4;
  spec.width = 4;
  spec.train = quick_train(5);
  spec.cv = cv_of(2, 21);
  const auto profile = order_profile(data, spec);
  EXPECT_EQ(profile.orders, (std::vector<int>{1, 2, 3, 4}));
  ASSERT_EQ(profile.results.size(), 4u);
  const auto single = run_cv(data, make_architecture(2, 2, {{1}}, 4, Aggregator::concat), spec.train, spec.cv);
  EXPECT_EQ(profile.results[0].per_fold_accuracies(), single.per_fold_accuracies());
}

TEST(Compare, FiveModelsShareMasks) {
  const auto data = small_sim(1.0, 1.0, 22);
  CompareSpec spec;
  spec.k1 = 1;
  spec.k2 = 3;
  spec.width = 4;
  spec.train = quick_train(40);
  spec.train.early_stop_window = 5;
  spec.cv = cv_of(4, 23);
  const auto cmp = compare_models(data, spec);
  ASSERT_EQ(cmp.models.size(), 5u);
  EXPECT_TRUE(cmp.masks_consistent);
  for (const auto& m : cmp.models)
    for (std::size_t f = 0; f < m.result.folds.size(); ++f)
      EXPECT_EQ(m.result.folds[f].mask_hash, cmp.models[0].result.folds[f].mask_hash);
  EXPECT_EQ(cmp.models[0].name, "sequential[1,3]");
  EXPECT_EQ(cmp.models[1].name, "sequential[1,1]");
  EXPECT_EQ(cmp.models[2].name, "sequential[3,3]");
  EXPECT_EQ(cmp.models[3].name, "inception-concat[1,3]");
  EXPECT_EQ(cmp.models[4].name, "inception-maxpool[1,3]");
  EXPECT_DOUBLE_EQ(cmp.convergence_ratio_concat, cmp.models[0].result.mean_epochs / cmp.models[3].result.mean_epochs);
  EXPECT_DOUBLE_EQ(cmp.convergence_ratio_maxpool, cmp.models[0].result.mean_epochs / cmp.models[4].result.mean_epochs);

  std::ostringstream csv_out;
  write_comparison_csv(csv_out, cmp);
  const std::string csv = csv_out.str();
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "model,fold,accuracy,epochs");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1 + 5 * 4);
  const auto json = summary_json(cmp);
  EXPECT_EQ(json["models"].size(), 5u);
}

TEST(Compare, EqualOrdersMakeBaselinesCoincide) {
  const auto data = small_sim(0.5, 0.5, 24, 20);
  CompareSpec spec;
  spec.k1 = spec.k2 = 2;
  spec.width = 4;
  spec.train = quick_train(10);
  spec.cv = cv_of(2, 25);
  const auto cmp = compare_models(data, spec);
  EXPECT_EQ(cmp.models[0].result.per_fold_accuracies(), cmp.models[1].result.per_fold_accuracies());
  EXPECT_EQ(cmp.models[1].result.per_fold_accuracies(), cmp.models[2].result.per_fold_accuracies());
}

TEST(Parallel, RethrowsAndVisitsEveryIndex) {
  std::vector<int> hits(50, 0);
  parallel_for(hits.size(), 4, [&](std::size_t i) { hits[i] += 1; });
  EXPECT_TRUE(std::all_of(hits.begin(), hits.end(), [](int h) { return h == 1; }));
  EXPECT_THROW(parallel_for(10, 3, [](std::size_t i) {
                 if (i == 7) throw Error("boom");
               }),
               Error);
}

TEST(Output, FailedFoldsWrittenAsNan) {
  ExperimentResult r;
  r.folds = {{0, 75.0, 10, 10, false, "", 0}, {1, 0.0, 3, 3, true, "diverged", 0}};
  r.summarize();
  std::ostringstream out;
  write_result_csv(out, "m", r);
  EXPECT_EQ(out.str(), "model,fold,accuracy,epochs\nm,0,75.000000,10\nm,1,nan,3\n");
  const auto json = summary_json(r);
  EXPECT_EQ(json["failed_folds"], 1);
}

}  // namespace
}  // namespace mkgcn
