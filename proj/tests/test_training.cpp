#include <gtest/gtest.h>

#include <cmath>

#include "dcpr/checkpoint.hpp"
#include "dcpr/error.hpp"
#include "dcpr/training.hpp"

using namespace dcpr;

namespace {

TrainConfig small_config() {
  TrainConfig c;
  c.dim = 8;
  c.history_window = 4;
  c.max_epochs = 5;
  c.negatives = 4;
  c.loss = LossForm::kBce;
  c.optimizer = Optimizer::kAdam;
  c.eta = 0.003;
  c.seed = 5;
  return c;
}

TierSplits tiny_splits(std::uint64_t seed) {
  const CheckInDataset ds = synth_generate(*synth_preset("tiny"), seed);
  return build_tier_splits(ds, partition_regions(ds.pois(), 2, seed), 0.5, seed);
}

}  // namespace

TEST(Examples, WindowedHistories) {
  const std::vector<std::size_t> seq{4, 5, 6, 7};
  const auto ex = category_examples(seq, 2);
  ASSERT_EQ(ex.size(), 3u);
  EXPECT_EQ(ex[0].history, (std::vector<std::size_t>{4}));
  EXPECT_EQ(ex[2].history, (std::vector<std::size_t>{5, 6}));
  EXPECT_EQ(ex[2].target, 7u);
  const std::vector<Visit> v{{1, 0, 0, 0}, {2, 0, 0, 1}, {3, 0, 0, 2}};
  EXPECT_EQ(history_window(v, 2).front().poi, 2);
  EXPECT_EQ(poi_examples(v, 5).back().history.size(), 2u);
}

TEST(Negatives, ExcludeTargetAndStayInRange) {
  Rng rng(1);
  const auto n = sample_negatives(rng, 5, 2, 1000);
  ASSERT_EQ(n.size(), 1000u);
  for (auto v : n) {
    EXPECT_NE(v, 2u);
    EXPECT_LT(v, 5u);
  }
  EXPECT_THROW(sample_negatives(rng, 1, 0, 3), InvalidArgument);
}

TEST(Fit, QuadraticConvergesAndRestoresBest) {
  Matrix x{{3.0, -2.0}};
  const std::vector<ParamGroup> groups{{"x", &x}};
  const ExampleLoss loss = [](Tape& t, std::span<const Var> p, std::size_t, bool, Rng&) {
    auto sq = t.mul_const(p[0], t.value(p[0]));
    return t.sum(sq);
  };
  TrainConfig cfg;
  cfg.eta = 0.1;
  cfg.max_epochs = 200;
  cfg.batch_size = 1;
  cfg.precision = Precision::kF64;
  const StageResult r = fit(groups, 4, 1, loss, cfg, 1);
  EXPECT_LT(std::abs(x[0]) + std::abs(x[1]), 1e-3);
  EXPECT_EQ(r.curve.front().epoch, 0);
  double best = r.curve.front().val_loss;
  for (const auto& e : r.curve) best = std::min(best, e.val_loss);
  EXPECT_EQ(r.best_val_loss, best);
}

TEST(Fit, NonFiniteLossAborts) {
  Matrix x{{1.0}};
  const std::vector<ParamGroup> groups{{"x", &x}};
  const ExampleLoss loss = [](Tape& t, std::span<const Var> p, std::size_t, bool, Rng&) {
    return t.scale(t.sum(p[0]), std::nan(""));
  };
  EXPECT_THROW(fit(groups, 2, 1, loss, TrainConfig{}, 1), StageError);
}

TEST(Fit, EarlyStopsAfterPatience) {
  Matrix x{{0.0}};
  const std::vector<ParamGroup> groups{{"x", &x}};
  const ExampleLoss loss = [](Tape& t, std::span<const Var> p, std::size_t, bool, Rng&) { return t.sum(p[0]); };
  TrainConfig cfg;
  cfg.patience = 3;
  cfg.max_epochs = 50;
  // Validation loss equals x, which only decreases, so construct the opposite: negate.
  const ExampleLoss rising = [](Tape& t, std::span<const Var> p, std::size_t, bool validation, Rng&) {
    return validation ? t.scale(t.sum(p[0]), -1.0) : t.sum(p[0]);
  };
  const StageResult r = fit(groups, 2, 1, rising, cfg, 1);
  EXPECT_TRUE(r.early_stopped);
  EXPECT_EQ(r.best_epoch, 0);
  EXPECT_EQ(r.epochs_run, 3);
  EXPECT_EQ(x[0], 0.0);
  (void)loss;
}

TEST(Stages, GlobalIsSeedDeterministic) {
  const TierSplits s = tiny_splits(3);
  const GlobalModel a = train_global(s.global, s.num_categories, small_config());
  const GlobalModel b = train_global(s.global, s.num_categories, small_config());
  EXPECT_EQ(parameter_hash(a), parameter_hash(b));
  TrainConfig other = small_config();
  other.seed = 6;
  EXPECT_NE(parameter_hash(train_global(s.global, s.num_categories, other)), parameter_hash(a));
}

TEST(Stages, RegionFreezesBaseAndDeviceFreezesRegion) {
  const TierSplits s = tiny_splits(4);
  const TrainConfig cfg = small_config();
  const GlobalModel g = train_global(s.global, s.num_categories, cfg);
  const RegionSplit& rs = s.regions.front();
  StageResult res;
  const RegionModel r = specialize_region(&g, rs, s.num_categories, cfg, &res);
  EXPECT_EQ(parameter_hash(r.base), parameter_hash(g));
  EXPECT_GT(res.train_examples, 0u);
  EXPECT_EQ(res.curve.size(), static_cast<std::size_t>(res.epochs_run) + 1);

  const RegionModel scratch = specialize_region(nullptr, rs, s.num_categories, cfg);
  EXPECT_NE(parameter_hash(scratch.base), parameter_hash(g));

  for (const auto& seq : rs.device) {
    if (seq.train().size() < 2) continue;
    const Digest before = parameter_hash(r);
    const PatchModel p = personalize_device(r, seq, cfg, rs.region);
    EXPECT_EQ(parameter_hash(r), before);
    EXPECT_EQ(p.dim(), r.dim());
    break;
  }
}

TEST(Stages, PatchStartsAsIdentityOnItsHistories) {
  const TierSplits s = tiny_splits(5);
  TrainConfig cfg = small_config();
  const GlobalModel g = train_global(s.global, s.num_categories, cfg);
  const RegionSplit& rs = s.regions.front();
  const RegionModel r = specialize_region(&g, rs, s.num_categories, cfg);
  cfg.max_epochs = 0;
  const DeviceSequence& seq = rs.device.front();
  const PatchModel p = personalize_device(r, seq, cfg, rs.region);
  const auto hist = history_window(seq.test_history(), cfg.history_window);
  const Matrix x0 = region_forward(r, Matrix(1, r.dim()), hist, cfg.max_step);
  const Matrix y = patch_forward(p, x0);
  for (std::size_t j = 0; j < x0.size(); ++j) EXPECT_NEAR(y[j], x0[j], 1e-5);
}

TEST(Stages, MissingDataIsAStageError) {
  TierSplits s = tiny_splits(6);
  RegionSplit empty = s.regions.front();
  empty.edge.clear();
  Rng rng(1);
  const GlobalModel g = init_global_model(s.num_categories, 8, 0.003, rng);
  EXPECT_THROW(specialize_region(&g, empty, s.num_categories, small_config()), StageError);
}

TEST(Validation, DrawCount) {
  EXPECT_EQ(validation_draws(1), kMaxValidationDraws);
  EXPECT_EQ(validation_draws(64), 1u);
  EXPECT_EQ(validation_draws(10), 7u);
  StageResult r;
  r.curve = {{0, 0, 5.0}, {1, 1, 4.0}, {2, 1, 3.0}};
  EXPECT_EQ(epochs_to_reach(r, 4.0), 1);
  EXPECT_EQ(epochs_to_reach(r, 1.0), -1);
}
