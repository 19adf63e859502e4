#pragma once

// The three training stages: cloud (global category model), edge (region
// specialisation on a frozen global model) and device (per-user patch on a
// frozen region model). All share one diffusion training loop.

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "dcpr/config.hpp"
#include "dcpr/data.hpp"
#include "dcpr/denoisers.hpp"
#include "dcpr/diffusion.hpp"

namespace dcpr {

struct EpochRecord {
  int epoch = 0;          // 0 = before any update
  double train_loss = 0;  // mean over the epoch's examples (0 for epoch 0)
  double val_loss = 0;
};

struct StageResult {
  std::vector<EpochRecord> curve;
  int best_epoch = 0;
  double best_val_loss = 0;
  int epochs_run = 0;
  bool early_stopped = false;
  std::size_t train_examples = 0;
  std::size_t val_examples = 0;
};

// Validation averages every held-out example over several seeded draws of
// (t, noise, negatives) so that small validation sets still give a stable
// stopping signal.
inline constexpr std::size_t kMinValidationSamples = 64;
inline constexpr std::size_t kMaxValidationDraws = 32;
std::size_t validation_draws(std::size_t n_val);

// First epoch whose validation loss is <= target, or -1.
int epochs_to_reach(const StageResult& r, double target);

struct CategoryExample {
  std::vector<std::size_t> history;
  std::size_t target = 0;
};

struct PoiExample {
  std::vector<Visit> history;
  std::int64_t target = 0;
};

// One example per position p >= 1 of the sequence, history = the preceding
// `window` events.
std::vector<CategoryExample> category_examples(std::span<const std::size_t> seq, int window);
std::vector<PoiExample> poi_examples(std::span<const Visit> seq, int window);
std::vector<Visit> history_window(std::span<const Visit> seq, int window);

struct ParamGroup {
  std::string name;
  Matrix* value = nullptr;
};

// Builds the scalar loss of one example. `params` are the taped leaves of the
// trainable groups, in the order given to fit().
using ExampleLoss = std::function<Var(Tape& tape, std::span<const Var> params, std::size_t index,
                                      bool validation, Rng& rng)>;

// Minibatch diffusion training with early stopping on validation loss. The
// parameters end at their best-validation values.
StageResult fit(std::span<const ParamGroup> params, std::size_t n_train, std::size_t n_val,
                const ExampleLoss& loss, const TrainConfig& cfg, std::uint64_t seed);

// Uniform draws over [0, vocab) \ {target}, with replacement.
std::vector<std::size_t> sample_negatives(Rng& rng, std::size_t vocab, std::size_t target,
                                          int count);

GlobalModel train_global(std::span<const std::vector<std::size_t>> sequences,
                         std::size_t num_categories, const TrainConfig& cfg,
                         StageResult* result = nullptr);

// `global` == nullptr selects the from-scratch variant (everything trainable,
// random POI embeddings).
RegionModel specialize_region(const GlobalModel* global, const RegionSplit& region,
                              std::size_t num_categories, const TrainConfig& cfg,
                              StageResult* result = nullptr);

// Trains a patch on one device sequence through the frozen region model.
PatchModel personalize_device(const RegionModel& region, const DeviceSequence& seq,
                              const TrainConfig& cfg, int region_id = 0,
                              StageResult* result = nullptr);

// Shift that places every history's x0_hat inside the patch's linear regime.
double patch_shift(const RegionModel& region, std::span<const PoiExample> examples, int max_step);

std::uint64_t device_job_id(std::int64_t user, int region);

}  // namespace dcpr
