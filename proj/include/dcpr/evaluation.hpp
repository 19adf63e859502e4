#pragma once

// On-device inference (accelerated reverse sampling and candidate scoring),
// ranking metrics and the size / latency benchmark.

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dcpr/config.hpp"
#include "dcpr/data.hpp"
#include "dcpr/denoisers.hpp"
#include "dcpr/diffusion.hpp"

namespace dcpr {

// The `h` unvisited POIs nearest to the last history POI (ties by id), with
// `ground_truth` appended when it is not among them.
std::vector<std::int64_t> select_candidates(const RegionSplit& region, std::span<const Visit> history,
                                            std::int64_t ground_truth, int h);

struct Recommendation {
  std::vector<std::int64_t> ranked;  // score descending, ties by ascending id
  std::vector<double> scores;        // parallel to ranked
  Matrix x0;                         // sampled target embedding
  int denoiser_calls = 0;
};

// Samples x_T ~ N(0, I), runs the accelerated sampler over `reverse_steps`
// transitions with x0_hat = patch(region(x_t)) and scores candidates by
// x0 . e_p. `patch` may be null.
Recommendation recommend(const RegionModel& region, const PatchModel* patch,
                         std::span<const Visit> history, std::span<const std::int64_t> candidates,
                         const NoiseSchedule& schedule, int reverse_steps, Rng& rng);

// Ranks candidates by the given scores (descending, ties by ascending id).
std::vector<std::size_t> rank_order(std::span<const std::int64_t> ids, std::span<const double> scores);

// 1-based position of `id` in `ranked`, or 0 when absent.
std::size_t rank_of(std::span<const std::int64_t> ranked, std::int64_t id);

double hr_at_k(std::size_t rank, int k);
double ndcg_at_k(std::size_t rank, int k);

struct Metrics {
  double hr5 = 0, hr10 = 0, ndcg5 = 0, ndcg10 = 0;
  std::size_t cases = 0;
};

class MetricsAccumulator {
 public:
  void add(std::size_t rank);
  Metrics result() const;

 private:
  double hr5_ = 0, hr10_ = 0, ndcg5_ = 0, ndcg10_ = 0;
  std::size_t n_ = 0;
};

struct CaseResult {
  int region = 0;
  std::int64_t user = 0;
  std::size_t rank_plain = 0;
  std::size_t rank_patched = 0;
  bool has_patch = false;
  std::size_t candidates = 0;
};

struct EvalReport {
  std::vector<CaseResult> cases;  // region, then user order
  std::map<int, Metrics> region_plain;
  std::map<int, Metrics> region_patched;
  Metrics overall_plain;
  Metrics overall_patched;
  std::vector<std::string> flags;  // users evaluated without a patch
};

using PatchKey = std::pair<int, std::int64_t>;  // (region, user)

// Test-target inference for every device sequence; independent per user and
// run across `jobs` threads. Users without a patch fall back to the region
// model and are flagged.
EvalReport evaluate_all(const TierSplits& splits, const std::map<int, RegionModel>& regions,
                        const std::map<PatchKey, PatchModel>& patches, const TrainConfig& cfg,
                        int jobs = 1);

std::uint64_t inference_seed(std::uint64_t base, int region, std::int64_t user);

struct BenchRow {
  int dim = 0;
  int reverse_steps = 0;
  double size_mb = 0;        // serialized region + patch checkpoints
  double epoch_seconds = 0;  // median device training epoch
  double latency_ms = 0;     // median warm inference
  int denoiser_calls = 0;
};

struct BenchOptions {
  std::vector<int> dims;
  std::vector<int> reverse_steps;
  int warm_runs = 100;
  int epoch_runs = 3;
};

// Benchmarks a freshly initialised region model of each width on `region`,
// using its first device sequence with a test target.
std::vector<BenchRow> bench(const RegionSplit& region, std::size_t num_categories,
                            const TrainConfig& cfg, const BenchOptions& opts);

}  // namespace dcpr
