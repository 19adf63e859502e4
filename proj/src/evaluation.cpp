#include "dcpr/evaluation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <numeric>
#include <set>

#include "dcpr/checkpoint.hpp"
#include "dcpr/error.hpp"
#include "dcpr/training.hpp"

namespace dcpr {

std::vector<std::int64_t> select_candidates(const RegionSplit& region, std::span<const Visit> history,
                                            std::int64_t ground_truth, int h) {
  if (region.poi_ids.empty()) throw InvalidArgument("select_candidates: empty region");
  if (history.empty()) throw InvalidArgument("select_candidates: empty history");
  if (h < 0) throw InvalidArgument("select_candidates: negative candidate count");
  const LatLon anchor{history.back().lat, history.back().lon};
  std::set<std::int64_t> visited;
  for (const auto& v : history) visited.insert(v.poi);

  std::vector<std::pair<double, std::int64_t>> pool;
  for (std::size_t i = 0; i < region.poi_ids.size(); ++i) {
    if (visited.count(region.poi_ids[i])) continue;
    pool.emplace_back(haversine(anchor, region.poi_location[i]), region.poi_ids[i]);
  }
  const std::size_t keep = std::min(pool.size(), static_cast<std::size_t>(h));
  std::partial_sort(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(keep), pool.end());
  std::vector<std::int64_t> out;
  out.reserve(keep + 1);
  bool has_truth = false;
  for (std::size_t i = 0; i < keep; ++i) {
    out.push_back(pool[i].second);
    has_truth = has_truth || pool[i].second == ground_truth;
  }
  if (!has_truth) out.push_back(ground_truth);
  return out;
}

std::vector<std::size_t> rank_order(std::span<const std::int64_t> ids, std::span<const double> scores) {
  if (ids.size() != scores.size()) throw InvalidArgument("rank_order: ids and scores differ in length");
  std::vector<std::size_t> order(ids.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return ids[a] < ids[b];
  });
  return order;
}

Recommendation recommend(const RegionModel& region, const PatchModel* patch,
                         std::span<const Visit> history, std::span<const std::int64_t> candidates,
                         const NoiseSchedule& schedule, int reverse_steps, Rng& rng) {
  if (patch && patch->dim() != region.dim()) {
    throw ShapeError("recommend: patch width " + std::to_string(patch->dim()) +
                     " does not match region width " + std::to_string(region.dim()));
  }
  const ReverseSubsequence sub = build_subsequence(schedule.max_step, reverse_steps);
  Recommendation rec;
  Matrix x = sample_gaussian(rng, 1, region.dim());
  for (std::size_t i = 0; i + 1 < sub.steps.size(); ++i) {
    const int t_s = sub.steps[i];
    Matrix x0_hat = region_forward(region, x, history, t_s);
    if (patch) x0_hat = patch_forward(*patch, x0_hat);
    ++rec.denoiser_calls;
    x = accelerated_reverse_step(x, t_s, sub.steps[i + 1], x0_hat, schedule);
  }
  rec.x0 = x;

  std::vector<double> scores(candidates.size());
  for (std::size_t c = 0; c < candidates.size(); ++c) {
    const std::size_t row = region.row_of(candidates[c]);
    double s = 0.0;
    for (std::size_t j = 0; j < region.dim(); ++j) s += x[j] * region.poi_emb(row, j);
    scores[c] = s;
  }
  for (std::size_t i : rank_order(candidates, scores)) {
    rec.ranked.push_back(candidates[i]);
    rec.scores.push_back(scores[i]);
  }
  return rec;
}

std::size_t rank_of(std::span<const std::int64_t> ranked, std::int64_t id) {
  const auto it = std::find(ranked.begin(), ranked.end(), id);
  return it == ranked.end() ? 0 : static_cast<std::size_t>(it - ranked.begin()) + 1;
}

double hr_at_k(std::size_t rank, int k) {
  if (k <= 0) throw InvalidArgument("hr_at_k: k must be positive, got " + std::to_string(k));
  return rank >= 1 && rank <= static_cast<std::size_t>(k) ? 1.0 : 0.0;
}

double ndcg_at_k(std::size_t rank, int k) {
  if (k <= 0) throw InvalidArgument("ndcg_at_k: k must be positive, got " + std::to_string(k));
  if (rank < 1 || rank > static_cast<std::size_t>(k)) return 0.0;
  return 1.0 / std::log2(static_cast<double>(rank) + 1.0);
}

void MetricsAccumulator::add(std::size_t rank) {
  hr5_ += hr_at_k(rank, 5);
  hr10_ += hr_at_k(rank, 10);
  ndcg5_ += ndcg_at_k(rank, 5);
  ndcg10_ += ndcg_at_k(rank, 10);
  ++n_;
}

Metrics MetricsAccumulator::result() const {
  if (n_ == 0) return {};
  const double n = static_cast<double>(n_);
  return {hr5_ / n, hr10_ / n, ndcg5_ / n, ndcg10_ / n, n_};
}

std::uint64_t inference_seed(std::uint64_t base, int region, std::int64_t user) {
  return derive_seed(base, "inference", device_job_id(user, region));
}

EvalReport evaluate_all(const TierSplits& splits, const std::map<int, RegionModel>& regions,
                        const std::map<PatchKey, PatchModel>& patches, const TrainConfig& cfg,
                        int jobs) {
  struct Job {
    const RegionSplit* split;
    const RegionModel* model;
    const DeviceSequence* seq;
  };
  EvalReport report;
  std::vector<Job> work;
  for (const auto& rs : splits.regions) {
    const auto it = regions.find(rs.region);
    if (it == regions.end()) {
      if (!rs.device.empty()) report.flags.push_back("region " + std::to_string(rs.region) + ": no region model, not evaluated");
      continue;
    }
    for (const auto& seq : rs.device) work.push_back({&rs, &it->second, &seq});
  }

  const NoiseSchedule schedule = build_schedule(cfg.max_step, cfg.w);
  report.cases.resize(work.size());
  std::vector<std::exception_ptr> errors(work.size());

#pragma omp parallel for schedule(dynamic) num_threads(std::max(1, jobs))
  for (std::size_t i = 0; i < work.size(); ++i) {
    try {
      const Job& job = work[i];
      const auto history = history_window(job.seq->test_history(), cfg.history_window);
      const std::int64_t truth = job.seq->test_target().poi;
      const auto candidates = select_candidates(*job.split, job.seq->test_history(), truth, cfg.candidates);
      const auto pit = patches.find({job.split->region, job.seq->user});
      CaseResult& c = report.cases[i];
      c.region = job.split->region;
      c.user = job.seq->user;
      c.candidates = candidates.size();
      c.has_patch = pit != patches.end();
      const std::uint64_t seed = inference_seed(cfg.seed, c.region, c.user);
      Rng rng_plain(seed);
      c.rank_plain = rank_of(
          recommend(*job.model, nullptr, history, candidates, schedule, cfg.reverse_steps, rng_plain).ranked,
          truth);
      if (c.has_patch) {
        Rng rng_patch(seed);
        c.rank_patched = rank_of(recommend(*job.model, &pit->second, history, candidates, schedule,
                                           cfg.reverse_steps, rng_patch)
                                     .ranked,
                                 truth);
      } else {
        c.rank_patched = c.rank_plain;
      }
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  std::map<int, MetricsAccumulator> plain, patched;
  MetricsAccumulator all_plain, all_patched;
  for (const auto& c : report.cases) {
    plain[c.region].add(c.rank_plain);
    patched[c.region].add(c.rank_patched);
    all_plain.add(c.rank_plain);
    all_patched.add(c.rank_patched);
    if (!c.has_patch) {
      report.flags.push_back("region " + std::to_string(c.region) + " user " + std::to_string(c.user) +
                             ": no patch model, evaluated with the region model alone");
    }
  }
  for (const auto& [r, acc] : plain) report.region_plain[r] = acc.result();
  for (const auto& [r, acc] : patched) report.region_patched[r] = acc.result();
  report.overall_plain = all_plain.result();
  report.overall_patched = all_patched.result();
  return report;
}

namespace {

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

std::vector<BenchRow> bench(const RegionSplit& region, std::size_t num_categories,
                            const TrainConfig& cfg, const BenchOptions& opts) {
  const DeviceSequence* seq = nullptr;
  for (const auto& s : region.device) {
    if (s.visits.size() >= 4) {
      seq = &s;
      break;
    }
  }
  if (!seq) throw StageError("bench: region " + std::to_string(region.region) + " has no usable device sequence");

  std::vector<BenchRow> rows;
  const NoiseSchedule schedule = build_schedule(cfg.max_step, cfg.w);
  for (int dim : opts.dims) {
    TrainConfig c = cfg;
    c.dim = dim;
    c.max_epochs = 1;
    c.validate();
    Rng init(derive_seed(cfg.seed, "bench", static_cast<std::uint64_t>(dim)));
    GlobalModel g = init_global_model(num_categories, static_cast<std::size_t>(dim), c.lambda, init);
    RegionModel model = init_region_model(g, region.poi_ids, region.poi_category, c.gamma_cat, c.clip());
    round_to_float(model);
    const PatchModel patch = init_patch_identity(static_cast<std::size_t>(dim), 1.0);
    const double bytes = static_cast<double>(encode_checkpoint(to_checkpoint(model, c.format())).size() +
                                             encode_checkpoint(to_checkpoint(patch, c.format())).size());

    std::vector<double> epochs;
    for (int r = 0; r < std::max(1, opts.epoch_runs); ++r) {
      const auto start = std::chrono::steady_clock::now();
      personalize_device(model, *seq, c);
      epochs.push_back(seconds_since(start));
    }

    const auto history = history_window(seq->test_history(), c.history_window);
    const auto candidates = select_candidates(region, seq->test_history(), seq->test_target().poi, c.candidates);
    for (int t_r : opts.reverse_steps) {
      BenchRow row{dim, t_r, bytes / 1e6, median(epochs), 0.0, 0};
      std::vector<double> lat;
      Rng rng(derive_seed(cfg.seed, "bench-inference", static_cast<std::uint64_t>(t_r)));
      row.denoiser_calls = recommend(model, &patch, history, candidates, schedule, t_r, rng).denoiser_calls;
      for (int r = 0; r < opts.warm_runs; ++r) {
        const auto start = std::chrono::steady_clock::now();
        recommend(model, &patch, history, candidates, schedule, t_r, rng);
        lat.push_back(1e3 * seconds_since(start));
      }
      row.latency_ms = median(lat);
      rows.push_back(row);
    }
  }
  return rows;
}

}  // namespace dcpr
