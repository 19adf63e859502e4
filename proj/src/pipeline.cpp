#include "dcpr/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <exception>
#include <map>

#include "dcpr/checkpoint.hpp"
#include "dcpr/error.hpp"
#include "dcpr/report.hpp"

namespace dcpr {

namespace fs = std::filesystem;

bool PipelineReport::audits_passed() const {
  return std::none_of(audits.begin(), audits.end(), [](const JobAudit& a) { return a.status == "FAIL"; });
}

fs::path global_checkpoint_path(const fs::path& dir) { return dir / "global.ckpt"; }

fs::path region_checkpoint_path(const fs::path& dir, int region) {
  return dir / ("region_" + std::to_string(region) + ".ckpt");
}

fs::path patch_checkpoint_path(const fs::path& dir, int region, std::int64_t user) {
  return dir / ("patch_r" + std::to_string(region) + "_u" + std::to_string(user) + ".ckpt");
}

namespace {

class StageClock {
 public:
  StageClock(Timing* t, std::string name) : timing_(t), name_(std::move(name)) {}
  ~StageClock() {
    if (timing_) {
      const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
      timing_->entries.emplace_back(name_, s);
    }
  }
  StageClock(const StageClock&) = delete;
  StageClock& operator=(const StageClock&) = delete;

 private:
  Timing* timing_;
  std::string name_;
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

// Runs body(i) for every i across `jobs` threads and rethrows the failure of
// the lowest index, so errors do not depend on scheduling.
template <typename Body>
void parallel_jobs(std::size_t n, int jobs, Body body) {
  std::vector<std::exception_ptr> errors(n);
#pragma omp parallel for schedule(dynamic) num_threads(std::max(1, jobs))
  for (std::size_t i = 0; i < n; ++i) {
    try {
      body(i);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
}

std::string region_job(int r) { return "region " + std::to_string(r); }

std::string device_job(int r, std::int64_t u) {
  return "region " + std::to_string(r) + " user " + std::to_string(u);
}

}  // namespace

void run_global_stage(const TierSplits& splits, const TrainConfig& cfg, const fs::path& out,
                      PipelineReport& report, Timing* timing) {
  StageClock clock(timing, "global");
  fs::create_directories(out);
  StageRun run{"global", "ok", {}};
  GlobalModel g;
  try {
    g = train_global(splits.global, splits.num_categories, cfg, &run.result);
  } catch (const Error& e) {
    run.status = std::string("failed: ") + e.what();
    report.global.push_back(run);
    throw StageError(std::string("global stage: ") + e.what());
  }
  save_checkpoint(global_checkpoint_path(out), g, cfg.format());
  report.global.push_back(std::move(run));
}

void run_region_stage(const TierSplits& splits, const TrainConfig& cfg,
                      const std::optional<fs::path>& global_ckpt, const PipelineOptions& opts,
                      PipelineReport& report, Timing* timing) {
  StageClock clock(timing, "region");
  fs::create_directories(opts.out);
  const bool scratch = cfg.mode == Mode::kDcprT;
  std::optional<GlobalModel> global;
  Digest global_hash{};
  if (!scratch) {
    if (!global_ckpt || !fs::exists(*global_ckpt)) {
      throw StageError("region stage in dcpr mode needs a global checkpoint" +
                       (global_ckpt ? " (missing: " + global_ckpt->string() + ")" : std::string()));
    }
    global = load_global(*global_ckpt);
    global_hash = parameter_hash(*global);
  }

  std::vector<const RegionSplit*> jobs;
  for (const auto& rs : splits.regions) {
    if (rs.edge.empty()) {
      report.warnings.push_back(region_job(rs.region) + ": no edge sequences, region skipped");
      continue;
    }
    jobs.push_back(&rs);
  }
  std::vector<std::size_t> order(jobs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  if (!opts.region_order.empty()) {
    std::vector<int> ids;
    for (const auto* j : jobs) ids.push_back(j->region);
    std::vector<int> want = opts.region_order;
    std::vector<int> sorted_want = want;
    std::sort(sorted_want.begin(), sorted_want.end());
    if (sorted_want != ids) throw InvalidArgument("region_order is not a permutation of the region jobs");
    for (std::size_t i = 0; i < want.size(); ++i) {
      order[i] = static_cast<std::size_t>(std::find(ids.begin(), ids.end(), want[i]) - ids.begin());
    }
  }

  std::vector<StageRun> runs(jobs.size());
  std::vector<JobAudit> audits(jobs.size());
  parallel_jobs(order.size(), opts.jobs, [&](std::size_t k) {
    const std::size_t i = order[k];
    const RegionSplit& rs = *jobs[i];
    StageRun& run = runs[i];
    run.job = region_job(rs.region);
    run.status = "ok";
    RegionModel m = specialize_region(global ? &*global : nullptr, rs, splits.num_categories, cfg, &run.result);
    save_checkpoint(region_checkpoint_path(opts.out, rs.region), m, cfg.format());
    JobAudit& a = audits[i];
    a.job = run.job;
    a.frozen = "global parameters";
    if (scratch) {
      a.status = "n/a";
    } else {
      a.before = hex(global_hash);
      a.after = hex(parameter_hash(m.base));
      a.status = a.before == a.after ? "pass" : "FAIL";
    }
  });
  if (global && parameter_hash(*global) != global_hash) {
    throw StageError("region stage: shared global model changed during edge training");
  }
  for (auto& r : runs) report.regions.push_back(std::move(r));
  for (auto& a : audits) report.audits.push_back(std::move(a));
}

void run_device_stage(const TierSplits& splits, const TrainConfig& cfg, const PipelineOptions& opts,
                      PipelineReport& report, Timing* timing) {
  StageClock clock(timing, "device");
  std::map<int, RegionModel> regions;
  std::map<int, Digest> hashes;
  struct Job {
    int region;
    const DeviceSequence* seq;
  };
  std::vector<Job> jobs;
  for (const auto& rs : splits.regions) {
    if (rs.device.empty()) continue;
    const fs::path p = region_checkpoint_path(opts.out, rs.region);
    if (!fs::exists(p)) {
      report.warnings.push_back(region_job(rs.region) + ": no region checkpoint, device jobs skipped");
      continue;
    }
    regions.emplace(rs.region, load_region(p));
    hashes[rs.region] = parameter_hash(regions.at(rs.region));
    for (const auto& seq : rs.device) jobs.push_back({rs.region, &seq});
  }

  std::vector<StageRun> runs(jobs.size());
  std::vector<JobAudit> audits(jobs.size());
  parallel_jobs(jobs.size(), opts.jobs, [&](std::size_t k) {
    const std::size_t i = opts.reverse_device_order ? jobs.size() - 1 - k : k;
    const Job& job = jobs[i];
    const RegionModel& region = regions.at(job.region);
    StageRun& run = runs[i];
    run.job = device_job(job.region, job.seq->user);
    JobAudit& a = audits[i];
    a.job = run.job;
    a.frozen = "region parameters";
    a.before = hex(hashes.at(job.region));
    if (job.seq->train().size() < 2) {
      run.status = "skipped: no training targets";
      a.after = a.before;
      a.status = "n/a";
      return;
    }
    run.status = "ok";
    PatchModel patch = personalize_device(region, *job.seq, cfg, job.region, &run.result);
    save_checkpoint(patch_checkpoint_path(opts.out, job.region, job.seq->user), patch, cfg.format());
    a.after = hex(parameter_hash(region));
    a.status = a.before == a.after ? "pass" : "FAIL";
  });
  for (std::size_t i = 0; i < runs.size(); ++i) {
    if (runs[i].status != "ok") report.warnings.push_back(runs[i].job + ": " + runs[i].status);
  }
  for (auto& r : runs) report.devices.push_back(std::move(r));
  for (auto& a : audits) report.audits.push_back(std::move(a));
}

EvalReport run_evaluation(const TierSplits& splits, const TrainConfig& cfg, const fs::path& dir, int jobs) {
  std::map<int, RegionModel> regions;
  std::map<PatchKey, PatchModel> patches;
  for (const auto& rs : splits.regions) {
    const fs::path p = region_checkpoint_path(dir, rs.region);
    if (!fs::exists(p)) continue;
    regions.emplace(rs.region, load_region(p));
    for (const auto& seq : rs.device) {
      const fs::path pp = patch_checkpoint_path(dir, rs.region, seq.user);
      if (fs::exists(pp)) patches.emplace(PatchKey{rs.region, seq.user}, load_patch(pp));
    }
  }
  return evaluate_all(splits, regions, patches, cfg, jobs);
}

PipelineReport run_pipeline(const TierSplits& splits, const TrainConfig& cfg, const PipelineOptions& opts) {
  cfg.validate();
  fs::create_directories(opts.out);
  PipelineReport report;
  report.config = cfg.format();
  report.mode = to_string(cfg.mode);
  report.warnings = splits.warnings;
  Timing timing;
  try {
    std::optional<fs::path> global;
    if (cfg.mode == Mode::kDcpr) {
      run_global_stage(splits, cfg, opts.out, report, &timing);
      global = global_checkpoint_path(opts.out);
    } else {
      report.global.push_back({"global", "skipped: region models trained from scratch", {}});
    }
    run_region_stage(splits, cfg, global, opts, report, &timing);
    run_device_stage(splits, cfg, opts, report, &timing);
    {
      StageClock clock(&timing, "evaluate");
      report.eval = run_evaluation(splits, cfg, opts.out, opts.jobs);
      report.evaluated = true;
    }
  } catch (const Error& e) {
    report.status = "aborted";
    report.error = e.what();
  }
  write_text(opts.out / "report.txt", format_report_text(report));
  write_text(opts.out / "report.json", format_report_json(report));
  write_text(opts.out / "timing.json", format_timing_json(timing));
  return report;
}

}  // namespace dcpr
