#pragma once

// Three-tier training pipeline: cloud global training, parallel edge
// specialisation per region, parallel device personalisation per user. Tiers
// exchange checkpoint files through an output directory.

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dcpr/config.hpp"
#include "dcpr/data.hpp"
#include "dcpr/evaluation.hpp"
#include "dcpr/training.hpp"

namespace dcpr {

struct StageRun {
  std::string job;     // "global", "region 3", "region 3 user 17"
  std::string status;  // "ok", "skipped: ..."
  StageResult result;
};

struct JobAudit {
  std::string job;
  std::string frozen;  // which tensors were frozen
  std::string before;  // hex SHA-256
  std::string after;
  std::string status;  // "pass", "FAIL", "n/a"
};

struct PipelineReport {
  std::string config;  // resolved configuration, verbatim
  std::string mode;
  std::string status = "ok";
  std::string error;
  std::vector<std::string> warnings;
  std::vector<StageRun> global;
  std::vector<StageRun> regions;
  std::vector<StageRun> devices;
  std::vector<JobAudit> audits;
  bool evaluated = false;
  EvalReport eval;

  bool audits_passed() const;
};

// Wall-clock seconds per stage; kept apart from the deterministic report.
struct Timing {
  std::vector<std::pair<std::string, double>> entries;
};

struct PipelineOptions {
  std::filesystem::path out;
  int jobs = 1;
  // Execution order of region jobs (region ids); empty = ascending.
  std::vector<int> region_order;
  // Run device jobs in reverse order (job-independence checks).
  bool reverse_device_order = false;
};

std::filesystem::path global_checkpoint_path(const std::filesystem::path& dir);
std::filesystem::path region_checkpoint_path(const std::filesystem::path& dir, int region);
std::filesystem::path patch_checkpoint_path(const std::filesystem::path& dir, int region, std::int64_t user);

// Stage 1: trains the global model and writes global.ckpt.
void run_global_stage(const TierSplits& splits, const TrainConfig& cfg, const std::filesystem::path& out,
                      PipelineReport& report, Timing* timing = nullptr);

// Stage 2: one job per region. In dcpr mode `global_ckpt` must exist; in
// dcpr_t mode it is ignored.
void run_region_stage(const TierSplits& splits, const TrainConfig& cfg,
                      const std::optional<std::filesystem::path>& global_ckpt,
                      const PipelineOptions& opts, PipelineReport& report, Timing* timing = nullptr);

// Stage 3: one job per (region, user) reading region_<r>.ckpt from opts.out.
void run_device_stage(const TierSplits& splits, const TrainConfig& cfg, const PipelineOptions& opts,
                      PipelineReport& report, Timing* timing = nullptr);

// Loads region and patch checkpoints from `dir` and evaluates every device
// sequence's test target.
EvalReport run_evaluation(const TierSplits& splits, const TrainConfig& cfg, const std::filesystem::path& dir,
                          int jobs);

// All stages plus evaluation; writes report.txt, report.json and timing.json
// to opts.out. Stage failures are recorded in the returned (partial) report
// with status "aborted".
PipelineReport run_pipeline(const TierSplits& splits, const TrainConfig& cfg, const PipelineOptions& opts);

}  // namespace dcpr
