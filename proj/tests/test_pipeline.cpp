#include <gtest/gtest.h>

#include <filesystem>

#include "dcpr/checkpoint.hpp"
#include "dcpr/error.hpp"
#include "dcpr/pipeline.hpp"
#include "dcpr/report.hpp"

using namespace dcpr;
namespace fs = std::filesystem;

namespace {

TierSplits tiny_splits() {
  const CheckInDataset ds = synth_generate(*synth_preset("tiny"), 7);
  return build_tier_splits(ds, partition_regions(ds.pois(), 2, 7), 0.5, 7);
}

TrainConfig quick() {
  TrainConfig c;
  c.dim = 8;
  c.max_epochs = 2;
  c.history_window = 4;
  c.negatives = 4;
  c.loss = LossForm::kBce;
  c.seed = 7;
  return c;
}

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("dcpr_pipeline_" + name);
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST(Pipeline, WritesArtifactsAndPassesAudits) {
  const fs::path out = scratch_dir("full");
  const PipelineReport r = run_pipeline(tiny_splits(), quick(), {out, 2, {}, false});
  EXPECT_EQ(r.status, "ok");
  EXPECT_TRUE(r.audits_passed());
  EXPECT_TRUE(r.evaluated);
  EXPECT_TRUE(fs::exists(out / "report.txt"));
  EXPECT_TRUE(fs::exists(out / "report.json"));
  EXPECT_TRUE(fs::exists(out / "timing.json"));
  EXPECT_TRUE(fs::exists(global_checkpoint_path(out)));
  // Every artifact carries the resolved configuration.
  EXPECT_EQ(load_checkpoint(global_checkpoint_path(out)).config, quick().format());
  EXPECT_NE(format_report_text(r).find("seed = 7"), std::string::npos);
  fs::remove_all(out);
}

TEST(Pipeline, RegionStageNeedsGlobalCheckpointInDcprMode) {
  const fs::path out = scratch_dir("noglobal");
  PipelineReport rep;
  const PipelineOptions opts{out, 1, {}, false};
  EXPECT_THROW(run_region_stage(tiny_splits(), quick(), std::nullopt, opts, rep), StageError);
  EXPECT_THROW(run_region_stage(tiny_splits(), quick(), out / "missing.ckpt", opts, rep), Error);
  TrainConfig t = quick();
  t.mode = Mode::kDcprT;
  PipelineReport rep_t;
  EXPECT_NO_THROW(run_region_stage(tiny_splits(), t, std::nullopt, opts, rep_t));
  for (const auto& a : rep_t.audits) EXPECT_EQ(a.status, "n/a");
  fs::remove_all(out);
}

TEST(Pipeline, DcprTRecordsSkippedGlobalStage) {
  const fs::path out = scratch_dir("dcprt");
  TrainConfig t = quick();
  t.mode = Mode::kDcprT;
  const PipelineReport r = run_pipeline(tiny_splits(), t, {out, 1, {}, false});
  EXPECT_EQ(r.status, "ok");
  ASSERT_EQ(r.global.size(), 1u);
  EXPECT_NE(r.global[0].status.find("skipped"), std::string::npos);
  EXPECT_FALSE(fs::exists(global_checkpoint_path(out)));
  fs::remove_all(out);
}

TEST(Pipeline, InvalidRegionOrderIsRejected) {
  const fs::path out = scratch_dir("order");
  TrainConfig t = quick();
  t.mode = Mode::kDcprT;
  PipelineReport rep;
  EXPECT_THROW(run_region_stage(tiny_splits(), t, std::nullopt, {out, 1, {0, 0}, false}, rep), Error);
  fs::remove_all(out);
}

TEST(Pipeline, CorruptRegionCheckpointAbortsDeviceStage) {
  const fs::path out = scratch_dir("corrupt");
  const TierSplits s = tiny_splits();
  TrainConfig t = quick();
  t.mode = Mode::kDcprT;
  PipelineReport rep;
  const PipelineOptions opts{out, 1, {}, false};
  run_region_stage(s, t, std::nullopt, opts, rep);
  const fs::path ck = region_checkpoint_path(out, s.regions.front().region);
  auto bytes = read_bytes(ck);
  bytes[bytes.size() / 2] ^= 0xff;
  write_bytes(ck, bytes);
  EXPECT_THROW(run_device_stage(s, t, opts, rep), CheckpointError);
  fs::remove_all(out);
}

TEST(Report, JsonHasFormatTag) {
  PipelineReport r;
  r.mode = "dcpr";
  const std::string j = format_report_json(r);
  EXPECT_NE(j.find("\"format\": \"dcpr-report-1\""), std::string::npos);
  EXPECT_NE(j.find("\"metrics\": null"), std::string::npos);
}
