// Serial reference versus OpenMP job pool for the region and device stages
// and for evaluation. Checks that both paths write identical checkpoints.

#include <omp.h>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <string>

#include "CLI11.hpp"
#include "dcpr/checkpoint.hpp"
#include "dcpr/data.hpp"
#include "dcpr/pipeline.hpp"

namespace fs = std::filesystem;
using namespace dcpr;

namespace {

double seconds(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

bool same_files(const fs::path& a, const fs::path& b) {
  for (const auto& e : fs::directory_iterator(a)) {
    if (e.path().extension() != ".ckpt") continue;
    const fs::path other = b / e.path().filename();
    if (!fs::exists(other) || read_bytes(e.path()) != read_bytes(other)) return false;
  }
  return true;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"serial vs parallel stage benchmark"};
  std::string preset = "small";
  std::string out = "bench_out";
  int jobs = omp_get_num_procs();
  int epochs = 3;
  app.add_option("--synth", preset, "synthetic preset")->capture_default_str();
  app.add_option("--out", out, "scratch directory")->capture_default_str();
  app.add_option("--jobs", jobs, "parallel job count")->capture_default_str();
  app.add_option("--epochs", epochs, "epochs per stage")->capture_default_str();
  CLI11_PARSE(app, argc, argv);

  try {
    SynthSpec spec = *synth_preset(preset);
    TrainConfig cfg;
    cfg.dim = 16;
    cfg.max_epochs = epochs;
    cfg.regions = spec.regions;
    cfg.history_window = 20;
    const CheckInDataset ds = synth_generate(spec, cfg.seed);
    const RegionMap rm = partition_regions(ds.pois(), cfg.regions, cfg.seed);
    const TierSplits splits = build_tier_splits(ds, rm, cfg.region_fraction, cfg.seed);

    PipelineReport scratch;
    run_global_stage(splits, cfg, fs::path(out) / "serial", scratch);
    fs::create_directories(fs::path(out) / "parallel");
    fs::copy_file(fs::path(out) / "serial" / "global.ckpt", fs::path(out) / "parallel" / "global.ckpt",
                  fs::copy_options::overwrite_existing);

    std::printf("%-10s %6s %12s %12s\n", "stage", "jobs", "serial(s)", "parallel(s)");
    double t_serial[3], t_parallel[3];
    for (int pass = 0; pass < 2; ++pass) {
      const int n = pass == 0 ? 1 : jobs;
      PipelineOptions opts{fs::path(out) / (pass == 0 ? "serial" : "parallel"), n, {}, false};
      PipelineReport report;
      double* t = pass == 0 ? t_serial : t_parallel;
      auto start = std::chrono::steady_clock::now();
      run_region_stage(splits, cfg, global_checkpoint_path(opts.out), opts, report);
      t[0] = seconds(start);
      start = std::chrono::steady_clock::now();
      run_device_stage(splits, cfg, opts, report);
      t[1] = seconds(start);
      start = std::chrono::steady_clock::now();
      run_evaluation(splits, cfg, opts.out, n);
      t[2] = seconds(start);
    }
    const char* names[] = {"region", "device", "evaluate"};
    for (int i = 0; i < 3; ++i) std::printf("%-10s %6d %12.3f %12.3f\n", names[i], jobs, t_serial[i], t_parallel[i]);
    const bool same = same_files(fs::path(out) / "serial", fs::path(out) / "parallel");
    std::printf("checkpoints identical: %s\n", same ? "yes" : "NO");
    return same ? 0 : 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
