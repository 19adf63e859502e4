// dcpr: command-line driver for data preparation, the three training stages,
// evaluation and benchmarking.
//
// Exit codes: 0 ok, 1 other error, 2 usage / configuration, 3 missing input,
// 4 stage failure, 5 invalid data or checkpoint.

#include <omp.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dcpr/checkpoint.hpp"
#include "dcpr/config.hpp"
#include "dcpr/data.hpp"
#include "dcpr/error.hpp"
#include "dcpr/evaluation.hpp"
#include "dcpr/pipeline.hpp"
#include "dcpr/report.hpp"
#include "dcpr/training.hpp"

namespace fs = std::filesystem;
using namespace dcpr;

namespace {

constexpr int kExitOther = 1;
constexpr int kExitUsage = 2;
constexpr int kExitMissing = 3;
constexpr int kExitStage = 4;
constexpr int kExitInvalid = 5;

class MissingInput : public Error {
 public:
  using Error::Error;
};

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out = "out";
  std::string mode;
  int jobs = 0;
  std::string t_r;
  std::string dim;
  std::vector<std::string> sets;
};

struct Resolved {
  TrainConfig cfg;
  std::set<std::string> explicit_keys;
  int jobs = 1;
};

const fs::path& require_file(const fs::path& p, const std::string& what) {
  if (p.empty()) throw MissingInput(what + " path not given");
  if (!fs::exists(p)) throw MissingInput(what + " not found: " + p.string());
  return p;
}

std::string env_name(const std::string& key) {
  std::string n = "DCPR_";
  for (char c : key) n += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return n;
}

// Precedence: defaults < config file < DCPR_* environment < flags.
Resolved resolve(const Common& c, bool list_flags) {
  Resolved r;
  auto apply = [&](const std::string& key, const std::string& value) {
    r.cfg.set(key, value);
    r.explicit_keys.insert(key);
  };
  if (!c.config_path.empty()) {
    require_file(c.config_path, "config file");
    for (const auto& kv : parse_key_values(read_text_file(c.config_path), c.config_path)) apply(kv.key, kv.value);
  }

  std::vector<std::string> keys;
  for (const auto& kv : parse_key_values(TrainConfig{}.format(), "<defaults>")) keys.push_back(kv.key);
  std::set<std::string> known_env{"DCPR_JOBS"};
  for (const auto& k : keys) {
    known_env.insert(env_name(k));
    if (const char* v = std::getenv(env_name(k).c_str())) apply(k, v);
  }
  for (char** e = environ; *e; ++e) {
    const std::string entry = *e;
    if (entry.rfind("DCPR_", 0) != 0) continue;
    const std::string name = entry.substr(0, entry.find('='));
    if (!known_env.count(name)) throw ConfigError("unknown configuration variable " + name);
  }
  r.jobs = omp_get_num_procs();
  if (const char* v = std::getenv("DCPR_JOBS")) r.jobs = static_cast<int>(parse_int("DCPR_JOBS", v));

  for (const auto& s : c.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
    apply(s.substr(0, eq), s.substr(eq + 1));
  }
  if (c.seed) apply("seed", std::to_string(*c.seed));
  if (!c.mode.empty()) apply("mode", c.mode);
  if (!list_flags) {
    if (!c.t_r.empty()) apply("T_R", c.t_r);
    if (!c.dim.empty()) apply("dim", c.dim);
  }
  if (c.jobs > 0) r.jobs = c.jobs;
  if (r.jobs < 1) throw ConfigError("jobs must be >= 1");
  r.cfg.validate();
  return r;
}

SynthSpec synth_spec(const std::string& name_or_path) {
  if (auto preset = synth_preset(name_or_path)) return *preset;
  require_file(name_or_path, "synthetic spec");
  return load_synth_spec(name_or_path);
}

TierSplits splits_from(const CheckInDataset& ds, const TrainConfig& cfg) {
  const RegionMap rm = partition_regions(ds.pois(), cfg.regions, derive_seed(cfg.seed, "regions", 0));
  TierSplits s = build_tier_splits(ds, rm, cfg.region_fraction, derive_seed(cfg.seed, "splits", 0),
                                   static_cast<std::size_t>(cfg.max_seq_len));
  s.warnings.insert(s.warnings.begin(), rm.warnings.begin(), rm.warnings.end());
  return s;
}

struct DataSource {
  std::string splits;
  std::string checkins;
  std::string synth;
};

// Splits from --splits, --checkins or --synth (first given wins). A synthetic
// source sets the region count to the generator's unless configured.
TierSplits load_source(const DataSource& src, Resolved& r) {
  if (!src.splits.empty()) return load_splits(require_file(src.splits, "splits file"));
  if (!src.checkins.empty()) return splits_from(load_checkins(require_file(src.checkins, "check-in file")), r.cfg);
  if (!src.synth.empty()) {
    SynthSpec spec = synth_spec(src.synth);
    if (!r.explicit_keys.count("regions")) r.cfg.regions = spec.regions;
    return splits_from(synth_generate(spec, r.cfg.seed), r.cfg);
  }
  throw MissingInput("no input data: give --splits, --checkins or --synth");
}

void add_common(CLI::App* sub, Common& c, bool lists = false) {
  sub->add_option("--config", c.config_path, "key = value configuration file");
  sub->add_option("--seed", c.seed, "base random seed");
  sub->add_option("--out", c.out, "output directory")->capture_default_str();
  sub->add_option("--mode", c.mode, "dcpr | dcpr_t");
  sub->add_option("--jobs", c.jobs, "parallel jobs (default: available processors)");
  sub->add_option("--t-r", c.t_r, lists ? "comma-separated reverse step counts" : "reverse steps at inference");
  sub->add_option("--dim", c.dim, lists ? "comma-separated widths" : "embedding width");
  sub->add_option("--set", c.sets, "override any configuration key (key=value), repeatable");
}

void add_source(CLI::App* sub, DataSource& s) {
  sub->add_option("--splits", s.splits, "tier splits file written by prepare-data");
  sub->add_option("--checkins", s.checkins, "check-in CSV");
  sub->add_option("--synth", s.synth, "synthetic preset (tiny|small|medium) or spec file");
}

int exit_for_report(const PipelineReport& r) {
  if (r.status != "ok") {
    std::cerr << "dcpr: stage failure: " << r.error << "\n";
    return kExitStage;
  }
  if (!r.audits_passed()) {
    std::cerr << "dcpr: freeze audit failed\n";
    return kExitStage;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"DCPR next-POI recommendation: cloud / edge / device diffusion training"};
  app.require_subcommand(1);

  Common common;
  DataSource source;
  std::string checkins_path, global_path, models_dir;
  int warm_runs = 100;
  int bench_region = -1;

  auto* prepare = app.add_subcommand("prepare-data", "filter check-ins, partition regions, write tier splits");
  add_common(prepare, common);
  prepare->add_option("--checkins", checkins_path, "check-in CSV")->required();

  auto* synth = app.add_subcommand("synth", "write a synthetic check-in CSV");
  add_common(synth, common);
  synth->add_option("--synth", source.synth, "preset (tiny|small|medium) or spec file")->required();

  auto* train_global_cmd = app.add_subcommand("train-global", "stage 1: global category model");
  add_common(train_global_cmd, common);
  add_source(train_global_cmd, source);

  auto* train_region_cmd = app.add_subcommand("train-region", "stage 2: region models");
  add_common(train_region_cmd, common);
  add_source(train_region_cmd, source);
  train_region_cmd->add_option("--global", global_path, "global checkpoint (default: <out>/global.ckpt)");

  auto* train_device_cmd = app.add_subcommand("train-device", "stage 3: per-user patches");
  add_common(train_device_cmd, common);
  add_source(train_device_cmd, source);

  auto* evaluate_cmd = app.add_subcommand("evaluate", "test-target HR/NDCG with and without patches");
  add_common(evaluate_cmd, common);
  add_source(evaluate_cmd, source);
  evaluate_cmd->add_option("--models", models_dir, "checkpoint directory (default: <out>)");

  auto* bench_cmd = app.add_subcommand("bench", "on-device size, epoch time and latency per width and T_R");
  add_common(bench_cmd, common, true);
  add_source(bench_cmd, source);
  bench_cmd->add_option("--warm-runs", warm_runs, "timed inferences per row")->capture_default_str();
  bench_cmd->add_option("--region", bench_region, "region id (default: first with device data)");

  auto* pipeline_cmd = app.add_subcommand("pipeline", "all stages and evaluation");
  add_common(pipeline_cmd, common);
  add_source(pipeline_cmd, source);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    Resolved r = resolve(common, bench_cmd->parsed());
    const fs::path out = common.out;
    PipelineOptions opts{out, r.jobs, {}, false};

    if (prepare->parsed()) {
      TierSplits s = splits_from(load_checkins(require_file(checkins_path, "check-in file")), r.cfg);
      save_splits(out / "splits.json", s);
      write_text(out / "config.txt", r.cfg.format());
      std::size_t edge = 0, device = 0;
      for (const auto& rs : s.regions) {
        edge += rs.edge.size();
        device += rs.device.size();
      }
      std::cout << "regions " << s.regions.size() << ", global sequences " << s.global.size() << ", edge sequences "
                << edge << ", device sequences " << device << "\n";
      for (const auto& w : s.warnings) std::cerr << "warning: " << w << "\n";
      return 0;
    }
    if (synth->parsed()) {
      const SynthSpec spec = synth_spec(source.synth);
      const CheckInDataset ds = synth_generate(spec, r.cfg.seed);
      write_checkins(out / "checkins.csv", ds);
      write_text(out / "synth.txt", format_synth_spec(spec) + "seed_override = " + std::to_string(r.cfg.seed) + "\n");
      std::cout << "users " << ds.users().size() << ", pois " << ds.pois().size() << ", check-ins "
                << ds.num_checkins() << "\n";
      return 0;
    }

    const TierSplits splits = load_source(source, r);
    const std::string config = r.cfg.format();
    PipelineReport report;
    report.config = config;
    report.mode = to_string(r.cfg.mode);

    if (train_global_cmd->parsed()) {
      run_global_stage(splits, r.cfg, out, report);
      write_text(out / "global.json", format_stage_json(report.global.front(), config));
      std::cout << "wrote " << global_checkpoint_path(out).string() << "\n";
      return 0;
    }
    if (train_region_cmd->parsed()) {
      std::optional<fs::path> g;
      if (r.cfg.mode == Mode::kDcpr) g = global_path.empty() ? global_checkpoint_path(out) : fs::path(global_path);
      if (g && !fs::exists(*g)) throw MissingInput("dcpr mode needs a global checkpoint: " + g->string());
      run_region_stage(splits, r.cfg, g, opts, report);
      write_text(out / "region.txt", format_report_text(report));
      write_text(out / "region.json", format_report_json(report));
      for (const auto& w : report.warnings) std::cerr << "warning: " << w << "\n";
      return report.audits_passed() ? 0 : kExitStage;
    }
    if (train_device_cmd->parsed()) {
      run_device_stage(splits, r.cfg, opts, report);
      write_text(out / "device.txt", format_report_text(report));
      write_text(out / "device.json", format_report_json(report));
      for (const auto& w : report.warnings) std::cerr << "warning: " << w << "\n";
      return report.audits_passed() ? 0 : kExitStage;
    }
    if (evaluate_cmd->parsed()) {
      const fs::path dir = models_dir.empty() ? out : fs::path(models_dir);
      const EvalReport e = run_evaluation(splits, r.cfg, dir, r.jobs);
      write_text(out / "eval.txt", "[config]\n" + config + "\n[metrics]\n" + format_eval_text(e));
      write_text(out / "eval.json", format_eval_json(e, config));
      std::cout << format_eval_text(e);
      return 0;
    }
    if (bench_cmd->parsed()) {
      BenchOptions bo;
      bo.dims = common.dim.empty() ? std::vector<int>{r.cfg.dim} : parse_int_list("dim", common.dim);
      bo.reverse_steps = common.t_r.empty() ? std::vector<int>{r.cfg.reverse_steps} : parse_int_list("T_R", common.t_r);
      bo.warm_runs = warm_runs;
      for (int t : bo.reverse_steps) {
        if (t < 1 || t > r.cfg.max_step) throw ConfigError("T_R values must lie in [1, T]");
      }
      const RegionSplit* region = nullptr;
      for (const auto& rs : splits.regions) {
        if (bench_region >= 0 ? rs.region == bench_region : !rs.device.empty()) {
          region = &rs;
          break;
        }
      }
      if (!region) throw MissingInput("no region with device data for benchmarking");
      const auto rows = bench(*region, splits.num_categories, r.cfg, bo);
      write_text(out / "bench.txt", format_bench_text(rows, config));
      write_text(out / "bench.json", format_bench_json(rows, config));
      std::cout << format_bench_text(rows, config);
      return 0;
    }
    if (pipeline_cmd->parsed()) {
      save_splits(out / "splits.json", splits);
      const PipelineReport pr = run_pipeline(splits, r.cfg, opts);
      std::cout << format_report_text(pr);
      return exit_for_report(pr);
    }
  } catch (const MissingInput& e) {
    std::cerr << "dcpr: missing input: " << e.what() << "\n";
    return kExitMissing;
  } catch (const ConfigError& e) {
    std::cerr << "dcpr: configuration error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const StageError& e) {
    std::cerr << "dcpr: stage failure: " << e.what() << "\n";
    return kExitStage;
  } catch (const CheckpointError& e) {
    std::cerr << "dcpr: invalid checkpoint: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const DataError& e) {
    std::cerr << "dcpr: invalid data: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const std::exception& e) {
    std::cerr << "dcpr: error: " << e.what() << "\n";
    return kExitOther;
  }
  return kExitOther;
}
