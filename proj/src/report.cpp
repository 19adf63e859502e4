#include "dcpr/report.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "dcpr/error.hpp"
#include "json.hpp"

namespace dcpr {

using nlohmann::ordered_json;

namespace {

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

ordered_json metrics_json(const Metrics& m) {
  return {{"hr5", m.hr5}, {"hr10", m.hr10}, {"ndcg5", m.ndcg5}, {"ndcg10", m.ndcg10}, {"cases", m.cases}};
}

ordered_json stage_json(const StageRun& run) {
  ordered_json curve = ordered_json::array();
  for (const auto& e : run.result.curve) {
    curve.push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val_loss", e.val_loss}});
  }
  return {{"job", run.job},
          {"status", run.status},
          {"train_examples", run.result.train_examples},
          {"val_examples", run.result.val_examples},
          {"epochs_run", run.result.epochs_run},
          {"best_epoch", run.result.best_epoch},
          {"best_val_loss", run.result.best_val_loss},
          {"early_stopped", run.result.early_stopped},
          {"curve", curve}};
}

ordered_json eval_json(const EvalReport& e) {
  ordered_json regions = ordered_json::array();
  for (const auto& [r, m] : e.region_plain) {
    regions.push_back({{"region", r}, {"region_only", metrics_json(m)},
                       {"with_patch", metrics_json(e.region_patched.at(r))}});
  }
  ordered_json cases = ordered_json::array();
  for (const auto& c : e.cases) {
    cases.push_back({{"region", c.region}, {"user", c.user}, {"candidates", c.candidates},
                     {"rank_region_only", c.rank_plain}, {"rank_with_patch", c.rank_patched},
                     {"has_patch", c.has_patch}});
  }
  return {{"overall", {{"region_only", metrics_json(e.overall_plain)}, {"with_patch", metrics_json(e.overall_patched)}}},
          {"regions", regions},
          {"flags", e.flags},
          {"cases", cases}};
}

void metrics_row(std::ostringstream& o, const std::string& label, const Metrics& m) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "  %-22s %8.4f %8.4f %8.4f %8.4f %6zu\n", label.c_str(), m.hr5, m.hr10,
                m.ndcg5, m.ndcg10, m.cases);
  o << buf;
}

void stage_lines(std::ostringstream& o, const std::vector<StageRun>& runs) {
  for (const auto& r : runs) {
    o << "  " << r.job << ": " << r.status;
    if (r.status == "ok") {
      o << ", examples " << r.result.train_examples << "/" << r.result.val_examples << ", epochs "
        << r.result.epochs_run << ", best epoch " << r.result.best_epoch << ", best val loss "
        << fmt("%.6f", r.result.best_val_loss) << (r.result.early_stopped ? ", early stop" : "");
    }
    o << "\n";
  }
}

}  // namespace

std::string format_eval_text(const EvalReport& e) {
  std::ostringstream o;
  o << "  " << std::string(22, ' ') << "     HR@5    HR@10   NDCG@5  NDCG@10  cases\n";
  metrics_row(o, "overall region-only", e.overall_plain);
  metrics_row(o, "overall with patch", e.overall_patched);
  for (const auto& [r, m] : e.region_plain) {
    metrics_row(o, "region " + std::to_string(r) + " region-only", m);
    metrics_row(o, "region " + std::to_string(r) + " with patch", e.region_patched.at(r));
  }
  for (const auto& f : e.flags) o << "  flag: " << f << "\n";
  return o.str();
}

std::string format_report_text(const PipelineReport& r) {
  std::ostringstream o;
  o << "DCPR pipeline report\n";
  o << "mode: " << r.mode << "\n";
  o << "status: " << r.status << "\n";
  if (!r.error.empty()) o << "error: " << r.error << "\n";
  o << "\n[config]\n" << r.config;
  o << "\n[global stage]\n";
  stage_lines(o, r.global);
  o << "\n[region stage]\n";
  stage_lines(o, r.regions);
  o << "\n[device stage]\n";
  stage_lines(o, r.devices);
  o << "\n[freeze audits] " << (r.audits_passed() ? "all passed" : "FAILED") << "\n";
  for (const auto& a : r.audits) {
    o << "  " << a.job << ": " << a.status;
    if (a.status != "n/a") o << " (" << a.frozen << " " << a.after.substr(0, 16) << ")";
    o << "\n";
  }
  if (!r.warnings.empty()) {
    o << "\n[warnings]\n";
    for (const auto& w : r.warnings) o << "  " << w << "\n";
  }
  if (r.evaluated) o << "\n[metrics]\n" << format_eval_text(r.eval);
  return o.str();
}

std::string format_report_json(const PipelineReport& r) {
  ordered_json stages = ordered_json::object();
  for (const auto* group : {&r.global, &r.regions, &r.devices}) {
    ordered_json arr = ordered_json::array();
    for (const auto& run : *group) arr.push_back(stage_json(run));
    stages[group == &r.global ? "global" : group == &r.regions ? "region" : "device"] = arr;
  }
  ordered_json audits = ordered_json::array();
  for (const auto& a : r.audits) {
    audits.push_back({{"job", a.job}, {"frozen", a.frozen}, {"before", a.before}, {"after", a.after}, {"status", a.status}});
  }
  ordered_json j = {{"format", "dcpr-report-1"},
                    {"mode", r.mode},
                    {"status", r.status},
                    {"error", r.error},
                    {"config", r.config},
                    {"stages", stages},
                    {"audits_passed", r.audits_passed()},
                    {"audits", audits},
                    {"warnings", r.warnings}};
  j["metrics"] = r.evaluated ? eval_json(r.eval) : ordered_json(nullptr);
  return j.dump(2) + "\n";
}

std::string format_eval_json(const EvalReport& e, const std::string& config) {
  ordered_json j = {{"format", "dcpr-eval-1"}, {"config", config}};
  j["metrics"] = eval_json(e);
  return j.dump(2) + "\n";
}

std::string format_stage_json(const StageRun& run, const std::string& config) {
  ordered_json j = {{"format", "dcpr-stage-1"}, {"config", config}};
  j["stage"] = stage_json(run);
  return j.dump(2) + "\n";
}

std::string format_bench_text(std::span<const BenchRow> rows, const std::string& config) {
  std::ostringstream o;
  o << "DCPR benchmark\n\n[config]\n" << config << "\n";
  o << "     d    T_R   size(MB)   epoch(s)  latency(ms)  denoiser calls\n";
  for (const auto& r : rows) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%6d %6d %10.4f %10.4f %12.4f %15d\n", r.dim, r.reverse_steps, r.size_mb,
                  r.epoch_seconds, r.latency_ms, r.denoiser_calls);
    o << buf;
  }
  return o.str();
}

std::string format_bench_json(std::span<const BenchRow> rows, const std::string& config) {
  ordered_json arr = ordered_json::array();
  for (const auto& r : rows) {
    arr.push_back({{"dim", r.dim}, {"t_r", r.reverse_steps}, {"size_mb", r.size_mb},
                   {"epoch_seconds", r.epoch_seconds}, {"latency_ms", r.latency_ms},
                   {"denoiser_calls", r.denoiser_calls}});
  }
  ordered_json j = {{"format", "dcpr-bench-1"}, {"config", config}, {"rows", arr}};
  return j.dump(2) + "\n";
}

std::string format_timing_json(const Timing& t) {
  ordered_json j = ordered_json::object();
  for (const auto& [name, s] : t.entries) j[name] = s;
  return j.dump(2) + "\n";
}

void write_text(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << content;
  if (!out) throw Error("failed writing " + path.string());
}

}  // namespace dcpr
