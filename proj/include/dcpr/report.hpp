#pragma once

// Human-readable and JSON renderings of pipeline, evaluation and benchmark
// results.

#include <filesystem>
#include <span>
#include <string>

#include "dcpr/evaluation.hpp"
#include "dcpr/pipeline.hpp"

namespace dcpr {

std::string format_report_text(const PipelineReport& r);
std::string format_report_json(const PipelineReport& r);

std::string format_eval_text(const EvalReport& e);
std::string format_eval_json(const EvalReport& e, const std::string& config);

std::string format_stage_json(const StageRun& run, const std::string& config);

std::string format_bench_text(std::span<const BenchRow> rows, const std::string& config);
std::string format_bench_json(std::span<const BenchRow> rows, const std::string& config);

std::string format_timing_json(const Timing& t);

void write_text(const std::filesystem::path& path, const std::string& content);

}  // namespace dcpr
