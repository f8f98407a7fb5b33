#pragma once

#include <filesystem>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "toca/config.hpp"

namespace toca {

/// Writes `content` to a sibling temporary file and renames it over `path`.
/// Throws std::runtime_error on any I/O failure.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

/// "# toca config_hash=<hash>" line used as the first line of text artifacts.
std::string header_line(const RunConfig& config);

/// Prefixes a JSON object with a "config_hash" member.
std::string with_hash(const RunConfig& config, std::string_view json_object);

struct CommandResult {
    std::vector<std::filesystem::path> artifacts;
    /// One-line human summary for stdout.
    std::string summary;
};

/// Generates config.sampler.samples images. Per seed: x0_<seed>.f32 (raw
/// f32 LE, N x D row-major), dispatches_<seed>.csv, stats_<seed>.json and,
/// with caching on, frequency_<seed>.pgm plus its JSON summary.
CommandResult cmd_sample(const RunConfig& config);

enum class Analysis { Redundancy, Propagation };

CommandResult cmd_analyze(const RunConfig& config, Analysis which);

/// Whole-run FLOPs estimate plus the closed-form/instrumentation cross-check.
/// Throws std::runtime_error when the cross-check disagrees.
CommandResult cmd_bench(const RunConfig& config);

/// Resolved config and its analytic FLOPs summary.
CommandResult cmd_report(const RunConfig& config);

/// Throws std::runtime_error unless every artifact exists and is non-empty.
void verify_artifacts(const CommandResult& result);

}  // namespace toca
