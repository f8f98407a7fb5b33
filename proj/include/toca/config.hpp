#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "toca/analysis.hpp"
#include "toca/model.hpp"
#include "toca/sampler.hpp"
#include "toca/schedule.hpp"

namespace toca {

struct ModelSection {
    ModelConfig dims;
    std::uint64_t weight_seed = 0;

    bool operator==(const ModelSection&) const = default;
};

struct SamplerSection {
    std::size_t steps = 20;
    SamplerKind kind = SamplerKind::Ddpm;
    bool cfg = false;
    double guidance = 1.5;
    std::uint64_t seed = 0;
    /// Number of samples; sample k uses seed + k.
    std::size_t samples = 1;
    std::size_t class_label = 0;
    double beta_start = 1e-4;
    double beta_end = 2e-2;

    bool operator==(const SamplerSection&) const = default;
};

struct OutputSection {
    std::string dir = "out";
    bool csv = true;
    bool json = true;
    bool pgm = true;
    bool raw = true;

    bool operator==(const OutputSection&) const = default;
};

struct AnalysisSection {
    /// Layers for the redundancy profile; empty means every layer.
    std::vector<std::size_t> layers;
    std::size_t site_layer = 0;
    ModuleKind site_kind = ModuleKind::SelfAttention;
    std::size_t site_token = 0;
    double sigma = 0.5;
    NoiseScale scale = NoiseScale::Absolute;
    double timestep = 10.0;

    bool operator==(const AnalysisSection&) const = default;
};

struct RunConfig {
    ModelSection model;
    SamplerSection sampler;
    Profile profile = Profile::TocaDit;
    /// Resolved schedule; empty when the profile is off.
    std::optional<CacheSchedule> cache = profile_schedule(Profile::TocaDit);
    OutputSection output;
    AnalysisSection analysis;

    /// Throws ConfigError when a section violates its module's invariants.
    void validate() const;

    GenerationConfig generation(std::uint64_t seed) const;

    bool operator==(const RunConfig&) const = default;
};

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Parses the sectioned key = value format. Unknown sections or keys,
/// malformed values and invariant violations raise ConfigError naming the
/// line. Cache keys are applied on top of the profile's defaults;
/// `profile_override` replaces the profile named in the text.
RunConfig parse_config(std::string_view text, std::optional<Profile> profile_override = {});
RunConfig load_config(const std::filesystem::path& path,
                      std::optional<Profile> profile_override = {});

/// Canonical text form; parse_config(serialize_config(c)) == c.
std::string serialize_config(const RunConfig& config);

/// 16 hex digits of FNV-1a over the canonical text.
std::string config_hash(const RunConfig& config);

/// Applies TOCA_SEED when set. Throws ConfigError for a malformed value.
void apply_environment(RunConfig& config);

}  // namespace toca
