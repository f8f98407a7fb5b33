#include "toca/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

namespace toca {

namespace {

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

std::vector<std::string_view> split_list(std::string_view s) {
    std::vector<std::string_view> out;
    while (true) {
        const auto comma = s.find(',');
        out.push_back(trim(s.substr(0, comma)));
        if (comma == std::string_view::npos) break;
        s.remove_prefix(comma + 1);
    }
    return out;
}

template <typename T>
T parse_unsigned(std::string_view s) {
    T value{};
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty()) {
        throw std::invalid_argument("expected a non-negative integer, got '" + std::string(s) + "'");
    }
    return value;
}

double parse_double(std::string_view s) {
    double value = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty() || !std::isfinite(value)) {
        throw std::invalid_argument("expected a finite number, got '" + std::string(s) + "'");
    }
    return value;
}

bool parse_bool(std::string_view s) {
    if (s == "true") return true;
    if (s == "false") return false;
    throw std::invalid_argument("expected true or false, got '" + std::string(s) + "'");
}

SamplerKind parse_sampler(std::string_view s) {
    if (s == "ddpm") return SamplerKind::Ddpm;
    if (s == "ddim") return SamplerKind::Ddim;
    throw std::invalid_argument("unknown sampler '" + std::string(s) + "'");
}

std::string_view to_string(SamplerKind kind) {
    return kind == SamplerKind::Ddpm ? "ddpm" : "ddim";
}

ModuleKind parse_module(std::string_view s) {
    for (ModuleKind k : {ModuleKind::SelfAttention, ModuleKind::CrossAttention, ModuleKind::Mlp,
                         ModuleKind::Head}) {
        if (to_string(k) == s) return k;
    }
    throw std::invalid_argument("unknown module type '" + std::string(s) + "'");
}

NoiseScale parse_scale(std::string_view s) {
    if (s == "absolute") return NoiseScale::Absolute;
    if (s == "relative") return NoiseScale::Relative;
    throw std::invalid_argument("unknown noise scale '" + std::string(s) + "'");
}

std::string_view to_string(NoiseScale scale) {
    return scale == NoiseScale::Absolute ? "absolute" : "relative";
}

std::string format_double(double v) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

using Setter = std::function<void(RunConfig&, CacheSchedule&, std::string_view)>;

const std::map<std::string, std::map<std::string, Setter>>& setters() {
    static const std::map<std::string, std::map<std::string, Setter>> table = {
        {"model",
         {
             {"depth", [](RunConfig& c, CacheSchedule&, std::string_view v) { c.model.dims.depth = parse_unsigned<std::size_t>(v); }},
             {"hidden", [](RunConfig& c, CacheSchedule&, std::string_view v) { c.model.dims.hidden = parse_unsigned<std::size_t>(v); }},
             {"heads", [](RunConfig& c, CacheSchedule&, std::string_view v) { c.model.dims.heads = parse_unsigned<std::size_t>(v); }},
             {"grid_h", [](RunConfig& c, CacheSchedule&, std::string_view v) { c.model.dims.grid_h = parse_unsigned<std::size_t>(v); }},
             {"grid_w", [](RunConfig& c, CacheSchedule&, std::string_view v) { c.model.dims.grid_w = parse_unsigned<std::size_t>(v); }},
             {"text_tokens", [](RunConfig& c, CacheSchedule&, std::string_view v) { c.model.dims.text_tokens = parse_unsigned<std::size_t>(v); }},
             {"num_classes", [](RunConfig& c, CacheSchedule&, std::string_view v) { c.model.dims.num_classes = parse_unsigned<std::size_t>(v); }},
             {"weight_seed", [](RunConfig& c, CacheSchedule&, std::string_view v) { c.model.weight_seed = parse_unsigned<std::uint64_t>(v); }},
         }},
        {"sampler",
         {
             {"steps", [](RunConfig& c, CacheSchedule&, std::string_view v) { c.sampler.steps = parse_unsigned<std::size_t>(v); }},
             {"kind", [](RunConfig& c, CacheSchedule&, std::string_view v) { c.sampler.kind = parse_sampler(v); }},
             {"cfg", [](RunConfig& c, CacheSchedule&, std::string_view v) { c.sampler.cfg = parse_bool(v); }},
             {"guidance", [](RunConfig& c, CacheSchedule&, std::string_view v) { c.sampler.guidance = parse_double(v); }},
             {"seed", [](RunConfig& c, CacheSchedule&, std::string_view v) { c.sampler.seed = parse_unsigned<std::uint64_t>(v); }},
             {"samples", [](RunConfig& c, CacheSchedule&, std::string_view v) { c.sampler.samples = parse_unsigned<std::size_t>(v); }},
             {"class_label", [](RunConfig& c, CacheSchedule&, std::string_view v) { c.sampler.class_label = parse_unsigned<std::size_t>(v); }},
             {"beta_start", [](RunConfig& c, CacheSchedule&, std::string_view v) { c.sampler.beta_start = parse_double(v); }},
             {"beta_end", [](RunConfig& c, CacheSchedule&, std::string_view v) { c.sampler.beta_end = parse_double(v); }},
         }},
        {"cache",
         {
             // The profile is handled before any other cache key.
             {"profile", [](RunConfig&, CacheSchedule&, std::string_view) {}},
             {"ratio", [](RunConfig&, CacheSchedule& s, std::string_view v) { s.ratio = parse_double(v); }},
             {"base_cycle", [](RunConfig&, CacheSchedule& s, std::string_view v) { s.base_cycle = parse_double(v); }},
             {"lambda_attention", [](RunConfig&, CacheSchedule& s, std::string_view v) { s.lambda_attention = parse_double(v); }},
             {"lambda_entropy", [](RunConfig&, CacheSchedule& s, std::string_view v) { s.lambda_entropy = parse_double(v); }},
             {"lambda_frequency", [](RunConfig&, CacheSchedule& s, std::string_view v) { s.lambda_frequency = parse_double(v); }},
             {"lambda_spatial", [](RunConfig&, CacheSchedule& s, std::string_view v) { s.lambda_spatial = parse_double(v); }},
             {"depth_slope", [](RunConfig&, CacheSchedule& s, std::string_view v) { s.depth_slope = parse_double(v); }},
             {"step_slope", [](RunConfig&, CacheSchedule& s, std::string_view v) { s.step_slope = parse_double(v); }},
             {"type_tradeoff", [](RunConfig&, CacheSchedule& s, std::string_view v) { s.type_tradeoff = parse_double(v); }},
             {"cycle_slope", [](RunConfig&, CacheSchedule& s, std::string_view v) { s.cycle_slope = parse_double(v); }},
             {"grid", [](RunConfig&, CacheSchedule& s, std::string_view v) { s.grid = parse_unsigned<std::size_t>(v); }},
             {"center", [](RunConfig&, CacheSchedule& s, std::string_view v) { s.center = parse_double(v); }},
             {"cfg_coupled", [](RunConfig&, CacheSchedule& s, std::string_view v) { s.cfg_coupled = parse_bool(v); }},
             {"mode", [](RunConfig&, CacheSchedule& s, std::string_view v) { s.mode = parse_ratio_mode(v); }},
             {"fixed_window",
              [](RunConfig&, CacheSchedule& s, std::string_view v) {
                  if (v == "none") {
                      s.fixed_window.reset();
                      return;
                  }
                  const auto parts = split_list(v);
                  if (parts.size() != 3) {
                      throw std::invalid_argument("expected 'none' or begin,end,cycle");
                  }
                  s.fixed_window = FixedCycleWindow{parse_unsigned<std::size_t>(parts[0]),
                                                    parse_unsigned<std::size_t>(parts[1]),
                                                    parse_unsigned<std::size_t>(parts[2])};
              }},
         }},
        {"output",
         {
             {"dir", [](RunConfig& c, CacheSchedule&, std::string_view v) {
                  if (v.empty()) throw std::invalid_argument("output dir must not be empty");
                  c.output.dir = std::string(v);
              }},
             {"formats",
              [](RunConfig& c, CacheSchedule&, std::string_view v) {
                  c.output.csv = c.output.json = c.output.pgm = c.output.raw = false;
                  for (auto f : split_list(v)) {
                      if (f.empty()) continue;
                      if (f == "csv") c.output.csv = true;
                      else if (f == "json") c.output.json = true;
                      else if (f == "pgm") c.output.pgm = true;
                      else if (f == "raw") c.output.raw = true;
                      else throw std::invalid_argument("unknown format '" + std::string(f) + "'");
                  }
              }},
         }},
        {"analysis",
         {
             {"layers",
              [](RunConfig& c, CacheSchedule&, std::string_view v) {
                  c.analysis.layers.clear();
                  if (v == "all") return;
                  for (auto part : split_list(v)) {
                      c.analysis.layers.push_back(parse_unsigned<std::size_t>(part));
                  }
              }},
             {"site_layer", [](RunConfig& c, CacheSchedule&, std::string_view v) { c.analysis.site_layer = parse_unsigned<std::size_t>(v); }},
             {"site_type", [](RunConfig& c, CacheSchedule&, std::string_view v) { c.analysis.site_kind = parse_module(v); }},
             {"site_token", [](RunConfig& c, CacheSchedule&, std::string_view v) { c.analysis.site_token = parse_unsigned<std::size_t>(v); }},
             {"sigma", [](RunConfig& c, CacheSchedule&, std::string_view v) { c.analysis.sigma = parse_double(v); }},
             {"noise_scale", [](RunConfig& c, CacheSchedule&, std::string_view v) { c.analysis.scale = parse_scale(v); }},
             {"timestep", [](RunConfig& c, CacheSchedule&, std::string_view v) { c.analysis.timestep = parse_double(v); }},
         }},
    };
    return table;
}

struct Entry {
    std::size_t line = 0;
    std::string section;
    std::string key;
    std::string value;
};

[[noreturn]] void fail_at(std::size_t line, const std::string& msg) {
    throw ConfigError("line " + std::to_string(line) + ": " + msg);
}

}  // namespace

void RunConfig::validate() const {
    auto wrap = [](const char* section, const auto& check) {
        try {
            check();
        } catch (const std::invalid_argument& e) {
            throw ConfigError(std::string("[") + section + "] " + e.what());
        }
    };
    wrap("model", [&] { model.dims.validate(); });
    wrap("sampler", [&] {
        if (sampler.steps < 1) throw std::invalid_argument("steps must be >= 1");
        if (sampler.samples < 1) throw std::invalid_argument("samples must be >= 1");
        if (!model.dims.has_cross_attention() && sampler.class_label >= model.dims.num_classes) {
            throw std::invalid_argument("class_label out of range");
        }
        NoiseSchedule::linear(sampler.steps, sampler.beta_start, sampler.beta_end);
    });
    wrap("cache", [&] {
        if (cache) {
            cache->validate();
            if (cache->lambda_spatial > 0.0 &&
                cache->grid > std::min(model.dims.grid_h, model.dims.grid_w)) {
                throw std::invalid_argument("grid larger than the token grid");
            }
        }
    });
    wrap("analysis", [&] {
        for (std::size_t l : analysis.layers) {
            if (l >= model.dims.depth) throw std::invalid_argument("layer out of range");
        }
        if (!(analysis.sigma >= 0.0)) throw std::invalid_argument("sigma must be >= 0");
        if (!(analysis.timestep >= 0.0)) throw std::invalid_argument("timestep must be >= 0");
    });
}

GenerationConfig RunConfig::generation(std::uint64_t seed) const {
    GenerationConfig g;
    g.steps = sampler.steps;
    g.sampler = sampler.kind;
    g.cfg = sampler.cfg;
    g.guidance = sampler.guidance;
    g.seed = seed;
    g.beta_start = sampler.beta_start;
    g.beta_end = sampler.beta_end;
    return g;
}

RunConfig parse_config(std::string_view text, std::optional<Profile> profile_override) {
    std::vector<Entry> entries;
    std::set<std::pair<std::string, std::string>> seen;
    std::string section;
    std::size_t line_no = 0;
    std::optional<std::pair<std::size_t, std::string>> profile_entry;

    std::istringstream in{std::string(text)};
    std::string raw;
    while (std::getline(in, raw)) {
        ++line_no;
        const auto line = trim(raw);
        if (line.empty() || line.front() == '#' || line.front() == ';') continue;
        if (line.front() == '[') {
            if (line.back() != ']') fail_at(line_no, "unterminated section header");
            section = std::string(trim(line.substr(1, line.size() - 2)));
            if (!setters().contains(section)) fail_at(line_no, "unknown section [" + section + "]");
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) fail_at(line_no, "expected key = value");
        if (section.empty()) fail_at(line_no, "key outside of any section");
        Entry e{line_no, section, std::string(trim(line.substr(0, eq))),
                std::string(trim(line.substr(eq + 1)))};
        if (!setters().at(section).contains(e.key)) {
            fail_at(line_no, "unknown key '" + e.key + "' in [" + section + "]");
        }
        if (!seen.insert({section, e.key}).second) {
            fail_at(line_no, "duplicate key '" + e.key + "' in [" + section + "]");
        }
        if (section == "cache" && e.key == "profile") profile_entry.emplace(line_no, e.value);
        entries.push_back(std::move(e));
    }

    RunConfig config;
    config.profile = Profile::TocaDit;
    if (profile_entry) {
        try {
            config.profile = parse_profile(profile_entry->second);
        } catch (const std::invalid_argument& e) {
            fail_at(profile_entry->first, e.what());
        }
    }
    if (profile_override) config.profile = *profile_override;
    const auto defaults = profile_schedule(config.profile);
    CacheSchedule schedule = defaults.value_or(CacheSchedule{});

    for (const auto& e : entries) {
        try {
            setters().at(e.section).at(e.key)(config, schedule, e.value);
            // Schedule invariants are per field, so they can be pinned to the line.
            if (e.section == "cache") schedule.validate();
        } catch (const std::invalid_argument& err) {
            fail_at(e.line, e.key + ": " + err.what());
        }
    }
    // Cache keys are checked but unused when caching is off.
    config.cache = defaults ? std::optional<CacheSchedule>(schedule) : std::nullopt;
    config.validate();
    return config;
}

RunConfig load_config(const std::filesystem::path& path, std::optional<Profile> profile_override) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path.string());
    std::ostringstream text;
    text << in.rdbuf();
    try {
        return parse_config(text.str(), profile_override);
    } catch (const ConfigError& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

std::string serialize_config(const RunConfig& c) {
    std::ostringstream out;
    const auto& m = c.model.dims;
    out << "[model]\n"
        << "depth = " << m.depth << "\n"
        << "hidden = " << m.hidden << "\n"
        << "heads = " << m.heads << "\n"
        << "grid_h = " << m.grid_h << "\n"
        << "grid_w = " << m.grid_w << "\n"
        << "text_tokens = " << m.text_tokens << "\n"
        << "num_classes = " << m.num_classes << "\n"
        << "weight_seed = " << c.model.weight_seed << "\n\n";
    const auto& s = c.sampler;
    out << "[sampler]\n"
        << "steps = " << s.steps << "\n"
        << "kind = " << to_string(s.kind) << "\n"
        << "cfg = " << (s.cfg ? "true" : "false") << "\n"
        << "guidance = " << format_double(s.guidance) << "\n"
        << "seed = " << s.seed << "\n"
        << "samples = " << s.samples << "\n"
        << "class_label = " << s.class_label << "\n"
        << "beta_start = " << format_double(s.beta_start) << "\n"
        << "beta_end = " << format_double(s.beta_end) << "\n\n";
    out << "[cache]\n"
        << "profile = " << to_string(c.profile) << "\n";
    if (c.cache) {
        const auto& k = *c.cache;
        out << "ratio = " << format_double(k.ratio) << "\n"
            << "base_cycle = " << format_double(k.base_cycle) << "\n"
            << "lambda_attention = " << format_double(k.lambda_attention) << "\n"
            << "lambda_entropy = " << format_double(k.lambda_entropy) << "\n"
            << "lambda_frequency = " << format_double(k.lambda_frequency) << "\n"
            << "lambda_spatial = " << format_double(k.lambda_spatial) << "\n"
            << "depth_slope = " << format_double(k.depth_slope) << "\n"
            << "step_slope = " << format_double(k.step_slope) << "\n"
            << "type_tradeoff = " << format_double(k.type_tradeoff) << "\n"
            << "cycle_slope = " << format_double(k.cycle_slope) << "\n"
            << "grid = " << k.grid << "\n"
            << "center = " << format_double(k.center) << "\n"
            << "cfg_coupled = " << (k.cfg_coupled ? "true" : "false") << "\n"
            << "mode = " << to_string(k.mode) << "\n"
            << "fixed_window = ";
        if (k.fixed_window) {
            out << k.fixed_window->begin << ',' << k.fixed_window->end << ','
                << k.fixed_window->cycle;
        } else {
            out << "none";
        }
        out << "\n";
    }
    out << "\n[output]\n"
        << "dir = " << c.output.dir << "\n"
        << "formats = ";
    std::vector<std::string> formats;
    if (c.output.csv) formats.push_back("csv");
    if (c.output.json) formats.push_back("json");
    if (c.output.pgm) formats.push_back("pgm");
    if (c.output.raw) formats.push_back("raw");
    for (std::size_t i = 0; i < formats.size(); ++i) out << (i ? "," : "") << formats[i];
    out << "\n\n";
    const auto& a = c.analysis;
    out << "[analysis]\n"
        << "layers = ";
    if (a.layers.empty()) {
        out << "all";
    } else {
        for (std::size_t i = 0; i < a.layers.size(); ++i) out << (i ? "," : "") << a.layers[i];
    }
    out << "\n"
        << "site_layer = " << a.site_layer << "\n"
        << "site_type = " << to_string(a.site_kind) << "\n"
        << "site_token = " << a.site_token << "\n"
        << "sigma = " << format_double(a.sigma) << "\n"
        << "noise_scale = " << to_string(a.scale) << "\n"
        << "timestep = " << format_double(a.timestep) << "\n";
    return out.str();
}

std::string config_hash(const RunConfig& config) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char ch : serialize_config(config)) {
        h ^= ch;
        h *= 0x100000001b3ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

void apply_environment(RunConfig& config) {
    const char* env = std::getenv("TOCA_SEED");
    if (env == nullptr) return;
    try {
        config.sampler.seed = parse_unsigned<std::uint64_t>(trim(env));
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("TOCA_SEED: ") + e.what());
    }
}

}  // namespace toca
