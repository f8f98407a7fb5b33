#include <bit>
#include <cstring>
#include <sstream>

#include <json.hpp>

#include "toca/analysis.hpp"
#include "toca/cli.hpp"
#include "toca/flops.hpp"
#include "toca/rng.hpp"

namespace toca {

namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

static_assert(std::endian::native == std::endian::little, "raw outputs assume a little-endian host");

Conditioning make_conditioning(const RunConfig& config, const Model& model, std::uint64_t seed) {
    if (model.config.has_cross_attention()) {
        return text_conditioning(model, seed);
    }
    return class_conditioning(model, config.sampler.class_label);
}

std::string raw_f32(const Matrix& m) {
    std::string bytes(m.values().size() * sizeof(float), '\0');
    std::size_t offset = 0;
    for (double v : m.values()) {
        const auto f = static_cast<float>(v);
        std::memcpy(bytes.data() + offset, &f, sizeof(float));
        offset += sizeof(float);
    }
    return bytes;
}

struct Emitter {
    const RunConfig& config;
    fs::path dir;
    CommandResult result;

    void text(const std::string& name, const std::string& body) {
        const fs::path path = dir / name;
        write_file_atomic(path, header_line(config) + body);
        result.artifacts.push_back(path);
    }
    void json_object(const std::string& name, const json& body) {
        const fs::path path = dir / name;
        write_file_atomic(path, with_hash(config, body.dump()));
        result.artifacts.push_back(path);
    }
    void binary(const std::string& name, const std::string& bytes) {
        const fs::path path = dir / name;
        write_file_atomic(path, bytes);
        result.artifacts.push_back(path);
    }
};

json report_json(const FlopsReport& r) {
    return json::parse(to_json(r));
}

std::string fixed(double v, int precision) {
    std::ostringstream out;
    out.setf(std::ios::fixed);
    out.precision(precision);
    out << v;
    return out.str();
}

}  // namespace

CommandResult cmd_sample(const RunConfig& config) {
    config.validate();
    const Model model = init_model(config.model.dims, config.model.weight_seed);
    const auto& dims = config.model.dims;
    Emitter emit{config, config.output.dir, {}};
    const FlopsReport flops =
        estimate_run_flops(dims, config.sampler.steps, config.sampler.cfg, config.cache);

    double wall = 0.0;
    for (std::size_t k = 0; k < config.sampler.samples; ++k) {
        const std::uint64_t seed = config.sampler.seed + k;
        const Conditioning cond = make_conditioning(config, model, seed);
        const GenerationResult run =
            run_generation(model, cond, config.generation(seed), config.cache);
        const RunStats& stats = run.stats;
        wall += stats.wall_seconds;
        const std::string tag = std::to_string(seed);

        if (config.output.raw) {
            emit.binary("x0_" + tag + ".f32", raw_f32(run.x0));
        }
        if (config.output.csv) {
            std::ostringstream csv;
            write_dispatch_csv(csv, stats.dispatches);
            emit.text("dispatches_" + tag + ".csv", csv.str());
        }
        if (config.output.json) {
            json j;
            j["seed"] = seed;
            j["profile"] = std::string(to_string(config.profile));
            j["steps"] = config.sampler.steps;
            j["x0_shape"] = {run.x0.rows(), run.x0.cols()};
            j["fresh_steps"] = stats.fresh_steps;
            j["dispatches"] = stats.dispatches.size();
            j["non_fresh_dispatches"] = stats.non_fresh_dispatches();
            j["computed_token_events"] = stats.computed_events();
            j["cached_token_events"] = stats.cached_events();
            j["estimated_speedup"] = flops.speedup;
            emit.json_object("stats_" + tag + ".json", j);
        }
        if (config.cache) {
            const FrequencyMap map = build_cache_frequency_map(stats, dims.grid_h, dims.grid_w);
            if (config.output.pgm) {
                std::ostringstream pgm;
                write_pgm(pgm, map, "toca config_hash=" + config_hash(config));
                emit.binary("frequency_" + tag + ".pgm", pgm.str());
            }
            if (config.output.json) {
                emit.json_object("frequency_" + tag + ".json", json::parse(frequency_summary_json(map)));
            }
        }
    }
    emit.result.summary = std::to_string(config.sampler.samples) + " sample(s), profile " +
                          std::string(to_string(config.profile)) + ", estimated speedup " +
                          fixed(flops.speedup, 2) + "x, " + fixed(wall, 3) + " s";
    verify_artifacts(emit.result);
    return emit.result;
}

CommandResult cmd_analyze(const RunConfig& config, Analysis which) {
    config.validate();
    const Model model = init_model(config.model.dims, config.model.weight_seed);
    const std::uint64_t seed = config.sampler.seed;
    const Conditioning cond = make_conditioning(config, model, seed);
    Emitter emit{config, config.output.dir, {}};

    if (which == Analysis::Redundancy) {
        std::vector<std::size_t> layers = config.analysis.layers;
        if (layers.empty()) {
            for (std::size_t l = 0; l < config.model.dims.depth; ++l) layers.push_back(l);
        }
        const RedundancyProfile profile =
            measure_temporal_redundancy(model, cond, config.generation(seed), layers);
        if (config.output.csv) {
            std::ostringstream csv;
            write_redundancy_csv(csv, profile);
            emit.text("redundancy.csv", csv.str());
        }
        if (config.output.json) {
            emit.json_object("redundancy.json", json::parse(redundancy_summary_json(profile)));
        }
        emit.result.summary = "redundancy over " + std::to_string(layers.size()) + " layer(s), " +
                              std::to_string(profile.steps) + " steps";
    } else {
        const auto& dims = config.model.dims;
        const Matrix x_t = gaussian(dims.tokens(), dims.hidden, 1.0,
                                    derive_seed(seed, streams::kInitialNoise));
        const PropagationSite site{config.analysis.site_layer, config.analysis.site_kind,
                                   config.analysis.site_token};
        const PropagationProfile profile =
            measure_error_propagation(model, x_t, config.analysis.timestep, cond, site,
                                      config.analysis.sigma, config.analysis.scale, seed);
        if (config.output.csv) {
            std::ostringstream csv;
            write_propagation_csv(csv, profile);
            emit.text("propagation.csv", csv.str());
        }
        if (config.output.json) {
            emit.json_object("propagation.json", json::parse(propagation_summary_json(profile)));
        }
        double peak = 0.0;
        for (double e : profile.errors) peak = std::max(peak, e);
        emit.result.summary = "propagation from " + std::string(to_string(site.kind)) + " layer " +
                              std::to_string(site.layer) + " token " + std::to_string(site.token) +
                              ", max error " + fixed(peak, 6);
    }
    verify_artifacts(emit.result);
    return emit.result;
}

CommandResult cmd_bench(const RunConfig& config) {
    config.validate();
    const auto& dims = config.model.dims;
    const FlopsReport report =
        estimate_run_flops(dims, config.sampler.steps, config.sampler.cfg, config.cache);
    const std::size_t grid = config.cache ? config.cache->grid : 2;
    const double overhead = flops_selection_overhead(dims.tokens(), grid).total;
    const double per_step = flops_full_forward(dims);
    const auto checks = cross_check_flops({{2, 4, 1}, {4, 8, 2}, {16, 32, 4}});

    Emitter emit{config, config.output.dir, {}};
    bool all_match = true;
    json check_list = json::array();
    std::ostringstream csv;
    csv << "type,tokens,text_tokens,hidden,heads,closed_form,counted,match\n";
    for (const auto& c : checks) {
        all_match = all_match && c.matches();
        csv << to_string(c.kind) << ',' << c.tokens << ',' << c.text_tokens << ',' << c.hidden
            << ',' << c.heads << ',' << c.closed_form << ',' << c.counted << ','
            << (c.matches() ? 1 : 0) << '\n';
        check_list.push_back({{"type", std::string(to_string(c.kind))},
                              {"tokens", c.tokens},
                              {"text_tokens", c.text_tokens},
                              {"hidden", c.hidden},
                              {"heads", c.heads},
                              {"closed_form", c.closed_form},
                              {"counted", c.counted}});
    }
    if (config.output.json) {
        json j = report_json(report);
        j["selection_overhead_per_layer"] = overhead;
        j["main_flops_per_forward"] = per_step;
        j["overhead_share"] = per_step > 0 ? overhead * static_cast<double>(dims.depth) / per_step : 0.0;
        j["cross_check"] = std::move(check_list);
        emit.json_object("flops.json", j);
    }
    if (config.output.csv) {
        emit.text("flops_check.csv", csv.str());
    }
    verify_artifacts(emit.result);
    if (!all_match) {
        throw std::runtime_error("closed-form FLOPs disagree with the instrumented count");
    }
    emit.result.summary = "speedup " + fixed(report.speedup, 3) + "x (baseline " +
                          fixed(report.baseline_flops / 1e12, 2) + "T, cached " +
                          fixed(report.cached_flops / 1e12, 2) + "T), " +
                          std::to_string(checks.size()) + " closed-form checks passed";
    return emit.result;
}

CommandResult cmd_report(const RunConfig& config) {
    config.validate();
    Emitter emit{config, config.output.dir, {}};
    emit.text("config.ini", serialize_config(config));
    const FlopsReport report =
        estimate_run_flops(config.model.dims, config.sampler.steps, config.sampler.cfg, config.cache);
    json j;
    j["profile"] = std::string(to_string(config.profile));
    j["tokens"] = config.model.dims.tokens();
    if (config.cache) {
        j["fresh_steps"] = cycle_plan(*config.cache, config.sampler.steps).fresh_steps;
    }
    j["flops"] = report_json(report);
    emit.json_object("report.json", j);
    emit.result.summary = "config " + config_hash(config) + ", profile " +
                          std::string(to_string(config.profile)) + ", estimated speedup " +
                          fixed(report.speedup, 3) + "x";
    verify_artifacts(emit.result);
    return emit.result;
}

}  // namespace toca
