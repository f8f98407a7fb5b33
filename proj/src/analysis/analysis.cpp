#include "toca/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include <json.hpp>

#include "toca/rng.hpp"

namespace toca {

std::vector<double> token_distances(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw std::invalid_argument("token_distances: shape mismatch");
    }
    std::vector<double> out(a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const auto ra = a.row(i);
        const auto rb = b.row(i);
        double sum = 0.0;
        for (std::size_t j = 0; j < ra.size(); ++j) {
            const double diff = ra[j] - rb[j];
            sum += diff * diff;
        }
        out[i] = std::sqrt(sum);
    }
    return out;
}

RedundancyProfile measure_temporal_redundancy(const Model& model, const Conditioning& cond,
                                              const GenerationConfig& config,
                                              const std::vector<std::size_t>& layers) {
    for (std::size_t l : layers) {
        if (l >= model.config.depth) {
            throw std::invalid_argument("measure_temporal_redundancy: layer " + std::to_string(l) +
                                        " outside a depth-" + std::to_string(model.config.depth) +
                                        " model");
        }
    }
    RedundancyProfile profile;
    profile.layers = layers;
    profile.steps = config.steps;
    profile.tokens = model.config.tokens();
    profile.distances.assign(layers.size(), {});
    profile.layer_means.assign(layers.size(), {});

    std::vector<Matrix> previous;
    StepHooks hooks;
    hooks.forward.record_blocks = true;
    hooks.on_forward = [&](std::size_t step, std::size_t, const ForwardResult& fwd) {
        // With guidance the conditional branch is the last batch element.
        const auto& blocks = fwd.blocks.back();
        std::vector<Matrix> current;
        current.reserve(layers.size());
        for (std::size_t l : layers) current.push_back(blocks[l]);
        if (step > 0) {
            for (std::size_t k = 0; k < layers.size(); ++k) {
                auto d = token_distances(previous[k], current[k]);
                const double mean =
                    d.empty() ? 0.0
                              : std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(d.size());
                profile.distances[k].push_back(std::move(d));
                profile.layer_means[k].push_back(mean);
            }
        }
        previous = std::move(current);
    };

    GenerationConfig run = config;
    run.record_eps = false;
    run.record_masks = false;
    run_generation(model, cond, run, std::nullopt, &hooks);
    return profile;
}

namespace {

void validate_site(const ModelConfig& config, const PropagationSite& site) {
    const bool head = site.kind == ModuleKind::Head;
    bool ok = head ? site.layer == config.depth : site.layer < config.depth;
    if (site.kind == ModuleKind::CrossAttention && !config.has_cross_attention()) ok = false;
    if (!ok) {
        throw std::invalid_argument("measure_error_propagation: no " +
                                    std::string(to_string(site.kind)) + " module at layer " +
                                    std::to_string(site.layer));
    }
    if (site.token >= config.tokens()) {
        throw std::invalid_argument("measure_error_propagation: token " +
                                    std::to_string(site.token) + " out of range");
    }
}

}  // namespace

PropagationProfile measure_error_propagation(const Model& model, const Matrix& x_t, double t,
                                             const Conditioning& cond,
                                             const PropagationSite& site, double sigma,
                                             NoiseScale scale, std::uint64_t seed) {
    validate_site(model.config, site);
    if (!(sigma >= 0.0)) {
        throw std::invalid_argument("measure_error_propagation: sigma must be >= 0");
    }
    const std::vector<Matrix> inputs{x_t};
    const std::vector<Conditioning> conds{cond};

    ForwardOptions clean_options;
    clean_options.capture = ModuleSite{site.layer, site.kind};
    const ForwardResult clean = model_forward(model, inputs, t, conds, nullptr, clean_options);

    double intensity = sigma;
    if (scale == NoiseScale::Relative) {
        intensity *= frobenius_norm(clean.captured_input->row(site.token));
    }
    Rng rng(derive_seed(seed, streams::kPerturbation));
    Perturbation p{site.layer, site.kind, site.token, 0, std::vector<double>(model.config.hidden)};
    for (double& v : p.noise) {
        v = rng.normal() * intensity;
    }
    ForwardOptions noisy_options;
    noisy_options.perturbation = &p;
    const ForwardResult noisy = model_forward(model, inputs, t, conds, nullptr, noisy_options);

    PropagationProfile profile;
    profile.site = site;
    profile.sigma = sigma;
    profile.scale = scale;
    profile.errors = token_distances(noisy.eps[0], clean.eps[0]);
    const Matrix& e = clean.eps[0];
    double norm_sum = 0.0;
    for (std::size_t i = 0; i < e.rows(); ++i) norm_sum += frobenius_norm(e.row(i));
    profile.mean_token_norm = e.rows() == 0 ? 0.0 : norm_sum / static_cast<double>(e.rows());
    profile.normalized.resize(profile.errors.size(), 0.0);
    if (profile.mean_token_norm > 0.0) {
        for (std::size_t i = 0; i < profile.errors.size(); ++i) {
            profile.normalized[i] = profile.errors[i] / profile.mean_token_norm;
        }
    }
    return profile;
}

std::uint64_t FrequencyMap::total() const {
    return std::accumulate(counts.begin(), counts.end(), std::uint64_t{0});
}

std::uint64_t FrequencyMap::max() const {
    return counts.empty() ? 0 : *std::max_element(counts.begin(), counts.end());
}

FrequencyMap build_cache_frequency_map(const RunStats& stats, std::size_t grid_h,
                                       std::size_t grid_w) {
    if (stats.token_cache_counts.size() != grid_h * grid_w) {
        throw std::invalid_argument("build_cache_frequency_map: run has " +
                                    std::to_string(stats.token_cache_counts.size()) +
                                    " tokens, grid has " + std::to_string(grid_h * grid_w));
    }
    return {grid_h, grid_w, stats.token_cache_counts};
}

void write_pgm(std::ostream& out, const FrequencyMap& map, const std::string& comment) {
    out << "P5\n";
    if (!comment.empty()) out << "# " << comment << '\n';
    out << map.grid_w << ' ' << map.grid_h << "\n255\n";
    const std::uint64_t peak = map.max();
    for (std::uint64_t c : map.counts) {
        const double shade = peak == 0 ? 0.0 : static_cast<double>(c) / static_cast<double>(peak);
        out.put(static_cast<char>(static_cast<unsigned char>(std::lround(255.0 * (1.0 - shade)))));
    }
}

Quantiles quantiles(std::vector<double> values) {
    Quantiles q;
    if (values.empty()) return q;
    std::sort(values.begin(), values.end());
    auto at = [&](double p) {
        const double pos = p * static_cast<double>(values.size() - 1);
        const auto lo = static_cast<std::size_t>(std::floor(pos));
        const std::size_t hi = std::min(lo + 1, values.size() - 1);
        const double frac = pos - static_cast<double>(lo);
        return values[lo] + (values[hi] - values[lo]) * frac;
    };
    q.min = values.front();
    q.p25 = at(0.25);
    q.median = at(0.5);
    q.p75 = at(0.75);
    q.p95 = at(0.95);
    q.max = values.back();
    q.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
    return q;
}

namespace {

nlohmann::ordered_json to_json(const Quantiles& q) {
    return {{"min", q.min},       {"p25", q.p25}, {"median", q.median}, {"p75", q.p75},
            {"p95", q.p95},       {"max", q.max}, {"mean", q.mean}};
}

}  // namespace

void write_redundancy_csv(std::ostream& out, const RedundancyProfile& profile) {
    out << "layer,step,token,distance\n";
    for (std::size_t k = 0; k < profile.layers.size(); ++k) {
        for (std::size_t s = 0; s < profile.distances[k].size(); ++s) {
            const auto& row = profile.distances[k][s];
            for (std::size_t i = 0; i < row.size(); ++i) {
                out << profile.layers[k] << ',' << s << ',' << i << ',' << row[i] << '\n';
            }
        }
    }
}

void write_propagation_csv(std::ostream& out, const PropagationProfile& profile) {
    out << "token,error,normalized_error\n";
    for (std::size_t i = 0; i < profile.errors.size(); ++i) {
        out << i << ',' << profile.errors[i] << ',' << profile.normalized[i] << '\n';
    }
}

std::string redundancy_summary_json(const RedundancyProfile& profile) {
    nlohmann::ordered_json j;
    j["steps"] = profile.steps;
    j["tokens"] = profile.tokens;
    nlohmann::ordered_json layers = nlohmann::ordered_json::array();
    for (std::size_t k = 0; k < profile.layers.size(); ++k) {
        std::vector<double> all;
        for (const auto& row : profile.distances[k]) all.insert(all.end(), row.begin(), row.end());
        layers.push_back({{"layer", profile.layers[k]},
                          {"distance", to_json(quantiles(std::move(all)))},
                          {"step_means", profile.layer_means[k]}});
    }
    j["layers"] = std::move(layers);
    return j.dump(2);
}

std::string propagation_summary_json(const PropagationProfile& profile) {
    nlohmann::ordered_json j;
    j["layer"] = profile.site.layer;
    j["type"] = std::string(to_string(profile.site.kind));
    j["token"] = profile.site.token;
    j["sigma"] = profile.sigma;
    j["scale"] = profile.scale == NoiseScale::Absolute ? "absolute" : "relative";
    j["mean_token_norm"] = profile.mean_token_norm;
    j["error"] = to_json(quantiles(profile.errors));
    j["normalized_error"] = to_json(quantiles(profile.normalized));
    return j.dump(2);
}

std::string frequency_summary_json(const FrequencyMap& map) {
    std::vector<double> values(map.counts.begin(), map.counts.end());
    nlohmann::ordered_json j;
    j["grid_h"] = map.grid_h;
    j["grid_w"] = map.grid_w;
    j["total"] = map.total();
    j["max"] = map.max();
    j["counts"] = to_json(quantiles(std::move(values)));
    return j.dump(2);
}

}  // namespace toca
