#include "toca/cache_engine.hpp"

#include <algorithm>
#include <ostream>
#include <stdexcept>
#include <string>

namespace toca {

CacheStore::CacheStore(const ModelConfig& config, std::size_t batch)
    : batch_(batch), layers_(config.depth + 1) {
    if (batch == 0) {
        throw std::invalid_argument("CacheStore: batch must be >= 1");
    }
    slots_.resize(batch_ * layers_ * kModuleKinds);
    column_sums_.resize(batch_ * layers_);
    entropies_.resize(batch_ * layers_);
}

std::size_t CacheStore::index(std::size_t half, std::size_t layer, ModuleKind kind) const {
    if (half >= batch_ || layer >= layers_) {
        throw std::out_of_range("CacheStore: slot (" + std::to_string(half) + ", " +
                                std::to_string(layer) + ") out of range");
    }
    return (half * layers_ + layer) * kModuleKinds + static_cast<std::size_t>(kind);
}

std::size_t CacheStore::stats_index(std::size_t half, std::size_t layer) const {
    return index(half, layer, ModuleKind::SelfAttention) / kModuleKinds;
}

CacheSlot& CacheStore::slot(std::size_t half, std::size_t layer, ModuleKind kind) {
    return slots_[index(half, layer, kind)];
}

const CacheSlot& CacheStore::slot(std::size_t half, std::size_t layer, ModuleKind kind) const {
    return slots_[index(half, layer, kind)];
}

std::vector<double>& CacheStore::attention_column_sums(std::size_t half, std::size_t layer) {
    return column_sums_[stats_index(half, layer)];
}

const std::vector<double>& CacheStore::attention_column_sums(std::size_t half,
                                                             std::size_t layer) const {
    return column_sums_[stats_index(half, layer)];
}

std::vector<double>& CacheStore::cross_entropy(std::size_t half, std::size_t layer) {
    return entropies_[stats_index(half, layer)];
}

const std::vector<double>& CacheStore::cross_entropy(std::size_t half, std::size_t layer) const {
    return entropies_[stats_index(half, layer)];
}

ModuleOutput cached_layer_apply(const ModuleFn& compute, std::size_t half,
                                const ComputeMask& mask, const CacheSlot& slot) {
    if (!slot.initialized) {
        throw std::logic_error("cached_layer_apply: cache slot used before any fresh step");
    }
    if (slot.values.rows() != mask.tokens()) {
        throw std::invalid_argument("cached_layer_apply: mask does not match the cache slot");
    }
    ModuleOutput result{slot.values, std::nullopt};
    if (mask.compute.empty()) {
        return result;
    }
    ModuleOutput fresh = compute(half, mask.compute);
    for (std::size_t k = 0; k < mask.compute.size(); ++k) {
        const auto src = fresh.values.row(k);
        std::copy(src.begin(), src.end(), result.values.row(mask.compute[k]).begin());
    }
    if (mask.cache.empty()) {
        result.attention = std::move(fresh.attention);
    }
    return result;
}

void cache_update(const ComputeMask& mask, const Matrix& outputs, CacheSlot& slot) {
    const std::size_t n = mask.tokens();
    if (outputs.rows() != n) {
        throw std::invalid_argument("cache_update: outputs do not match the mask");
    }
    if (!slot.initialized) {
        if (!mask.cache.empty()) {
            throw std::logic_error("cache_update: first update must compute every token");
        }
        slot.values = outputs;
        slot.counters.assign(n, 0);
        slot.initialized = true;
        return;
    }
    for (std::size_t i : mask.compute) {
        const auto src = outputs.row(i);
        std::copy(src.begin(), src.end(), slot.values.row(i).begin());
        slot.counters[i] = 0;
    }
    for (std::size_t i : mask.cache) {
        ++slot.counters[i];
    }
}

CacheEngine::CacheEngine(const ModelConfig& config, CacheSchedule schedule,
                         std::size_t total_steps, std::size_t batch, CacheEngineOptions options)
    : config_(config),
      schedule_(std::move(schedule)),
      context_(make_ratio_context(config, total_steps)),
      plan_(cycle_plan(schedule_, total_steps)),
      store_(config, batch),
      options_(options),
      token_cache_counts_(config.tokens(), 0) {
    config_.validate();
    schedule_.validate();
    if (schedule_.lambda_spatial > 0.0 &&
        schedule_.grid > std::min(config_.grid_h, config_.grid_w)) {
        throw std::invalid_argument("CacheEngine: spatial grid larger than the token grid");
    }
}

void CacheEngine::begin_step(std::size_t step) {
    if (step >= plan_.fresh.size()) {
        throw std::out_of_range("CacheEngine: step " + std::to_string(step) + " beyond schedule");
    }
    step_ = step;
    started_ = true;
}

std::vector<double> CacheEngine::token_scores(std::size_t half, std::size_t layer,
                                              ModuleKind kind) const {
    // The head borrows the last block's attention statistics.
    const std::size_t stats_layer = std::min(layer, config_.depth - 1);
    const auto& s1 = store_.attention_column_sums(half, stats_layer);
    const auto& s2 = store_.cross_entropy(half, stats_layer);
    const auto s3 = score_s3(store_.slot(half, layer, kind).counters,
                             static_cast<double>(plan_.cycle_length[step_]));
    const auto base = weighted_score(s1, s2, s3, schedule_.lambda_attention,
                                     schedule_.lambda_entropy, schedule_.lambda_frequency);
    return apply_spatial_boost(base, config_.grid_h, config_.grid_w, schedule_.grid,
                               schedule_.lambda_spatial);
}

void CacheEngine::record(const ModuleCall& call, std::size_t half, bool fresh, double ratio,
                         const ComputeMask& mask) {
    dispatches_.push_back(
        {step_, call.layer, call.kind, half, fresh, ratio, mask.compute.size(), mask.cache.size()});
    for (std::size_t i : mask.cache) {
        ++token_cache_counts_[i];
    }
    if (options_.record_masks) {
        masks_.push_back(mask.gamma);
    }
}

std::vector<ModuleOutput> CacheEngine::route(const ModuleCall& call, const ModuleFn& compute) {
    if (!started_) {
        throw std::logic_error("CacheEngine: route() called before begin_step()");
    }
    if (call.batch != store_.batch() || call.tokens != config_.tokens()) {
        throw std::invalid_argument("CacheEngine: call shape does not match the engine");
    }
    const std::size_t n = call.tokens;
    std::vector<ModuleOutput> outputs;
    outputs.reserve(call.batch);

    if (fresh_step()) {
        const ComputeMask mask = all_compute_mask(n);
        for (std::size_t half = 0; half < call.batch; ++half) {
            ModuleOutput out = compute(half, mask.compute);
            cache_update(mask, out.values, store_.slot(half, call.layer, call.kind));
            if (out.attention && call.kind == ModuleKind::SelfAttention) {
                store_.attention_column_sums(half, call.layer) = score_s1(*out.attention);
            } else if (out.attention && call.kind == ModuleKind::CrossAttention) {
                store_.cross_entropy(half, call.layer) = score_s2(*out.attention);
            }
            record(call, half, true, 0.0, mask);
            outputs.push_back(std::move(out));
        }
        return outputs;
    }

    const double ratio = effective_cache_ratio(call.layer, step_, call.kind, schedule_, context_);
    const std::size_t n_cache = cached_token_count(ratio, n);
    std::vector<ComputeMask> masks;
    if (n_cache == 0) {
        masks.assign(call.batch, all_compute_mask(n));
    } else if (n_cache == n) {
        masks.assign(call.batch, all_cache_mask(n));
    } else {
        std::vector<std::vector<double>> scores;
        scores.reserve(call.batch);
        for (std::size_t half = 0; half < call.batch; ++half) {
            scores.push_back(token_scores(half, call.layer, call.kind));
        }
        masks = select_compute_set(scores, ratio, schedule_.cfg_coupled);
    }

    for (std::size_t half = 0; half < call.batch; ++half) {
        CacheSlot& slot = store_.slot(half, call.layer, call.kind);
        ModuleOutput out = cached_layer_apply(compute, half, masks[half], slot);
        cache_update(masks[half], out.values, slot);
        record(call, half, false, ratio, masks[half]);
        outputs.push_back(std::move(out));
    }
    return outputs;
}

void write_dispatch_csv(std::ostream& out, const std::vector<DispatchRecord>& records) {
    out << "step,layer,type,half,fresh,R_eff,computed_count,cached_count\n";
    for (const auto& r : records) {
        out << r.step << ',' << r.layer << ',' << to_string(r.kind) << ',' << r.half << ','
            << (r.fresh ? 1 : 0) << ',' << r.ratio << ',' << r.computed << ',' << r.cached << '\n';
    }
}

}  // namespace toca
