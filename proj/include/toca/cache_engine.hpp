#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <vector>

#include "toca/model.hpp"
#include "toca/schedule.hpp"
#include "toca/scores.hpp"

namespace toca {

/// Cached module output and per-token cache counters for one
/// (batch half, layer, module) slot.
struct CacheSlot {
    Matrix values;                        // N x D
    std::vector<std::uint32_t> counters;  // n_i: cached dispatches since last compute
    bool initialized = false;
};

/// Per-sample cache state. Attention aggregates (column sums for s1, row
/// entropies for s2) are refreshed only when the module is fully computed.
class CacheStore {
public:
    CacheStore(const ModelConfig& config, std::size_t batch);

    CacheSlot& slot(std::size_t half, std::size_t layer, ModuleKind kind);
    const CacheSlot& slot(std::size_t half, std::size_t layer, ModuleKind kind) const;

    std::vector<double>& attention_column_sums(std::size_t half, std::size_t layer);
    const std::vector<double>& attention_column_sums(std::size_t half, std::size_t layer) const;
    std::vector<double>& cross_entropy(std::size_t half, std::size_t layer);
    const std::vector<double>& cross_entropy(std::size_t half, std::size_t layer) const;

    std::size_t batch() const { return batch_; }
    std::size_t layers() const { return layers_; }

private:
    std::size_t index(std::size_t half, std::size_t layer, ModuleKind kind) const;
    std::size_t stats_index(std::size_t half, std::size_t layer) const;

    std::size_t batch_;
    std::size_t layers_;  // depth + 1; the head sits at index `depth`
    std::vector<CacheSlot> slots_;
    std::vector<std::vector<double>> column_sums_;
    std::vector<std::vector<double>> entropies_;
};

/// Splices fresh rows over the slot: computed tokens get f(x_i), cached
/// tokens keep C(x_i). The attention map is returned only when every token was
/// computed. Throws std::logic_error when the slot has never been filled.
ModuleOutput cached_layer_apply(const ModuleFn& compute, std::size_t half,
                                const ComputeMask& mask, const CacheSlot& slot);

/// Overwrites computed rows in the slot and resets their counters; cached
/// tokens' counters go up by one.
void cache_update(const ComputeMask& mask, const Matrix& outputs, CacheSlot& slot);

struct DispatchRecord {
    std::size_t step = 0;
    std::size_t layer = 0;
    ModuleKind kind = ModuleKind::SelfAttention;
    std::size_t half = 0;
    bool fresh = false;
    double ratio = 0.0;  // effective cache ratio (0 at fresh steps)
    std::size_t computed = 0;
    std::size_t cached = 0;
};

struct CacheEngineOptions {
    /// Keep the gamma vector of every dispatch (one per batch half).
    bool record_masks = false;
};

/// Routes module calls through token-wise caching for one generated sample.
///
/// Call begin_step() before each model_forward. At fresh steps every module
/// is computed and the cache rewritten; otherwise each dispatch scores the
/// tokens, caches the lowest-scoring floor(R_eff N) of them and computes the
/// rest.
class CacheEngine final : public ModuleRouter {
public:
    CacheEngine(const ModelConfig& config, CacheSchedule schedule, std::size_t total_steps,
                std::size_t batch, CacheEngineOptions options = {});

    /// Throws std::out_of_range past the last step.
    void begin_step(std::size_t step);

    std::vector<ModuleOutput> route(const ModuleCall& call, const ModuleFn& compute) override;

    std::size_t step() const { return step_; }
    bool fresh_step() const { return plan_.is_fresh(step_); }
    const CyclePlan& plan() const { return plan_; }
    const CacheSchedule& schedule() const { return schedule_; }
    const CacheStore& store() const { return store_; }

    const std::vector<DispatchRecord>& dispatches() const { return dispatches_; }
    /// masks()[k] is the gamma vector of dispatches()[k] (with record_masks).
    const std::vector<std::vector<std::uint8_t>>& masks() const { return masks_; }
    /// Total times each token was cached, over every dispatch and half.
    const std::vector<std::uint64_t>& token_cache_counts() const { return token_cache_counts_; }

private:
    std::vector<double> token_scores(std::size_t half, std::size_t layer, ModuleKind kind) const;
    void record(const ModuleCall& call, std::size_t half, bool fresh, double ratio,
                const ComputeMask& mask);

    ModelConfig config_;
    CacheSchedule schedule_;
    RatioContext context_;
    CyclePlan plan_;
    CacheStore store_;
    CacheEngineOptions options_;
    std::size_t step_ = 0;
    bool started_ = false;
    std::vector<DispatchRecord> dispatches_;
    std::vector<std::vector<std::uint8_t>> masks_;
    std::vector<std::uint64_t> token_cache_counts_;
};

/// CSV with columns step,layer,type,half,fresh,R_eff,computed_count,cached_count.
void write_dispatch_csv(std::ostream& out, const std::vector<DispatchRecord>& records);

}  // namespace toca
