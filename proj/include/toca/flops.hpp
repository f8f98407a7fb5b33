#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "toca/model.hpp"
#include "toca/schedule.hpp"

namespace toca {

// Closed-form costs per layer call. Multiply-accumulate = 2 flops, softmax =
// 5 flops per element, activation = 6 flops per element.

/// 8ND^2 + 4N^2 D + 5N^2 H
std::uint64_t flops_self_attention(std::uint64_t tokens, std::uint64_t hidden,
                                   std::uint64_t heads);

/// 4(N1+N2)D^2 + 4 N1 N2 D + 5 N1 N2 H. With N2 = 0 only the 4 N1 D^2 image-side
/// projections remain; a cross-attention layer without text tokens is degenerate.
std::uint64_t flops_cross_attention(std::uint64_t image_tokens, std::uint64_t text_tokens,
                                    std::uint64_t hidden, std::uint64_t heads);

/// 16ND^2 + 24ND (D2 = 4D)
std::uint64_t flops_mlp(std::uint64_t tokens, std::uint64_t hidden);

/// Token-selection cost for one layer dispatch, log base 2.
struct SelectionOverhead {
    double attention_score = 0;   // s1: N
    double entropy_score = 0;     // s2: 2N
    double frequency_score = 0;   // s3: 3N
    double spatial_score = 0;     // s4: (N/G^2) G^2 log2(G^2) + 2N/G^2
    double global_sort = 0;       // N log2 N
    double total = 0;
};

SelectionOverhead flops_selection_overhead(std::size_t tokens, std::size_t grid);

/// Flops of one full (uncached) forward for a single batch element, summed
/// over every block. The output head is not part of the cost model.
double flops_full_forward(const ModelConfig& config);

struct FlopsReport {
    double self_attention_flops = 0;
    double cross_attention_flops = 0;
    double mlp_flops = 0;
    double overhead_flops = 0;
    double baseline_flops = 0;
    double cached_flops = 0;
    double speedup = 1;
    std::size_t steps = 0;
    std::size_t fresh_steps = 0;
};

/// Analytic whole-run estimate. Each non-fresh dispatch is scaled by its
/// computed fraction f: O(ND^2) terms by f, the self-attention O(N^2 D)
/// terms by f^2, cross-attention image-text terms by f. Selection overhead
/// is charged on dispatches that cache some but not all tokens. Without a
/// schedule the cached run equals the baseline.
FlopsReport estimate_run_flops(const ModelConfig& config, std::size_t steps, bool cfg,
                               const std::optional<CacheSchedule>& schedule);

std::string to_json(const FlopsReport& report);

/// Flops of one full module call measured by running the tensor kernels
/// under a FlopCountingScope on seeded random inputs. `text_tokens` is only
/// used for cross-attention.
std::uint64_t instrumented_flops(ModuleKind kind, std::size_t tokens, std::size_t text_tokens,
                                 std::size_t hidden, std::size_t heads);

struct FlopCheck {
    ModuleKind kind = ModuleKind::SelfAttention;
    std::size_t tokens = 0;
    std::size_t text_tokens = 0;
    std::size_t hidden = 0;
    std::size_t heads = 0;
    std::uint64_t closed_form = 0;
    std::uint64_t counted = 0;

    bool matches() const { return closed_form == counted; }
};

struct FlopDims {
    std::size_t tokens = 0;
    std::size_t hidden = 0;
    std::size_t heads = 0;
};

/// Closed form against instrumentation for every module type at each dims
/// triple; cross-attention uses N2 = tokens + 1.
std::vector<FlopCheck> cross_check_flops(const std::vector<FlopDims>& dims);

}  // namespace toca
