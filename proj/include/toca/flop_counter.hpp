#pragma once

#include <cstdint>

namespace toca {

/// Tally of the floating point work done by the counted tensor kernels.
///
/// Conventions: a multiply-accumulate is 2 flops, softmax is 5 flops per
/// element, the MLP activation is 6 flops per element. Elementwise adds,
/// scaling, normalization and head averaging are not counted.
struct FlopTally {
    std::uint64_t matmul = 0;
    std::uint64_t softmax = 0;
    std::uint64_t activation = 0;

    std::uint64_t total() const { return matmul + softmax + activation; }
};

/// Installs a tally for the current thread for the lifetime of the scope.
/// Scopes nest; the innermost one receives the counts.
class FlopCountingScope {
public:
    FlopCountingScope();
    ~FlopCountingScope();
    FlopCountingScope(const FlopCountingScope&) = delete;
    FlopCountingScope& operator=(const FlopCountingScope&) = delete;

    const FlopTally& tally() const { return tally_; }

private:
    FlopTally tally_;
    FlopTally* previous_;
};

namespace detail {
void count_matmul(std::uint64_t flops);
void count_softmax(std::uint64_t flops);
void count_activation(std::uint64_t flops);
}  // namespace detail

}  // namespace toca
