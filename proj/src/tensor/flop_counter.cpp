#include "toca/flop_counter.hpp"

namespace toca {

namespace {
thread_local FlopTally* active_tally = nullptr;
}

FlopCountingScope::FlopCountingScope() : previous_(active_tally) { active_tally = &tally_; }

FlopCountingScope::~FlopCountingScope() { active_tally = previous_; }

namespace detail {

// Kernels report their work at entry, on the calling thread, so counts are
// not lost inside OpenMP worker threads.
void count_matmul(std::uint64_t flops) {
    if (active_tally != nullptr) {
        active_tally->matmul += flops;
    }
}

void count_softmax(std::uint64_t flops) {
    if (active_tally != nullptr) {
        active_tally->softmax += flops;
    }
}

void count_activation(std::uint64_t flops) {
    if (active_tally != nullptr) {
        active_tally->activation += flops;
    }
}

}  // namespace detail

}  // namespace toca
