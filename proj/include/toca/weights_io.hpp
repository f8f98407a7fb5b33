#pragma once

#include <filesystem>
#include <iosfwd>

#include "toca/model.hpp"

namespace toca {

// Weights file layout:
//
//   TOCA-W1 L D Hd H W N2\n
//   float32 little-endian values, row-major, in this order:
//     for each block l = 0..L-1:
//       self-attention query, key, value, output     (D x D each)
//       cross-attention query, key, value, output    (only when N2 > 0)
//       mlp up (D x 4D), mlp down (4D x D)
//     head (D x D)
//
// The class embedding table is not stored; it comes from `seed` and the
// caller's class count.

void save_weights(const Model& model, std::ostream& out);
void save_weights(const Model& model, const std::filesystem::path& path);

/// Throws std::runtime_error on a malformed header, a truncated body or
/// trailing bytes.
Model load_weights(std::istream& in, std::uint64_t seed, std::size_t num_classes = 16);
Model load_weights(const std::filesystem::path& path, std::uint64_t seed,
                   std::size_t num_classes = 16);

}  // namespace toca
