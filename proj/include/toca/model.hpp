#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "toca/tensor.hpp"

namespace toca {

/// The cacheable units of the denoiser. Head is the output projection; it
/// is only ever cached under the uniform (naive, whole-model) policy.
enum class ModuleKind : std::uint8_t { SelfAttention = 0, CrossAttention = 1, Mlp = 2, Head = 3 };

inline constexpr std::size_t kModuleKinds = 4;

std::string_view to_string(ModuleKind kind);

struct ModelConfig {
    std::size_t depth = 4;
    std::size_t hidden = 32;
    std::size_t heads = 4;
    std::size_t grid_h = 8;
    std::size_t grid_w = 8;
    /// 0 selects class-conditional mode: no cross-attention.
    std::size_t text_tokens = 0;
    std::size_t num_classes = 16;

    std::size_t tokens() const { return grid_h * grid_w; }
    std::size_t mlp_hidden() const { return 4 * hidden; }
    std::size_t head_dim() const { return hidden / heads; }
    bool has_cross_attention() const { return text_tokens > 0; }

    /// Throws std::invalid_argument when the dimensions are inconsistent.
    void validate() const;

    bool operator==(const ModelConfig&) const = default;
};

struct AttentionWeights {
    Matrix query;   // D x D
    Matrix key;     // D x D
    Matrix value;   // D x D
    Matrix output;  // D x D
};

struct MlpWeights {
    Matrix up;    // D x 4D
    Matrix down;  // 4D x D
};

struct BlockWeights {
    AttentionWeights self_attention;
    std::optional<AttentionWeights> cross_attention;
    MlpWeights mlp;
};

enum class InitMode {
    Random,
    /// Every block module weight is zero, so modules output 0 and the
    /// residual stream passes through. Head and embeddings stay random.
    ZeroModules,
};

struct Model {
    ModelConfig config;
    std::vector<BlockWeights> blocks;
    Matrix head;             // D x D output projection
    Matrix class_embedding;  // num_classes x D

    /// Number of projection/MLP weight tensors across all blocks.
    std::size_t weight_tensor_count() const;
};

/// Scaled-Gaussian weights (std 1/sqrt(fan_in)), fully determined by `seed`.
Model init_model(const ModelConfig& config, std::uint64_t seed, InitMode mode = InitMode::Random);

/// Text tokens (N2 x D) or a class embedding (D); exactly one is set.
struct Conditioning {
    std::optional<Matrix> text;
    std::optional<std::vector<double>> class_embedding;
};

Conditioning class_conditioning(const Model& model, std::size_t label);
Conditioning text_conditioning(const Model& model, std::uint64_t seed);
/// The unconditional branch for classifier-free guidance: a zero class
/// embedding, or all-zero text tokens.
Conditioning null_conditioning(const Model& model);

/// Sinusoidal embedding of a (possibly fractional) timestep.
std::vector<double> timestep_embedding(double t, std::size_t dim);

struct AttentionOutput {
    Matrix out;        // rows.size() x D
    Matrix attention;  // rows.size() x keys, averaged over heads
};

/// Multi-head self-attention with queries restricted to `rows`; keys and
/// values always cover every token of `x`.
AttentionOutput self_attention_forward(const Matrix& x, const AttentionWeights& w,
                                       std::size_t heads, std::span<const std::size_t> rows);
AttentionOutput self_attention_forward(const Matrix& x, const AttentionWeights& w,
                                       std::size_t heads);

/// Cross-attention from image tokens (`rows` of x) to text tokens. Throws
/// std::invalid_argument when `text` has no rows.
AttentionOutput cross_attention_forward(const Matrix& x, const Matrix& text,
                                        const AttentionWeights& w, std::size_t heads,
                                        std::span<const std::size_t> rows);
AttentionOutput cross_attention_forward(const Matrix& x, const Matrix& text,
                                        const AttentionWeights& w, std::size_t heads);

/// Two linear layers D -> 4D -> D with GELU between, applied tokenwise.
Matrix mlp_forward(const Matrix& x, const MlpWeights& w, std::span<const std::size_t> rows);
Matrix mlp_forward(const Matrix& x, const MlpWeights& w);

// ---------------------------------------------------------------------------
// Routing hook. Every module call of model_forward goes through a router when
// one is supplied; the cache engine is the production router.

struct ModuleCall {
    std::size_t layer = 0;
    ModuleKind kind = ModuleKind::SelfAttention;
    std::size_t batch = 1;
    std::size_t tokens = 0;
};

struct ModuleOutput {
    Matrix values;                   // rows x D for the requested rows
    std::optional<Matrix> attention; // present for attention modules
};

/// Computes the module for batch element `half` on the given token rows.
using ModuleFn = std::function<ModuleOutput(std::size_t half, std::span<const std::size_t> rows)>;

class ModuleRouter {
public:
    virtual ~ModuleRouter() = default;
    /// Returns, per batch element, the effective N x D module output and the
    /// attention map when the module was fully computed.
    virtual std::vector<ModuleOutput> route(const ModuleCall& call, const ModuleFn& compute) = 0;
};

struct LayerRecord {
    std::size_t layer = 0;
    ModuleKind kind = ModuleKind::SelfAttention;
    std::size_t half = 0;
    Matrix output;
    std::optional<Matrix> attention;
};

/// Additive noise on one token row of a module's input stream.
struct Perturbation {
    std::size_t layer = 0;
    ModuleKind kind = ModuleKind::SelfAttention;
    std::size_t token = 0;
    std::size_t half = 0;
    std::vector<double> noise;  // length D
};

struct ModuleSite {
    std::size_t layer = 0;
    ModuleKind kind = ModuleKind::SelfAttention;
};

struct ForwardOptions {
    bool record_layers = false;
    bool record_blocks = false;
    const Perturbation* perturbation = nullptr;
    /// Copy of the batch-0 stream entering this module, before any perturbation.
    std::optional<ModuleSite> capture;
};

struct ForwardResult {
    std::vector<Matrix> eps;  // per batch element, N x D
    std::vector<LayerRecord> records;
    /// blocks[half][layer]: residual stream after block `layer`.
    std::vector<std::vector<Matrix>> blocks;
    std::optional<Matrix> captured_input;
};

/// Full denoiser pass over a batch (one element, or two for CFG). Each block
/// computes x <- x + module(layer_norm(x)) for SelfAttn, CrossAttn (when
/// text tokens exist) and MLP in that order; eps = x_L * head.
ForwardResult model_forward(const Model& model, std::span<const Matrix> x_t, double t,
                            std::span<const Conditioning> cond, ModuleRouter* router = nullptr,
                            const ForwardOptions& options = {});

}  // namespace toca
