#include "toca/model.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "toca/rng.hpp"

namespace toca {

std::string_view to_string(ModuleKind kind) {
    switch (kind) {
    case ModuleKind::SelfAttention:
        return "self_attn";
    case ModuleKind::CrossAttention:
        return "cross_attn";
    case ModuleKind::Mlp:
        return "mlp";
    case ModuleKind::Head:
        return "head";
    }
    return "unknown";
}

void ModelConfig::validate() const {
    auto fail = [](const std::string& msg) { throw std::invalid_argument("ModelConfig: " + msg); };
    if (depth < 1) fail("depth must be >= 1");
    if (hidden < 1) fail("hidden must be >= 1");
    if (heads < 1) fail("heads must be >= 1");
    if (hidden % heads != 0) {
        fail("hidden " + std::to_string(hidden) + " not divisible by heads " +
             std::to_string(heads));
    }
    if (grid_h < 1 || grid_w < 1) fail("grid must be at least 1x1");
    if (num_classes < 1) fail("num_classes must be >= 1");
}

std::size_t Model::weight_tensor_count() const {
    std::size_t count = 0;
    for (const auto& block : blocks) {
        count += 4 + 2;
        if (block.cross_attention) {
            count += 4;
        }
    }
    return count;
}

namespace {

Matrix init_weight(std::size_t rows, std::size_t cols, Rng& rng, bool zero) {
    Matrix m(rows, cols);
    if (zero) {
        return m;
    }
    const double scale = 1.0 / std::sqrt(static_cast<double>(rows));
    for (double& v : m.values()) {
        v = scale * rng.normal();
    }
    return m;
}

AttentionWeights init_attention(std::size_t d, Rng& rng, bool zero) {
    AttentionWeights w;
    w.query = init_weight(d, d, rng, zero);
    w.key = init_weight(d, d, rng, zero);
    w.value = init_weight(d, d, rng, zero);
    w.output = init_weight(d, d, rng, zero);
    return w;
}

std::vector<std::size_t> all_rows(std::size_t n) {
    std::vector<std::size_t> rows(n);
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    return rows;
}

// Columns [h*dh, (h+1)*dh) of m.
Matrix head_slice(const Matrix& m, std::size_t h, std::size_t dh) {
    Matrix out(m.rows(), dh);
    for (std::size_t i = 0; i < m.rows(); ++i) {
        const auto src = m.row(i).subspan(h * dh, dh);
        std::copy(src.begin(), src.end(), out.row(i).begin());
    }
    return out;
}

AttentionOutput attend(const Matrix& queries, const Matrix& keys, const Matrix& values,
                       const Matrix& out_proj, std::size_t heads) {
    const std::size_t d = queries.cols();
    const std::size_t dh = d / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    Matrix concat(queries.rows(), d);
    Matrix mean_map(queries.rows(), keys.rows());
    for (std::size_t h = 0; h < heads; ++h) {
        Matrix scores = matmul_transposed(head_slice(queries, h, dh), head_slice(keys, h, dh));
        scale_inplace(scores, scale);
        const Matrix probs = softmax_rows(scores);
        const Matrix mixed = matmul(probs, head_slice(values, h, dh));
        for (std::size_t i = 0; i < mixed.rows(); ++i) {
            const auto src = mixed.row(i);
            std::copy(src.begin(), src.end(), concat.row(i).begin() + h * dh);
        }
        add_inplace(mean_map, probs);
    }
    scale_inplace(mean_map, 1.0 / static_cast<double>(heads));
    return {matmul(concat, out_proj), std::move(mean_map)};
}

}  // namespace

Model init_model(const ModelConfig& config, std::uint64_t seed, InitMode mode) {
    config.validate();
    const bool zero = mode == InitMode::ZeroModules;
    Rng rng(derive_seed(seed, streams::kWeights));
    Model model;
    model.config = config;
    const std::size_t d = config.hidden;
    model.blocks.reserve(config.depth);
    for (std::size_t l = 0; l < config.depth; ++l) {
        BlockWeights block;
        block.self_attention = init_attention(d, rng, zero);
        if (config.has_cross_attention()) {
            block.cross_attention = init_attention(d, rng, zero);
        }
        block.mlp.up = init_weight(d, config.mlp_hidden(), rng, zero);
        block.mlp.down = init_weight(config.mlp_hidden(), d, rng, zero);
        model.blocks.push_back(std::move(block));
    }
    model.head = init_weight(d, d, rng, false);
    model.class_embedding = Matrix(config.num_classes, d);
    for (double& v : model.class_embedding.values()) {
        v = rng.normal();
    }
    return model;
}

Conditioning class_conditioning(const Model& model, std::size_t label) {
    if (model.config.has_cross_attention()) {
        throw std::invalid_argument("class_conditioning: model is text-conditioned");
    }
    if (label >= model.config.num_classes) {
        throw std::out_of_range("class_conditioning: label " + std::to_string(label) +
                                " >= num_classes");
    }
    const auto row = model.class_embedding.row(label);
    return {std::nullopt, std::vector<double>(row.begin(), row.end())};
}

Conditioning text_conditioning(const Model& model, std::uint64_t seed) {
    if (!model.config.has_cross_attention()) {
        throw std::invalid_argument("text_conditioning: model is class-conditional");
    }
    return {gaussian(model.config.text_tokens, model.config.hidden, 1.0,
                     derive_seed(seed, streams::kConditioning)),
            std::nullopt};
}

Conditioning null_conditioning(const Model& model) {
    if (model.config.has_cross_attention()) {
        return {Matrix(model.config.text_tokens, model.config.hidden), std::nullopt};
    }
    return {std::nullopt, std::vector<double>(model.config.hidden, 0.0)};
}

std::vector<double> timestep_embedding(double t, std::size_t dim) {
    std::vector<double> emb(dim, 0.0);
    const std::size_t half = dim / 2;
    for (std::size_t i = 0; i < half; ++i) {
        const double freq =
            std::exp(-std::log(10000.0) * static_cast<double>(i) / static_cast<double>(half));
        emb[i] = std::cos(t * freq);
        emb[i + half] = std::sin(t * freq);
    }
    return emb;
}

AttentionOutput self_attention_forward(const Matrix& x, const AttentionWeights& w,
                                       std::size_t heads, std::span<const std::size_t> rows) {
    const Matrix queries = matmul(gather_rows(x, rows), w.query);
    const Matrix keys = matmul(x, w.key);
    const Matrix values = matmul(x, w.value);
    return attend(queries, keys, values, w.output, heads);
}

AttentionOutput self_attention_forward(const Matrix& x, const AttentionWeights& w,
                                       std::size_t heads) {
    const auto rows = all_rows(x.rows());
    return self_attention_forward(x, w, heads, rows);
}

AttentionOutput cross_attention_forward(const Matrix& x, const Matrix& text,
                                        const AttentionWeights& w, std::size_t heads,
                                        std::span<const std::size_t> rows) {
    if (text.rows() == 0) {
        throw std::invalid_argument("cross_attention_forward: no text tokens");
    }
    const Matrix queries = matmul(gather_rows(x, rows), w.query);
    const Matrix keys = matmul(text, w.key);
    const Matrix values = matmul(text, w.value);
    return attend(queries, keys, values, w.output, heads);
}

AttentionOutput cross_attention_forward(const Matrix& x, const Matrix& text,
                                        const AttentionWeights& w, std::size_t heads) {
    const auto rows = all_rows(x.rows());
    return cross_attention_forward(x, text, w, heads, rows);
}

Matrix mlp_forward(const Matrix& x, const MlpWeights& w, std::span<const std::size_t> rows) {
    Matrix hidden = matmul(gather_rows(x, rows), w.up);
    gelu_inplace(hidden);
    return matmul(hidden, w.down);
}

Matrix mlp_forward(const Matrix& x, const MlpWeights& w) {
    const auto rows = all_rows(x.rows());
    return mlp_forward(x, w, rows);
}

namespace {

// Computes the module for every batch element on all rows; used when no
// router is installed.
std::vector<ModuleOutput> compute_all(const ModuleCall& call, const ModuleFn& compute) {
    const auto rows = all_rows(call.tokens);
    std::vector<ModuleOutput> outputs;
    outputs.reserve(call.batch);
    for (std::size_t b = 0; b < call.batch; ++b) {
        outputs.push_back(compute(b, rows));
    }
    return outputs;
}

}  // namespace

ForwardResult model_forward(const Model& model, std::span<const Matrix> x_t, double t,
                            std::span<const Conditioning> cond, ModuleRouter* router,
                            const ForwardOptions& options) {
    const ModelConfig& cfg = model.config;
    const std::size_t n = cfg.tokens();
    const std::size_t d = cfg.hidden;
    const std::size_t batch = x_t.size();
    if (batch == 0 || cond.size() != batch) {
        throw std::invalid_argument("model_forward: batch of " + std::to_string(batch) +
                                    " inputs with " + std::to_string(cond.size()) +
                                    " conditionings");
    }

    // Input stream: x_t + timestep embedding (+ class embedding).
    const auto temb = timestep_embedding(t, d);
    std::vector<Matrix> stream;
    stream.reserve(batch);
    for (std::size_t b = 0; b < batch; ++b) {
        if (x_t[b].rows() != n || x_t[b].cols() != d) {
            throw std::invalid_argument("model_forward: input must be " + std::to_string(n) + "x" +
                                        std::to_string(d));
        }
        const Conditioning& c = cond[b];
        if (cfg.has_cross_attention() != c.text.has_value() ||
            c.text.has_value() == c.class_embedding.has_value()) {
            throw std::invalid_argument("model_forward: conditioning does not match the model");
        }
        if (c.text && (c.text->rows() != cfg.text_tokens || c.text->cols() != d)) {
            throw std::invalid_argument("model_forward: text tokens must be N2 x D");
        }
        if (c.class_embedding && c.class_embedding->size() != d) {
            throw std::invalid_argument("model_forward: class embedding must have length D");
        }
        Matrix x = x_t[b];
        for (std::size_t i = 0; i < n; ++i) {
            auto r = x.row(i);
            for (std::size_t j = 0; j < d; ++j) {
                r[j] += temb[j];
                if (c.class_embedding) {
                    r[j] += (*c.class_embedding)[j];
                }
            }
        }
        stream.push_back(std::move(x));
    }

    ForwardResult result;
    if (options.record_blocks) {
        result.blocks.assign(batch, {});
    }

    auto before_module = [&](std::size_t layer, ModuleKind kind) {
        if (options.capture && options.capture->layer == layer && options.capture->kind == kind) {
            result.captured_input = stream.front();
        }
        const Perturbation* p = options.perturbation;
        if (p != nullptr && p->layer == layer && p->kind == kind) {
            if (p->half >= batch || p->token >= n || p->noise.size() != d) {
                throw std::invalid_argument("model_forward: perturbation does not fit the batch");
            }
            auto r = stream[p->half].row(p->token);
            for (std::size_t j = 0; j < d; ++j) {
                r[j] += p->noise[j];
            }
        }
    };

    auto run_module = [&](std::size_t layer, ModuleKind kind, const ModuleFn& fn) {
        const ModuleCall call{layer, kind, batch, n};
        std::vector<ModuleOutput> outputs =
            router != nullptr ? router->route(call, fn) : compute_all(call, fn);
        for (std::size_t b = 0; b < batch; ++b) {
            if (kind != ModuleKind::Head) {
                add_inplace(stream[b], outputs[b].values);
            }
            if (options.record_layers) {
                result.records.push_back(
                    {layer, kind, b, outputs[b].values, std::move(outputs[b].attention)});
            }
        }
        return outputs;
    };

    for (std::size_t l = 0; l < cfg.depth; ++l) {
        const BlockWeights& w = model.blocks[l];

        before_module(l, ModuleKind::SelfAttention);
        {
            std::vector<Matrix> normed;
            for (const auto& x : stream) normed.push_back(layer_norm_rows(x));
            run_module(l, ModuleKind::SelfAttention,
                       [&](std::size_t b, std::span<const std::size_t> rows) {
                           auto r = self_attention_forward(normed[b], w.self_attention, cfg.heads,
                                                           rows);
                           return ModuleOutput{std::move(r.out), std::move(r.attention)};
                       });
        }

        if (w.cross_attention) {
            before_module(l, ModuleKind::CrossAttention);
            std::vector<Matrix> normed;
            for (const auto& x : stream) normed.push_back(layer_norm_rows(x));
            run_module(l, ModuleKind::CrossAttention,
                       [&](std::size_t b, std::span<const std::size_t> rows) {
                           auto r = cross_attention_forward(normed[b], *cond[b].text,
                                                            *w.cross_attention, cfg.heads, rows);
                           return ModuleOutput{std::move(r.out), std::move(r.attention)};
                       });
        }

        before_module(l, ModuleKind::Mlp);
        {
            std::vector<Matrix> normed;
            for (const auto& x : stream) normed.push_back(layer_norm_rows(x));
            run_module(l, ModuleKind::Mlp, [&](std::size_t b, std::span<const std::size_t> rows) {
                return ModuleOutput{mlp_forward(normed[b], w.mlp, rows), std::nullopt};
            });
        }

        if (options.record_blocks) {
            for (std::size_t b = 0; b < batch; ++b) {
                result.blocks[b].push_back(stream[b]);
            }
        }
    }

    before_module(cfg.depth, ModuleKind::Head);
    auto eps = run_module(cfg.depth, ModuleKind::Head,
                          [&](std::size_t b, std::span<const std::size_t> rows) {
                              return ModuleOutput{matmul(gather_rows(stream[b], rows), model.head),
                                                  std::nullopt};
                          });
    result.eps.reserve(batch);
    for (auto& e : eps) {
        result.eps.push_back(std::move(e.values));
    }
    return result;
}

}  // namespace toca
