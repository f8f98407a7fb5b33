#include "toca/weights_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

namespace toca {

namespace {

static_assert(std::endian::native == std::endian::little,
              "weights I/O assumes a little-endian host");

template <typename M, typename Fn>
void for_each_tensor(M& model, Fn&& fn) {
    for (auto& block : model.blocks) {
        fn(block.self_attention.query);
        fn(block.self_attention.key);
        fn(block.self_attention.value);
        fn(block.self_attention.output);
        if (block.cross_attention) {
            fn(block.cross_attention->query);
            fn(block.cross_attention->key);
            fn(block.cross_attention->value);
            fn(block.cross_attention->output);
        }
        fn(block.mlp.up);
        fn(block.mlp.down);
    }
    fn(model.head);
}

}  // namespace

void save_weights(const Model& model, std::ostream& out) {
    const ModelConfig& c = model.config;
    out << "TOCA-W1 " << c.depth << ' ' << c.hidden << ' ' << c.heads << ' ' << c.grid_h << ' '
        << c.grid_w << ' ' << c.text_tokens << '\n';
    for_each_tensor(model, [&](const Matrix& m) {
        for (double v : m.values()) {
            const auto f = static_cast<float>(v);
            char bytes[sizeof(float)];
            std::memcpy(bytes, &f, sizeof f);
            out.write(bytes, sizeof bytes);
        }
    });
    if (!out) {
        throw std::runtime_error("save_weights: write failed");
    }
}

void save_weights(const Model& model, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error("save_weights: cannot open " + path.string());
    }
    save_weights(model, out);
}

Model load_weights(std::istream& in, std::uint64_t seed, std::size_t num_classes) {
    std::string header;
    if (!std::getline(in, header)) {
        throw std::runtime_error("load_weights: missing header line");
    }
    std::istringstream fields(header);
    std::string magic;
    ModelConfig config;
    fields >> magic >> config.depth >> config.hidden >> config.heads >> config.grid_h >>
        config.grid_w >> config.text_tokens;
    std::string extra;
    if (magic != "TOCA-W1" || fields.fail() || (fields >> extra)) {
        throw std::runtime_error("load_weights: bad header '" + header + "'");
    }
    config.num_classes = num_classes;
    config.validate();

    Model model = init_model(config, seed, InitMode::ZeroModules);
    for_each_tensor(model, [&](Matrix& m) {
        for (double& v : m.values()) {
            char bytes[sizeof(float)];
            if (!in.read(bytes, sizeof bytes)) {
                throw std::runtime_error("load_weights: file truncated");
            }
            float f = 0;
            std::memcpy(&f, bytes, sizeof f);
            v = static_cast<double>(f);
        }
    });
    if (in.peek() != std::char_traits<char>::eof()) {
        throw std::runtime_error("load_weights: trailing bytes after weights");
    }
    return model;
}

Model load_weights(const std::filesystem::path& path, std::uint64_t seed,
                   std::size_t num_classes) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("load_weights: cannot open " + path.string());
    }
    return load_weights(in, seed, num_classes);
}

}  // namespace toca
