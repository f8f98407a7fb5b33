#include <fstream>
#include <stdexcept>

#include <unistd.h>

#include <json.hpp>

#include "toca/cli.hpp"

namespace toca {

void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
    namespace fs = std::filesystem;
    if (path.has_parent_path()) {
        fs::create_directories(path.parent_path());
    }
    fs::path tmp = path;
    tmp += ".tmp." + std::to_string(::getpid());
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        out.flush();
        if (!out) {
            std::error_code ignored;
            fs::remove(tmp, ignored);
            throw std::runtime_error("write failed for " + tmp.string());
        }
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) {
        std::error_code ignored;
        fs::remove(tmp, ignored);
        throw std::runtime_error("cannot rename " + tmp.string() + " to " + path.string() + ": " +
                                 ec.message());
    }
}

std::string header_line(const RunConfig& config) {
    return "# toca config_hash=" + config_hash(config) + "\n";
}

std::string with_hash(const RunConfig& config, std::string_view json_object) {
    const auto parsed = nlohmann::ordered_json::parse(json_object);
    if (!parsed.is_object()) throw std::invalid_argument("with_hash: expected a JSON object");
    nlohmann::ordered_json out;
    out["config_hash"] = config_hash(config);
    for (const auto& [key, value] : parsed.items()) out[key] = value;
    return out.dump(2) + "\n";
}

void verify_artifacts(const CommandResult& result) {
    for (const auto& path : result.artifacts) {
        std::error_code ec;
        const auto size = std::filesystem::file_size(path, ec);
        if (ec || size == 0) {
            throw std::runtime_error("artifact missing or empty: " + path.string());
        }
    }
}

}  // namespace toca
